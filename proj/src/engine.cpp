#include "priorart/engine.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "priorart/detail/binary_io.hpp"
#include "priorart/kernels.hpp"

namespace priorart {

namespace {

constexpr const char* kEngineFile = "engine.json";
constexpr const char* kEmbeddingsFile = "embeddings.txt";
constexpr const char* kForestFile = "forest.bin";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string checksum_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a64(bytes)));
    return buf;
}

void validate_config(const EngineConfig& config) {
    if (config.embedder.dim < 2) throw InputError("config: embedder_dim must be >= 2");
    if (config.embedder.kind != "hash" && config.embedder.kind != "file") {
        throw InputError("config: embedder_kind must be \"hash\" or \"file\"");
    }
    if (config.embedder.kind == "file" && config.embedder.parameters.count("path") == 0) {
        throw InputError("config: embedder_kind \"file\" needs embedder_path");
    }
    if (config.ann.n_trees < 1) throw InputError("config: ann_trees must be >= 1");
    if (config.ann.leaf_capacity < 1) throw InputError("config: ann_leaf_capacity must be >= 1");
    if (config.defaults.n_candidates < 1) throw InputError("config: n_candidates must be >= 1");
    if (config.defaults.k_final < 1) throw InputError("config: k_final must be >= 1");
    if (config.defaults.k_final > config.defaults.n_candidates) {
        throw InputError("config: k_final must not exceed n_candidates");
    }
    if (config.bm25.k1 < 0.0) throw InputError("config: bm25_k1 must be >= 0");
    if (config.bm25.b < 0.0 || config.bm25.b > 1.0) throw InputError("config: bm25_b must be in [0,1]");
}

EmbeddingStore build_store(const EngineConfig& config, const Embedder& embedder,
                           std::span<const SpanRecord> spans, Execution exec) {
    if (config.embedder.kind == "hash") {
        return kernels::embed_all(embedder, spans, exec);
    }

    const auto& path = config.embedder.parameters.at("path");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open vector file " + path);
    EmbeddingStore provided = [&] {
        try {
            return EmbeddingStore::load(in);
        } catch (const std::exception& e) {
            throw InputError(path + ": " + e.what());
        }
    }();
    if (provided.dim() != config.embedder.dim) {
        throw InputError(path + ": vector dimension " + std::to_string(provided.dim()) +
                         " does not match configured dim " +
                         std::to_string(config.embedder.dim));
    }

    // Spans the file covers keep their provided vectors; the rest fall back
    // to the hash embedder so every non-empty span stays searchable.
    EmbeddingStore store(config.embedder.dim);
    for (const auto& span : spans) {
        const auto row = provided.find(span.span_id);
        if (!row.empty()) {
            store.insert(span.span_id, EmbeddingVector(row.begin(), row.end()));
            continue;
        }
        auto v = embedder.embed(span.text);
        if (l2_norm(v) == 0.0) continue;
        store.insert(span.span_id, std::move(v));
    }
    return store;
}

}  // namespace

EngineConfig load_engine_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const std::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw InputError("config " + path.string() + ": expected a JSON object");

    EngineConfig config;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "index_dir") {
                config.index_dir = value.get<std::string>();
            } else if (key == "embedder_kind") {
                config.embedder.kind = value.get<std::string>();
                config.embedder.name = config.embedder.kind;
            } else if (key == "embedder_dim") {
                config.embedder.dim = value.get<std::size_t>();
            } else if (key == "embedder_path") {
                config.embedder.parameters["path"] = value.get<std::string>();
            } else if (key == "bm25_k1") {
                config.bm25.k1 = value.get<double>();
            } else if (key == "bm25_b") {
                config.bm25.b = value.get<double>();
            } else if (key == "ann_trees") {
                config.ann.n_trees = value.get<std::uint32_t>();
            } else if (key == "ann_leaf_capacity") {
                config.ann.leaf_capacity = value.get<std::uint32_t>();
            } else if (key == "ann_seed") {
                config.ann.seed = value.get<std::uint64_t>();
            } else if (key == "n_candidates") {
                config.defaults.n_candidates = value.get<std::size_t>();
            } else if (key == "k_final") {
                config.defaults.k_final = value.get<std::size_t>();
            } else {
                throw InputError("config " + path.string() + ": unknown key \"" + key + "\"");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    validate_config(config);
    return config;
}

BuildStats build_index(const std::filesystem::path& tsv_path, const EngineConfig& config,
                       bool overwrite, Execution exec) {
    validate_config(config);
    const auto& dir = config.index_dir;
    if (dir.empty()) throw InputError("config: index_dir is not set");

    namespace fs = std::filesystem;
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!overwrite) {
            throw InputError("index directory " + dir.string() +
                             " is not empty (use --overwrite to rebuild)");
        }
        for (const std::string_view name :
             {std::string_view(kEngineFile), std::string_view(kEmbeddingsFile),
              std::string_view(kForestFile), kManifestFile, kPostingsFile, kSpanStoreFile}) {
            fs::remove(dir / name);
        }
    }

    std::ifstream in(tsv_path, std::ios::binary);
    if (!in) throw InputError("cannot open " + tsv_path.string());
    TsvParseResult parsed = [&] {
        try {
            return parse_tsv(in);
        } catch (const std::exception& e) {
            throw InputError(tsv_path.string() + ": " + e.what());
        }
    }();
    if (!parsed.errors.empty()) {
        std::string message;
        const std::size_t shown = std::min<std::size_t>(parsed.errors.size(), 5);
        for (std::size_t i = 0; i < shown; ++i) {
            if (i > 0) message += '\n';
            message += tsv_path.string() + ":" + std::to_string(parsed.errors[i].line) + ": " +
                       parsed.errors[i].message;
        }
        if (parsed.errors.size() > shown) {
            message += "\n(and " + std::to_string(parsed.errors.size() - shown) + " more)";
        }
        throw InputError(message);
    }

    const auto ingested = ingest(parsed.documents);
    LexicalIndex index(config.bm25);
    for (const auto& span : ingested.spans) index.add(span.span_id, span.text);

    const auto embedder = make_embedder(config.embedder);
    const auto store = build_store(config, *embedder, ingested.spans, exec);
    const auto forest = AnnForest::build(store, config.ann, exec);

    fs::create_directories(dir);
    save_lexical_index(dir, index, SpanCatalog(ingested.spans));

    std::ostringstream embedding_bytes;
    store.save(embedding_bytes);
    const std::string embeddings = embedding_bytes.str();
    write_file(dir / kEmbeddingsFile, embeddings);
    forest.save(dir / kForestFile);

    nlohmann::ordered_json meta;
    meta["format_version"] = 1;
    meta["embedder"] = {{"name", config.embedder.name},
                        {"kind", config.embedder.kind},
                        {"dim", config.embedder.dim},
                        {"parameters", config.embedder.parameters}};
    meta["ann"] = {{"n_trees", config.ann.n_trees},
                   {"leaf_capacity", config.ann.leaf_capacity},
                   {"seed", config.ann.seed}};
    meta["defaults"] = {{"n_candidates", config.defaults.n_candidates},
                        {"k_final", config.defaults.k_final}};
    meta["files"] = {
        {"embeddings", {{"path", kEmbeddingsFile}, {"checksum", checksum_hex(embeddings)}}},
        {"forest", {{"path", kForestFile}}},
    };
    write_file(dir / kEngineFile, meta.dump(2) + "\n");

    BuildStats stats;
    stats.documents = parsed.documents.size();
    stats.spans = ingested.spans.size();
    stats.skipped_rows = parsed.skipped_rows;
    stats.terms = index.term_count();
    stats.vectors = store.size();
    return stats;
}

Engine Engine::open(const std::filesystem::path& index_dir) {
    const auto meta_path = index_dir / kEngineFile;
    std::string raw;
    try {
        raw = read_file(meta_path);
    } catch (const std::exception& e) {
        // No metadata means no index here: a path problem the caller can fix,
        // unlike the decode failures below.
        throw InputError(std::string("cannot load engine metadata: ") + e.what());
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(raw);
    } catch (const std::exception& e) {
        throw std::runtime_error("cannot load engine metadata " + meta_path.string() + ": " +
                                 e.what());
    }
    const int version = meta.at("format_version").get<int>();
    if (version != 1) {
        throw std::runtime_error("unsupported engine format_version " + std::to_string(version));
    }

    Engine engine;
    const auto& emb = meta.at("embedder");
    engine.descriptor_.name = emb.at("name").get<std::string>();
    engine.descriptor_.kind = emb.at("kind").get<std::string>();
    engine.descriptor_.dim = emb.at("dim").get<std::size_t>();
    engine.descriptor_.parameters =
        emb.at("parameters").get<std::map<std::string, std::string>>();
    engine.defaults_.n_candidates = meta.at("defaults").at("n_candidates").get<std::size_t>();
    engine.defaults_.k_final = meta.at("defaults").at("k_final").get<std::size_t>();

    engine.lexical_ = std::make_unique<LoadedLexicalIndex>(load_lexical_index(index_dir));

    const auto& files = meta.at("files");
    const auto embeddings_path =
        index_dir / files.at("embeddings").at("path").get<std::string>();
    const auto embeddings = read_file(embeddings_path);
    if (checksum_hex(embeddings) != files.at("embeddings").at("checksum").get<std::string>()) {
        throw std::runtime_error("checksum mismatch in " + embeddings_path.string());
    }
    std::istringstream embedding_stream(embeddings);
    engine.store_ = std::make_unique<EmbeddingStore>(EmbeddingStore::load(embedding_stream));
    if (engine.store_->dim() != engine.descriptor_.dim) {
        throw std::runtime_error(embeddings_path.string() +
                                 " does not match the configured embedder dimension");
    }

    const auto forest_path = index_dir / files.at("forest").at("path").get<std::string>();
    engine.forest_ = std::make_unique<AnnForest>(AnnForest::load(forest_path, *engine.store_));
    engine.embedder_ = make_embedder(engine.descriptor_);
    return engine;
}

EngineComponents Engine::components() const {
    EngineComponents c;
    c.spans = &lexical_->spans;
    c.index = &lexical_->index;
    c.store = store_.get();
    c.forest = forest_.get();
    c.embedder = embedder_.get();
    return c;
}

std::size_t Engine::span_count() const { return lexical_->spans.size(); }

SearchOutcome Engine::run(const Query& query, Execution exec) const {
    const auto start = std::chrono::steady_clock::now();
    SearchOutcome outcome;
    outcome.results = search(query, components(), exec);
    const auto end = std::chrono::steady_clock::now();
    outcome.elapsed_ms = std::chrono::duration<double, std::milli>(end - start).count();
    return outcome;
}

}  // namespace priorart
