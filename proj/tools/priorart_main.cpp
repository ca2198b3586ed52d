#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorart/engine.hpp"
#include "priorart/service.hpp"

namespace {

using priorart::EngineConfig;
using priorart::InputError;

struct ConfigFlags {
    std::string config_path;
    std::string index_dir;
    std::optional<std::string> embedder_kind;
    std::optional<std::size_t> embedder_dim;
    std::optional<std::string> embedder_path;
    std::optional<double> k1;
    std::optional<double> b;
    std::optional<std::uint32_t> trees;
    std::optional<std::uint32_t> leaf_capacity;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_candidates;
    std::optional<std::size_t> k_final;
};

void add_config_flags(CLI::App& cmd, ConfigFlags& flags, bool build_flags) {
    cmd.add_option("--config", flags.config_path, "Flat JSON config file");
    cmd.add_option("--index-dir", flags.index_dir,
                   "Index directory (falls back to config, then $PRIORART_INDEX_DIR)");
    if (build_flags) {
        cmd.add_option("--embedder", flags.embedder_kind, "Embedder kind: hash or file");
        cmd.add_option("--dim", flags.embedder_dim, "Embedding dimension");
        cmd.add_option("--vectors", flags.embedder_path,
                       "Vector file for the file embedder kind");
        cmd.add_option("--k1", flags.k1, "BM25 k1");
        cmd.add_option("--b", flags.b, "BM25 b");
        cmd.add_option("--trees", flags.trees, "ANN forest tree count");
        cmd.add_option("--leaf-capacity", flags.leaf_capacity, "ANN leaf capacity");
        cmd.add_option("--seed", flags.seed, "ANN build seed");
        cmd.add_option("--default-n", flags.n_candidates, "Default candidate count for queries");
        cmd.add_option("--default-k", flags.k_final, "Default result count for queries");
    }
}

EngineConfig resolve_config(const ConfigFlags& flags, bool need_index_dir) {
    EngineConfig config;
    if (!flags.config_path.empty()) config = priorart::load_engine_config(flags.config_path);

    if (flags.embedder_kind) {
        config.embedder.kind = *flags.embedder_kind;
        config.embedder.name = *flags.embedder_kind;
    }
    if (flags.embedder_dim) config.embedder.dim = *flags.embedder_dim;
    if (flags.embedder_path) config.embedder.parameters["path"] = *flags.embedder_path;
    if (flags.k1) config.bm25.k1 = *flags.k1;
    if (flags.b) config.bm25.b = *flags.b;
    if (flags.trees) config.ann.n_trees = *flags.trees;
    if (flags.leaf_capacity) config.ann.leaf_capacity = *flags.leaf_capacity;
    if (flags.seed) config.ann.seed = *flags.seed;
    if (flags.n_candidates) config.defaults.n_candidates = *flags.n_candidates;
    if (flags.k_final) config.defaults.k_final = *flags.k_final;

    if (!flags.index_dir.empty()) {
        config.index_dir = flags.index_dir;
    } else if (config.index_dir.empty()) {
        if (const char* env = std::getenv("PRIORART_INDEX_DIR"); env != nullptr && *env != '\0') {
            config.index_dir = env;
        }
    }
    if (need_index_dir && config.index_dir.empty()) {
        throw InputError(
            "no index directory given (use --index-dir, a config file, or PRIORART_INDEX_DIR)");
    }
    return config;
}

priorart::Engine open_engine(const ConfigFlags& flags) {
    const auto config = resolve_config(flags, true);
    return priorart::Engine::open(config.index_dir);
}

void print_human_results(const priorart::Query& query,
                         const priorart::SearchOutcome& outcome) {
    std::printf("%zu result%s for \"%s\" (mode %s, %.2f ms)\n", outcome.results.size(),
                outcome.results.size() == 1 ? "" : "s", query.text.c_str(),
                std::string(to_string(query.mode)).c_str(), outcome.elapsed_ms);
    for (std::size_t i = 0; i < outcome.results.size(); ++i) {
        const auto& r = outcome.results[i];
        std::printf("%3zu. %s %c-%u span %llu\n", i + 1, r.span.patent_id.c_str(),
                    priorart::kind_letter(r.span.kind), r.span.ordinal,
                    static_cast<unsigned long long>(r.span.span_id));
        std::string line = "     ";
        if (r.bm25_rank) line += "bm25_rank " + std::to_string(*r.bm25_rank) + "  ";
        if (r.bm25_score) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "bm25_score %.6f  ", *r.bm25_score);
            line += buf;
        }
        if (r.embed_rank) line += "embed_rank " + std::to_string(*r.embed_rank) + "  ";
        if (r.cosine_score) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "cosine %.6f", *r.cosine_score);
            line += buf;
        }
        std::printf("%s\n     %s\n", line.c_str(), r.span.text.c_str());
    }
}

int run_ingest(const std::string& tsv, const ConfigFlags& flags, bool overwrite) {
    const auto config = resolve_config(flags, true);
    const auto stats = priorart::build_index(tsv, config, overwrite);
    nlohmann::ordered_json j;
    j["documents"] = stats.documents;
    j["spans"] = stats.spans;
    j["skipped_rows"] = stats.skipped_rows;
    j["terms"] = stats.terms;
    j["vectors"] = stats.vectors;
    std::cout << j.dump() << "\n";
    return 0;
}

int run_search(const std::string& text, const std::string& mode_name,
               const std::optional<std::size_t>& n, const std::optional<std::size_t>& k,
               const std::vector<std::string>& require, bool as_json,
               const ConfigFlags& flags) {
    const auto engine = open_engine(flags);

    priorart::Query query;
    query.text = text;
    const auto mode = priorart::search_mode_from(mode_name);
    if (!mode) throw InputError("invalid mode: " + mode_name);
    query.mode = *mode;
    query.n_candidates = n.value_or(engine.defaults().n_candidates);
    query.k_final = k.value_or(engine.defaults().k_final);
    query.required_terms = require;

    const auto outcome = engine.run(query);
    if (as_json) {
        std::cout << priorart::response_to_json(query, outcome.results).dump() << "\n";
    } else {
        print_human_results(query, outcome);
    }
    return 0;
}

int run_emit(const std::string& tsv, const std::string& format, const std::string& out_path,
             const std::vector<std::string>& mapping_names) {
    if (format != "gpt2" && format != "bert") {
        throw InputError("invalid format: " + format + " (expected gpt2 or bert)");
    }
    std::vector<priorart::MetadataMapping> mappings;
    for (const auto& name : mapping_names) {
        const auto mapping = priorart::metadata_mapping_from(name);
        if (!mapping) throw InputError("unknown mapping: " + name);
        if (*mapping == priorart::MetadataMapping::figure2title) {
            throw InputError("mapping figure2title is reserved and cannot be emitted");
        }
        mappings.push_back(*mapping);
    }
    if (format == "bert" && !mappings.empty()) {
        throw InputError("--mapping only applies to --format gpt2");
    }

    std::ifstream in(tsv, std::ios::binary);
    if (!in) throw InputError("cannot open " + tsv);
    auto parsed = priorart::parse_tsv(in);
    if (!parsed.errors.empty()) {
        const auto& e = parsed.errors.front();
        throw InputError(tsv + ":" + std::to_string(e.line) + ": " + e.message);
    }

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (out_path != "-") {
        file.open(out_path, std::ios::binary | std::ios::trunc);
        if (!file) throw InputError("cannot write " + out_path);
        out = &file;
    }
    auto stats = format == "gpt2"
                     ? priorart::emit_gpt2_dataset(parsed.documents, mappings, *out)
                     : priorart::emit_bert_dataset(parsed.documents, *out);
    stats.skipped_rows = parsed.skipped_rows;
    out->flush();
    if (out == &file && !file) throw std::runtime_error("short write to " + out_path);

    nlohmann::ordered_json j;
    j["documents"] = stats.documents;
    j["spans"] = stats.spans;
    j["skipped_rows"] = stats.skipped_rows;
    std::cerr << j.dump() << "\n";
    return 0;
}

std::vector<priorart::EvalQuery> load_eval_queries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);

    std::vector<priorart::EvalQuery> queries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line.rfind("query\trelevant", 0) != 0) {
                throw InputError(path + ":1: expected header starting with 'query\\trelevant'");
            }
            continue;
        }
        if (line.empty()) continue;

        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 2 || cols.size() > 3) {
            throw InputError(path + ":" + std::to_string(line_no) +
                             ": expected 2 or 3 tab-separated columns");
        }

        priorart::EvalQuery q;
        q.text = cols[0];
        std::stringstream ids(cols[1]);
        std::string id;
        while (std::getline(ids, id, ',')) {
            if (id.empty()) continue;
            std::size_t pos = 0;
            unsigned long long value = 0;
            try {
                value = std::stoull(id, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != id.size()) {
                throw InputError(path + ":" + std::to_string(line_no) + ": bad span id '" + id +
                                 "'");
            }
            q.relevant_span_ids.push_back(value);
        }
        if (q.relevant_span_ids.empty()) {
            throw InputError(path + ":" + std::to_string(line_no) + ": no relevant span ids");
        }
        if (cols.size() == 3 && !cols[2].empty()) {
            std::stringstream terms(cols[2]);
            std::string term;
            while (terms >> term) q.required_terms.push_back(term);
        }
        queries.push_back(std::move(q));
    }
    if (queries.empty()) throw InputError(path + ": no queries");
    return queries;
}

int run_eval(const std::string& queries_path, const std::optional<std::size_t>& n,
             const std::optional<std::size_t>& k, bool as_json, const ConfigFlags& flags) {
    const auto engine = open_engine(flags);
    const auto queries = load_eval_queries(queries_path);
    const auto n_candidates = n.value_or(engine.defaults().n_candidates);
    const auto k_final = k.value_or(engine.defaults().k_final);

    const auto metrics =
        priorart::evaluate_modes(queries, engine.components(), n_candidates, k_final);
    if (as_json) {
        std::cout << priorart::metrics_to_json(metrics, queries.size(), n_candidates, k_final)
                         .dump()
                  << "\n";
        return 0;
    }
    std::printf("evaluated %zu queries (n %zu, k %zu)\n", queries.size(), n_candidates, k_final);
    std::printf("%-16s %-12s %s\n", "mode", "recall@k", "mrr");
    for (const auto& m : metrics) {
        std::printf("%-16s %-12.4f %.4f\n", std::string(to_string(m.mode)).c_str(), m.recall_at_k,
                    m.mean_reciprocal_rank);
    }
    return 0;
}

int run_serve(const std::string& host, int port, const ConfigFlags& flags) {
    const auto engine = open_engine(flags);
    priorart::SearchService service(engine);

    if (port == 0) {
        const int bound = service.bind_any_port(host);
        if (bound < 0) {
            std::cerr << "error: cannot bind to " << host << "\n";
            return 1;
        }
        std::printf("serving %zu spans on http://%s:%d\n", engine.span_count(), host.c_str(),
                    bound);
        std::fflush(stdout);
        service.listen_after_bind();
        return 0;
    }

    std::printf("serving %zu spans on http://%s:%d\n", engine.span_count(), host.c_str(), port);
    std::fflush(stdout);
    if (!service.listen(host, port)) {
        std::cerr << "error: cannot bind to " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage prior-art span search: BM25 retrieval, cosine rerank"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Build an index directory from a corpus TSV");
    std::string ingest_tsv;
    bool overwrite = false;
    ConfigFlags ingest_flags;
    ingest->add_option("tsv", ingest_tsv, "Corpus TSV (patent_id, kind, text)")->required();
    ingest->add_flag("--overwrite", overwrite, "Rebuild into a non-empty index directory");
    add_config_flags(*ingest, ingest_flags, true);

    // search
    auto* search = app.add_subcommand("search", "Query an index");
    std::string query_text;
    std::string mode_name = "rerank";
    std::optional<std::size_t> search_n;
    std::optional<std::size_t> search_k;
    std::vector<std::string> require;
    bool search_json = false;
    ConfigFlags search_flags;
    search->add_option("query", query_text, "Query text")->required();
    search->add_option("--mode", mode_name, "bm25_only, embedding_only, or rerank");
    search->add_option("--n", search_n, "BM25 candidate count");
    search->add_option("--k", search_k, "Result count");
    search->add_option("--require", require, "Term every result must contain (repeatable)")
        ->take_all();
    search->add_flag("--json", search_json, "Machine-readable output");
    add_config_flags(*search, search_flags, false);

    // emit
    auto* emit = app.add_subcommand("emit", "Emit a training dataset from a corpus TSV");
    std::string emit_tsv;
    std::string emit_format;
    std::string emit_out;
    std::vector<std::string> emit_mappings;
    emit->add_option("tsv", emit_tsv, "Corpus TSV")->required();
    emit->add_option("--format", emit_format, "gpt2 or bert")->required();
    emit->add_option("--out", emit_out, "Output path, or - for stdout")->required();
    emit->add_option("--mapping", emit_mappings,
                     "Section-to-section mapping to append (repeatable, gpt2 only)")
        ->take_all();

    // eval
    auto* eval = app.add_subcommand("eval", "Score all modes against labeled queries");
    std::string eval_queries;
    std::optional<std::size_t> eval_n;
    std::optional<std::size_t> eval_k;
    bool eval_json = false;
    ConfigFlags eval_flags;
    eval->add_option("queries", eval_queries,
                     "TSV: header 'query\\trelevant[\\trequire]', relevant = comma-separated "
                     "span ids, require = space-separated terms")
        ->required();
    eval->add_option("--n", eval_n, "BM25 candidate count");
    eval->add_option("--k", eval_k, "Result count");
    eval->add_flag("--json", eval_json, "Machine-readable output");
    add_config_flags(*eval, eval_flags, false);

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the index over HTTP");
    std::string host = "127.0.0.1";
    int port = 8080;
    ConfigFlags serve_flags;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    add_config_flags(*serve, serve_flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return run_ingest(ingest_tsv, ingest_flags, overwrite);
        if (*search)
            return run_search(query_text, mode_name, search_n, search_k, require, search_json,
                              search_flags);
        if (*emit) return run_emit(emit_tsv, emit_format, emit_out, emit_mappings);
        if (*eval) return run_eval(eval_queries, eval_n, eval_k, eval_json, eval_flags);
        if (*serve) return run_serve(host, port, serve_flags);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
