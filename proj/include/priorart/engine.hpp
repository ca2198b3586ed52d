#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include "priorart/ann.hpp"
#include "priorart/corpus.hpp"
#include "priorart/embedding.hpp"
#include "priorart/execution.hpp"
#include "priorart/lexical_index.hpp"
#include "priorart/rerank.hpp"

namespace priorart {

/// A problem the caller can fix: missing file, malformed row, bad flag or
/// config value. The CLI maps these to exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EngineDefaults {
    std::size_t n_candidates = 100;
    std::size_t k_final = 10;
};

/// Everything needed to build or open an index directory. Loadable from a
/// flat JSON file (see load_engine_config) and overridable field by field.
struct EngineConfig {
    std::filesystem::path index_dir;
    EmbedderDescriptor embedder;
    BM25Params bm25;
    AnnParams ann;
    EngineDefaults defaults;
};

/// Reads a flat JSON object of optional keys: index_dir, embedder_kind,
/// embedder_dim, embedder_path, bm25_k1, bm25_b, ann_trees,
/// ann_leaf_capacity, ann_seed, n_candidates, k_final. Unknown keys are
/// errors so typos fail loudly.
EngineConfig load_engine_config(const std::filesystem::path& path);

struct BuildStats {
    std::size_t documents = 0;
    std::size_t spans = 0;
    std::size_t skipped_rows = 0;
    std::size_t terms = 0;
    std::size_t vectors = 0;
};

/// Parses the TSV, splits spans, and writes the complete index directory:
/// lexical index + span store, embedding vectors, ANN forest, and an
/// engine.json tying them together. Refuses a non-empty index_dir unless
/// overwrite is set. Malformed rows abort the build with file/line context.
BuildStats build_index(const std::filesystem::path& tsv_path, const EngineConfig& config,
                       bool overwrite, Execution exec = Execution::parallel);

struct SearchOutcome {
    std::vector<RerankResult> results;
    double elapsed_ms = 0.0;
};

/// An opened index directory: immutable after load, safe for concurrent
/// queries.
class Engine {
public:
    static Engine open(const std::filesystem::path& index_dir);

    Engine(Engine&&) = default;
    Engine& operator=(Engine&&) = default;

    EngineComponents components() const;
    const EngineDefaults& defaults() const { return defaults_; }
    const EmbedderDescriptor& embedder_descriptor() const { return descriptor_; }
    std::size_t span_count() const;

    SearchOutcome run(const Query& query, Execution exec = Execution::parallel) const;

private:
    Engine() = default;

    EngineDefaults defaults_;
    EmbedderDescriptor descriptor_;
    // Heap-held so component addresses survive moves of the Engine itself
    // (the forest keeps a pointer to the store).
    std::unique_ptr<LoadedLexicalIndex> lexical_;
    std::unique_ptr<EmbeddingStore> store_;
    std::unique_ptr<AnnForest> forest_;
    std::unique_ptr<Embedder> embedder_;
};

}  // namespace priorart
