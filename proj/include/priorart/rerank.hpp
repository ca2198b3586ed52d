#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "priorart/ann.hpp"
#include "priorart/corpus.hpp"
#include "priorart/embedding.hpp"
#include "priorart/execution.hpp"
#include "priorart/lexical_index.hpp"

namespace priorart {

enum class SearchMode { bm25_only, embedding_only, rerank };

std::string_view to_string(SearchMode mode);
std::optional<SearchMode> search_mode_from(std::string_view name);

struct Query {
    std::string text;
    SearchMode mode = SearchMode::rerank;
    std::size_t n_candidates = 100;
    std::size_t k_final = 10;
    std::vector<std::string> required_terms;
};

/// One retrieved span. Which rank/score fields are present depends on the
/// mode: rerank carries all four, bm25_only only the BM25 pair,
/// embedding_only only the embedding pair.
struct RerankResult {
    SpanRecord span;
    std::optional<std::uint32_t> bm25_rank;
    std::optional<double> bm25_score;
    std::optional<std::uint32_t> embed_rank;
    std::optional<double> cosine_score;
};

/// Borrowed views of everything a search needs. Not every mode touches every
/// member: bm25_only needs spans+index; embedding_only needs
/// spans+forest+embedder; rerank needs spans+index+store+embedder.
struct EngineComponents {
    const SpanCatalog* spans = nullptr;
    const LexicalIndex* index = nullptr;
    const EmbeddingStore* store = nullptr;
    const AnnForest* forest = nullptr;
    const Embedder* embedder = nullptr;
};

/// Two-stage search. rerank retrieves query.n_candidates spans by BM25, then
/// reorders them by exact cosine against the query vector and keeps
/// query.k_final; the candidate set is fixed by the lexical stage, the
/// embedding stage only reorders it. Throws std::invalid_argument("query not
/// embeddable") when an embedding mode gets a zero query vector.
std::vector<RerankResult> search(const Query& query, const EngineComponents& components,
                                 Execution exec = Execution::parallel);

struct EvalQuery {
    std::string text;
    std::vector<std::uint64_t> relevant_span_ids;
    std::vector<std::string> required_terms;
};

struct ModeMetrics {
    SearchMode mode = SearchMode::rerank;
    double recall_at_k = 0.0;
    double mean_reciprocal_rank = 0.0;
};

/// Runs every query in all three modes and averages recall@k_final and the
/// reciprocal rank of the first relevant result.
std::vector<ModeMetrics> evaluate_modes(const std::vector<EvalQuery>& queries,
                                        const EngineComponents& components,
                                        std::size_t n_candidates, std::size_t k_final,
                                        Execution exec = Execution::parallel);

nlohmann::ordered_json result_to_json(const RerankResult& result);
nlohmann::ordered_json results_to_json(const std::vector<RerankResult>& results);
/// Search response body: {"query", "mode", "results"}. Deliberately free of
/// timing fields so identical inputs always serialize to identical bytes.
nlohmann::ordered_json response_to_json(const Query& query,
                                        const std::vector<RerankResult>& results);
nlohmann::ordered_json metrics_to_json(const std::vector<ModeMetrics>& metrics,
                                       std::size_t queries, std::size_t n_candidates,
                                       std::size_t k_final);

}  // namespace priorart
