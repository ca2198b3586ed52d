#include "priorart/rerank.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "priorart/kernels.hpp"
#include "priorart/tokenizer.hpp"

namespace priorart {

namespace {

const SpanRecord& span_or_throw(const SpanCatalog& spans, std::uint64_t span_id) {
    const auto* record = spans.find(span_id);
    if (record == nullptr) {
        throw std::runtime_error("span store is missing span " + std::to_string(span_id));
    }
    return *record;
}

void require_component(const void* p, const char* what) {
    if (p == nullptr) {
        throw std::invalid_argument(std::string("search: mode needs ") + what);
    }
}

std::vector<std::string> required_tokens(const std::vector<std::string>& raw) {
    std::vector<std::string> tokens;
    for (const auto& s : raw) {
        for (auto& t : tokenize(s)) tokens.push_back(std::move(t));
    }
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

bool contains_all_terms(std::string_view text, const std::vector<std::string>& terms) {
    if (terms.empty()) return true;
    const auto toks = tokenize(text);
    const std::unordered_set<std::string> present(toks.begin(), toks.end());
    for (const auto& term : terms) {
        if (present.count(term) == 0) return false;
    }
    return true;
}

EmbeddingVector query_vector(const Query& query, const Embedder& embedder) {
    auto v = embedder.embed(query.text);
    if (l2_norm(v) == 0.0) throw std::invalid_argument("query not embeddable");
    return v;
}

std::vector<RerankResult> search_bm25_only(const Query& query,
                                           const EngineComponents& components, Execution exec) {
    const auto scored =
        components.index->search(query.text, query.k_final, query.required_terms, exec);
    std::vector<RerankResult> results;
    results.reserve(scored.size());
    for (const auto& s : scored) {
        RerankResult r;
        r.span = span_or_throw(*components.spans, s.span_id);
        r.bm25_rank = s.rank;
        r.bm25_score = s.score;
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<RerankResult> search_embedding_only(const Query& query,
                                                const EngineComponents& components) {
    const auto qvec = query_vector(query, *components.embedder);
    const auto neighbors = components.forest->query(qvec, query.k_final);
    const auto req = required_tokens(query.required_terms);

    std::vector<RerankResult> results;
    for (const auto& n : neighbors) {
        const auto& span = span_or_throw(*components.spans, n.span_id);
        if (!contains_all_terms(span.text, req)) continue;
        RerankResult r;
        r.span = span;
        r.embed_rank = static_cast<std::uint32_t>(results.size() + 1);
        r.cosine_score = n.cosine;
        results.push_back(std::move(r));
        if (results.size() == query.k_final) break;
    }
    return results;
}

std::vector<RerankResult> search_rerank(const Query& query, const EngineComponents& components,
                                        Execution exec) {
    const auto qvec = query_vector(query, *components.embedder);
    const auto candidates =
        components.index->search(query.text, query.n_candidates, query.required_terms, exec);
    if (candidates.empty()) return {};

    // Candidate vectors come from the store; anything the store lacks gets
    // embedded from its text here. A zero vector simply scores cosine 0.
    std::vector<EmbeddingVector> owned(candidates.size());
    std::vector<std::span<const double>> rows(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto row = components.store->find(candidates[i].span_id);
        if (!row.empty()) {
            rows[i] = row;
        } else {
            owned[i] = components.embedder->embed(
                span_or_throw(*components.spans, candidates[i].span_id).text);
            rows[i] = owned[i];
        }
    }
    std::vector<double> cosines(candidates.size());
    kernels::cosine_batch(rows, qvec, cosines, exec);

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (cosines[a] != cosines[b]) return cosines[a] > cosines[b];
        return candidates[a].span_id < candidates[b].span_id;
    });
    if (order.size() > query.k_final) order.resize(query.k_final);

    std::vector<RerankResult> results;
    results.reserve(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto i = order[pos];
        RerankResult r;
        r.span = span_or_throw(*components.spans, candidates[i].span_id);
        r.bm25_rank = candidates[i].rank;
        r.bm25_score = candidates[i].score;
        r.embed_rank = static_cast<std::uint32_t>(pos + 1);
        r.cosine_score = cosines[i];
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace

std::string_view to_string(SearchMode mode) {
    switch (mode) {
        case SearchMode::bm25_only: return "bm25_only";
        case SearchMode::embedding_only: return "embedding_only";
        case SearchMode::rerank: return "rerank";
    }
    throw std::logic_error("unknown SearchMode");
}

std::optional<SearchMode> search_mode_from(std::string_view name) {
    if (name == "bm25_only") return SearchMode::bm25_only;
    if (name == "embedding_only") return SearchMode::embedding_only;
    if (name == "rerank") return SearchMode::rerank;
    return std::nullopt;
}

std::vector<RerankResult> search(const Query& query, const EngineComponents& components,
                                 Execution exec) {
    if (query.k_final < 1) throw std::invalid_argument("search: k_final must be >= 1");
    if (query.n_candidates < 1) throw std::invalid_argument("search: n_candidates must be >= 1");
    require_component(components.spans, "a span catalog");

    switch (query.mode) {
        case SearchMode::bm25_only:
            require_component(components.index, "a lexical index");
            return search_bm25_only(query, components, exec);
        case SearchMode::embedding_only:
            require_component(components.forest, "an ANN forest");
            require_component(components.embedder, "an embedder");
            return search_embedding_only(query, components);
        case SearchMode::rerank:
            if (query.k_final > query.n_candidates) {
                throw std::invalid_argument("search: k_final must not exceed n_candidates");
            }
            require_component(components.index, "a lexical index");
            require_component(components.store, "an embedding store");
            require_component(components.embedder, "an embedder");
            return search_rerank(query, components, exec);
    }
    throw std::logic_error("unknown SearchMode");
}

std::vector<ModeMetrics> evaluate_modes(const std::vector<EvalQuery>& queries,
                                        const EngineComponents& components,
                                        std::size_t n_candidates, std::size_t k_final,
                                        Execution exec) {
    for (const auto& q : queries) {
        if (q.relevant_span_ids.empty()) {
            throw std::invalid_argument("evaluate_modes: every query needs relevant span ids");
        }
    }

    std::vector<ModeMetrics> table;
    for (const auto mode :
         {SearchMode::bm25_only, SearchMode::embedding_only, SearchMode::rerank}) {
        ModeMetrics metrics;
        metrics.mode = mode;
        if (queries.empty()) {
            table.push_back(metrics);
            continue;
        }
        double recall_sum = 0.0;
        double rr_sum = 0.0;
        for (const auto& eq : queries) {
            Query query;
            query.text = eq.text;
            query.mode = mode;
            query.n_candidates = n_candidates;
            query.k_final = k_final;
            query.required_terms = eq.required_terms;
            const auto results = search(query, components, exec);

            const std::unordered_set<std::uint64_t> relevant(eq.relevant_span_ids.begin(),
                                                             eq.relevant_span_ids.end());
            std::size_t hits = 0;
            double rr = 0.0;
            for (std::size_t i = 0; i < results.size(); ++i) {
                if (relevant.count(results[i].span.span_id) != 0) {
                    ++hits;
                    if (rr == 0.0) rr = 1.0 / static_cast<double>(i + 1);
                }
            }
            recall_sum += static_cast<double>(hits) / static_cast<double>(relevant.size());
            rr_sum += rr;
        }
        metrics.recall_at_k = recall_sum / static_cast<double>(queries.size());
        metrics.mean_reciprocal_rank = rr_sum / static_cast<double>(queries.size());
        table.push_back(metrics);
    }
    return table;
}

nlohmann::ordered_json result_to_json(const RerankResult& result) {
    nlohmann::ordered_json j;
    j["span_id"] = result.span.span_id;
    j["patent_id"] = result.span.patent_id;
    j["kind"] = to_string(result.span.kind);
    j["ordinal"] = result.span.ordinal;
    j["text"] = result.span.text;
    if (result.bm25_rank) j["bm25_rank"] = *result.bm25_rank;
    if (result.bm25_score) j["bm25_score"] = *result.bm25_score;
    if (result.embed_rank) j["embed_rank"] = *result.embed_rank;
    if (result.cosine_score) j["cosine_score"] = *result.cosine_score;
    return j;
}

nlohmann::ordered_json results_to_json(const std::vector<RerankResult>& results) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : results) arr.push_back(result_to_json(r));
    return arr;
}

nlohmann::ordered_json response_to_json(const Query& query,
                                        const std::vector<RerankResult>& results) {
    nlohmann::ordered_json j;
    j["query"] = query.text;
    j["mode"] = to_string(query.mode);
    j["results"] = results_to_json(results);
    return j;
}

nlohmann::ordered_json metrics_to_json(const std::vector<ModeMetrics>& metrics,
                                       std::size_t queries, std::size_t n_candidates,
                                       std::size_t k_final) {
    nlohmann::ordered_json j;
    j["queries"] = queries;
    j["n_candidates"] = n_candidates;
    j["k"] = k_final;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& m : metrics) {
        rows.push_back({{"mode", to_string(m.mode)},
                        {"recall_at_k", m.recall_at_k},
                        {"mrr", m.mean_reciprocal_rank}});
    }
    j["modes"] = rows;
    return j;
}

}  // namespace priorart
