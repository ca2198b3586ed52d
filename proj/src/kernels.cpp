#include "priorart/kernels.hpp"

#include <cstdint>
#include <stdexcept>

namespace priorart::kernels {

void cosine_batch(std::span<const std::span<const double>> rows, std::span<const double> q,
                  std::span<double> out, Execution exec) {
    if (rows.size() != out.size()) throw std::invalid_argument("cosine_batch: size mismatch");
    const auto n = static_cast<std::int64_t>(rows.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = rows[i].empty() ? 0.0 : cosine(q, rows[i]);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = rows[i].empty() ? 0.0 : cosine(q, rows[i]);
        }
    }
}

void cosine_batch(const EmbeddingStore& store, std::span<const std::uint64_t> ids,
                  std::span<const double> q, std::span<double> out, Execution exec) {
    std::vector<std::span<const double>> rows(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        rows[i] = store.find(ids[i]);
        if (rows[i].empty()) {
            throw std::invalid_argument("cosine_batch: span_id " + std::to_string(ids[i]) +
                                        " not in store");
        }
    }
    cosine_batch(rows, q, out, exec);
}

void bm25_batch(const LexicalIndex& index, std::span<const std::uint64_t> ids,
                const std::vector<std::string>& terms, std::span<double> out, Execution exec) {
    if (ids.size() != out.size()) throw std::invalid_argument("bm25_batch: size mismatch");
    const auto n = static_cast<std::int64_t>(ids.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = index.score(terms, ids[i]);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            out[i] = index.score(terms, ids[i]);
        }
    }
}

EmbeddingStore embed_all(const Embedder& embedder, std::span<const SpanRecord> spans,
                         Execution exec) {
    const auto n = static_cast<std::int64_t>(spans.size());
    std::vector<EmbeddingVector> vectors(spans.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            vectors[i] = embedder.embed(spans[i].text);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            vectors[i] = embedder.embed(spans[i].text);
        }
    }

    EmbeddingStore store(embedder.dim());
    for (std::int64_t i = 0; i < n; ++i) {
        if (l2_norm(vectors[i]) == 0.0) continue;  // token-free span, no vector
        store.insert(spans[i].span_id, std::move(vectors[i]));
    }
    return store;
}

}  // namespace priorart::kernels
