#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "priorart/corpus.hpp"
#include "priorart/embedding.hpp"
#include "priorart/execution.hpp"
#include "priorart/lexical_index.hpp"

namespace priorart::kernels {

/// out[i] = cosine(q, rows[i]). Rows may be empty spans (score 0.0).
void cosine_batch(std::span<const std::span<const double>> rows, std::span<const double> q,
                  std::span<double> out, Execution exec);

/// out[i] = cosine(q, store row of ids[i]); ids must be present in the store.
void cosine_batch(const EmbeddingStore& store, std::span<const std::uint64_t> ids,
                  std::span<const double> q, std::span<double> out, Execution exec);

/// out[i] = index.score(terms, ids[i]).
void bm25_batch(const LexicalIndex& index, std::span<const std::uint64_t> ids,
                const std::vector<std::string>& terms, std::span<double> out, Execution exec);

/// Embeds every span and collects the non-zero vectors into a store keyed by
/// span_id, in span order.
EmbeddingStore embed_all(const Embedder& embedder, std::span<const SpanRecord> spans,
                         Execution exec);

}  // namespace priorart::kernels
