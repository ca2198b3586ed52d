#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "priorart/corpus.hpp"
#include "priorart/execution.hpp"

namespace priorart {

/// Okapi BM25 parameters; defaults are the Elasticsearch/Lucene defaults.
struct BM25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint64_t span_id;
    std::uint32_t term_frequency;  // >= 1
};

struct ScoredSpan {
    std::uint64_t span_id = 0;
    double score = 0.0;
    std::uint32_t rank = 0;  // 1-based
};

/// Inverted index with corpus statistics, scored with the Lucene BM25
/// variant: idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)).
class LexicalIndex {
public:
    explicit LexicalIndex(BM25Params params = {});

    /// Adds one span. Spans that tokenize to nothing are recorded with
    /// doc_length 0 and no postings. Throws on duplicate span_id.
    void add(std::uint64_t span_id, std::string_view text);
    void add(const SpanRecord& span) { add(span.span_id, span.text); }

    std::size_t size() const { return doc_length_.size(); }  // N
    std::size_t term_count() const { return postings_.size(); }
    std::uint64_t total_tokens() const { return total_tokens_; }
    double avg_doc_length() const;
    const BM25Params& params() const { return params_; }

    bool contains(std::uint64_t span_id) const { return doc_length_.count(span_id) != 0; }
    std::uint32_t doc_length(std::uint64_t span_id) const;
    std::uint64_t doc_frequency(const std::string& term) const;
    /// 0 when the term does not occur in the span or the corpus.
    std::uint32_t term_frequency(const std::string& term, std::uint64_t span_id) const;
    /// nullptr when the term is absent from the corpus.
    const std::vector<Posting>* postings(const std::string& term) const;
    /// Distinct indexed terms, sorted; used by persistence and tests.
    std::vector<std::string> terms() const;

    /// BM25 score of one span against a deduplicated term list. Terms absent
    /// from span or corpus contribute 0. Throws if span_id is not indexed.
    double score(const std::vector<std::string>& unique_terms, std::uint64_t span_id) const;

    /// Top-n spans for a query: candidates hold at least one query term and
    /// every required term, are scored over the union of query and required
    /// terms, and are ordered by (score desc, span_id asc). Spans scoring 0
    /// are never returned. Raw required strings are tokenized first. Throws
    /// "empty query" when both the query and the constraint are empty.
    std::vector<ScoredSpan> search(std::string_view query_text, std::size_t n,
                                   const std::vector<std::string>& required_terms = {},
                                   Execution exec = Execution::parallel) const;

private:
    friend struct LexicalIndexIo;

    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::uint64_t, std::uint32_t> doc_length_;
    std::uint64_t total_tokens_ = 0;
    BM25Params params_;
};

/// Files written under an index directory.
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kPostingsFile = "postings.bin";
inline constexpr std::string_view kSpanStoreFile = "spans.bin";

/// Writes manifest.json, postings.bin and spans.bin into dir. The manifest
/// records format_version, corpus statistics, BM25 parameters, and a FNV-1a
/// checksum per data file.
void save_lexical_index(const std::filesystem::path& dir, const LexicalIndex& index,
                        const SpanCatalog& spans);

struct LoadedLexicalIndex {
    LexicalIndex index;
    SpanCatalog spans;
};

/// Loads and validates (format_version, checksums) an index directory.
LoadedLexicalIndex load_lexical_index(const std::filesystem::path& dir);

}  // namespace priorart
