#include "priorart/lexical_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "priorart/detail/binary_io.hpp"
#include "priorart/kernels.hpp"
#include "priorart/tokenizer.hpp"

namespace priorart {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
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

}  // namespace

LexicalIndex::LexicalIndex(BM25Params params) : params_(params) {
    if (params_.k1 < 0.0) throw std::invalid_argument("BM25Params: k1 must be >= 0");
    if (params_.b < 0.0 || params_.b > 1.0) throw std::invalid_argument("BM25Params: b in [0,1]");
}

void LexicalIndex::add(std::uint64_t span_id, std::string_view text) {
    if (contains(span_id)) {
        throw std::invalid_argument("LexicalIndex: duplicate span_id " + std::to_string(span_id));
    }
    const auto tokens = tokenize(text);
    doc_length_.emplace(span_id, static_cast<std::uint32_t>(tokens.size()));
    total_tokens_ += tokens.size();

    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (auto& [term, freq] : tf) {
        auto& list = postings_[term];
        // Keep the list sorted by span_id; ingest order is ascending, so this
        // is an append in the common case.
        const Posting p{span_id, freq};
        const auto it = std::lower_bound(
            list.begin(), list.end(), span_id,
            [](const Posting& a, std::uint64_t id) { return a.span_id < id; });
        list.insert(it, p);
    }
}

double LexicalIndex::avg_doc_length() const {
    if (doc_length_.empty()) return 0.0;
    return static_cast<double>(total_tokens_) / static_cast<double>(doc_length_.size());
}

std::uint32_t LexicalIndex::doc_length(std::uint64_t span_id) const {
    const auto it = doc_length_.find(span_id);
    if (it == doc_length_.end()) {
        throw std::invalid_argument("LexicalIndex: span_id " + std::to_string(span_id) +
                                    " is not indexed");
    }
    return it->second;
}

std::uint64_t LexicalIndex::doc_frequency(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::uint32_t LexicalIndex::term_frequency(const std::string& term,
                                           std::uint64_t span_id) const {
    const auto* list = postings(term);
    if (list == nullptr) return 0;
    const auto it = std::lower_bound(
        list->begin(), list->end(), span_id,
        [](const Posting& a, std::uint64_t id) { return a.span_id < id; });
    if (it == list->end() || it->span_id != span_id) return 0;
    return it->term_frequency;
}

const std::vector<Posting>* LexicalIndex::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::vector<std::string> LexicalIndex::terms() const {
    std::vector<std::string> out;
    out.reserve(postings_.size());
    for (const auto& [term, _] : postings_) out.push_back(term);
    std::sort(out.begin(), out.end());
    return out;
}

double LexicalIndex::score(const std::vector<std::string>& unique_terms,
                           std::uint64_t span_id) const {
    const double dl = static_cast<double>(doc_length(span_id));
    const double n_docs = static_cast<double>(size());
    const double avgdl = avg_doc_length();
    double total = 0.0;
    for (const auto& term : unique_terms) {
        const double tf = static_cast<double>(term_frequency(term, span_id));
        if (tf == 0.0) continue;
        const double df = static_cast<double>(doc_frequency(term));
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl);
        total += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

std::vector<ScoredSpan> LexicalIndex::search(std::string_view query_text, std::size_t n,
                                             const std::vector<std::string>& required_terms,
                                             Execution exec) const {
    if (n < 1) throw std::invalid_argument("search: n must be >= 1");

    const auto query_terms = unique_terms(query_text);
    std::vector<std::string> required;
    for (const auto& raw : required_terms) {
        for (auto& t : tokenize(raw)) required.push_back(std::move(t));
    }
    std::sort(required.begin(), required.end());
    required.erase(std::unique(required.begin(), required.end()), required.end());

    if (query_terms.empty() && required.empty()) {
        throw std::invalid_argument("empty query");
    }

    // Candidate gathering. With a constraint, start from the spans holding
    // every required term; otherwise take the union over query terms.
    std::vector<std::uint64_t> candidates;
    if (!required.empty()) {
        const auto* first = postings(required.front());
        if (first == nullptr) return {};
        for (const auto& p : *first) candidates.push_back(p.span_id);
        for (std::size_t t = 1; t < required.size() && !candidates.empty(); ++t) {
            const auto* list = postings(required[t]);
            if (list == nullptr) return {};
            std::vector<std::uint64_t> kept;
            kept.reserve(candidates.size());
            auto it = list->begin();
            for (const auto id : candidates) {
                while (it != list->end() && it->span_id < id) ++it;
                if (it != list->end() && it->span_id == id) kept.push_back(id);
            }
            candidates = std::move(kept);
        }
        if (!query_terms.empty()) {
            std::vector<std::uint64_t> kept;
            kept.reserve(candidates.size());
            for (const auto id : candidates) {
                for (const auto& term : query_terms) {
                    if (term_frequency(term, id) != 0) {
                        kept.push_back(id);
                        break;
                    }
                }
            }
            candidates = std::move(kept);
        }
    } else {
        for (const auto& term : query_terms) {
            const auto* list = postings(term);
            if (list == nullptr) continue;
            for (const auto& p : *list) candidates.push_back(p.span_id);
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    }
    if (candidates.empty()) return {};

    const auto scoring_terms = merge_terms(query_terms, required);
    std::vector<double> scores(candidates.size());
    kernels::bm25_batch(*this, candidates, scoring_terms, scores, exec);

    std::vector<ScoredSpan> scored;
    scored.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (scores[i] > 0.0) scored.push_back({candidates[i], scores[i], 0});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.span_id < b.span_id;
    });
    if (scored.size() > n) scored.resize(n);
    for (std::size_t i = 0; i < scored.size(); ++i) {
        scored[i].rank = static_cast<std::uint32_t>(i + 1);
    }
    return scored;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct LexicalIndexIo {
    static std::string encode_postings(const LexicalIndex& index) {
        detail::ByteWriter w;
        w.u64(index.doc_length_.size());
        w.u64(index.total_tokens_);

        std::vector<std::uint64_t> ids;
        ids.reserve(index.doc_length_.size());
        for (const auto& [id, _] : index.doc_length_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        for (const auto id : ids) {
            w.u64(id);
            w.u32(index.doc_length_.at(id));
        }

        const auto terms = index.terms();
        w.u64(terms.size());
        for (const auto& term : terms) {
            w.str(term);
            const auto& list = *index.postings(term);
            w.u64(list.size());
            for (const auto& p : list) {
                w.u64(p.span_id);
                w.u32(p.term_frequency);
            }
        }
        return w.take();
    }

    static LexicalIndex decode_postings(std::string_view bytes, BM25Params params) {
        detail::ByteReader r(bytes);
        LexicalIndex index(params);
        const auto n = r.u64();
        const auto total = r.u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto id = r.u64();
            const auto len = r.u32();
            index.doc_length_.emplace(id, len);
        }
        index.total_tokens_ = total;
        const auto term_count = r.u64();
        for (std::uint64_t t = 0; t < term_count; ++t) {
            auto term = r.str();
            const auto m = r.u64();
            auto& list = index.postings_[std::move(term)];
            list.resize(m);
            for (auto& p : list) {
                p.span_id = r.u64();
                p.term_frequency = r.u32();
            }
        }
        if (!r.exhausted()) throw std::runtime_error("postings file has trailing bytes");
        return index;
    }

    static std::string encode_spans(const SpanCatalog& spans) {
        detail::ByteWriter w;
        w.u64(spans.size());
        for (const auto& s : spans.records()) {
            w.u64(s.span_id);
            w.str(s.patent_id);
            w.u8(static_cast<std::uint8_t>(s.kind));
            w.u32(s.ordinal);
            w.str(s.text);
        }
        return w.take();
    }

    static SpanCatalog decode_spans(std::string_view bytes) {
        detail::ByteReader r(bytes);
        const auto n = r.u64();
        std::vector<SpanRecord> records;
        records.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            SpanRecord s;
            s.span_id = r.u64();
            s.patent_id = r.str();
            const auto kind = r.u8();
            if (kind >= kSectionKindCount) throw std::runtime_error("bad section kind in span store");
            s.kind = static_cast<SectionKind>(kind);
            s.ordinal = r.u32();
            s.text = r.str();
            records.push_back(std::move(s));
        }
        if (!r.exhausted()) throw std::runtime_error("span store has trailing bytes");
        return SpanCatalog(std::move(records));
    }
};

void save_lexical_index(const std::filesystem::path& dir, const LexicalIndex& index,
                        const SpanCatalog& spans) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const auto postings_bytes = LexicalIndexIo::encode_postings(index);
    const auto span_bytes = LexicalIndexIo::encode_spans(spans);
    write_file(dir / kPostingsFile, postings_bytes);
    write_file(dir / kSpanStoreFile, span_bytes);

    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["N"] = index.size();
    manifest["avgdl"] = index.avg_doc_length();
    manifest["k1"] = index.params().k1;
    manifest["b"] = index.params().b;
    manifest["span_count"] = spans.size();
    manifest["term_count"] = index.term_count();
    manifest["files"] = {
        {"postings", {{"path", std::string(kPostingsFile)}, {"checksum", checksum_hex(postings_bytes)}}},
        {"span_store", {{"path", std::string(kSpanStoreFile)}, {"checksum", checksum_hex(span_bytes)}}},
    };
    write_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

LoadedLexicalIndex load_lexical_index(const std::filesystem::path& dir) {
    const auto manifest_path = dir / kManifestFile;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad manifest " + manifest_path.string() + ": " + e.what());
    }

    const int version = manifest.at("format_version").get<int>();
    if (version != 1) {
        throw std::runtime_error("unsupported index format_version " + std::to_string(version));
    }

    auto load_checked = [&](const char* key) {
        const auto& entry = manifest.at("files").at(key);
        const auto path = dir / entry.at("path").get<std::string>();
        auto bytes = read_file(path);
        if (checksum_hex(bytes) != entry.at("checksum").get<std::string>()) {
            throw std::runtime_error("checksum mismatch in " + path.string());
        }
        return bytes;
    };

    BM25Params params{manifest.at("k1").get<double>(), manifest.at("b").get<double>()};
    auto index = LexicalIndexIo::decode_postings(load_checked("postings"), params);
    auto spans = LexicalIndexIo::decode_spans(load_checked("span_store"));

    if (index.size() != manifest.at("N").get<std::size_t>()) {
        throw std::runtime_error("manifest N does not match postings file");
    }
    return {std::move(index), std::move(spans)};
}

}  // namespace priorart
