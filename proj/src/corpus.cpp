#include "priorart/corpus.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace priorart {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(kWhitespace);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(kWhitespace);
    return s.substr(first, last - first + 1);
}

bool is_space(char c) { return kWhitespace.find(c) != std::string_view::npos; }

/// Trims and collapses internal whitespace runs to single spaces.
std::string normalize_span(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
        } else {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::vector<std::string> split_after_delims(std::string_view text, std::string_view delims) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (delims.find(text[i]) != std::string_view::npos) {
            auto piece = normalize_span(text.substr(start, i - start + 1));
            if (!piece.empty()) out.push_back(std::move(piece));
            start = i + 1;
        }
    }
    if (start < text.size()) {
        auto piece = normalize_span(text.substr(start));
        if (!piece.empty()) out.push_back(std::move(piece));
    }
    return out;
}

bool is_upper_ascii(char c) { return c >= 'A' && c <= 'Z'; }

/// Splits normalized text at sentence boundaries: '.', '?' or '!' followed by
/// whitespace and an uppercase letter. The punctuation stays with the
/// preceding sentence.
std::vector<std::string> split_sentences(const std::string& normalized) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i + 2 < normalized.size(); ++i) {
        const char c = normalized[i];
        if ((c == '.' || c == '?' || c == '!') && normalized[i + 1] == ' ' &&
            is_upper_ascii(normalized[i + 2])) {
            out.push_back(normalized.substr(start, i - start + 1));
            start = i + 2;
        }
    }
    if (start < normalized.size()) out.push_back(normalized.substr(start));
    return out;
}

std::vector<std::string> split_line(std::string_view line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

struct MappingEndpoints {
    SectionKind from;
    SectionKind to;
};

MappingEndpoints endpoints(MetadataMapping m) {
    switch (m) {
        case MetadataMapping::title2abstract: return {SectionKind::title, SectionKind::abstract};
        case MetadataMapping::abstract2title: return {SectionKind::abstract, SectionKind::title};
        case MetadataMapping::claim2abstract:
            return {SectionKind::independent_claim, SectionKind::abstract};
        case MetadataMapping::abstract2claim:
            return {SectionKind::abstract, SectionKind::independent_claim};
        case MetadataMapping::title2figure: return {SectionKind::title, SectionKind::figure};
        case MetadataMapping::figure2title: return {SectionKind::figure, SectionKind::title};
    }
    throw std::logic_error("unknown mapping");
}

}  // namespace

std::string_view to_string(SectionKind kind) {
    switch (kind) {
        case SectionKind::title: return "title";
        case SectionKind::abstract: return "abstract";
        case SectionKind::figure: return "figure";
        case SectionKind::independent_claim: return "independent_claim";
        case SectionKind::dependent_claim: return "dependent_claim";
    }
    throw std::logic_error("unknown section kind");
}

std::optional<SectionKind> section_kind_from(std::string_view name) {
    if (name == "title") return SectionKind::title;
    if (name == "abstract") return SectionKind::abstract;
    if (name == "figure") return SectionKind::figure;
    if (name == "independent_claim") return SectionKind::independent_claim;
    if (name == "dependent_claim") return SectionKind::dependent_claim;
    return std::nullopt;
}

char kind_letter(SectionKind kind) {
    switch (kind) {
        case SectionKind::title: return 'T';
        case SectionKind::abstract: return 'A';
        case SectionKind::figure: return 'F';
        case SectionKind::independent_claim: return 'C';
        case SectionKind::dependent_claim: return 'D';
    }
    return '?';
}

const PatentSection* PatentDocument::first_section(SectionKind kind) const {
    for (const auto& s : sections) {
        if (s.kind == kind) return &s;
    }
    return nullptr;
}

std::string_view to_string(MetadataMapping mapping) {
    switch (mapping) {
        case MetadataMapping::title2abstract: return "title2abstract";
        case MetadataMapping::abstract2title: return "abstract2title";
        case MetadataMapping::claim2abstract: return "claim2abstract";
        case MetadataMapping::abstract2claim: return "abstract2claim";
        case MetadataMapping::title2figure: return "title2figure";
        case MetadataMapping::figure2title: return "figure2title";
    }
    throw std::logic_error("unknown mapping");
}

std::optional<MetadataMapping> metadata_mapping_from(std::string_view name) {
    for (auto m : {MetadataMapping::title2abstract, MetadataMapping::abstract2title,
                   MetadataMapping::claim2abstract, MetadataMapping::abstract2claim,
                   MetadataMapping::title2figure, MetadataMapping::figure2title}) {
        if (to_string(m) == name) return m;
    }
    return std::nullopt;
}

namespace tags {

std::string_view start_of(SectionKind kind) {
    switch (kind) {
        case SectionKind::title: return "<|start_of_title|>";
        case SectionKind::abstract: return "<|start_of_abstract|>";
        case SectionKind::figure: return "<|start_of_figure|>";
        case SectionKind::independent_claim:
        case SectionKind::dependent_claim: return "<|start_of_claim|>";
    }
    throw std::logic_error("unknown section kind");
}

std::string_view end_of(SectionKind kind) {
    switch (kind) {
        case SectionKind::title: return "<|end_of_title|>";
        case SectionKind::abstract: return "<|end_of_abstract|>";
        case SectionKind::figure: return "<|end_of_figure|>";
        case SectionKind::independent_claim:
        case SectionKind::dependent_claim: return "<|end_of_claim|>";
    }
    throw std::logic_error("unknown section kind");
}

std::string mapping_tag(MetadataMapping mapping) {
    return "<|" + std::string(to_string(mapping)) + "|>";
}

std::vector<std::string> all() {
    std::vector<std::string> out;
    for (auto k : {SectionKind::title, SectionKind::abstract, SectionKind::figure,
                   SectionKind::independent_claim}) {
        out.emplace_back(start_of(k));
        out.emplace_back(end_of(k));
    }
    out.emplace_back(dep);
    out.emplace_back(span);
    for (auto m : {MetadataMapping::title2abstract, MetadataMapping::abstract2title,
                   MetadataMapping::claim2abstract, MetadataMapping::abstract2claim,
                   MetadataMapping::title2figure, MetadataMapping::figure2title}) {
        out.push_back(mapping_tag(m));
    }
    return out;
}

}  // namespace tags

TsvParseResult parse_tsv(std::istream& in, const TsvSchema& schema) {
    TsvParseResult result;

    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("tsv: empty input, missing header row");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line, '\t');
    auto column = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw std::runtime_error("tsv: header is missing column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = column(schema.patent_id);
    const std::size_t kind_col = column(schema.kind);
    const std::size_t text_col = column(schema.text);

    std::unordered_map<std::string, std::size_t> doc_of;
    std::unordered_set<std::string> singletons_seen;  // "<patent_id>\x1f<kind>"

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const auto fields = split_line(line, '\t');
        if (fields.size() != header.size()) {
            result.errors.push_back({line_no, "expected " + std::to_string(header.size()) +
                                                  " columns, got " +
                                                  std::to_string(fields.size())});
            continue;
        }

        const std::string patent_id{trim(fields[id_col])};
        if (patent_id.empty()) {
            result.errors.push_back({line_no, "empty patent_id"});
            continue;
        }

        const std::string kind_name{trim(fields[kind_col])};
        const auto kind = section_kind_from(kind_name);
        if (!kind) {
            result.errors.push_back({line_no, "unknown kind '" + kind_name + "'"});
            continue;
        }

        const auto text = trim(fields[text_col]);
        if (text.empty()) {
            ++result.skipped_rows;
            continue;
        }

        if (*kind == SectionKind::title || *kind == SectionKind::abstract) {
            const std::string key = patent_id + '\x1f' + std::string(kind_name);
            if (!singletons_seen.insert(key).second) {
                result.errors.push_back(
                    {line_no, "duplicate " + kind_name + " for patent '" + patent_id + "'"});
                continue;
            }
        }

        auto [it, inserted] = doc_of.try_emplace(patent_id, result.documents.size());
        if (inserted) {
            result.documents.push_back({patent_id, {}});
        }
        result.documents[it->second].sections.push_back({*kind, std::string(text)});
    }

    return result;
}

std::vector<std::string> split_spans(std::string_view section_text, SectionKind kind) {
    if (trim(section_text).empty()) {
        throw std::invalid_argument("split_spans: section text is empty or whitespace-only");
    }

    if (kind == SectionKind::title || kind == SectionKind::figure) {
        return {normalize_span(section_text)};
    }

    auto spans = split_after_delims(section_text, ";:");
    if (spans.size() == 1 && kind == SectionKind::abstract) {
        return split_sentences(spans.front());
    }
    return spans;
}

IngestResult ingest(const std::vector<PatentDocument>& documents) {
    IngestResult result;
    std::uint64_t next_id = 0;
    for (const auto& doc : documents) {
        std::array<std::uint32_t, kSectionKindCount> ordinals{};
        for (const auto& section : doc.sections) {
            const auto kind_idx = static_cast<std::size_t>(section.kind);
            for (auto& text : split_spans(section.text, section.kind)) {
                result.spans.push_back(
                    {next_id++, doc.patent_id, section.kind, ordinals[kind_idx]++, std::move(text)});
                ++result.spans_by_kind[kind_idx];
            }
        }
    }
    return result;
}

SpanCatalog::SpanCatalog(std::vector<SpanRecord> spans) : spans_(std::move(spans)) {
    std::sort(spans_.begin(), spans_.end(),
              [](const SpanRecord& a, const SpanRecord& b) { return a.span_id < b.span_id; });
}

const SpanRecord* SpanCatalog::find(std::uint64_t span_id) const {
    const auto it = std::lower_bound(
        spans_.begin(), spans_.end(), span_id,
        [](const SpanRecord& r, std::uint64_t id) { return r.span_id < id; });
    if (it == spans_.end() || it->span_id != span_id) return nullptr;
    return &*it;
}

namespace {

/// "PREFIX text APPENDIX" for one section, with claim/abstract span
/// boundaries marked by a trailing span tag.
std::string tagged_section(const PatentSection& section) {
    std::string out;
    if (section.kind == SectionKind::dependent_claim) {
        out += tags::dep;
        out += ' ';
    }
    out += tags::start_of(section.kind);
    const bool mark_spans =
        section.kind == SectionKind::abstract || section.kind == SectionKind::independent_claim ||
        section.kind == SectionKind::dependent_claim;
    for (const auto& span : split_spans(section.text, section.kind)) {
        out += ' ';
        out += span;
        if (mark_spans) {
            out += ' ';
            out += tags::span;
        }
    }
    out += ' ';
    out += tags::end_of(section.kind);
    return out;
}

std::uint64_t section_span_count(const PatentSection& section) {
    return split_spans(section.text, section.kind).size();
}

}  // namespace

EmissionStats emit_gpt2_dataset(const std::vector<PatentDocument>& documents,
                                const std::vector<MetadataMapping>& mappings,
                                std::ostream& sink) {
    for (auto m : mappings) {
        if (m == MetadataMapping::figure2title) {
            throw std::invalid_argument(
                "emit_gpt2_dataset: mapping figure2title is reserved and must not be emitted");
        }
    }

    EmissionStats stats;
    for (const auto& doc : documents) {
        for (const auto& section : doc.sections) {
            sink << tagged_section(section) << '\n';
            stats.spans += section_span_count(section);
        }
        for (auto m : mappings) {
            const auto [from, to] = endpoints(m);
            const auto* s1 = doc.first_section(from);
            const auto* s2 = doc.first_section(to);
            if (s1 == nullptr || s2 == nullptr) continue;
            sink << tagged_section(*s1) << ' ' << tags::mapping_tag(m) << ' '
                 << tagged_section(*s2) << '\n';
        }
        ++stats.documents;
    }
    return stats;
}

EmissionStats emit_bert_dataset(const std::vector<PatentDocument>& documents,
                                std::ostream& sink) {
    EmissionStats stats;
    bool any_emitted = false;
    for (const auto& doc : documents) {
        bool doc_emitted = false;
        for (const auto& section : doc.sections) {
            for (const auto& span : split_spans(section.text, section.kind)) {
                if (!doc_emitted && any_emitted) sink << '\n';
                doc_emitted = true;
                sink << span << '\n';
                ++stats.spans;
            }
        }
        any_emitted = any_emitted || doc_emitted;
        ++stats.documents;
    }
    return stats;
}

}  // namespace priorart
