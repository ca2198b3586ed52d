#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace priorart {

/// The structural section of a patent a span was extracted from.
enum class SectionKind : std::uint8_t {
    title = 0,
    abstract = 1,
    figure = 2,
    independent_claim = 3,
    dependent_claim = 4,
};

inline constexpr std::size_t kSectionKindCount = 5;

std::string_view to_string(SectionKind kind);
std::optional<SectionKind> section_kind_from(std::string_view name);

/// Single-letter label used in human-readable result listings, e.g. "A-4"
/// for the fifth span of an abstract.
char kind_letter(SectionKind kind);

struct PatentSection {
    SectionKind kind;
    std::string text;
};

struct PatentDocument {
    std::string patent_id;
    std::vector<PatentSection> sections;

    const PatentSection* first_section(SectionKind kind) const;
};

/// One indexed unit of patent text. span_ids are dense and assigned in
/// ingestion order; ordinal is the 0-based position of the span among all
/// spans of the same kind within its document.
struct SpanRecord {
    std::uint64_t span_id = 0;
    std::string patent_id;
    SectionKind kind = SectionKind::title;
    std::uint32_t ordinal = 0;
    std::string text;

    bool operator==(const SpanRecord&) const = default;
};

/// Directed section-to-section training pairs. figure2title is defined but
/// reserved: the dataset emitter rejects it.
enum class MetadataMapping : std::uint8_t {
    title2abstract,
    abstract2title,
    claim2abstract,
    abstract2claim,
    title2figure,
    figure2title,
};

std::string_view to_string(MetadataMapping mapping);
std::optional<MetadataMapping> metadata_mapping_from(std::string_view name);

namespace tags {
inline constexpr std::string_view dep = "<|dep|>";
inline constexpr std::string_view span = "<|span|>";
std::string_view start_of(SectionKind kind);
std::string_view end_of(SectionKind kind);
std::string mapping_tag(MetadataMapping mapping);
/// All tag strings the GPT-2 emitter can produce.
std::vector<std::string> all();
}  // namespace tags

// ---------------------------------------------------------------------------
// TSV parsing
// ---------------------------------------------------------------------------

struct RowError {
    std::size_t line;  // 1-based line number in the input
    std::string message;
};

struct TsvParseResult {
    std::vector<PatentDocument> documents;
    std::vector<RowError> errors;
    std::uint64_t skipped_rows = 0;  // rows whose text was empty after trimming
};

/// Column names used to locate the patent id, section kind, and text columns
/// in the TSV header, in that meaning order.
struct TsvSchema {
    std::string patent_id = "patent_id";
    std::string kind = "kind";
    std::string text = "text";
};

/// Parses a tab-separated corpus. The first line must be a header containing
/// the three schema columns; extra columns are ignored. Malformed rows are
/// reported per row and do not abort the parse. Throws std::runtime_error if
/// the header itself is unusable.
TsvParseResult parse_tsv(std::istream& in, const TsvSchema& schema = {});

// ---------------------------------------------------------------------------
// Span splitting and ingestion
// ---------------------------------------------------------------------------

/// Splits one section's text into spans:
///   - titles and figure descriptions are single spans;
///   - claims and abstracts are split after every ';' and ':';
///   - an abstract that yields a single span that way is split at sentence
///     boundaries instead (.!? followed by whitespace and an uppercase letter).
/// Each span is trimmed and internal whitespace runs are collapsed to single
/// spaces. Throws std::invalid_argument on whitespace-only input.
std::vector<std::string> split_spans(std::string_view section_text, SectionKind kind);

struct IngestResult {
    std::vector<SpanRecord> spans;
    std::array<std::uint64_t, kSectionKindCount> spans_by_kind{};
};

/// Flattens documents into SpanRecords with dense span_ids starting at 0.
IngestResult ingest(const std::vector<PatentDocument>& documents);

/// Immutable id -> SpanRecord lookup over an ingested corpus.
class SpanCatalog {
public:
    SpanCatalog() = default;
    explicit SpanCatalog(std::vector<SpanRecord> spans);

    const SpanRecord* find(std::uint64_t span_id) const;
    const std::vector<SpanRecord>& records() const { return spans_; }
    std::size_t size() const { return spans_.size(); }

private:
    std::vector<SpanRecord> spans_;  // sorted by span_id
};

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

struct EmissionStats {
    std::uint64_t documents = 0;
    std::uint64_t spans = 0;
    std::uint64_t skipped_rows = 0;
};

/// Writes one tagged line per section ("PREFIX text APPENDIX"), with every
/// claim/abstract span boundary marked by a trailing span tag, followed by one
/// line per requested mapping for which both sections exist in the document.
/// Throws std::invalid_argument (before any output) if mappings contains the
/// reserved figure2title.
EmissionStats emit_gpt2_dataset(const std::vector<PatentDocument>& documents,
                                const std::vector<MetadataMapping>& mappings,
                                std::ostream& sink);

/// Writes each span on its own line, untagged, with exactly one empty line
/// between consecutive documents and no trailing empty line.
EmissionStats emit_bert_dataset(const std::vector<PatentDocument>& documents,
                                std::ostream& sink);

}  // namespace priorart
