#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace priorart {

using EmbeddingVector = std::vector<double>;

/// Exact cosine similarity, summed left to right for bit determinism.
/// Returns 0.0 if either vector is zero. Throws on dimension mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

/// Scales v to unit length; a zero vector is left unchanged.
void l2_normalize(EmbeddingVector& v);

/// Converts text to a fixed-dimension vector. Implementations are pure
/// functions after construction and safe for concurrent use.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
    /// Non-empty token lists yield an L2-normalized vector; an input with no
    /// tokens yields the zero vector.
    virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Deterministic feature-hashing embedder: each token is bucketed by its
/// FNV-1a 64-bit hash modulo dim and contributes +1 or -1 (sign drawn from
/// bit 63 of the hash of "s:" + token), then the vector is L2-normalized.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = kDefaultDim);

    std::size_t dim() const override { return dim_; }
    std::string name() const override { return "hash"; }
    EmbeddingVector embed(std::string_view text) const override;

    static constexpr std::size_t kDefaultDim = 256;

private:
    std::size_t dim_;
};

/// How an engine's vectors are produced: kind "hash" derives them from span
/// text; kind "file" loads them from a vector file (parameters["path"]), with
/// the hash embedder of the same dim used for query text and for spans the
/// file does not cover.
struct EmbedderDescriptor {
    std::string name = "hash";
    std::string kind = "hash";
    std::size_t dim = HashEmbedder::kDefaultDim;
    std::map<std::string, std::string> parameters;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderDescriptor& descriptor);

/// Immutable span_id -> vector map; all vectors share one dimension and are
/// L2-normalized.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim);

    /// Normalizes and stores a vector. Throws on dimension mismatch,
    /// duplicate span_id, or a zero vector.
    void insert(std::uint64_t span_id, EmbeddingVector vector);

    /// Row view for a span, or an empty span if absent.
    std::span<const double> find(std::uint64_t span_id) const;
    bool contains(std::uint64_t span_id) const { return row_of_.count(span_id) != 0; }

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    /// Span ids in insertion order.
    const std::vector<std::uint64_t>& ids() const { return ids_; }
    std::span<const double> row(std::size_t index) const;

    /// Reads the text vector-file format (see save). Every row is
    /// L2-normalized on load; zero rows and ragged dimensions are errors.
    static EmbeddingStore load(std::istream& in);

    /// Writes `#dim=<d>` then one `span_id<TAB>v1,v2,...,vd` row per vector,
    /// in insertion order, with round-trip-exact decimal reals.
    void save(std::ostream& out) const;

private:
    std::size_t dim_;
    std::vector<std::uint64_t> ids_;
    std::vector<double> data_;  // ids_.size() * dim_
    std::unordered_map<std::uint64_t, std::size_t> row_of_;
};

}  // namespace priorart
