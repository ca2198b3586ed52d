#include "priorart/embedding.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "priorart/detail/binary_io.hpp"
#include "priorart/tokenizer.hpp"

namespace priorart {

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

void l2_normalize(EmbeddingVector& v) {
    const double norm = l2_norm(v);
    // A vector already unit length to within rounding cannot be improved by
    // dividing; keeping its exact bytes makes save/load round trips bitwise
    // faithful. Cosine scoring divides by both norms anyway, so a norm this
    // close to one never changes a score.
    if (norm == 0.0 || std::abs(norm - 1.0) <= 1e-9) return;
    for (double& x : v) x /= norm;
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
    if (dim < 2) throw std::invalid_argument("HashEmbedder: dim must be >= 2");
}

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
    EmbeddingVector v(dim_, 0.0);
    for (const auto& token : tokenize(text)) {
        const std::uint64_t h = detail::fnv1a64(token);
        const std::uint64_t sign_hash = detail::fnv1a64("s:" + token);
        const double sign = (sign_hash >> 63) == 0 ? 1.0 : -1.0;
        v[h % dim_] += sign;
    }
    l2_normalize(v);
    return v;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderDescriptor& descriptor) {
    if (descriptor.kind == "hash" || descriptor.kind == "file") {
        return std::make_unique<HashEmbedder>(descriptor.dim);
    }
    throw std::invalid_argument("unknown embedder kind '" + descriptor.kind + "'");
}

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim < 2) throw std::invalid_argument("EmbeddingStore: dim must be >= 2");
}

void EmbeddingStore::insert(std::uint64_t span_id, EmbeddingVector vector) {
    if (vector.size() != dim_) {
        throw std::invalid_argument("EmbeddingStore: vector of dim " +
                                    std::to_string(vector.size()) + " in store of dim " +
                                    std::to_string(dim_));
    }
    if (row_of_.count(span_id) != 0) {
        throw std::invalid_argument("EmbeddingStore: duplicate span_id " +
                                    std::to_string(span_id));
    }
    if (l2_norm(vector) == 0.0) {
        throw std::invalid_argument("EmbeddingStore: zero vector for span_id " +
                                    std::to_string(span_id));
    }
    l2_normalize(vector);
    row_of_.emplace(span_id, ids_.size());
    ids_.push_back(span_id);
    data_.insert(data_.end(), vector.begin(), vector.end());
}

std::span<const double> EmbeddingStore::find(std::uint64_t span_id) const {
    const auto it = row_of_.find(span_id);
    if (it == row_of_.end()) return {};
    return row(it->second);
}

std::span<const double> EmbeddingStore::row(std::size_t index) const {
    return {data_.data() + index * dim_, dim_};
}

EmbeddingStore EmbeddingStore::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("vector file: empty input");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("#dim=", 0) != 0) {
        throw std::runtime_error("vector file: missing '#dim=<d>' header");
    }
    std::size_t dim = 0;
    {
        const auto* begin = line.data() + 5;
        const auto* end = line.data() + line.size();
        const auto [ptr, ec] = std::from_chars(begin, end, dim);
        if (ec != std::errc() || ptr != end || dim < 2) {
            throw std::runtime_error("vector file: bad dimension in header '" + line + "'");
        }
    }

    EmbeddingStore store(dim);
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_no;
        const auto fail = [&](const std::string& what) {
            throw std::runtime_error("vector file: row " + std::to_string(row_no) + ": " + what);
        };

        const auto tab = line.find('\t');
        if (tab == std::string::npos) fail("expected span_id<TAB>components");

        std::uint64_t span_id = 0;
        {
            const auto [ptr, ec] = std::from_chars(line.data(), line.data() + tab, span_id);
            if (ec != std::errc() || ptr != line.data() + tab) fail("bad span_id");
        }

        EmbeddingVector v;
        v.reserve(dim);
        const char* p = line.data() + tab + 1;
        const char* end = line.data() + line.size();
        while (p < end) {
            char* next = nullptr;
            const double x = std::strtod(p, &next);
            if (next == p) fail("bad component value");
            v.push_back(x);
            p = next;
            if (p < end) {
                if (*p != ',') fail("expected ',' between components");
                ++p;
            }
        }
        if (v.size() != dim) {
            fail("expected " + std::to_string(dim) + " components, got " +
                 std::to_string(v.size()));
        }
        if (l2_norm(v) == 0.0) fail("zero vector");
        try {
            store.insert(span_id, std::move(v));
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    return store;
}

void EmbeddingStore::save(std::ostream& out) const {
    out << "#dim=" << dim_ << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        out << ids_[i] << '\t';
        const auto r = row(i);
        for (std::size_t j = 0; j < dim_; ++j) {
            // %.17g round-trips doubles exactly through strtod
            std::snprintf(buf, sizeof buf, "%.17g", r[j]);
            if (j != 0) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace priorart
