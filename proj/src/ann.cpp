#include "priorart/ann.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

#include "priorart/detail/binary_io.hpp"

namespace priorart {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'N', 'F', 'R', 'S', 'T'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr int kSplitAttempts = 4;  // one initial fit plus three resamples

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::uint64_t tree_seed(std::uint64_t seed, std::uint32_t tree_index) {
    // Splitmix-style spread so adjacent tree indices get unrelated streams.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (std::uint64_t{tree_index} + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct TreeBuilder {
    const EmbeddingStore& store;
    const AnnParams& params;
    AnnForest::Tree tree;
    std::mt19937_64 rng;

    TreeBuilder(const EmbeddingStore& s, const AnnParams& p, std::uint32_t tree_index)
        : store(s), params(p), rng(tree_seed(p.seed, tree_index)) {}

    std::int32_t add_normal(const std::vector<double>& normal) {
        const auto row = static_cast<std::int32_t>(tree.normals.size() / store.dim());
        tree.normals.insert(tree.normals.end(), normal.begin(), normal.end());
        return row;
    }

    std::int32_t build(std::vector<std::uint32_t> items) {
        const auto index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();

        if (items.size() <= params.leaf_capacity) {
            auto& node = tree.nodes[index];
            node.items_begin = static_cast<std::uint32_t>(tree.leaf_items.size());
            tree.leaf_items.insert(tree.leaf_items.end(), items.begin(), items.end());
            node.items_end = static_cast<std::uint32_t>(tree.leaf_items.size());
            return index;
        }

        const std::size_t dim = store.dim();
        std::vector<double> normal(dim, 0.0);
        double offset = 0.0;
        std::vector<std::uint32_t> left_items;
        std::vector<std::uint32_t> right_items;
        bool separated = false;

        for (int attempt = 0; attempt < kSplitAttempts && !separated; ++attempt) {
            std::uniform_int_distribution<std::size_t> pick_a(0, items.size() - 1);
            std::uniform_int_distribution<std::size_t> pick_b(0, items.size() - 2);
            const std::size_t a = pick_a(rng);
            std::size_t b = pick_b(rng);
            if (b >= a) ++b;
            const auto p = store.row(items[a]);
            const auto q = store.row(items[b]);

            for (std::size_t d = 0; d < dim; ++d) normal[d] = p[d] - q[d];
            const double norm = l2_norm(normal);
            if (norm == 0.0) continue;  // duplicate points, resample
            for (auto& c : normal) c /= norm;

            double midpoint_dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) midpoint_dot += normal[d] * (p[d] + q[d]) * 0.5;
            offset = midpoint_dot;

            left_items.clear();
            right_items.clear();
            for (const auto item : items) {
                const double margin = dot(normal, store.row(item)) - offset;
                (margin >= 0.0 ? right_items : left_items).push_back(item);
            }
            separated = !left_items.empty() && !right_items.empty();
        }

        if (!separated) {
            // The sample kept landing on coincident points. Fall back to an
            // arbitrary balanced cut so depth stays bounded.
            std::shuffle(items.begin(), items.end(), rng);
            const auto mid = items.begin() + static_cast<std::ptrdiff_t>(items.size() / 2);
            left_items.assign(items.begin(), mid);
            right_items.assign(mid, items.end());

            std::normal_distribution<double> gauss(0.0, 1.0);
            for (auto& c : normal) c = gauss(rng);
            const double norm = l2_norm(normal);
            if (norm == 0.0) {
                std::fill(normal.begin(), normal.end(), 0.0);
                normal[0] = 1.0;
            } else {
                for (auto& c : normal) c /= norm;
            }
            offset = 0.0;
        }

        const auto normal_row = add_normal(normal);
        const auto left = build(std::move(left_items));
        const auto right = build(std::move(right_items));
        auto& node = tree.nodes[index];
        node.left = left;
        node.right = right;
        node.offset = offset;
        node.normal_row = normal_row;
        return index;
    }
};

AnnForest::Tree build_tree(const EmbeddingStore& store, const AnnParams& params,
                           std::uint32_t tree_index) {
    TreeBuilder builder(store, params, tree_index);
    std::vector<std::uint32_t> all(store.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    builder.build(std::move(all));
    return std::move(builder.tree);
}

}  // namespace

AnnForest AnnForest::build(const EmbeddingStore& store, AnnParams params, Execution exec) {
    if (params.n_trees < 1) throw std::invalid_argument("AnnParams: n_trees must be >= 1");
    if (params.leaf_capacity < 1) throw std::invalid_argument("AnnParams: leaf_capacity must be >= 1");

    AnnForest forest;
    forest.dim_ = store.dim();
    forest.params_ = params;
    forest.ids_ = store.ids();
    forest.store_ = &store;
    forest.trees_.resize(params.n_trees);

    const auto n_trees = static_cast<std::int64_t>(params.n_trees);
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < n_trees; ++t) {
            forest.trees_[static_cast<std::size_t>(t)] =
                build_tree(store, params, static_cast<std::uint32_t>(t));
        }
    } else {
        for (std::int64_t t = 0; t < n_trees; ++t) {
            forest.trees_[static_cast<std::size_t>(t)] =
                build_tree(store, params, static_cast<std::uint32_t>(t));
        }
    }
    return forest;
}

template <typename OnLeaf>
std::vector<std::uint32_t> AnnForest::gather(const EmbeddingVector& vector, std::size_t search_k,
                                             OnLeaf&& on_leaf) const {
    struct Entry {
        double priority;
        std::uint32_t tree;
        std::int32_t node;
    };
    // Max-heap on priority; ties resolve toward the lower tree, then the
    // lower node index, so traversal order is fully reproducible.
    const auto below = [](const Entry& a, const Entry& b) {
        if (a.priority != b.priority) return a.priority < b.priority;
        if (a.tree != b.tree) return a.tree > b.tree;
        return a.node > b.node;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(below)> frontier(below);
    for (std::uint32_t t = 0; t < trees_.size(); ++t) {
        if (!trees_[t].nodes.empty()) {
            frontier.push({std::numeric_limits<double>::infinity(), t, 0});
        }
    }

    std::vector<char> seen(ids_.size(), 0);
    std::vector<std::uint32_t> candidates;
    candidates.reserve(std::min(search_k, ids_.size()));

    while (!frontier.empty() && candidates.size() < search_k) {
        const Entry entry = frontier.top();
        frontier.pop();
        const auto& tree = trees_[entry.tree];
        const auto& node = tree.nodes[static_cast<std::size_t>(entry.node)];
        if (node.is_leaf()) {
            on_leaf(entry.tree, entry.node);
            for (auto i = node.items_begin; i < node.items_end; ++i) {
                const auto item = tree.leaf_items[i];
                if (!seen[item]) {
                    seen[item] = 1;
                    candidates.push_back(item);
                }
            }
            continue;
        }
        const std::span<const double> normal(
            tree.normals.data() + static_cast<std::size_t>(node.normal_row) * dim_, dim_);
        const double margin = dot(normal, vector) - node.offset;
        const auto near = margin >= 0.0 ? node.right : node.left;
        const auto far = margin >= 0.0 ? node.left : node.right;
        const double away = std::fabs(margin);
        frontier.push({std::min(entry.priority, away), entry.tree, near});
        frontier.push({std::min(entry.priority, -away), entry.tree, far});
    }
    return candidates;
}

std::vector<AnnNeighbor> AnnForest::query(const EmbeddingVector& vector, std::size_t k,
                                          std::size_t search_k) const {
    if (k < 1) throw std::invalid_argument("query: k must be >= 1");
    if (vector.size() != dim_) throw std::invalid_argument("query: dimension mismatch");
    if (ids_.empty()) return {};
    if (store_ == nullptr) throw std::runtime_error("forest has no embedding store attached");
    if (search_k == 0) search_k = std::size_t{params_.n_trees} * k * 4;

    auto candidates = gather(vector, search_k, [](std::uint32_t, std::int32_t) {});

    std::vector<AnnNeighbor> neighbors;
    neighbors.reserve(candidates.size());
    for (const auto item : candidates) {
        neighbors.push_back({ids_[item], cosine(store_->row(item), vector)});
    }
    std::sort(neighbors.begin(), neighbors.end(), [](const AnnNeighbor& a, const AnnNeighbor& b) {
        if (a.cosine != b.cosine) return a.cosine > b.cosine;
        return a.span_id < b.span_id;
    });
    if (neighbors.size() > k) neighbors.resize(k);
    return neighbors;
}

std::vector<std::pair<std::uint32_t, std::int32_t>> AnnForest::probe_trace(
    const EmbeddingVector& vector, std::size_t search_k) const {
    if (vector.size() != dim_) throw std::invalid_argument("probe_trace: dimension mismatch");
    std::vector<std::pair<std::uint32_t, std::int32_t>> trace;
    gather(vector, search_k, [&](std::uint32_t tree, std::int32_t node) {
        trace.emplace_back(tree, node);
    });
    return trace;
}

void AnnForest::save(const std::filesystem::path& path) const {
    detail::ByteWriter payload;
    payload.u64(ids_.size());
    for (const auto id : ids_) payload.u64(id);
    payload.u64(trees_.size());
    for (const auto& tree : trees_) {
        payload.u64(tree.nodes.size());
        for (const auto& node : tree.nodes) {
            payload.i32(node.left);
            payload.i32(node.right);
            payload.f64(node.offset);
            payload.i32(node.normal_row);
            payload.u32(node.items_begin);
            payload.u32(node.items_end);
        }
        payload.u64(tree.leaf_items.size());
        for (const auto item : tree.leaf_items) payload.u32(item);
        payload.u64(tree.normals.size());
        for (const auto c : tree.normals) payload.f64(c);
    }
    const std::string body = payload.take();

    detail::ByteWriter w;
    for (const char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kFormatVersion);
    w.u64(dim_);
    w.u32(params_.n_trees);
    w.u32(params_.leaf_capacity);
    w.u64(params_.seed);
    w.u64(body.size());
    w.u64(detail::fnv1a64(body));
    const std::string header = w.take();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

AnnForest AnnForest::load(const std::filesystem::path& path, const EmbeddingStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    detail::ByteReader r(bytes);
    for (const char c : kMagic) {
        if (r.u8() != static_cast<std::uint8_t>(c)) {
            throw std::runtime_error(path.string() + " is not a forest file");
        }
    }
    const auto version = r.u32();
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported forest format_version " + std::to_string(version));
    }

    AnnForest forest;
    forest.dim_ = r.u64();
    forest.params_.n_trees = r.u32();
    forest.params_.leaf_capacity = r.u32();
    forest.params_.seed = r.u64();
    const auto body_size = r.u64();
    const auto checksum = r.u64();
    if (r.remaining() != body_size) {
        throw std::runtime_error("forest file " + path.string() + " is truncated");
    }
    const std::string_view body = std::string_view(bytes).substr(bytes.size() - body_size);
    if (detail::fnv1a64(body) != checksum) {
        throw std::runtime_error("checksum mismatch in " + path.string());
    }

    detail::ByteReader br(body);
    const auto n_items = br.u64();
    forest.ids_.resize(n_items);
    for (auto& id : forest.ids_) id = br.u64();
    const auto n_trees = br.u64();
    forest.trees_.resize(n_trees);
    for (auto& tree : forest.trees_) {
        tree.nodes.resize(br.u64());
        for (auto& node : tree.nodes) {
            node.left = br.i32();
            node.right = br.i32();
            node.offset = br.f64();
            node.normal_row = br.i32();
            node.items_begin = br.u32();
            node.items_end = br.u32();
        }
        tree.leaf_items.resize(br.u64());
        for (auto& item : tree.leaf_items) item = br.u32();
        tree.normals.resize(br.u64());
        for (auto& c : tree.normals) c = br.f64();
    }
    if (!br.exhausted()) throw std::runtime_error("forest file has trailing bytes");

    if (store.dim() != forest.dim_) {
        throw std::runtime_error("forest dimension does not match embedding store");
    }
    if (store.ids() != forest.ids_) {
        throw std::runtime_error("forest does not match embedding store contents");
    }
    forest.store_ = &store;
    return forest;
}

}  // namespace priorart
