#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "priorart/embedding.hpp"
#include "priorart/execution.hpp"

namespace priorart {

struct AnnParams {
    std::uint32_t n_trees = 50;
    std::uint32_t leaf_capacity = 16;
    std::uint64_t seed = 42;

    bool operator==(const AnnParams&) const = default;
};

struct AnnNeighbor {
    std::uint64_t span_id = 0;
    double cosine = 0.0;
};

// Forest of random-projection trees over unit vectors. Each internal node
// splits its points by a hyperplane fitted to two sampled points; leaves hold
// at most leaf_capacity items. Queries walk all trees through one shared
// priority queue ordered by hyperplane margin, gather candidates until
// search_k distinct items have been seen, then rescore them exactly by
// cosine. Builds are deterministic for a given (seed, item order), and the
// parallel build matches the serial build node for node because every tree
// derives its RNG from (seed, tree_index) alone.
class AnnForest {
public:
    struct Node {
        std::int32_t left = -1;    // -1 on leaves
        std::int32_t right = -1;
        double offset = 0.0;
        std::int32_t normal_row = -1;  // row into the tree's normal arena, -1 on leaves
        std::uint32_t items_begin = 0; // leaf item range, valid on leaves only
        std::uint32_t items_end = 0;

        bool is_leaf() const { return left < 0; }
        bool operator==(const Node&) const = default;
    };

    struct Tree {
        std::vector<Node> nodes;              // nodes[0] is the root
        std::vector<std::uint32_t> leaf_items;
        std::vector<double> normals;          // normal_row * dim .. + dim

        bool operator==(const Tree&) const = default;
    };

    AnnForest() = default;

    static AnnForest build(const EmbeddingStore& store, AnnParams params,
                           Execution exec = Execution::parallel);

    std::vector<AnnNeighbor> query(const EmbeddingVector& vector, std::size_t k,
                                   std::size_t search_k = 0) const;

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const AnnParams& params() const { return params_; }
    const std::vector<Tree>& trees() const { return trees_; }
    const std::vector<std::uint64_t>& ids() const { return ids_; }

    // Leaves visited by a query before the candidate budget is exhausted, in
    // visit order. Exposed so tests can check that raising search_k only ever
    // extends the prefix of inspected leaves.
    std::vector<std::pair<std::uint32_t, std::int32_t>> probe_trace(
        const EmbeddingVector& vector, std::size_t search_k) const;

    bool operator==(const AnnForest& other) const {
        return dim_ == other.dim_ && params_ == other.params_ && ids_ == other.ids_ &&
               trees_ == other.trees_;
    }

    void save(const std::filesystem::path& path) const;
    static AnnForest load(const std::filesystem::path& path, const EmbeddingStore& store);

private:
    std::size_t dim_ = 0;
    AnnParams params_;
    std::vector<std::uint64_t> ids_;  // item index -> span_id
    std::vector<Tree> trees_;
    const EmbeddingStore* store_ = nullptr;  // not owned; rows for rescoring

    // Shared best-first walk: collects distinct item indices until search_k of
    // them have been seen, invoking on_leaf(tree, node) at every visited leaf.
    template <typename OnLeaf>
    std::vector<std::uint32_t> gather(const EmbeddingVector& vector, std::size_t search_k,
                                      OnLeaf&& on_leaf) const;
};

}  // namespace priorart
