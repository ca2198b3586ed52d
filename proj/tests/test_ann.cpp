#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "priorart/ann.hpp"
#include "priorart/kernels.hpp"
#include "support/corpora.hpp"
#include "support/oracles.hpp"

using namespace priorart;
namespace fs = std::filesystem;

namespace {

EmbeddingStore make_store(std::uint64_t seed, std::size_t n, std::size_t dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingStore store(dim);
    for (std::uint64_t id = 0; id < n; ++id) {
        EmbeddingVector v(dim);
        for (auto& x : v) x = gauss(rng);
        store.insert(id, std::move(v));
    }
    return store;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("priorart_test_" + name);
}

void check_tree_invariants(const AnnForest& forest, std::size_t n_items) {
    for (const auto& tree : forest.trees()) {
        REQUIRE_FALSE(tree.nodes.empty());
        // every item appears in exactly one leaf
        std::vector<std::uint32_t> sorted = tree.leaf_items;
        std::sort(sorted.begin(), sorted.end());
        REQUIRE(sorted.size() == n_items);
        for (std::uint32_t i = 0; i < n_items; ++i) CHECK(sorted[i] == i);
        for (const auto& node : tree.nodes) {
            if (node.is_leaf()) {
                CHECK(node.right < 0);
                CHECK(node.items_end >= node.items_begin);
                CHECK(node.items_end - node.items_begin <= forest.params().leaf_capacity);
                CHECK(node.items_end <= tree.leaf_items.size());
            } else {
                CHECK(node.left > 0);
                CHECK(node.right > 0);
                CHECK(static_cast<std::size_t>(node.left) < tree.nodes.size());
                CHECK(static_cast<std::size_t>(node.right) < tree.nodes.size());
                REQUIRE(node.normal_row >= 0);
                CHECK((static_cast<std::size_t>(node.normal_row) + 1) * forest.dim() <=
                      tree.normals.size());
            }
        }
    }
}

}  // namespace

TEST_CASE("build validates parameters") {
    const auto store = make_store(1, 10, 8);
    CHECK_THROWS_AS(AnnForest::build(store, AnnParams{0, 16, 1}), std::invalid_argument);
    CHECK_THROWS_AS(AnnForest::build(store, AnnParams{4, 0, 1}), std::invalid_argument);
}

TEST_CASE("build partitions every item into leaves within capacity") {
    const auto store = make_store(33, 500, 16);
    const auto forest = AnnForest::build(store, AnnParams{5, 8, 7});
    CHECK(forest.size() == 500);
    CHECK(forest.dim() == 16);
    CHECK(forest.trees().size() == 5);
    check_tree_invariants(forest, 500);
}

TEST_CASE("same seed gives the same forest; different seeds differ") {
    const auto store = make_store(9, 200, 12);
    const auto a = AnnForest::build(store, AnnParams{4, 8, 99});
    const auto b = AnnForest::build(store, AnnParams{4, 8, 99});
    const auto c = AnnForest::build(store, AnnParams{4, 8, 100});
    CHECK(a == b);
    CHECK_FALSE(a == c);
}

TEST_CASE("a store of identical vectors still builds and answers") {
    EmbeddingStore store(8);
    for (std::uint64_t id = 0; id < 100; ++id) {
        store.insert(id, EmbeddingVector{1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    }
    // two-point fits always degenerate here, forcing the balanced fallback
    const auto forest = AnnForest::build(store, AnnParams{3, 4, 11});
    check_tree_invariants(forest, 100);

    const auto row = store.find(0);
    const EmbeddingVector q(row.begin(), row.end());
    const auto hits = forest.query(q, 5, store.size());
    REQUIRE(hits.size() == 5);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].span_id == i);  // equal cosines break toward smaller ids
        CHECK(hits[i].cosine == hits[0].cosine);
    }
}

TEST_CASE("query returns exact cosines sorted by (cosine desc, id asc)") {
    const auto store = make_store(21, 400, 24);
    const auto forest = AnnForest::build(store, AnnParams{8, 16, 5});

    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingVector q(24);
    for (auto& x : q) x = gauss(rng);

    const auto hits = forest.query(q, 10);
    REQUIRE(hits.size() == 10);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto row = store.find(hits[i].span_id);
        CHECK(hits[i].cosine == cosine(row, q));  // exact rescoring
        if (i > 0) {
            const bool ordered = hits[i - 1].cosine > hits[i].cosine ||
                                 (hits[i - 1].cosine == hits[i].cosine &&
                                  hits[i - 1].span_id < hits[i].span_id);
            CHECK(ordered);
        }
    }

    CHECK_THROWS_AS(forest.query(q, 0), std::invalid_argument);
    CHECK_THROWS_AS(forest.query(EmbeddingVector{1.0, 0.0}, 3), std::invalid_argument);
}

TEST_CASE("query of an empty forest is empty") {
    const EmbeddingStore store(8);
    const auto forest = AnnForest::build(store, AnnParams{2, 4, 1});
    CHECK(forest.query(EmbeddingVector(8, 0.5), 3).empty());
}

TEST_CASE("a full candidate budget reproduces brute force exactly") {
    const auto store = make_store(55, 600, 16);
    const auto forest = AnnForest::build(store, AnnParams{6, 16, 3});

    std::vector<std::pair<std::uint64_t, std::vector<double>>> table;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto row = store.row(i);
        table.emplace_back(store.ids()[i], std::vector<double>(row.begin(), row.end()));
    }

    std::mt19937_64 rng(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        EmbeddingVector q(16);
        for (auto& x : q) x = gauss(rng);
        const auto got = forest.query(q, 12, store.size());
        const auto want = oracle::top_k_by_cosine(table, q, 12);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].span_id == want[i].id);
            CHECK(got[i].cosine == want[i].cosine);  // same evaluation order, bitwise
        }
    }
}

TEST_CASE("raising search_k only extends the sequence of visited leaves") {
    const auto store = make_store(13, 400, 16);
    const auto forest = AnnForest::build(store, AnnParams{6, 8, 17});

    std::mt19937_64 rng(6);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingVector q(16);
    for (auto& x : q) x = gauss(rng);

    std::vector<std::size_t> budgets{10, 40, 100, 200, 400};
    std::vector<std::vector<std::pair<std::uint32_t, std::int32_t>>> traces;
    for (const auto budget : budgets) traces.push_back(forest.probe_trace(q, budget));
    for (std::size_t i = 1; i < traces.size(); ++i) {
        REQUIRE(traces[i].size() >= traces[i - 1].size());
        for (std::size_t j = 0; j < traces[i - 1].size(); ++j) {
            CHECK(traces[i][j] == traces[i - 1][j]);
        }
    }
    // the default budget collects distinct items, so more budget -> more hits
    CHECK_FALSE(traces.back().empty());
}

TEST_CASE("forest round trips through its file format") {
    const auto store = make_store(71, 300, 12);
    const auto forest = AnnForest::build(store, AnnParams{5, 8, 29});
    const auto path = temp_file("forest_roundtrip.bin");
    forest.save(path);

    const auto loaded = AnnForest::load(path, store);
    CHECK(loaded == forest);
    CHECK(loaded.params() == forest.params());

    // loaded forest answers queries identically
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingVector q(12);
    for (auto& x : q) x = gauss(rng);
    const auto a = forest.query(q, 7);
    const auto b = loaded.query(q, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].span_id == b[i].span_id);
        CHECK(a[i].cosine == b[i].cosine);
    }
    fs::remove(path);
}

TEST_CASE("load rejects damaged forest files") {
    const auto store = make_store(81, 60, 8);
    const auto forest = AnnForest::build(store, AnnParams{3, 8, 1});
    const auto path = temp_file("forest_damage.bin");

    const auto write_bytes = [&](const std::string& bytes) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    const auto read_bytes = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const auto expect_load_error = [&](const std::string& needle) {
        try {
            AnnForest::load(path, store);
            FAIL_CHECK("expected load to fail (", needle, ")");
        } catch (const std::runtime_error& e) {
            CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos,
                          "message was: ", e.what());
        }
    };

    forest.save(path);
    auto original = read_bytes();

    SUBCASE("bad magic") {
        auto bytes = original;
        bytes[0] = 'X';
        write_bytes(bytes);
        expect_load_error("not a forest file");
    }
    SUBCASE("bad version") {
        auto bytes = original;
        bytes[8] = 9;
        write_bytes(bytes);
        expect_load_error("unsupported forest format_version");
    }
    SUBCASE("flipped payload byte") {
        auto bytes = original;
        bytes[bytes.size() - 5] ^= 0x01;
        write_bytes(bytes);
        expect_load_error("checksum mismatch");
    }
    SUBCASE("truncated file") {
        auto bytes = original;
        bytes.resize(bytes.size() - 9);
        write_bytes(bytes);
        expect_load_error("truncated");
    }
    SUBCASE("mismatched store") {
        // same ids and dim attach fine; the id list and dim are what is checked
        const auto other = make_store(82, 60, 8);
        CHECK_NOTHROW(AnnForest::load(path, other));
        const auto smaller = make_store(83, 59, 8);
        CHECK_THROWS_WITH_AS(AnnForest::load(path, smaller),
                             "forest does not match embedding store contents",
                             std::runtime_error);
        const auto wrong_dim = make_store(84, 60, 16);
        CHECK_THROWS_WITH_AS(AnnForest::load(path, wrong_dim),
                             "forest dimension does not match embedding store",
                             std::runtime_error);
    }

    fs::remove(path);
}
