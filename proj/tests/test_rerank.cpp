#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <unordered_set>

#include "priorart/rerank.hpp"
#include "priorart/tokenizer.hpp"
#include "support/corpora.hpp"
#include "support/oracles.hpp"

using namespace priorart;

TEST_CASE("search mode names round trip") {
    CHECK(to_string(SearchMode::bm25_only) == "bm25_only");
    CHECK(to_string(SearchMode::embedding_only) == "embedding_only");
    CHECK(to_string(SearchMode::rerank) == "rerank");
    CHECK(search_mode_from("rerank") == SearchMode::rerank);
    CHECK(search_mode_from("bm25_only") == SearchMode::bm25_only);
    CHECK_FALSE(search_mode_from("hybrid").has_value());
}

TEST_CASE("each mode fills exactly its own rank and score fields") {
    const auto built = corpora::build_components(corpora::signed_spans(3, 120, 50));
    const auto components = built.view();
    const std::string text = built.spans.find(10)->text;

    Query query;
    query.text = text;
    query.k_final = 5;

    query.mode = SearchMode::bm25_only;
    for (const auto& r : search(query, components)) {
        CHECK(r.bm25_rank.has_value());
        CHECK(r.bm25_score.has_value());
        CHECK_FALSE(r.embed_rank.has_value());
        CHECK_FALSE(r.cosine_score.has_value());
    }

    query.mode = SearchMode::embedding_only;
    for (const auto& r : search(query, components)) {
        CHECK_FALSE(r.bm25_rank.has_value());
        CHECK_FALSE(r.bm25_score.has_value());
        CHECK(r.embed_rank.has_value());
        CHECK(r.cosine_score.has_value());
    }

    query.mode = SearchMode::rerank;
    const auto reranked = search(query, components);
    REQUIRE_FALSE(reranked.empty());
    for (const auto& r : reranked) {
        CHECK(r.bm25_rank.has_value());
        CHECK(r.bm25_score.has_value());
        CHECK(r.embed_rank.has_value());
        CHECK(r.cosine_score.has_value());
    }
}

TEST_CASE("a span is its own best answer under rerank") {
    const auto built = corpora::build_components(corpora::signed_spans(101, 300, 80));
    const auto components = built.view();

    std::mt19937_64 rng(55);
    std::uniform_int_distribution<std::uint64_t> pick(0, 299);
    for (int trial = 0; trial < 20; ++trial) {
        const auto id = pick(rng);
        Query query;
        query.text = built.spans.find(id)->text;
        query.mode = SearchMode::rerank;

        const auto results = search(query, components);
        REQUIRE_FALSE(results.empty());
        CHECK(results[0].span.span_id == id);
        CHECK(*results[0].bm25_rank == 1);
        CHECK(*results[0].embed_rank == 1);
        CHECK(*results[0].cosine_score == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rerank promotes the semantically matching span over the keyword decoy") {
    const auto corpus = corpora::make_decoy_corpus(6, 2024);
    const auto built = corpora::build_components(corpus.spans);
    const auto components = built.view();

    // independent reference agrees that BM25 alone picks the decoy
    oracle::Bm25Oracle reference;
    for (const auto& span : corpus.spans) reference.add(span.span_id, span.text);

    for (const auto& group : corpus.groups) {
        const auto oracle_top = reference.search(group.query, 1);
        REQUIRE(oracle_top.size() == 1);
        CHECK(oracle_top[0].id == group.decoy_id);

        Query query;
        query.text = group.query;
        query.n_candidates = 50;
        query.k_final = 5;

        query.mode = SearchMode::bm25_only;
        const auto lexical = search(query, components);
        REQUIRE_FALSE(lexical.empty());
        CHECK(lexical[0].span.span_id == group.decoy_id);

        query.mode = SearchMode::rerank;
        const auto reranked = search(query, components);
        REQUIRE_FALSE(reranked.empty());
        CHECK(reranked[0].span.span_id == group.relevant_id);
        // the winner was NOT the lexical favourite: reranking moved it up
        CHECK(*reranked[0].bm25_rank > *reranked[0].embed_rank);
        CHECK(*reranked[0].embed_rank == 1);
    }

    std::vector<EvalQuery> eval;
    for (const auto& group : corpus.groups) {
        eval.push_back({group.query, {group.relevant_id}, {}});
    }
    const auto metrics = evaluate_modes(eval, components, 50, 1);
    REQUIRE(metrics.size() == 3);
    CHECK(metrics[0].mode == SearchMode::bm25_only);
    CHECK(metrics[1].mode == SearchMode::embedding_only);
    CHECK(metrics[2].mode == SearchMode::rerank);
    CHECK(metrics[0].recall_at_k == 0.0);  // BM25@1 always lands on the decoy
    CHECK(metrics[2].recall_at_k == 1.0);  // reranking always recovers
    CHECK(metrics[2].mean_reciprocal_rank == 1.0);
    CHECK(metrics[2].recall_at_k >= metrics[0].recall_at_k);
}

TEST_CASE("rerank only reorders the lexical candidate set") {
    const auto built = corpora::build_components(corpora::random_spans(31, 250, 70));
    const auto components = built.view();

    Query query;
    query.text = "w2 w9 w33";
    query.mode = SearchMode::rerank;
    query.n_candidates = 40;
    query.k_final = 15;

    const auto results = search(query, components);
    const auto candidates = built.index->search(query.text, query.n_candidates);

    std::unordered_set<std::uint64_t> candidate_ids;
    std::vector<std::uint64_t> by_rank(candidates.size() + 1, ~0ULL);
    for (const auto& c : candidates) {
        candidate_ids.insert(c.span_id);
        by_rank[c.rank] = c.span_id;
    }
    for (const auto& r : results) {
        CHECK(candidate_ids.count(r.span.span_id) == 1);
        // bm25_rank and bm25_score are carried over from the lexical stage
        REQUIRE(*r.bm25_rank < by_rank.size());
        CHECK(by_rank[*r.bm25_rank] == r.span.span_id);
    }

    // ordering: exact cosine desc, span_id asc on ties; embed_rank = position
    const auto qvec = built.embedder->embed(query.text);
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(*results[i].embed_rank == i + 1);
        CHECK(*results[i].cosine_score ==
              cosine(built.store->find(results[i].span.span_id), qvec));
        if (i > 0) {
            const bool ordered =
                *results[i - 1].cosine_score > *results[i].cosine_score ||
                (*results[i - 1].cosine_score == *results[i].cosine_score &&
                 results[i - 1].span.span_id < results[i].span.span_id);
            CHECK(ordered);
        }
    }
    CHECK(results.size() <= query.k_final);
}

TEST_CASE("k_final = n_candidates keeps the whole candidate set, reordered") {
    const auto built = corpora::build_components(corpora::random_spans(41, 150, 40));
    const auto components = built.view();

    Query query;
    query.text = "w1 w7";
    query.mode = SearchMode::rerank;
    query.n_candidates = 25;
    query.k_final = 25;

    const auto results = search(query, components);
    const auto candidates = built.index->search(query.text, 25);
    REQUIRE(results.size() == candidates.size());

    std::set<std::uint64_t> a, b;
    for (const auto& r : results) a.insert(r.span.span_id);
    for (const auto& c : candidates) b.insert(c.span_id);
    CHECK(a == b);
}

TEST_CASE("exhaustive rerank equals the brute-force two-stage reference") {
    const auto spans = corpora::random_spans(61, 180, 50);
    const auto built = corpora::build_components(spans);
    const auto components = built.view();

    oracle::Bm25Oracle reference;
    for (const auto& span : spans) reference.add(span.span_id, span.text);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 12; ++trial) {
        const auto text = corpora::random_query(rng, 50, 1, 5);
        Query query;
        query.text = text;
        query.mode = SearchMode::rerank;
        query.n_candidates = spans.size();
        query.k_final = spans.size();

        const auto got = search(query, components);

        // stage 1: same candidate set as the reference lexical search
        const auto candidates = reference.search(text, spans.size());
        // stage 2: order candidates by exact cosine against the query vector
        const auto qvec = built.embedder->embed(text);
        std::vector<std::pair<std::uint64_t, std::vector<double>>> table;
        for (const auto& c : candidates) {
            const auto row = built.store->find(c.id);
            table.emplace_back(c.id, std::vector<double>(row.begin(), row.end()));
        }
        const auto want = oracle::top_k_by_cosine(table, qvec, table.size());

        REQUIRE_MESSAGE(got.size() == want.size(), "query '", text, "'");
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].span.span_id == want[i].id);
            CHECK(*got[i].cosine_score == want[i].cosine);  // bitwise
        }
    }
}

TEST_CASE("required terms are honored by every mode") {
    const auto built = corpora::build_components(corpora::random_spans(71, 300, 30));
    const auto components = built.view();

    for (const auto mode :
         {SearchMode::bm25_only, SearchMode::embedding_only, SearchMode::rerank}) {
        Query query;
        query.text = "w3 w8";
        query.mode = mode;
        query.k_final = 20;
        query.required_terms = {"w5"};

        for (const auto& r : search(query, components)) {
            const auto tokens = tokenize(r.span.text);
            CHECK_MESSAGE(std::count(tokens.begin(), tokens.end(), "w5") > 0,
                          "mode ", to_string(mode), " returned span ", r.span.span_id,
                          " without the required term");
        }
    }
}

TEST_CASE("serial and parallel rerank agree bitwise") {
    const auto built = corpora::build_components(corpora::random_spans(81, 220, 60));
    const auto components = built.view();

    Query query;
    query.text = "w4 w11 w29";
    query.mode = SearchMode::rerank;
    query.n_candidates = 60;
    query.k_final = 20;

    const auto serial = search(query, components, Execution::serial);
    const auto parallel = search(query, components, Execution::parallel);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].span.span_id == parallel[i].span.span_id);
        CHECK(*serial[i].bm25_score == *parallel[i].bm25_score);
        CHECK(*serial[i].cosine_score == *parallel[i].cosine_score);
    }
}

TEST_CASE("queries outside the vocabulary return empty results, not errors") {
    const auto built = corpora::build_components(corpora::random_spans(91, 80, 20));
    const auto components = built.view();

    Query query;
    query.text = "zz9qq unheard";
    query.mode = SearchMode::rerank;
    CHECK(search(query, components).empty());
    query.mode = SearchMode::bm25_only;
    CHECK(search(query, components).empty());
}

TEST_CASE("token-free queries are rejected") {
    const auto built = corpora::build_components(corpora::random_spans(92, 80, 20));
    const auto components = built.view();

    Query query;
    query.text = "???!!!";

    query.mode = SearchMode::rerank;
    CHECK_THROWS_WITH_AS(search(query, components), "query not embeddable",
                         std::invalid_argument);
    query.mode = SearchMode::embedding_only;
    CHECK_THROWS_WITH_AS(search(query, components), "query not embeddable",
                         std::invalid_argument);
    query.mode = SearchMode::bm25_only;
    CHECK_THROWS_WITH_AS(search(query, components), "empty query", std::invalid_argument);
}

TEST_CASE("parameter and component validation") {
    const auto built = corpora::build_components(corpora::random_spans(93, 60, 20));
    auto components = built.view();

    Query query;
    query.text = "w1";

    SUBCASE("k_final above n_candidates is only legal outside rerank") {
        query.mode = SearchMode::rerank;
        query.n_candidates = 5;
        query.k_final = 6;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);
        query.mode = SearchMode::bm25_only;
        CHECK_NOTHROW(search(query, components));
    }

    SUBCASE("zero sizes are rejected") {
        query.k_final = 0;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);
        query.k_final = 10;
        query.n_candidates = 0;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);
    }

    SUBCASE("missing components are named") {
        query.mode = SearchMode::bm25_only;
        components.index = nullptr;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);

        components = built.view();
        query.mode = SearchMode::embedding_only;
        components.forest = nullptr;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);

        components = built.view();
        components.spans = nullptr;
        CHECK_THROWS_AS(search(query, components), std::invalid_argument);
    }
}

TEST_CASE("evaluate_modes validates relevance lists and averages per mode") {
    const auto built = corpora::build_components(corpora::signed_spans(94, 100, 30));
    const auto components = built.view();

    SUBCASE("empty relevance list is an error") {
        const std::vector<EvalQuery> bad{{"w1", {}, {}}};
        CHECK_THROWS_AS(evaluate_modes(bad, components, 20, 5), std::invalid_argument);
    }

    SUBCASE("no queries yields three zeroed rows") {
        const auto metrics = evaluate_modes({}, components, 20, 5);
        REQUIRE(metrics.size() == 3);
        for (const auto& m : metrics) {
            CHECK(m.recall_at_k == 0.0);
            CHECK(m.mean_reciprocal_rank == 0.0);
        }
    }

    SUBCASE("self queries give rerank a perfect reciprocal rank") {
        std::vector<EvalQuery> eval;
        for (const std::uint64_t id : {5ULL, 40ULL, 77ULL}) {
            eval.push_back({built.spans.find(id)->text, {id}, {}});
        }
        const auto metrics = evaluate_modes(eval, components, 50, 5);
        REQUIRE(metrics.size() == 3);
        CHECK(metrics[2].mode == SearchMode::rerank);
        CHECK(metrics[2].recall_at_k == 1.0);
        CHECK(metrics[2].mean_reciprocal_rank == 1.0);
        for (const auto& m : metrics) {
            CHECK(m.recall_at_k >= 0.0);
            CHECK(m.recall_at_k <= 1.0);
            CHECK(m.mean_reciprocal_rank >= 0.0);
            CHECK(m.mean_reciprocal_rank <= 1.0);
        }
    }
}

TEST_CASE("result serialization uses a fixed field order and drops absent fields") {
    RerankResult full;
    full.span = {3, "p7", SectionKind::figure, 2, "a figure"};
    full.bm25_rank = 2;
    full.bm25_score = 1.5;
    full.embed_rank = 1;
    full.cosine_score = 0.25;
    CHECK(result_to_json(full).dump() ==
          R"({"span_id":3,"patent_id":"p7","kind":"figure","ordinal":2,"text":"a figure",)"
          R"("bm25_rank":2,"bm25_score":1.5,"embed_rank":1,"cosine_score":0.25})");

    RerankResult lexical_only;
    lexical_only.span = {0, "p0", SectionKind::title, 0, "t"};
    lexical_only.bm25_rank = 1;
    lexical_only.bm25_score = 0.5;
    CHECK(result_to_json(lexical_only).dump() ==
          R"({"span_id":0,"patent_id":"p0","kind":"title","ordinal":0,"text":"t",)"
          R"("bm25_rank":1,"bm25_score":0.5})");

    Query query;
    query.text = "sensor";
    query.mode = SearchMode::bm25_only;
    const auto response = response_to_json(query, {lexical_only});
    CHECK(response.dump() ==
          R"({"query":"sensor","mode":"bm25_only","results":)"
          R"([{"span_id":0,"patent_id":"p0","kind":"title","ordinal":0,"text":"t",)"
          R"("bm25_rank":1,"bm25_score":0.5}]})");
}

TEST_CASE("metrics serialization carries the run parameters") {
    std::vector<ModeMetrics> metrics{{SearchMode::bm25_only, 0.5, 0.25},
                                     {SearchMode::embedding_only, 0.75, 0.5},
                                     {SearchMode::rerank, 1.0, 1.0}};
    const auto j = metrics_to_json(metrics, 12, 100, 10);
    CHECK(j["queries"] == 12);
    CHECK(j["n_candidates"] == 100);
    CHECK(j["k"] == 10);
    REQUIRE(j["modes"].size() == 3);
    CHECK(j["modes"][0]["mode"] == "bm25_only");
    CHECK(j["modes"][0]["recall_at_k"] == 0.5);
    CHECK(j["modes"][2]["mrr"] == 1.0);
}
