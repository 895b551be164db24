#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "prolap/eval.hpp"
#include "prolap/rng.hpp"

using namespace prolap;

namespace {

DiagGaussian random_gaussian(std::size_t d, Rng& rng) {
    Vec mu(d), lv(d);
    for (std::size_t i = 0; i < d; ++i) {
        mu[i] = rng.normal();
        lv[i] = rng.uniform(-2.0, 1.0);
    }
    return DiagGaussian(std::move(mu), std::move(lv));
}

// Independent metric oracle by explicit rank enumeration: the rank of a
// gallery item is 1 + #items scoring strictly higher + #ties with a lower
// index. No sorting involved.
struct OracleReport {
    double r1 = 0, r5 = 0, r10 = 0, map10 = 0;
};

OracleReport rank_enumeration_oracle(const std::vector<Vec>& scores,
                                     const std::vector<std::vector<int>>& relevant) {
    OracleReport rep;
    const std::size_t g = scores.front().size();
    for (std::size_t q = 0; q < scores.size(); ++q) {
        std::vector<int> rank(g);
        for (std::size_t i = 0; i < g; ++i) {
            int r = 1;
            for (std::size_t j = 0; j < g; ++j) {
                if (scores[q][j] > scores[q][i]) ++r;
                else if (scores[q][j] == scores[q][i] && j < i) ++r;
            }
            rank[i] = r;
        }
        int best_rel_rank = 1 << 30;
        for (int rel : relevant[q]) {
            best_rel_rank = std::min(best_rel_rank, rank[static_cast<std::size_t>(rel)]);
        }
        if (best_rel_rank <= 1) rep.r1 += 1.0;
        if (best_rel_rank <= 5) rep.r5 += 1.0;
        if (best_rel_rank <= 10) rep.r10 += 1.0;

        double ap = 0.0;
        int found = 0;
        for (int k = 1; k <= static_cast<int>(std::min<std::size_t>(10, g)); ++k) {
            bool is_rel = false;
            for (int rel : relevant[q]) {
                if (rank[static_cast<std::size_t>(rel)] == k) is_rel = true;
            }
            if (is_rel) {
                ++found;
                ap += static_cast<double>(found) / static_cast<double>(k);
            }
        }
        ap /= static_cast<double>(std::min<std::size_t>(relevant[q].size(), 10));
        rep.map10 += ap;
    }
    const double nq = static_cast<double>(scores.size());
    rep.r1 /= nq;
    rep.r5 /= nq;
    rep.r10 /= nq;
    rep.map10 /= nq;
    return rep;
}

}  // namespace

TEST_CASE("gallery of one: all metrics are 1") {
    const std::vector<Vec> scores{{0.3}};
    const auto rep = retrieval_from_scores(scores, {{0}}, "audio->text");
    CHECK(rep.r_at.at(1) == 1.0);
    CHECK(rep.r_at.at(5) == 1.0);
    CHECK(rep.r_at.at(10) == 1.0);
    CHECK(rep.map_at_10 == 1.0);
}

TEST_CASE("perfect diagonal similarity: R@1 = mAP@10 = 1") {
    const std::size_t n = 10;
    std::vector<Vec> scores(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) scores[i][i] = 1.0;
    std::vector<std::vector<int>> rel(n);
    for (std::size_t i = 0; i < n; ++i) rel[i] = {static_cast<int>(i)};
    const auto rep = retrieval_from_scores(scores, rel, "audio->text");
    CHECK(rep.r_at.at(1) == 1.0);
    CHECK(rep.map_at_10 == 1.0);
}

TEST_CASE("crafted 5-item matrix matches the brute-force oracle") {
    // Query 0's relevant sits at rank 5; query 1 has two relevants at
    // ranks 2 and 3.
    const std::vector<Vec> scores{{0.1, 0.9, 0.5, 0.3, 0.2},
                                  {0.8, 0.1, 0.7, 0.75, 0.0}};
    const std::vector<std::vector<int>> rel{{0}, {2, 3}};
    const auto rep = retrieval_from_scores(scores, rel, "x");
    const auto oracle = rank_enumeration_oracle(scores, rel);
    CHECK(rep.r_at.at(1) == oracle.r1);
    CHECK(rep.r_at.at(5) == oracle.r5);
    CHECK(rep.r_at.at(10) == oracle.r10);
    CHECK(rep.map_at_10 == oracle.map10);
    // Hand numbers: AP(q0) = 1/5, AP(q1) = (1/2 + 2/3)/2.
    CHECK(rep.map_at_10 == doctest::Approx((0.2 + (0.5 + 2.0 / 3.0) / 2.0) / 2.0));
}

TEST_CASE("random matrices incl. 5-relevant queries match the oracle exactly") {
    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20;
        std::vector<Vec> scores(n, Vec(n));
        for (auto& row : scores) {
            for (double& v : row) v = rng.normal();
        }
        std::vector<std::vector<int>> rel(n);
        for (std::size_t q = 0; q < n; ++q) {
            // Every fourth query gets 5 relevants (multi-caption style).
            if (q % 4 == 0) {
                while (rel[q].size() < 5) {
                    const int cand = static_cast<int>(rng.below(n));
                    if (std::find(rel[q].begin(), rel[q].end(), cand) == rel[q].end()) {
                        rel[q].push_back(cand);
                    }
                }
            } else {
                rel[q] = {static_cast<int>(rng.below(n))};
            }
        }
        const auto rep = retrieval_from_scores(scores, rel, "x");
        const auto oracle = rank_enumeration_oracle(scores, rel);
        CHECK(rep.r_at.at(1) == oracle.r1);
        CHECK(rep.r_at.at(5) == oracle.r5);
        CHECK(rep.r_at.at(10) == oracle.r10);
        CHECK(rep.map_at_10 == oracle.map10);
    }
}

TEST_CASE("ranking is invariant under strictly monotone score transforms") {
    Rng rng(62);
    const std::size_t n = 12;
    std::vector<Vec> scores(n, Vec(n));
    for (auto& row : scores) {
        for (double& v : row) v = rng.normal();
    }
    std::vector<std::vector<int>> rel(n);
    for (std::size_t q = 0; q < n; ++q) rel[q] = {static_cast<int>(rng.below(n))};
    const auto base = retrieval_from_scores(scores, rel, "x");

    std::vector<Vec> warped = scores;
    for (auto& row : warped) {
        for (double& v : row) v = std::tanh(v) * 3.0 + v * v * v * 0.1 + v;
    }
    const auto same = retrieval_from_scores(warped, rel, "x");
    CHECK(base.r_at.at(1) == same.r_at.at(1));
    CHECK(base.r_at.at(5) == same.r_at.at(5));
    CHECK(base.r_at.at(10) == same.r_at.at(10));
    CHECK(base.map_at_10 == same.map_at_10);
}

TEST_CASE("R@K is monotone in K and a query without relevants is a data bug") {
    Rng rng(63);
    const std::size_t n = 15;
    std::vector<Vec> scores(n, Vec(n));
    for (auto& row : scores) {
        for (double& v : row) v = rng.normal();
    }
    std::vector<std::vector<int>> rel(n);
    for (std::size_t q = 0; q < n; ++q) rel[q] = {static_cast<int>(rng.below(n))};
    const auto rep = retrieval_from_scores(scores, rel, "x");
    CHECK(rep.r_at.at(1) <= rep.r_at.at(5));
    CHECK(rep.r_at.at(5) <= rep.r_at.at(10));
    CHECK(rep.map_at_10 >= 0.0);
    CHECK(rep.map_at_10 <= 1.0);

    rel[3].clear();
    CHECK_THROWS_AS(retrieval_from_scores(scores, rel, "x"), DataError);
}

TEST_CASE("inclusion test rate: identical lists fail strictly, wider level-1 passes") {
    Rng rng(64);
    std::vector<DiagGaussian> lv4;
    for (int i = 0; i < 20; ++i) lv4.push_back(random_gaussian(4, rng));

    // Identical: H = 0 per pair; strict inequality counts it as a failure.
    CHECK(inclusion_test_rate(lv4, lv4) == 0.0);

    // Same means, 4x variance: level-1 covers level-4 everywhere.
    std::vector<DiagGaussian> lv1;
    for (const auto& z : lv4) {
        DiagGaussian wide = z;
        for (auto& lv : wide.log_var) lv += std::log(4.0);
        lv1.push_back(std::move(wide));
    }
    CHECK(inclusion_test_rate(lv1, lv4) == 100.0);

    lv1.pop_back();
    CHECK_THROWS_AS(inclusion_test_rate(lv1, lv4), std::invalid_argument);
}

TEST_CASE("make_root averages means and variances; idempotent on equal inputs") {
    Rng rng(65);
    const DiagGaussian z = random_gaussian(3, rng);
    const DiagGaussian same = make_root(z, z);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(same.mu[i] == doctest::Approx(z.mu[i]).epsilon(1e-15));
        CHECK(same.log_var[i] == doctest::Approx(z.log_var[i]).epsilon(1e-12));
    }

    const DiagGaussian a({0.0, 0.0}, {0.0, 0.0});
    const DiagGaussian b({2.0, 2.0}, {std::log(3.0), std::log(3.0)});
    const DiagGaussian root = make_root(a, b);
    CHECK(root.mu == Vec{1.0, 1.0});
    CHECK(std::exp(root.log_var[0]) == doctest::Approx(2.0));  // (1 + 3) / 2
}

TEST_CASE("most inclusive caption matches an exhaustive argmax") {
    Rng rng(66);
    const DiagGaussian query = random_gaussian(4, rng);
    std::vector<DiagGaussian> gallery;
    for (int i = 0; i < 3; ++i) gallery.push_back(random_gaussian(4, rng));
    const std::size_t best = most_inclusive_index(query, gallery);
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        CHECK(inclusion_score(query, gallery[best]) >=
              inclusion_score(query, gallery[i]));
    }
}

TEST_CASE("traversal: own-chain gallery gives precision 1") {
    Rng rng(67);
    const DiagGaussian query = random_gaussian(4, rng);
    std::vector<DiagGaussian> gallery;
    std::vector<GalleryLabel> labels;
    for (int k = 1; k <= 4; ++k) {
        gallery.push_back(random_gaussian(4, rng));
        labels.push_back({7, k});
    }
    const DiagGaussian root = random_gaussian(4, rng);
    const TraversalEntry e = traverse(query, gallery, labels, root, 50,
                                      SimilarityKind::csd, 7);
    CHECK(e.precision == 1.0);
    CHECK(e.raw_trace.size() == 50);
    CHECK(e.r_at_1 > 0.0);
}

TEST_CASE("traversal with two points retrieves at the endpoints only") {
    // Gallery crafted so the query end picks caption A and the root end
    // picks caption B.
    const DiagGaussian query({10.0, 0.0}, {0.0, 0.0});
    const DiagGaussian root({-10.0, 0.0}, {0.0, 0.0});
    std::vector<DiagGaussian> gallery{DiagGaussian({10.0, 0.0}, {0.0, 0.0}),
                                      DiagGaussian({-10.0, 0.0}, {0.0, 0.0})};
    std::vector<GalleryLabel> labels{{1, 4}, {1, 1}};
    const TraversalEntry e =
        traverse(query, gallery, labels, root, 2, SimilarityKind::csd, 1);
    REQUIRE(e.raw_trace.size() == 2);
    CHECK(e.raw_trace[0] == 0);
    CHECK(e.raw_trace[1] == 1);
    CHECK(e.retrieved.size() == 2);
    CHECK(e.lv1_found);
    CHECK(e.r_at_1 == doctest::Approx(0.5));  // 2 of 4 chain levels found
}

TEST_CASE("traversal metrics equal a brute-force recomputation from traces") {
    Rng rng(68);
    for (int trial = 0; trial < 50; ++trial) {
        const int item_id = 3;
        std::vector<DiagGaussian> gallery;
        std::vector<GalleryLabel> labels;
        for (int item = 0; item < 4; ++item) {
            for (int k = 1; k <= 4; ++k) {
                gallery.push_back(random_gaussian(3, rng));
                labels.push_back({item, k});
            }
        }
        const DiagGaussian query = random_gaussian(3, rng);
        const DiagGaussian root = random_gaussian(3, rng);
        const TraversalEntry e =
            traverse(query, gallery, labels, root, 20, SimilarityKind::csd, item_id);

        // Recompute from the raw trace.
        std::set<int> distinct(e.raw_trace.begin(), e.raw_trace.end());
        std::set<int> own_levels;
        int own = 0;
        bool lv1 = false;
        for (int g : distinct) {
            if (labels[static_cast<std::size_t>(g)].item_id == item_id) {
                ++own;
                own_levels.insert(labels[static_cast<std::size_t>(g)].level);
                if (labels[static_cast<std::size_t>(g)].level == 1) lv1 = true;
            }
        }
        CHECK(e.precision ==
              doctest::Approx(static_cast<double>(own) / distinct.size()));
        CHECK(e.r_at_1 == doctest::Approx(own_levels.size() / 4.0));
        CHECK(e.lv1_found == lv1);
    }
}

TEST_CASE("traversal ties break toward the lowest gallery index") {
    const DiagGaussian query({1.0}, {0.0});
    const DiagGaussian root({1.0}, {0.0});
    const DiagGaussian cap({0.5}, {0.0});
    std::vector<DiagGaussian> gallery{cap, cap, cap};
    std::vector<GalleryLabel> labels{{0, 1}, {1, 1}, {2, 1}};
    const TraversalEntry e =
        traverse(query, gallery, labels, root, 5, SimilarityKind::csd, 0);
    for (int g : e.raw_trace) CHECK(g == 0);
}

TEST_CASE("uncertainty profile: exact means and empty-group omission") {
    const DiagGaussian a({0.0}, {std::log(2.0)});   // total variance 2
    const DiagGaussian b({0.0}, {std::log(4.0)});   // 4
    const DiagGaussian c({0.0}, {std::log(10.0)});  // 10

    SUBCASE("single group") {
        const auto rows = uncertainty_profile({a, b}, {"g", "g"});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].mean_total_variance == doctest::Approx(3.0));
        CHECK(rows[0].count == 2);
    }
    SUBCASE("two groups with hand-set variances") {
        const auto rows = uncertainty_profile({a, b, c}, {"x", "x", "y"});
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].group == "x");
        CHECK(rows[0].mean_total_variance == doctest::Approx(3.0));
        CHECK(rows[1].group == "y");
        CHECK(rows[1].mean_total_variance == doctest::Approx(10.0));
    }
    SUBCASE("expected ordering with an empty group omitted") {
        const auto rows =
            uncertainty_profile({a, c}, {"x", "y"}, {"y", "missing", "x"});
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].group == "y");
        CHECK(rows[1].group == "x");
    }
}

TEST_CASE("embedding dumps round-trip through JSONL") {
    namespace fs = std::filesystem;
    Rng rng(69);
    std::vector<EmbeddingRecord> records;
    for (int i = 0; i < 5; ++i) {
        records.push_back({i, i % 4, random_gaussian(3, rng)});
    }
    const std::string path =
        (fs::temp_directory_path() / "prolap_emb_test.jsonl").string();
    save_embeddings_jsonl(records, path);
    const auto back = load_embeddings_jsonl(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].id == records[i].id);
        CHECK(back[i].level == records[i].level);
        CHECK(back[i].z.mu == records[i].z.mu);
        CHECK(back[i].z.log_var == records[i].z.log_var);
    }
    fs::remove(path);
}
