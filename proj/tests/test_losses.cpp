#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prolap/fdcheck.hpp"
#include "prolap/losses.hpp"
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

// Gaussian whose corrected self-similarity is a chosen value: put everything
// in the first mean coordinate, variances negligible.
DiagGaussian point_embedding(double first_coord, std::size_t d) {
    Vec mu(d, 0.0), lv(d, -800.0);
    mu[0] = first_coord;
    return DiagGaussian(std::move(mu), std::move(lv));
}

}  // namespace

TEST_CASE("ppcl at the decision boundary is log 2") {
    // s = 0, alpha arbitrary, beta = 0 -> softplus(0).
    const DiagGaussian a = point_embedding(0.0, 2);
    const DiagGaussian t = point_embedding(1.0, 2);
    const SimilarityParams p{1.0, 0.0};
    CHECK(ppcl(a, t, 1, p) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(ppcl(a, t, -1, p) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ppcl with a confident positive pair is tiny") {
    // y=+1, alpha=1, beta=0, s=10 -> softplus(-10).
    const DiagGaussian a = point_embedding(10.0, 2);
    const DiagGaussian t = point_embedding(1.0, 2);
    const SimilarityParams p{1.0, 0.0};
    CHECK(ppcl(a, t, 1, p) == doctest::Approx(softplus(-10.0)).epsilon(1e-12));
    CHECK(ppcl(a, t, 1, p) == doctest::Approx(4.54e-5).epsilon(1e-2));
}

TEST_CASE("ppcl matches an extended-precision logistic evaluation") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.below(6);
        const DiagGaussian a = random_gaussian(d, rng);
        const DiagGaussian t = random_gaussian(d, rng);
        const SimilarityParams p{rng.uniform(0.3, 5.0), rng.uniform(-3.0, 3.0)};
        const int y = rng.bernoulli(0.5) ? 1 : -1;
        const long double s = csd_similarity(a, t);
        const long double u = static_cast<long double>(y) * (-p.alpha * s + p.beta);
        const long double oracle = -std::log(1.0L / (1.0L + std::exp(u)));
        CHECK(ppcl(a, t, y, p) ==
              doctest::Approx(static_cast<double>(oracle)).epsilon(1e-13));
    }
}

TEST_CASE("ppcl rejects labels outside {+1,-1} and non-positive alpha") {
    Rng rng(8);
    const DiagGaussian a = random_gaussian(3, rng);
    const DiagGaussian t = random_gaussian(3, rng);
    CHECK_THROWS_AS(ppcl(a, t, 0, SimilarityParams{1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(ppcl(a, t, 2, SimilarityParams{1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(ppcl(a, t, 1, SimilarityParams{-1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("ppcl monotonicity in the similarity") {
    // y=+1 strictly decreasing in s; y=-1 strictly increasing.
    const SimilarityParams p{2.0, 0.5};
    double prev_pos = 1e300, prev_neg = -1e300;
    for (double s = -3.0; s <= 3.0; s += 0.25) {
        const DiagGaussian a = point_embedding(s, 2);
        const DiagGaussian t = point_embedding(1.0, 2);
        const double lp = ppcl(a, t, 1, p);
        const double ln = ppcl(a, t, -1, p);
        CHECK(lp < prev_pos);
        CHECK(ln > prev_neg);
        prev_pos = lp;
        prev_neg = ln;
    }
}

TEST_CASE("inclusion loss: identical arguments give log 2, ordering follows H") {
    Rng rng(9);
    const DiagGaussian z = random_gaussian(4, rng);
    CHECK(inclusion_loss(z, z, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // The 1-D case with H = (1/2) ln(8/3) ~ 0.49041 (value confirmed by the
    // quadrature oracle in the geometry tests).
    const DiagGaussian z1({0.0}, {0.0});
    const DiagGaussian z2({0.0}, {std::log(4.0)});
    const double h = 0.5 * std::log(8.0 / 3.0);
    CHECK(inclusion_loss(z1, z2, 1.0) == doctest::Approx(softplus(-h)).epsilon(1e-12));
    CHECK(inclusion_loss(z1, z2, 1.0) == doctest::Approx(0.477707).epsilon(1e-5));
    // Swapped arguments: strictly larger (H flips sign).
    CHECK(inclusion_loss(z2, z1, 1.0) == doctest::Approx(softplus(h)).epsilon(1e-12));
    CHECK(inclusion_loss(z2, z1, 1.0) == doctest::Approx(0.968122).epsilon(1e-5));
    CHECK(inclusion_loss(z2, z1, 1.0) > inclusion_loss(z1, z2, 1.0));
}

TEST_CASE("hierarchical inclusion: identical entries and the L=1 reduction") {
    Rng rng(10);
    const DiagGaussian z = random_gaussian(3, rng);

    SUBCASE("all entries identical -> L log 2") {
        for (std::size_t levels : {1u, 2u, 3u}) {
            const GaussianChain chain(levels + 1, z);
            CHECK(hier_inclusion_loss(chain, 1.0) ==
                  doctest::Approx(levels * std::log(2.0)).epsilon(1e-12));
        }
    }
    SUBCASE("L=1 is exactly one inclusion term") {
        const DiagGaussian outer = random_gaussian(3, rng);
        const GaussianChain chain{outer, z};
        CHECK(hier_inclusion_loss(chain, 1.3) ==
              doctest::Approx(inclusion_loss(z, outer, 1.3)).epsilon(1e-12));
    }
    SUBCASE("L=3 random chain equals the sum of the pairwise terms") {
        GaussianChain chain;
        for (int i = 0; i < 4; ++i) chain.push_back(random_gaussian(3, rng));
        double expected = 0.0;
        for (int i = 0; i < 3; ++i) {
            expected += inclusion_loss(chain[i + 1], chain[i], 0.8);
        }
        CHECK(hier_inclusion_loss(chain, 0.8) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("chains shorter than 2 are rejected") {
        CHECK_THROWS_AS(hier_inclusion_loss(GaussianChain{z}, 1.0), std::invalid_argument);
    }
}

TEST_CASE("mask repulsive loss: same-sample constant and single-level case") {
    Rng rng(11);
    const std::size_t d = 3;

    SUBCASE("same sample, L=3 -> 2 log 2 with zero gradients") {
        GaussianChain zp, zq;
        for (int i = 0; i < 4; ++i) {
            zp.push_back(random_gaussian(d, rng));
            zq.push_back(random_gaussian(d, rng));
        }
        const SimilarityParams p{2.0, -1.0};
        CHECK(mask_repulsive_loss(zp, zq, true, p) ==
              doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
        ChainGrad dp = make_chain_grad(zp);
        ChainGrad dq = make_chain_grad(zq);
        double d_alpha = 0.0, d_beta = 0.0;
        mask_repulsive_loss_grad(zp, zq, true, p, 1.0, dp, dq, d_alpha, d_beta);
        CHECK(d_alpha == 0.0);
        CHECK(d_beta == 0.0);
        for (const auto& g : dp) {
            for (double v : g.d_mu) CHECK(v == 0.0);
            for (double v : g.d_log_var) CHECK(v == 0.0);
        }
    }

    SUBCASE("L=2, y=-1, alpha=1, beta=0, s=0 -> log 2") {
        // Intermediate level embeddings orthogonal with negligible variance.
        GaussianChain zp{point_embedding(1.0, 2), point_embedding(1.0, 2),
                         point_embedding(1.0, 2)};
        GaussianChain zq{point_embedding(1.0, 2), DiagGaussian({0.0, 1.0}, {-800.0, -800.0}),
                         point_embedding(1.0, 2)};
        const SimilarityParams p{1.0, 0.0};
        CHECK(mask_repulsive_loss(zp, zq, false, p) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }

    SUBCASE("random L=3 pair matches a per-level softplus sum") {
        GaussianChain zp, zq;
        for (int i = 0; i < 4; ++i) {
            zp.push_back(random_gaussian(d, rng));
            zq.push_back(random_gaussian(d, rng));
        }
        const SimilarityParams p{1.7, 0.4};
        double expected = 0.0;
        for (int i = 1; i < 3; ++i) {
            expected += softplus(p.alpha * csd_similarity(zp[i], zq[i]) + p.beta);
        }
        CHECK(mask_repulsive_loss(zp, zq, false, p) ==
              doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("repulsion fires on similar pairs, not on dissimilar ones") {
        // Margin behavior: softplus(alpha s + beta) increasing in s.
        GaussianChain close_p{point_embedding(1.0, 2), point_embedding(1.0, 2),
                              point_embedding(1.0, 2)};
        GaussianChain far_q{point_embedding(1.0, 2), point_embedding(-1.0, 2),
                            point_embedding(1.0, 2)};
        const SimilarityParams p{2.0, -1.0};
        CHECK(mask_repulsive_loss(close_p, close_p, false, p) >
              mask_repulsive_loss(close_p, far_q, false, p));
    }

    SUBCASE("chain length mismatch is an error") {
        GaussianChain zp(3, random_gaussian(d, rng));
        GaussianChain zq(4, random_gaussian(d, rng));
        CHECK_THROWS_AS(mask_repulsive_loss(zp, zq, false, SimilarityParams{1.0, 0.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("mask repulsive stop-gradient: analytic zero where finite differences are not") {
    const int verified = check_mask_repulsive_stop_gradient(20, 424242);
    CHECK(verified > 0);
}

TEST_CASE("intra-modal objective: zero weights and term-by-term oracle") {
    Rng rng(12);
    const std::size_t d = 3, levels = 2;

    auto make_chain = [&] {
        GaussianChain c;
        for (std::size_t i = 0; i <= levels; ++i) c.push_back(random_gaussian(d, rng));
        return c;
    };

    SUBCASE("all weights zero -> 0") {
        std::vector<GaussianChain> chains{make_chain(), make_chain()};
        const LossWeights w{0.0, 0.0, 0.0, 0.0, 1.0};
        CHECK(intra_modal_loss(chains, SimilarityParams{1.0, 0.0}, w) == 0.0);
    }

    SUBCASE("single-sample batch: hier + VIB + the self-pair constant") {
        std::vector<GaussianChain> chains{make_chain()};
        LossWeights w;
        w.lambda1 = 0.3;
        w.lambda2 = 0.11;
        w.gamma = 0.07;
        w.c = 1.0;
        const SimilarityParams p{1.0, 0.0};
        const double expected = w.lambda1 * hier_inclusion_loss(chains[0], w.c) +
                                w.lambda2 * (levels - 1) * std::log(2.0) +
                                w.gamma * kl_to_standard(chains[0].back());
        CHECK(intra_modal_loss(chains, p, w) == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("3-sample batch with paper-style weights matches independent summation") {
        std::vector<GaussianChain> chains{make_chain(), make_chain(), make_chain()};
        LossWeights w;
        w.lambda1 = 5e-3;
        w.lambda2 = 1e-4;
        w.gamma = 1e-5;
        w.c = 1.0;
        const SimilarityParams p{1.4, -0.2};
        double expected = 0.0;
        for (std::size_t s = 0; s < 3; ++s) {
            expected += w.lambda1 * hier_inclusion_loss(chains[s], w.c);
            for (std::size_t q = 0; q < 3; ++q) {
                expected += w.lambda2 * mask_repulsive_loss(chains[s], chains[q], s == q, p);
            }
            expected += w.gamma * kl_to_standard(chains[s].back());
        }
        CHECK(intra_modal_loss(chains, p, w) == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("empty batch is an error") {
        CHECK_THROWS_AS(intra_modal_loss({}, SimilarityParams{1.0, 0.0}, LossWeights{}),
                        std::invalid_argument);
    }
}

namespace {

PairBatch small_batch(Rng& rng, std::size_t d, std::size_t levels, std::size_t b) {
    PairBatch pb;
    for (std::size_t s = 0; s < b; ++s) {
        GaussianChain ca, ct;
        for (std::size_t i = 0; i <= levels; ++i) {
            ca.push_back(random_gaussian(d, rng));
            ct.push_back(random_gaussian(d, rng));
        }
        pb.audio.chains.push_back(std::move(ca));
        pb.text.chains.push_back(std::move(ct));
        pb.audio.contrast_of.push_back(-1);
        pb.text.contrast_of.push_back(-1);
    }
    pb.y.assign(b, std::vector<int>(b, -1));
    for (std::size_t i = 0; i < b; ++i) pb.y[i][i] = 1;
    return pb;
}

}  // namespace

TEST_CASE("total objective: single-pair reduction and term-by-term oracle") {
    Rng rng(13);

    SUBCASE("B=1, all weights zero, s=0 -> log 2") {
        PairBatch pb;
        pb.audio.chains = {{point_embedding(1.0, 2), point_embedding(1.0, 2)}};
        pb.text.chains = {{DiagGaussian({0.0, 1.0}, {-800.0, -800.0}),
                           DiagGaussian({0.0, 1.0}, {-800.0, -800.0})}};
        pb.audio.contrast_of = {-1};
        pb.text.contrast_of = {-1};
        pb.y = {{1}};
        const LossWeights w{0.0, 0.0, 0.0, 0.0, 1.0};
        const LossComponents c = total_loss(pb, SimilarityParams{1.0, 0.0}, w);
        CHECK(c.total() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }

    SUBCASE("B=2 equals the sum of individually computed terms") {
        const std::size_t d = 3, levels = 2, b = 2;
        PairBatch pb = small_batch(rng, d, levels, b);
        LossWeights w;
        w.lambda1 = 0.2;
        w.lambda2 = 0.15;
        w.lambda3 = 0.4;
        w.gamma = 0.05;
        w.c = 1.1;
        const SimilarityParams p{1.3, -0.3};

        double expected = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                expected += ppcl(pb.audio.chains[i].back(), pb.text.chains[j].back(),
                                 pb.y[i][j], p);
            }
        }
        expected += intra_modal_loss(pb.audio.chains, p, w);
        expected += intra_modal_loss(pb.text.chains, p, w);
        for (std::size_t i = 0; i < b; ++i) {
            expected += w.lambda3 * inclusion_loss(pb.audio.chains[i].back(),
                                                   pb.text.chains[i].back(), w.c);
        }
        const LossComponents c = total_loss(pb, p, w);
        CHECK(c.total() == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("batch size mismatch is an error") {
        PairBatch pb = small_batch(rng, 3, 2, 2);
        pb.text.chains.pop_back();
        pb.text.contrast_of.pop_back();
        CHECK_THROWS_AS(total_loss(pb, SimilarityParams{1.0, 0.0}, LossWeights{}),
                        std::invalid_argument);
    }

    SUBCASE("y entries outside {+1,-1} are rejected") {
        PairBatch pb = small_batch(rng, 3, 2, 2);
        pb.y[0][1] = 0;
        CHECK_THROWS_AS(total_loss(pb, SimilarityParams{1.0, 0.0}, LossWeights{}),
                        std::invalid_argument);
    }
}

TEST_CASE("total objective is bit-identical across thread counts") {
    Rng rng(14);
    PairBatch pb = small_batch(rng, 4, 2, 5);
    LossWeights w;
    w.lambda1 = 0.2;
    w.lambda2 = 0.3;
    w.lambda3 = 0.1;
    w.gamma = 0.05;
    const SimilarityParams p{1.2, -0.4};

    TotalGrad g1 = make_total_grad(pb);
    TotalGrad g4 = make_total_grad(pb);
    const LossComponents c1 = total_loss_grad(pb, p, w, g1, nullptr, 1);
    const LossComponents c4 = total_loss_grad(pb, p, w, g4, nullptr, 4);
    CHECK(c1.total() == c4.total());
    CHECK(c1.ppcl == c4.ppcl);
    CHECK(c1.mask_repulsive == c4.mask_repulsive);
    for (std::size_t s = 0; s < pb.audio.chains.size(); ++s) {
        for (std::size_t i = 0; i < pb.audio.chains[s].size(); ++i) {
            CHECK(g1.audio.chains[s][i].d_mu == g4.audio.chains[s][i].d_mu);
            CHECK(g1.text.chains[s][i].d_log_var == g4.text.chains[s][i].d_log_var);
        }
    }
    CHECK(g1.d_alpha == g4.d_alpha);
    CHECK(g1.d_beta == g4.d_beta);
}

TEST_CASE("cross-modal inclusion direction: widening the text relaxes the loss") {
    // The matched-pair term pushes audio inside text: growing the text
    // variance around a fixed audio embedding lowers the term.
    Rng rng(15);
    const DiagGaussian audio = random_gaussian(3, rng);
    LossWeights w{0.0, 0.0, 1.0, 0.0, 1.0};
    double prev = 1e300;
    for (double bump = 0.0; bump < 2.0; bump += 0.25) {
        DiagGaussian text = audio;
        for (auto& lv : text.log_var) lv += bump;
        PairBatch pb;
        pb.audio.chains = {{audio, audio}};
        pb.text.chains = {{text, text}};
        pb.audio.contrast_of = {-1};
        pb.text.contrast_of = {-1};
        pb.y = {{1}};
        const double cross = total_loss(pb, SimilarityParams{1.0, 0.0}, w).inc_cross;
        if (bump > 0.0) CHECK(cross < prev);
        prev = cross;
    }
}

TEST_CASE("loss finite-difference sweep stays below the unit-test threshold") {
    const auto results = fd_check_losses(30, 987654);
    for (const auto& r : results) {
        INFO(r.loss, "/", r.arg);
        CHECK(r.worst < 1e-6);
    }
}

TEST_CASE("info_nce reference loss: diagonal dominance and gradient check") {
    Rng rng(16);
    const std::size_t b = 4, d = 5;
    std::vector<Vec> audio(b, Vec(d)), text(b, Vec(d));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            audio[i][k] = rng.normal();
            text[i][k] = audio[i][k] + 0.01 * rng.normal();
        }
    }
    // Near-identical matched pairs under a sharp scale: loss near zero.
    CHECK(info_nce_loss(audio, text, 50.0) < 0.1);

    // Shuffled pairs score much worse.
    std::vector<Vec> shuffled = text;
    std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
    CHECK(info_nce_loss(audio, shuffled, 50.0) > info_nce_loss(audio, text, 50.0));

    // Finite differences over means and the scale.
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            text[i][k] = rng.normal();
        }
    }
    double scale = 3.0;
    std::vector<Vec> d_audio(b), d_text(b);
    double d_scale = 0.0;
    info_nce_loss_grad(audio, text, scale, d_audio, d_text, d_scale);
    auto eval = [&] { return info_nce_loss(audio, text, scale); };
    double worst = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            worst = std::fmax(worst, grad_rel_err(d_audio[i][k],
                                                  central_diff(audio[i][k], kFdStep, eval)));
            worst = std::fmax(worst, grad_rel_err(d_text[i][k],
                                                  central_diff(text[i][k], kFdStep, eval)));
        }
    }
    worst = std::fmax(worst, grad_rel_err(d_scale, central_diff(scale, kFdStep, eval)));
    CHECK(worst < 1e-6);
}
