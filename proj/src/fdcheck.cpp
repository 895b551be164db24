#include "prolap/fdcheck.hpp"

#include <cmath>
#include <map>

#include "prolap/pipeline.hpp"
#include "prolap/rng.hpp"

namespace prolap {

double grad_rel_err(double analytic, double numeric) {
    const double denom =
        std::fmax(1.0, std::fmax(std::fabs(analytic), std::fabs(numeric)));
    return std::fabs(analytic - numeric) / denom;
}

double central_diff(double& slot, double h,
                    const std::function<double()>& eval) {
    const double saved = slot;
    slot = saved + h;
    const double plus = eval();
    slot = saved - h;
    const double minus = eval();
    slot = saved;
    return (plus - minus) / (2.0 * h);
}

namespace {

// Accumulates worst-case errors keyed by (loss, argument).
struct Worst {
    std::map<std::pair<std::string, std::string>, double> table;

    void update(const std::string& loss, const std::string& arg, double analytic,
                double numeric) {
        double& w = table[{loss, arg}];
        w = std::fmax(w, grad_rel_err(analytic, numeric));
    }

    std::vector<FdResult> results() const {
        std::vector<FdResult> out;
        for (const auto& [key, worst] : table) {
            out.push_back({key.first, key.second, worst});
        }
        return out;
    }
};

DiagGaussian random_gaussian(std::size_t d, Rng& rng) {
    Vec mu(d), lv(d);
    for (std::size_t i = 0; i < d; ++i) {
        mu[i] = rng.normal();
        lv[i] = rng.uniform(-2.0, 1.0);
    }
    return DiagGaussian(std::move(mu), std::move(lv));
}

SimilarityParams random_sim(Rng& rng) {
    return SimilarityParams{rng.uniform(0.5, 3.0), rng.uniform(-2.0, 2.0)};
}

// Sweeps both fields of one DiagGaussian against eval().
void sweep_gaussian(Worst& worst, const std::string& loss, const std::string& arg,
                    DiagGaussian& z, const GaussGrad& analytic,
                    const std::function<double()>& eval) {
    for (std::size_t i = 0; i < z.dim(); ++i) {
        worst.update(loss, arg + ".mu", analytic.d_mu[i],
                     central_diff(z.mu[i], kFdStep, eval));
        worst.update(loss, arg + ".log_var", analytic.d_log_var[i],
                     central_diff(z.log_var[i], kFdStep, eval));
    }
}

// ---- frozen-uncertainty evaluation ----
//
// The repulsive loss stops gradients through the variances: the function
// its gradient belongs to carries the variance contributions as constants
// captured at the linearization point. The finite-difference probes for
// the intra-modal and total objectives therefore evaluate the repulsive
// term with those traces frozen; everything else is differentiated through.

using FrozenTraces = std::vector<std::vector<double>>;  // [sample][level]

FrozenTraces capture_traces(const std::vector<GaussianChain>& chains) {
    FrozenTraces tr(chains.size());
    for (std::size_t s = 0; s < chains.size(); ++s) {
        tr[s].resize(chains[s].size());
        for (std::size_t i = 0; i < chains[s].size(); ++i) {
            tr[s][i] = chains[s][i].total_variance();
        }
    }
    return tr;
}

double frozen_mr_sum(const std::vector<GaussianChain>& chains,
                     const FrozenTraces& traces, const SimilarityParams& p) {
    const std::size_t b = chains.size();
    const std::size_t levels = chains.front().size() - 1;
    double loss = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t q = 0; q < b; ++q) {
            if (s == q) {
                loss += levels >= 2 ? static_cast<double>(levels - 1) * kLn2 : 0.0;
                continue;
            }
            for (std::size_t i = 1; i < levels; ++i) {
                const double sim = dot(chains[s][i].mu, chains[q][i].mu) -
                                   0.5 * (traces[s][i] + traces[q][i]);
                loss += softplus(p.alpha * sim + p.beta);
            }
        }
    }
    return loss;
}

}  // namespace

std::vector<FdResult> fd_check_losses(int trials, std::uint64_t seed) {
    Rng rng(seed);
    Worst worst;

    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t d = 1 + rng.below(5);

        // ---- Eq. 2: pairwise sigmoid loss, both labels ----
        {
            DiagGaussian a = random_gaussian(d, rng);
            DiagGaussian t = random_gaussian(d, rng);
            SimilarityParams p = random_sim(rng);
            for (int y : {1, -1}) {
                GaussGrad da, dt;
                da.resize(d);
                dt.resize(d);
                double d_alpha = 0.0, d_beta = 0.0;
                ppcl_grad(a, t, y, p, da, dt, d_alpha, d_beta);
                auto eval = [&] { return ppcl(a, t, y, p); };
                sweep_gaussian(worst, "ppcl", "a", a, da, eval);
                sweep_gaussian(worst, "ppcl", "t", t, dt, eval);
                worst.update("ppcl", "alpha", d_alpha,
                             central_diff(p.alpha, kFdStep, eval));
                worst.update("ppcl", "beta", d_beta,
                             central_diff(p.beta, kFdStep, eval));
            }
        }

        // ---- Eq. 4: inclusion loss ----
        {
            DiagGaussian z1 = random_gaussian(d, rng);
            DiagGaussian z2 = random_gaussian(d, rng);
            const double c = rng.uniform(0.5, 2.0);
            GaussGrad d1, d2;
            d1.resize(d);
            d2.resize(d);
            inclusion_loss_grad(z1, z2, c, 1.0, d1, d2);
            auto eval = [&] { return inclusion_loss(z1, z2, c); };
            sweep_gaussian(worst, "inclusion_loss", "z1", z1, d1, eval);
            sweep_gaussian(worst, "inclusion_loss", "z2", z2, d2, eval);
        }

        // ---- Eq. 6: hierarchical inclusion over a random-length chain ----
        {
            const std::size_t levels = 1 + rng.below(3);
            GaussianChain chain;
            for (std::size_t i = 0; i <= levels; ++i) {
                chain.push_back(random_gaussian(d, rng));
            }
            const double c = rng.uniform(0.5, 2.0);
            ChainGrad dc = make_chain_grad(chain);
            hier_inclusion_loss_grad(chain, c, 1.0, dc);
            auto eval = [&] { return hier_inclusion_loss(chain, c); };
            for (std::size_t i = 0; i <= levels; ++i) {
                sweep_gaussian(worst, "hier_inclusion_loss",
                               "chain[" + std::to_string(i) + "]", chain[i], dc[i],
                               eval);
            }
        }

        // ---- Eq. 7: mask repulsive (different-sample branch). Mean and
        // scalar gradients flow; log_var is covered by the dedicated
        // stop-gradient check. ----
        {
            const std::size_t levels = 2 + rng.below(2);
            GaussianChain zp, zq;
            for (std::size_t i = 0; i <= levels; ++i) {
                zp.push_back(random_gaussian(d, rng));
                zq.push_back(random_gaussian(d, rng));
            }
            SimilarityParams p = random_sim(rng);
            ChainGrad dp = make_chain_grad(zp);
            ChainGrad dq = make_chain_grad(zq);
            double d_alpha = 0.0, d_beta = 0.0;
            mask_repulsive_loss_grad(zp, zq, false, p, 1.0, dp, dq, d_alpha, d_beta);
            auto eval = [&] { return mask_repulsive_loss(zp, zq, false, p); };
            for (std::size_t i = 0; i <= levels; ++i) {
                for (std::size_t k = 0; k < d; ++k) {
                    worst.update("mask_repulsive_loss", "zp.mu", dp[i].d_mu[k],
                                 central_diff(zp[i].mu[k], kFdStep, eval));
                    worst.update("mask_repulsive_loss", "zq.mu", dq[i].d_mu[k],
                                 central_diff(zq[i].mu[k], kFdStep, eval));
                }
            }
            worst.update("mask_repulsive_loss", "alpha", d_alpha,
                         central_diff(p.alpha, kFdStep, eval));
            worst.update("mask_repulsive_loss", "beta", d_beta,
                         central_diff(p.beta, kFdStep, eval));
        }

        // ---- Eq. 8: intra-modal objective, every entry, against the
        // frozen-uncertainty evaluation ----
        {
            const std::size_t levels = 2;
            const std::size_t batch = 2 + rng.below(2);
            std::vector<GaussianChain> chains(batch);
            for (auto& ch : chains) {
                for (std::size_t i = 0; i <= levels; ++i) {
                    ch.push_back(random_gaussian(d, rng));
                }
            }
            SimilarityParams p = random_sim(rng);
            LossWeights w;
            w.lambda1 = rng.uniform(0.1, 1.0);
            w.lambda2 = rng.uniform(0.1, 1.0);
            w.lambda3 = 0.0;
            w.gamma = rng.uniform(0.1, 1.0);
            w.c = rng.uniform(0.5, 2.0);
            std::vector<ChainGrad> dc(batch);
            for (std::size_t s = 0; s < batch; ++s) dc[s] = make_chain_grad(chains[s]);
            double d_alpha = 0.0, d_beta = 0.0;
            intra_modal_loss_grad(chains, p, w, dc, d_alpha, d_beta);

            const FrozenTraces traces = capture_traces(chains);
            LossWeights w_no_mr = w;
            w_no_mr.lambda2 = 0.0;
            auto eval = [&] {
                return intra_modal_loss(chains, p, w_no_mr) +
                       w.lambda2 * frozen_mr_sum(chains, traces, p);
            };
            for (std::size_t s = 0; s < batch; ++s) {
                for (std::size_t i = 0; i <= levels; ++i) {
                    sweep_gaussian(worst, "intra_modal_loss",
                                   "chain." + std::string(i == levels ? "raw" : "masked"),
                                   chains[s][i], dc[s][i], eval);
                }
            }
            worst.update("intra_modal_loss", "alpha", d_alpha,
                         central_diff(p.alpha, kFdStep, eval));
            worst.update("intra_modal_loss", "beta", d_beta,
                         central_diff(p.beta, kFdStep, eval));
        }

        // ---- Eq. 9: total objective over a small paired batch, every
        // embedding entry plus the scalars ----
        {
            const std::size_t levels = 2;
            const std::size_t batch = 2;
            PairBatch pb;
            for (std::size_t s = 0; s < batch; ++s) {
                GaussianChain ca, ct;
                for (std::size_t i = 0; i <= levels; ++i) {
                    ca.push_back(random_gaussian(d, rng));
                    ct.push_back(random_gaussian(d, rng));
                }
                pb.audio.chains.push_back(std::move(ca));
                pb.text.chains.push_back(std::move(ct));
            }
            // Sample 0 contrasts through a dedicated masked view; the text
            // side additionally routes its cross-modal term through a
            // separate per-step view.
            pb.audio.contrast_views.push_back(random_gaussian(d, rng));
            pb.text.contrast_views.push_back(random_gaussian(d, rng));
            pb.text.contrast_views.push_back(random_gaussian(d, rng));
            pb.audio.contrast_of = {0, -1};
            pb.text.contrast_of = {0, -1};
            pb.text.cross_of = {1, -1};
            pb.y = {{1, -1}, {-1, 1}};

            SimilarityParams p = random_sim(rng);
            LossWeights w;
            w.lambda1 = rng.uniform(0.1, 0.6);
            w.lambda2 = rng.uniform(0.1, 0.6);
            w.lambda3 = rng.uniform(0.1, 0.6);
            w.gamma = rng.uniform(0.1, 0.6);
            w.c = rng.uniform(0.5, 2.0);

            TotalGrad tg = make_total_grad(pb);
            total_loss_grad(pb, p, w, tg);

            const FrozenTraces audio_tr = capture_traces(pb.audio.chains);
            const FrozenTraces text_tr = capture_traces(pb.text.chains);
            LossWeights w_no_mr = w;
            w_no_mr.lambda2 = 0.0;
            auto eval = [&] {
                return total_loss(pb, p, w_no_mr).total() +
                       w.lambda2 * (frozen_mr_sum(pb.audio.chains, audio_tr, p) +
                                    frozen_mr_sum(pb.text.chains, text_tr, p));
            };
            for (std::size_t s = 0; s < batch; ++s) {
                for (std::size_t i = 0; i <= levels; ++i) {
                    sweep_gaussian(worst, "total_loss", "audio_chain",
                                   pb.audio.chains[s][i], tg.audio.chains[s][i], eval);
                    sweep_gaussian(worst, "total_loss", "text_chain",
                                   pb.text.chains[s][i], tg.text.chains[s][i], eval);
                }
            }
            sweep_gaussian(worst, "total_loss", "audio_contrast",
                           pb.audio.contrast_views[0], tg.audio.contrast[0], eval);
            sweep_gaussian(worst, "total_loss", "text_contrast",
                           pb.text.contrast_views[0], tg.text.contrast[0], eval);
            sweep_gaussian(worst, "total_loss", "text_cross",
                           pb.text.contrast_views[1], tg.text.contrast[1], eval);
            worst.update("total_loss", "alpha", tg.d_alpha,
                         central_diff(p.alpha, kFdStep, eval));
            worst.update("total_loss", "beta", tg.d_beta,
                         central_diff(p.beta, kFdStep, eval));
        }
    }
    return worst.results();
}

namespace {

EncoderArch random_arch(Rng& rng) {
    EncoderArch a;
    a.d_in = 3 + static_cast<int>(rng.below(4));
    a.hidden = 4 + static_cast<int>(rng.below(5));
    a.n_layers = 1 + static_cast<int>(rng.below(2));
    a.d_out = 2 + static_cast<int>(rng.below(3));
    return a;
}

}  // namespace

std::vector<FdResult> fd_check_encoder(int trials, std::uint64_t seed) {
    Rng rng(seed);
    Worst worst;
    for (int trial = 0; trial < trials; ++trial) {
        const EncoderArch arch = random_arch(rng);
        EncoderParams enc = make_encoder(arch, rng);
        Vec x(static_cast<std::size_t>(arch.d_in));
        for (double& v : x) v = rng.normal();
        GaussGrad upstream;
        upstream.resize(static_cast<std::size_t>(arch.d_out));
        for (auto& v : upstream.d_mu) v = rng.normal();
        for (auto& v : upstream.d_log_var) v = rng.normal();

        // Scalar probe upstream . (mu, log_var); its parameter gradient is
        // exactly what backward returns for this upstream.
        auto eval = [&] {
            const DiagGaussian z = encoder_forward(enc, x);
            return dot(upstream.d_mu, z.mu) + dot(upstream.d_log_var, z.log_var);
        };

        ForwardTape tape;
        encoder_forward(enc, x, &tape);
        Vec grad(enc.size(), 0.0);
        const Vec d_input = encoder_backward(enc, tape, upstream, grad);

        for (std::size_t i = 0; i < enc.size(); ++i) {
            worst.update("encoder", "params", grad[i],
                         central_diff(enc.flat[i], kFdStep, eval));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            worst.update("encoder", "input", d_input[i],
                         central_diff(x[i], kFdStep, eval));
        }
    }
    return worst.results();
}

std::vector<FdResult> fd_check_end2end(int trials, std::uint64_t seed) {
    Rng rng(seed);
    Worst worst;
    for (int trial = 0; trial < trials; ++trial) {
        EncoderArch arch;
        arch.d_in = 4 + static_cast<int>(rng.below(3));
        arch.hidden = 5;
        arch.n_layers = 1;
        arch.d_out = 3;
        EncoderParams audio_enc = make_encoder(arch, rng);
        EncoderParams text_enc = make_encoder(arch, rng);
        // Nonzero mask tokens so their gradients are live.
        for (auto& v : audio_enc.mask_token()) v = 0.3 * rng.normal();
        for (auto& v : text_enc.mask_token()) v = 0.3 * rng.normal();

        const std::size_t d_in = static_cast<std::size_t>(arch.d_in);
        const std::size_t levels = 2;
        BatchInputs in;
        in.audio_chain = build_chain(d_in, levels, {0.5}, rng);
        in.text_chain = build_chain(d_in, levels, {0.5}, rng);
        in.n_masked = 1;
        in.audio_contrast_mask = draw_mask(d_in, 0.75, rng);
        in.text_contrast_mask = draw_mask(d_in, 0.75, rng);
        for (std::size_t s = 0; s < 2; ++s) {
            Vec xa(d_in), xt(d_in), xp(d_in);
            for (double& v : xa) v = rng.normal();
            for (double& v : xt) v = rng.normal();
            for (double& v : xp) v = rng.normal();
            in.audio_inputs.push_back(std::move(xa));
            in.text_inputs.push_back(std::move(xt));
            in.text_ppcl_inputs.push_back(std::move(xp));
        }
        in.y = {{1, -1}, {-1, 1}};

        SimilarityParams sim = random_sim(rng);
        LossWeights w;
        w.lambda1 = rng.uniform(0.1, 0.5);
        w.lambda2 = rng.uniform(0.1, 0.5);
        w.lambda3 = rng.uniform(0.1, 0.5);
        w.gamma = rng.uniform(0.1, 0.5);

        Vec d_audio(audio_enc.size(), 0.0), d_text(text_enc.size(), 0.0);
        double d_alpha = 0.0, d_beta = 0.0;
        batch_loss_grad(audio_enc, text_enc, sim, in, w, false, nullptr, 1,
                        d_audio, d_text, d_alpha, d_beta);

        // Frozen-uncertainty evaluation: the repulsive traces captured at the
        // linearization point do not move under the probe.
        const PairBatch base = encode_pair_batch(audio_enc, text_enc, in, false);
        const FrozenTraces audio_tr = capture_traces(base.audio.chains);
        const FrozenTraces text_tr = capture_traces(base.text.chains);
        LossWeights w_no_mr = w;
        w_no_mr.lambda2 = 0.0;
        auto eval = [&] {
            const PairBatch pb = encode_pair_batch(audio_enc, text_enc, in, false);
            return total_loss(pb, sim, w_no_mr).total() +
                   w.lambda2 * (frozen_mr_sum(pb.audio.chains, audio_tr, sim) +
                                frozen_mr_sum(pb.text.chains, text_tr, sim));
        };
        for (std::size_t i = 0; i < audio_enc.size(); ++i) {
            worst.update("end2end", "audio_params", d_audio[i],
                         central_diff(audio_enc.flat[i], kFdStep, eval));
        }
        for (std::size_t i = 0; i < text_enc.size(); ++i) {
            worst.update("end2end", "text_params", d_text[i],
                         central_diff(text_enc.flat[i], kFdStep, eval));
        }
        worst.update("end2end", "alpha", d_alpha,
                     central_diff(sim.alpha, kFdStep, eval));
        worst.update("end2end", "beta", d_beta,
                     central_diff(sim.beta, kFdStep, eval));
    }
    return worst.results();
}

int check_mask_repulsive_stop_gradient(int trials, std::uint64_t seed) {
    Rng rng(seed);
    int verified = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t d = 1 + rng.below(4);
        const std::size_t levels = 2 + rng.below(2);
        GaussianChain zp, zq;
        for (std::size_t i = 0; i <= levels; ++i) {
            zp.push_back(random_gaussian(d, rng));
            zq.push_back(random_gaussian(d, rng));
        }
        SimilarityParams p = random_sim(rng);
        ChainGrad dp = make_chain_grad(zp);
        ChainGrad dq = make_chain_grad(zq);
        double d_alpha = 0.0, d_beta = 0.0;
        mask_repulsive_loss_grad(zp, zq, false, p, 1.0, dp, dq, d_alpha, d_beta);
        auto eval = [&] { return mask_repulsive_loss(zp, zq, false, p); };

        bool saw_nonzero_fd = false;
        for (std::size_t i = 1; i < levels; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                if (dp[i].d_log_var[k] != 0.0 || dq[i].d_log_var[k] != 0.0) {
                    throw NumericError(
                        "mask_repulsive stop-gradient violated: analytic log_var "
                        "gradient is nonzero");
                }
                const double fd_p = central_diff(zp[i].log_var[k], kFdStep, eval);
                const double fd_q = central_diff(zq[i].log_var[k], kFdStep, eval);
                if (std::fabs(fd_p) > 1e-7 || std::fabs(fd_q) > 1e-7) {
                    saw_nonzero_fd = true;
                }
            }
        }
        if (saw_nonzero_fd) ++verified;
    }
    if (verified == 0) {
        throw NumericError(
            "mask_repulsive stop-gradient check never saw a nonzero finite "
            "difference; the probe is not exercising the uncertainty path");
    }
    return verified;
}

double worst_of(const std::vector<FdResult>& results) {
    double w = 0.0;
    for (const auto& r : results) w = std::fmax(w, r.worst);
    return w;
}

}  // namespace prolap
