#include "prolap/losses.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

namespace prolap {

void LossWeights::validate() const {
    const double vals[] = {lambda1, lambda2, lambda3, gamma};
    for (double v : vals) {
        if (!(std::isfinite(v) && v >= 0.0)) {
            throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
        }
    }
    if (!(std::isfinite(c) && c > 0.0)) {
        throw std::invalid_argument("LossWeights: c must be finite and > 0");
    }
}

ChainGrad make_chain_grad(const GaussianChain& chain) {
    ChainGrad g(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) g[i].resize(chain[i].dim());
    return g;
}

static void check_sim_params(const SimilarityParams& p) {
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha) || !std::isfinite(p.beta)) {
        throw std::invalid_argument("SimilarityParams: alpha must be positive and finite");
    }
}

// ---- PPCL ----

double ppcl(const DiagGaussian& a, const DiagGaussian& t, int y,
            const SimilarityParams& p) {
    check_sim_params(p);
    if (y != 1 && y != -1) {
        throw std::invalid_argument("ppcl: match label must be +1 or -1");
    }
    const double s = csd_similarity(a, t);
    return softplus(static_cast<double>(y) * (-p.alpha * s + p.beta));
}

double ppcl_grad(const DiagGaussian& a, const DiagGaussian& t, int y,
                 const SimilarityParams& p, GaussGrad& da, GaussGrad& dt,
                 double& d_alpha, double& d_beta) {
    check_sim_params(p);
    if (y != 1 && y != -1) {
        throw std::invalid_argument("ppcl: match label must be +1 or -1");
    }
    const double yd = static_cast<double>(y);
    // First pass for the value/sigmoid, then chain into the similarity grads.
    const double s = csd_similarity(a, t);
    const double u = yd * (-p.alpha * s + p.beta);
    const double sig = sigmoid(u);
    const double d_ds = sig * yd * (-p.alpha);
    csd_similarity_grad(a, t, d_ds, da, dt);
    d_alpha += sig * yd * (-s);
    d_beta += sig * yd;
    return softplus(u);
}

// ---- inclusion loss ----

double inclusion_loss(const DiagGaussian& z1, const DiagGaussian& z2, double c,
                      VarianceFloor* floor) {
    if (!(c > 0.0)) throw std::invalid_argument("inclusion_loss: c must be > 0");
    return softplus(-c * inclusion_score(z1, z2, floor));
}

double inclusion_loss_grad(const DiagGaussian& z1, const DiagGaussian& z2,
                           double c, double weight, GaussGrad& d1,
                           GaussGrad& d2, VarianceFloor* floor) {
    if (!(c > 0.0)) throw std::invalid_argument("inclusion_loss: c must be > 0");
    const double h = inclusion_score(z1, z2, floor);
    const double d_dh = -c * sigmoid(-c * h);
    inclusion_score_grad(z1, z2, weight * d_dh, d1, d2, floor);
    return softplus(-c * h);
}

// ---- hierarchical inclusion loss ----

static void check_chain(const GaussianChain& chain, const char* where) {
    if (chain.size() < 2) {
        std::ostringstream os;
        os << where << ": chain must have at least 2 entries (levels >= 1), got "
           << chain.size();
        throw std::invalid_argument(os.str());
    }
}

double hier_inclusion_loss(const GaussianChain& chain, double c,
                           VarianceFloor* floor) {
    check_chain(chain, "hier_inclusion_loss");
    double loss = 0.0;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        loss += inclusion_loss(chain[i + 1], chain[i], c, floor);
    }
    return loss;
}

double hier_inclusion_loss_grad(const GaussianChain& chain, double c,
                                double weight, ChainGrad& d_chain,
                                VarianceFloor* floor) {
    check_chain(chain, "hier_inclusion_loss");
    double loss = 0.0;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        loss += inclusion_loss_grad(chain[i + 1], chain[i], c, weight,
                                    d_chain[i + 1], d_chain[i], floor);
    }
    return loss;
}

// ---- mask repulsive loss ----

static void check_pair_chains(const GaussianChain& zp, const GaussianChain& zq) {
    check_chain(zp, "mask_repulsive_loss");
    if (zp.size() != zq.size()) {
        throw std::invalid_argument("mask_repulsive_loss: chain length mismatch");
    }
}

double mask_repulsive_loss(const GaussianChain& zp, const GaussianChain& zq,
                           bool same_sample, const SimilarityParams& p) {
    check_pair_chains(zp, zq);
    check_sim_params(p);
    const std::size_t levels = zp.size() - 1;
    if (same_sample) {
        // y = 0 zeroes the exponent: each intermediate level is softplus(0).
        return levels >= 2 ? static_cast<double>(levels - 1) * kLn2 : 0.0;
    }
    double loss = 0.0;
    for (std::size_t i = 1; i < levels; ++i) {
        const double s = csd_similarity(zp[i], zq[i]);
        // y = -1, with beta outside the label factor: the repulsion only
        // fires on pairs more similar than the -beta/alpha margin instead of
        // acting as a constant force on every pair.
        loss += softplus(p.alpha * s + p.beta);
    }
    return loss;
}

double mask_repulsive_loss_grad(const GaussianChain& zp, const GaussianChain& zq,
                                bool same_sample, const SimilarityParams& p,
                                double weight, ChainGrad& dp, ChainGrad& dq,
                                double& d_alpha, double& d_beta) {
    check_pair_chains(zp, zq);
    check_sim_params(p);
    const std::size_t levels = zp.size() - 1;
    if (same_sample) {
        return static_cast<double>(levels >= 2 ? levels - 1 : 0) * kLn2;
    }
    double loss = 0.0;
    for (std::size_t i = 1; i < levels; ++i) {
        const double s = csd_similarity(zp[i], zq[i]);
        const double u = p.alpha * s + p.beta;
        const double sig = sigmoid(u);
        const double d_ds = weight * sig * p.alpha;
        // Stop-gradient on the uncertainty: only the mean gradients flow.
        for (std::size_t k = 0; k < zp[i].dim(); ++k) {
            dp[i].d_mu[k] += d_ds * zq[i].mu[k];
            dq[i].d_mu[k] += d_ds * zp[i].mu[k];
        }
        d_alpha += weight * sig * s;
        d_beta += weight * sig;
        loss += softplus(u);
    }
    return loss;
}

// ---- intra-modal objective ----

static void check_batch_chains(const std::vector<GaussianChain>& chains,
                               const char* where) {
    if (chains.empty()) {
        throw std::invalid_argument(std::string(where) + ": empty batch");
    }
    const std::size_t len = chains.front().size();
    for (const auto& c : chains) {
        check_chain(c, where);
        if (c.size() != len) {
            throw std::invalid_argument(std::string(where) +
                                        ": chains must share one length");
        }
    }
}

double intra_modal_loss(const std::vector<GaussianChain>& chains,
                        const SimilarityParams& p, const LossWeights& w,
                        VarianceFloor* floor) {
    check_batch_chains(chains, "intra_modal_loss");
    w.validate();
    double loss = 0.0;
    for (std::size_t s = 0; s < chains.size(); ++s) {
        if (w.lambda1 != 0.0) {
            loss += w.lambda1 * hier_inclusion_loss(chains[s], w.c, floor);
        }
        if (w.lambda2 != 0.0) {
            for (std::size_t q = 0; q < chains.size(); ++q) {
                loss += w.lambda2 *
                        mask_repulsive_loss(chains[s], chains[q], s == q, p);
            }
        }
        if (w.gamma != 0.0) {
            loss += w.gamma * kl_to_standard(chains[s].back());
        }
    }
    return loss;
}

double intra_modal_loss_grad(const std::vector<GaussianChain>& chains,
                             const SimilarityParams& p, const LossWeights& w,
                             std::vector<ChainGrad>& d_chains, double& d_alpha,
                             double& d_beta, VarianceFloor* floor) {
    check_batch_chains(chains, "intra_modal_loss");
    w.validate();
    double loss = 0.0;
    for (std::size_t s = 0; s < chains.size(); ++s) {
        if (w.lambda1 != 0.0) {
            loss += w.lambda1 * hier_inclusion_loss_grad(chains[s], w.c, w.lambda1,
                                                         d_chains[s], floor);
        }
        if (w.lambda2 != 0.0) {
            for (std::size_t q = 0; q < chains.size(); ++q) {
                loss += w.lambda2 * mask_repulsive_loss_grad(
                                        chains[s], chains[q], s == q, p, w.lambda2,
                                        d_chains[s], d_chains[q], d_alpha, d_beta);
            }
        }
        if (w.gamma != 0.0) {
            loss += w.gamma *
                    kl_to_standard_grad(chains[s].back(), w.gamma, d_chains[s].back());
        }
    }
    return loss;
}

// ---- total objective ----

void ModalBatch::validate() const {
    check_batch_chains(chains, "ModalBatch");
    if (contrast_of.size() != chains.size()) {
        throw std::invalid_argument("ModalBatch: contrast_of must have one entry per sample");
    }
    if (!cross_of.empty() && cross_of.size() != chains.size()) {
        throw std::invalid_argument("ModalBatch: cross_of must be empty or one entry per sample");
    }
    auto check_index = [this](int k) {
        if (k >= 0 && static_cast<std::size_t>(k) >= contrast_views.size()) {
            throw std::invalid_argument("ModalBatch: view index out of range");
        }
    };
    for (int k : contrast_of) check_index(k);
    for (int k : cross_of) check_index(k);
}

void PairBatch::validate() const {
    audio.validate();
    text.validate();
    const std::size_t b = audio.size();
    if (text.size() != b) {
        throw std::invalid_argument("PairBatch: audio and text batch sizes differ");
    }
    if (y.size() != b) {
        throw std::invalid_argument("PairBatch: y matrix must be B x B");
    }
    for (const auto& row : y) {
        if (row.size() != b) {
            throw std::invalid_argument("PairBatch: y matrix must be B x B");
        }
        for (int v : row) {
            if (v != 1 && v != -1) {
                throw std::invalid_argument("PairBatch: y entries must be +1 or -1");
            }
        }
    }
}

TotalGrad make_total_grad(const PairBatch& batch) {
    TotalGrad g;
    auto init = [](const ModalBatch& mb, BatchGrad& bg) {
        bg.chains.resize(mb.chains.size());
        for (std::size_t s = 0; s < mb.chains.size(); ++s) {
            bg.chains[s] = make_chain_grad(mb.chains[s]);
        }
        bg.contrast.resize(mb.contrast_views.size());
        for (std::size_t k = 0; k < mb.contrast_views.size(); ++k) {
            bg.contrast[k].resize(mb.contrast_views[k].dim());
        }
    };
    init(batch.audio, g.audio);
    init(batch.text, g.text);
    return g;
}

namespace {

// Runs fn(begin, end) over a row partition. The accumulation targets inside
// fn must be owned per row, so the result does not depend on the partition
// and is bit-identical for every thread count.
void parallel_rows(std::size_t rows, int threads,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
    const int n = std::max(1, threads);
    if (n == 1 || rows <= 1) {
        fn(0, rows);
        return;
    }
    const std::size_t chunk = (rows + n - 1) / static_cast<std::size_t>(n);
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) {
        const std::size_t lo = std::min(rows, chunk * static_cast<std::size_t>(t));
        const std::size_t hi = std::min(rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fn, lo, hi);
    }
    for (auto& th : pool) th.join();
}

}  // namespace

// Contrastive grid in two passes. The row pass owns per-row loss/scalar
// partials and the audio-side gradients; the column pass replays cached
// pair weights to build the text-side gradients. Every accumulator is
// filled in a fixed index order, so the grid is bit-identical for any
// thread count.
static double ppcl_grid(const PairBatch& batch, const SimilarityParams& p,
                        int threads, bool with_grad, TotalGrad* grad) {
    const std::size_t b = batch.audio.size();
    Vec row_loss(b, 0.0), row_da(b, 0.0), row_db(b, 0.0);
    std::vector<GaussGrad> d_audio, d_text;
    std::vector<Vec> weights;  // d(loss_ij)/d(similarity_ij)
    if (with_grad) {
        d_audio.resize(b);
        d_text.resize(b);
        for (std::size_t s = 0; s < b; ++s) {
            d_audio[s].resize(batch.audio.contrastive(s).dim());
            d_text[s].resize(batch.text.contrastive(s).dim());
        }
        weights.assign(b, Vec(b, 0.0));
    }

    parallel_rows(b, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const DiagGaussian& za = batch.audio.contrastive(i);
            for (std::size_t j = 0; j < b; ++j) {
                const DiagGaussian& zt = batch.text.contrastive(j);
                const double y = static_cast<double>(batch.y[i][j]);
                const double s = csd_similarity(za, zt);
                const double u = y * (-p.alpha * s + p.beta);
                row_loss[i] += softplus(u);
                if (!with_grad) continue;
                const double sig = sigmoid(u);
                const double w = sig * y * (-p.alpha);
                weights[i][j] = w;
                row_da[i] += sig * y * (-s);
                row_db[i] += sig * y;
                for (std::size_t k = 0; k < za.dim(); ++k) {
                    d_audio[i].d_mu[k] += w * zt.mu[k];
                    d_audio[i].d_log_var[k] += w * (-0.5 * std::exp(za.log_var[k]));
                }
            }
        }
    });

    if (with_grad) {
        parallel_rows(b, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t j = lo; j < hi; ++j) {
                const DiagGaussian& zt = batch.text.contrastive(j);
                for (std::size_t i = 0; i < b; ++i) {
                    const DiagGaussian& za = batch.audio.contrastive(i);
                    const double w = weights[i][j];
                    for (std::size_t k = 0; k < zt.dim(); ++k) {
                        d_text[j].d_mu[k] += w * za.mu[k];
                        d_text[j].d_log_var[k] += w * (-0.5 * std::exp(zt.log_var[k]));
                    }
                }
            }
        });
        auto route = [](const ModalBatch& mb, BatchGrad& bg, std::size_t sample,
                        const GaussGrad& g) {
            const int k = mb.contrast_of[sample];
            GaussGrad& dst = k < 0 ? bg.chains[sample].back()
                                   : bg.contrast[static_cast<std::size_t>(k)];
            dst.add_scaled(g, 1.0);
        };
        for (std::size_t s = 0; s < b; ++s) {
            route(batch.audio, grad->audio, s, d_audio[s]);
            route(batch.text, grad->text, s, d_text[s]);
            grad->d_alpha += row_da[s];
            grad->d_beta += row_db[s];
        }
    }
    double loss = 0.0;
    for (double v : row_loss) loss += v;
    return loss;
}

// Repulsive grid: one parallel pass over samples. The ordered double sum
// is folded per sample: visiting (s, q) accumulates both the (s, q) and the
// (q, s) contributions to sample s (the pair weight is symmetric), so every
// gradient slot is owned by exactly one row.
static double mr_grid(const std::vector<GaussianChain>& chains,
                      const SimilarityParams& p, double lambda2, int threads,
                      bool with_grad, std::vector<ChainGrad>* d_chains,
                      double* d_alpha, double* d_beta) {
    const std::size_t b = chains.size();
    const std::size_t levels = chains.front().size() - 1;
    Vec row_loss(b, 0.0), row_da(b, 0.0), row_db(b, 0.0);

    parallel_rows(b, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            for (std::size_t q = 0; q < b; ++q) {
                if (q == s) {
                    row_loss[s] +=
                        levels >= 2 ? static_cast<double>(levels - 1) * kLn2 : 0.0;
                    continue;
                }
                for (std::size_t i = 1; i < levels; ++i) {
                    const double sim = csd_similarity(chains[s][i], chains[q][i]);
                    const double u = p.alpha * sim + p.beta;
                    row_loss[s] += softplus(u);
                    if (!with_grad) continue;
                    const double sig = sigmoid(u);
                    row_da[s] += sig * sim;
                    row_db[s] += sig;
                    // Twice the pair weight: once as the (s, q) term, once
                    // as the mirrored (q, s) term. log_var stays zero
                    // (stop-gradient on the uncertainty).
                    const double w = 2.0 * lambda2 * sig * p.alpha;
                    for (std::size_t k = 0; k < chains[s][i].dim(); ++k) {
                        (*d_chains)[s][i].d_mu[k] += w * chains[q][i].mu[k];
                    }
                }
            }
        }
    });

    double loss = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        loss += row_loss[s];
        if (with_grad) {
            *d_alpha += lambda2 * row_da[s];
            *d_beta += lambda2 * row_db[s];
        }
    }
    return loss;
}

static LossComponents total_loss_impl(const PairBatch& batch,
                                      const SimilarityParams& p,
                                      const LossWeights& w, TotalGrad* grad,
                                      VarianceFloor* floor, int threads) {
    batch.validate();
    w.validate();
    check_sim_params(p);
    const bool with_grad = grad != nullptr;
    const std::size_t b = batch.audio.size();

    LossComponents comps;

    // Pairwise sigmoid loss over all B^2 contrastive-view pairs.
    comps.ppcl = ppcl_grid(batch, p, threads, with_grad, grad);

    // Intra-modal terms, per modality.
    auto intra = [&](const ModalBatch& mb, BatchGrad* bg) {
        for (std::size_t s = 0; s < b; ++s) {
            if (w.lambda1 != 0.0) {
                comps.inc_hier +=
                    with_grad
                        ? w.lambda1 * hier_inclusion_loss_grad(
                                          mb.chains[s], w.c, w.lambda1,
                                          bg->chains[s], floor)
                        : w.lambda1 * hier_inclusion_loss(mb.chains[s], w.c, floor);
            }
            if (w.gamma != 0.0) {
                comps.vib += with_grad
                                 ? w.gamma * kl_to_standard_grad(
                                                 mb.chains[s].back(), w.gamma,
                                                 bg->chains[s].back())
                                 : w.gamma * kl_to_standard(mb.chains[s].back());
            }
        }
        if (w.lambda2 != 0.0) {
            comps.mask_repulsive +=
                w.lambda2 * mr_grid(mb.chains, p, w.lambda2, threads, with_grad,
                                    bg ? &bg->chains : nullptr,
                                    grad ? &grad->d_alpha : nullptr,
                                    grad ? &grad->d_beta : nullptr);
        }
    };
    intra(batch.audio, with_grad ? &grad->audio : nullptr);
    intra(batch.text, with_grad ? &grad->text : nullptr);

    // Cross-modal inclusion over matched pairs (audio inside text).
    if (w.lambda3 != 0.0) {
        auto grad_slot = [](const ModalBatch& mb, BatchGrad& bg,
                            std::size_t sample) -> GaussGrad& {
            const int k = mb.cross_of.empty() ? -1 : mb.cross_of[sample];
            return k < 0 ? bg.chains[sample].back()
                         : bg.contrast[static_cast<std::size_t>(k)];
        };
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                if (batch.y[i][j] != 1) continue;
                const DiagGaussian& za = batch.audio.cross_view(i);
                const DiagGaussian& zt = batch.text.cross_view(j);
                comps.inc_cross +=
                    with_grad
                        ? w.lambda3 * inclusion_loss_grad(
                                          za, zt, w.c, w.lambda3,
                                          grad_slot(batch.audio, grad->audio, i),
                                          grad_slot(batch.text, grad->text, j), floor)
                        : w.lambda3 * inclusion_loss(za, zt, w.c, floor);
            }
        }
    }
    return comps;
}

LossComponents total_loss(const PairBatch& batch, const SimilarityParams& p,
                          const LossWeights& w, VarianceFloor* floor,
                          int threads) {
    return total_loss_impl(batch, p, w, nullptr, floor, threads);
}

LossComponents total_loss_grad(const PairBatch& batch, const SimilarityParams& p,
                               const LossWeights& w, TotalGrad& grad,
                               VarianceFloor* floor, int threads) {
    return total_loss_impl(batch, p, w, &grad, floor, threads);
}

// ---- InfoNCE reference baseline ----

namespace {

struct CosRow {
    Vec unit;     // x / |x|
    double norm;  // |x|
};

CosRow normalize(const Vec& x) {
    const double n = std::sqrt(squared_norm(x));
    if (!(n > 0.0)) {
        throw NumericError("info_nce_loss: zero-norm embedding");
    }
    CosRow r;
    r.norm = n;
    r.unit.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.unit[i] = x[i] / n;
    return r;
}

}  // namespace

static double info_nce_impl(const std::vector<Vec>& audio_mu,
                            const std::vector<Vec>& text_mu, double scale,
                            std::vector<Vec>* d_audio_mu,
                            std::vector<Vec>* d_text_mu, double* d_scale) {
    const std::size_t b = audio_mu.size();
    if (b == 0 || text_mu.size() != b) {
        throw std::invalid_argument("info_nce_loss: batch size mismatch or empty");
    }
    if (!(scale > 0.0)) {
        throw std::invalid_argument("info_nce_loss: scale must be positive");
    }

    std::vector<CosRow> au(b), tx(b);
    for (std::size_t i = 0; i < b; ++i) {
        au[i] = normalize(audio_mu[i]);
        tx[i] = normalize(text_mu[i]);
    }

    std::vector<Vec> cos(b, Vec(b));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            cos[i][j] = dot(au[i].unit, tx[j].unit);
        }
    }

    // Row and column log-sum-exp of scale * cos.
    auto lse = [&](bool rows, std::size_t k) {
        double m = -1e300;
        for (std::size_t j = 0; j < b; ++j) {
            m = std::fmax(m, scale * (rows ? cos[k][j] : cos[j][k]));
        }
        double s = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            s += std::exp(scale * (rows ? cos[k][j] : cos[j][k]) - m);
        }
        return m + std::log(s);
    };

    double loss = 0.0;
    std::vector<Vec> d_logits;
    if (d_audio_mu != nullptr) d_logits.assign(b, Vec(b, 0.0));
    for (std::size_t i = 0; i < b; ++i) {
        const double row = lse(true, i) - scale * cos[i][i];
        const double col = lse(false, i) - scale * cos[i][i];
        loss += 0.5 * (row + col);
        if (d_audio_mu == nullptr) continue;
        const double lr = lse(true, i);
        const double lc = lse(false, i);
        for (std::size_t j = 0; j < b; ++j) {
            d_logits[i][j] += 0.5 * std::exp(scale * cos[i][j] - lr);
            d_logits[j][i] += 0.5 * std::exp(scale * cos[j][i] - lc);
        }
        d_logits[i][i] -= 1.0;
    }
    if (d_audio_mu == nullptr) return loss;

    // logits = scale * u_a . u_t; backprop through the normalizations.
    *d_scale = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        (*d_audio_mu)[i].assign(audio_mu[i].size(), 0.0);
        (*d_text_mu)[i].assign(text_mu[i].size(), 0.0);
    }
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            const double g = d_logits[i][j];
            if (g == 0.0) continue;
            *d_scale += g * cos[i][j];
            const double gs = g * scale;
            // d cos / d x = (u_t - u_a (u_a . u_t)) / |x_a| and symmetrically.
            for (std::size_t k = 0; k < au[i].unit.size(); ++k) {
                (*d_audio_mu)[i][k] +=
                    gs * (tx[j].unit[k] - au[i].unit[k] * cos[i][j]) / au[i].norm;
                (*d_text_mu)[j][k] +=
                    gs * (au[i].unit[k] - tx[j].unit[k] * cos[i][j]) / tx[j].norm;
            }
        }
    }
    return loss;
}

double info_nce_loss(const std::vector<Vec>& audio_mu,
                     const std::vector<Vec>& text_mu, double scale) {
    return info_nce_impl(audio_mu, text_mu, scale, nullptr, nullptr, nullptr);
}

double info_nce_loss_grad(const std::vector<Vec>& audio_mu,
                          const std::vector<Vec>& text_mu, double scale,
                          std::vector<Vec>& d_audio_mu,
                          std::vector<Vec>& d_text_mu, double& d_scale) {
    return info_nce_impl(audio_mu, text_mu, scale, &d_audio_mu, &d_text_mu,
                         &d_scale);
}

}  // namespace prolap
