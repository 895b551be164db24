#pragma once

#include <vector>

#include "prolap/geometry.hpp"

namespace prolap {

// Weighting coefficients of the full objective. lambda1 scales the
// hierarchical inclusion term, lambda2 the mask repulsive term, lambda3 the
// cross-modal inclusion term, gamma the variance regularizer; c is the
// logistic-link constant of the inclusion loss.
struct LossWeights {
    double lambda1 = 5e-3;
    double lambda2 = 1e-4;
    double lambda3 = 5e-7;
    double gamma = 1e-5;
    double c = 1.0;

    void validate() const;
};

// Embeddings of one sample's views at mask levels 0..L. chain[0] is the
// fully-masked view, chain[L] the raw input's embedding.
using GaussianChain = std::vector<DiagGaussian>;

// Gradients mirroring a GaussianChain.
using ChainGrad = std::vector<GaussGrad>;

ChainGrad make_chain_grad(const GaussianChain& chain);

// Gradient bundle for the pairwise and chain losses: one slot per
// DiagGaussian argument in call order, plus the similarity scalars.
struct GradBundle {
    std::vector<GaussGrad> args;
    double d_alpha = 0.0;
    double d_beta = 0.0;
};

// ---- pairwise sigmoid loss ----
// softplus(y * (-alpha * s(a,t) + beta)) with y in {+1, -1}.
double ppcl(const DiagGaussian& a, const DiagGaussian& t, int y,
            const SimilarityParams& p);
double ppcl_grad(const DiagGaussian& a, const DiagGaussian& t, int y,
                 const SimilarityParams& p, GaussGrad& da, GaussGrad& dt,
                 double& d_alpha, double& d_beta);

// ---- inclusion loss ----
// softplus(-c * H(z1 in z2)); small when z2 already covers z1.
double inclusion_loss(const DiagGaussian& z1, const DiagGaussian& z2, double c,
                      VarianceFloor* floor = nullptr);
double inclusion_loss_grad(const DiagGaussian& z1, const DiagGaussian& z2,
                           double c, double weight, GaussGrad& d1,
                           GaussGrad& d2, VarianceFloor* floor = nullptr);

// ---- hierarchical inclusion loss ----
// sum_{i=0}^{L-1} inclusion_loss(chain[i+1] in chain[i]): every less-masked
// view is pushed inside the next more-masked one.
double hier_inclusion_loss(const GaussianChain& chain, double c,
                           VarianceFloor* floor = nullptr);
double hier_inclusion_loss_grad(const GaussianChain& chain, double c,
                                double weight, ChainGrad& d_chain,
                                VarianceFloor* floor = nullptr);

// ---- mask repulsive loss ----
// Negative-only pairwise loss over the intermediate mask levels i = 1..L-1:
// softplus(alpha * s + beta) per level, with beta outside the label factor,
// so the repulsion only fires on masked views more similar than the margin
// -beta/alpha. same_sample pairs (y = 0) contribute the constant
// (L-1) * log 2 with zero gradient. Gradients w.r.t. log_var of every
// argument are identically zero (stop-gradient on the uncertainty), while
// the loss VALUE still contains the variance contribution of the
// similarity.
double mask_repulsive_loss(const GaussianChain& zp, const GaussianChain& zq,
                           bool same_sample, const SimilarityParams& p);
double mask_repulsive_loss_grad(const GaussianChain& zp, const GaussianChain& zq,
                                bool same_sample, const SimilarityParams& p,
                                double weight, ChainGrad& dp, ChainGrad& dq,
                                double& d_alpha, double& d_beta);

// ---- intra-modal objective ----
// sum over samples of [ lambda1 * hierarchical inclusion
//                       + lambda2 * sum over all samples of mask repulsion
//                       + gamma * KL(raw embedding || N(0, I)) ].
// The repulsive double sum runs over every ordered pair including the
// sample itself; self pairs contribute their (L-1) log 2 constant.
double intra_modal_loss(const std::vector<GaussianChain>& chains,
                        const SimilarityParams& p, const LossWeights& w,
                        VarianceFloor* floor = nullptr);
double intra_modal_loss_grad(const std::vector<GaussianChain>& chains,
                             const SimilarityParams& p, const LossWeights& w,
                             std::vector<ChainGrad>& d_chains, double& d_alpha,
                             double& d_beta, VarianceFloor* floor = nullptr);

// ---- total objective ----

// One modality's minibatch: a chain of view embeddings per sample, plus the
// views that enter the pairwise grid and the cross-modal inclusion term.
// Most samples contrast with their raw embedding (contrast_of[s] == -1
// selects chains[s].back()); samples in the masked batch fraction contrast
// with a dedicated masked view stored in contrast_views. cross_of selects
// the embedding used by the cross-modal inclusion term the same way (for
// the text modality the per-step caption can differ from the chain input,
// which is always the most specific caption).
struct ModalBatch {
    std::vector<GaussianChain> chains;
    std::vector<DiagGaussian> contrast_views;
    std::vector<int> contrast_of;  // per sample: -1 or index into contrast_views
    std::vector<int> cross_of;     // same encoding; empty means all raw

    std::size_t size() const { return chains.size(); }
    const DiagGaussian& contrastive(std::size_t s) const {
        const int k = contrast_of[s];
        return k < 0 ? chains[s].back() : contrast_views[static_cast<std::size_t>(k)];
    }
    const DiagGaussian& cross_view(std::size_t s) const {
        const int k = cross_of.empty() ? -1 : cross_of[s];
        return k < 0 ? chains[s].back() : contrast_views[static_cast<std::size_t>(k)];
    }
    void validate() const;
};

struct PairBatch {
    ModalBatch audio;
    ModalBatch text;
    // y[i][j] = +1 if audio i and text j are a matched pair, -1 otherwise.
    std::vector<std::vector<int>> y;

    void validate() const;
};

struct BatchGrad {
    std::vector<ChainGrad> chains;
    std::vector<GaussGrad> contrast;
};

struct TotalGrad {
    BatchGrad audio;
    BatchGrad text;
    double d_alpha = 0.0;
    double d_beta = 0.0;
};

TotalGrad make_total_grad(const PairBatch& batch);

// Weighted contributions of each term; their sum is the total objective.
struct LossComponents {
    double ppcl = 0.0;
    double inc_cross = 0.0;
    double inc_hier = 0.0;
    double mask_repulsive = 0.0;
    double vib = 0.0;

    double total() const {
        return ppcl + inc_cross + inc_hier + mask_repulsive + vib;
    }
};

// Full objective over a paired minibatch: the pairwise sigmoid loss over all
// B^2 pairs of contrastive views, both intra-modal objectives over the
// chains, and the cross-modal inclusion loss (audio inside text) over
// matched pairs of raw embeddings. `threads` > 1 fans the two B^2 loops out
// over worker threads; partial sums and gradients are reduced in a fixed
// order, so results are bit-identical for a given thread count.
LossComponents total_loss(const PairBatch& batch, const SimilarityParams& p,
                          const LossWeights& w, VarianceFloor* floor = nullptr,
                          int threads = 1);
LossComponents total_loss_grad(const PairBatch& batch, const SimilarityParams& p,
                               const LossWeights& w, TotalGrad& grad,
                               VarianceFloor* floor = nullptr, int threads = 1);

// ---- reference deterministic baseline loss ----
// Symmetric InfoNCE over cosine similarities of the mean vectors, with a
// learnable logit scale. Matched pairs sit on the diagonal. Provided for the
// deterministic contrastive baseline only; variances are ignored.
double info_nce_loss(const std::vector<Vec>& audio_mu,
                     const std::vector<Vec>& text_mu, double scale);
double info_nce_loss_grad(const std::vector<Vec>& audio_mu,
                          const std::vector<Vec>& text_mu, double scale,
                          std::vector<Vec>& d_audio_mu,
                          std::vector<Vec>& d_text_mu, double& d_scale);

}  // namespace prolap
