#pragma once

#include <cstddef>

#include "prolap/common.hpp"

namespace prolap {

// Probabilistic embedding: an axis-aligned Gaussian N(mu, diag(exp(log_var))).
// Variance is stored as log sigma^2 so positivity holds by construction.
struct DiagGaussian {
    Vec mu;
    Vec log_var;

    DiagGaussian() = default;
    DiagGaussian(Vec mu_in, Vec log_var_in);

    std::size_t dim() const { return mu.size(); }
    double variance(std::size_t i) const { return std::exp(log_var[i]); }
    // Sum of per-dimension variances, tr(Sigma). The uncertainty scalar
    // reported by the evaluation suite.
    double total_variance() const;

    static DiagGaussian zeros(std::size_t d) {
        return DiagGaussian(Vec(d, 0.0), Vec(d, 0.0));
    }
};

// Learnable scalars of the pairwise sigmoid loss. alpha must stay positive;
// the trainer optimizes log(alpha) internally and exposes alpha here.
struct SimilarityParams {
    double alpha = 10.0;
    double beta = -10.0;
};

// Gradient slot mirroring one DiagGaussian argument.
struct GaussGrad {
    Vec d_mu;
    Vec d_log_var;

    void resize(std::size_t d) {
        d_mu.assign(d, 0.0);
        d_log_var.assign(d, 0.0);
    }
    void set_zero() {
        d_mu.assign(d_mu.size(), 0.0);
        d_log_var.assign(d_log_var.size(), 0.0);
    }
    void add_scaled(const GaussGrad& other, double w) {
        for (std::size_t i = 0; i < d_mu.size(); ++i) {
            d_mu[i] += w * other.d_mu[i];
            d_log_var[i] += w * other.d_log_var[i];
        }
    }
};

// Variance floor applied to inclusion-statistic inputs during training.
// Counts how often the floor was hit so the trainer can log it.
struct VarianceFloor {
    double floor = 1e-12;
    long long hits = 0;
};

// Corrected similarity: mu_a . mu_t - 1/2 (tr Sigma_a + tr Sigma_t).
// Equal to 1/2 (|mu_a|^2 + |mu_t|^2) - 1/2 E|z_a - z_t|^2 for independent
// draws, which the Monte-Carlo tests exploit.
double csd_similarity(const DiagGaussian& a, const DiagGaussian& t);

// Same value; also accumulates d(sim)/d(mu, log_var) of both arguments,
// scaled by `weight`, into the provided slots.
double csd_similarity_grad(const DiagGaussian& a, const DiagGaussian& t,
                           double weight, GaussGrad& da, GaussGrad& dt);

// Inclusion statistic H(Z1 in Z2) = log I(2,1) - log I(1,2) where
// I(a,b) = integral of p1^a p2^b over R^d. Positive when Z2 is the wider,
// covering distribution. Antisymmetric in its arguments.
//
// Closed form, derived per dimension from Gaussian product identities
// (densities factorize under diagonal covariance, so the d-dimensional
// integrals are products of 1-D ones and the logs sum):
//
//   Squaring a density rescales it:  N(x; m, s)^2 = N(x; m, s/2) / (2 sqrt(pi s)).
//   The product of two densities integrates to a density in the means:
//     int N(x; m1, v1) N(x; m2, v2) dx = N(m1 - m2; 0, v1 + v2).
//   Hence, with s1 = sigma1^2, s2 = sigma2^2, D = m1 - m2:
//     log I(2,1) = -log 2 - 1/2 log(pi s1) - 1/2 log(2 pi (s1/2 + s2))
//                  - D^2 / (s1 + 2 s2)
//   and symmetrically for I(1,2). Subtracting, per dimension:
//     H_i = 1/2 log(s2/s1) + 1/2 log((2 s1 + s2)/(2 s2 + s1))
//           + D^2 (1/(2 s1 + s2) - 1/(2 s2 + s1)).
//
// Evaluated in the log domain (log-sum-exp for the 2s+s terms) so it stays
// finite for d up to 512 and extreme log-variances.
//
// If `floor` is non-null, variances are clamped below at floor->floor and
// hits are counted; otherwise non-positive variance raises NumericError.
double inclusion_score(const DiagGaussian& z1, const DiagGaussian& z2,
                       VarianceFloor* floor = nullptr);

// Value plus gradients w.r.t. (mu, log_var) of both arguments, accumulated
// with `weight`. Floored dimensions receive zero log-var gradient (clamp).
double inclusion_score_grad(const DiagGaussian& z1, const DiagGaussian& z2,
                            double weight, GaussGrad& d1, GaussGrad& d2,
                            VarianceFloor* floor = nullptr);

// Independent check of inclusion_score: evaluates both integrals of the
// statistic by 1-D adaptive Simpson quadrature per dimension, in the log
// domain (integrand shifted by its maximum before exponentiation).
// Absolute tolerance 1e-13 per 1-D integral on the shifted scale.
// Intended for d <= 8; raises NumericError if the quadrature fails to
// converge, std::invalid_argument for d > 8 or non-positive variance.
double quadrature_inclusion_oracle(const DiagGaussian& z1,
                                   const DiagGaussian& z2);

// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum_i (sigma_i^2 + mu_i^2 - 1
// - log sigma_i^2). The variance regularizer of the intra-modal objective.
double kl_to_standard(const DiagGaussian& z);
double kl_to_standard_grad(const DiagGaussian& z, double weight, GaussGrad& dz);

}  // namespace prolap
