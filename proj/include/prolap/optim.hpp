#pragma once

#include <cstdint>

#include "prolap/common.hpp"

namespace prolap {

// Adam with bias correction, standard defaults (0.9, 0.999, 1e-8).
struct AdamState {
    Vec m;  // first moments, one per parameter
    Vec v;  // second moments
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(std::size_t n_params, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);
};

// In-place bias-corrected Adam update. Throws NumericError on any
// non-finite gradient entry (no silent clipping). Deterministic.
void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr);

// Linear warm-up from 0 to max_lr over warmup_steps, then half-cosine decay
// to 0 at total_steps. Requires 0 <= step <= total_steps.
double lr_at(long long step, long long total_steps, long long warmup_steps,
             double max_lr);

}  // namespace prolap
