#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace prolap {

// Relative error with a unit guard: |a - n| / max(|a|, |n|, 1). Entries
// where both values are tiny are effectively compared absolutely, which
// keeps finite-difference roundoff from flagging healthy near-zero
// gradients.
double grad_rel_err(double analytic, double numeric);

// Central difference (f(x+h) - f(x-h)) / 2h of eval() w.r.t. *slot.
// Restores the slot afterwards.
double central_diff(double& slot, double h,
                    const std::function<double()>& eval);

constexpr double kFdStep = 1e-5;

struct FdResult {
    std::string loss;
    std::string arg;
    double worst = 0.0;
};

// Finite-difference sweeps over the loss stack, the encoder stack, and the
// fully composed objective. Each returns the worst relative error per
// (loss, argument) pair over `trials` random configurations.
std::vector<FdResult> fd_check_losses(int trials, std::uint64_t seed);
std::vector<FdResult> fd_check_encoder(int trials, std::uint64_t seed);
std::vector<FdResult> fd_check_end2end(int trials, std::uint64_t seed);

// Verifies the repulsive-loss stop-gradient: analytic log-variance
// gradients must be exactly zero at configurations where the central
// difference is clearly nonzero. Returns the number of configurations
// where that held; throws NumericError on any violation.
int check_mask_repulsive_stop_gradient(int trials, std::uint64_t seed);

double worst_of(const std::vector<FdResult>& results);

}  // namespace prolap
