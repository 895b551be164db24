#include "prolap/optim.hpp"

#include <cmath>

namespace prolap {

AdamState AdamState::init(std::size_t n_params, double beta1, double beta2,
                          double eps) {
    AdamState s;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("adam_step: non-finite gradient at parameter " +
                               std::to_string(i));
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

double lr_at(long long step, long long total_steps, long long warmup_steps,
             double max_lr) {
    if (step < 0 || step > total_steps) {
        throw std::invalid_argument("lr_at: step out of [0, total_steps]");
    }
    if (warmup_steps < 0 || warmup_steps > total_steps) {
        throw std::invalid_argument("lr_at: warmup_steps out of range");
    }
    if (step < warmup_steps) {
        return max_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (total_steps == warmup_steps) return step == 0 ? 0.0 : max_lr;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return max_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

}  // namespace prolap
