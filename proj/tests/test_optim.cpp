#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prolap/optim.hpp"

using namespace prolap;

TEST_CASE("zero gradient leaves parameters unchanged but advances the step") {
    Vec params{1.0, -2.0, 3.0};
    AdamState state = AdamState::init(3);
    adam_step(params, Vec{0.0, 0.0, 0.0}, state, 0.1);
    CHECK(params == Vec{1.0, -2.0, 3.0});
    CHECK(state.step == 1);
}

TEST_CASE("bias-corrected first step moves by roughly lr") {
    Vec params{0.0};
    AdamState state = AdamState::init(1);
    adam_step(params, Vec{1.0}, state, 0.1);
    // m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps).
    CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("10-step trajectory on a quadratic matches a reference implementation") {
    // Minimize f(x) = 0.5 * 3 (x - 2)^2, gradient 3 (x - 2).
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    Vec params{5.0};
    AdamState state = AdamState::init(1, b1, b2, eps);

    // Independent reference, written directly from the update equations.
    double x = 5.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        const double g = 3.0 * (x - 2.0);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

        adam_step(params, Vec{3.0 * (params[0] - 2.0)}, state, lr);
        CHECK(params[0] == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(params[0] < 5.0);  // moved toward the minimum
}

TEST_CASE("non-finite gradients abort the step") {
    Vec params{0.0, 0.0};
    AdamState state = AdamState::init(2);
    CHECK_THROWS_AS(adam_step(params, Vec{1.0, std::nan("")}, state, 0.1), NumericError);
    CHECK_THROWS_AS(adam_step(params, Vec{1.0, INFINITY}, state, 0.1), NumericError);
    Vec short_grad{1.0};
    CHECK_THROWS_AS(adam_step(params, short_grad, state, 0.1), std::invalid_argument);
}

TEST_CASE("learning-rate schedule hits the documented anchor points") {
    const long long total = 100, warmup = 10;
    const double max_lr = 2e-3;
    CHECK(lr_at(0, total, warmup, max_lr) == 0.0);
    CHECK(lr_at(warmup, total, warmup, max_lr) == doctest::Approx(max_lr));
    CHECK(lr_at(total, total, warmup, max_lr) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(lr_at(warmup + (total - warmup) / 2, total, warmup, max_lr) ==
          doctest::Approx(max_lr / 2.0));
    // Ramp is linear.
    CHECK(lr_at(5, total, warmup, max_lr) == doctest::Approx(max_lr * 0.5));
    // Monotone up then down.
    double prev = -1.0;
    for (long long s = 0; s <= warmup; ++s) {
        const double lr = lr_at(s, total, warmup, max_lr);
        CHECK(lr >= prev);
        prev = lr;
    }
    for (long long s = warmup + 1; s <= total; ++s) {
        const double lr = lr_at(s, total, warmup, max_lr);
        CHECK(lr <= prev);
        prev = lr;
    }
    CHECK_THROWS_AS(lr_at(-1, total, warmup, max_lr), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(total + 1, total, warmup, max_lr), std::invalid_argument);
}
