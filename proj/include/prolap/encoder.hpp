#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prolap/geometry.hpp"
#include "prolap/rng.hpp"

namespace prolap {

// Two-headed feed-forward encoder: d_in -> (hidden, tanh) x n_layers ->
// linear mean head and linear log-variance head, both d_out wide. The
// activation is tanh throughout (smooth, so finite-difference gradient
// checks hold everywhere). A learnable mask token (d_in) is owned by the
// encoder; masked input coordinates are replaced by it before the forward
// pass and receive its gradient on the way back.
struct EncoderArch {
    int d_in = 32;
    int hidden = 64;
    int n_layers = 1;
    int d_out = 16;

    void validate() const;
    bool operator==(const EncoderArch&) const = default;
};

// Weight store: a single flat array with fixed layout
//   [ layer0 W (hidden x d_in), layer0 b,
//     layer1 W (hidden x hidden), layer1 b, ...,
//     mean W (d_out x hidden), mean b,
//     log-var W (d_out x hidden), log-var b,
//     mask token (d_in) ]
// Rows of W are output units. The architecture is fixed at construction;
// `revision` increments on every in-place weight update so stale tapes can
// be detected.
struct EncoderParams {
    EncoderArch arch;
    Vec flat;
    std::uint64_t revision = 0;

    std::size_t size() const { return flat.size(); }

    std::size_t layer_w_off(int layer) const;
    std::size_t layer_b_off(int layer) const;
    std::size_t mean_w_off() const;
    std::size_t mean_b_off() const;
    std::size_t logvar_w_off() const;
    std::size_t logvar_b_off() const;
    std::size_t mask_token_off() const;

    std::span<const double> mask_token() const {
        return {flat.data() + mask_token_off(), static_cast<std::size_t>(arch.d_in)};
    }
    std::span<double> mask_token() {
        return {flat.data() + mask_token_off(), static_cast<std::size_t>(arch.d_in)};
    }

    static std::size_t flat_size(const EncoderArch& arch);
};

// Zero-initialized parameters (mu = 0, log sigma^2 = 0 for every input).
EncoderParams make_encoder(const EncoderArch& arch);

// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the
// log-variance head bias stays zero so embeddings start at unit variance,
// and the mask token starts at zero.
EncoderParams make_encoder(const EncoderArch& arch, Rng& rng);

// Activations recorded by forward() for the matching backward() call.
struct ForwardTape {
    Vec input;
    std::vector<Vec> hidden;  // post-tanh activations, one per hidden layer
    std::uint64_t revision = 0;
};

// Deterministic forward pass. If tape is non-null it is filled for backward.
DiagGaussian encoder_forward(const EncoderParams& params,
                             std::span<const double> x,
                             ForwardTape* tape = nullptr);

// Exact reverse-mode gradients. Adds parameter gradients into grad_flat
// (same layout/size as params.flat; the mask-token slice is NOT touched
// here, see route_input_grad) and returns the gradient w.r.t. the input
// vector. Throws std::invalid_argument on a tape from different weights.
Vec encoder_backward(const EncoderParams& params, const ForwardTape& tape,
                     const GaussGrad& upstream, Vec& grad_flat);

// Marks params as updated; call after any in-place weight change.
inline void bump_revision(EncoderParams& params) { ++params.revision; }

}  // namespace prolap
