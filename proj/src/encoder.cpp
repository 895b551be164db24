#include "prolap/encoder.hpp"

#include <cmath>

namespace prolap {

void EncoderArch::validate() const {
    if (d_in < 1 || hidden < 1 || n_layers < 1 || d_out < 1) {
        throw std::invalid_argument("EncoderArch: all sizes must be >= 1");
    }
}

std::size_t EncoderParams::flat_size(const EncoderArch& a) {
    std::size_t n = 0;
    int prev = a.d_in;
    for (int l = 0; l < a.n_layers; ++l) {
        n += static_cast<std::size_t>(a.hidden) * prev + a.hidden;
        prev = a.hidden;
    }
    n += 2 * (static_cast<std::size_t>(a.d_out) * a.hidden + a.d_out);
    n += a.d_in;  // mask token
    return n;
}

std::size_t EncoderParams::layer_w_off(int layer) const {
    std::size_t off = 0;
    int prev = arch.d_in;
    for (int l = 0; l < layer; ++l) {
        off += static_cast<std::size_t>(arch.hidden) * prev + arch.hidden;
        prev = arch.hidden;
    }
    return off;
}

std::size_t EncoderParams::layer_b_off(int layer) const {
    const int prev = layer == 0 ? arch.d_in : arch.hidden;
    return layer_w_off(layer) + static_cast<std::size_t>(arch.hidden) * prev;
}

std::size_t EncoderParams::mean_w_off() const { return layer_w_off(arch.n_layers); }

std::size_t EncoderParams::mean_b_off() const {
    return mean_w_off() + static_cast<std::size_t>(arch.d_out) * arch.hidden;
}

std::size_t EncoderParams::logvar_w_off() const { return mean_b_off() + arch.d_out; }

std::size_t EncoderParams::logvar_b_off() const {
    return logvar_w_off() + static_cast<std::size_t>(arch.d_out) * arch.hidden;
}

std::size_t EncoderParams::mask_token_off() const { return logvar_b_off() + arch.d_out; }

EncoderParams make_encoder(const EncoderArch& arch) {
    arch.validate();
    EncoderParams p;
    p.arch = arch;
    p.flat.assign(EncoderParams::flat_size(arch), 0.0);
    return p;
}

EncoderParams make_encoder(const EncoderArch& arch, Rng& rng) {
    EncoderParams p = make_encoder(arch);
    auto init_linear = [&](std::size_t w_off, std::size_t b_off, int out, int in,
                           bool init_bias) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 0; i < out * in; ++i) {
            p.flat[w_off + i] = rng.uniform(-bound, bound);
        }
        if (init_bias) {
            for (int i = 0; i < out; ++i) {
                p.flat[b_off + i] = rng.uniform(-bound, bound);
            }
        }
    };
    int prev = arch.d_in;
    for (int l = 0; l < arch.n_layers; ++l) {
        init_linear(p.layer_w_off(l), p.layer_b_off(l), arch.hidden, prev, true);
        prev = arch.hidden;
    }
    init_linear(p.mean_w_off(), p.mean_b_off(), arch.d_out, arch.hidden, true);
    // Log-variance head: weights fan-in scaled, bias pinned to zero so every
    // embedding starts at sigma^2 ~ 1.
    init_linear(p.logvar_w_off(), p.logvar_b_off(), arch.d_out, arch.hidden, false);
    // Mask token stays zero.
    return p;
}

namespace {

void linear_forward(const double* w, const double* b, std::span<const double> x,
                    int out, int in, double* y) {
    for (int i = 0; i < out; ++i) {
        double s = b[i];
        const double* row = w + static_cast<std::size_t>(i) * in;
        for (int j = 0; j < in; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

}  // namespace

DiagGaussian encoder_forward(const EncoderParams& params,
                             std::span<const double> x, ForwardTape* tape) {
    const EncoderArch& a = params.arch;
    if (x.size() != static_cast<std::size_t>(a.d_in)) {
        throw std::invalid_argument("encoder_forward: input length != d_in");
    }

    Vec cur(x.begin(), x.end());
    std::vector<Vec> hidden;
    hidden.reserve(a.n_layers);
    int prev = a.d_in;
    for (int l = 0; l < a.n_layers; ++l) {
        Vec next(a.hidden);
        linear_forward(params.flat.data() + params.layer_w_off(l),
                       params.flat.data() + params.layer_b_off(l), cur, a.hidden,
                       prev, next.data());
        for (double& v : next) v = std::tanh(v);
        hidden.push_back(next);
        cur = std::move(next);
        prev = a.hidden;
    }

    Vec mu(a.d_out), log_var(a.d_out);
    linear_forward(params.flat.data() + params.mean_w_off(),
                   params.flat.data() + params.mean_b_off(), cur, a.d_out,
                   a.hidden, mu.data());
    linear_forward(params.flat.data() + params.logvar_w_off(),
                   params.flat.data() + params.logvar_b_off(), cur, a.d_out,
                   a.hidden, log_var.data());

    if (tape != nullptr) {
        tape->input.assign(x.begin(), x.end());
        tape->hidden = std::move(hidden);
        tape->revision = params.revision;
    }
    return DiagGaussian(std::move(mu), std::move(log_var));
}

Vec encoder_backward(const EncoderParams& params, const ForwardTape& tape,
                     const GaussGrad& upstream, Vec& grad_flat) {
    const EncoderArch& a = params.arch;
    if (tape.revision != params.revision) {
        throw std::invalid_argument(
            "encoder_backward: tape is stale (weights changed since forward)");
    }
    if (grad_flat.size() != params.flat.size()) {
        throw std::invalid_argument("encoder_backward: grad buffer size mismatch");
    }
    if (upstream.d_mu.size() != static_cast<std::size_t>(a.d_out) ||
        upstream.d_log_var.size() != static_cast<std::size_t>(a.d_out)) {
        throw std::invalid_argument("encoder_backward: upstream shape mismatch");
    }
    if (tape.hidden.size() != static_cast<std::size_t>(a.n_layers) ||
        tape.input.size() != static_cast<std::size_t>(a.d_in)) {
        throw std::invalid_argument("encoder_backward: tape shape mismatch");
    }

    const Vec& last = tape.hidden.back();

    // Heads: dW = upstream x last, db = upstream, d_last = W^T upstream.
    Vec d_hidden(a.hidden, 0.0);
    auto head_backward = [&](std::size_t w_off, std::size_t b_off,
                             const Vec& d_out_vec) {
        for (int i = 0; i < a.d_out; ++i) {
            const double g = d_out_vec[i];
            double* w_row = grad_flat.data() + w_off + static_cast<std::size_t>(i) * a.hidden;
            const double* w = params.flat.data() + w_off + static_cast<std::size_t>(i) * a.hidden;
            for (int j = 0; j < a.hidden; ++j) {
                w_row[j] += g * last[j];
                d_hidden[j] += g * w[j];
            }
            grad_flat[b_off + i] += g;
        }
    };
    head_backward(params.mean_w_off(), params.mean_b_off(), upstream.d_mu);
    head_backward(params.logvar_w_off(), params.logvar_b_off(), upstream.d_log_var);

    // Hidden stack in reverse; tanh'(z) = 1 - a^2 from the stored activation.
    Vec d_act = std::move(d_hidden);
    for (int l = a.n_layers - 1; l >= 0; --l) {
        const Vec& act = tape.hidden[static_cast<std::size_t>(l)];
        const Vec& below =
            l == 0 ? tape.input : tape.hidden[static_cast<std::size_t>(l) - 1];
        const int in = l == 0 ? a.d_in : a.hidden;
        Vec d_below(in, 0.0);
        const std::size_t w_off = params.layer_w_off(l);
        const std::size_t b_off = params.layer_b_off(l);
        for (int i = 0; i < a.hidden; ++i) {
            const double dz = d_act[i] * (1.0 - act[i] * act[i]);
            double* w_row = grad_flat.data() + w_off + static_cast<std::size_t>(i) * in;
            const double* w = params.flat.data() + w_off + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                w_row[j] += dz * below[j];
                d_below[j] += dz * w[j];
            }
            grad_flat[b_off + i] += dz;
        }
        d_act = std::move(d_below);
    }
    return d_act;  // gradient w.r.t. the input vector
}

}  // namespace prolap
