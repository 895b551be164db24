#include "prolap/pipeline.hpp"

namespace prolap {

namespace {

constexpr double kPinnedLogVar = -800.0;  // exp underflows to exactly 0

struct View {
    Vec input;
    const Mask* mask;
    ForwardTape tape;
};

struct EncodedBatch {
    PairBatch pair;
    std::vector<View> audio_views;   // level-major per sample, levels+1 each
    std::vector<View> text_views;
    std::vector<View> audio_cviews;  // masked contrastive views
    std::vector<View> text_cviews;
};

DiagGaussian embed_view(const EncoderParams& enc, Vec input, const Mask* mask,
                        bool pin_variance, bool with_tape,
                        std::vector<View>& store) {
    View v;
    v.input = std::move(input);
    v.mask = mask;
    DiagGaussian z = encoder_forward(enc, v.input, with_tape ? &v.tape : nullptr);
    if (pin_variance) z.log_var.assign(z.log_var.size(), kPinnedLogVar);
    store.push_back(std::move(v));
    return z;
}

EncodedBatch encode_batch(const EncoderParams& audio_enc,
                          const EncoderParams& text_enc, const BatchInputs& in,
                          bool pin_variance, bool with_tapes) {
    if (in.audio_inputs.size() != in.text_inputs.size()) {
        throw std::invalid_argument("batch_loss: audio/text batch sizes differ");
    }
    // Masked audio coordinates are filled by the audio encoder's learnable
    // mask token. Masked text coordinates are dropped to the zero background
    // (the continuous analog of removing tokens from a caption), so no
    // gradient routes to the text token and it stays at its zero init.
    const Vec text_fill(static_cast<std::size_t>(text_enc.arch.d_in), 0.0);
    if (!in.text_ppcl_inputs.empty() && in.text_ppcl_inputs.size() != in.size()) {
        throw std::invalid_argument(
            "batch_loss: text_ppcl_inputs must be empty or one per sample");
    }
    if (in.n_masked < 0 || static_cast<std::size_t>(in.n_masked) > in.size()) {
        throw std::invalid_argument("batch_loss: n_masked out of range");
    }
    const std::size_t b = in.size();
    const std::size_t levels = in.audio_chain.levels();
    if (in.text_chain.levels() != levels) {
        throw std::invalid_argument("batch_loss: mask chains must share a level count");
    }
    const bool split_text = !in.text_ppcl_inputs.empty();

    EncodedBatch enc;
    enc.audio_views.reserve(b * (levels + 1));
    enc.text_views.reserve(b * (levels + 1));
    for (std::size_t s = 0; s < b; ++s) {
        GaussianChain ca, ct;
        for (std::size_t i = 0; i <= levels; ++i) {
            ca.push_back(embed_view(
                audio_enc,
                apply_mask(in.audio_inputs[s], in.audio_chain.masks[i],
                           audio_enc.mask_token()),
                &in.audio_chain.masks[i], pin_variance, with_tapes, enc.audio_views));
            ct.push_back(embed_view(
                text_enc,
                apply_mask(in.text_inputs[s], in.text_chain.masks[i], text_fill),
                nullptr, pin_variance, with_tapes, enc.text_views));
        }
        enc.pair.audio.chains.push_back(std::move(ca));
        enc.pair.text.chains.push_back(std::move(ct));

        const bool masked = s < static_cast<std::size_t>(in.n_masked);

        // Audio: the cross-modal view is always the raw chain embedding.
        if (masked) {
            enc.pair.audio.contrast_of.push_back(
                static_cast<int>(enc.pair.audio.contrast_views.size()));
            enc.pair.audio.contrast_views.push_back(embed_view(
                audio_enc,
                apply_mask(in.audio_inputs[s], in.audio_contrast_mask,
                           audio_enc.mask_token()),
                &in.audio_contrast_mask, pin_variance, with_tapes, enc.audio_cviews));
        } else {
            enc.pair.audio.contrast_of.push_back(-1);
        }

        // Text: with a separate per-step caption, both the pairwise and the
        // cross-modal views come from it (the cross view stays unmasked).
        if (split_text) {
            const Vec& px = in.text_ppcl_inputs[s];
            const int raw_idx = static_cast<int>(enc.pair.text.contrast_views.size());
            enc.pair.text.contrast_views.push_back(
                embed_view(text_enc, px, nullptr, pin_variance, with_tapes,
                           enc.text_cviews));
            enc.pair.text.cross_of.push_back(raw_idx);
            if (masked) {
                const int masked_idx =
                    static_cast<int>(enc.pair.text.contrast_views.size());
                enc.pair.text.contrast_views.push_back(embed_view(
                    text_enc,
                    apply_mask(px, in.text_contrast_mask, text_fill),
                    nullptr, pin_variance, with_tapes, enc.text_cviews));
                enc.pair.text.contrast_of.push_back(masked_idx);
            } else {
                enc.pair.text.contrast_of.push_back(raw_idx);
            }
        } else if (masked) {
            enc.pair.text.contrast_of.push_back(
                static_cast<int>(enc.pair.text.contrast_views.size()));
            enc.pair.text.contrast_views.push_back(embed_view(
                text_enc,
                apply_mask(in.text_inputs[s], in.text_contrast_mask, text_fill),
                nullptr, pin_variance, with_tapes, enc.text_cviews));
        } else {
            enc.pair.text.contrast_of.push_back(-1);
        }
    }
    enc.pair.y = in.y;
    return enc;
}

void backprop_view(const EncoderParams& enc, const View& view, GaussGrad grad,
                   bool pin_variance, Vec& grad_flat) {
    if (pin_variance) grad.d_log_var.assign(grad.d_log_var.size(), 0.0);
    const Vec d_input = encoder_backward(enc, view.tape, grad, grad_flat);
    if (view.mask != nullptr) {
        const std::size_t off = enc.mask_token_off();
        for (std::size_t i = 0; i < d_input.size(); ++i) {
            if ((*view.mask)[i]) grad_flat[off + i] += d_input[i];
        }
    }
}

}  // namespace

PairBatch encode_pair_batch(const EncoderParams& audio_enc,
                            const EncoderParams& text_enc,
                            const BatchInputs& in, bool pin_variance) {
    return encode_batch(audio_enc, text_enc, in, pin_variance, false).pair;
}

LossComponents batch_loss_value(const EncoderParams& audio_enc,
                                const EncoderParams& text_enc,
                                const SimilarityParams& sim,
                                const BatchInputs& in, const LossWeights& w,
                                bool pin_variance, VarianceFloor* floor,
                                int threads) {
    EncodedBatch enc = encode_batch(audio_enc, text_enc, in, pin_variance, false);
    return total_loss(enc.pair, sim, w, floor, threads);
}

LossComponents batch_loss_grad(const EncoderParams& audio_enc,
                               const EncoderParams& text_enc,
                               const SimilarityParams& sim,
                               const BatchInputs& in, const LossWeights& w,
                               bool pin_variance, VarianceFloor* floor,
                               int threads, Vec& d_audio, Vec& d_text,
                               double& d_alpha, double& d_beta) {
    if (d_audio.size() != audio_enc.size() || d_text.size() != text_enc.size()) {
        throw std::invalid_argument("batch_loss_grad: gradient buffer size mismatch");
    }
    EncodedBatch enc = encode_batch(audio_enc, text_enc, in, pin_variance, true);
    TotalGrad tg = make_total_grad(enc.pair);
    const LossComponents comps =
        total_loss_grad(enc.pair, sim, w, tg, floor, threads);

    const std::size_t b = in.size();
    const std::size_t levels = in.audio_chain.levels();
    for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t i = 0; i <= levels; ++i) {
            backprop_view(audio_enc, enc.audio_views[s * (levels + 1) + i],
                          std::move(tg.audio.chains[s][i]), pin_variance, d_audio);
            backprop_view(text_enc, enc.text_views[s * (levels + 1) + i],
                          std::move(tg.text.chains[s][i]), pin_variance, d_text);
        }
    }
    for (std::size_t k = 0; k < enc.pair.audio.contrast_views.size(); ++k) {
        backprop_view(audio_enc, enc.audio_cviews[k],
                      std::move(tg.audio.contrast[k]), pin_variance, d_audio);
    }
    for (std::size_t k = 0; k < enc.pair.text.contrast_views.size(); ++k) {
        backprop_view(text_enc, enc.text_cviews[k],
                      std::move(tg.text.contrast[k]), pin_variance, d_text);
    }
    d_alpha += tg.d_alpha;
    d_beta += tg.d_beta;
    return comps;
}

}  // namespace prolap
