#pragma once

#include "prolap/encoder.hpp"
#include "prolap/losses.hpp"
#include "prolap/masking.hpp"

namespace prolap {

// One assembled minibatch of raw inputs, before encoding. The mask chains
// are shared across the batch (one per modality); the first n_masked
// samples contrast through an extra masked view instead of their raw one.
// text_ppcl_inputs, when non-empty, carry the per-step caption used by the
// pairwise and cross-modal terms, while text_inputs (the most specific
// caption) feed the mask chains; when empty the chain input serves both.
struct BatchInputs {
    std::vector<Vec> audio_inputs;
    std::vector<Vec> text_inputs;
    std::vector<Vec> text_ppcl_inputs;
    MaskChain audio_chain;
    MaskChain text_chain;
    Mask audio_contrast_mask;
    Mask text_contrast_mask;
    int n_masked = 0;
    std::vector<std::vector<int>> y;

    std::size_t size() const { return audio_inputs.size(); }
};

// Encode every view of the batch into embeddings (no tapes). Used by the
// gradient-check harness, which needs the embeddings themselves.
PairBatch encode_pair_batch(const EncoderParams& audio_enc,
                            const EncoderParams& text_enc,
                            const BatchInputs& in, bool pin_variance);

// Encode every view of the batch and evaluate the total objective.
LossComponents batch_loss_value(const EncoderParams& audio_enc,
                                const EncoderParams& text_enc,
                                const SimilarityParams& sim,
                                const BatchInputs& in, const LossWeights& w,
                                bool pin_variance, VarianceFloor* floor,
                                int threads);

// Same, with exact gradients: encoder parameter gradients are accumulated
// into d_audio / d_text (flat layout, mask-token slice included), and the
// similarity-scalar gradients into d_alpha / d_beta (w.r.t. alpha itself).
LossComponents batch_loss_grad(const EncoderParams& audio_enc,
                               const EncoderParams& text_enc,
                               const SimilarityParams& sim,
                               const BatchInputs& in, const LossWeights& w,
                               bool pin_variance, VarianceFloor* floor,
                               int threads, Vec& d_audio, Vec& d_text,
                               double& d_alpha, double& d_beta);

}  // namespace prolap
