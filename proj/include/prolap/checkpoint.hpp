#pragma once

#include <cstdint>
#include <string>

#include "prolap/encoder.hpp"
#include "prolap/losses.hpp"

namespace prolap {

// Everything needed to embed inputs with a trained model. Bit-exact JSON
// round trip (doubles are serialized with shortest round-trip precision).
struct Checkpoint {
    int version = 1;
    EncoderArch arch;
    Vec audio_params;
    Vec text_params;
    double alpha = 10.0;
    double beta = -10.0;
    // Deterministic baselines pin every variance to zero and are evaluated
    // with cosine similarity instead of the corrected similarity.
    bool variance_pinned = false;
    LossWeights weights;
    std::uint64_t seed = 0;
    long long trained_steps = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string preset;

    EncoderParams audio_encoder() const;
    EncoderParams text_encoder() const;
};

// Atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prolap
