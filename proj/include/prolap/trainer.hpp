#pragma once

#include <string>
#include <vector>

#include "prolap/checkpoint.hpp"
#include "prolap/dataset.hpp"
#include "prolap/losses.hpp"
#include "prolap/optim.hpp"

namespace prolap {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 256;  // clamped to the dataset size
    double max_lr = 2e-3;
    int warmup_epochs = 1;
    LossWeights weights;      // paper-style defaults
    double alpha_init = 10.0;
    double beta_init = -10.0;
    int levels = 3;                                  // L
    std::vector<double> keep_fractions = {0.5, 0.5}; // levels - 1 entries
    double masked_batch_fraction = 0.125;
    double mask_ratio = 0.75;
    std::uint64_t seed = 1234;
    bool deterministic = true;
    int threads = 1;
    EncoderArch arch;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // Optional mean-over-batch normalization of the objective; the literal
    // sum convention is the default.
    bool normalize_by_batch = false;
    // Deterministic baselines: every embedding variance forced to zero and
    // the log-variance head left untrained.
    bool pin_variance_zero = false;
    // Reference InfoNCE baseline on mean embeddings (no masking, no
    // probabilistic terms).
    bool use_infonce = false;
    int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only
    double variance_floor = 1e-12;
    std::string preset = "prolap-full";  // informational, recorded in checkpoints

    void validate() const;
};

// Named experiment presets (ablation rows of the retrieval/ablation
// comparison, one flag each):
//   prolap-full     - all objectives on
//   prolap-hier     - hierarchical inclusion on, mask repulsion off
//   prolap-mr       - mask repulsion on, hierarchical inclusion off
//   prolap-baseline - plain probabilistic contrastive (lambda1 = lambda2 = 0)
//   siglip-det      - deterministic sigmoid baseline (variances pinned to 0,
//                     all auxiliary weights 0)
//   clap-infonce    - deterministic InfoNCE reference baseline
std::vector<std::string> preset_names();
void apply_preset(TrainConfig& cfg, const std::string& preset);

struct TrainResult {
    Checkpoint checkpoint;
    std::string checkpoint_path;
    std::string metrics_path;
    long long steps = 0;
    long long variance_floor_hits = 0;
    double final_total_loss = 0.0;
};

// Full optimization loop: seeded shuffling, one mask chain per modality per
// batch, uniform caption-level draw per item per step, total objective with
// exact backpropagation, Adam with warm-up + cosine schedule. Writes
// metrics.csv (step, lr, ppcl, l_inc_cross, l_inc_hier, l_mr, l_vib, total)
// and checkpoint_final.json under out_dir. Deterministic given the seed.
// Throws NumericError with the offending batch seed if the loss goes
// non-finite.
TrainResult train(const HierDataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir);

}  // namespace prolap
