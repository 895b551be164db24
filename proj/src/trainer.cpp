#include "prolap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "prolap/pipeline.hpp"
#include "prolap/rng.hpp"

namespace prolap {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(max_lr > 0.0)) throw std::invalid_argument("TrainConfig: max_lr must be > 0");
    if (warmup_epochs < 0) throw std::invalid_argument("TrainConfig: warmup_epochs must be >= 0");
    weights.validate();
    if (!(alpha_init > 0.0)) throw std::invalid_argument("TrainConfig: alpha_init must be > 0");
    if (levels < 1) throw std::invalid_argument("TrainConfig: levels must be >= 1");
    if (keep_fractions.size() + 1 != static_cast<std::size_t>(levels)) {
        throw std::invalid_argument("TrainConfig: need levels-1 keep fractions");
    }
    if (!(masked_batch_fraction >= 0.0 && masked_batch_fraction <= 1.0) ||
        !(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
        throw std::invalid_argument(
            "TrainConfig: masked_batch_fraction and mask_ratio must lie in [0,1]");
    }
    if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
    arch.validate();
    if (pin_variance_zero &&
        (weights.lambda1 != 0.0 || weights.lambda2 != 0.0 ||
         weights.lambda3 != 0.0 || weights.gamma != 0.0)) {
        throw std::invalid_argument(
            "TrainConfig: pinned variance requires all probabilistic weights = 0");
    }
    if (!(variance_floor > 0.0)) {
        throw std::invalid_argument("TrainConfig: variance_floor must be > 0");
    }
}

std::vector<std::string> preset_names() {
    return {"prolap-full", "prolap-hier", "prolap-mr",
            "prolap-baseline", "siglip-det", "clap-infonce"};
}

void apply_preset(TrainConfig& cfg, const std::string& preset) {
    cfg.preset = preset;
    if (preset == "prolap-full") {
        return;  // all objectives at their configured weights
    }
    if (preset == "prolap-hier") {
        cfg.weights.lambda2 = 0.0;
        return;
    }
    if (preset == "prolap-mr") {
        cfg.weights.lambda1 = 0.0;
        return;
    }
    if (preset == "prolap-baseline") {
        cfg.weights.lambda1 = 0.0;
        cfg.weights.lambda2 = 0.0;
        return;
    }
    if (preset == "siglip-det") {
        cfg.weights = LossWeights{0.0, 0.0, 0.0, 0.0, cfg.weights.c};
        cfg.pin_variance_zero = true;
        cfg.masked_batch_fraction = 0.0;
        return;
    }
    if (preset == "clap-infonce") {
        cfg.weights = LossWeights{0.0, 0.0, 0.0, 0.0, cfg.weights.c};
        cfg.pin_variance_zero = true;
        cfg.use_infonce = true;
        cfg.masked_batch_fraction = 0.0;
        return;
    }
    throw std::invalid_argument("unknown preset: " + preset);
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct ParamSet {
    EncoderParams audio;
    EncoderParams text;
    double log_alpha = 0.0;
    double beta = 0.0;

    std::size_t joint_size() const { return audio.size() + text.size() + 2; }

    Vec joint() const {
        Vec v;
        v.reserve(joint_size());
        v.insert(v.end(), audio.flat.begin(), audio.flat.end());
        v.insert(v.end(), text.flat.begin(), text.flat.end());
        v.push_back(log_alpha);
        v.push_back(beta);
        return v;
    }

    void scatter(const Vec& v) {
        std::copy(v.begin(), v.begin() + audio.size(), audio.flat.begin());
        std::copy(v.begin() + audio.size(), v.begin() + audio.size() + text.size(),
                  text.flat.begin());
        log_alpha = v[audio.size() + text.size()];
        beta = v[audio.size() + text.size() + 1];
        bump_revision(audio);
        bump_revision(text);
    }
};

// InfoNCE reference baseline: raw views only, means only.
double infonce_batch(const ParamSet& params, const HierDataset& ds,
                     const std::vector<int>& order, long long bstart, int b,
                     Rng& brng, Vec& d_audio, Vec& d_text, double& d_alpha) {
    std::vector<Vec> audio_mu(b), text_mu(b);
    std::vector<ForwardTape> audio_tapes(b), text_tapes(b);
    for (int s = 0; s < b; ++s) {
        const HierItem& item = ds.items[static_cast<std::size_t>(order[bstart + s])];
        const int lvl = static_cast<int>(brng.below(kCaptionLevels));
        audio_mu[s] = encoder_forward(params.audio, item.audio, &audio_tapes[s]).mu;
        text_mu[s] =
            encoder_forward(params.text, item.captions[lvl], &text_tapes[s]).mu;
    }
    std::vector<Vec> d_audio_mu(b), d_text_mu(b);
    double d_scale = 0.0;
    const double alpha = std::exp(params.log_alpha);
    const double value =
        info_nce_loss_grad(audio_mu, text_mu, alpha, d_audio_mu, d_text_mu, d_scale);
    const std::size_t d_out = audio_mu.front().size();
    for (int s = 0; s < b; ++s) {
        GaussGrad g;
        g.resize(d_out);
        g.d_mu = d_audio_mu[s];
        encoder_backward(params.audio, audio_tapes[s], g, d_audio);
        g.d_mu = d_text_mu[s];
        encoder_backward(params.text, text_tapes[s], g, d_text);
    }
    d_alpha += d_scale;
    return value;
}

}  // namespace

TrainResult train(const HierDataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir) {
    cfg.validate();
    if (ds.items.empty()) throw DataError("train: dataset is empty");
    if (ds.config.d_in != cfg.arch.d_in) {
        throw DataError("train: dataset d_in " + std::to_string(ds.config.d_in) +
                        " does not match encoder d_in " + std::to_string(cfg.arch.d_in));
    }
    fs::create_directories(out_dir);

    const int n = static_cast<int>(ds.items.size());
    const int batch = std::min(cfg.batch_size, n);
    const long long steps_per_epoch = (n + batch - 1) / batch;
    const long long total_steps = steps_per_epoch * cfg.epochs;
    const long long warmup_steps =
        std::min<long long>(steps_per_epoch * cfg.warmup_epochs, total_steps);

    Rng root(cfg.seed);
    Rng init_rng = root.fork(0);

    ParamSet params;
    params.audio = make_encoder(cfg.arch, init_rng);
    params.text = make_encoder(cfg.arch, init_rng);
    params.log_alpha = std::log(cfg.alpha_init);
    params.beta = cfg.beta_init;

    AdamState adam = AdamState::init(params.joint_size(), cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps);

    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream metrics(metrics_path);
    if (!metrics) throw DataError("train: cannot open " + metrics_path);
    metrics << "step,lr,ppcl,l_inc_cross,l_inc_hier,l_mr,l_vib,total\n";

    VarianceFloor floor{cfg.variance_floor, 0};
    const std::size_t d_in = static_cast<std::size_t>(cfg.arch.d_in);
    const std::size_t levels = static_cast<std::size_t>(cfg.levels);

    auto make_checkpoint = [&](long long steps) {
        Checkpoint c;
        c.arch = cfg.arch;
        c.audio_params = params.audio.flat;
        c.text_params = params.text.flat;
        c.alpha = std::exp(params.log_alpha);
        c.beta = params.beta;
        c.variance_pinned = cfg.pin_variance_zero;
        c.weights = cfg.weights;
        c.seed = cfg.seed;
        c.trained_steps = steps;
        c.adam_beta1 = cfg.adam_beta1;
        c.adam_beta2 = cfg.adam_beta2;
        c.adam_eps = cfg.adam_eps;
        c.preset = cfg.preset;
        return c;
    };

    long long global_step = 0;
    double last_total = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded Fisher-Yates shuffle of the item order.
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(Rng::mix(cfg.seed, 0xE90C000ULL + static_cast<std::uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) {
            const int j =
                static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        for (long long bstart = 0; bstart < n; bstart += batch) {
            ++global_step;
            const int b = static_cast<int>(std::min<long long>(batch, n - bstart));
            const std::uint64_t batch_seed =
                Rng::mix(cfg.seed, 0xBA7C4000ULL + static_cast<std::uint64_t>(global_step));
            Rng brng(batch_seed);

            const double lr = lr_at(global_step, total_steps, warmup_steps, cfg.max_lr);
            const SimilarityParams sim{std::exp(params.log_alpha), params.beta};
            if (!std::isfinite(sim.alpha) || !(sim.alpha > 0.0) ||
                !std::isfinite(sim.beta)) {
                throw NumericError("train: similarity scalars diverged at step " +
                                   std::to_string(global_step) + " (batch seed " +
                                   std::to_string(batch_seed) + ")");
            }
            const double scale = cfg.normalize_by_batch ? 1.0 / b : 1.0;

            Vec d_audio(params.audio.size(), 0.0);
            Vec d_text(params.text.size(), 0.0);
            double d_alpha = 0.0, d_beta = 0.0;
            LossComponents comps;

            if (cfg.use_infonce) {
                comps.ppcl = infonce_batch(params, ds, order, bstart, b, brng,
                                           d_audio, d_text, d_alpha);
            } else {
                BatchInputs in;
                in.audio_chain = build_chain(d_in, levels, cfg.keep_fractions, brng);
                in.text_chain = build_chain(d_in, levels, cfg.keep_fractions, brng);
                in.n_masked = std::min<int>(
                    b, static_cast<int>(std::lround(cfg.masked_batch_fraction * b)));
                if (in.n_masked > 0) {
                    in.audio_contrast_mask = draw_mask(d_in, cfg.mask_ratio, brng);
                    in.text_contrast_mask = draw_mask(d_in, cfg.mask_ratio, brng);
                }
                for (int s = 0; s < b; ++s) {
                    const HierItem& item =
                        ds.items[static_cast<std::size_t>(order[bstart + s])];
                    const int lvl = static_cast<int>(brng.below(kCaptionLevels));
                    in.audio_inputs.push_back(item.audio);
                    // The intra-modal chain always masks the most specific
                    // caption; the uniformly drawn level enters the pairwise
                    // and cross-modal terms.
                    in.text_inputs.push_back(item.captions[kCaptionLevels - 1]);
                    in.text_ppcl_inputs.push_back(item.captions[lvl]);
                }
                in.y.assign(b, std::vector<int>(b, -1));
                for (int i = 0; i < b; ++i) in.y[i][i] = 1;

                comps = batch_loss_grad(params.audio, params.text, sim, in,
                                        cfg.weights, cfg.pin_variance_zero, &floor,
                                        cfg.threads, d_audio, d_text, d_alpha, d_beta);
            }

            if (cfg.normalize_by_batch) {
                comps.ppcl *= scale;
                comps.inc_cross *= scale;
                comps.inc_hier *= scale;
                comps.mask_repulsive *= scale;
                comps.vib *= scale;
                for (double& v : d_audio) v *= scale;
                for (double& v : d_text) v *= scale;
                d_alpha *= scale;
                d_beta *= scale;
            }

            last_total = comps.total();
            if (!std::isfinite(last_total)) {
                throw NumericError("train: non-finite loss at step " +
                                   std::to_string(global_step) + " (batch seed " +
                                   std::to_string(batch_seed) + ")");
            }

            // alpha is optimized as log(alpha) to keep it positive.
            Vec joint = params.joint();
            Vec joint_grad;
            joint_grad.reserve(joint.size());
            joint_grad.insert(joint_grad.end(), d_audio.begin(), d_audio.end());
            joint_grad.insert(joint_grad.end(), d_text.begin(), d_text.end());
            joint_grad.push_back(d_alpha * sim.alpha);
            joint_grad.push_back(d_beta);

            adam_step(joint, joint_grad, adam, lr);
            params.scatter(joint);

            metrics << global_step << ',' << fmt17(lr) << ',' << fmt17(comps.ppcl)
                    << ',' << fmt17(comps.inc_cross) << ',' << fmt17(comps.inc_hier)
                    << ',' << fmt17(comps.mask_repulsive) << ',' << fmt17(comps.vib)
                    << ',' << fmt17(last_total) << '\n';
        }

        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
            epoch + 1 < cfg.epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_epoch%04d.json", epoch + 1);
            save_checkpoint(make_checkpoint(global_step),
                            (fs::path(out_dir) / name).string());
        }
    }

    metrics.close();
    if (!metrics) throw DataError("train: failed writing " + metrics_path);

    TrainResult res;
    res.checkpoint = make_checkpoint(global_step);
    res.checkpoint_path = (fs::path(out_dir) / "checkpoint_final.json").string();
    save_checkpoint(res.checkpoint, res.checkpoint_path);
    res.metrics_path = metrics_path;
    res.steps = global_step;
    res.variance_floor_hits = floor.hits;
    res.final_total_loss = last_total;
    if (floor.hits > 0) {
        std::cerr << "train: variance floor " << cfg.variance_floor << " hit "
                  << floor.hits << " times\n";
    }
    return res;
}

}  // namespace prolap
