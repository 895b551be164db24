#include "prolap/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace prolap {

using ordered_json = nlohmann::ordered_json;

EncoderParams Checkpoint::audio_encoder() const {
    EncoderParams p = make_encoder(arch);
    if (audio_params.size() != p.flat.size()) {
        throw DataError("Checkpoint: audio parameter count does not match architecture");
    }
    p.flat = audio_params;
    return p;
}

EncoderParams Checkpoint::text_encoder() const {
    EncoderParams p = make_encoder(arch);
    if (text_params.size() != p.flat.size()) {
        throw DataError("Checkpoint: text parameter count does not match architecture");
    }
    p.flat = text_params;
    return p;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ordered_json j;
    j["format"] = "prolap-checkpoint";
    j["version"] = ckpt.version;
    j["arch"] = {{"d_in", ckpt.arch.d_in},
                 {"hidden", ckpt.arch.hidden},
                 {"n_layers", ckpt.arch.n_layers},
                 {"d_out", ckpt.arch.d_out}};
    j["alpha"] = ckpt.alpha;
    j["beta"] = ckpt.beta;
    j["variance_pinned"] = ckpt.variance_pinned;
    j["weights"] = {{"lambda1", ckpt.weights.lambda1},
                    {"lambda2", ckpt.weights.lambda2},
                    {"lambda3", ckpt.weights.lambda3},
                    {"gamma", ckpt.weights.gamma},
                    {"c", ckpt.weights.c}};
    j["seed"] = ckpt.seed;
    j["trained_steps"] = ckpt.trained_steps;
    j["adam"] = {{"beta1", ckpt.adam_beta1},
                 {"beta2", ckpt.adam_beta2},
                 {"eps", ckpt.adam_eps}};
    j["preset"] = ckpt.preset;
    j["audio_params"] = ckpt.audio_params;
    j["text_params"] = ckpt.text_params;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("save_checkpoint: cannot open " + tmp);
        out << j.dump(1) << '\n';
        if (!out) throw DataError("save_checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("save_checkpoint: rename to " + path + " failed");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "prolap-checkpoint") {
            throw DataError("load_checkpoint: not a checkpoint file: " + path);
        }
        Checkpoint c;
        c.version = j.at("version").get<int>();
        const auto& a = j.at("arch");
        c.arch.d_in = a.at("d_in").get<int>();
        c.arch.hidden = a.at("hidden").get<int>();
        c.arch.n_layers = a.at("n_layers").get<int>();
        c.arch.d_out = a.at("d_out").get<int>();
        c.alpha = j.at("alpha").get<double>();
        c.beta = j.at("beta").get<double>();
        c.variance_pinned = j.at("variance_pinned").get<bool>();
        const auto& w = j.at("weights");
        c.weights.lambda1 = w.at("lambda1").get<double>();
        c.weights.lambda2 = w.at("lambda2").get<double>();
        c.weights.lambda3 = w.at("lambda3").get<double>();
        c.weights.gamma = w.at("gamma").get<double>();
        c.weights.c = w.at("c").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.trained_steps = j.at("trained_steps").get<long long>();
        const auto& ad = j.at("adam");
        c.adam_beta1 = ad.at("beta1").get<double>();
        c.adam_beta2 = ad.at("beta2").get<double>();
        c.adam_eps = ad.at("eps").get<double>();
        c.preset = j.at("preset").get<std::string>();
        c.audio_params = j.at("audio_params").get<Vec>();
        c.text_params = j.at("text_params").get<Vec>();
        if (c.audio_params.size() != EncoderParams::flat_size(c.arch) ||
            c.text_params.size() != EncoderParams::flat_size(c.arch)) {
            throw DataError("load_checkpoint: parameter count does not match architecture");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: " + path + ": missing or bad field: " + e.what());
    }
}

}  // namespace prolap
