#include "prolap/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prolap/configfile.hpp"
#include "prolap/dataset.hpp"
#include "prolap/eval.hpp"
#include "prolap/fdcheck.hpp"
#include "prolap/masking.hpp"
#include "prolap/rng.hpp"
#include "prolap/trainer.hpp"

namespace prolap {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string git_describe() {
    FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (pipe == nullptr) return "unknown";
    char buf[128] = {0};
    std::string out;
    while (fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

// Refuses to reuse a populated output directory unless forced.
void prepare_out_dir(const std::string& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw DataError("output path exists and is not a directory: " + dir);
        }
        if (!fs::is_empty(dir) && !force) {
            throw DataError("output directory not empty (use --force): " + dir);
        }
    }
    fs::create_directories(dir);
}

struct Manifest {
    std::string command;
    ordered_json resolved_config = ordered_json::object();
    ordered_json seeds = ordered_json::object();
    ordered_json inputs = ordered_json::object();
    ordered_json outputs = ordered_json::object();
    std::string out_dir;

    void write(const std::string& status) const {
        ordered_json j;
        j["command"] = command;
        j["resolved_config"] = resolved_config;
        j["seeds"] = seeds;
        j["git_describe"] = git_describe();
        j["started"] = started_;
        if (status != "started") j["finished"] = timestamp_utc();
        j["status"] = status;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        if (!out) throw DataError("cannot write manifest in " + out_dir);
        out << j.dump(1) << '\n';
    }

    void start() {
        started_ = timestamp_utc();
        write("started");
    }

private:
    std::string started_;
};

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- gen-data ----

GenConfig gen_config_from_file(const ConfigFile& cf) {
    GenConfig cfg;
    const GenConfig defaults;
    const std::vector<std::string> known = {
        "n_items", "branching", "d_in", "proto_scales", "instance_scale",
        "audio_noise", "caption_noise", "informative_fraction", "seed"};
    for (const auto& key : cf.unknown_keys(known)) {
        throw DataError("gen-data config: unknown key '" + key + "'");
    }
    cfg.n_items = cf.get_int("n_items", defaults.n_items);
    cfg.d_in = cf.get_int("d_in", defaults.d_in);
    cfg.instance_scale = cf.get_double("instance_scale", defaults.instance_scale);
    cfg.audio_noise = cf.get_double("audio_noise", defaults.audio_noise);
    cfg.seed = cf.get_u64("seed", defaults.seed);
    auto fill4 = [&](const char* key, auto& arr) {
        std::vector<double> fb(arr.begin(), arr.end());
        const auto vals = cf.get_doubles(key, fb);
        if (vals.size() != arr.size()) {
            throw DataError(std::string("gen-data config: '") + key + "' needs " +
                            std::to_string(arr.size()) + " comma-separated values");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            arr[i] = static_cast<std::remove_reference_t<decltype(arr[i])>>(vals[i]);
        }
    };
    fill4("branching", cfg.branching);
    fill4("proto_scales", cfg.proto_scales);
    fill4("caption_noise", cfg.caption_noise);
    fill4("informative_fraction", cfg.informative_fraction);
    return cfg;
}

ordered_json gen_config_json(const GenConfig& c) {
    ordered_json j;
    j["n_items"] = c.n_items;
    j["branching"] = c.branching;
    j["d_in"] = c.d_in;
    j["proto_scales"] = c.proto_scales;
    j["instance_scale"] = c.instance_scale;
    j["audio_noise"] = c.audio_noise;
    j["caption_noise"] = c.caption_noise;
    j["informative_fraction"] = c.informative_fraction;
    j["seed"] = c.seed;
    return j;
}

int run_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_override, bool force) {
    GenConfig cfg = config_path.empty()
                        ? GenConfig{}
                        : gen_config_from_file(ConfigFile::parse_file(config_path));
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.validate();

    prepare_out_dir(out_dir, force);
    Manifest man;
    man.command = "gen-data";
    man.resolved_config = gen_config_json(cfg);
    man.seeds["dataset"] = cfg.seed;
    if (!config_path.empty()) man.inputs["config"] = config_path;
    const std::string data_path = (fs::path(out_dir) / "dataset.txt").string();
    man.outputs["dataset"] = data_path;
    man.out_dir = out_dir;
    man.start();

    const HierDataset ds = generate(cfg);
    save_dataset(ds, data_path);

    // Summary, including the specificity trend the generator guarantees.
    std::cout << "dataset: " << ds.items.size() << " items, tree "
              << cfg.branching[0] << "x" << cfg.branching[1] << "x"
              << cfg.branching[2] << "x" << cfg.branching[3] << " ("
              << ds.concept_tree[3].size() << " leaves), d_in " << cfg.d_in << "\n";
    for (int k = 0; k < kCaptionLevels; ++k) {
        double mean = 0.0;
        for (const auto& item : ds.items) {
            double s = 0.0;
            for (std::size_t i = 0; i < item.audio.size(); ++i) {
                const double diff = item.captions[k][i] - item.audio[i];
                s += diff * diff;
            }
            mean += std::sqrt(s);
        }
        mean /= std::max<std::size_t>(1, ds.items.size());
        std::cout << "  level " << (k + 1) << " caption mean distance to audio: "
                  << mean << "\n";
    }
    std::cout << "specificity monotonicity: ok (checked at generation)\n"
              << "wrote " << data_path << "\n";
    man.write("ok");
    return 0;
}

// ---- train ----

TrainConfig train_config_from_file(const ConfigFile& cf) {
    TrainConfig cfg;
    const TrainConfig defaults;
    const std::vector<std::string> known = {
        "epochs", "batch_size", "max_lr", "warmup_epochs", "lambda1", "lambda2",
        "lambda3", "gamma", "c", "alpha_init", "beta_init", "levels",
        "keep_fractions", "masked_batch_fraction", "mask_ratio", "seed",
        "deterministic", "threads", "d_in", "hidden", "n_layers", "d_out",
        "adam_beta1", "adam_beta2", "adam_eps", "normalize_by_batch",
        "checkpoint_every", "variance_floor"};
    for (const auto& key : cf.unknown_keys(known)) {
        throw DataError("train config: unknown key '" + key + "'");
    }
    cfg.epochs = cf.get_int("epochs", defaults.epochs);
    cfg.batch_size = cf.get_int("batch_size", defaults.batch_size);
    cfg.max_lr = cf.get_double("max_lr", defaults.max_lr);
    cfg.warmup_epochs = cf.get_int("warmup_epochs", defaults.warmup_epochs);
    cfg.weights.lambda1 = cf.get_double("lambda1", defaults.weights.lambda1);
    cfg.weights.lambda2 = cf.get_double("lambda2", defaults.weights.lambda2);
    cfg.weights.lambda3 = cf.get_double("lambda3", defaults.weights.lambda3);
    cfg.weights.gamma = cf.get_double("gamma", defaults.weights.gamma);
    cfg.weights.c = cf.get_double("c", defaults.weights.c);
    cfg.alpha_init = cf.get_double("alpha_init", defaults.alpha_init);
    cfg.beta_init = cf.get_double("beta_init", defaults.beta_init);
    cfg.levels = cf.get_int("levels", defaults.levels);
    cfg.keep_fractions = cf.get_doubles("keep_fractions", defaults.keep_fractions);
    cfg.masked_batch_fraction =
        cf.get_double("masked_batch_fraction", defaults.masked_batch_fraction);
    cfg.mask_ratio = cf.get_double("mask_ratio", defaults.mask_ratio);
    cfg.seed = cf.get_u64("seed", defaults.seed);
    cfg.deterministic = cf.get_bool("deterministic", defaults.deterministic);
    cfg.threads = cf.get_int("threads", defaults.threads);
    cfg.arch.d_in = cf.get_int("d_in", defaults.arch.d_in);
    cfg.arch.hidden = cf.get_int("hidden", defaults.arch.hidden);
    cfg.arch.n_layers = cf.get_int("n_layers", defaults.arch.n_layers);
    cfg.arch.d_out = cf.get_int("d_out", defaults.arch.d_out);
    cfg.adam_beta1 = cf.get_double("adam_beta1", defaults.adam_beta1);
    cfg.adam_beta2 = cf.get_double("adam_beta2", defaults.adam_beta2);
    cfg.adam_eps = cf.get_double("adam_eps", defaults.adam_eps);
    cfg.normalize_by_batch =
        cf.get_bool("normalize_by_batch", defaults.normalize_by_batch);
    cfg.checkpoint_every = cf.get_int("checkpoint_every", defaults.checkpoint_every);
    cfg.variance_floor = cf.get_double("variance_floor", defaults.variance_floor);
    return cfg;
}

ordered_json train_config_json(const TrainConfig& c) {
    ordered_json j;
    j["preset"] = c.preset;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["max_lr"] = c.max_lr;
    j["warmup_epochs"] = c.warmup_epochs;
    j["lambda1"] = c.weights.lambda1;
    j["lambda2"] = c.weights.lambda2;
    j["lambda3"] = c.weights.lambda3;
    j["gamma"] = c.weights.gamma;
    j["c"] = c.weights.c;
    j["alpha_init"] = c.alpha_init;
    j["beta_init"] = c.beta_init;
    j["levels"] = c.levels;
    j["keep_fractions"] = c.keep_fractions;
    j["masked_batch_fraction"] = c.masked_batch_fraction;
    j["mask_ratio"] = c.mask_ratio;
    j["seed"] = c.seed;
    j["deterministic"] = c.deterministic;
    j["threads"] = c.threads;
    j["d_in"] = c.arch.d_in;
    j["hidden"] = c.arch.hidden;
    j["n_layers"] = c.arch.n_layers;
    j["d_out"] = c.arch.d_out;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["normalize_by_batch"] = c.normalize_by_batch;
    j["pin_variance_zero"] = c.pin_variance_zero;
    j["use_infonce"] = c.use_infonce;
    j["checkpoint_every"] = c.checkpoint_every;
    j["variance_floor"] = c.variance_floor;
    return j;
}

struct TrainCliOverrides {
    int epochs = -1;
    int batch_size = -1;
    double max_lr = -1.0;
    std::int64_t seed = -1;
    int threads = -1;
    int deterministic = -1;  // tri-state
};

int run_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_dir, const std::string& preset,
              const TrainCliOverrides& ov, bool force) {
    TrainConfig cfg = config_path.empty()
                          ? TrainConfig{}
                          : train_config_from_file(ConfigFile::parse_file(config_path));
    apply_preset(cfg, preset);
    // CLI overrides win over file values.
    if (ov.epochs >= 0) cfg.epochs = ov.epochs;
    if (ov.batch_size >= 0) cfg.batch_size = ov.batch_size;
    if (ov.max_lr > 0.0) cfg.max_lr = ov.max_lr;
    if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
    if (ov.threads >= 1) cfg.threads = ov.threads;
    if (ov.deterministic >= 0) cfg.deterministic = ov.deterministic != 0;
    cfg.validate();

    const HierDataset ds = load_dataset(dataset_path);

    prepare_out_dir(out_dir, force);
    Manifest man;
    man.command = "train";
    man.resolved_config = train_config_json(cfg);
    man.seeds["train"] = cfg.seed;
    man.seeds["dataset"] = ds.config.seed;
    man.inputs["dataset"] = dataset_path;
    if (!config_path.empty()) man.inputs["config"] = config_path;
    man.outputs["checkpoint"] = (fs::path(out_dir) / "checkpoint_final.json").string();
    man.outputs["metrics"] = (fs::path(out_dir) / "metrics.csv").string();
    man.out_dir = out_dir;
    man.start();

    const TrainResult res = train(ds, cfg, out_dir);
    std::cout << "trained " << res.steps << " steps; final total loss "
              << res.final_total_loss << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n"
              << "metrics:    " << res.metrics_path << "\n";
    man.write("ok");
    return 0;
}

// ---- eval ----

std::vector<std::vector<int>> identity_relevance(std::size_t n) {
    std::vector<std::vector<int>> rel(n);
    for (std::size_t i = 0; i < n; ++i) rel[i] = {static_cast<int>(i)};
    return rel;
}

void write_retrieval_csv(const std::string& path,
                         const std::vector<RetrievalReport>& reports) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "direction,r_at_1,r_at_5,r_at_10,map_at_10\n";
    for (const auto& r : reports) {
        out << r.direction << ',' << pct(r.r_at.at(1)) << ',' << pct(r.r_at.at(5))
            << ',' << pct(r.r_at.at(10)) << ',' << pct(r.map_at_10) << '\n';
    }
}

void print_retrieval(const RetrievalReport& r) {
    std::cout << "  " << std::left << std::setw(12) << r.direction << std::right
              << "  R@1 " << std::setw(6) << pct(r.r_at.at(1)) << "  R@5 "
              << std::setw(6) << pct(r.r_at.at(5)) << "  R@10 " << std::setw(6)
              << pct(r.r_at.at(10)) << "  mAP@10 " << std::setw(6)
              << pct(r.map_at_10) << "\n";
}

int run_eval(const std::string& ckpt_path, const std::string& dataset_path,
             const std::string& embeddings_path, const std::string& task,
             const std::string& out_dir, int n_points, std::int64_t seed_override,
             bool dump_embeddings, bool force) {
    prepare_out_dir(out_dir, force);

    Manifest man;
    man.command = "eval";
    man.resolved_config["task"] = task;
    man.resolved_config["n_points"] = n_points;
    if (!ckpt_path.empty()) man.inputs["checkpoint"] = ckpt_path;
    if (!dataset_path.empty()) man.inputs["dataset"] = dataset_path;
    if (!embeddings_path.empty()) man.inputs["embeddings"] = embeddings_path;
    man.out_dir = out_dir;

    // Embeddings either come from a checkpoint applied to a dataset, or
    // from an external JSONL dump (retrieval and inclusion tasks).
    std::vector<DiagGaussian> audio;
    std::vector<std::vector<DiagGaussian>> captions;  // [item][level-1]
    SimilarityKind kind = SimilarityKind::csd;
    Checkpoint ckpt;
    HierDataset ds;
    bool have_model = false;

    if (!embeddings_path.empty()) {
        const auto records = load_embeddings_jsonl(embeddings_path);
        std::map<int, DiagGaussian> audio_by_id;
        std::map<int, std::map<int, DiagGaussian>> caps_by_id;
        for (const auto& rec : records) {
            if (rec.level == 0) {
                audio_by_id.emplace(rec.id, rec.z);
            } else if (rec.level >= 1 && rec.level <= kCaptionLevels) {
                caps_by_id[rec.id].emplace(rec.level, rec.z);
            } else {
                throw DataError("embeddings: bad level " + std::to_string(rec.level));
            }
        }
        for (const auto& [id, z] : audio_by_id) {
            const auto it = caps_by_id.find(id);
            if (it == caps_by_id.end() || it->second.size() != kCaptionLevels) {
                throw DataError("embeddings: item " + std::to_string(id) +
                                " lacks a full 4-level caption set");
            }
            audio.push_back(z);
            std::vector<DiagGaussian> caps;
            for (int lvl = 1; lvl <= kCaptionLevels; ++lvl) caps.push_back(it->second.at(lvl));
            captions.push_back(std::move(caps));
        }
        man.seeds["embeddings"] = "external";
    } else {
        if (ckpt_path.empty() || dataset_path.empty()) {
            throw std::invalid_argument(
                "eval: need --checkpoint and --dataset (or --embeddings)");
        }
        ckpt = load_checkpoint(ckpt_path);
        ds = load_dataset(dataset_path);
        if (ckpt.arch.d_in != ds.config.d_in) {
            throw DataError("eval: checkpoint d_in " + std::to_string(ckpt.arch.d_in) +
                            " does not match dataset d_in " +
                            std::to_string(ds.config.d_in));
        }
        have_model = true;
        const EmbeddedDataset emb = embed_dataset(ckpt, ds);
        kind = emb.kind;
        audio = emb.audio;
        captions.reserve(emb.captions.size());
        for (const auto& caps : emb.captions) {
            captions.emplace_back(caps.begin(), caps.end());
        }
        man.seeds["model"] = ckpt.seed;
        man.seeds["dataset"] = ds.config.seed;
    }
    const std::uint64_t eval_seed =
        seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                           : Rng::mix(have_model ? ckpt.seed : 0, 0xEA71ULL);
    man.seeds["eval"] = eval_seed;
    man.start();

    if (audio.empty()) throw DataError("eval: no items to evaluate");
    const std::size_t n = audio.size();

    if (dump_embeddings) {
        if (!have_model) throw std::invalid_argument("eval: --dump-embeddings needs a checkpoint");
        std::vector<EmbeddingRecord> records;
        for (std::size_t i = 0; i < n; ++i) {
            records.push_back({ds.items[i].id, 0, audio[i]});
            for (int k = 0; k < kCaptionLevels; ++k) {
                records.push_back({ds.items[i].id, k + 1, captions[i][k]});
            }
        }
        const std::string path = (fs::path(out_dir) / "embeddings.jsonl").string();
        save_embeddings_jsonl(records, path);
        man.outputs["embeddings"] = path;
    }

    if (task == "retrieval") {
        // Gallery: the most specific (level-4) caption of every item.
        std::vector<DiagGaussian> cap4;
        cap4.reserve(n);
        for (const auto& caps : captions) cap4.push_back(caps[kCaptionLevels - 1]);
        const auto rel = identity_relevance(n);
        std::vector<RetrievalReport> reports;
        reports.push_back(retrieval_eval(audio, cap4, rel, kind, "audio->text"));
        reports.push_back(retrieval_eval(cap4, audio, rel, kind, "text->audio"));
        const std::string path = (fs::path(out_dir) / "retrieval.csv").string();
        write_retrieval_csv(path, reports);
        man.outputs["retrieval"] = path;
        std::cout << "retrieval over " << n << " items (values in %):\n";
        for (const auto& r : reports) print_retrieval(r);
    } else if (task == "inclusion") {
        std::vector<DiagGaussian> lv1, lv4;
        for (const auto& caps : captions) {
            lv1.push_back(caps[0]);
            lv4.push_back(caps[kCaptionLevels - 1]);
        }
        const double rate = inclusion_test_rate(lv1, lv4);
        const std::string path = (fs::path(out_dir) / "inclusion.csv").string();
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path);
        out << "item,h_lv4_in_lv1\n";
        for (std::size_t i = 0; i < n; ++i) {
            out << i << ',' << fmt17(inclusion_score(lv4[i], lv1[i])) << '\n';
        }
        std::ofstream sum(fs::path(out_dir) / "inclusion_summary.csv");
        sum << "inclusion_test_rate_pct\n" << rate << '\n';
        man.outputs["inclusion"] = path;
        std::cout << "inclusion test (level-1 covers level-4): " << rate << "% of "
                  << n << " items\n";
    } else if (task == "traversal") {
        if (!have_model) {
            throw std::invalid_argument("eval: traversal needs a checkpoint (root construction)");
        }
        // Gallery: all captions at all levels.
        std::vector<DiagGaussian> gallery;
        std::vector<GalleryLabel> labels;
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < kCaptionLevels; ++k) {
                gallery.push_back(captions[i][k]);
                labels.push_back({ds.items[i].id, k + 1});
            }
        }
        const DiagGaussian empty_cap = embed_empty_caption(ckpt);
        TraversalReport report;
        const std::string trace_path = (fs::path(out_dir) / "traversal.csv").string();
        std::ofstream out(trace_path);
        if (!out) throw DataError("cannot write " + trace_path);
        out << "item,precision,r_at_1,lv1_found,trace\n";
        for (std::size_t i = 0; i < n; ++i) {
            // Probabilistic root: average of the empty-caption embedding and
            // the query's most inclusive caption. Deterministic baselines use
            // the empty-caption embedding alone.
            DiagGaussian root = empty_cap;
            if (kind == SimilarityKind::csd) {
                root = make_root(empty_cap, gallery[most_inclusive_index(audio[i], gallery)]);
            }
            TraversalEntry e = traverse(audio[i], gallery, labels, root, n_points,
                                        kind, ds.items[i].id);
            out << e.item_id << ',' << e.precision << ',' << e.r_at_1 << ','
                << (e.lv1_found ? 1 : 0) << ',';
            for (std::size_t p = 0; p < e.raw_trace.size(); ++p) {
                out << (p ? ";" : "") << e.raw_trace[p];
            }
            out << '\n';
            report.precision += e.precision;
            report.r_at_1 += e.r_at_1;
            report.r_at_1_lv1 += e.lv1_found ? 1.0 : 0.0;
            report.entries.push_back(std::move(e));
        }
        report.precision /= static_cast<double>(n);
        report.r_at_1 /= static_cast<double>(n);
        report.r_at_1_lv1 /= static_cast<double>(n);
        std::ofstream sum(fs::path(out_dir) / "traversal_summary.csv");
        sum << "precision,r_at_1,r_at_1_lv1\n"
            << pct(report.precision) << ',' << pct(report.r_at_1) << ','
            << pct(report.r_at_1_lv1) << '\n';
        man.outputs["traversal"] = trace_path;
        std::cout << "traversal over " << n << " items, " << n_points
                  << " points (values in %):\n  Prec. " << pct(report.precision)
                  << "  R@1 " << pct(report.r_at_1) << "  R@1-Lv1 "
                  << pct(report.r_at_1_lv1) << "\n";
    } else if (task == "uncertainty") {
        if (!have_model) {
            throw std::invalid_argument("eval: uncertainty needs a checkpoint (masked views)");
        }
        // (a) caption level and (b) informative-length buckets.
        std::vector<DiagGaussian> cap_embeds;
        std::vector<std::string> by_level, by_len;
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < kCaptionLevels; ++k) {
                cap_embeds.push_back(captions[i][k]);
                by_level.push_back("level_" + std::to_string(k + 1));
                by_len.push_back("len_" + std::to_string(ds.items[i].caption_len[k]));
            }
        }
        // (c) mask levels: one fresh chain per modality, levels from the
        // checkpoint's training setting are not stored, so use L = 3.
        const std::size_t levels = 3;
        Rng mask_rng(eval_seed);
        const EncoderParams audio_enc = ckpt.audio_encoder();
        const EncoderParams text_enc = ckpt.text_encoder();
        const MaskChain audio_chain = build_chain(
            static_cast<std::size_t>(ckpt.arch.d_in), levels, {0.5, 0.5}, mask_rng);
        const MaskChain text_chain = build_chain(
            static_cast<std::size_t>(ckpt.arch.d_in), levels, {0.5, 0.5}, mask_rng);
        std::vector<DiagGaussian> mask_embeds;
        std::vector<std::string> by_mask;
        auto mask_group = [&](std::size_t lvl) {
            if (lvl == 0) return std::string("fully_masked");
            if (lvl == levels) return std::string("raw");
            return std::string("intermediate");
        };
        // Masked text coordinates drop to the zero background; masked audio
        // coordinates take the learnable token, mirroring training.
        const Vec text_fill(static_cast<std::size_t>(ckpt.arch.d_in), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t lvl = 0; lvl <= levels; ++lvl) {
                mask_embeds.push_back(encoder_forward(
                    audio_enc, apply_mask(ds.items[i].audio, audio_chain.masks[lvl],
                                          audio_enc.mask_token())));
                by_mask.push_back("audio_" + mask_group(lvl));
                mask_embeds.push_back(encoder_forward(
                    text_enc,
                    apply_mask(ds.items[i].captions[kCaptionLevels - 1],
                               text_chain.masks[lvl], text_fill)));
                by_mask.push_back("text_" + mask_group(lvl));
            }
        }

        auto write_profile = [&](const std::string& name,
                                 const std::vector<DiagGaussian>& embeds,
                                 const std::vector<std::string>& groups,
                                 const std::vector<std::string>& order) {
            const auto rows = uncertainty_profile(embeds, groups, order);
            const std::string path = (fs::path(out_dir) / name).string();
            std::ofstream out(path);
            if (!out) throw DataError("cannot write " + path);
            out << "group,mean_total_variance,count\n";
            std::cout << "  " << name << ":\n";
            for (const auto& row : rows) {
                out << row.group << ',' << fmt17(row.mean_total_variance) << ','
                    << row.count << '\n';
                std::cout << "    " << std::left << std::setw(22) << row.group
                          << std::right << " " << row.mean_total_variance << "  (n="
                          << row.count << ")\n";
            }
            man.outputs[name] = path;
        };
        std::cout << "uncertainty profiles (mean total variance):\n";
        write_profile("uncertainty_by_caption_level.csv", cap_embeds, by_level,
                      {"level_1", "level_2", "level_3", "level_4"});
        std::vector<std::string> len_order;
        for (const auto& g : by_len) {
            if (std::find(len_order.begin(), len_order.end(), g) == len_order.end()) {
                len_order.push_back(g);
            }
        }
        std::sort(len_order.begin(), len_order.end(), [](const auto& a, const auto& b) {
            return std::stoi(a.substr(4)) < std::stoi(b.substr(4));
        });
        write_profile("uncertainty_by_caption_length.csv", cap_embeds, by_len, len_order);
        write_profile("uncertainty_by_mask_level.csv", mask_embeds, by_mask,
                      {"audio_fully_masked", "audio_intermediate", "audio_raw",
                       "text_fully_masked", "text_intermediate", "text_raw"});
    } else {
        throw std::invalid_argument("eval: unknown task '" + task + "'");
    }

    man.write("ok");
    return 0;
}

// ---- gradcheck ----

int run_gradcheck(const std::string& module, int trials, std::uint64_t seed) {
    std::vector<FdResult> results;
    if (module == "losses") {
        results = fd_check_losses(trials, seed);
        const int verified = check_mask_repulsive_stop_gradient(trials, seed + 1);
        std::cout << "stop-gradient: analytic log_var gradients exactly zero, "
                  << verified << "/" << trials
                  << " trials with nonzero finite differences\n";
    } else if (module == "encoder") {
        results = fd_check_encoder(trials, seed);
        // Zero upstream must produce exactly zero gradients.
        Rng rng(seed);
        EncoderArch arch;
        EncoderParams enc = make_encoder(arch, rng);
        Vec x(static_cast<std::size_t>(arch.d_in));
        for (double& v : x) v = rng.normal();
        ForwardTape tape;
        encoder_forward(enc, x, &tape);
        GaussGrad upstream;
        upstream.resize(static_cast<std::size_t>(arch.d_out));
        Vec grad(enc.size(), 0.0);
        encoder_backward(enc, tape, upstream, grad);
        double max_abs = 0.0;
        for (double g : grad) max_abs = std::fmax(max_abs, std::fabs(g));
        std::cout << "zero-upstream parameter gradient max |g| = " << max_abs << "\n";
        if (max_abs != 0.0) {
            std::cerr << "gradcheck: zero upstream produced nonzero gradients\n";
            return 3;
        }
    } else if (module == "end2end") {
        results = fd_check_end2end(trials, seed);
    } else {
        throw std::invalid_argument("gradcheck: unknown module '" + module + "'");
    }

    double worst = 0.0;
    for (const auto& r : results) {
        std::cout << std::left << std::setw(22) << r.loss << " " << std::setw(18)
                  << r.arg << " worst rel err " << r.worst << "\n";
        worst = std::fmax(worst, r.worst);
    }
    std::cout << "overall worst relative error: " << worst << "\n";
    if (worst > 1e-5) {
        std::cerr << "gradcheck: threshold 1e-5 exceeded\n";
        return 3;
    }
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"desk-scale probabilistic joint-embedding laboratory"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_config, gd_out;
    std::int64_t gd_seed = -1;
    bool gd_force = false;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic hierarchical dataset");
    gen->add_option("--config", gd_config, "generation config file (key = value)");
    gen->add_option("--out", gd_out, "output directory")->required();
    gen->add_option("--seed", gd_seed, "override the generation seed");
    gen->add_flag("--force", gd_force, "allow writing into a non-empty directory");

    // train
    std::string tr_dataset, tr_config, tr_out, tr_preset = "prolap-full";
    TrainCliOverrides ov;
    bool tr_force = false;
    auto* tr = app.add_subcommand("train", "train the two-headed encoders");
    tr->add_option("--dataset", tr_dataset, "dataset file")->required();
    tr->add_option("--config", tr_config, "training config file (key = value)");
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--preset", tr_preset, "experiment preset")
        ->check(CLI::IsMember(preset_names()));
    tr->add_option("--epochs", ov.epochs, "override epochs");
    tr->add_option("--batch-size", ov.batch_size, "override batch size");
    tr->add_option("--max-lr", ov.max_lr, "override peak learning rate");
    tr->add_option("--seed", ov.seed, "override training seed");
    tr->add_option("--threads", ov.threads, "worker threads for the pair grids");
    tr->add_option("--deterministic", ov.deterministic,
                   "force deterministic reduction order (0/1)");
    tr->add_flag("--force", tr_force, "allow writing into a non-empty directory");

    // eval
    std::string ev_ckpt, ev_dataset, ev_embeddings, ev_task, ev_out;
    int ev_points = 50;
    std::int64_t ev_seed = -1;
    bool ev_dump = false, ev_force = false;
    auto* ev = app.add_subcommand("eval", "run the evaluation suite");
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint");
    ev->add_option("--dataset", ev_dataset, "dataset file");
    ev->add_option("--embeddings", ev_embeddings,
                   "external embeddings (JSONL) instead of checkpoint+dataset");
    ev->add_option("--task", ev_task, "retrieval | inclusion | traversal | uncertainty")
        ->required()
        ->check(CLI::IsMember({"retrieval", "inclusion", "traversal", "uncertainty"}));
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--n-points", ev_points, "traversal line points")->check(CLI::Range(2, 100000));
    ev->add_option("--seed", ev_seed, "seed for evaluation-time mask chains");
    ev->add_flag("--dump-embeddings", ev_dump, "write embeddings.jsonl");
    ev->add_flag("--force", ev_force, "allow writing into a non-empty directory");

    // gradcheck
    std::string gc_module = "losses";
    int gc_trials = 25;
    std::uint64_t gc_seed = 20240817;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient sweeps");
    gc->add_option("--module", gc_module, "losses | encoder | end2end")
        ->check(CLI::IsMember({"losses", "encoder", "end2end"}));
    gc->add_option("--trials", gc_trials, "random configurations per sweep")
        ->check(CLI::PositiveNumber);
    gc->add_option("--seed", gc_seed, "sweep seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(gd_config, gd_out, gd_seed, gd_force);
        if (tr->parsed()) return run_train(tr_dataset, tr_config, tr_out, tr_preset, ov, tr_force);
        if (ev->parsed()) {
            return run_eval(ev_ckpt, ev_dataset, ev_embeddings, ev_task, ev_out,
                            ev_points, ev_seed, ev_dump, ev_force);
        }
        if (gc->parsed()) return run_gradcheck(gc_module, gc_trials, gc_seed);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace prolap
