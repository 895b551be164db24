#include "prolap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prolap/rng.hpp"

namespace prolap {

void GenConfig::validate() const {
    if (n_items < 0) throw std::invalid_argument("GenConfig: n_items must be >= 0");
    if (d_in < 4) throw std::invalid_argument("GenConfig: d_in must be >= 4");
    for (int b : branching) {
        if (b < 1) throw std::invalid_argument("GenConfig: branching entries must be >= 1");
    }
    for (double s : proto_scales) {
        if (!(s >= 0.0)) throw std::invalid_argument("GenConfig: proto_scales must be >= 0");
    }
    for (double s : caption_noise) {
        if (!(s >= 0.0)) throw std::invalid_argument("GenConfig: caption_noise must be >= 0");
    }
    if (!(instance_scale >= 0.0) || !(audio_noise >= 0.0)) {
        throw std::invalid_argument("GenConfig: scales must be >= 0");
    }
    for (int k = 0; k < kCaptionLevels; ++k) {
        if (!(informative_fraction[k] > 0.0 && informative_fraction[k] <= 1.0)) {
            throw std::invalid_argument("GenConfig: informative_fraction must lie in (0,1]");
        }
        if (k > 0 && informative_fraction[k] < informative_fraction[k - 1]) {
            throw std::invalid_argument(
                "GenConfig: informative_fraction must be non-decreasing in level");
        }
    }
}

int HierDataset::nodes_at_depth(int depth) const {
    int n = 1;
    for (int k = 0; k <= depth; ++k) n *= config.branching[k];
    return n;
}

int HierDataset::node_index(const HierItem& item, int depth) const {
    int idx = 0;
    for (int k = 0; k <= depth; ++k) {
        idx = idx * config.branching[k] + item.path[k];
    }
    return idx;
}

namespace {

Vec perturbed(const Vec& parent, double scale, Rng& rng) {
    Vec out(parent.size());
    for (std::size_t i = 0; i < parent.size(); ++i) {
        out[i] = parent[i] + scale * rng.normal();
    }
    return out;
}

double distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

HierDataset generate(const GenConfig& config) {
    config.validate();
    HierDataset ds;
    ds.config = config;

    Rng root(config.seed);
    Rng tree_rng = root.fork(1);
    Rng item_rng = root.fork(2);

    // Concept tree: depth-k prototypes perturb their depth-(k-1) parents;
    // the (implicit) root prototype is the origin.
    const Vec origin(static_cast<std::size_t>(config.d_in), 0.0);
    for (int depth = 0; depth < kCaptionLevels; ++depth) {
        const std::vector<Vec>* parents =
            depth == 0 ? nullptr : &ds.concept_tree[depth - 1];
        const int n_parents = depth == 0 ? 1 : static_cast<int>(parents->size());
        auto& nodes = ds.concept_tree[depth];
        nodes.reserve(static_cast<std::size_t>(n_parents) * config.branching[depth]);
        for (int pa = 0; pa < n_parents; ++pa) {
            const Vec& base = depth == 0 ? origin : (*parents)[pa];
            for (int c = 0; c < config.branching[depth]; ++c) {
                nodes.push_back(perturbed(base, config.proto_scales[depth], tree_rng));
            }
        }
    }

    const int n_leaves = static_cast<int>(ds.concept_tree[kCaptionLevels - 1].size());
    const std::size_t d = static_cast<std::size_t>(config.d_in);

    ds.items.reserve(config.n_items);
    for (int i = 0; i < config.n_items; ++i) {
        HierItem item;
        item.id = i;
        // Round-robin leaf assignment keeps concepts balanced.
        int leaf = i % n_leaves;
        int rem = leaf;
        for (int k = kCaptionLevels - 1; k >= 0; --k) {
            item.path[k] = rem % config.branching[k];
            rem /= config.branching[k];
        }

        const Vec& leaf_proto = ds.concept_tree[kCaptionLevels - 1][leaf];
        const Vec instance = perturbed(leaf_proto, config.instance_scale, item_rng);
        item.audio = perturbed(instance, config.audio_noise, item_rng);

        for (int k = 0; k < kCaptionLevels; ++k) {
            const int n_info = std::max(
                1, static_cast<int>(std::lround(config.informative_fraction[k] * config.d_in)));
            item.caption_len[k] = n_info;
            // Level 4 describes this item; shallower levels describe the
            // depth-k concept. Informative prefix only, zero background, so
            // captions of one concept at one level are paraphrases of each
            // other.
            const Vec& source = k == kCaptionLevels - 1
                                    ? instance
                                    : ds.concept_tree[k][ds.node_index(item, k)];
            Vec cap(d, 0.0);
            for (int j = 0; j < n_info; ++j) {
                cap[j] = source[j] + config.caption_noise[k] * item_rng.normal();
            }
            item.captions[k] = std::move(cap);
        }
        ds.items.push_back(std::move(item));
    }

    // Generation-quality gates.
    if (!ds.items.empty()) {
        double prev = -1.0;
        for (int k = kCaptionLevels - 1; k >= 0; --k) {
            double mean = 0.0;
            for (const auto& item : ds.items) {
                mean += distance(item.captions[k], item.audio);
            }
            mean /= static_cast<double>(ds.items.size());
            if (prev >= 0.0 && !(mean > prev)) {
                throw DataError(
                    "generate: monotone specificity violated (level " +
                    std::to_string(k + 1) + " captions are not farther from audio "
                    "than level " + std::to_string(k + 2) + ")");
            }
            prev = mean;
        }
    }

    // Sibling separation: leaf prototypes at least 3x the leaf-level feature
    // noise scale apart, so retrieval stays learnable. Abstract-caption
    // noise does not enter; it spreads paraphrases, not leaf identity.
    if (n_leaves > 1 && config.n_items > 0) {
        const double leaf_noise =
            std::fmax(config.audio_noise, config.caption_noise[kCaptionLevels - 1]);
        const double margin = 3.0 * std::sqrt(static_cast<double>(config.d_in)) *
                              2.0 * leaf_noise;
        const auto& leaves = ds.concept_tree[kCaptionLevels - 1];
        for (int a = 0; a < n_leaves; ++a) {
            for (int b = a + 1; b < n_leaves; ++b) {
                if (distance(leaves[a], leaves[b]) < margin) {
                    throw DataError("generate: leaf prototypes closer than the "
                                    "documented 3x noise margin; increase "
                                    "proto_scales or lower the noise");
                }
            }
        }
    }

    // Nearest-neighbor gate: the item's own level-4 caption should be the
    // closest level-4 caption to its audio in at least 95% of items.
    // Only meaningful for non-trivial corpora.
    if (ds.items.size() >= 32) {
        int hits = 0;
        for (const auto& item : ds.items) {
            double best = 1e300;
            int best_id = -1;
            for (const auto& other : ds.items) {
                const double dist = distance(item.audio, other.captions[kCaptionLevels - 1]);
                if (dist < best) {
                    best = dist;
                    best_id = other.id;
                }
            }
            if (best_id == item.id) ++hits;
        }
        const double rate = static_cast<double>(hits) / static_cast<double>(ds.items.size());
        if (rate < 0.95) {
            throw DataError("generate: level-4 caption nearest-neighbor rate " +
                            std::to_string(rate) + " below the 0.95 gate");
        }
    }

    return ds;
}

// ---- file I/O ----

namespace {

constexpr const char* kMagic = "prolap-hier-dataset";
constexpr int kVersion = 1;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T, std::size_t N>
std::string join_array(const std::array<T, N>& a) {
    std::ostringstream os;
    for (std::size_t i = 0; i < N; ++i) {
        if (i) os << ',';
        if constexpr (std::is_same_v<T, double>) {
            os << fmt_double(a[i]);
        } else {
            os << a[i];
        }
    }
    return os.str();
}

template <typename T, std::size_t N>
void parse_array(const std::string& s, std::array<T, N>& out, int line_no) {
    std::stringstream ss(s);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= N) throw DataError("dataset line " + std::to_string(line_no) + ": too many list entries");
        if constexpr (std::is_same_v<T, double>) {
            out[i] = std::stod(tok);
        } else {
            out[i] = std::stoi(tok);
        }
        ++i;
    }
    if (i != N) throw DataError("dataset line " + std::to_string(line_no) + ": expected " + std::to_string(N) + " list entries");
}

void write_vec(std::ostream& os, const Vec& v) {
    for (double x : v) os << ' ' << fmt_double(x);
}

Vec read_vec(std::istringstream& is, std::size_t d, int line_no) {
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!(is >> v[i])) {
            throw DataError("dataset line " + std::to_string(line_no) + ": truncated vector");
        }
    }
    return v;
}

}  // namespace

void save_dataset(const HierDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_dataset: cannot open " + path + " for writing");

    const GenConfig& c = ds.config;
    out << kMagic << " v" << kVersion << " n_items=" << c.n_items
        << " branching=" << join_array(c.branching) << " d_in=" << c.d_in
        << " proto_scales=" << join_array(c.proto_scales)
        << " instance_scale=" << fmt_double(c.instance_scale)
        << " audio_noise=" << fmt_double(c.audio_noise)
        << " caption_noise=" << join_array(c.caption_noise)
        << " informative_fraction=" << join_array(c.informative_fraction)
        << " seed=" << c.seed << '\n';

    for (int depth = 0; depth < kCaptionLevels; ++depth) {
        for (std::size_t n = 0; n < ds.concept_tree[depth].size(); ++n) {
            out << "node " << depth << ' ' << n;
            write_vec(out, ds.concept_tree[depth][n]);
            out << '\n';
        }
    }
    for (const auto& item : ds.items) {
        out << "item " << item.id << ' ' << join_array(item.path) << ' '
            << join_array(item.caption_len);
        write_vec(out, item.audio);
        for (const auto& cap : item.captions) write_vec(out, cap);
        out << '\n';
    }
    if (!out) throw DataError("save_dataset: write failed for " + path);
}

HierDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("load_dataset: empty file (missing header): " + path);
    }
    int line_no = 1;

    HierDataset ds;
    {
        std::istringstream hs(line);
        std::string magic, version;
        hs >> magic >> version;
        if (magic != kMagic || version != "v" + std::to_string(kVersion)) {
            throw DataError("load_dataset: bad header on line 1 of " + path);
        }
        std::string kv;
        GenConfig& c = ds.config;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw DataError("load_dataset: malformed header field '" + kv + "'");
            }
            const std::string key = kv.substr(0, eq);
            const std::string val = kv.substr(eq + 1);
            if (key == "n_items") c.n_items = std::stoi(val);
            else if (key == "branching") parse_array(val, c.branching, line_no);
            else if (key == "d_in") c.d_in = std::stoi(val);
            else if (key == "proto_scales") parse_array(val, c.proto_scales, line_no);
            else if (key == "instance_scale") c.instance_scale = std::stod(val);
            else if (key == "audio_noise") c.audio_noise = std::stod(val);
            else if (key == "caption_noise") parse_array(val, c.caption_noise, line_no);
            else if (key == "informative_fraction") parse_array(val, c.informative_fraction, line_no);
            else if (key == "seed") c.seed = std::stoull(val);
            else throw DataError("load_dataset: unknown header field '" + key + "'");
        }
    }

    const std::size_t d = static_cast<std::size_t>(ds.config.d_in);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        if (kind == "node") {
            int depth = -1;
            std::size_t idx = 0;
            if (!(is >> depth >> idx) || depth < 0 || depth >= kCaptionLevels) {
                throw DataError("dataset line " + std::to_string(line_no) + ": bad node record");
            }
            auto& nodes = ds.concept_tree[depth];
            if (idx != nodes.size()) {
                throw DataError("dataset line " + std::to_string(line_no) + ": node index out of order");
            }
            nodes.push_back(read_vec(is, d, line_no));
        } else if (kind == "item") {
            HierItem item;
            std::string path_s, len_s;
            if (!(is >> item.id >> path_s >> len_s)) {
                throw DataError("dataset line " + std::to_string(line_no) + ": bad item record");
            }
            parse_array(path_s, item.path, line_no);
            parse_array(len_s, item.caption_len, line_no);
            item.audio = read_vec(is, d, line_no);
            for (auto& cap : item.captions) cap = read_vec(is, d, line_no);
            std::string extra;
            if (is >> extra) {
                throw DataError("dataset line " + std::to_string(line_no) + ": trailing tokens");
            }
            ds.items.push_back(std::move(item));
        } else {
            throw DataError("dataset line " + std::to_string(line_no) +
                            ": unknown record '" + kind + "'");
        }
    }

    // Consistency: every path must exist in the stored tree.
    for (const auto& item : ds.items) {
        for (int k = 0; k < kCaptionLevels; ++k) {
            if (item.path[k] < 0 || item.path[k] >= ds.config.branching[k]) {
                throw DataError("load_dataset: item " + std::to_string(item.id) +
                                " has an out-of-range hierarchy path");
            }
            const int idx = ds.node_index(item, k);
            if (idx < 0 || static_cast<std::size_t>(idx) >= ds.concept_tree[k].size()) {
                throw DataError("load_dataset: item " + std::to_string(item.id) +
                                " references a missing concept node");
            }
        }
    }
    return ds;
}

}  // namespace prolap
