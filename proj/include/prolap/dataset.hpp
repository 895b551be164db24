#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prolap/common.hpp"

namespace prolap {

constexpr int kCaptionLevels = 4;  // level 4 = most specific

// One synthetic paired sample: an "audio-like" feature vector plus four
// "caption-like" vectors at increasing specificity. Deeper captions carry
// more informative coordinates; the rest of a caption vector is zero
// background, which is what the caption_len proxy counts.
struct HierItem {
    int id = 0;
    Vec audio;
    std::array<Vec, kCaptionLevels> captions;       // index 0 = level 1
    std::array<int, kCaptionLevels> caption_len{};  // informative coordinates
    std::array<int, kCaptionLevels> path{};         // concept ids, root to leaf
};

struct GenConfig {
    int n_items = 512;
    std::array<int, kCaptionLevels> branching{4, 3, 2, 2};
    int d_in = 32;
    // Prototype perturbation scale at each tree depth (1..4). Defaults keep
    // per-coordinate feature variance near 1 so tanh encoders stay in range.
    std::array<double, kCaptionLevels> proto_scales{0.9, 0.6, 0.45, 0.35};
    // Spread of individual items around their leaf concept.
    double instance_scale = 0.25;
    double audio_noise = 0.03;
    std::array<double, kCaptionLevels> caption_noise{0.03, 0.03, 0.03, 0.03};
    // Fraction of coordinates that are informative at each caption level;
    // level 4 should stay at 1.0 so the most specific caption matches the
    // audio feature coordinate-for-coordinate.
    std::array<double, kCaptionLevels> informative_fraction{0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 7;

    void validate() const;
};

struct HierDataset {
    GenConfig config;
    // concept_tree[depth][node] with depth 0..3; node prototypes, full d_in.
    std::array<std::vector<Vec>, kCaptionLevels> concept_tree;
    std::vector<HierItem> items;

    std::size_t size() const { return items.size(); }
    int nodes_at_depth(int depth) const;
    // Flat node index of the item's ancestor at the given depth (0-based).
    int node_index(const HierItem& item, int depth) const;
};

// Deterministic generation: leaf prototypes are recursive perturbations of
// their parents; each item draws an instance vector around its leaf; the
// audio feature and the level-4 caption are noisy copies of the instance;
// level-k captions copy the depth-k ancestor prototype onto their
// informative prefix and keep the zero background elsewhere.
//
// Asserts two generation-quality gates and throws DataError if either
// fails: (a) monotone specificity, mean |caption_k - audio| strictly
// decreasing in k; (b) leaf prototypes separated by at least 3x the total
// within-leaf spread.
HierDataset generate(const GenConfig& config);

// Line-delimited text format, one item per line, decimal vectors printed
// with 17 significant digits (lossless round-trip). First line is a
// versioned header carrying the generation config.
void save_dataset(const HierDataset& ds, const std::string& path);
HierDataset load_dataset(const std::string& path);

}  // namespace prolap
