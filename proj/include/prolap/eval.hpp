#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "prolap/checkpoint.hpp"
#include "prolap/dataset.hpp"
#include "prolap/geometry.hpp"

namespace prolap {

enum class SimilarityKind { csd, cosine };

// Similarity for ranking: corrected similarity for probabilistic models,
// cosine of the means for deterministic baselines.
double ranking_similarity(const DiagGaussian& a, const DiagGaussian& b,
                          SimilarityKind kind);

struct RetrievalReport {
    std::string direction;       // "audio->text" or "text->audio"
    std::map<int, double> r_at;  // K in {1, 5, 10}
    double map_at_10 = 0.0;
};

// Ranks each query's scores descending (ties broken by lowest gallery
// index). R@K = fraction of queries with at least one relevant item in the
// top K. AP@10 = sum over ranks k <= 10 of rel(k) * precision@k, divided by
// min(#relevant, 10); mAP@10 is its mean over queries. Throws DataError if
// any query has no relevant items.
RetrievalReport retrieval_from_scores(
    const std::vector<Vec>& scores,
    const std::vector<std::vector<int>>& relevant, std::string direction);

RetrievalReport retrieval_eval(const std::vector<DiagGaussian>& queries,
                               const std::vector<DiagGaussian>& gallery,
                               const std::vector<std::vector<int>>& relevant,
                               SimilarityKind kind, std::string direction);

// Percentage of pairs whose level-4 embedding scores as included in the
// level-1 embedding, strictly: H(lv4 in lv1) > 0. Ties at exactly zero
// count as failures.
double inclusion_test_rate(const std::vector<DiagGaussian>& level1,
                           const std::vector<DiagGaussian>& level4);

// Elementwise average of the means and of the variances.
DiagGaussian make_root(const DiagGaussian& empty_caption,
                       const DiagGaussian& most_inclusive);

// Gallery index maximizing H(query in gallery[i]).
std::size_t most_inclusive_index(const DiagGaussian& query,
                                 const std::vector<DiagGaussian>& gallery);

struct GalleryLabel {
    int item_id = 0;
    int level = 0;  // 1..4
};

struct TraversalEntry {
    int item_id = 0;
    double precision = 0.0;
    double r_at_1 = 0.0;   // fraction of the item's 4 chain captions retrieved
    bool lv1_found = false;
    std::vector<int> raw_trace;   // gallery index at each of the n points
    std::vector<int> retrieved;   // consecutive duplicates collapsed
};

struct TraversalReport {
    double precision = 0.0;
    double r_at_1 = 0.0;
    double r_at_1_lv1 = 0.0;
    std::vector<TraversalEntry> entries;
};

// Walks n_points equally spaced points from the query embedding (t = 0) to
// the root (t = 1), interpolating means and variances linearly, retrieving
// the nearest gallery embedding at each point. Precision counts retrieved
// distinct captions that belong to the item's own 4-level chain.
TraversalEntry traverse(const DiagGaussian& query,
                        const std::vector<DiagGaussian>& gallery,
                        const std::vector<GalleryLabel>& labels,
                        const DiagGaussian& root, int n_points,
                        SimilarityKind kind, int item_id);

struct ProfileRow {
    std::string group;
    double mean_total_variance = 0.0;
    std::size_t count = 0;
};

// Mean total variance (sum of per-dimension variances) per group. When
// `expected_groups` is non-empty it fixes the row order; expected groups
// with no members are omitted with a warning on stderr. Otherwise rows
// appear in order of first appearance.
std::vector<ProfileRow> uncertainty_profile(
    const std::vector<DiagGaussian>& embeds,
    const std::vector<std::string>& groups,
    const std::vector<std::string>& expected_groups = {});

// ---- model-side embedding helpers ----

struct EmbeddedDataset {
    std::vector<DiagGaussian> audio;  // raw audio embedding per item
    std::vector<std::array<DiagGaussian, kCaptionLevels>> captions;
    SimilarityKind kind = SimilarityKind::csd;
};

EmbeddedDataset embed_dataset(const Checkpoint& ckpt, const HierDataset& ds);

// Embedding of the information-free input: every coordinate given by the
// text mask token (the synthetic analog of an empty caption).
DiagGaussian embed_empty_caption(const Checkpoint& ckpt);

// ---- embedding dumps (JSONL: one record per line with id, optional level,
// mu, log_var) so externally produced embeddings can be evaluated here ----

struct EmbeddingRecord {
    int id = 0;
    int level = 0;  // 0 = none
    DiagGaussian z;
};

void save_embeddings_jsonl(const std::vector<EmbeddingRecord>& records,
                           const std::string& path);
std::vector<EmbeddingRecord> load_embeddings_jsonl(const std::string& path);

}  // namespace prolap
