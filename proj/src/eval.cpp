#include "prolap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "prolap/encoder.hpp"
#include "prolap/masking.hpp"

namespace prolap {

double ranking_similarity(const DiagGaussian& a, const DiagGaussian& b,
                          SimilarityKind kind) {
    if (kind == SimilarityKind::csd) return csd_similarity(a, b);
    const double na = std::sqrt(squared_norm(a.mu));
    const double nb = std::sqrt(squared_norm(b.mu));
    if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
    return dot(a.mu, b.mu) / (na * nb);
}

namespace {

// Gallery indices sorted by score descending, lowest index first on ties.
std::vector<int> ranked_indices(const Vec& scores) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    return idx;
}

}  // namespace

RetrievalReport retrieval_from_scores(
    const std::vector<Vec>& scores,
    const std::vector<std::vector<int>>& relevant, std::string direction) {
    if (scores.empty()) throw std::invalid_argument("retrieval: no queries");
    if (relevant.size() != scores.size()) {
        throw std::invalid_argument("retrieval: one relevance list per query required");
    }
    const std::size_t g = scores.front().size();
    if (g == 0) throw std::invalid_argument("retrieval: empty gallery");

    RetrievalReport rep;
    rep.direction = std::move(direction);
    const int ks[] = {1, 5, 10};
    std::map<int, double> hits{{1, 0.0}, {5, 0.0}, {10, 0.0}};
    double ap_sum = 0.0;

    for (std::size_t q = 0; q < scores.size(); ++q) {
        if (scores[q].size() != g) {
            throw std::invalid_argument("retrieval: ragged score matrix");
        }
        if (relevant[q].empty()) {
            throw DataError("retrieval: query " + std::to_string(q) +
                            " has no relevant items (dataset bug)");
        }
        const std::set<int> rel(relevant[q].begin(), relevant[q].end());
        const std::vector<int> order = ranked_indices(scores[q]);

        for (int k : ks) {
            const std::size_t top = std::min<std::size_t>(k, g);
            for (std::size_t r = 0; r < top; ++r) {
                if (rel.count(order[r])) {
                    hits[k] += 1.0;
                    break;
                }
            }
        }

        const std::size_t cutoff = std::min<std::size_t>(10, g);
        int found = 0;
        double ap = 0.0;
        for (std::size_t r = 0; r < cutoff; ++r) {
            if (rel.count(order[r])) {
                ++found;
                ap += static_cast<double>(found) / static_cast<double>(r + 1);
            }
        }
        ap /= static_cast<double>(std::min<std::size_t>(rel.size(), 10));
        ap_sum += ap;
    }

    const double nq = static_cast<double>(scores.size());
    for (int k : ks) rep.r_at[k] = hits[k] / nq;
    rep.map_at_10 = ap_sum / nq;
    return rep;
}

RetrievalReport retrieval_eval(const std::vector<DiagGaussian>& queries,
                               const std::vector<DiagGaussian>& gallery,
                               const std::vector<std::vector<int>>& relevant,
                               SimilarityKind kind, std::string direction) {
    if (queries.empty() || gallery.empty()) {
        throw std::invalid_argument("retrieval_eval: empty queries or gallery");
    }
    std::vector<Vec> scores(queries.size(), Vec(gallery.size()));
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t i = 0; i < gallery.size(); ++i) {
            scores[q][i] = ranking_similarity(queries[q], gallery[i], kind);
        }
    }
    return retrieval_from_scores(scores, relevant, std::move(direction));
}

double inclusion_test_rate(const std::vector<DiagGaussian>& level1,
                           const std::vector<DiagGaussian>& level4) {
    if (level1.size() != level4.size()) {
        throw std::invalid_argument("inclusion_test_rate: list length mismatch");
    }
    if (level1.empty()) {
        throw std::invalid_argument("inclusion_test_rate: empty lists");
    }
    std::size_t pass = 0;
    for (std::size_t i = 0; i < level1.size(); ++i) {
        if (inclusion_score(level4[i], level1[i]) > 0.0) ++pass;
    }
    return 100.0 * static_cast<double>(pass) / static_cast<double>(level1.size());
}

DiagGaussian make_root(const DiagGaussian& empty_caption,
                       const DiagGaussian& most_inclusive) {
    if (empty_caption.dim() != most_inclusive.dim()) {
        throw std::invalid_argument("make_root: dimension mismatch");
    }
    const std::size_t d = empty_caption.dim();
    Vec mu(d), log_var(d);
    for (std::size_t i = 0; i < d; ++i) {
        mu[i] = 0.5 * (empty_caption.mu[i] + most_inclusive.mu[i]);
        // Average in variance space, not log space.
        log_var[i] = std::log(0.5 * (std::exp(empty_caption.log_var[i]) +
                                     std::exp(most_inclusive.log_var[i])));
    }
    return DiagGaussian(std::move(mu), std::move(log_var));
}

std::size_t most_inclusive_index(const DiagGaussian& query,
                                 const std::vector<DiagGaussian>& gallery) {
    if (gallery.empty()) {
        throw std::invalid_argument("most_inclusive_index: empty gallery");
    }
    std::size_t best = 0;
    double best_h = -1e300;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        const double h = inclusion_score(query, gallery[i]);
        if (h > best_h) {
            best_h = h;
            best = i;
        }
    }
    return best;
}

TraversalEntry traverse(const DiagGaussian& query,
                        const std::vector<DiagGaussian>& gallery,
                        const std::vector<GalleryLabel>& labels,
                        const DiagGaussian& root, int n_points,
                        SimilarityKind kind, int item_id) {
    if (gallery.empty()) throw std::invalid_argument("traverse: empty gallery");
    if (labels.size() != gallery.size()) {
        throw std::invalid_argument("traverse: one label per gallery entry required");
    }
    if (n_points < 2) throw std::invalid_argument("traverse: n_points must be >= 2");
    if (query.dim() != root.dim()) {
        throw std::invalid_argument("traverse: query/root dimension mismatch");
    }

    TraversalEntry entry;
    entry.item_id = item_id;
    const std::size_t d = query.dim();

    for (int p = 0; p < n_points; ++p) {
        const double t = static_cast<double>(p) / static_cast<double>(n_points - 1);
        Vec mu(d), log_var(d);
        for (std::size_t i = 0; i < d; ++i) {
            mu[i] = (1.0 - t) * query.mu[i] + t * root.mu[i];
            log_var[i] = std::log((1.0 - t) * std::exp(query.log_var[i]) +
                                  t * std::exp(root.log_var[i]));
        }
        const DiagGaussian point(std::move(mu), std::move(log_var));
        int best = 0;
        double best_s = -1e300;
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            const double s = ranking_similarity(point, gallery[g], kind);
            if (s > best_s) {
                best_s = s;
                best = static_cast<int>(g);
            }
        }
        entry.raw_trace.push_back(best);
        if (entry.retrieved.empty() || entry.retrieved.back() != best) {
            entry.retrieved.push_back(best);
        }
    }

    // Scores against the item's own 4-level caption chain.
    std::set<int> distinct(entry.retrieved.begin(), entry.retrieved.end());
    std::set<int> chain_hits;  // levels of own captions retrieved
    std::size_t own_retrieved = 0;
    bool lv1 = false;
    for (int g : distinct) {
        const GalleryLabel& lab = labels[static_cast<std::size_t>(g)];
        if (lab.item_id == item_id) {
            ++own_retrieved;
            chain_hits.insert(lab.level);
            if (lab.level == 1) lv1 = true;
        }
    }
    entry.precision =
        static_cast<double>(own_retrieved) / static_cast<double>(distinct.size());
    entry.r_at_1 = static_cast<double>(chain_hits.size()) /
                   static_cast<double>(kCaptionLevels);
    entry.lv1_found = lv1;
    return entry;
}

std::vector<ProfileRow> uncertainty_profile(
    const std::vector<DiagGaussian>& embeds,
    const std::vector<std::string>& groups,
    const std::vector<std::string>& expected_groups) {
    if (embeds.empty() || embeds.size() != groups.size()) {
        throw std::invalid_argument(
            "uncertainty_profile: need one group label per embedding");
    }
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < embeds.size(); ++i) {
        auto [it, inserted] = acc.try_emplace(groups[i], 0.0, 0);
        if (inserted) order.push_back(groups[i]);
        it->second.first += embeds[i].total_variance();
        it->second.second += 1;
    }
    if (!expected_groups.empty()) {
        std::vector<std::string> filtered;
        for (const auto& g : expected_groups) {
            if (acc.count(g)) {
                filtered.push_back(g);
            } else {
                std::cerr << "uncertainty_profile: warning: group '" << g
                          << "' is empty, omitted\n";
            }
        }
        order = std::move(filtered);
    }
    std::vector<ProfileRow> rows;
    for (const auto& g : order) {
        const auto& [sum, count] = acc.at(g);
        rows.push_back({g, sum / static_cast<double>(count), count});
    }
    return rows;
}

// ---- model-side helpers ----

EmbeddedDataset embed_dataset(const Checkpoint& ckpt, const HierDataset& ds) {
    if (ckpt.arch.d_in != ds.config.d_in) {
        throw DataError("embed_dataset: checkpoint d_in " +
                        std::to_string(ckpt.arch.d_in) + " vs dataset d_in " +
                        std::to_string(ds.config.d_in));
    }
    const EncoderParams audio_enc = ckpt.audio_encoder();
    const EncoderParams text_enc = ckpt.text_encoder();

    EmbeddedDataset out;
    out.kind = ckpt.variance_pinned ? SimilarityKind::cosine : SimilarityKind::csd;
    out.audio.reserve(ds.items.size());
    out.captions.reserve(ds.items.size());
    for (const auto& item : ds.items) {
        DiagGaussian za = encoder_forward(audio_enc, item.audio);
        if (ckpt.variance_pinned) za.log_var.assign(za.log_var.size(), -800.0);
        out.audio.push_back(std::move(za));
        std::array<DiagGaussian, kCaptionLevels> caps;
        for (int k = 0; k < kCaptionLevels; ++k) {
            DiagGaussian z = encoder_forward(text_enc, item.captions[k]);
            if (ckpt.variance_pinned) z.log_var.assign(z.log_var.size(), -800.0);
            caps[k] = std::move(z);
        }
        out.captions.push_back(std::move(caps));
    }
    return out;
}

DiagGaussian embed_empty_caption(const Checkpoint& ckpt) {
    const EncoderParams text_enc = ckpt.text_encoder();
    const auto token = text_enc.mask_token();
    Vec input(token.begin(), token.end());
    DiagGaussian z = encoder_forward(text_enc, input);
    if (ckpt.variance_pinned) z.log_var.assign(z.log_var.size(), -800.0);
    return z;
}

// ---- JSONL dumps ----

void save_embeddings_jsonl(const std::vector<EmbeddingRecord>& records,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_embeddings_jsonl: cannot open " + path);
    for (const auto& rec : records) {
        nlohmann::ordered_json j;
        j["id"] = rec.id;
        if (rec.level != 0) j["level"] = rec.level;
        j["mu"] = rec.z.mu;
        j["log_var"] = rec.z.log_var;
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("save_embeddings_jsonl: write failed for " + path);
}

std::vector<EmbeddingRecord> load_embeddings_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_embeddings_jsonl: cannot open " + path);
    std::vector<EmbeddingRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            EmbeddingRecord rec;
            rec.id = j.at("id").get<int>();
            rec.level = j.value("level", 0);
            rec.z = DiagGaussian(j.at("mu").get<Vec>(), j.at("log_var").get<Vec>());
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_embeddings_jsonl: line " + std::to_string(line_no) +
                            ": " + e.what());
        }
    }
    return records;
}

}  // namespace prolap
