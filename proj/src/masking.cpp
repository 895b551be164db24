#include "prolap/masking.hpp"

#include <iostream>

namespace prolap {

MaskChain build_chain(std::size_t d, std::size_t levels,
                      const std::vector<double>& keep_fractions, Rng& rng) {
    if (d == 0) throw std::invalid_argument("build_chain: d must be >= 1");
    if (levels < 1) throw std::invalid_argument("build_chain: levels must be >= 1");
    if (keep_fractions.size() + 1 != levels) {
        throw std::invalid_argument(
            "build_chain: need exactly levels-1 keep fractions");
    }
    for (double f : keep_fractions) {
        if (!(f > 0.0 && f < 1.0)) {
            throw std::invalid_argument("build_chain: keep fractions must lie in (0,1)");
        }
    }
    if (d < levels) {
        std::cerr << "build_chain: warning: d (" << d << ") < levels (" << levels
                  << "), support cannot shrink strictly at every level\n";
    }

    MaskChain chain;
    chain.seed = rng.seed();
    chain.masks.reserve(levels + 1);
    chain.masks.emplace_back(d, std::uint8_t{1});
    for (std::size_t i = 1; i < levels; ++i) {
        Mask next = chain.masks.back();
        for (std::size_t j = 0; j < d; ++j) {
            if (next[j] && !rng.bernoulli(keep_fractions[i - 1])) next[j] = 0;
        }
        chain.masks.push_back(std::move(next));
    }
    chain.masks.emplace_back(d, std::uint8_t{0});
    return chain;
}

Mask draw_mask(std::size_t d, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("draw_mask: ratio must lie in [0,1]");
    }
    Mask m(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        if (rng.bernoulli(ratio)) m[j] = 1;
    }
    return m;
}

std::size_t popcount(const Mask& m) {
    std::size_t n = 0;
    for (auto b : m) n += b ? 1 : 0;
    return n;
}

Vec apply_mask(std::span<const double> x, const Mask& m,
               std::span<const double> mask_token) {
    if (x.size() != m.size() || x.size() != mask_token.size()) {
        throw std::invalid_argument("apply_mask: length mismatch");
    }
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = m[i] ? mask_token[i] : x[i];
    }
    return out;
}

}  // namespace prolap
