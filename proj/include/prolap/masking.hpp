#pragma once

#include <cstdint>
#include <vector>

#include "prolap/common.hpp"
#include "prolap/rng.hpp"

namespace prolap {

using Mask = std::vector<std::uint8_t>;

// Nested hierarchy of binary masks M_0 .. M_L built by Hadamard products
// with random masks. Bit semantics: 1 = coordinate MASKED (replaced by the
// mask token), 0 = coordinate visible. So M_0 (all ones) is the fully
// masked, most uncertain view and M_L (all zeros) is the raw input. This
// orientation is the one under which the hierarchical inclusion objective
// (each view nested inside the next more-masked one) lines up with "more
// masking = more uncertainty" and the recursion strictly shrinks the set of
// masked coordinates level by level.
struct MaskChain {
    std::vector<Mask> masks;  // masks[i] has length d; i = 0..L
    std::uint64_t seed = 0;   // recorded for exact replay

    std::size_t levels() const { return masks.empty() ? 0 : masks.size() - 1; }
    std::size_t dim() const { return masks.empty() ? 0 : masks.front().size(); }
};

// Builds M_0 = all ones; M_i = M_{i-1} * R_{i-1} for i = 1..L-1, where R
// keeps each still-masked coordinate with probability keep_fractions[i-1];
// M_L = all zeros. keep_fractions must have L-1 entries in (0, 1).
// Deterministic given the rng's seed. Emits a warning (stderr) when d < L,
// since the support then cannot shrink strictly at every level.
MaskChain build_chain(std::size_t d, std::size_t levels,
                      const std::vector<double>& keep_fractions, Rng& rng);

// Independent Bernoulli mask: each coordinate masked with probability ratio.
Mask draw_mask(std::size_t d, double ratio, Rng& rng);

std::size_t popcount(const Mask& m);

// output_i = mask_token_i where m_i = 1, x_i where m_i = 0.
Vec apply_mask(std::span<const double> x, const Mask& m,
               std::span<const double> mask_token);

}  // namespace prolap
