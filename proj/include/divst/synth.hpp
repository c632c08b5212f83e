#pragma once

#include <cstdint>
#include <vector>

#include "divst/data.hpp"

namespace divst {

// Two overlapping Gaussian blobs in 2-D (class means at ±separation on the
// first axis, which also carries the larger variance so the principal
// component of each class is pinned to it). Balanced classes, interleaved.
Dataset make_two_gaussians(int n, double separation, std::uint64_t seed);

// Fixed-shape categorical benchmark: 8124 rows, 22 categorical attributes
// one-hot encoded to 52 columns, two classes (4208 / 3916). Each class is a
// mixture of six "species" on a latent ordinal axis. Attributes 4..21 are
// binary threshold cuts of that axis (every rank boundary covered several
// times), so the per-class principal component tracks the axis and — because
// the extreme ranks sit behind the rarest cuts — extremity-biased labeling
// concentrates on the two ends and starves the middle ranks.
//
// Attributes 0..3 carry the class signal. The extreme ranks get a strong cue
// (attr 0 left, attr 1 right). Middle-rank rows split at random into two
// subpopulations: "flipped" rows reuse the extreme-cue attribute with the
// opposite polarity (a model fit only on extreme-rank labels reads them
// confidently backwards), while the rest carry a weak aligned cue on the
// same attribute plus a strong dedicated cue (attrs 2/3) that only helps a
// model which has actually seen labeled middle rows.
//
// species_rank_out (optional) receives each row's axis rank in {0..5};
// flipped_out (optional) receives 1 for middle-rank rows of the flipped
// subpopulation, else 0.
Dataset make_mushrooms_like(std::uint64_t seed, std::vector<int>* species_rank_out = nullptr,
                            std::vector<char>* flipped_out = nullptr);

} // namespace divst
