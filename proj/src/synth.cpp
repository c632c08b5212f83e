#include "divst/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "divst/errors.hpp"
#include "divst/rng.hpp"

namespace divst {

Dataset make_two_gaussians(int n, double separation, std::uint64_t seed) {
    if (n < 4) throw ConfigError("need at least 4 points");
    if (!(separation > 0.0)) throw ConfigError("separation must be positive");
    Dataset ds;
    ds.features = Matrix(static_cast<std::size_t>(n), 2);
    ds.labels.resize(n);
    ds.class_count = 2;
    ds.label_map = {"0", "1"};
    ds.name = "two-gaussians";
    Rng rng(seed, "two-gaussians", 0);
    for (int i = 0; i < n; ++i) {
        int c = i % 2;
        double sign = c == 0 ? -1.0 : 1.0;
        ds.features(i, 0) = sign * separation + 1.4 * rng.normal();
        ds.features(i, 1) = rng.normal();
        ds.labels[i] = c;
    }
    return ds;
}

namespace {

constexpr int kRanks = 6;    // species per class, ordered along the latent axis
constexpr int kAttrs = 22;   // 4 class-informative + 18 axis thresholds
constexpr int kRows0 = 4208; // class "e"
constexpr int kRows1 = 3916; // class "p"

// Species mass along the axis; most rows sit on the two middle ranks, where
// the class cue is indirect — extremity-biased labeling never sees them.
constexpr double kRankWeight[kRanks] = {0.13, 0.07, 0.30, 0.30, 0.07, 0.13};

constexpr double kStrongCue = 0.97;   // extreme cues, dedicated middle cues, flips
constexpr double kAxisKeep = 0.95;    // axis threshold attributes
constexpr double kFlipFraction = 0.20;  // middle-rank rows that flip the extreme cues
constexpr double kHonestAligned = 0.92; // honest middles whose primary cue is aligned
constexpr double kExtSecond = 0.50;     // extreme rows firing the secondary cue
constexpr double kHonestSecond = 0.55;  // honest middles firing the secondary cue
constexpr double kFlipHome = 0.50;      // flipped middles firing the second middle cue

// attrs 0..3 have 4 categories (cats 2/3 are the class-neutral "off" states),
// attrs 4..21 are binary cuts of the axis.
int attr_arity(int a) { return a < 4 ? 4 : 2; }

// Which rank boundary each axis attribute cuts (boundary b separates ranks
// <= b from ranks > b). Cuts sit only on the outer gaps — never between the
// two middle ranks — so middle rows sit at the centre of every threshold
// feature while extreme rows land far out on all of them.
int axis_boundary(int a) {
    static const int bounds[18] = {0, 0, 0, 0, 0, 1, 1, 1, 1, 3, 3, 3, 3, 4, 4, 4, 4, 4};
    return bounds[a - 4];
}

// One category draw for attribute a on a row of rank j, class c.
//
// Cue structure (attrs 0 and 1):
//  - extreme rows always fire attr0 aligned and fire attr1 aligned only
//    three quarters of the time (uniform cue-category noise otherwise), so
//    attr0 carries more trained signal than attr1;
//  - flipped middle rows stack both cue attributes reversed, landing in the
//    top confidence tier of a model trained on extremes;
//  - honest middle rows fire the pair anti-correlated — one aligned, one
//    reversed — so their read rests on the attr0/attr1 signal difference,
//    and every honest row contributes exactly one aligned and one reversed
//    cue vote no matter how it is labeled.
int sample_attr(Rng& rng, int a, int j, int c, bool flipped, bool h_aligned) {
    double u = rng.uniform();
    auto strong = [&](int cat) {
        // dominant category with probability kStrongCue, else one of the
        // other three uniformly
        if (u < kStrongCue) return cat;
        int alt = static_cast<int>((u - kStrongCue) / ((1.0 - kStrongCue) / 3.0));
        if (alt > 2) alt = 2;
        return alt + (alt >= cat ? 1 : 0);
    };
    auto neutral = [&]() { return u < 0.5 ? 2 : 3; };
    if (a == 0 || a == 1) {
        if (j <= 1 || j >= 4) {
            if (a == 0) return strong(c);
            if (u < kExtSecond) return strong(c);
            // uniform cue-category noise keeps the secondary cue weaker
            return u < kExtSecond + (1.0 - kExtSecond) / 2.0 ? 0 : 1;
        }
        if (flipped) return strong(1 - c);
        // honest middle: primary cue aligned iff h_aligned; secondary fires
        // the opposite category of the primary just over half the time and
        // stays neutral otherwise, so honest rows never stack two cues and
        // their opposite-category votes cannot outweigh the extremes' aligned
        // votes on the secondary attribute
        if (a == 0) return h_aligned ? c : 1 - c;
        if (u < kHonestSecond) return h_aligned ? 1 - c : c;
        return (u - kHonestSecond) / (1.0 - kHonestSecond) < 0.5 ? 2 : 3;
    }
    if (a == 2 || a == 3) {
        // dedicated middle cue; flipped rows also fire the second middle cue
        // part of the time so the consistent signal can outvote their
        // reversed primary pair without forming a region of its own
        bool home = (a == 2) ? j == 2 : j == 3;
        if (home) return strong(c);
        if (flipped && rng.uniform() < kFlipHome) return strong(c);
        return neutral();
    }
    int hi = j > axis_boundary(a) ? 1 : 0;
    return u < kAxisKeep ? hi : 1 - hi;
}

std::vector<int> rank_quotas(int total) {
    std::vector<int> quota(kRanks, 0);
    std::vector<double> rem(kRanks, 0.0);
    int assigned = 0;
    for (int j = 0; j < kRanks; ++j) {
        double ideal = kRankWeight[j] * total;
        quota[j] = static_cast<int>(std::floor(ideal));
        rem[j] = ideal - quota[j];
        assigned += quota[j];
    }
    std::vector<int> order(kRanks);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (rem[a] != rem[b]) return rem[a] > rem[b];
        return a < b;
    });
    for (int k = 0; k < total - assigned; ++k) ++quota[order[k % kRanks]];
    return quota;
}

} // namespace

Dataset make_mushrooms_like(std::uint64_t seed, std::vector<int>* species_rank_out,
                            std::vector<char>* flipped_out) {
    int dim = 0;
    std::vector<int> offset(kAttrs, 0);
    for (int a = 0; a < kAttrs; ++a) {
        offset[a] = dim;
        dim += attr_arity(a);
    }

    int total = kRows0 + kRows1;
    Dataset ds;
    ds.features = Matrix(static_cast<std::size_t>(total), static_cast<std::size_t>(dim));
    ds.labels.resize(total);
    ds.class_count = 2;
    ds.label_map = {"e", "p"};
    ds.name = "mushrooms-like";
    if (species_rank_out) species_rank_out->assign(total, 0);
    if (flipped_out) flipped_out->assign(total, 0);

    std::size_t row = 0;
    for (int c = 0; c < 2; ++c) {
        Rng rng(seed, "mushlike", c);
        std::vector<int> quota = rank_quotas(c == 0 ? kRows0 : kRows1);
        for (int j = 0; j < kRanks; ++j) {
            bool middle = j == 2 || j == 3;
            for (int k = 0; k < quota[j]; ++k, ++row) {
                bool flipped = middle && rng.uniform() < kFlipFraction;
                bool h_aligned = middle && rng.uniform() < kHonestAligned;
                for (int a = 0; a < kAttrs; ++a) {
                    int cat = sample_attr(rng, a, j, c, flipped, h_aligned);
                    ds.features(row, offset[a] + cat) = 1.0;
                }
                ds.labels[row] = c;
                if (species_rank_out) (*species_rank_out)[row] = j;
                if (flipped_out) (*flipped_out)[row] = flipped ? 1 : 0;
            }
        }
    }
    return ds;
}

} // namespace divst
