#pragma once

#include <cstdint>
#include <vector>

#include "qmt/types.hpp"

namespace qmt {

// Time-varying 1D variable-density random undersampling along ky.
//
// Every echo samples exactly round(ny / r_target) lines: a fully sampled
// block of ceil(center_frac * ny) central lines plus a weighted draw
// without replacement from the remaining lines with density
// w(k) = (1 - |k - k_c| / k_max)^alpha. Each echo of each set is an
// independent draw keyed on (seed, echo), which is what makes the masks
// vary along the echo dimension.
MaskSet make_maskset(int ny, int t, double r_target, double center_frac,
                     std::uint64_t seed, double alpha = 2.0);

// n_sets independent mask-sets; set s is keyed on (seed, s).
std::vector<MaskSet> make_mask_library(int n_sets, int ny, int t, double r_target,
                                       double center_frac, std::uint64_t seed,
                                       double alpha = 2.0);

// ny divided by the mean number of sampled lines per echo.
double achieved_acceleration(const MaskSet& m);

// Exact per-echo line budget round(ny / r_target).
int mask_line_budget(int ny, double r_target);

// Number of always-sampled central lines ceil(center_frac * ny).
int mask_center_lines(int ny, double center_frac);

}  // namespace qmt
