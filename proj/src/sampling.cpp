#include "qmt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "qmt/rng.hpp"

namespace qmt {

namespace {

// Central ky index with the DC line at ny/2, matching the centered FFT.
int center_index(int ny) { return ny / 2; }

// Contiguous fully sampled center block [start, start + n_center).
int center_start(int ny, int n_center) { return center_index(ny) - n_center / 2; }

void draw_echo(int ny, int n_center, int budget, double alpha, Rng& rng,
               std::uint8_t* lines) {
  std::fill(lines, lines + ny, std::uint8_t{0});
  const int c_start = center_start(ny, n_center);
  for (int k = c_start; k < c_start + n_center; ++k) lines[k] = 1;

  const int n_free = budget - n_center;
  if (n_free <= 0) return;

  // Weighted sampling without replacement (Efraimidis-Spirakis): take the
  // n_free largest keys u^(1/w) among non-center lines.
  const int k_c = center_index(ny);
  const double k_max = std::max(k_c, ny - 1 - k_c);
  std::vector<std::pair<double, int>> keys;
  keys.reserve(ny - n_center);
  for (int k = 0; k < ny; ++k) {
    if (lines[k]) continue;
    const double w = std::pow(1.0 - std::abs(k - k_c) / k_max, alpha);
    const double u = rng.uniform_pos();
    // log(u)/w is monotone in u^(1/w); w == 0 maps to -inf and is only
    // chosen when every remaining line is needed.
    const double key = w > 0.0 ? std::log(u) / w
                               : -std::numeric_limits<double>::infinity();
    keys.emplace_back(key, k);
  }
  std::partial_sort(keys.begin(), keys.begin() + n_free, keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first > b.first || (a.first == b.first && a.second < b.second);
                    });
  for (int i = 0; i < n_free; ++i) lines[keys[i].second] = 1;
}

bool echoes_all_identical(const MaskSet& m) {
  for (int e = 1; e < m.t; ++e)
    if (!std::equal(m.lines.begin(), m.lines.begin() + m.ny,
                    m.lines.begin() + static_cast<std::size_t>(e) * m.ny))
      return false;
  return true;
}

}  // namespace

int mask_line_budget(int ny, double r_target) {
  return static_cast<int>(std::llround(ny / r_target));
}

int mask_center_lines(int ny, double center_frac) {
  return static_cast<int>(std::ceil(center_frac * ny));
}

MaskSet make_maskset(int ny, int t, double r_target, double center_frac,
                     std::uint64_t seed, double alpha) {
  if (ny <= 0 || t <= 0) fail(ErrorCode::invalid_argument, "maskset: empty grid");
  if (r_target < 1.0) fail(ErrorCode::invalid_argument, "maskset: r_target must be >= 1");
  if (center_frac < 0.0 || center_frac > 1.0)
    fail(ErrorCode::invalid_argument, "maskset: center_frac outside [0,1]");

  const int budget = mask_line_budget(ny, r_target);
  const int n_center = mask_center_lines(ny, center_frac);
  if (budget < n_center) fail(ErrorCode::invalid_argument, "center exceeds budget");
  if (budget < 1) fail(ErrorCode::invalid_argument, "maskset: zero line budget");

  MaskSet m;
  m.ny = ny;
  m.t = t;
  m.r_target = r_target;
  m.center_frac = center_frac;
  m.alpha = alpha;
  m.seed = seed;
  m.lines.resize(static_cast<std::size_t>(t) * ny);

  // A retry counter folded into the stream keeps the invariant that at
  // least two echoes differ whenever the free budget allows it.
  const bool can_vary = t >= 2 && budget > n_center && budget < ny;
  for (std::uint64_t attempt = 0;; ++attempt) {
    for (int e = 0; e < t; ++e) {
      Rng rng = Rng::stream(seed, {0x6d61736bULL, static_cast<std::uint64_t>(e), attempt});
      draw_echo(ny, n_center, budget, alpha, rng, m.lines.data() + static_cast<std::size_t>(e) * ny);
    }
    if (!can_vary || !echoes_all_identical(m)) break;
    if (attempt > 64) fail(ErrorCode::numeric_failure, "maskset: cannot vary echoes");
  }
  return m;
}

std::vector<MaskSet> make_mask_library(int n_sets, int ny, int t, double r_target,
                                       double center_frac, std::uint64_t seed,
                                       double alpha) {
  if (n_sets < 1) fail(ErrorCode::invalid_argument, "mask library: n_sets must be >= 1");
  std::vector<MaskSet> library;
  library.reserve(n_sets);
  for (int s = 0; s < n_sets; ++s) {
    Rng derive = Rng::stream(seed, {0x6c696272ULL, static_cast<std::uint64_t>(s)});
    library.push_back(make_maskset(ny, t, r_target, center_frac, derive.next(), alpha));
  }
  return library;
}

double achieved_acceleration(const MaskSet& m) {
  m.validate();
  std::int64_t total = 0;
  for (int e = 0; e < m.t; ++e) total += m.lines_per_echo(e);
  if (total == 0) fail(ErrorCode::numeric_failure, "maskset: no sampled lines");
  return static_cast<double>(m.ny) * m.t / static_cast<double>(total);
}

}  // namespace qmt
