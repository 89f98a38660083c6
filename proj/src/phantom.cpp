#include "qmt/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "qmt/parallel.hpp"
#include "qmt/rng.hpp"

namespace qmt {

namespace {

struct Shape {
  bool annulus = false;
  double cy = 0.0, cx = 0.0;
  double ay = 0.0, ax = 0.0;   // ellipse semi-axes
  double r_in = 0.0, r_out = 0.0;
  int half_sign = 0;           // annulus half: keep sign(y - cy) == half_sign

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    if (!annulus) {
      const double e = dy * dy / (ay * ay) + dx * dx / (ax * ax);
      return e <= 1.0;
    }
    const double r = std::sqrt(dy * dy + dx * dx);
    if (r < r_in || r > r_out) return false;
    return half_sign > 0 ? dy >= 0.0 : dy <= 0.0;
  }
};

}  // namespace

void PhantomSpec::validate() const {
  if (ny <= 0 || nx <= 0) fail(ErrorCode::invalid_argument, "phantom: empty grid");
  if (n_objects < 1) fail(ErrorCode::invalid_argument, "phantom: need at least one object");
  if (tissue_table.empty()) fail(ErrorCode::invalid_argument, "phantom: empty tissue table");
  for (const TissueClass& tc : tissue_table) {
    if (tc.t2_mean_ms - 3.0 * tc.t2_sd_ms < kT2MinMs ||
        tc.t2_mean_ms + 3.0 * tc.t2_sd_ms > kT2MaxMs)
      fail(ErrorCode::invalid_argument, "phantom: t2 mean +/- 3 sd leaves clamp range: " + tc.name);
    if (!(tc.i0_lo > 0.0) || tc.i0_hi > 1.0 || tc.i0_lo > tc.i0_hi)
      fail(ErrorCode::invalid_argument, "phantom: i0 range must lie in (0,1]: " + tc.name);
  }
}

std::vector<TissueClass> default_tissue_table() {
  return {
      {"filler", 15.0, 2.0, 0.55, 0.95},
      {"patellar", 39.6, 3.5, 0.5, 1.0},
      {"femoral", 46.0, 3.4, 0.5, 1.0},
      {"tibial", 42.5, 5.5, 0.5, 1.0},
      {"superficial", 53.4, 3.8, 0.5, 1.0},
      {"deep", 32.0, 2.3, 0.5, 1.0},
      {"meniscus", 27.5, 4.0, 0.5, 1.0},
  };
}

ParamMaps make_phantom(const PhantomSpec& spec) {
  spec.validate();
  ParamMaps maps;
  maps.ny = spec.ny;
  maps.nx = spec.nx;
  const std::size_t n = maps.plane();
  maps.i0.assign(n, 0.0f);
  maps.t2_ms.assign(n, static_cast<float>(kT2MinMs));
  maps.roi_labels.assign(n, 0);

  Rng rng = Rng::stream(spec.seed, {0x7068616eULL});
  const double span = std::min(spec.ny, spec.nx);
  for (int obj = 0; obj < spec.n_objects; ++obj) {
    const TissueClass& tc =
        spec.tissue_table[rng.below(spec.tissue_table.size())];
    Shape shape;
    shape.annulus = rng.uniform() < 0.3;
    shape.cy = rng.uniform(0.22, 0.78) * spec.ny;
    shape.cx = rng.uniform(0.22, 0.78) * spec.nx;
    if (shape.annulus) {
      shape.r_out = rng.uniform(0.10, 0.30) * span;
      shape.r_in = shape.r_out * rng.uniform(0.45, 0.75);
      shape.half_sign = rng.uniform() < 0.5 ? 1 : -1;
    } else {
      shape.ay = rng.uniform(0.06, 0.24) * spec.ny;
      shape.ax = rng.uniform(0.06, 0.24) * spec.nx;
    }
    const double t2 =
        std::clamp(rng.normal(tc.t2_mean_ms, tc.t2_sd_ms), kT2MinMs, kT2MaxMs);
    const double i0 = rng.uniform(tc.i0_lo, tc.i0_hi);
    const std::int32_t label = obj + 1;
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        if (!shape.contains(y + 0.5, x + 0.5)) continue;
        const std::size_t p = static_cast<std::size_t>(y) * spec.nx + x;
        maps.i0[p] = static_cast<float>(i0);
        maps.t2_ms[p] = static_cast<float>(t2);
        maps.roi_labels[p] = label;
      }
  }
  maps.validate();
  return maps;
}

std::vector<double> ideal_signal(const ParamMaps& maps, const std::vector<double>& te_ms) {
  maps.validate();
  const std::size_t n = maps.plane();
  std::vector<double> stack(te_ms.size() * n);
  for (std::size_t j = 0; j < te_ms.size(); ++j) {
    const double te = te_ms[j];
    double* plane = stack.data() + j * n;
    for (std::size_t p = 0; p < n; ++p) {
      const double i0 = maps.i0[p];
      plane[p] = i0 > 0.0 ? i0 * std::exp(-te / static_cast<double>(maps.t2_ms[p])) : 0.0;
    }
  }
  return stack;
}

EchoSeries synthesize_echoes(const ParamMaps& maps, const std::vector<double>& te_ms,
                             double noise_sd, std::uint64_t seed) {
  if (noise_sd < 0.0) fail(ErrorCode::invalid_argument, "synthesize: negative noise_sd");
  if (te_ms.size() < 2) fail(ErrorCode::invalid_argument, "synthesize: need at least 2 echoes");
  for (std::size_t j = 1; j < te_ms.size(); ++j)
    if (!(te_ms[j] > te_ms[j - 1]))
      fail(ErrorCode::invalid_argument, "synthesize: te_ms must be strictly increasing");
  if (!(te_ms.front() > 0.0))
    fail(ErrorCode::invalid_argument, "synthesize: te_ms must be positive");

  const std::vector<double> clean = ideal_signal(maps, te_ms);
  EchoSeries series;
  series.ny = maps.ny;
  series.nx = maps.nx;
  series.te_ms = te_ms;
  const std::size_t n = maps.plane();
  series.data.resize(te_ms.size() * n);
  const int t = static_cast<int>(te_ms.size());
  // One stream per (echo, pixel) so noise is reproducible under any
  // parallel schedule.
  parallel_for(static_cast<std::int64_t>(t) * static_cast<std::int64_t>(n), [&](std::int64_t i) {
    double re = clean[static_cast<std::size_t>(i)];
    double im = 0.0;
    if (noise_sd > 0.0) {
      Rng rng = Rng::stream(seed, {0x6e6f6973ULL, static_cast<std::uint64_t>(i)});
      re += noise_sd * rng.normal();
      im += noise_sd * rng.normal();
    }
    series.data[static_cast<std::size_t>(i)] =
        cfloat(static_cast<float>(re), static_cast<float>(im));
  });
  series.validate();
  return series;
}

}  // namespace qmt
