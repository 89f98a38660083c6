#include "qmt/types.hpp"

#include <cmath>
#include <cstdlib>

namespace qmt {

int MaskSet::lines_per_echo(int echo) const {
  int n = 0;
  for (int k = 0; k < ny; ++k) n += sampled(echo, k) ? 1 : 0;
  return n;
}

void MaskSet::validate() const {
  if (ny <= 0 || t <= 0) fail(ErrorCode::invalid_argument, "maskset: empty grid");
  if (lines.size() != static_cast<std::size_t>(ny) * t)
    fail(ErrorCode::shape_mismatch, "maskset: lines size does not match ny*t");
  if (r_target < 1.0) fail(ErrorCode::invalid_argument, "maskset: r_target < 1");
  for (std::uint8_t v : lines)
    if (v > 1) fail(ErrorCode::invalid_argument, "maskset: lines must be binary");
}

void EchoSeries::validate() const {
  if (ny <= 0 || nx <= 0) fail(ErrorCode::invalid_argument, "echoes: empty grid");
  if (te_ms.size() < 2) fail(ErrorCode::invalid_argument, "echoes: need at least 2 echoes");
  for (std::size_t j = 0; j < te_ms.size(); ++j) {
    if (!(te_ms[j] > 0.0)) fail(ErrorCode::invalid_argument, "echoes: te_ms must be positive");
    if (j > 0 && !(te_ms[j] > te_ms[j - 1]))
      fail(ErrorCode::invalid_argument, "echoes: te_ms must be strictly increasing");
  }
  if (data.size() != te_ms.size() * plane())
    fail(ErrorCode::shape_mismatch, "echoes: data size does not match t*ny*nx");
  for (const cfloat& v : data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      fail(ErrorCode::numeric_failure, "echoes: non-finite value");
}

void KSpaceSet::validate() const {
  if (ny <= 0 || nx <= 0) fail(ErrorCode::invalid_argument, "kspace: empty grid");
  if (data.size() != te_ms.size() * plane())
    fail(ErrorCode::shape_mismatch, "kspace: data size does not match t*ny*nx");
  mask.validate();
  if (mask.ny != ny || mask.t != echoes())
    fail(ErrorCode::shape_mismatch, "kspace: mask shape does not match data");
  for (int j = 0; j < echoes(); ++j)
    for (int ky = 0; ky < ny; ++ky) {
      if (mask.sampled(j, ky)) continue;
      const cfloat* row = data.data() + (static_cast<std::size_t>(j) * ny + ky) * nx;
      for (int kx = 0; kx < nx; ++kx)
        if (row[kx] != cfloat{0.0f, 0.0f})
          fail(ErrorCode::invalid_argument, "kspace: unsampled line is not zero");
    }
}

void ParamMaps::validate() const {
  if (ny <= 0 || nx <= 0) fail(ErrorCode::invalid_argument, "maps: empty grid");
  const std::size_t n = plane();
  if (i0.size() != n || t2_ms.size() != n || roi_labels.size() != n)
    fail(ErrorCode::shape_mismatch, "maps: field sizes do not match ny*nx");
  for (std::size_t p = 0; p < n; ++p) {
    if (!(i0[p] >= 0.0f)) fail(ErrorCode::invalid_argument, "maps: i0 must be non-negative");
    if (i0[p] > 0.0f) {
      if (t2_ms[p] < static_cast<float>(kT2MinMs) || t2_ms[p] > static_cast<float>(kT2MaxMs))
        fail(ErrorCode::invalid_argument, "maps: t2 outside clamp range");
    } else if (roi_labels[p] != 0) {
      fail(ErrorCode::invalid_argument, "maps: roi label on background pixel");
    }
    if (roi_labels[p] < 0) fail(ErrorCode::invalid_argument, "maps: negative roi label");
  }
}

EchoSeries normalize_dataset(const EchoSeries& series, double* scale_out) {
  series.validate();
  double max_mag = 0.0;
  for (const cfloat& v : series.data) max_mag = std::max(max_mag, static_cast<double>(std::abs(cdouble(v))));
  if (max_mag <= 0.0) fail(ErrorCode::numeric_failure, "degenerate dataset");
  EchoSeries out = series;
  // Exact identity when already normalized; otherwise divide in double and
  // round once to storage precision.
  if (max_mag != 1.0)
    for (cfloat& v : out.data)
      v = cfloat(static_cast<float>(v.real() / max_mag), static_cast<float>(v.imag() / max_mag));
  if (scale_out) *scale_out = max_mag;
  return out;
}

}  // namespace qmt
