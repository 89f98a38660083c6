#include "qmt/encoding.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "qmt/parallel.hpp"

namespace qmt {

namespace {

// Cached FFTW plans per (ny, nx, sign). Creation is serialized; execution
// through fftw_execute_dft on distinct buffers is thread-safe.
class PlanCache {
 public:
  static fftw_plan get(int ny, int nx, int sign) {
    static PlanCache cache;
    std::scoped_lock lock(cache.mutex_);
    const auto key = std::tuple(ny, nx, sign);
    auto it = cache.plans_.find(key);
    if (it != cache.plans_.end()) return it->second;
    std::vector<cdouble> scratch(static_cast<std::size_t>(ny) * nx);
    fftw_plan plan = fftw_plan_dft_2d(
        ny, nx, reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) fail(ErrorCode::numeric_failure, "fftw plan creation failed");
    cache.plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

// Shift permutations are exact (no twiddle arithmetic), so the centered
// transforms inherit FFTW's accuracy.
void shift2(int ny, int nx, const cdouble* in, cdouble* out, int sy, int sx) {
  for (int y = 0; y < ny; ++y) {
    const int oy = y + sy < ny ? y + sy : y + sy - ny;
    const cdouble* src = in + static_cast<std::size_t>(y) * nx;
    cdouble* dst = out + static_cast<std::size_t>(oy) * nx;
    for (int x = 0; x < nx; ++x) {
      const int ox = x + sx < nx ? x + sx : x + sx - nx;
      dst[ox] = src[x];
    }
  }
}

void centered_transform(int ny, int nx, cdouble* data, int sign) {
  if (ny <= 0 || nx <= 0) fail(ErrorCode::invalid_argument, "fft: zero-size array");
  const std::size_t n = static_cast<std::size_t>(ny) * nx;
  std::vector<cdouble> tmp(n);
  // ifftshift: move the centered DC sample to index 0.
  shift2(ny, nx, data, tmp.data(), ny - ny / 2, nx - nx / 2);
  fftw_execute_dft(PlanCache::get(ny, nx, sign),
                   reinterpret_cast<fftw_complex*>(tmp.data()),
                   reinterpret_cast<fftw_complex*>(tmp.data()));
  // fftshift back to centered indexing.
  shift2(ny, nx, tmp.data(), data, ny / 2, nx / 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) data[i] *= scale;
}

void warm_plans(int ny, int nx) {
  PlanCache::get(ny, nx, FFTW_FORWARD);
  PlanCache::get(ny, nx, FFTW_BACKWARD);
}

void apply_mask_rows(const MaskSet& mask, int echo, int nx, cdouble* plane) {
  for (int ky = 0; ky < mask.ny; ++ky) {
    if (mask.sampled(echo, ky)) continue;
    cdouble* row = plane + static_cast<std::size_t>(ky) * nx;
    for (int kx = 0; kx < nx; ++kx) row[kx] = cdouble(0.0, 0.0);
  }
}

}  // namespace

Stack make_stack(int t, int ny, int nx) {
  Stack s;
  s.t = t;
  s.ny = ny;
  s.nx = nx;
  s.v.assign(static_cast<std::size_t>(t) * ny * nx, cdouble(0.0, 0.0));
  return s;
}

Stack to_stack(const EchoSeries& series) {
  Stack s = make_stack(series.echoes(), series.ny, series.nx);
  for (std::size_t i = 0; i < series.data.size(); ++i) s.v[i] = cdouble(series.data[i]);
  return s;
}

Stack to_stack(const KSpaceSet& kspace) {
  Stack s = make_stack(kspace.echoes(), kspace.ny, kspace.nx);
  for (std::size_t i = 0; i < kspace.data.size(); ++i) s.v[i] = cdouble(kspace.data[i]);
  return s;
}

EchoSeries series_from_stack(const Stack& s, const std::vector<double>& te_ms) {
  if (static_cast<int>(te_ms.size()) != s.t)
    fail(ErrorCode::shape_mismatch, "stack echo count does not match te_ms");
  EchoSeries series;
  series.ny = s.ny;
  series.nx = s.nx;
  series.te_ms = te_ms;
  series.data.resize(s.v.size());
  for (std::size_t i = 0; i < s.v.size(); ++i)
    series.data[i] = cfloat(static_cast<float>(s.v[i].real()), static_cast<float>(s.v[i].imag()));
  return series;
}

KSpaceSet kspace_from_stack(const Stack& s, const std::vector<double>& te_ms,
                            const MaskSet& mask) {
  if (static_cast<int>(te_ms.size()) != s.t)
    fail(ErrorCode::shape_mismatch, "stack echo count does not match te_ms");
  KSpaceSet k;
  k.ny = s.ny;
  k.nx = s.nx;
  k.te_ms = te_ms;
  k.mask = mask;
  k.data.resize(s.v.size());
  for (int j = 0; j < s.t; ++j) {
    const cdouble* src = s.echo(j);
    cfloat* dst = k.data.data() + static_cast<std::size_t>(j) * s.plane();
    for (int ky = 0; ky < s.ny; ++ky) {
      const bool on = mask.sampled(j, ky);
      for (int kx = 0; kx < s.nx; ++kx) {
        const std::size_t i = static_cast<std::size_t>(ky) * s.nx + kx;
        dst[i] = on ? cfloat(static_cast<float>(src[i].real()), static_cast<float>(src[i].imag()))
                    : cfloat(0.0f, 0.0f);
      }
    }
  }
  k.validate();
  return k;
}

void fft2_centered(int ny, int nx, cdouble* data) { centered_transform(ny, nx, data, FFTW_FORWARD); }

void ifft2_centered(int ny, int nx, cdouble* data) { centered_transform(ny, nx, data, FFTW_BACKWARD); }

EncodingOp::EncodingOp(int ny, int nx, const MaskSet& mask) : ny_(ny), nx_(nx), mask_(mask) {
  mask_.validate();
  if (mask_.ny != ny) fail(ErrorCode::shape_mismatch, "encoding: mask ny does not match grid");
}

void EncodingOp::forward(const Stack& image, Stack& kspace) const {
  if (image.ny != ny_ || image.nx != nx_ || image.t != mask_.t)
    fail(ErrorCode::shape_mismatch, "encoding forward: stack shape mismatch");
  if (&kspace != &image) kspace = image;
  // Warm the plan cache before the parallel region.
  warm_plans(ny_, nx_);
  parallel_for(kspace.t, [&](std::int64_t j) {
    cdouble* plane = kspace.echo(static_cast<int>(j));
    fft2_centered(ny_, nx_, plane);
    apply_mask_rows(mask_, static_cast<int>(j), nx_, plane);
  });
}

void EncodingOp::adjoint(const Stack& kspace, Stack& image) const {
  if (kspace.ny != ny_ || kspace.nx != nx_ || kspace.t != mask_.t)
    fail(ErrorCode::shape_mismatch, "encoding adjoint: stack shape mismatch");
  if (&image != &kspace) image = kspace;
  warm_plans(ny_, nx_);
  parallel_for(image.t, [&](std::int64_t j) {
    cdouble* plane = image.echo(static_cast<int>(j));
    apply_mask_rows(mask_, static_cast<int>(j), nx_, plane);
    ifft2_centered(ny_, nx_, plane);
  });
}

KSpaceSet forward(const EncodingOp& op, const EchoSeries& series) {
  series.validate();
  if (series.echoes() != op.mask().t)
    fail(ErrorCode::shape_mismatch, "forward: mask/series echo count mismatch");
  Stack s = to_stack(series);
  Stack k;
  op.forward(s, k);
  return kspace_from_stack(k, series.te_ms, op.mask());
}

EchoSeries adjoint(const EncodingOp& op, const KSpaceSet& kspace) {
  kspace.validate();
  Stack k = to_stack(kspace);
  Stack img;
  op.adjoint(k, img);
  return series_from_stack(img, kspace.te_ms);
}

UndersampleResult undersample(const EchoSeries& series, const MaskSet& mask) {
  EncodingOp op(series.ny, series.nx, mask);
  UndersampleResult result;
  result.kspace = forward(op, series);
  result.zero_filled = adjoint(op, result.kspace);
  return result;
}

}  // namespace qmt
