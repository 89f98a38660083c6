#pragma once

#include <vector>

#include "qmt/types.hpp"

namespace qmt {

// Double-precision compute plane for the operators and reconstructions;
// storage types hold float32 and are converted at the boundaries.
struct Stack {
  int t = 0;
  int ny = 0;
  int nx = 0;
  std::vector<cdouble> v;  // [t][ny][nx]

  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  cdouble* echo(int j) { return v.data() + static_cast<std::size_t>(j) * plane(); }
  const cdouble* echo(int j) const { return v.data() + static_cast<std::size_t>(j) * plane(); }
};

Stack make_stack(int t, int ny, int nx);
Stack to_stack(const EchoSeries& series);
Stack to_stack(const KSpaceSet& kspace);
EchoSeries series_from_stack(const Stack& s, const std::vector<double>& te_ms);
KSpaceSet kspace_from_stack(const Stack& s, const std::vector<double>& te_ms,
                            const MaskSet& mask);

// Unitary 2D FFT with the DC sample at (ny/2, nx/2); in place, any
// rectangular size. ifft2_centered is its exact inverse.
void fft2_centered(int ny, int nx, cdouble* data);
void ifft2_centered(int ny, int nx, cdouble* data);

// E = MF per echo: centered FFT then zeroing of unsampled ky lines.
class EncodingOp {
 public:
  EncodingOp(int ny, int nx, const MaskSet& mask);

  int ny() const { return ny_; }
  int nx() const { return nx_; }
  const MaskSet& mask() const { return mask_; }

  // d_j = M_j F i_j. Input image stack, output k-space stack.
  void forward(const Stack& image, Stack& kspace) const;
  // i_j = F^H M_j d_j (zero-filled reconstruction).
  void adjoint(const Stack& kspace, Stack& image) const;

 private:
  int ny_;
  int nx_;
  MaskSet mask_;
};

KSpaceSet forward(const EncodingOp& op, const EchoSeries& series);
EchoSeries adjoint(const EncodingOp& op, const KSpaceSet& kspace);

struct UndersampleResult {
  KSpaceSet kspace;
  EchoSeries zero_filled;
};

UndersampleResult undersample(const EchoSeries& series, const MaskSet& mask);

}  // namespace qmt
