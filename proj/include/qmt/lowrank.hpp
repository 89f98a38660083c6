#pragma once

#include <vector>

#include <Eigen/Dense>

#include "qmt/encoding.hpp"
#include "qmt/types.hpp"

namespace qmt {

// Casorati view of an echo stack: [n_pixels, t], one column per echo.
// The stack layout is echo-major, so this is a zero-copy Eigen map.
Eigen::Map<const Eigen::MatrixXcd> casorati(const Stack& s);
Eigen::Map<Eigen::MatrixXcd> casorati(Stack& s);

// Singular-value soft-thresholding: U * max(S - lambda, 0) * V^H.
// thresholded_sv, when given, receives the singular values of the result.
Eigen::MatrixXcd svt(const Eigen::MatrixXcd& m, double lambda,
                     Eigen::VectorXd* thresholded_sv = nullptr);

// Overlapping b x b blocks at a fixed stride covering every pixel; trailing
// positions are clamped to the image edge. Synthesis averages overlapping
// estimates uniformly, so weights sum to 1 at every pixel.
struct LlrBlocks {
  int block = 8;
  int stride = 4;
  std::vector<int> starts_y;
  std::vector<int> starts_x;

  static LlrBlocks make(int ny, int nx, int block, int stride);
};

struct IstaSchedule {
  int glr_iterations = 50;
  int llr_init_iterations = 20;
  int llr_iterations = 30;
  // Regularization weights as fractions of the largest singular value of
  // the zero-filled Casorati matrix; chosen by grid search on a held-out
  // phantom and frozen.
  double lambda_glr_rel = 0.02;
  // lambda_llr = lambda_reduction * lambda_glr, on the same absolute scale.
  double lambda_reduction = 0.5;
  int block = 8;
  int stride = 4;

  void validate() const;
};

struct ReconResult {
  EchoSeries series;
  // Per-iteration objective values. For GLR this is the full
  // 0.5*||Ex-d||^2 + lambda*||Tx||_* objective; for LLR phases the nuclear
  // term of overlapping blocks is not tracked and only the data term
  // 0.5*||Ex-d||^2 is recorded.
  std::vector<double> objective;
};

// ISTA with global singular-value thresholding from x0 = E^H d.
ReconResult recon_glr(const KSpaceSet& kspace, const IstaSchedule& sched);

// GLR initialization followed by iterations whose prox applies svt to
// every overlapping block Casorati matrix with the reduced weight.
ReconResult recon_llr(const KSpaceSet& kspace, const IstaSchedule& sched);

namespace detail {
// One LLR prox sweep: svt of every block, then uniform overlap-average.
// Returns the stack after synthesis. The parallel flag selects the OpenMP
// block pass or the serial reference twin; both accumulate in the same
// fixed order and agree bitwise.
Stack llr_prox(const Stack& x, const LlrBlocks& blocks, double lambda, bool parallel);
}  // namespace detail

}  // namespace qmt
