#pragma once

#include <vector>

#include "qmt/types.hpp"

namespace qmt {

// Mono-exponential T2 signal model s_j = i0 * exp(-TE_j / t2) with a
// t2 floor that keeps the TE/t2^2 Jacobian term finite.
inline constexpr double kT2FloorMs = 1.0;

inline double clamp_t2(double t2_ms) { return t2_ms < kT2FloorMs ? kT2FloorMs : t2_ms; }

// s_j = i0 * exp(-TE_j / max(t2, floor)).
std::vector<double> model_signal(double i0, double t2_ms, const std::vector<double>& te_ms);

struct ModelJacobian {
  std::vector<double> d_i0;  // exp(-TE_j / t2)
  std::vector<double> d_t2;  // i0 * exp(-TE_j / t2) * TE_j / t2^2
};

// Partial derivatives of the signal model, evaluated at max(t2, floor);
// the region below the floor is treated as flat.
ModelJacobian model_jacobian(double i0, double t2_ms, const std::vector<double>& te_ms);

struct FitOptions {
  // Pixels whose mean magnitude falls at or below threshold_frac times the
  // dataset maximum are treated as background.
  double threshold_frac = 0.02;
  int max_iterations = 50;
  double gradient_tol = 1e-10;
};

// Pixelwise magnitude fit: log-linear initialization refined by
// Levenberg-Marquardt, clamped to [kT2MinMs, kT2MaxMs]. Background pixels
// get i0 = 0, t2 = floor, label 0; foreground gets label 1.
ParamMaps fit_pixelwise(const EchoSeries& series, const FitOptions& options = {});

struct PixelFit {
  double i0 = 0.0;
  double t2_ms = kT2FloorMs;
  int iterations = 0;
};

// Single-pixel solver underlying fit_pixelwise; exposed for tests.
PixelFit fit_pixel(const std::vector<double>& magnitudes, const std::vector<double>& te_ms,
                   const FitOptions& options = {});

namespace ref {
// Serial twin of the parallel map loop in fit_pixelwise.
ParamMaps fit_pixelwise_serial(const EchoSeries& series, const FitOptions& options = {});
}  // namespace ref

}  // namespace qmt
