#include "qmt/sigmodel.hpp"

#include <algorithm>
#include <cmath>

#include "qmt/parallel.hpp"

namespace qmt {

std::vector<double> model_signal(double i0, double t2_ms, const std::vector<double>& te_ms) {
  const double t2 = clamp_t2(t2_ms);
  std::vector<double> s(te_ms.size());
  for (std::size_t j = 0; j < te_ms.size(); ++j) s[j] = i0 * std::exp(-te_ms[j] / t2);
  return s;
}

ModelJacobian model_jacobian(double i0, double t2_ms, const std::vector<double>& te_ms) {
  const double t2 = clamp_t2(t2_ms);
  ModelJacobian jac;
  jac.d_i0.resize(te_ms.size());
  jac.d_t2.resize(te_ms.size());
  for (std::size_t j = 0; j < te_ms.size(); ++j) {
    const double e = std::exp(-te_ms[j] / t2);
    jac.d_i0[j] = e;
    jac.d_t2[j] = i0 * e * te_ms[j] / (t2 * t2);
  }
  return jac;
}

namespace {

// Least-squares line through (TE_j, log y_j) over positive samples.
void log_linear_init(const std::vector<double>& y, const std::vector<double>& te_ms,
                     double& i0, double& t2) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] <= 0.0) continue;
    const double ly = std::log(y[j]);
    sx += te_ms[j];
    sy += ly;
    sxx += te_ms[j] * te_ms[j];
    sxy += te_ms[j] * ly;
    ++n;
  }
  if (n < 2) {
    i0 = y.empty() ? 0.0 : *std::max_element(y.begin(), y.end());
    t2 = 50.0;
    return;
  }
  const double denom = n * sxx - sx * sx;
  const double slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  const double intercept = (sy - slope * sx) / n;
  i0 = std::exp(intercept);
  t2 = slope < 0.0 ? std::clamp(-1.0 / slope, kT2FloorMs, kT2MaxMs) : kT2MaxMs;
}

double residual_norm2(double i0, double t2, const std::vector<double>& y,
                      const std::vector<double>& te_ms) {
  double f = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double r = i0 * std::exp(-te_ms[j] / t2) - y[j];
    f += r * r;
  }
  return f;
}

}  // namespace

PixelFit fit_pixel(const std::vector<double>& magnitudes, const std::vector<double>& te_ms,
                   const FitOptions& options) {
  if (te_ms.size() < 2) fail(ErrorCode::invalid_argument, "fit: fewer than 2 echoes");
  if (magnitudes.size() != te_ms.size())
    fail(ErrorCode::shape_mismatch, "fit: sample count does not match echo count");

  // Normalizing by the pixel maximum makes the fit scale-equivariant:
  // stopping criteria then see the same numbers for y and c*y.
  const double peak = *std::max_element(magnitudes.begin(), magnitudes.end());
  PixelFit fit;
  if (!(peak > 0.0)) return fit;
  std::vector<double> y(magnitudes.size());
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = magnitudes[j] / peak;

  double i0 = 0.0, t2 = 0.0;
  log_linear_init(y, te_ms, i0, t2);
  i0 = std::max(i0, 1e-12);
  t2 = std::clamp(t2, kT2FloorMs, kT2MaxMs);

  double f = residual_norm2(i0, t2, y, te_ms);
  double lm_lambda = 1e-3;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const ModelJacobian jac = model_jacobian(i0, t2, te_ms);
    // Normal equations for the 2-parameter problem.
    double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, g0 = 0.0, g1 = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double r = i0 * jac.d_i0[j] - y[j];
      jtj00 += jac.d_i0[j] * jac.d_i0[j];
      jtj01 += jac.d_i0[j] * jac.d_t2[j];
      jtj11 += jac.d_t2[j] * jac.d_t2[j];
      g0 += jac.d_i0[j] * r;
      g1 += jac.d_t2[j] * r;
    }
    if (std::sqrt(g0 * g0 + g1 * g1) <= options.gradient_tol) break;

    bool stepped = false;
    for (int damp = 0; damp < 16; ++damp) {
      const double a00 = jtj00 * (1.0 + lm_lambda);
      const double a11 = jtj11 * (1.0 + lm_lambda);
      const double det = a00 * a11 - jtj01 * jtj01;
      if (det == 0.0) break;
      const double di0 = (-g0 * a11 + g1 * jtj01) / det;
      const double dt2 = (-g1 * a00 + g0 * jtj01) / det;
      const double ni0 = std::max(i0 + di0, 0.0);
      const double nt2 = std::clamp(t2 + dt2, kT2FloorMs, kT2MaxMs);
      const double nf = residual_norm2(ni0, nt2, y, te_ms);
      if (nf < f) {
        i0 = ni0;
        t2 = nt2;
        f = nf;
        lm_lambda = std::max(lm_lambda * 0.25, 1e-12);
        stepped = true;
        break;
      }
      lm_lambda *= 8.0;
    }
    if (!stepped) break;
  }

  fit.i0 = i0 * peak;
  fit.t2_ms = std::clamp(t2, kT2MinMs, kT2MaxMs);
  fit.iterations = iter;
  return fit;
}

namespace {

ParamMaps fit_all(const EchoSeries& series, const FitOptions& options, bool parallel) {
  series.validate();
  const int t = series.echoes();
  const std::size_t n = series.plane();

  double data_max = 0.0;
  for (const cfloat& v : series.data)
    data_max = std::max(data_max, static_cast<double>(std::abs(cdouble(v))));
  const double threshold = options.threshold_frac * data_max;

  ParamMaps maps;
  maps.ny = series.ny;
  maps.nx = series.nx;
  maps.i0.assign(n, 0.0f);
  maps.t2_ms.assign(n, static_cast<float>(kT2FloorMs));
  maps.roi_labels.assign(n, 0);

  auto fit_one = [&](std::int64_t p) {
    std::vector<double> y(t);
    double mean = 0.0;
    for (int j = 0; j < t; ++j) {
      y[j] = std::abs(cdouble(series.data[static_cast<std::size_t>(j) * n + p]));
      mean += y[j];
    }
    mean /= t;
    if (mean <= threshold) return;
    const PixelFit fit = fit_pixel(y, series.te_ms, options);
    maps.i0[static_cast<std::size_t>(p)] = static_cast<float>(fit.i0);
    maps.t2_ms[static_cast<std::size_t>(p)] = static_cast<float>(fit.t2_ms);
    maps.roi_labels[static_cast<std::size_t>(p)] = fit.i0 > 0.0 ? 1 : 0;
  };

  if (parallel) {
    parallel_for(static_cast<std::int64_t>(n), fit_one);
  } else {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(n); ++p) fit_one(p);
  }
  maps.validate();
  return maps;
}

}  // namespace

ParamMaps fit_pixelwise(const EchoSeries& series, const FitOptions& options) {
  return fit_all(series, options, true);
}

namespace ref {
ParamMaps fit_pixelwise_serial(const EchoSeries& series, const FitOptions& options) {
  return fit_all(series, options, false);
}
}  // namespace ref

}  // namespace qmt
