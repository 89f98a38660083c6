#include "qmt/mantis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qmt/parallel.hpp"
#include "qmt/phantom.hpp"
#include "qmt/rng.hpp"
#include "qmt/sigmodel.hpp"

namespace qmt {

namespace {

constexpr double kNonnegSharpness = 50.0;
constexpr double kT2Sharpness = 2.0;  // per millisecond

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// softplus(x) = log(1 + exp(k x)) / k, evaluated stably.
double softplus_k(double x, double k) {
  const double z = k * x;
  if (z > 30.0) return x + std::log1p(std::exp(-z)) / k;
  return std::log1p(std::exp(z)) / k;
}

}  // namespace

double smooth_nonneg(double x) {
  // x * sigmoid(k x): smooth, asymptotically identity, exactly 0 at 0.
  return x * sigmoid(kNonnegSharpness * x);
}

double smooth_nonneg_grad(double x) {
  const double s = sigmoid(kNonnegSharpness * x);
  return s + kNonnegSharpness * x * s * (1.0 - s);
}

double smooth_t2_ms(double t2_ms) {
  return kT2MinMs + softplus_k(t2_ms - kT2MinMs, kT2Sharpness) -
         softplus_k(t2_ms - kT2MaxMs, kT2Sharpness);
}

double smooth_t2_ms_grad(double t2_ms) {
  return sigmoid(kT2Sharpness * (t2_ms - kT2MinMs)) -
         sigmoid(kT2Sharpness * (t2_ms - kT2MaxMs));
}

void TrainConfig::validate() const {
  if (lambda_data < 0.0 || lambda_cnn < 0.0)
    fail(ErrorCode::invalid_argument, "train: lambda must be >= 0");
  if (batch < 1) fail(ErrorCode::invalid_argument, "train: batch must be >= 1");
  if (epochs < 1) fail(ErrorCode::invalid_argument, "train: epochs must be >= 1");
  if (!(lr >= 0.0)) fail(ErrorCode::invalid_argument, "train: bad learning rate");
  if (t2_loss_weight < 0.0) fail(ErrorCode::invalid_argument, "train: bad t2 weight");
}

LossValue loss_mantis(const Tensor4& output, const TrainSample& sample,
                      double lambda_data, double lambda_cnn,
                      const TrainConfig& config) {
  const int ny = sample.d.ny;
  const int nx = sample.d.nx;
  const int t = sample.d.t;
  if (output.n != 1 || output.c != 2 || output.h != ny || output.w != nx)
    fail(ErrorCode::shape_mismatch, "loss: output shape mismatch");
  const std::size_t n = static_cast<std::size_t>(ny) * nx;

  LossValue loss;
  loss.output_grad = Tensor4(1, 2, ny, nx);
  const double* o0 = output.at(0, 0);
  const double* o1 = output.at(0, 1);
  double* g0 = loss.output_grad.at(0, 0);
  double* g1 = loss.output_grad.at(0, 1);

  // Data term: synthesize echoes from the smooth-clamped maps, encode,
  // compare against the measurements.
  if (lambda_data > 0.0) {
    std::vector<double> i0c(n), di0c(n), t2c(n), dt2c(n);
    for (std::size_t p = 0; p < n; ++p) {
      i0c[p] = smooth_nonneg(o0[p]);
      di0c[p] = smooth_nonneg_grad(o0[p]);
      const double t2_ms = o1[p] * kT2Scale;
      t2c[p] = smooth_t2_ms(t2_ms);
      dt2c[p] = smooth_t2_ms_grad(t2_ms);
    }
    const double norm = 1.0 / (static_cast<double>(t) * n);
    std::vector<cdouble> plane(n);
    std::vector<double> decay(n);
    for (int j = 0; j < t; ++j) {
      const double te = sample.te_ms[j];
      for (std::size_t p = 0; p < n; ++p) {
        decay[p] = std::exp(-te / t2c[p]);
        plane[p] = cdouble(i0c[p] * decay[p], 0.0);
      }
      fft2_centered(ny, nx, plane.data());
      const cdouble* dj = sample.d.echo(j);
      double term = 0.0;
      for (int ky = 0; ky < ny; ++ky) {
        const bool on = sample.mask.sampled(j, ky);
        for (int kx = 0; kx < nx; ++kx) {
          const std::size_t i = static_cast<std::size_t>(ky) * nx + kx;
          if (on) {
            plane[i] -= dj[i];
            term += std::norm(plane[i]);
          } else {
            plane[i] = cdouble(0.0, 0.0);
          }
        }
      }
      loss.data += term * norm;
      ifft2_centered(ny, nx, plane.data());
      for (std::size_t p = 0; p < n; ++p) {
        const double ds = 2.0 * norm * plane[p].real();
        g0[p] += lambda_data * ds * decay[p] * di0c[p];
        g1[p] += lambda_data * ds * i0c[p] * decay[p] *
                 (te / (t2c[p] * t2c[p])) * dt2c[p] * kT2Scale;
      }
    }
    if (!std::isfinite(loss.data)) fail(ErrorCode::numeric_failure, "loss1 (data term) non-finite");
  }

  // Supervised term on the raw outputs, T2 in kT2Scale units.
  {
    const double wt2 = config.t2_loss_weight;
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d0 = o0[p] - sample.ref_i0[p];
      const double d1 = o1[p] - sample.ref_t2_ms[p] / kT2Scale;
      acc += d0 * d0 + wt2 * d1 * d1;
    }
    const double mean = acc / (2.0 * n);
    if (config.loss2_squared) {
      loss.cnn = mean;
      if (lambda_cnn > 0.0) {
        const double scale = lambda_cnn / static_cast<double>(n);
        for (std::size_t p = 0; p < n; ++p) {
          g0[p] += scale * (o0[p] - sample.ref_i0[p]);
          g1[p] += scale * wt2 * (o1[p] - sample.ref_t2_ms[p] / kT2Scale);
        }
      }
    } else {
      loss.cnn = std::sqrt(mean);
      if (lambda_cnn > 0.0 && loss.cnn > 0.0) {
        const double scale = lambda_cnn / (2.0 * n * loss.cnn);
        for (std::size_t p = 0; p < n; ++p) {
          g0[p] += scale * (o0[p] - sample.ref_i0[p]);
          g1[p] += scale * wt2 * (o1[p] - sample.ref_t2_ms[p] / kT2Scale);
        }
      }
    }
    if (!std::isfinite(loss.cnn)) fail(ErrorCode::numeric_failure, "loss2 (cnn term) non-finite");
  }

  loss.total = lambda_data * loss.data + lambda_cnn * loss.cnn;
  return loss;
}

TrainPhantom make_train_phantom(const ParamMaps& truth, const std::vector<double>& te_ms,
                                double noise_sd, std::uint64_t seed) {
  TrainPhantom ph;
  ph.truth = truth;
  ph.te_ms = te_ms;
  const EchoSeries noisy = synthesize_echoes(truth, te_ms, noise_sd, seed);
  double scale = 0.0;
  const EchoSeries normalized = normalize_dataset(noisy, &scale);

  Stack s = to_stack(normalized);
  parallel_for(s.t, [&](std::int64_t j) {
    fft2_centered(s.ny, s.nx, s.echo(static_cast<int>(j)));
  });
  ph.full_kspace = std::move(s);

  // Supervision targets must be reliable fits. Noise-only pixels that
  // slip past a low magnitude threshold fit to arbitrary long T2 and would
  // dominate the supervised loss, so reference fitting uses a stricter
  // threshold and a T2 ceiling far above every tissue class.
  FitOptions ref_options;
  ref_options.threshold_frac = 0.05;
  const double t2_ceiling_ms = 3.0 * kT2Scale;
  const ParamMaps ref = fit_pixelwise(normalized, ref_options);
  const std::size_t n = ref.plane();
  ph.ref_i0.resize(n);
  ph.ref_t2_ms.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (ref.t2_ms[p] >= t2_ceiling_ms) {
      ph.ref_i0[p] = 0.0;
      ph.ref_t2_ms[p] = kT2FloorMs;
      continue;
    }
    ph.ref_i0[p] = ref.i0[p];
    ph.ref_t2_ms[p] = ref.t2_ms[p];
  }
  return ph;
}

TrainSample make_sample(const TrainPhantom& phantom, const MaskSet& mask) {
  const Stack& full = phantom.full_kspace;
  if (mask.ny != full.ny || mask.t != full.t)
    fail(ErrorCode::shape_mismatch, "sample: mask does not match phantom grid");
  TrainSample sample;
  sample.mask = mask;
  sample.te_ms = phantom.te_ms;
  sample.ref_i0 = phantom.ref_i0;
  sample.ref_t2_ms = phantom.ref_t2_ms;
  sample.d = make_stack(full.t, full.ny, full.nx);
  for (int j = 0; j < full.t; ++j) {
    const cdouble* src = full.echo(j);
    cdouble* dst = sample.d.echo(j);
    for (int ky = 0; ky < full.ny; ++ky) {
      if (!mask.sampled(j, ky)) continue;
      const std::size_t off = static_cast<std::size_t>(ky) * full.nx;
      std::copy(src + off, src + off + full.nx, dst + off);
    }
  }
  Stack zf = sample.d;
  parallel_for(zf.t, [&](std::int64_t j) {
    ifft2_centered(zf.ny, zf.nx, zf.echo(static_cast<int>(j)));
  });
  sample.input = Tensor4(1, full.t, full.ny, full.nx);
  for (std::size_t i = 0; i < zf.v.size(); ++i) sample.input.v[i] = std::abs(zf.v[i]);
  return sample;
}

namespace {

double evaluate_validation(const Network& net, NetState& state,
                           const std::vector<TrainPhantom>& val_set,
                           const std::vector<MaskSet>& library,
                           const TrainConfig& config) {
  double total = 0.0;
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    const MaskSet& mask = library[i % library.size()];
    TrainSample sample = make_sample(val_set[i], mask);
    Tensor4 out = net.forward(state.theta, state.stats, sample.input, false, nullptr);
    const LossValue loss =
        loss_mantis(out, sample, config.lambda_data, config.lambda_cnn, config);
    total += loss.total;
  }
  return total / static_cast<double>(val_set.size());
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<TrainPhantom>& train_set,
                  const std::vector<TrainPhantom>& val_set,
                  const std::vector<MaskSet>& library, const NetSpec& netspec) {
  config.validate();
  if (train_set.empty() || val_set.empty())
    fail(ErrorCode::invalid_argument, "train: need at least one training and one validation phantom");
  if (library.empty()) fail(ErrorCode::invalid_argument, "train: empty mask library");

  const Network net(netspec);
  NetState state = net.init_params(config.seed);

  TrainResult result;
  result.spec = netspec;
  result.best = state;

  const int iters_per_epoch =
      static_cast<int>((train_set.size() + config.batch - 1) / config.batch);
  double best_val = std::numeric_limits<double>::infinity();

  const int ny = train_set.front().full_kspace.ny;
  const int nx = train_set.front().full_kspace.nx;
  const int t = train_set.front().full_kspace.t;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    bool aborted = false;
    for (int iter = 0; iter < iters_per_epoch; ++iter) {
      Rng draw = Rng::stream(config.seed,
                             {0x74726169ULL, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(iter)});
      const MaskSet& mask = library[draw.below(library.size())];
      std::vector<TrainSample> samples;
      samples.reserve(config.batch);
      Tensor4 batch_input(config.batch, t, ny, nx);
      for (int b = 0; b < config.batch; ++b) {
        samples.push_back(
            make_sample(train_set[draw.below(train_set.size())], mask));
        std::copy(samples[b].input.v.begin(), samples[b].input.v.end(),
                  batch_input.at(b, 0));
      }

      Workspace ws;
      Tensor4 out = net.forward(state.theta, state.stats, batch_input, true, &ws);

      Tensor4 dout(config.batch, 2, ny, nx);
      double batch_loss = 0.0;
      const double inv_batch = 1.0 / config.batch;
      for (int b = 0; b < config.batch; ++b) {
        Tensor4 one(1, 2, ny, nx);
        std::copy(out.at(b, 0), out.at(b, 0) + 2 * out.plane(), one.v.begin());
        const LossValue loss =
            loss_mantis(one, samples[b], config.lambda_data, config.lambda_cnn, config);
        batch_loss += loss.total * inv_batch;
        for (std::size_t i = 0; i < loss.output_grad.v.size(); ++i)
          dout.v[static_cast<std::size_t>(b) * 2 * out.plane() + i] =
              loss.output_grad.v[i] * inv_batch;
      }
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        aborted = true;
        break;
      }
      epoch_loss += batch_loss;

      std::fill(state.grad.begin(), state.grad.end(), 0.0);
      net.backward(state.theta, ws, dout, state.grad);
      if (config.lambda_data > 0.0 || config.lambda_cnn > 0.0)
        adam_step(state.theta, state.grad, state.adam_m, state.adam_v, state.adam_t,
                  config.lr);
    }
    if (aborted) break;
    result.train_loss.push_back(epoch_loss / iters_per_epoch);

    const double val = evaluate_validation(net, state, val_set, library, config);
    result.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      result.best = state;
      result.best_epoch = epoch;
    }
  }
  return result;
}

ParamMaps infer(const Network& net, const NetState& state, const EchoSeries& zero_filled,
                const ParamMaps* truth_labels) {
  zero_filled.validate();
  const int ny = zero_filled.ny;
  const int nx = zero_filled.nx;
  const std::size_t n = zero_filled.plane();
  Tensor4 input(1, zero_filled.echoes(), ny, nx);
  for (std::size_t i = 0; i < zero_filled.data.size(); ++i)
    input.v[i] = std::abs(cdouble(zero_filled.data[i]));

  NetState scratch = state;  // forward never writes in infer mode
  const Tensor4 out = net.forward(scratch.theta, scratch.stats, input, false, nullptr);

  ParamMaps maps;
  maps.ny = ny;
  maps.nx = nx;
  maps.i0.resize(n);
  maps.t2_ms.resize(n);
  maps.roi_labels.assign(n, 0);
  const double* o0 = out.at(0, 0);
  const double* o1 = out.at(0, 1);
  float i0_max = 0.0f;
  for (std::size_t p = 0; p < n; ++p) {
    maps.i0[p] = static_cast<float>(std::max(o0[p], 0.0));
    maps.t2_ms[p] = static_cast<float>(std::clamp(o1[p] * kT2Scale, kT2MinMs, kT2MaxMs));
    i0_max = std::max(i0_max, maps.i0[p]);
  }
  if (truth_labels) {
    if (truth_labels->ny != ny || truth_labels->nx != nx)
      fail(ErrorCode::shape_mismatch, "infer: label map shape mismatch");
    for (std::size_t p = 0; p < n; ++p)
      maps.roi_labels[p] = maps.i0[p] > 0.0f ? truth_labels->roi_labels[p] : 0;
  } else {
    const float threshold = 0.02f * i0_max;
    for (std::size_t p = 0; p < n; ++p)
      maps.roi_labels[p] = maps.i0[p] > threshold ? 1 : 0;
  }
  maps.validate();
  return maps;
}

}  // namespace qmt
