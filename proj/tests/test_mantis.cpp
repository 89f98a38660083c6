#include <chrono>
#include <cmath>

#include "doctest.h"

#include "qmt/mantis.hpp"
#include "qmt/phantom.hpp"
#include "qmt/pipeline.hpp"
#include "qmt/rng.hpp"
#include "qmt/sampling.hpp"
#include "qmt/sigmodel.hpp"

using namespace qmt;

namespace {

ParamMaps toy_truth(int ny, std::uint64_t seed) {
  PhantomSpec spec;
  spec.ny = ny;
  spec.nx = ny;
  spec.n_objects = 4;
  spec.tissue_table = default_tissue_table();
  spec.seed = seed;
  return make_phantom(spec);
}

TrainSample toy_sample(int ny, double r, std::uint64_t seed, double noise_sd = 0.0) {
  const std::vector<double> te = default_te_ms();
  const TrainPhantom ph = make_train_phantom(toy_truth(ny, seed), te, noise_sd, seed + 1);
  const MaskSet mask = make_maskset(ny, static_cast<int>(te.size()), r, 0.1, seed + 2);
  return make_sample(ph, mask);
}

Tensor4 reference_output(const TrainSample& sample, int ny) {
  Tensor4 out(1, 2, ny, ny);
  for (std::size_t p = 0; p < sample.ref_i0.size(); ++p) {
    out.v[p] = sample.ref_i0[p];
    out.v[sample.ref_i0.size() + p] = sample.ref_t2_ms[p] / kT2Scale;
  }
  return out;
}

std::vector<TrainPhantom> toy_phantoms(int count, int ny, std::uint64_t seed0) {
  std::vector<TrainPhantom> out;
  for (int i = 0; i < count; ++i)
    out.push_back(make_train_phantom(toy_truth(ny, seed0 + i), default_te_ms(), 0.01,
                                     seed0 + 100 + i));
  return out;
}

}  // namespace

TEST_CASE("both loss terms vanish on reference maps with full sampling") {
  const int ny = 16;
  TrainSample sample = toy_sample(ny, 1.0, 5);
  const Tensor4 out = reference_output(sample, ny);
  TrainConfig config;
  const LossValue loss = loss_mantis(out, sample, 0.1, 1.0, config);
  CHECK(std::abs(loss.cnn) < 1e-10);
  CHECK(std::abs(loss.data) < 1e-10);
}

TEST_CASE("lambda_data 0 reduces the objective to the supervised term") {
  const int ny = 16;
  TrainSample sample = toy_sample(ny, 5.0, 6);
  Tensor4 out = reference_output(sample, ny);
  Rng rng(3);
  for (double& v : out.v) v += 0.05 * rng.normal();
  TrainConfig config;
  const LossValue loss = loss_mantis(out, sample, 0.0, 0.7, config);
  CHECK(loss.total == 0.7 * loss.cnn);
  CHECK(loss.data == 0.0);
}

TEST_CASE("loss1 equals an independent masked-residual evaluation") {
  const int ny = 16;
  TrainSample sample = toy_sample(ny, 4.0, 9);
  Tensor4 out = reference_output(sample, ny);
  Rng rng(4);
  for (double& v : out.v) v += 0.1 * rng.normal();
  TrainConfig config;
  const LossValue loss = loss_mantis(out, sample, 1.0, 0.0, config);

  // Oracle: clamp maps, run the signal model, apply the encoding operator,
  // sum squared residuals on sampled lines only. Unsampled synthesized
  // values never enter, which is the masking invariant.
  const std::size_t n = static_cast<std::size_t>(ny) * ny;
  const int t = sample.d.t;
  Stack image = make_stack(t, ny, ny);
  for (int j = 0; j < t; ++j)
    for (std::size_t p = 0; p < n; ++p) {
      const double i0 = smooth_nonneg(out.v[p]);
      const double t2 = smooth_t2_ms(out.v[n + p] * kT2Scale);
      image.echo(j)[p] = cdouble(i0 * std::exp(-sample.te_ms[j] / t2), 0.0);
    }
  const EncodingOp op(ny, ny, sample.mask);
  Stack k;
  op.forward(image, k);
  double expected = 0.0;
  for (std::size_t i = 0; i < k.v.size(); ++i) expected += std::norm(k.v[i] - sample.d.v[i]);
  expected /= static_cast<double>(t) * n;
  CHECK(loss.data == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("loss gradient w.r.t. output maps matches finite differences") {
  const int ny = 8;
  TrainSample sample = toy_sample(ny, 2.0, 11);
  Tensor4 out = reference_output(sample, ny);
  Rng rng(5);
  for (double& v : out.v) v += 0.1 * rng.normal();
  TrainConfig config;
  const LossValue loss = loss_mantis(out, sample, 0.1, 1.0, config);

  int failed = 0;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(out.v[i]));
    Tensor4 plus = out, minus = out;
    plus.v[i] += h;
    minus.v[i] -= h;
    const double lp = loss_mantis(plus, sample, 0.1, 1.0, config).total;
    const double lm = loss_mantis(minus, sample, 0.1, 1.0, config).total;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(loss.output_grad.v[i]), 1e-6});
    if (std::abs(fd - loss.output_grad.v[i]) / denom >= 1e-4) ++failed;
  }
  CHECK(failed == 0);
}

TEST_CASE("unsquared supervised form is the root of the squared mean") {
  const int ny = 8;
  TrainSample sample = toy_sample(ny, 2.0, 13);
  Tensor4 out = reference_output(sample, ny);
  Rng rng(6);
  for (double& v : out.v) v += 0.2 * rng.normal();
  TrainConfig squared;
  TrainConfig unsquared;
  unsquared.loss2_squared = false;
  const LossValue a = loss_mantis(out, sample, 0.0, 1.0, squared);
  const LossValue b = loss_mantis(out, sample, 0.0, 1.0, unsquared);
  CHECK(b.cnn == doctest::Approx(std::sqrt(a.cnn)).epsilon(1e-12));
}

TEST_CASE("full objective gradient w.r.t. network parameters matches finite differences") {
  const int ny = 8;
  TrainSample sample = toy_sample(ny, 2.0, 17);
  NetSpec spec;
  spec.in_channels = sample.d.t;
  spec.out_channels = 2;
  spec.levels = 2;
  spec.base_filters = 3;
  const Network net(spec);
  NetState state = net.init_params(23);
  TrainConfig config;

  auto objective = [&](const std::vector<double>& theta) {
    std::vector<double> stats = state.stats;
    Workspace ws;
    const Tensor4 out = net.forward(theta, stats, sample.input, true, &ws);
    return loss_mantis(out, sample, config.lambda_data, config.lambda_cnn, config).total;
  };

  Workspace ws;
  const Tensor4 out = net.forward(state.theta, state.stats, sample.input, true, &ws);
  const LossValue loss = loss_mantis(out, sample, config.lambda_data, config.lambda_cnn, config);
  std::vector<double> grad(net.param_count(), 0.0);
  net.backward(state.theta, ws, loss.output_grad, grad);

  int failed = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double h = 3e-5 * std::max(1.0, std::abs(state.theta[i]));
    std::vector<double> theta = state.theta;
    theta[i] += h;
    const double lp = objective(theta);
    theta[i] -= 2.0 * h;
    const double lm = objective(theta);
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
    const double rel = std::abs(fd - grad[i]) / denom;
    worst = std::max(worst, rel);
    if (rel >= 1e-4) ++failed;
  }
  CHECK(failed == 0);
  CHECK(worst < 1e-4);
}

TEST_CASE("training halves the loss on a small seeded run and is deterministic") {
  const int ny = 32;
  const auto train_set = toy_phantoms(4, ny, 500);
  const auto val_set = toy_phantoms(1, ny, 600);
  const auto library = make_mask_library(8, ny, 8, 5.0, 0.05, 41);

  NetSpec spec;
  spec.in_channels = 8;
  spec.levels = 2;
  spec.base_filters = 6;
  TrainConfig config;
  config.epochs = 30;
  config.batch = 2;
  config.seed = 3;

  const TrainResult run = train(config, train_set, val_set, library, spec);
  REQUIRE_FALSE(run.diverged);
  REQUIRE(run.train_loss.size() == 30);
  CHECK(run.train_loss.back() < 0.5 * run.train_loss.front());

  // Validation-selected snapshot is the minimum of the recorded curve.
  REQUIRE(run.best_epoch >= 0);
  for (double v : run.val_loss) CHECK(run.val_loss[run.best_epoch] <= v + 1e-15);

  const TrainResult rerun = train(config, train_set, val_set, library, spec);
  CHECK(run.train_loss == rerun.train_loss);
  CHECK(run.val_loss == rerun.val_loss);
  CHECK(run.best.theta == rerun.best.theta);
}

TEST_CASE("zero objective leaves parameters unchanged for any number of steps") {
  const int ny = 16;
  const auto train_set = toy_phantoms(2, ny, 700);
  const auto val_set = toy_phantoms(1, ny, 800);
  const auto library = make_mask_library(4, ny, 8, 4.0, 0.05, 43);

  NetSpec spec;
  spec.in_channels = 8;
  spec.levels = 2;
  spec.base_filters = 3;
  TrainConfig config;
  config.epochs = 3;
  config.batch = 1;
  config.lambda_data = 0.0;
  config.lambda_cnn = 0.0;

  const Network net(spec);
  const NetState fresh = net.init_params(config.seed);
  const TrainResult run = train(config, train_set, val_set, library, spec);
  CHECK(run.best.theta == fresh.theta);
}

TEST_CASE("inference honors the shape contract, clamps, and a laptop time budget") {
  const int ny = 64;
  const std::vector<double> te = default_te_ms();
  const TrainPhantom ph = make_train_phantom(toy_truth(ny, 900), te, 0.01, 901);
  const MaskSet mask = make_maskset(ny, 8, 5.0, 0.05, 902);
  TrainSample sample = make_sample(ph, mask);
  EchoSeries zf;
  zf.ny = ny;
  zf.nx = ny;
  zf.te_ms = te;
  zf.data.resize(sample.input.v.size());
  for (std::size_t i = 0; i < zf.data.size(); ++i)
    zf.data[i] = cfloat(static_cast<float>(sample.input.v[i]), 0.0f);

  NetSpec spec;
  spec.in_channels = 8;
  spec.levels = 3;
  spec.base_filters = 16;
  const Network net(spec);
  const NetState state = net.init_params(1);

  const auto t0 = std::chrono::steady_clock::now();
  const ParamMaps maps = infer(net, state, zf, &ph.truth);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 1.0);

  CHECK(maps.ny == ny);
  CHECK(maps.nx == ny);
  maps.validate();  // clamps guarantee valid ranges

  const ParamMaps again = infer(net, state, zf, &ph.truth);
  CHECK(maps.i0 == again.i0);
  CHECK(maps.t2_ms == again.t2_ms);
}
