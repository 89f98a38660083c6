#include <cmath>

#include "doctest.h"

#include "qmt/lowrank.hpp"
#include "qmt/phantom.hpp"
#include "qmt/pipeline.hpp"
#include "qmt/rng.hpp"
#include "qmt/sampling.hpp"
#include "qmt/sigmodel.hpp"

using namespace qmt;

namespace {

Eigen::MatrixXcd random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXcd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = cdouble(rng.normal(), rng.normal());
  return m;
}

KSpaceSet phantom_kspace(int ny, double r, std::uint64_t seed, double noise_sd) {
  PhantomSpec spec;
  spec.ny = ny;
  spec.nx = ny;
  spec.n_objects = 6;
  spec.tissue_table = default_tissue_table();
  spec.seed = seed;
  const ParamMaps maps = make_phantom(spec);
  EchoSeries series = synthesize_echoes(maps, default_te_ms(), noise_sd, seed + 1);
  series = normalize_dataset(series, nullptr);
  const MaskSet mask = make_maskset(ny, series.echoes(), r, 0.05, seed + 2);
  return undersample(series, mask).kspace;
}

}  // namespace

TEST_CASE("svt closed form on a rank-1 matrix") {
  // A = 5 u v^H with unit u, v: svt(A, 2) = 3 u v^H.
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(6);
  u(1) = cdouble(0.6, 0.0);
  u(4) = cdouble(0.0, 0.8);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(3);
  v(0) = cdouble(1.0 / std::sqrt(2.0), 0.0);
  v(2) = cdouble(0.0, -1.0 / std::sqrt(2.0));
  const Eigen::MatrixXcd a = 5.0 * u * v.adjoint();
  const Eigen::MatrixXcd out = svt(a, 2.0);
  const Eigen::MatrixXcd expected = 3.0 * u * v.adjoint();
  CHECK((out - expected).norm() < 1e-10);
}

TEST_CASE("svt with lambda 0 returns the input, large lambda annihilates") {
  const Eigen::MatrixXcd a = random_matrix(12, 4, 3);
  CHECK((svt(a, 0.0) - a).norm() < 1e-10);

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
  const double sigma_max = svd.singularValues()(0);
  CHECK(svt(a, sigma_max * 1.000001).norm() < 1e-10);
}

TEST_CASE("svt singular values transform as max(sigma - lambda, 0)") {
  const Eigen::MatrixXcd a = random_matrix(64, 8, 17);
  Eigen::JacobiSVD<Eigen::MatrixXcd> before(a);
  const double lambda = before.singularValues()(3);  // zeroes the tail
  Eigen::JacobiSVD<Eigen::MatrixXcd> after(svt(a, lambda));
  for (int i = 0; i < 8; ++i) {
    const double expected = std::max(before.singularValues()(i) - lambda, 0.0);
    CHECK(after.singularValues()(i) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("svt is non-expansive") {
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXcd a = random_matrix(16, 5, 1000 + trial);
    const Eigen::MatrixXcd b = random_matrix(16, 5, 5000 + trial);
    const double lambda = 0.5 + 0.1 * trial;
    const double dist_out = (svt(a, lambda) - svt(b, lambda)).norm();
    CHECK(dist_out <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("casorati reshape is lossless and zero copy") {
  Stack s = make_stack(3, 4, 5);
  Rng rng(2);
  for (auto& z : s.v) z = cdouble(rng.normal(), rng.normal());
  auto view = casorati(s);
  CHECK(view.rows() == 20);
  CHECK(view.cols() == 3);
  for (int j = 0; j < 3; ++j)
    for (int p = 0; p < 20; ++p)
      CHECK(view(p, j) == s.v[static_cast<std::size_t>(j) * 20 + p]);
  view(7, 1) = cdouble(42.0, -1.0);
  CHECK(s.v[20 + 7] == cdouble(42.0, -1.0));
}

TEST_CASE("llr block partition covers every pixel with unit total weight") {
  const LlrBlocks blocks = LlrBlocks::make(64, 64, 8, 4);
  std::vector<double> cover(64 * 64, 0.0);
  for (int sy : blocks.starts_y)
    for (int sx : blocks.starts_x)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) cover[static_cast<std::size_t>(sy + y) * 64 + sx + x] += 1.0;
  for (double c : cover) CHECK(c >= 1.0);

  // Uniform averaging: weights 1/cover sum to 1 at every pixel by
  // construction; spot-check the prox on constant data is the identity
  // under lambda 0 semantics (block svt with lambda 0 reconstructs).
  Stack s = make_stack(2, 64, 64);
  Rng rng(5);
  for (auto& z : s.v) z = cdouble(rng.normal(), rng.normal());
  const Stack out = detail::llr_prox(s, blocks, 0.0, true);
  for (std::size_t i = 0; i < s.v.size(); ++i) CHECK(std::abs(out.v[i] - s.v[i]) < 1e-9);
}

TEST_CASE("llr prox parallel matches the serial reference bitwise") {
  const LlrBlocks blocks = LlrBlocks::make(32, 32, 8, 4);
  Stack s = make_stack(4, 32, 32);
  Rng rng(6);
  for (auto& z : s.v) z = cdouble(rng.normal(), rng.normal());
  const Stack a = detail::llr_prox(s, blocks, 0.3, true);
  const Stack b = detail::llr_prox(s, blocks, 0.3, false);
  CHECK(a.v == b.v);
}

TEST_CASE("block larger than the image is rejected") {
  CHECK_THROWS_AS(LlrBlocks::make(4, 4, 8, 4), QmtError);
}

TEST_CASE("glr with full sampling and lambda 0 returns the data") {
  PhantomSpec spec;
  spec.ny = 32;
  spec.nx = 32;
  spec.n_objects = 5;
  spec.tissue_table = default_tissue_table();
  spec.seed = 12;
  EchoSeries series = synthesize_echoes(make_phantom(spec), default_te_ms(), 0.0, 0);
  series = normalize_dataset(series, nullptr);
  const MaskSet full = make_maskset(32, 8, 1.0, 0.0, 0);
  const KSpaceSet kspace = undersample(series, full).kspace;
  IstaSchedule sched;
  sched.lambda_glr_rel = 0.0;
  const ReconResult result = recon_glr(kspace, sched);
  for (std::size_t i = 0; i < series.data.size(); ++i) {
    CHECK(result.series.data[i].real() ==
          doctest::Approx(series.data[i].real()).epsilon(1e-5));
    CHECK(result.series.data[i].imag() ==
          doctest::Approx(series.data[i].imag()).epsilon(1e-5));
  }
}

TEST_CASE("glr objective is non-increasing over the full schedule") {
  const KSpaceSet kspace = phantom_kspace(32, 5.0, 77, 0.01);
  IstaSchedule sched;
  const ReconResult result = recon_glr(kspace, sched);
  REQUIRE(result.objective.size() == 51);
  for (std::size_t i = 1; i < result.objective.size(); ++i)
    CHECK(result.objective[i] <=
          result.objective[i - 1] * (1.0 + 1e-8) + 1e-12);
}

TEST_CASE("pure data-consistency iterations decrease the residual monotonically") {
  const KSpaceSet kspace = phantom_kspace(32, 5.0, 21, 0.01);
  IstaSchedule sched;
  sched.lambda_glr_rel = 0.0;
  const ReconResult result = recon_glr(kspace, sched);
  for (std::size_t i = 1; i < result.objective.size(); ++i)
    CHECK(result.objective[i] <= result.objective[i - 1] * (1.0 + 1e-10) + 1e-15);
}

TEST_CASE("llr with lambda 0 equals plain gradient descent") {
  const KSpaceSet kspace = phantom_kspace(16, 2.0, 5, 0.0);
  IstaSchedule sched;
  sched.lambda_glr_rel = 0.0;
  sched.llr_init_iterations = 3;
  sched.llr_iterations = 4;
  sched.block = 8;
  sched.stride = 4;
  const ReconResult llr = recon_llr(kspace, sched);

  IstaSchedule glr_sched;
  glr_sched.lambda_glr_rel = 0.0;
  glr_sched.glr_iterations = 7;
  const ReconResult glr = recon_glr(kspace, glr_sched);
  CHECK(llr.series.data == glr.series.data);
}

TEST_CASE("block-wise low-rank data favors the local prox") {
  // Rank-1 in each 8x8 tile but full rank globally: per-tile random
  // spatial pattern scaled by a per-tile random decay across echoes.
  const int ny = 32, t = 8;
  const std::vector<double> te = default_te_ms();
  Stack truth = make_stack(t, ny, ny);
  Rng rng(40);
  for (int ty = 0; ty < ny; ty += 8)
    for (int tx = 0; tx < ny; tx += 8) {
      std::vector<double> pattern(64);
      for (double& v : pattern) v = 0.3 + rng.uniform();
      const double tile_t2 = rng.uniform(12.0, 90.0);
      for (int j = 0; j < t; ++j) {
        const double decay = std::exp(-te[j] / tile_t2);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            truth.echo(j)[static_cast<std::size_t>(ty + y) * ny + tx + x] =
                cdouble(pattern[y * 8 + x] * decay, 0.0);
      }
    }
  EchoSeries series = series_from_stack(truth, te);
  const MaskSet mask = make_maskset(ny, t, 3.0, 0.1, 13);
  const KSpaceSet kspace = undersample(series, mask).kspace;

  IstaSchedule sched;
  sched.glr_iterations = 30;
  sched.llr_init_iterations = 5;
  sched.llr_iterations = 25;
  sched.lambda_glr_rel = 0.02;

  const EchoSeries glr = recon_glr(kspace, sched).series;
  const EchoSeries llr = recon_llr(kspace, sched).series;
  double glr_err = 0.0, llr_err = 0.0;
  for (std::size_t i = 0; i < series.data.size(); ++i) {
    glr_err += std::norm(cdouble(glr.data[i]) - cdouble(series.data[i]));
    llr_err += std::norm(cdouble(llr.data[i]) - cdouble(series.data[i]));
  }
  CHECK(llr_err < glr_err);
}

TEST_CASE("overlapping blocks avoid seams that non-overlapping blocks leave") {
  const KSpaceSet kspace = phantom_kspace(32, 4.0, 31, 0.0);
  IstaSchedule overlapping;
  overlapping.stride = 4;
  IstaSchedule aligned;
  aligned.stride = 8;  // non-overlapping tiles
  const EchoSeries a = recon_llr(kspace, overlapping).series;
  const EchoSeries b = recon_llr(kspace, aligned).series;

  // Largest jump across tile boundaries (block-grid seams at multiples of 8).
  auto max_seam = [&](const EchoSeries& s) {
    double worst = 0.0;
    for (int j = 0; j < s.echoes(); ++j)
      for (int y = 8; y < 32; y += 8)
        for (int x = 0; x < 32; ++x) {
          const cdouble above = cdouble(s.data[(static_cast<std::size_t>(j) * 32 + y - 1) * 32 + x]);
          const cdouble below = cdouble(s.data[(static_cast<std::size_t>(j) * 32 + y) * 32 + x]);
          worst = std::max(worst, std::abs(above - below));
        }
    return worst;
  };
  CHECK(max_seam(a) <= max_seam(b));
}
