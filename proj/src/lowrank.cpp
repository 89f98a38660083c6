#include "qmt/lowrank.hpp"

#include <algorithm>
#include <cmath>

#include "qmt/parallel.hpp"

namespace qmt {

Eigen::Map<const Eigen::MatrixXcd> casorati(const Stack& s) {
  return {s.v.data(), static_cast<Eigen::Index>(s.plane()), s.t};
}

Eigen::Map<Eigen::MatrixXcd> casorati(Stack& s) {
  return {s.v.data(), static_cast<Eigen::Index>(s.plane()), s.t};
}

Eigen::MatrixXcd svt(const Eigen::MatrixXcd& m, double lambda,
                     Eigen::VectorXd* thresholded_sv) {
  if (!m.allFinite()) fail(ErrorCode::numeric_failure, "svt: non-finite matrix");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sv = (svd.singularValues().array() - lambda).max(0.0).matrix();
  if (thresholded_sv) *thresholded_sv = sv;
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().adjoint();
}

LlrBlocks LlrBlocks::make(int ny, int nx, int block, int stride) {
  if (block <= 0 || stride <= 0) fail(ErrorCode::invalid_argument, "llr: block/stride must be positive");
  if (block > ny || block > nx) fail(ErrorCode::invalid_argument, "llr: block larger than image");
  LlrBlocks b;
  b.block = block;
  b.stride = stride;
  auto fill = [&](int extent, std::vector<int>& starts) {
    for (int s = 0; s + block <= extent; s += stride) starts.push_back(s);
    if (starts.back() + block < extent) starts.push_back(extent - block);
  };
  fill(ny, b.starts_y);
  fill(nx, b.starts_x);
  return b;
}

void IstaSchedule::validate() const {
  if (glr_iterations < 1 || llr_init_iterations < 1 || llr_iterations < 1)
    fail(ErrorCode::invalid_argument, "ista: iteration counts must be >= 1");
  if (lambda_glr_rel < 0.0 || lambda_reduction < 0.0)
    fail(ErrorCode::invalid_argument, "ista: lambda must be >= 0");
}

namespace {

double data_term(const Stack& residual) {
  double acc = 0.0;
  for (const cdouble& v : residual.v) acc += std::norm(v);
  return 0.5 * acc;
}

// x - E^H (E x - d); also reports 0.5*||Ex-d||^2 of the input iterate.
Stack gradient_step(const EncodingOp& op, const Stack& x, const Stack& d, double& data) {
  Stack r;
  op.forward(x, r);
  for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] -= d.v[i];
  data = data_term(r);
  Stack g;
  op.adjoint(r, g);
  Stack out = x;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= g.v[i];
  return out;
}

void check_finite(const Stack& x) {
  for (const cdouble& v : x.v)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      fail(ErrorCode::numeric_failure, "diverged");
}

}  // namespace

namespace detail {

Stack llr_prox(const Stack& x, const LlrBlocks& blocks, double lambda, bool parallel) {
  const int b = blocks.block;
  const std::size_t block_elems = static_cast<std::size_t>(b) * b * x.t;
  const std::size_t n_blocks = blocks.starts_y.size() * blocks.starts_x.size();

  std::vector<cdouble> shrunk(n_blocks * block_elems);
  auto process_block = [&](std::int64_t bi) {
    const int sy = blocks.starts_y[static_cast<std::size_t>(bi) / blocks.starts_x.size()];
    const int sx = blocks.starts_x[static_cast<std::size_t>(bi) % blocks.starts_x.size()];
    Eigen::MatrixXcd m(b * b, x.t);
    for (int j = 0; j < x.t; ++j) {
      const cdouble* plane = x.echo(j);
      for (int yy = 0; yy < b; ++yy)
        for (int xx = 0; xx < b; ++xx)
          m(yy * b + xx, j) = plane[static_cast<std::size_t>(sy + yy) * x.nx + (sx + xx)];
    }
    const Eigen::MatrixXcd out = svt(m, lambda);
    cdouble* dst = shrunk.data() + static_cast<std::size_t>(bi) * block_elems;
    for (int j = 0; j < x.t; ++j)
      for (int yy = 0; yy < b; ++yy)
        for (int xx = 0; xx < b; ++xx)
          dst[(static_cast<std::size_t>(j) * b + yy) * b + xx] = out(yy * b + xx, j);
  };
  if (parallel) {
    parallel_for(static_cast<std::int64_t>(n_blocks), process_block);
  } else {
    for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(n_blocks); ++bi) process_block(bi);
  }

  // Serial synthesis in fixed block order keeps results independent of the
  // thread count.
  Stack acc = make_stack(x.t, x.ny, x.nx);
  std::vector<double> cover(x.plane(), 0.0);
  std::size_t bi = 0;
  for (int sy : blocks.starts_y)
    for (int sx : blocks.starts_x) {
      const cdouble* src = shrunk.data() + bi++ * block_elems;
      for (int j = 0; j < x.t; ++j) {
        cdouble* plane = acc.echo(j);
        for (int yy = 0; yy < b; ++yy)
          for (int xx = 0; xx < b; ++xx)
            plane[static_cast<std::size_t>(sy + yy) * x.nx + (sx + xx)] +=
                src[(static_cast<std::size_t>(j) * b + yy) * b + xx];
      }
      for (int yy = 0; yy < b; ++yy)
        for (int xx = 0; xx < b; ++xx)
          cover[static_cast<std::size_t>(sy + yy) * x.nx + (sx + xx)] += 1.0;
    }
  for (int j = 0; j < x.t; ++j) {
    cdouble* plane = acc.echo(j);
    for (std::size_t p = 0; p < x.plane(); ++p) plane[p] /= cover[p];
  }
  return acc;
}

}  // namespace detail

ReconResult recon_glr(const KSpaceSet& kspace, const IstaSchedule& sched) {
  sched.validate();
  kspace.validate();
  const EncodingOp op(kspace.ny, kspace.nx, kspace.mask);
  const Stack d = to_stack(kspace);
  Stack x;
  op.adjoint(d, x);

  // lambda = 0 reduces to plain least-squares ISTA; skip the SVDs then.
  const bool use_prox = sched.lambda_glr_rel > 0.0;
  double lambda = 0.0;
  double nuclear = 0.0;
  if (use_prox) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd0(casorati(x));
    lambda = sched.lambda_glr_rel * svd0.singularValues()(0);
    nuclear = svd0.singularValues().sum();
  }

  ReconResult result;
  result.objective.reserve(sched.glr_iterations + 1);
  for (int it = 0; it <= sched.glr_iterations; ++it) {
    double data = 0.0;
    Stack stepped = gradient_step(op, x, d, data);
    result.objective.push_back(data + lambda * nuclear);
    if (it == sched.glr_iterations) break;
    if (use_prox) {
      Eigen::VectorXd sv;
      Eigen::Map<Eigen::MatrixXcd> cas = casorati(stepped);
      cas = svt(cas, lambda, &sv);
      nuclear = sv.sum();
    }
    x = std::move(stepped);
    check_finite(x);
  }
  result.series = series_from_stack(x, kspace.te_ms);
  return result;
}

ReconResult recon_llr(const KSpaceSet& kspace, const IstaSchedule& sched) {
  sched.validate();
  kspace.validate();
  const LlrBlocks blocks = LlrBlocks::make(kspace.ny, kspace.nx, sched.block, sched.stride);
  const EncodingOp op(kspace.ny, kspace.nx, kspace.mask);
  const Stack d = to_stack(kspace);
  Stack x;
  op.adjoint(d, x);

  double lambda_glr = 0.0;
  if (sched.lambda_glr_rel > 0.0) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd0(casorati(x));
    lambda_glr = sched.lambda_glr_rel * svd0.singularValues()(0);
  }
  const double lambda_llr = sched.lambda_reduction * lambda_glr;

  ReconResult result;
  result.objective.reserve(sched.llr_init_iterations + sched.llr_iterations);
  for (int it = 0; it < sched.llr_init_iterations; ++it) {
    double data = 0.0;
    Stack stepped = gradient_step(op, x, d, data);
    result.objective.push_back(data);
    if (lambda_glr > 0.0) {
      Eigen::Map<Eigen::MatrixXcd> cas = casorati(stepped);
      cas = svt(cas, lambda_glr);
    }
    x = std::move(stepped);
    check_finite(x);
  }
  for (int it = 0; it < sched.llr_iterations; ++it) {
    double data = 0.0;
    Stack stepped = gradient_step(op, x, d, data);
    result.objective.push_back(data);
    x = lambda_llr > 0.0 ? detail::llr_prox(stepped, blocks, lambda_llr, true)
                         : std::move(stepped);
    check_finite(x);
  }
  result.series = series_from_stack(x, kspace.te_ms);
  return result;
}

}  // namespace qmt
