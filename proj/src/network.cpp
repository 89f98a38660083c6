#include "qmt/network.hpp"

#include <cmath>

#include "json.hpp"

#include "qmt/parallel.hpp"
#include "qmt/rng.hpp"

namespace qmt {

void NetSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) fail(ErrorCode::invalid_argument, "netspec: channels must be >= 1");
  if (levels < 1) fail(ErrorCode::invalid_argument, "netspec: levels must be >= 1");
  if (base_filters < 1) fail(ErrorCode::invalid_argument, "netspec: base_filters must be >= 1");
  if (bn_momentum < 0.0 || bn_momentum >= 1.0) fail(ErrorCode::invalid_argument, "netspec: momentum outside [0,1)");
  if (!(bn_epsilon > 0.0)) fail(ErrorCode::invalid_argument, "netspec: epsilon must be positive");
}

std::string NetSpec::to_json() const {
  nlohmann::json j;
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  j["levels"] = levels;
  j["base_filters"] = base_filters;
  j["bn_momentum"] = bn_momentum;
  j["bn_epsilon"] = bn_epsilon;
  return j.dump();
}

NetSpec NetSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::bad_header, "netspec: invalid JSON");
  NetSpec spec;
  spec.in_channels = j.at("in_channels").get<int>();
  spec.out_channels = j.at("out_channels").get<int>();
  spec.levels = j.at("levels").get<int>();
  spec.base_filters = j.at("base_filters").get<int>();
  spec.bn_momentum = j.at("bn_momentum").get<double>();
  spec.bn_epsilon = j.at("bn_epsilon").get<double>();
  spec.validate();
  return spec;
}

struct Network::LayerDef {
  enum class Kind { conv, tconv } kind = Kind::conv;
  int cin = 0, cout = 0, kernel = 3, stride = 1;
  bool bn_relu = true;
  std::size_t w_off = 0, b_off = 0, gamma_off = 0, beta_off = 0;
  std::size_t stat_off = 0;  // running mean; running var at stat_off + cout

  std::size_t weights() const {
    return static_cast<std::size_t>(cout) * cin * kernel * kernel;
  }
};

namespace detail {

void conv2d_forward(const Tensor4& in, const double* w, const double* b, int cout,
                    int kernel, int stride, Tensor4& out, bool parallel) {
  const int pad = (kernel - 1) / 2;
  const int ho = (in.h + 2 * pad - kernel) / stride + 1;
  const int wo = (in.w + 2 * pad - kernel) / stride + 1;
  out = Tensor4(in.n, cout, ho, wo);
  auto work = [&](std::int64_t idx) {
    const int n = static_cast<int>(idx) / cout;
    const int co = static_cast<int>(idx) % cout;
    double* out_plane = out.at(n, co);
    for (std::size_t i = 0; i < out.plane(); ++i) out_plane[i] = b[co];
    for (int ci = 0; ci < in.c; ++ci) {
      const double* in_plane = in.at(n, ci);
      const double* wk = w + ((static_cast<std::size_t>(co) * in.c + ci) * kernel) * kernel;
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const double wv = wk[ky * kernel + kx];
          if (wv == 0.0) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in.h) continue;
            const double* in_row = in_plane + static_cast<std::size_t>(iy) * in.w;
            double* out_row = out_plane + static_cast<std::size_t>(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in.w) continue;
              out_row[ox] += wv * in_row[ix];
            }
          }
        }
    }
  };
  const std::int64_t jobs = static_cast<std::int64_t>(in.n) * cout;
  if (parallel) {
    parallel_for(jobs, work);
  } else {
    for (std::int64_t i = 0; i < jobs; ++i) work(i);
  }
}

void tconv2x2_forward(const Tensor4& in, const double* w, const double* b, int cout,
                      Tensor4& out) {
  out = Tensor4(in.n, cout, in.h * 2, in.w * 2);
  parallel_for(static_cast<std::int64_t>(in.n) * cout, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx) / cout;
    const int co = static_cast<int>(idx) % cout;
    double* out_plane = out.at(n, co);
    for (std::size_t i = 0; i < out.plane(); ++i) out_plane[i] = b[co];
    for (int ci = 0; ci < in.c; ++ci) {
      const double* in_plane = in.at(n, ci);
      const double* wk = w + (static_cast<std::size_t>(co) * in.c + ci) * 4;
      for (int y = 0; y < in.h; ++y)
        for (int dy = 0; dy < 2; ++dy) {
          double* out_row = out_plane + static_cast<std::size_t>(2 * y + dy) * out.w;
          const double* in_row = in_plane + static_cast<std::size_t>(y) * in.w;
          const double w0 = wk[dy * 2];
          const double w1 = wk[dy * 2 + 1];
          for (int x = 0; x < in.w; ++x) {
            out_row[2 * x] += w0 * in_row[x];
            out_row[2 * x + 1] += w1 * in_row[x];
          }
        }
    }
  });
}

void conv2d_backward(const Tensor4& in, const double* w, int cout, int kernel,
                     int stride, const Tensor4& dout, Tensor4& din, double* dw,
                     double* db) {
  const int pad = (kernel - 1) / 2;
  din = Tensor4(in.n, in.c, in.h, in.w);
  // dIn: each (n, ci) plane owned by one job.
  parallel_for(static_cast<std::int64_t>(in.n) * in.c, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx) / in.c;
    const int ci = static_cast<int>(idx) % in.c;
    double* din_plane = din.at(n, ci);
    for (int co = 0; co < cout; ++co) {
      const double* dout_plane = dout.at(n, co);
      const double* wk = w + ((static_cast<std::size_t>(co) * in.c + ci) * kernel) * kernel;
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const double wv = wk[ky * kernel + kx];
          if (wv == 0.0) continue;
          for (int oy = 0; oy < dout.h; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in.h) continue;
            double* din_row = din_plane + static_cast<std::size_t>(iy) * in.w;
            const double* dout_row = dout_plane + static_cast<std::size_t>(oy) * dout.w;
            for (int ox = 0; ox < dout.w; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in.w) continue;
              din_row[ix] += wv * dout_row[ox];
            }
          }
        }
    }
  });
  // dW and dB: each co owned by one job; accumulation order over
  // (n, ci, ky, kx, oy, ox) is fixed.
  parallel_for(cout, [&](std::int64_t co64) {
    const int co = static_cast<int>(co64);
    double acc_b = 0.0;
    for (int n = 0; n < in.n; ++n) {
      const double* dout_plane = dout.at(n, co);
      for (std::size_t i = 0; i < dout.plane(); ++i) acc_b += dout_plane[i];
    }
    db[co] += acc_b;
    for (int ci = 0; ci < in.c; ++ci) {
      double* dwk = dw + ((static_cast<std::size_t>(co) * in.c + ci) * kernel) * kernel;
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double acc = 0.0;
          for (int n = 0; n < in.n; ++n) {
            const double* in_plane = in.at(n, ci);
            const double* dout_plane = dout.at(n, co);
            for (int oy = 0; oy < dout.h; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= in.h) continue;
              const double* in_row = in_plane + static_cast<std::size_t>(iy) * in.w;
              const double* dout_row = dout_plane + static_cast<std::size_t>(oy) * dout.w;
              for (int ox = 0; ox < dout.w; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= in.w) continue;
                acc += dout_row[ox] * in_row[ix];
              }
            }
          }
          dwk[ky * kernel + kx] += acc;
        }
    }
  });
}

void tconv2x2_backward(const Tensor4& in, const double* w, int cout,
                       const Tensor4& dout, Tensor4& din, double* dw, double* db) {
  din = Tensor4(in.n, in.c, in.h, in.w);
  parallel_for(static_cast<std::int64_t>(in.n) * in.c, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx) / in.c;
    const int ci = static_cast<int>(idx) % in.c;
    double* din_plane = din.at(n, ci);
    for (int co = 0; co < cout; ++co) {
      const double* dout_plane = dout.at(n, co);
      const double* wk = w + (static_cast<std::size_t>(co) * in.c + ci) * 4;
      for (int y = 0; y < in.h; ++y) {
        double* din_row = din_plane + static_cast<std::size_t>(y) * in.w;
        for (int dy = 0; dy < 2; ++dy) {
          const double* dout_row = dout_plane + static_cast<std::size_t>(2 * y + dy) * dout.w;
          const double w0 = wk[dy * 2];
          const double w1 = wk[dy * 2 + 1];
          for (int x = 0; x < in.w; ++x)
            din_row[x] += w0 * dout_row[2 * x] + w1 * dout_row[2 * x + 1];
        }
      }
    }
  });
  parallel_for(cout, [&](std::int64_t co64) {
    const int co = static_cast<int>(co64);
    double acc_b = 0.0;
    for (int n = 0; n < in.n; ++n) {
      const double* dout_plane = dout.at(n, co);
      for (std::size_t i = 0; i < dout.plane(); ++i) acc_b += dout_plane[i];
    }
    db[co] += acc_b;
    for (int ci = 0; ci < in.c; ++ci) {
      double* dwk = dw + (static_cast<std::size_t>(co) * in.c + ci) * 4;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          double acc = 0.0;
          for (int n = 0; n < in.n; ++n) {
            const double* in_plane = in.at(n, ci);
            const double* dout_plane = dout.at(n, co);
            for (int y = 0; y < in.h; ++y) {
              const double* in_row = in_plane + static_cast<std::size_t>(y) * in.w;
              const double* dout_row = dout_plane + static_cast<std::size_t>(2 * y + dy) * dout.w;
              for (int x = 0; x < in.w; ++x) acc += dout_row[2 * x + dx] * in_row[x];
            }
          }
          dwk[dy * 2 + dx] += acc;
        }
    }
  });
}

}  // namespace detail

namespace ref {
void conv2d_forward_serial(const Tensor4& in, const double* w, const double* b,
                           int cout, int kernel, int stride, Tensor4& out) {
  detail::conv2d_forward(in, w, b, cout, kernel, stride, out, false);
}
}  // namespace ref

Network::Network(const NetSpec& spec) : spec_(spec) {
  spec_.validate();
  const int L = spec_.levels;
  auto filters = [&](int level) { return spec_.base_filters << level; };

  auto add = [&](LayerDef::Kind kind, int cin, int cout, int kernel, int stride,
                 bool bn_relu) {
    LayerDef def;
    def.kind = kind;
    def.cin = cin;
    def.cout = cout;
    def.kernel = kernel;
    def.stride = stride;
    def.bn_relu = bn_relu;
    def.w_off = param_count_;
    param_count_ += def.weights();
    def.b_off = param_count_;
    param_count_ += cout;
    if (bn_relu) {
      def.gamma_off = param_count_;
      param_count_ += cout;
      def.beta_off = param_count_;
      param_count_ += cout;
      def.stat_off = stats_count_;
      stats_count_ += 2 * static_cast<std::size_t>(cout);
    }
    layers_.push_back(def);
  };

  add(LayerDef::Kind::conv, spec_.in_channels, filters(0), 3, 1, true);  // stem
  for (int l = 1; l <= L; ++l)
    add(LayerDef::Kind::conv, filters(l - 1), filters(l), 3, 2, true);   // down
  for (int l = L - 1; l >= 0; --l) {
    add(LayerDef::Kind::tconv, filters(l + 1), filters(l), 2, 2, true);  // up
    add(LayerDef::Kind::conv, 2 * filters(l), filters(l), 3, 1, true);   // fuse
  }
  add(LayerDef::Kind::conv, filters(0), spec_.out_channels, 3, 1, false);  // head
}

Network::~Network() = default;

NetState Network::init_params(std::uint64_t seed) const {
  NetState state;
  state.theta.assign(param_count_, 0.0);
  state.grad.assign(param_count_, 0.0);
  state.adam_m.assign(param_count_, 0.0);
  state.adam_v.assign(param_count_, 0.0);
  state.stats.assign(stats_count_, 0.0);
  Rng rng = Rng::stream(seed, {0x696e6974ULL});
  for (const LayerDef& def : layers_) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(def.cin) * def.kernel * def.kernel));
    for (std::size_t i = 0; i < def.weights(); ++i)
      state.theta[def.w_off + i] = sd * rng.normal();
    // biases stay 0
    if (def.bn_relu) {
      for (int c = 0; c < def.cout; ++c) {
        state.theta[def.gamma_off + c] = 1.0;
        state.theta[def.beta_off + c] = 0.0;
        state.stats[def.stat_off + c] = 0.0;                    // running mean
        state.stats[def.stat_off + def.cout + c] = 1.0;         // running var
      }
    }
  }
  return state;
}

Tensor4 Network::run_layer(const LayerDef& def, const std::vector<double>& theta,
                           std::vector<double>& stats, const Tensor4& input,
                           bool train, Workspace* ws, int cache_slot) const {
  Tensor4 pre;
  if (def.kind == LayerDef::Kind::conv)
    detail::conv2d_forward(input, theta.data() + def.w_off, theta.data() + def.b_off,
                           def.cout, def.kernel, def.stride, pre, true);
  else
    detail::tconv2x2_forward(input, theta.data() + def.w_off, theta.data() + def.b_off,
                             def.cout, pre);

  BlockCache* cache = nullptr;
  if (ws) {
    if (static_cast<int>(ws->blocks.size()) <= cache_slot)
      ws->blocks.resize(cache_slot + 1);
    cache = &ws->blocks[cache_slot];
    cache->in = input;
  }

  if (!def.bn_relu) {
    if (cache) cache->out = pre;
    return pre;
  }

  const double eps = spec_.bn_epsilon;
  Tensor4 out(pre.n, pre.c, pre.h, pre.w);
  Tensor4 xhat;
  std::vector<double> inv_std(def.cout, 0.0);
  if (train) xhat = Tensor4(pre.n, pre.c, pre.h, pre.w);

  const std::size_t plane = pre.plane();
  const double count = static_cast<double>(pre.n) * plane;
  parallel_for(def.cout, [&](std::int64_t c64) {
    const int c = static_cast<int>(c64);
    double mean, var;
    if (train) {
      double s1 = 0.0, s2 = 0.0;
      for (int n = 0; n < pre.n; ++n) {
        const double* p = pre.at(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          s1 += p[i];
          s2 += p[i] * p[i];
        }
      }
      mean = s1 / count;
      var = s2 / count - mean * mean;
      if (var < 0.0) var = 0.0;
      const double mom = spec_.bn_momentum;
      stats[def.stat_off + c] = mom * stats[def.stat_off + c] + (1.0 - mom) * mean;
      stats[def.stat_off + def.cout + c] =
          mom * stats[def.stat_off + def.cout + c] + (1.0 - mom) * var;
    } else {
      mean = stats[def.stat_off + c];
      var = stats[def.stat_off + def.cout + c];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[c] = istd;
    const double gamma = theta[def.gamma_off + c];
    const double beta = theta[def.beta_off + c];
    for (int n = 0; n < pre.n; ++n) {
      const double* p = pre.at(n, c);
      double* q = out.at(n, c);
      double* xh = train ? xhat.at(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const double norm = (p[i] - mean) * istd;
        if (xh) xh[i] = norm;
        const double y = gamma * norm + beta;
        q[i] = y > 0.0 ? y : 0.0;  // ReLU
      }
    }
  });

  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->out = out;
  }
  return out;
}

Tensor4 Network::forward(const std::vector<double>& theta, std::vector<double>& stats,
                         const Tensor4& input, bool train, Workspace* ws) const {
  if (theta.size() != param_count_) fail(ErrorCode::shape_mismatch, "net: theta size mismatch");
  if (stats.size() != stats_count_) fail(ErrorCode::shape_mismatch, "net: stats size mismatch");
  if (input.c != spec_.in_channels) fail(ErrorCode::shape_mismatch, "net: input channel mismatch");
  const int div = 1 << spec_.levels;
  if (input.h % div != 0 || input.w % div != 0)
    fail(ErrorCode::shape_mismatch, "net: spatial dims must be divisible by 2^levels");
  if (train && !ws) fail(ErrorCode::invalid_argument, "net: train mode requires a workspace");

  const int L = spec_.levels;
  if (ws) {
    ws->input = input;
    ws->blocks.clear();
  }

  std::vector<Tensor4> skips(L);  // r_0 .. r_{L-1}
  int slot = 0;
  Tensor4 cur = run_layer(layers_[0], theta, stats, input, train, ws, slot++);
  for (int l = 1; l <= L; ++l) {
    skips[l - 1] = cur;
    cur = run_layer(layers_[l], theta, stats, cur, train, ws, slot++);
  }
  for (int i = 0; i < L; ++i) {
    const int l = L - 1 - i;
    const LayerDef& up = layers_[1 + L + 2 * i];
    const LayerDef& fuse = layers_[2 + L + 2 * i];
    Tensor4 u = run_layer(up, theta, stats, cur, train, ws, slot++);
    Tensor4 cat(u.n, u.c + skips[l].c, u.h, u.w);
    for (int n = 0; n < u.n; ++n) {
      for (int c = 0; c < u.c; ++c)
        std::copy(u.at(n, c), u.at(n, c) + u.plane(), cat.at(n, c));
      for (int c = 0; c < skips[l].c; ++c)
        std::copy(skips[l].at(n, c), skips[l].at(n, c) + u.plane(), cat.at(n, u.c + c));
    }
    cur = run_layer(fuse, theta, stats, cat, train, ws, slot++);
  }
  return run_layer(layers_.back(), theta, stats, cur, train, ws, slot);
}

Tensor4 Network::run_layer_backward(const LayerDef& def, const std::vector<double>& theta,
                                    const Workspace& ws, int cache_slot,
                                    const Tensor4& dout, std::vector<double>& dtheta) const {
  const BlockCache& cache = ws.blocks[cache_slot];
  Tensor4 dpre = dout;

  if (def.bn_relu) {
    const std::size_t plane = cache.out.plane();
    const double count = static_cast<double>(cache.out.n) * plane;
    Tensor4 dnorm(dout.n, dout.c, dout.h, dout.w);
    parallel_for(def.cout, [&](std::int64_t c64) {
      const int c = static_cast<int>(c64);
      const double gamma = theta[def.gamma_off + c];
      const double istd = cache.inv_std[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < dout.n; ++n) {
        const double* dy = dout.at(n, c);
        const double* y = cache.out.at(n, c);
        const double* xh = cache.xhat.at(n, c);
        double* dn = dnorm.at(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double g = y[i] > 0.0 ? dy[i] : 0.0;  // through ReLU
          dn[i] = g;
          sum_dy += g;
          sum_dy_xhat += g * xh[i];
        }
      }
      dtheta[def.beta_off + c] += sum_dy;
      dtheta[def.gamma_off + c] += sum_dy_xhat;
      const double mean_dy = sum_dy / count;
      const double mean_dy_xhat = sum_dy_xhat / count;
      for (int n = 0; n < dout.n; ++n) {
        const double* xh = cache.xhat.at(n, c);
        double* dn = dnorm.at(n, c);
        for (std::size_t i = 0; i < plane; ++i)
          dn[i] = gamma * istd * (dn[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    });
    dpre = std::move(dnorm);
  }

  Tensor4 din;
  if (def.kind == LayerDef::Kind::conv)
    detail::conv2d_backward(cache.in, theta.data() + def.w_off, def.cout, def.kernel,
                            def.stride, dpre, din, dtheta.data() + def.w_off,
                            dtheta.data() + def.b_off);
  else
    detail::tconv2x2_backward(cache.in, theta.data() + def.w_off, def.cout, dpre, din,
                              dtheta.data() + def.w_off, dtheta.data() + def.b_off);
  return din;
}

Tensor4 Network::backward(const std::vector<double>& theta, const Workspace& ws,
                          const Tensor4& output_grad, std::vector<double>& dtheta) const {
  if (dtheta.size() != param_count_) fail(ErrorCode::shape_mismatch, "net: dtheta size mismatch");
  const int L = spec_.levels;
  const int head_slot = 3 * L + 1;

  std::vector<Tensor4> dskip(L);
  Tensor4 dcur = run_layer_backward(layers_.back(), theta, ws, head_slot, output_grad, dtheta);

  for (int i = L - 1; i >= 0; --i) {
    const int l = L - 1 - i;
    const LayerDef& up = layers_[1 + L + 2 * i];
    const LayerDef& fuse = layers_[2 + L + 2 * i];
    const int up_slot = 1 + L + 2 * i;
    const int fuse_slot = 2 + L + 2 * i;
    Tensor4 dcat = run_layer_backward(fuse, theta, ws, fuse_slot, dcur, dtheta);
    // Split the concat gradient: first `up.cout` channels flow to the up
    // path, the rest to the encoder skip.
    Tensor4 du(dcat.n, up.cout, dcat.h, dcat.w);
    Tensor4 ds(dcat.n, dcat.c - up.cout, dcat.h, dcat.w);
    for (int n = 0; n < dcat.n; ++n) {
      for (int c = 0; c < up.cout; ++c)
        std::copy(dcat.at(n, c), dcat.at(n, c) + dcat.plane(), du.at(n, c));
      for (int c = 0; c < ds.c; ++c)
        std::copy(dcat.at(n, up.cout + c), dcat.at(n, up.cout + c) + dcat.plane(), ds.at(n, c));
    }
    dskip[l] = std::move(ds);
    dcur = run_layer_backward(up, theta, ws, up_slot, du, dtheta);
  }

  // dcur is now the gradient w.r.t. the bottleneck r_L; walk the encoder.
  for (int l = L; l >= 1; --l) {
    dcur = run_layer_backward(layers_[l], theta, ws, l, dcur, dtheta);
    for (std::size_t i = 0; i < dcur.v.size(); ++i) dcur.v[i] += dskip[l - 1].v[i];
  }
  return run_layer_backward(layers_[0], theta, ws, 0, dcur, dtheta);
}

NetParamsBlob Network::to_blob(const NetState& state) const {
  NetParamsBlob blob;
  blob.spec_json = spec_.to_json();
  blob.theta.reserve(state.theta.size() + state.stats.size());
  for (double v : state.theta) blob.theta.push_back(static_cast<float>(v));
  for (double v : state.stats) blob.theta.push_back(static_cast<float>(v));
  return blob;
}

NetState Network::from_blob(const NetParamsBlob& blob) const {
  if (blob.theta.size() != param_count_ + stats_count_)
    fail(ErrorCode::shape_mismatch, "netparams payload length mismatch");
  NetState state;
  state.theta.assign(blob.theta.begin(), blob.theta.begin() + param_count_);
  state.grad.assign(param_count_, 0.0);
  state.adam_m.assign(param_count_, 0.0);
  state.adam_v.assign(param_count_, 0.0);
  state.stats.assign(blob.theta.begin() + param_count_, blob.theta.end());
  return state;
}

Tensor4 single_input(const std::vector<float>& magnitudes, int c, int h, int w) {
  if (magnitudes.size() != static_cast<std::size_t>(c) * h * w)
    fail(ErrorCode::shape_mismatch, "single_input: size mismatch");
  Tensor4 t(1, c, h, w);
  for (std::size_t i = 0; i < magnitudes.size(); ++i) t.v[i] = magnitudes[i];
  return t;
}

void adam_step(std::vector<double>& theta, const std::vector<double>& grad,
               std::vector<double>& m, std::vector<double>& v, std::int64_t& t,
               double lr, double beta1, double beta2, double eps) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    fail(ErrorCode::shape_mismatch, "adam: buffer size mismatch");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  parallel_for(static_cast<std::int64_t>(theta.size()), [&](std::int64_t i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  });
}

}  // namespace qmt
