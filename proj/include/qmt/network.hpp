#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmt/types.hpp"

namespace qmt {

// Dense [n, c, h, w] tensor in double precision.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  double* at(int b, int ch) {
    return v.data() + (static_cast<std::size_t>(b) * c + ch) * plane();
  }
  const double* at(int b, int ch) const {
    return v.data() + (static_cast<std::size_t>(b) * c + ch) * plane();
  }
};

// Encoder-decoder mapping network: per level a stride-2 3x3 convolution
// halves the grid and doubles the filters; the decoder mirrors it with 2x2
// stride-2 transposed convolutions and channel-concatenation skips. Every
// convolution except the linear head is followed by batch norm and ReLU.
struct NetSpec {
  int in_channels = 8;
  int out_channels = 2;
  int levels = 3;
  int base_filters = 16;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  void validate() const;
  std::string to_json() const;
  static NetSpec from_json(const std::string& text);
};

// Trainable state: flat parameters, matching gradient buffer, batch-norm
// running statistics, and ADAM moments.
struct NetState {
  std::vector<double> theta;
  std::vector<double> grad;
  std::vector<double> stats;  // running mean/var pairs per BN layer
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t adam_t = 0;
};

// Per-block activation cache recorded by a train-mode forward pass and
// consumed by backward.
struct BlockCache {
  Tensor4 in;
  Tensor4 xhat;
  std::vector<double> inv_std;
  Tensor4 out;
};

struct Workspace {
  Tensor4 input;
  std::vector<BlockCache> blocks;
};

class Network {
 public:
  explicit Network(const NetSpec& spec);
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetSpec& spec() const { return spec_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t stats_count() const { return stats_count_; }

  // He-initialized parameters: conv weights ~ N(0, 2/fan_in), biases 0,
  // affine scale 1 / shift 0, running stats (0, 1). Deterministic per seed.
  NetState init_params(std::uint64_t seed) const;

  // Batched forward. In train mode batch statistics are used and running
  // stats updated; in infer mode running stats are used and nothing is
  // written. ws must be supplied (train mode) to enable backward.
  Tensor4 forward(const std::vector<double>& theta, std::vector<double>& stats,
                  const Tensor4& input, bool train, Workspace* ws) const;

  // Exact reverse-mode gradients of the train-mode forward pass.
  // Accumulates parameter gradients into dtheta and returns the gradient
  // with respect to the input batch.
  Tensor4 backward(const std::vector<double>& theta, const Workspace& ws,
                   const Tensor4& output_grad, std::vector<double>& dtheta) const;

  NetParamsBlob to_blob(const NetState& state) const;
  NetState from_blob(const NetParamsBlob& blob) const;

 private:
  struct LayerDef;

  Tensor4 run_layer(const LayerDef& def, const std::vector<double>& theta,
                    std::vector<double>& stats, const Tensor4& input, bool train,
                    Workspace* ws, int cache_slot) const;
  Tensor4 run_layer_backward(const LayerDef& def, const std::vector<double>& theta,
                             const Workspace& ws, int cache_slot,
                             const Tensor4& dout, std::vector<double>& dtheta) const;

  NetSpec spec_;
  std::vector<LayerDef> layers_;  // stem, downs, (up, fuse)*, head
  std::size_t param_count_ = 0;
  std::size_t stats_count_ = 0;
};

// forward_net / backward_net with the single-sample [t, ny, nx] layout.
Tensor4 single_input(const std::vector<float>& magnitudes, int c, int h, int w);

// Standard ADAM with bias correction.
void adam_step(std::vector<double>& theta, const std::vector<double>& grad,
               std::vector<double>& m, std::vector<double>& v, std::int64_t& t,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

namespace ref {
// Serial twin of the OpenMP convolution kernel, kept for tests/benchmarks.
void conv2d_forward_serial(const Tensor4& in, const double* w, const double* b,
                           int cout, int kernel, int stride, Tensor4& out);
}  // namespace ref

namespace detail {
void conv2d_forward(const Tensor4& in, const double* w, const double* b, int cout,
                    int kernel, int stride, Tensor4& out, bool parallel);
}  // namespace detail

}  // namespace qmt
