#pragma once

#include <cstdint>
#include <vector>

#include "qmt/encoding.hpp"
#include "qmt/network.hpp"
#include "qmt/types.hpp"

namespace qmt {

struct TrainConfig {
  double lambda_data = 0.1;
  double lambda_cnn = 1.0;
  double lr = 0.0002;
  int batch = 3;
  int epochs = 100;
  // Relative weight of the T2 channel in the supervised term, applied
  // after T2 is expressed in units of kT2Scale.
  double t2_loss_weight = 1.0;
  // Squared L2 per-pixel mean by default; false selects the unsquared
  // root-mean-square form.
  bool loss2_squared = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// One training sample: measured k-space, the mask that produced it, the
// zero-filled input magnitudes, and the reference maps fitted from the
// fully sampled data.
struct TrainSample {
  Tensor4 input;                  // [1, t, ny, nx]
  Stack d;                        // [t, ny, nx]
  MaskSet mask;
  std::vector<double> te_ms;
  std::vector<double> ref_i0;     // [ny*nx]
  std::vector<double> ref_t2_ms;  // [ny*nx]
};

struct LossValue {
  double total = 0.0;
  double data = 0.0;   // k-space consistency term, before lambda weighting
  double cnn = 0.0;    // supervised term, before lambda weighting
  Tensor4 output_grad;
};

// Two-term objective on one sample's raw network output [1, 2, ny, nx]:
// channel 0 is I0, channel 1 is T2 / kT2Scale. The data term synthesizes
// echoes through the signal model under a smooth clamp (exact at i0 = 0),
// encodes them, and compares against d; the supervised term compares the
// raw outputs against the reference maps.
LossValue loss_mantis(const Tensor4& output, const TrainSample& sample,
                      double lambda_data, double lambda_cnn,
                      const TrainConfig& config);

// Smooth clamps used inside the data-term path.
double smooth_nonneg(double x);
double smooth_nonneg_grad(double x);
double smooth_t2_ms(double t2_ms);
double smooth_t2_ms_grad(double t2_ms);

// Per-phantom training data: the fully sampled (normalized) k-space that
// masks are applied to, and the reference maps from the fully sampled fit.
struct TrainPhantom {
  Stack full_kspace;
  std::vector<double> te_ms;
  std::vector<double> ref_i0;
  std::vector<double> ref_t2_ms;
  ParamMaps truth;  // ground-truth maps, kept for evaluation
};

// Synthesize -> normalize -> fully sampled FFT -> reference fit.
TrainPhantom make_train_phantom(const ParamMaps& truth, const std::vector<double>& te_ms,
                                double noise_sd, std::uint64_t seed);

// Applies a mask-set to a phantom's full k-space and builds the sample.
TrainSample make_sample(const TrainPhantom& phantom, const MaskSet& mask);

struct TrainResult {
  NetState best;
  NetSpec spec;
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;
  int best_epoch = -1;
  bool diverged = false;
};

// Sampling-augmented training: every iteration draws a mini-batch of
// phantoms and one mask-set uniformly from the library, then takes one
// ADAM step on the two-term objective. The returned snapshot is the one
// with minimum validation loss.
TrainResult train(const TrainConfig& config, const std::vector<TrainPhantom>& train_set,
                  const std::vector<TrainPhantom>& val_set,
                  const std::vector<MaskSet>& library, const NetSpec& netspec);

// Infer-mode forward plus hard output clamps. ROI labels are copied from
// truth_labels when given, otherwise thresholded from the inferred I0.
ParamMaps infer(const Network& net, const NetState& state, const EchoSeries& zero_filled,
                const ParamMaps* truth_labels = nullptr);

}  // namespace qmt
