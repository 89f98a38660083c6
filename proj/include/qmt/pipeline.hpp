#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmt/lowrank.hpp"
#include "qmt/mantis.hpp"
#include "qmt/metrics.hpp"
#include "qmt/phantom.hpp"
#include "qmt/sampling.hpp"

namespace qmt {

// Echo times of the multi-echo protocol the experiments emulate, in ms.
std::vector<double> default_te_ms();

struct ReproProfile {
  std::string name = "desk";
  int ny = 64;
  int nx = 64;
  int n_objects = 8;
  int n_train = 12;
  int n_val = 2;
  int n_test = 6;
  std::vector<double> te_ms = default_te_ms();
  double noise_sd = 0.025;
  std::vector<double> r_values = {5.0, 8.0};
  double center_frac = 0.05;
  double mask_alpha = 2.0;
  int library_size = 64;
  NetSpec netspec;
  TrainConfig train_config;
  IstaSchedule ista;
  std::uint64_t seed = 7;

  void validate() const;
};

// Scales sized so the full run stays well inside a half-hour on a laptop.
ReproProfile desk_profile(std::uint64_t seed = 7);
// Minutes-scale variant for smoke tests.
ReproProfile smoke_profile(std::uint64_t seed = 7);

ReproProfile profile_by_name(const std::string& name, std::uint64_t seed);

struct ReproOutput {
  EvalReport report;
  double wall_seconds = 0.0;
  // Mean T2 nRMSE of the trained net on two disjoint unseen mask-sets at
  // the first acceleration rate (mask-robustness probe).
  double mask_probe_nrmse_a = 0.0;
  double mask_probe_nrmse_b = 0.0;
  std::vector<double> mantis_train_loss;  // per epoch, first R
};

// The full comparison: phantoms, masks per R, MANTIS + CNN-Only training,
// zero-fill / GLR / LLR baselines, evaluation, CSV + previews when out_dir
// is non-empty.
ReproOutput run_repro(const ReproProfile& profile, const std::string& out_dir);

}  // namespace qmt
