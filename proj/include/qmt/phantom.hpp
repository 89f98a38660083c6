#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmt/types.hpp"

namespace qmt {

struct TissueClass {
  std::string name;
  double t2_mean_ms = 0.0;
  double t2_sd_ms = 0.0;
  double i0_lo = 0.0;
  double i0_hi = 0.0;
};

struct PhantomSpec {
  int ny = 64;
  int nx = 64;
  int n_objects = 8;
  std::vector<TissueClass> tissue_table;
  std::uint64_t seed = 0;

  void validate() const;
};

// Knee-tissue T2 statistics (reference means/SDs) plus a short-T2 filler
// class standing in for fat and bone marrow.
std::vector<TissueClass> default_tissue_table();

// Randomized ellipses and half-annuli with per-object T2 and I0 draws.
// Labels run 1..n_objects; a later object overwrites earlier ones where
// they overlap. Background has i0 = 0 and label 0.
ParamMaps make_phantom(const PhantomSpec& spec);

// Noiseless mono-exponential signal stack in double precision,
// s[j][p] = i0[p] * exp(-te_ms[j] / t2_ms[p]).
std::vector<double> ideal_signal(const ParamMaps& maps, const std::vector<double>& te_ms);

// ideal_signal embedded as zero-phase complex data plus i.i.d. complex
// Gaussian noise of standard deviation noise_sd per channel.
EchoSeries synthesize_echoes(const ParamMaps& maps, const std::vector<double>& te_ms,
                             double noise_sd, std::uint64_t seed);

}  // namespace qmt
