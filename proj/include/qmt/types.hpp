#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "qmt/error.hpp"

namespace qmt {

// Clamp range for all stored T2 maps, in milliseconds.
inline constexpr double kT2MinMs = 1.0;
inline constexpr double kT2MaxMs = 2000.0;

// Network channel 1 carries T2 in units of kT2Scale milliseconds.
inline constexpr double kT2Scale = 100.0;

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

// Per-echo binary ky-line sampling masks. lines[j*ny + k] == 1 means ky
// line k of echo j is acquired.
struct MaskSet {
  int ny = 0;
  int t = 0;
  double r_target = 1.0;
  double center_frac = 0.0;
  double alpha = 2.0;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> lines;  // [t][ny]

  bool sampled(int echo, int ky) const { return lines[static_cast<std::size_t>(echo) * ny + ky] != 0; }
  int lines_per_echo(int echo) const;
  void validate() const;
};

// Complex multi-echo image stack, echo-major [t][ny][nx].
struct EchoSeries {
  int ny = 0;
  int nx = 0;
  std::vector<double> te_ms;
  std::vector<cfloat> data;  // [t][ny][nx]

  int echoes() const { return static_cast<int>(te_ms.size()); }
  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  void validate() const;
};

// Undersampled k-space measurements paired with the mask that produced them.
struct KSpaceSet {
  int ny = 0;
  int nx = 0;
  std::vector<double> te_ms;
  std::vector<cfloat> data;  // [t][ny][nx], unsampled lines exactly zero
  MaskSet mask;

  int echoes() const { return static_cast<int>(te_ms.size()); }
  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  void validate() const;
};

// Proton density, T2 map, and ROI labels on a common grid.
struct ParamMaps {
  int ny = 0;
  int nx = 0;
  std::vector<float> i0;           // [ny][nx], non-negative
  std::vector<float> t2_ms;        // [ny][nx], in [kT2MinMs, kT2MaxMs]
  std::vector<std::int32_t> roi_labels;  // [ny][nx], 0 = background

  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  void validate() const;
};

// Serializable network snapshot: flat parameters plus the architecture
// description needed to rebuild the net (kept as a JSON string so the
// container header embeds it verbatim).
struct NetParamsBlob {
  std::string spec_json;
  std::vector<float> theta;
};

// Generic numeric table; container kind "report". Values are float32 to
// match the payload exactly; the CSV reports carry full precision.
struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;  // empty or one per row
  std::vector<float> values;            // [rows][columns.size()]

  std::size_t rows() const {
    return columns.empty() ? 0 : values.size() / columns.size();
  }
};

// Divides by the maximum magnitude over all echoes and pixels so the result
// has max |v| == 1. Returns the scale. All-zero input is an error.
EchoSeries normalize_dataset(const EchoSeries& series, double* scale_out);

}  // namespace qmt
