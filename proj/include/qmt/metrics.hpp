#pragma once

#include <map>
#include <string>
#include <vector>

#include "qmt/types.hpp"

namespace qmt {

// ||ref - est||_2 / ||ref||_2 * 100 over the region roi_labels > 0 of the
// reference maps.
double nrmse_percent(const ParamMaps& est, const ParamMaps& ref);
double nrmse_percent(const std::vector<double>& est, const std::vector<double>& ref,
                     const std::vector<std::int32_t>& region);

// SSIM with an 8x8 sliding window, Gaussian weights sigma = 1.5,
// C1 = (0.01 L)^2, C2 = (0.03 L)^2, L the reference dynamic range over the
// region; mean over windows intersecting the region, in percent.
double ssim_percent(const ParamMaps& est, const ParamMaps& ref);
double ssim_percent(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<std::int32_t>& region, int ny, int nx);

// Per-window SSIM values, NaN where the window misses the region; the grid
// is (ny-7) x (nx-7) window origins. Exposed for the covariance tests.
std::vector<double> ssim_map(const std::vector<double>& a, const std::vector<double>& b,
                             const std::vector<std::int32_t>& region, int ny, int nx,
                             double dynamic_range);

struct RoiStat {
  double mean = 0.0;
  double sd = 0.0;  // sample SD, n-1 denominator
  int n = 0;
};

// Mean/SD/count of t2 per ROI label (labels >= 1).
std::map<int, RoiStat> roi_stats(const std::vector<float>& t2_ms,
                                 const std::vector<std::int32_t>& roi_labels);

struct BlandAltman {
  double mean_diff = 0.0;
  double lower = 0.0;  // mean - 1.96 * SD of differences
  double upper = 0.0;
};

// Limits of agreement with the sample-SD convention (n-1 denominator).
BlandAltman bland_altman(const std::vector<std::pair<double, double>>& pairs);

// Two-sided Wilcoxon signed-rank test. Zeros dropped, average ranks for
// ties; exact enumeration of the sign distribution for n <= 12, normal
// approximation with tie correction beyond.
double wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs);

// Aggregate over a test set: value is the mean across phantoms, sd the
// sample SD across phantoms.
struct AggStat {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

struct MethodResult {
  std::string method;
  double r = 1.0;
  std::vector<ParamMaps> maps;  // one per test phantom
};

struct MethodEval {
  std::string method;
  double r = 1.0;
  AggStat nrmse_percent;
  AggStat ssim_percent;
  std::map<int, AggStat> roi_mean_t2;  // per label, across phantoms
  BlandAltman agreement;               // per-(phantom, label) ROI-mean pairs
  double wilcoxon_p = 1.0;
};

struct EvalReport {
  std::map<int, AggStat> reference_roi;
  std::vector<MethodEval> methods;
};

// Quantitative comparison of every method against the references. When
// out_prefix is non-empty, writes <prefix>report.csv plus 8-bit PGM
// previews of the first phantom's T2 maps (window 0..100 ms) and residual
// maps (window +-20 ms around mid-gray).
EvalReport make_report(const std::vector<ParamMaps>& references,
                       const std::vector<MethodResult>& methods,
                       const std::string& out_prefix = "");

// CSV schema: method,r,metric,roi,value,sd,n (one header line, '.' decimal,
// empty fields where a column does not apply).
struct CsvRow {
  std::string method;
  double r = 0.0;
  std::string metric;
  std::string roi;
  double value = 0.0;
  double sd = 0.0;
  int n = 0;
  bool has_sd = false;
  bool has_n = false;
};

std::vector<CsvRow> report_rows(const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report);
std::vector<CsvRow> parse_report_csv(const std::string& path);
ReportTable report_to_table(const EvalReport& report);

// Binary 8-bit portable graymap.
void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               int ny, int nx);
std::vector<std::uint8_t> t2_preview(const ParamMaps& maps, double window_ms = 100.0);
std::vector<std::uint8_t> residual_preview(const ParamMaps& est, const ParamMaps& ref,
                                           double window_ms = 20.0);

}  // namespace qmt
