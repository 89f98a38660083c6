#include "qmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace qmt {

namespace {

std::vector<double> t2_as_double(const ParamMaps& maps) {
  return {maps.t2_ms.begin(), maps.t2_ms.end()};
}

double sample_sd(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / (static_cast<double>(values.size()) - 1.0));
}

AggStat aggregate(const std::vector<double>& values) {
  AggStat s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / s.n;
  s.sd = sample_sd(values, s.mean);
  return s;
}

}  // namespace

double nrmse_percent(const std::vector<double>& est, const std::vector<double>& ref,
                     const std::vector<std::int32_t>& region) {
  if (est.size() != ref.size() || ref.size() != region.size())
    fail(ErrorCode::shape_mismatch, "nrmse: size mismatch");
  double num = 0.0, den = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < ref.size(); ++p) {
    if (region[p] <= 0) continue;
    const double d = ref[p] - est[p];
    num += d * d;
    den += ref[p] * ref[p];
    ++count;
  }
  if (count == 0) fail(ErrorCode::invalid_argument, "nrmse: empty region");
  if (den <= 0.0) fail(ErrorCode::numeric_failure, "nrmse: zero-norm reference");
  return std::sqrt(num / den) * 100.0;
}

double nrmse_percent(const ParamMaps& est, const ParamMaps& ref) {
  if (est.ny != ref.ny || est.nx != ref.nx)
    fail(ErrorCode::shape_mismatch, "nrmse: map shape mismatch");
  return nrmse_percent(t2_as_double(est), t2_as_double(ref), ref.roi_labels);
}

namespace {

constexpr int kSsimWindow = 8;

const std::vector<double>& ssim_weights() {
  static const std::vector<double> weights = [] {
    std::vector<double> w(kSsimWindow * kSsimWindow);
    const double sigma = 1.5;
    const double c = (kSsimWindow - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < kSsimWindow; ++y)
      for (int x = 0; x < kSsimWindow; ++x) {
        const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
        w[y * kSsimWindow + x] = std::exp(-d2 / (2.0 * sigma * sigma));
        sum += w[y * kSsimWindow + x];
      }
    for (double& v : w) v /= sum;
    return w;
  }();
  return weights;
}

}  // namespace

std::vector<double> ssim_map(const std::vector<double>& a, const std::vector<double>& b,
                             const std::vector<std::int32_t>& region, int ny, int nx,
                             double dynamic_range) {
  if (ny < kSsimWindow || nx < kSsimWindow)
    fail(ErrorCode::invalid_argument, "ssim: region smaller than window");
  if (a.size() != static_cast<std::size_t>(ny) * nx || a.size() != b.size() ||
      a.size() != region.size())
    fail(ErrorCode::shape_mismatch, "ssim: size mismatch");
  const double L = std::max(dynamic_range, 1e-9);
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const std::vector<double>& w = ssim_weights();

  const int gy = ny - kSsimWindow + 1;
  const int gx = nx - kSsimWindow + 1;
  std::vector<double> values(static_cast<std::size_t>(gy) * gx,
                             std::numeric_limits<double>::quiet_NaN());
  for (int oy = 0; oy < gy; ++oy)
    for (int ox = 0; ox < gx; ++ox) {
      bool touches = false;
      for (int y = 0; y < kSsimWindow && !touches; ++y)
        for (int x = 0; x < kSsimWindow; ++x)
          if (region[static_cast<std::size_t>(oy + y) * nx + ox + x] > 0) {
            touches = true;
            break;
          }
      if (!touches) continue;
      double mu1 = 0.0, mu2 = 0.0;
      for (int y = 0; y < kSsimWindow; ++y)
        for (int x = 0; x < kSsimWindow; ++x) {
          const double wv = w[y * kSsimWindow + x];
          const std::size_t p = static_cast<std::size_t>(oy + y) * nx + ox + x;
          mu1 += wv * a[p];
          mu2 += wv * b[p];
        }
      double var1 = 0.0, var2 = 0.0, cov = 0.0;
      for (int y = 0; y < kSsimWindow; ++y)
        for (int x = 0; x < kSsimWindow; ++x) {
          const double wv = w[y * kSsimWindow + x];
          const std::size_t p = static_cast<std::size_t>(oy + y) * nx + ox + x;
          const double d1 = a[p] - mu1;
          const double d2 = b[p] - mu2;
          var1 += wv * d1 * d1;
          var2 += wv * d2 * d2;
          cov += wv * d1 * d2;
        }
      values[static_cast<std::size_t>(oy) * gx + ox] =
          ((2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)) /
          ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2));
    }
  return values;
}

double ssim_percent(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<std::int32_t>& region, int ny, int nx) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < region.size(); ++p) {
    if (region[p] <= 0) continue;
    lo = std::min(lo, b[p]);
    hi = std::max(hi, b[p]);
  }
  if (!(hi >= lo)) fail(ErrorCode::invalid_argument, "ssim: empty region");
  const std::vector<double> values = ssim_map(a, b, region, ny, nx, hi - lo);
  double acc = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    acc += v;
    ++count;
  }
  if (count == 0) fail(ErrorCode::invalid_argument, "ssim: no window intersects region");
  return acc / count * 100.0;
}

double ssim_percent(const ParamMaps& est, const ParamMaps& ref) {
  if (est.ny != ref.ny || est.nx != ref.nx)
    fail(ErrorCode::shape_mismatch, "ssim: map shape mismatch");
  return ssim_percent(t2_as_double(est), t2_as_double(ref), ref.roi_labels, ref.ny, ref.nx);
}

std::map<int, RoiStat> roi_stats(const std::vector<float>& t2_ms,
                                 const std::vector<std::int32_t>& roi_labels) {
  if (t2_ms.size() != roi_labels.size()) fail(ErrorCode::shape_mismatch, "roi_stats: size mismatch");
  std::map<int, std::vector<double>> groups;
  for (std::size_t p = 0; p < t2_ms.size(); ++p)
    if (roi_labels[p] > 0) groups[roi_labels[p]].push_back(t2_ms[p]);
  std::map<int, RoiStat> stats;
  for (auto& [label, values] : groups) {
    RoiStat s;
    s.n = static_cast<int>(values.size());
    double acc = 0.0;
    for (double v : values) acc += v;
    s.mean = acc / s.n;
    s.sd = sample_sd(values, s.mean);
    stats[label] = s;
  }
  return stats;
}

BlandAltman bland_altman(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) fail(ErrorCode::invalid_argument, "bland_altman: no pairs");
  std::vector<double> diffs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) diffs[i] = pairs[i].first - pairs[i].second;
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  const double sd = sample_sd(diffs, mean);
  return {mean, mean - 1.96 * sd, mean + 1.96 * sd};
}

namespace {

// Signed ranks with zeros dropped and average ranks for ties, scaled by 2
// so all ranks are integers.
struct SignedRanks {
  std::vector<int> rank2;  // 2 * rank of |d_i|
  std::vector<bool> positive;
  std::vector<int> tie_sizes;
};

SignedRanks signed_ranks(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> diffs;
  diffs.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    const double d = a - b;
    if (d != 0.0) diffs.push_back(d);
  }
  std::vector<std::size_t> order(diffs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });
  SignedRanks r;
  r.rank2.resize(diffs.size());
  r.positive.resize(diffs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
      ++j;
    // Average rank over positions i..j (1-based), doubled to stay integral.
    const int rank2 = static_cast<int>(i + j) + 2;
    for (std::size_t k = i; k <= j; ++k) {
      r.rank2[order[k]] = rank2;
      r.positive[order[k]] = diffs[order[k]] > 0.0;
    }
    r.tie_sizes.push_back(static_cast<int>(j - i + 1));
    i = j + 1;
  }
  return r;
}

}  // namespace

double wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
  const SignedRanks r = signed_ranks(pairs);
  const int n = static_cast<int>(r.rank2.size());
  if (n == 0) return 1.0;  // all differences zero

  if (n <= 12) {
    // Exact null distribution of W+ (doubled ranks) by subset-sum counting.
    int total2 = 0;
    for (int v : r.rank2) total2 += v;
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    for (int v : r.rank2)
      for (int s = total2; s >= v; --s) count[s] += count[s - v];
    int w2 = 0;
    for (int i = 0; i < n; ++i)
      if (r.positive[i]) w2 += r.rank2[i];
    const int wmin2 = std::min(w2, total2 - w2);
    double low = 0.0, high = 0.0;
    for (int s = 0; s <= wmin2; ++s) low += count[s];
    for (int s = total2 - wmin2; s <= total2; ++s) high += count[s];
    const double denom = std::ldexp(1.0, n);  // 2^n
    return std::min(1.0, (low + high) / denom);
  }

  // Normal approximation with tie correction.
  double w_plus = 0.0;
  for (int i = 0; i < n; ++i)
    if (r.positive[i]) w_plus += r.rank2[i] / 2.0;
  const double mu = n * (n + 1) / 4.0;
  double tie_adj = 0.0;
  for (int t : r.tie_sizes) tie_adj += static_cast<double>(t) * t * t - t;
  const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_adj / 48.0;
  if (var <= 0.0) return 1.0;
  const double z = (w_plus - mu) / std::sqrt(var);
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

EvalReport make_report(const std::vector<ParamMaps>& references,
                       const std::vector<MethodResult>& methods,
                       const std::string& out_prefix) {
  if (references.empty()) fail(ErrorCode::invalid_argument, "report: no reference maps");
  EvalReport report;

  // Reference ROI statistics aggregated across phantoms.
  {
    std::map<int, std::vector<double>> roi_means;
    for (const ParamMaps& ref : references)
      for (const auto& [label, stat] : roi_stats(ref.t2_ms, ref.roi_labels))
        roi_means[label].push_back(stat.mean);
    for (const auto& [label, values] : roi_means)
      report.reference_roi[label] = aggregate(values);
  }

  for (const MethodResult& method : methods) {
    if (method.maps.size() != references.size())
      fail(ErrorCode::shape_mismatch, "report: method map count != reference count");
    MethodEval eval;
    eval.method = method.method;
    eval.r = method.r;
    std::vector<double> nrmses, ssims;
    std::map<int, std::vector<double>> roi_means;
    std::vector<std::pair<double, double>> roi_pairs;  // est vs ref per (phantom, label)
    for (std::size_t i = 0; i < references.size(); ++i) {
      const ParamMaps& ref = references[i];
      const ParamMaps& est = method.maps[i];
      nrmses.push_back(nrmse_percent(est, ref));
      ssims.push_back(ssim_percent(est, ref));
      const auto ref_stats = roi_stats(ref.t2_ms, ref.roi_labels);
      // Evaluate estimates over the reference regions.
      const auto est_stats = roi_stats(est.t2_ms, ref.roi_labels);
      for (const auto& [label, rstat] : ref_stats) {
        auto it = est_stats.find(label);
        if (it == est_stats.end()) continue;
        roi_means[label].push_back(it->second.mean);
        roi_pairs.emplace_back(it->second.mean, rstat.mean);
      }
    }
    eval.nrmse_percent = aggregate(nrmses);
    eval.ssim_percent = aggregate(ssims);
    for (const auto& [label, values] : roi_means)
      eval.roi_mean_t2[label] = aggregate(values);
    eval.agreement = bland_altman(roi_pairs);
    eval.wilcoxon_p = wilcoxon_signed_rank(roi_pairs);
    report.methods.push_back(std::move(eval));
  }

  if (!out_prefix.empty()) {
    write_report_csv(out_prefix + "report.csv", report);
    const ParamMaps& ref0 = references.front();
    write_pgm(out_prefix + "reference_t2.pgm", t2_preview(ref0), ref0.ny, ref0.nx);
    for (const MethodResult& method : methods) {
      const ParamMaps& est0 = method.maps.front();
      std::ostringstream stem;
      stem << out_prefix << method.method << "_r" << method.r;
      write_pgm(stem.str() + "_t2.pgm", t2_preview(est0), est0.ny, est0.nx);
      write_pgm(stem.str() + "_residual.pgm", residual_preview(est0, ref0), est0.ny, est0.nx);
    }
  }
  return report;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void push_row(std::vector<CsvRow>& rows, const std::string& method, double r,
              const std::string& metric, const std::string& roi, double value) {
  CsvRow row;
  row.method = method;
  row.r = r;
  row.metric = metric;
  row.roi = roi;
  row.value = value;
  rows.push_back(row);
}

void push_stat_row(std::vector<CsvRow>& rows, const std::string& method, double r,
                   const std::string& metric, const std::string& roi, const AggStat& s) {
  CsvRow row;
  row.method = method;
  row.r = r;
  row.metric = metric;
  row.roi = roi;
  row.value = s.mean;
  row.sd = s.sd;
  row.n = s.n;
  row.has_sd = true;
  row.has_n = true;
  rows.push_back(row);
}

}  // namespace

std::vector<CsvRow> report_rows(const EvalReport& report) {
  std::vector<CsvRow> rows;
  for (const auto& [label, stat] : report.reference_roi)
    push_stat_row(rows, "reference", 1.0, "roi_mean_t2", std::to_string(label), stat);
  for (const MethodEval& m : report.methods) {
    push_stat_row(rows, m.method, m.r, "nrmse_percent", "all", m.nrmse_percent);
    push_stat_row(rows, m.method, m.r, "ssim_percent", "all", m.ssim_percent);
    for (const auto& [label, stat] : m.roi_mean_t2)
      push_stat_row(rows, m.method, m.r, "roi_mean_t2", std::to_string(label), stat);
    push_row(rows, m.method, m.r, "bland_altman_mean", "all", m.agreement.mean_diff);
    push_row(rows, m.method, m.r, "bland_altman_lower", "all", m.agreement.lower);
    push_row(rows, m.method, m.r, "bland_altman_upper", "all", m.agreement.upper);
    push_row(rows, m.method, m.r, "wilcoxon_p", "all", m.wilcoxon_p);
  }
  return rows;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io_failure, "cannot open for writing: " + path);
  out << "method,r,metric,roi,value,sd,n\n";
  for (const CsvRow& row : report_rows(report)) {
    out << row.method << ',' << format_double(row.r) << ',' << row.metric << ','
        << row.roi << ',' << format_double(row.value) << ',';
    if (row.has_sd) out << format_double(row.sd);
    out << ',';
    if (row.has_n) out << row.n;
    out << '\n';
  }
  if (!out) fail(ErrorCode::io_failure, "write failed: " + path);
}

std::vector<CsvRow> parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_failure, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "method,r,metric,roi,value,sd,n")
    fail(ErrorCode::bad_header, "unexpected CSV header: " + path);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    while (fields.size() < 7) fields.emplace_back();
    CsvRow row;
    row.method = fields[0];
    row.r = std::stod(fields[1]);
    row.metric = fields[2];
    row.roi = fields[3];
    row.value = std::stod(fields[4]);
    row.has_sd = !fields[5].empty();
    if (row.has_sd) row.sd = std::stod(fields[5]);
    row.has_n = !fields[6].empty();
    if (row.has_n) row.n = std::stoi(fields[6]);
    rows.push_back(row);
  }
  return rows;
}

ReportTable report_to_table(const EvalReport& report) {
  ReportTable table;
  table.columns = {"r", "value", "sd", "n"};
  for (const CsvRow& row : report_rows(report)) {
    table.row_labels.push_back(row.method + ":" + row.metric + ":" + row.roi);
    table.values.push_back(static_cast<float>(row.r));
    table.values.push_back(static_cast<float>(row.value));
    table.values.push_back(static_cast<float>(row.has_sd ? row.sd : 0.0));
    table.values.push_back(static_cast<float>(row.has_n ? row.n : 0));
  }
  return table;
}

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               int ny, int nx) {
  if (pixels.size() != static_cast<std::size_t>(ny) * nx)
    fail(ErrorCode::shape_mismatch, "pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_failure, "cannot open for writing: " + path);
  out << "P5\n" << nx << ' ' << ny << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(ErrorCode::io_failure, "write failed: " + path);
}

std::vector<std::uint8_t> t2_preview(const ParamMaps& maps, double window_ms) {
  std::vector<std::uint8_t> pixels(maps.plane());
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    const double g = maps.i0[p] > 0.0f ? maps.t2_ms[p] / window_ms * 255.0 : 0.0;
    pixels[p] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  return pixels;
}

std::vector<std::uint8_t> residual_preview(const ParamMaps& est, const ParamMaps& ref,
                                           double window_ms) {
  if (est.plane() != ref.plane()) fail(ErrorCode::shape_mismatch, "preview: shape mismatch");
  std::vector<std::uint8_t> pixels(ref.plane());
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    const double diff = static_cast<double>(est.t2_ms[p]) - ref.t2_ms[p];
    const double g = 128.0 + diff / window_ms * 127.0;
    pixels[p] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  return pixels;
}

}  // namespace qmt
