#include "qmt/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace qmt {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "container payloads are IEEE-754 float32");

namespace {

constexpr char kMagic[4] = {'Q', 'M', 'T', '1'};

using json = nlohmann::json;

std::size_t shape_product(const json& shape) {
  std::size_t n = 1;
  for (const auto& d : shape) {
    auto v = d.get<std::int64_t>();
    if (v <= 0) fail(ErrorCode::bad_header, "non-positive shape dimension");
    n *= static_cast<std::size_t>(v);
  }
  return n;
}

void write_file(const std::string& path, const json& header, const float* payload,
                std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_failure, "cannot open for writing: " + path);
  const std::string head = header.dump();
  const std::uint32_t head_len = static_cast<std::uint32_t>(head.size());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&head_len), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(count * 4));
  if (!out) fail(ErrorCode::io_failure, "write failed: " + path);
}

struct RawContainer {
  json header;
  std::vector<float> payload;
};

json read_header_impl(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::bad_magic, "bad magic: " + path);
  std::uint32_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), 4);
  if (in.gcount() != 4) fail(ErrorCode::bad_header, "missing header length: " + path);
  std::string head(head_len, '\0');
  in.read(head.data(), head_len);
  if (in.gcount() != static_cast<std::streamsize>(head_len))
    fail(ErrorCode::bad_header, "truncated header: " + path);
  json header = json::parse(head, nullptr, false);
  if (header.is_discarded() || !header.is_object())
    fail(ErrorCode::bad_header, "header is not valid JSON: " + path);
  return header;
}

RawContainer read_file(const std::string& path, ContainerKind expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_failure, "cannot open: " + path);
  RawContainer raw;
  raw.header = read_header_impl(in, path);
  if (!raw.header.contains("kind") || !raw.header.contains("shape") ||
      !raw.header.contains("dtype"))
    fail(ErrorCode::bad_header, "header missing kind/shape/dtype: " + path);
  const ContainerKind kind = kind_from_name(raw.header["kind"].get<std::string>());
  if (kind != expected)
    fail(ErrorCode::bad_kind, std::string("expected kind ") + kind_name(expected) +
                                  ", found " + kind_name(kind) + ": " + path);
  const std::string dtype = raw.header["dtype"].get<std::string>();
  std::size_t scalars = shape_product(raw.header["shape"]);
  if (dtype == "complex64")
    scalars *= 2;
  else if (dtype != "float32")
    fail(ErrorCode::bad_header, "unknown dtype: " + dtype);
  raw.payload.resize(scalars);
  in.read(reinterpret_cast<char*>(raw.payload.data()),
          static_cast<std::streamsize>(scalars * 4));
  if (in.gcount() != static_cast<std::streamsize>(scalars * 4))
    fail(ErrorCode::truncated_payload, "truncated payload: " + path);
  char extra_byte;
  in.read(&extra_byte, 1);
  if (!in.eof())
    fail(ErrorCode::shape_mismatch, "payload longer than declared shape: " + path);
  return raw;
}

json base_header(ContainerKind kind, std::initializer_list<std::int64_t> shape,
                 const char* dtype, const json& extra) {
  json header = extra.is_null() ? json::object() : extra;
  header["kind"] = kind_name(kind);
  header["shape"] = shape;
  header["dtype"] = dtype;
  return header;
}

json mask_to_json(const MaskSet& m) {
  json j;
  j["ny"] = m.ny;
  j["t"] = m.t;
  j["r_target"] = m.r_target;
  j["center_frac"] = m.center_frac;
  j["alpha"] = m.alpha;
  j["seed"] = m.seed;
  std::vector<std::string> rows(m.t);
  for (int e = 0; e < m.t; ++e) {
    rows[e].resize(m.ny);
    for (int k = 0; k < m.ny; ++k) rows[e][k] = m.sampled(e, k) ? '1' : '0';
  }
  j["lines"] = rows;
  return j;
}

MaskSet mask_from_json(const json& j) {
  MaskSet m;
  m.ny = j.at("ny").get<int>();
  m.t = j.at("t").get<int>();
  m.r_target = j.at("r_target").get<double>();
  m.center_frac = j.at("center_frac").get<double>();
  m.alpha = j.at("alpha").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& rows = j.at("lines");
  if (static_cast<int>(rows.size()) != m.t)
    fail(ErrorCode::bad_header, "mask lines row count mismatch");
  m.lines.assign(static_cast<std::size_t>(m.t) * m.ny, 0);
  for (int e = 0; e < m.t; ++e) {
    const std::string row = rows[e].get<std::string>();
    if (static_cast<int>(row.size()) != m.ny)
      fail(ErrorCode::bad_header, "mask lines row length mismatch");
    for (int k = 0; k < m.ny; ++k)
      m.lines[static_cast<std::size_t>(e) * m.ny + k] = row[k] == '1' ? 1 : 0;
  }
  m.validate();
  return m;
}

std::vector<float> complex_payload(const std::vector<cfloat>& data) {
  std::vector<float> payload(data.size() * 2);
  std::memcpy(payload.data(), data.data(), payload.size() * 4);
  return payload;
}

std::vector<cfloat> complex_from_payload(const std::vector<float>& payload) {
  std::vector<cfloat> data(payload.size() / 2);
  std::memcpy(data.data(), payload.data(), payload.size() * 4);
  return data;
}

}  // namespace

const char* kind_name(ContainerKind kind) {
  switch (kind) {
    case ContainerKind::echoes: return "echoes";
    case ContainerKind::kspace: return "kspace";
    case ContainerKind::maskset: return "maskset";
    case ContainerKind::maps: return "maps";
    case ContainerKind::netparams: return "netparams";
    case ContainerKind::report: return "report";
  }
  fail(ErrorCode::bad_kind, "unknown container kind");
}

ContainerKind kind_from_name(const std::string& name) {
  if (name == "echoes") return ContainerKind::echoes;
  if (name == "kspace") return ContainerKind::kspace;
  if (name == "maskset") return ContainerKind::maskset;
  if (name == "maps") return ContainerKind::maps;
  if (name == "netparams") return ContainerKind::netparams;
  if (name == "report") return ContainerKind::report;
  fail(ErrorCode::bad_kind, "unknown container kind: " + name);
}

ContainerKind peek_kind(const std::string& path) {
  return kind_from_name(read_header(path).at("kind").get<std::string>());
}

nlohmann::json read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_failure, "cannot open: " + path);
  return read_header_impl(in, path);
}

void write_container(const std::string& path, const EchoSeries& series,
                     const nlohmann::json& extra) {
  series.validate();
  json header = base_header(ContainerKind::echoes,
                            {series.echoes(), series.ny, series.nx}, "complex64", extra);
  header["te_ms"] = series.te_ms;
  const auto payload = complex_payload(series.data);
  write_file(path, header, payload.data(), payload.size());
}

EchoSeries read_echoes(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::echoes);
  EchoSeries series;
  const auto& shape = raw.header["shape"];
  if (shape.size() != 3) fail(ErrorCode::bad_header, "echoes shape must be [t,ny,nx]");
  series.ny = shape[1].get<int>();
  series.nx = shape[2].get<int>();
  series.te_ms = raw.header.at("te_ms").get<std::vector<double>>();
  if (static_cast<int>(series.te_ms.size()) != shape[0].get<int>())
    fail(ErrorCode::shape_mismatch, "te_ms length does not match echo count");
  series.data = complex_from_payload(raw.payload);
  series.validate();
  return series;
}

void write_container(const std::string& path, const KSpaceSet& kspace,
                     const nlohmann::json& extra) {
  kspace.validate();
  json header = base_header(ContainerKind::kspace,
                            {kspace.echoes(), kspace.ny, kspace.nx}, "complex64", extra);
  header["te_ms"] = kspace.te_ms;
  header["mask"] = mask_to_json(kspace.mask);
  const auto payload = complex_payload(kspace.data);
  write_file(path, header, payload.data(), payload.size());
}

KSpaceSet read_kspace(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::kspace);
  KSpaceSet k;
  const auto& shape = raw.header["shape"];
  if (shape.size() != 3) fail(ErrorCode::bad_header, "kspace shape must be [t,ny,nx]");
  k.ny = shape[1].get<int>();
  k.nx = shape[2].get<int>();
  k.te_ms = raw.header.at("te_ms").get<std::vector<double>>();
  k.mask = mask_from_json(raw.header.at("mask"));
  k.data = complex_from_payload(raw.payload);
  k.validate();
  return k;
}

void write_container(const std::string& path, const std::vector<MaskSet>& library,
                     const nlohmann::json& extra) {
  if (library.empty()) fail(ErrorCode::invalid_argument, "empty mask library");
  for (const MaskSet& m : library) {
    m.validate();
    if (m.ny != library.front().ny || m.t != library.front().t)
      fail(ErrorCode::shape_mismatch, "mask library sets must share one shape");
  }
  const int n_sets = static_cast<int>(library.size());
  const int t = library.front().t;
  const int ny = library.front().ny;
  json header = base_header(ContainerKind::maskset, {n_sets, t, ny}, "float32", extra);
  json sets = json::array();
  for (const MaskSet& m : library) {
    json j = mask_to_json(m);
    j.erase("lines");  // lines live in the payload
    sets.push_back(j);
  }
  header["sets"] = sets;
  std::vector<float> payload;
  payload.reserve(static_cast<std::size_t>(n_sets) * t * ny);
  for (const MaskSet& m : library)
    for (std::uint8_t v : m.lines) payload.push_back(static_cast<float>(v));
  write_file(path, header, payload.data(), payload.size());
}

std::vector<MaskSet> read_maskset_library(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::maskset);
  const auto& shape = raw.header["shape"];
  if (shape.size() != 3) fail(ErrorCode::bad_header, "maskset shape must be [sets,t,ny]");
  const int n_sets = shape[0].get<int>();
  const int t = shape[1].get<int>();
  const int ny = shape[2].get<int>();
  const auto& sets = raw.header.at("sets");
  if (static_cast<int>(sets.size()) != n_sets)
    fail(ErrorCode::bad_header, "mask library set metadata count mismatch");
  std::vector<MaskSet> library(n_sets);
  for (int s = 0; s < n_sets; ++s) {
    MaskSet& m = library[s];
    m.ny = sets[s].at("ny").get<int>();
    m.t = sets[s].at("t").get<int>();
    m.r_target = sets[s].at("r_target").get<double>();
    m.center_frac = sets[s].at("center_frac").get<double>();
    m.alpha = sets[s].at("alpha").get<double>();
    m.seed = sets[s].at("seed").get<std::uint64_t>();
    if (m.ny != ny || m.t != t) fail(ErrorCode::shape_mismatch, "mask library shape mismatch");
    m.lines.resize(static_cast<std::size_t>(t) * ny);
    const float* src = raw.payload.data() + static_cast<std::size_t>(s) * t * ny;
    for (std::size_t i = 0; i < m.lines.size(); ++i)
      m.lines[i] = src[i] != 0.0f ? 1 : 0;
    m.validate();
  }
  return library;
}

void write_container(const std::string& path, const ParamMaps& maps,
                     const nlohmann::json& extra) {
  maps.validate();
  json header = base_header(ContainerKind::maps, {3, maps.ny, maps.nx}, "float32", extra);
  header["planes"] = {"i0", "t2_ms", "roi_labels"};
  const std::size_t n = maps.plane();
  std::vector<float> payload;
  payload.reserve(3 * n);
  payload.insert(payload.end(), maps.i0.begin(), maps.i0.end());
  payload.insert(payload.end(), maps.t2_ms.begin(), maps.t2_ms.end());
  for (std::int32_t label : maps.roi_labels) payload.push_back(static_cast<float>(label));
  write_file(path, header, payload.data(), payload.size());
}

ParamMaps read_maps(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::maps);
  const auto& shape = raw.header["shape"];
  if (shape.size() != 3 || shape[0].get<int>() != 3)
    fail(ErrorCode::bad_header, "maps shape must be [3,ny,nx]");
  ParamMaps maps;
  maps.ny = shape[1].get<int>();
  maps.nx = shape[2].get<int>();
  const std::size_t n = maps.plane();
  maps.i0.assign(raw.payload.begin(), raw.payload.begin() + n);
  maps.t2_ms.assign(raw.payload.begin() + n, raw.payload.begin() + 2 * n);
  maps.roi_labels.resize(n);
  for (std::size_t p = 0; p < n; ++p)
    maps.roi_labels[p] = static_cast<std::int32_t>(raw.payload[2 * n + p]);
  maps.validate();
  return maps;
}

void write_container(const std::string& path, const NetParamsBlob& net,
                     const nlohmann::json& extra) {
  if (net.theta.empty()) fail(ErrorCode::invalid_argument, "empty parameter vector");
  json spec = json::parse(net.spec_json, nullptr, false);
  if (spec.is_discarded()) fail(ErrorCode::bad_header, "net spec is not valid JSON");
  json header = base_header(ContainerKind::netparams,
                            {static_cast<std::int64_t>(net.theta.size())}, "float32", extra);
  header["netspec"] = spec;
  write_file(path, header, net.theta.data(), net.theta.size());
}

NetParamsBlob read_netparams(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::netparams);
  NetParamsBlob net;
  net.spec_json = raw.header.at("netspec").dump();
  net.theta = std::move(raw.payload);
  return net;
}

void write_container(const std::string& path, const ReportTable& table,
                     const nlohmann::json& extra) {
  if (table.columns.empty()) fail(ErrorCode::invalid_argument, "report needs columns");
  if (table.values.size() % table.columns.size() != 0)
    fail(ErrorCode::shape_mismatch, "report values not divisible by column count");
  const std::int64_t rows = static_cast<std::int64_t>(table.rows());
  if (!table.row_labels.empty() && table.row_labels.size() != table.rows())
    fail(ErrorCode::shape_mismatch, "report row label count mismatch");
  json header = base_header(ContainerKind::report,
                            {rows, static_cast<std::int64_t>(table.columns.size())},
                            "float32", extra);
  header["columns"] = table.columns;
  header["row_labels"] = table.row_labels;
  write_file(path, header, table.values.data(), table.values.size());
}

ReportTable read_report(const std::string& path) {
  RawContainer raw = read_file(path, ContainerKind::report);
  ReportTable table;
  table.columns = raw.header.at("columns").get<std::vector<std::string>>();
  table.row_labels = raw.header.at("row_labels").get<std::vector<std::string>>();
  table.values.assign(raw.payload.begin(), raw.payload.end());
  return table;
}

}  // namespace qmt
