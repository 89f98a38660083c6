#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "qmt/container.hpp"
#include "qmt/rng.hpp"
#include "qmt/sampling.hpp"

using namespace qmt;

namespace {

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

EchoSeries small_series() {
  EchoSeries s;
  s.ny = 2;
  s.nx = 2;
  s.te_ms = {7.0, 16.0};
  Rng rng(42);
  s.data.resize(8);
  for (auto& v : s.data)
    v = cfloat(static_cast<float>(rng.normal()), static_cast<float>(rng.normal()));
  return s;
}

}  // namespace

TEST_CASE("echo series round-trips bit-exactly") {
  const std::string path = temp_path("qmt_echoes.qmt");
  const EchoSeries s = small_series();
  write_container(path, s);
  const EchoSeries back = read_echoes(path);
  CHECK(back.ny == s.ny);
  CHECK(back.nx == s.nx);
  CHECK(back.te_ms == s.te_ms);
  CHECK(back.data == s.data);
  CHECK(peek_kind(path) == ContainerKind::echoes);
}

TEST_CASE("header preserves te_ms to full precision") {
  const std::string path = temp_path("qmt_te.qmt");
  EchoSeries s = small_series();
  s.te_ms = {7.000000000000123, 16.999999999999996};
  write_container(path, s);
  CHECK(read_echoes(path).te_ms == s.te_ms);
}

TEST_CASE("bad magic is a distinct error") {
  const std::string path = temp_path("qmt_badmagic.qmt");
  write_container(path, small_series());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('0');  // "QMT0"
  }
  try {
    read_echoes(path);
    FAIL("expected bad magic");
  } catch (const QmtError& e) {
    CHECK(e.code() == ErrorCode::bad_magic);
  }
}

TEST_CASE("truncated payload is a distinct error") {
  const std::string path = temp_path("qmt_trunc.qmt");
  write_container(path, small_series());
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 1);
  try {
    read_echoes(path);
    FAIL("expected truncated payload");
  } catch (const QmtError& e) {
    CHECK(e.code() == ErrorCode::truncated_payload);
  }
}

TEST_CASE("overlong payload is a shape mismatch") {
  const std::string path = temp_path("qmt_overlong.qmt");
  write_container(path, small_series());
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.put('\0');
  }
  try {
    read_echoes(path);
    FAIL("expected shape mismatch");
  } catch (const QmtError& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
  }
}

TEST_CASE("reading the wrong kind fails") {
  const std::string path = temp_path("qmt_kind.qmt");
  write_container(path, small_series());
  try {
    read_maps(path);
    FAIL("expected bad kind");
  } catch (const QmtError& e) {
    CHECK(e.code() == ErrorCode::bad_kind);
  }
}

TEST_CASE("kspace and mask library round-trip") {
  const std::string path = temp_path("qmt_kspace.qmt");
  const MaskSet mask = make_maskset(8, 2, 2.0, 0.25, 11);
  KSpaceSet k;
  k.ny = 8;
  k.nx = 4;
  k.te_ms = {7.0, 16.0};
  k.mask = mask;
  k.data.assign(2 * 8 * 4, cfloat(0.0f, 0.0f));
  for (int j = 0; j < 2; ++j)
    for (int ky = 0; ky < 8; ++ky) {
      if (!mask.sampled(j, ky)) continue;
      for (int kx = 0; kx < 4; ++kx)
        k.data[(static_cast<std::size_t>(j) * 8 + ky) * 4 + kx] =
            cfloat(static_cast<float>(j + 1), static_cast<float>(ky - kx));
    }
  write_container(path, k);
  const KSpaceSet back = read_kspace(path);
  CHECK(back.data == k.data);
  CHECK(back.mask.lines == k.mask.lines);
  CHECK(back.mask.seed == k.mask.seed);

  const std::string lib_path = temp_path("qmt_lib.qmt");
  const auto library = make_mask_library(3, 16, 4, 4.0, 0.1, 5);
  write_container(lib_path, library);
  const auto lib_back = read_maskset_library(lib_path);
  REQUIRE(lib_back.size() == library.size());
  for (std::size_t i = 0; i < library.size(); ++i) {
    CHECK(lib_back[i].lines == library[i].lines);
    CHECK(lib_back[i].seed == library[i].seed);
  }
}

TEST_CASE("maps, netparams, and report round-trip") {
  const std::string path = temp_path("qmt_maps.qmt");
  ParamMaps maps;
  maps.ny = 2;
  maps.nx = 3;
  maps.i0 = {0.0f, 0.5f, 1.0f, 0.25f, 0.0f, 0.75f};
  maps.t2_ms = {1.0f, 30.5f, 46.0f, 27.5f, 1.0f, 39.6f};
  maps.roi_labels = {0, 1, 2, 1, 0, 3};
  write_container(path, maps);
  const ParamMaps maps_back = read_maps(path);
  CHECK(maps_back.i0 == maps.i0);
  CHECK(maps_back.t2_ms == maps.t2_ms);
  CHECK(maps_back.roi_labels == maps.roi_labels);

  const std::string net_path = temp_path("qmt_net.qmt");
  NetParamsBlob blob;
  blob.spec_json = R"({"levels":2})";
  blob.theta = {1.0f, -2.5f, 0.125f};
  write_container(net_path, blob);
  const NetParamsBlob net_back = read_netparams(net_path);
  CHECK(net_back.theta == blob.theta);
  CHECK(net_back.spec_json == blob.spec_json);

  const std::string report_path = temp_path("qmt_report.qmt");
  ReportTable table;
  table.columns = {"r", "value"};
  table.row_labels = {"a", "b"};
  table.values = {5.0f, 13.25f, 8.0f, -1.5f};
  write_container(report_path, table);
  const ReportTable table_back = read_report(report_path);
  CHECK(table_back.columns == table.columns);
  CHECK(table_back.row_labels == table.row_labels);
  CHECK(table_back.values == table.values);
}

TEST_CASE("normalize_dataset divides by the max magnitude") {
  EchoSeries s = small_series();
  s.data = {cfloat(4.0f, 0.0f), cfloat(0.0f, -2.0f), cfloat(1.0f, 1.0f), cfloat(0.5f, 0.0f),
            cfloat(-4.0f, 0.0f), cfloat(2.0f, 0.0f), cfloat(0.0f, 0.0f), cfloat(3.0f, 0.0f)};
  double scale = 0.0;
  const EchoSeries out = normalize_dataset(s, &scale);
  CHECK(scale == doctest::Approx(4.0));
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    CHECK(out.data[i].real() == doctest::Approx(s.data[i].real() / 4.0f));
    CHECK(out.data[i].imag() == doctest::Approx(s.data[i].imag() / 4.0f));
  }
}

TEST_CASE("normalize_dataset is an exact identity at max 1") {
  EchoSeries s = small_series();
  s.data[0] = cfloat(1.0f, 0.0f);
  for (std::size_t i = 1; i < s.data.size(); ++i)
    s.data[i] = cfloat(0.25f * static_cast<float>(i % 3), 0.0f);
  double scale = 0.0;
  const EchoSeries out = normalize_dataset(s, &scale);
  CHECK(scale == 1.0);
  CHECK(out.data == s.data);
}

TEST_CASE("normalize_dataset is idempotent and scale equivariant") {
  Rng rng(7);
  EchoSeries s = small_series();
  for (auto& v : s.data)
    v = cfloat(static_cast<float>(rng.normal()), static_cast<float>(rng.normal()));

  double scale1 = 0.0;
  const EchoSeries once = normalize_dataset(s, &scale1);
  double scale2 = 0.0;
  const EchoSeries twice = normalize_dataset(once, &scale2);
  CHECK(scale2 == doctest::Approx(1.0).epsilon(1e-6));

  // c * x normalizes to the same data.
  const float c = 3.5f;
  EchoSeries scaled = s;
  for (auto& v : scaled.data) v *= c;
  double scale3 = 0.0;
  const EchoSeries from_scaled = normalize_dataset(scaled, &scale3);
  CHECK(scale3 == doctest::Approx(static_cast<double>(c) * scale1).epsilon(1e-6));
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    CHECK(from_scaled.data[i].real() ==
          doctest::Approx(once.data[i].real()).epsilon(1e-5));
    CHECK(from_scaled.data[i].imag() ==
          doctest::Approx(once.data[i].imag()).epsilon(1e-5));
  }
}

TEST_CASE("all-zero input is a degenerate dataset") {
  EchoSeries s = small_series();
  for (auto& v : s.data) v = cfloat(0.0f, 0.0f);
  CHECK_THROWS_WITH_AS(normalize_dataset(s, nullptr), "degenerate dataset", QmtError);
}
