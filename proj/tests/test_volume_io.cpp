#include <doctest.h>

#include <laminar/error.hpp>
#include <laminar/volume_io.hpp>

#include "test_support.hpp"

#include <cstring>
#include <fstream>
#include <random>

using namespace laminar;
using namespace laminar::io;

namespace {

template <class T>
void put(std::vector<std::uint8_t>& b, std::size_t offset, T value) {
  std::memcpy(b.data() + offset, &value, sizeof(T));
}

// Hand-assembled single-file NIfTI-1 header, laid out field by field.
std::vector<std::uint8_t> handmade_header(std::int16_t nx, std::int16_t ny, std::int16_t nz, std::int16_t datatype,
                                          std::int16_t bitpix) {
  std::vector<std::uint8_t> b(352, 0);
  put<std::int32_t>(b, 0, 348);          // sizeof_hdr
  put<std::int16_t>(b, 40, 3);           // dim[0]
  put<std::int16_t>(b, 42, nx);          // dim[1]
  put<std::int16_t>(b, 44, ny);          // dim[2]
  put<std::int16_t>(b, 46, nz);          // dim[3]
  put<std::int16_t>(b, 48, 1);           // dim[4]
  put<std::int16_t>(b, 70, datatype);    // datatype
  put<std::int16_t>(b, 72, bitpix);      // bitpix
  put<float>(b, 76, 1.0f);               // pixdim[0]
  put<float>(b, 80, 0.5f);               // pixdim[1]
  put<float>(b, 84, 0.75f);              // pixdim[2]
  put<float>(b, 88, 2.0f);               // pixdim[3]
  put<float>(b, 108, 352.0f);            // vox_offset
  put<float>(b, 112, 1.0f);              // scl_slope
  std::memcpy(b.data() + 344, "n+1\0", 4);
  return b;
}

std::string error_message(const std::vector<std::uint8_t>& bytes, ErrorKind* kind) {
  try {
    decode_volume(bytes);
  } catch (const Error& e) {
    *kind = e.kind();
    return e.what();
  }
  return {};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("hand-assembled uint8 file decodes in x-fastest order") {
  auto b = handmade_header(2, 2, 2, 2, 8);
  for (std::uint8_t i = 0; i < 8; ++i) b.push_back(i);
  VolumeHeader h;
  const auto v = decode_volume(b, &h);
  CHECK(v.dims() == Index3{2, 2, 2});
  CHECK(v.spacing() == Vec3{0.5, 0.75, 2.0});
  CHECK(h.datatype == Datatype::uint8);
  CHECK(v.at(0, 0, 0) == 0.0);
  CHECK(v.at(1, 0, 0) == 1.0);
  CHECK(v.at(0, 1, 0) == 2.0);
  CHECK(v.at(1, 1, 0) == 3.0);
  CHECK(v.at(0, 0, 1) == 4.0);
  CHECK(v.at(1, 1, 1) == 7.0);
}

TEST_CASE("hand-assembled int16 file with scaling") {
  auto b = handmade_header(3, 1, 1, 4, 16);
  put<float>(b, 112, 2.0f);
  put<float>(b, 116, -1.0f);
  for (std::int16_t x : {std::int16_t(-5), std::int16_t(0), std::int16_t(300)}) {
    b.resize(b.size() + 2);
    put<std::int16_t>(b, b.size() - 2, x);
  }
  const auto v = decode_volume(b);
  CHECK(v[0] == -11.0);
  CHECK(v[1] == -1.0);
  CHECK(v[2] == 599.0);
}

TEST_CASE("encoded header fields follow the declared layout") {
  ScalarVolume v({3, 4, 5}, {0.1, 0.2, 0.3}, 1.0);
  const auto b = encode_volume(v, Datatype::float32);
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, b.data(), 4);
  CHECK(sizeof_hdr == 348);
  CHECK(std::memcmp(b.data() + 344, "n+1\0", 4) == 0);
  float vox_offset = 0, slope = 0, inter = -1;
  std::memcpy(&vox_offset, b.data() + 108, 4);
  std::memcpy(&slope, b.data() + 112, 4);
  std::memcpy(&inter, b.data() + 116, 4);
  CHECK(vox_offset == 352.0f);
  CHECK(slope == 1.0f);
  CHECK(inter == 0.0f);
  CHECK(b.size() == 352u + 4u * 60u);
}

TEST_CASE("float32 constant pi payload bytes") {
  ScalarVolume v({4, 3, 2}, {1, 1, 1}, 3.14159265358979323846);
  const auto b = encode_volume(v, Datatype::float32);
  // IEEE-754 single precision pi is 0x40490FDB; little-endian byte order.
  const std::uint8_t expect[4] = {0xDB, 0x0F, 0x49, 0x40};
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(std::memcmp(b.data() + 352 + 4 * i, expect, 4) == 0);
  }
}

TEST_CASE("round trips through files") {
  testing_support::TempDir dir("io_roundtrip");
  auto v = testing_support::random_volume({7, 6, 5}, 4, -100.0, 100.0);
  for (auto& x : v.data()) x = static_cast<float>(x);
  write_volume(v, dir.file("v.nii"));
  CHECK(read_volume(dir.file("v.nii")) == ScalarVolume(v));

  MaskVolume m({7, 6, 5}, {1, 1, 1});
  for (std::size_t i = 0; i < m.size(); i += 3) m[i] = 1;
  write_mask(m, dir.file("m.nii"));
  CHECK(read_mask(dir.file("m.nii")) == m);

  LabelVolume l({7, 6, 5}, {1, 1, 1});
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::int32_t>(i % 400) - 100;
  write_labels(l, dir.file("l.nii"));
  CHECK(read_labels(dir.file("l.nii")) == l);
}

TEST_CASE("unrepresentable values are conversion errors") {
  ScalarVolume v({2, 2, 2}, {1, 1, 1}, 300.0);
  for (auto [dt, value] : {std::pair{Datatype::uint8, 300.0}, std::pair{Datatype::uint8, -1.0},
                           std::pair{Datatype::uint8, 0.5}, std::pair{Datatype::int16, 40000.0}}) {
    std::fill(v.data().begin(), v.data().end(), value);
    try {
      encode_volume(v, dt);
      FAIL("expected a conversion error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::conversion);
    }
  }
}

TEST_CASE("malformed headers name the offending field") {
  ErrorKind kind{};
  auto two_file = handmade_header(2, 2, 2, 2, 8);
  std::memcpy(two_file.data() + 344, "ni1\0", 4);
  two_file.resize(360);
  CHECK(error_message(two_file, &kind).find("magic") != std::string::npos);
  CHECK(kind == ErrorKind::format);

  auto big_endian = handmade_header(2, 2, 2, 2, 8);
  const std::uint8_t be[4] = {0, 0, 1, 0x5C};
  std::memcpy(big_endian.data(), be, 4);
  CHECK(error_message(big_endian, &kind).find("sizeof_hdr") != std::string::npos);
  CHECK(error_message(big_endian, &kind).find("big-endian") != std::string::npos);

  auto bad_type = handmade_header(2, 2, 2, 64, 64);
  bad_type.resize(352 + 64);
  CHECK(error_message(bad_type, &kind).find("datatype") != std::string::npos);

  auto truncated = handmade_header(2, 2, 2, 16, 32);
  truncated.resize(352 + 31);
  CHECK(error_message(truncated, &kind).find("truncated") != std::string::npos);
  CHECK(kind == ErrorKind::format);

  auto four_d = handmade_header(2, 2, 2, 2, 8);
  put<std::int16_t>(four_d, 40, 4);
  four_d.resize(360);
  CHECK(error_message(four_d, &kind).find("dim[0]") != std::string::npos);
}

TEST_CASE("missing files are io errors") {
  try {
    read_volume("/nonexistent/dir/volume.nii");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("reader survives random and mutated input") {
  std::mt19937_64 rng(77);
  ScalarVolume v({5, 4, 3}, {1, 1, 1}, 2.0);
  const auto valid = encode_volume(v, Datatype::float32);
  std::size_t decoded = 0, rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<std::uint8_t> bytes;
    if (trial % 3 == 0) {
      std::uniform_int_distribution<std::size_t> len(0, 4096);
      bytes.resize(len(rng));
      for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    } else {
      bytes = valid;
      std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
      const int flips = 1 + static_cast<int>(rng() % 6);
      for (int f = 0; f < flips; ++f) bytes[pos(rng)] = static_cast<std::uint8_t>(rng());
      if (trial % 5 == 0) bytes.resize(rng() % bytes.size());
    }
    try {
      decode_volume(bytes);
      ++decoded;
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
      ++rejected;
    }
  }
  CHECK(decoded + rejected == 3000u);
  CHECK(rejected > 1000u);
}

TEST_CASE("fuzzed files on disk are rejected with format errors") {
  testing_support::TempDir dir("io_fuzz");
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> junk(1 << 16);
  for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
  write_bytes(dir.file("junk.nii"), junk);
  try {
    read_volume(dir.file("junk.nii"));
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
  }
}

TEST_CASE("region report formatting") {
  RegionReport empty;
  CHECK(format_region_report(empty) == std::string(kRegionReportHeader) + "\n");

  RegionRow r;
  r.region_id = 3;
  r.region_name = "lobule, anterior";
  r.n_voxels = 1234;
  r.volume_mm3 = 1.234;
  r.mean_tgm = 3.14159265;
  r.mean_tgran = 1.0 / 3.0;
  r.mean_tmol = 2.0;
  r.purkinje_area_mm2 = 123456789.0;
  r.group_mean_a = 0.001234567;
  r.t_stat = -2.0;
  r.p_value = 0.0805;
  r.fdr_significant = true;
  RegionReport one{{r}};
  const auto text = format_region_report(one);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const auto body = text.substr(text.find('\n') + 1);
  CHECK(body.rfind("3,\"lobule, anterior\",1234,1.234,3.14159,0.333333,2,1.23457e+08,0.00123457,,-2,0.0805,1\n", 0) == 0);

  const auto back = parse_region_report(text);
  REQUIRE(back.rows.size() == 1u);
  const auto& p = back.rows[0];
  CHECK(p.region_name == r.region_name);
  CHECK(p.n_voxels == r.n_voxels);
  CHECK(*p.mean_tgm == doctest::Approx(*r.mean_tgm).epsilon(5e-6));
  CHECK(*p.mean_tgran == doctest::Approx(*r.mean_tgran).epsilon(5e-6));
  CHECK(p.purkinje_area_mm2 == doctest::Approx(r.purkinje_area_mm2).epsilon(5e-6));
  CHECK(*p.group_mean_a == doctest::Approx(*r.group_mean_a).epsilon(5e-6));
  CHECK(!p.group_mean_b.has_value());
  CHECK(p.fdr_significant);
}

TEST_CASE("csv fields with quotes round trip") {
  const auto f = split_csv_record("a,\"b \"\"c\"\"\",,d");
  REQUIRE(f.size() == 4u);
  CHECK(f[1] == "b \"c\"");
  CHECK(f[2].empty());
}
