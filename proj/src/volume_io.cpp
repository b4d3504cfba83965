#include "laminar/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "NIfTI encoding assumes a little-endian host");

namespace laminar::io {

namespace {

template <class T>
T get(const std::vector<std::uint8_t>& b, std::size_t off) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  return v;
}

template <class T>
void put(std::vector<std::uint8_t>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

[[noreturn]] void format_error(const std::string& field, const std::string& what) {
  fail(ErrorKind::format, "nifti field '" + field + "': " + what);
}

std::size_t bytes_per_voxel(Datatype t) {
  switch (t) {
    case Datatype::uint8: return 1;
    case Datatype::int16: return 2;
    case Datatype::float32: return 4;
  }
  return 0;
}

}  // namespace

VolumeHeader parse_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) format_error("sizeof_hdr", "file shorter than the 348-byte header");
  const auto sizeof_hdr = get<std::int32_t>(bytes, 0);
  if (sizeof_hdr != 348) {
    if (swap32(static_cast<std::uint32_t>(sizeof_hdr)) == 348u) format_error("sizeof_hdr", "big-endian files are not supported");
    format_error("sizeof_hdr", "expected 348, got " + std::to_string(sizeof_hdr));
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    if (std::memcmp(bytes.data() + 344, "ni1\0", 4) == 0) {
      format_error("magic", "two-file NIfTI (ni1) is not supported");
    }
    format_error("magic", "expected \"n+1\"");
  }
  VolumeHeader h;
  const auto ndim = get<std::int16_t>(bytes, 40);
  if (ndim != 3) format_error("dim[0]", "expected 3 dimensions, got " + std::to_string(ndim));
  for (int a = 0; a < 3; ++a) {
    const auto d = get<std::int16_t>(bytes, 42 + 2 * static_cast<std::size_t>(a));
    if (d <= 0) format_error("dim[" + std::to_string(a + 1) + "]", "must be positive");
    h.dims[a] = d;
    const float p = get<float>(bytes, 80 + 4 * static_cast<std::size_t>(a));
    if (!std::isfinite(p) || p <= 0.0f) format_error("pixdim[" + std::to_string(a + 1) + "]", "must be finite and positive");
    h.spacing[a] = p;
  }
  const auto dt = get<std::int16_t>(bytes, 70);
  if (dt != 2 && dt != 4 && dt != 16) format_error("datatype", "unsupported code " + std::to_string(dt));
  h.datatype = static_cast<Datatype>(dt);
  const auto bitpix = get<std::int16_t>(bytes, 72);
  if (static_cast<std::size_t>(bitpix) != 8 * bytes_per_voxel(h.datatype)) {
    format_error("bitpix", "inconsistent with datatype");
  }
  h.vox_offset = get<float>(bytes, 108);
  if (!std::isfinite(h.vox_offset) || h.vox_offset < 352.0f || h.vox_offset != std::floor(h.vox_offset)) {
    format_error("vox_offset", "must be an integer >= 352");
  }
  h.scl_slope = get<float>(bytes, 112);
  h.scl_inter = get<float>(bytes, 116);
  if (!std::isfinite(h.scl_slope) || !std::isfinite(h.scl_inter)) format_error("scl_slope", "must be finite");
  char descrip[81] = {};
  std::memcpy(descrip, bytes.data() + 148, 80);
  h.description = descrip;
  return h;
}

ScalarVolume decode_volume(const std::vector<std::uint8_t>& bytes, VolumeHeader* header_out) {
  const VolumeHeader h = parse_header(bytes);
  const auto offset = static_cast<std::uint64_t>(h.vox_offset);
  const std::uint64_t count = static_cast<std::uint64_t>(h.dims[0]) * h.dims[1] * h.dims[2];
  const std::uint64_t need = count * bytes_per_voxel(h.datatype);
  if (offset > bytes.size() || bytes.size() - offset < need) {
    format_error("vox_offset", "payload truncated: need " + std::to_string(need) + " bytes");
  }
  ScalarVolume v(h.dims, h.spacing);
  const bool scaled = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  for (std::size_t i = 0; i < count; ++i) {
    double value = 0.0;
    switch (h.datatype) {
      case Datatype::uint8: value = bytes[offset + i]; break;
      case Datatype::int16: value = get<std::int16_t>(bytes, offset + 2 * i); break;
      case Datatype::float32: value = get<float>(bytes, offset + 4 * i); break;
    }
    if (scaled) value = value * h.scl_slope + h.scl_inter;
    if (!std::isfinite(value)) format_error("data", "non-finite voxel value");
    v[i] = value;
  }
  if (header_out) *header_out = h;
  return v;
}

std::vector<std::uint8_t> encode_volume(const ScalarVolume& v, Datatype datatype, const std::string& description) {
  const auto& g = v.geometry();
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] > std::numeric_limits<std::int16_t>::max()) {
      fail(ErrorKind::conversion, "dimension too large for NIfTI-1");
    }
  }
  const std::size_t bpv = bytes_per_voxel(datatype);
  std::vector<std::uint8_t> b(kVoxOffset + v.size() * bpv, 0);
  put<std::int32_t>(b, 0, 348);
  put<std::int16_t>(b, 40, 3);
  for (int a = 0; a < 3; ++a) put<std::int16_t>(b, 42 + 2 * static_cast<std::size_t>(a), static_cast<std::int16_t>(g.dims[a]));
  for (int a = 3; a < 7; ++a) put<std::int16_t>(b, 42 + 2 * static_cast<std::size_t>(a), 1);
  put<std::int16_t>(b, 70, static_cast<std::int16_t>(datatype));
  put<std::int16_t>(b, 72, static_cast<std::int16_t>(8 * bpv));
  put<float>(b, 76, 1.0f);
  for (int a = 0; a < 3; ++a) put<float>(b, 80 + 4 * static_cast<std::size_t>(a), static_cast<float>(g.spacing[a]));
  put<float>(b, 108, static_cast<float>(kVoxOffset));
  put<float>(b, 112, 1.0f);
  put<float>(b, 116, 0.0f);
  b[123] = 2;  // xyzt_units: mm
  std::memcpy(b.data() + 148, description.data(), std::min<std::size_t>(description.size(), 79));
  put<std::int16_t>(b, 252, 1);  // qform_code: identity rotation, pixdim scaling
  put<std::int16_t>(b, 254, 1);  // sform_code
  put<float>(b, 280, static_cast<float>(g.spacing[0]));
  put<float>(b, 300, static_cast<float>(g.spacing[1]));
  put<float>(b, 320, static_cast<float>(g.spacing[2]));
  std::memcpy(b.data() + 344, "n+1\0", 4);

  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    const std::size_t off = kVoxOffset + i * bpv;
    switch (datatype) {
      case Datatype::uint8:
        if (!(x >= 0.0 && x <= 255.0) || x != std::floor(x)) {
          fail(ErrorKind::conversion, "value " + std::to_string(x) + " is not representable as uint8");
        }
        b[off] = static_cast<std::uint8_t>(x);
        break;
      case Datatype::int16:
        if (!(x >= -32768.0 && x <= 32767.0) || x != std::floor(x)) {
          fail(ErrorKind::conversion, "value " + std::to_string(x) + " is not representable as int16");
        }
        put<std::int16_t>(b, off, static_cast<std::int16_t>(x));
        break;
      case Datatype::float32:
        if (!std::isfinite(x) || std::abs(x) > std::numeric_limits<float>::max()) {
          fail(ErrorKind::conversion, "value is not representable as float32");
        }
        put<float>(b, off, static_cast<float>(x));
        break;
    }
  }
  return b;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

void write_file(const std::string& path, const std::string& contents) {
  write_file(path, std::vector<std::uint8_t>(contents.begin(), contents.end()));
}

ScalarVolume read_volume(const std::string& path, VolumeHeader* header_out) {
  try {
    return decode_volume(read_file(path), header_out);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::format) fail(ErrorKind::format, path + ": " + e.what());
    throw;
  }
}

MaskVolume read_mask(const std::string& path) {
  const auto v = read_volume(path);
  MaskVolume m(v.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] != 0.0 ? 1 : 0;
  return m;
}

LabelVolume read_labels(const std::string& path) {
  const auto v = read_volume(path);
  LabelVolume l(v.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != std::floor(v[i]) || std::abs(v[i]) > 2.0e9) {
      fail(ErrorKind::format, path + ": label volume holds non-integral values");
    }
    l[i] = static_cast<std::int32_t>(v[i]);
  }
  return l;
}

void write_volume(const ScalarVolume& v, const std::string& path, Datatype datatype, const std::string& description) {
  write_file(path, encode_volume(v, datatype, description));
}

ScalarVolume to_scalar(const MaskVolume& m) {
  ScalarVolume v(m.geometry());
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i] ? 1.0 : 0.0;
  return v;
}

ScalarVolume to_scalar(const LabelVolume& l) {
  ScalarVolume v(l.geometry());
  for (std::size_t i = 0; i < l.size(); ++i) v[i] = l[i];
  return v;
}

void write_mask(const MaskVolume& m, const std::string& path) { write_volume(to_scalar(m), path, Datatype::uint8); }
void write_labels(const LabelVolume& l, const std::string& path) { write_volume(to_scalar(l), path, Datatype::int16); }

// ---------------------------------------------------------------- CSV

const char* const kRegionReportHeader =
    "region_id,region_name,n_voxels,volume_mm3,mean_TGM,mean_TGran,mean_TMol,purkinje_area_mm2,"
    "group_mean_a,group_mean_b,t_stat,p_value,fdr_significant";

namespace {

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string opt(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

std::string format_region_report(const RegionReport& report) {
  std::ostringstream out;
  out << kRegionReportHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.region_id << ',' << quote(r.region_name) << ',' << r.n_voxels << ',' << num(r.volume_mm3) << ','
        << opt(r.mean_tgm) << ',' << opt(r.mean_tgran) << ',' << opt(r.mean_tmol) << ','
        << num(r.purkinje_area_mm2) << ',' << opt(r.group_mean_a) << ',' << opt(r.group_mean_b) << ','
        << opt(r.t_stat) << ',' << opt(r.p_value) << ',' << (r.fdr_significant ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_region_report(const RegionReport& report, const std::string& path) {
  write_file(path, format_region_report(report));
}

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

RegionReport parse_region_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRegionReportHeader) fail(ErrorKind::format, "region report header mismatch");
  RegionReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_record(line);
    if (f.size() != 13) fail(ErrorKind::format, "region report row has " + std::to_string(f.size()) + " fields");
    RegionRow r;
    r.region_id = std::stoi(f[0]);
    r.region_name = f[1];
    r.n_voxels = std::stoul(f[2]);
    r.volume_mm3 = std::stod(f[3]);
    r.mean_tgm = parse_opt(f[4]);
    r.mean_tgran = parse_opt(f[5]);
    r.mean_tmol = parse_opt(f[6]);
    r.purkinje_area_mm2 = std::stod(f[7]);
    r.group_mean_a = parse_opt(f[8]);
    r.group_mean_b = parse_opt(f[9]);
    r.t_stat = parse_opt(f[10]);
    r.p_value = parse_opt(f[11]);
    r.fdr_significant = f[12] == "1";
    report.rows.push_back(std::move(r));
  }
  return report;
}

}  // namespace laminar::io
