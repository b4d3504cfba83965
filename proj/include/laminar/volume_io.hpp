#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::io {

enum class Datatype : std::int16_t { uint8 = 2, int16 = 4, float32 = 16 };

struct VolumeHeader {
  Index3 dims{};
  Vec3 spacing{};
  Datatype datatype = Datatype::float32;
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::string description;
};

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kVoxOffset = 352;

/// Decodes and validates a header from the first 348 bytes of a file.
VolumeHeader parse_header(const std::vector<std::uint8_t>& bytes);

/// Parses a complete in-memory single-file NIfTI-1 image. Throws format errors
/// naming the offending field.
ScalarVolume decode_volume(const std::vector<std::uint8_t>& bytes, VolumeHeader* header_out = nullptr);

std::vector<std::uint8_t> encode_volume(const ScalarVolume& v, Datatype datatype,
                                        const std::string& description = {});

ScalarVolume read_volume(const std::string& path, VolumeHeader* header_out = nullptr);
/// Any nonzero voxel is set.
MaskVolume read_mask(const std::string& path);
/// Values must be integral.
LabelVolume read_labels(const std::string& path);

void write_volume(const ScalarVolume& v, const std::string& path, Datatype datatype = Datatype::float32,
                  const std::string& description = {});
void write_mask(const MaskVolume& m, const std::string& path);
void write_labels(const LabelVolume& l, const std::string& path);

ScalarVolume to_scalar(const MaskVolume& m);
ScalarVolume to_scalar(const LabelVolume& l);

// ---------------------------------------------------------------- CSV reports

struct RegionRow {
  int region_id = 0;
  std::string region_name;
  std::size_t n_voxels = 0;
  double volume_mm3 = 0.0;
  std::optional<double> mean_tgm;
  std::optional<double> mean_tgran;
  std::optional<double> mean_tmol;
  double purkinje_area_mm2 = 0.0;
  std::optional<double> group_mean_a;
  std::optional<double> group_mean_b;
  std::optional<double> t_stat;
  std::optional<double> p_value;
  bool fdr_significant = false;
};

struct RegionReport {
  std::vector<RegionRow> rows;
};

extern const char* const kRegionReportHeader;

/// Numbers use 6 significant digits; absent values are empty fields.
std::string format_region_report(const RegionReport& report);
void write_region_report(const RegionReport& report, const std::string& path);
RegionReport parse_region_report(const std::string& text);

/// Splits one RFC-4180 record into fields.
std::vector<std::string> split_csv_record(const std::string& line);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
void write_file(const std::string& path, const std::vector<std::uint8_t>& contents);

}  // namespace laminar::io
