#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qreg/estimator.hpp"
#include "qreg/geometry.hpp"

namespace qreg {

enum class CloudFormat { PlyBinaryLittleEndian, PlyAscii, XyzWhitespace };

/// .ply -> binary PLY, anything else -> whitespace XYZ.
CloudFormat cloud_format_from_path(const std::filesystem::path& path);
CloudFormat parse_cloud_format(std::string_view name);

struct CloudReadResult {
  PointCloud cloud;
  std::vector<std::string> warnings;  ///< ignored properties and elements
};

/// Both PLY formats accept either PLY encoding; the header is authoritative.
/// Throws ParseError (line for text, byte offset for binary) or IoError.
CloudReadResult parse_cloud(std::string_view bytes, CloudFormat format);
CloudReadResult read_cloud_detailed(const std::filesystem::path& path, CloudFormat format);
PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format);

/// PLY output stores coordinates and normals as doubles so round trips are exact.
std::string serialize_cloud(const PointCloud& cloud, CloudFormat format);
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

/// CSV with header `src,dst,score` (score column optional, default 1.0).
/// Lines starting with '#' are comments. Indices are not range-checked here.
std::vector<Correspondence> parse_correspondences(std::string_view text);
std::vector<Correspondence> read_correspondences(const std::filesystem::path& path);
std::string serialize_correspondences(std::span<const Correspondence> corrs);
void write_correspondences(std::span<const Correspondence> corrs,
                           const std::filesystem::path& path);

/// Four lines, four numbers each: the homogeneous matrix, row-major, 17 significant digits.
std::string serialize_transform(const RigidTransform& T);
RigidTransform parse_transform(std::string_view text);
void write_transform(const RigidTransform& T, const std::filesystem::path& path);
RigidTransform read_transform(const std::filesystem::path& path);

using Settings = std::vector<std::pair<std::string, std::string>>;

/// JSON object with the transform, inliers, timings and every EstimatorConfig
/// field, plus caller-supplied settings and metrics.
std::string report_to_json(const RegistrationReport& report, const Settings& settings = {},
                           const std::vector<std::pair<std::string, double>>& metrics = {});
void write_report(const RegistrationReport& report, const std::filesystem::path& path,
                  const Settings& settings = {},
                  const std::vector<std::pair<std::string, double>>& metrics = {});

/// `key = value` lines; '#' starts a comment. Throws ParseError with line number.
struct Setting {
  std::string key;
  std::string value;
  std::size_t line = 0;
};
std::vector<Setting> parse_key_values(std::string_view text);
std::vector<Setting> read_key_value_file(const std::filesystem::path& path);
void write_key_value_file(const Settings& settings, const std::filesystem::path& path);

/// Shortest text that reads back to the identical double.
std::string format_real(double v);
/// Throws InvalidArgument unless the whole string is a finite number.
double parse_real(std::string_view s);
std::uint64_t parse_unsigned(std::string_view s);
bool parse_bool(std::string_view s);

std::string read_file(const std::filesystem::path& path);
/// Creates missing parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace qreg
