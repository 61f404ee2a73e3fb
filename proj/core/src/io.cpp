#include "qreg/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qreg/errors.hpp"

namespace qreg {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

/// Line-by-line cursor that tracks 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto nl = text_.find('\n', pos_);
    const auto end = nl == std::string_view::npos ? text_.size() : nl;
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    ++line_no_;
    return true;
  }
  std::size_t line_no() const { return line_no_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

// ---------------------------------------------------------------- PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> parse_ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  return std::nullopt;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8:
      return 1;
    case PlyType::Int16:
    case PlyType::UInt16:
      return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32:
      return 4;
    case PlyType::Float64:
      return 8;
  }
  return 0;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8:
      return load<std::int8_t>(p);
    case PlyType::UInt8:
      return load<std::uint8_t>(p);
    case PlyType::Int16:
      return load<std::int16_t>(p);
    case PlyType::UInt16:
      return load<std::uint16_t>(p);
    case PlyType::Int32:
      return load<std::int32_t>(p);
    case PlyType::UInt32:
      return load<std::uint32_t>(p);
    case PlyType::Float32:
      return load<float>(p);
    case PlyType::Float64:
      return load<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;
  std::size_t body_line = 0;  ///< line number of the first body line (ASCII)
};

PlyHeader parse_ply_header(std::string_view bytes) {
  LineReader lines(bytes);
  std::string_view line;
  if (!lines.next(line) || trim(line) != "ply") throw ParseError("missing 'ply' magic", 1, true);

  PlyHeader header;
  bool have_format = false;
  while (true) {
    if (!lines.next(line)) throw ParseError("header ends before end_header", lines.line_no(), true);
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("malformed format line", lines.line_no(), true);
      if (tok[1] == "ascii") {
        header.binary = false;
      } else if (tok[1] == "binary_little_endian") {
        header.binary = true;
      } else {
        throw ParseError("unsupported PLY format '" + std::string(tok[1]) + "'", lines.line_no(),
                         true);
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", lines.line_no(), true);
      PlyElement el;
      el.name = std::string(tok[1]);
      try {
        el.count = parse_unsigned(tok[2]);
      } catch (const InvalidArgument&) {
        throw ParseError("bad element count", lines.line_no(), true);
      }
      header.elements.push_back(std::move(el));
    } else if (tok[0] == "property") {
      if (header.elements.empty()) {
        throw ParseError("property before any element", lines.line_no(), true);
      }
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = parse_ply_type(tok[2]);
        const auto it = parse_ply_type(tok[3]);
        if (!ct || !it || *ct == PlyType::Float32 || *ct == PlyType::Float64) {
          throw ParseError("bad list property types", lines.line_no(), true);
        }
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        const auto t = parse_ply_type(tok[1]);
        if (!t) throw ParseError("unknown property type", lines.line_no(), true);
        prop.type = *t;
        prop.name = std::string(tok[2]);
      } else {
        throw ParseError("malformed property line", lines.line_no(), true);
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      throw ParseError("unknown header keyword '" + std::string(tok[0]) + "'", lines.line_no(),
                       true);
    }
  }
  if (!have_format) throw ParseError("missing format line", lines.line_no(), true);
  header.body_offset = lines.position();
  header.body_line = lines.line_no() + 1;
  return header;
}

/// Column positions of x, y, z, nx, ny, nz in the vertex element.
struct VertexLayout {
  std::array<int, 3> xyz{-1, -1, -1};
  std::array<int, 3> normal{-1, -1, -1};
  bool has_normals() const { return normal[0] >= 0 && normal[1] >= 0 && normal[2] >= 0; }
};

VertexLayout vertex_layout(const PlyElement& el, std::vector<std::string>& warnings) {
  VertexLayout layout;
  static constexpr std::array<std::string_view, 3> kXyz{"x", "y", "z"};
  static constexpr std::array<std::string_view, 3> kNormal{"nx", "ny", "nz"};
  for (std::size_t i = 0; i < el.properties.size(); ++i) {
    const auto& p = el.properties[i];
    bool used = false;
    for (std::size_t a = 0; a < 3 && !p.is_list; ++a) {
      if (p.name == kXyz[a]) layout.xyz[a] = static_cast<int>(i), used = true;
      if (p.name == kNormal[a]) layout.normal[a] = static_cast<int>(i), used = true;
    }
    if (!used) warnings.push_back("unsupported vertex property '" + p.name + "' ignored");
  }
  for (int c : layout.xyz) {
    if (c < 0) throw ParseError("vertex element lacks x, y or z", 1, true);
  }
  if (!layout.has_normals() &&
      (layout.normal[0] >= 0 || layout.normal[1] >= 0 || layout.normal[2] >= 0)) {
    warnings.push_back("incomplete normal properties ignored");
  }
  return layout;
}

PointCloud make_cloud(std::vector<Point3> pts, std::vector<Vector3> normals,
                      std::vector<std::string>& warnings, std::size_t offset, bool is_line) {
  for (const auto& p : pts) {
    if (!is_finite(p)) throw ParseError("non-finite coordinate", offset, is_line);
  }
  for (const auto& n : normals) {
    const double len = n.norm();
    if (!std::isfinite(len) || len == 0.0) {
      warnings.push_back("zero or non-finite normals present; normals dropped");
      normals.clear();
      break;
    }
  }
  return PointCloud(std::move(pts), std::move(normals));
}

CloudReadResult parse_ply(std::string_view bytes) {
  const PlyHeader header = parse_ply_header(bytes);
  CloudReadResult result;
  const PlyElement* vertex = nullptr;
  for (const auto& el : header.elements) {
    if (el.name == "vertex" && !vertex) {
      vertex = &el;
    } else {
      result.warnings.push_back("element '" + el.name + "' skipped");
    }
  }
  if (!vertex) throw ParseError("no vertex element", 1, true);
  const VertexLayout layout = vertex_layout(*vertex, result.warnings);

  std::vector<Point3> pts;
  std::vector<Vector3> normals;
  std::vector<double> row;

  if (header.binary) {
    std::size_t pos = header.body_offset;
    auto need = [&](std::size_t n) {
      if (bytes.size() - pos < n) throw ParseError("unexpected end of binary data", pos, false);
    };
    for (const auto& el : header.elements) {
      const bool is_vertex = &el == vertex;
      if (el.properties.empty()) continue;
      std::size_t min_row = 0;
      for (const auto& p : el.properties) min_row += p.is_list ? ply_size(p.count_type) : ply_size(p.type);
      if (min_row > 0 && el.count > (bytes.size() - pos) / min_row) {
        throw ParseError("element '" + el.name + "' count exceeds file size", pos, false);
      }
      if (is_vertex) {
        pts.reserve(el.count);
        if (layout.has_normals()) normals.reserve(el.count);
      }
      row.assign(el.properties.size(), 0.0);
      for (std::uint64_t r = 0; r < el.count; ++r) {
        for (std::size_t k = 0; k < el.properties.size(); ++k) {
          const auto& p = el.properties[k];
          if (p.is_list) {
            need(ply_size(p.count_type));
            const double n = decode(p.count_type, bytes.data() + pos);
            pos += ply_size(p.count_type);
            if (n < 0) throw ParseError("negative list length", pos, false);
            const auto len = static_cast<std::size_t>(n) * ply_size(p.type);
            need(len);
            pos += len;
          } else {
            need(ply_size(p.type));
            row[k] = decode(p.type, bytes.data() + pos);
            pos += ply_size(p.type);
          }
        }
        if (is_vertex) {
          const auto [x, y, z] = layout.xyz;
          pts.emplace_back(row[x], row[y], row[z]);
          if (layout.has_normals()) {
            const auto [a, b, c] = layout.normal;
            normals.emplace_back(row[a], row[b], row[c]);
          }
        }
      }
    }
    return {make_cloud(std::move(pts), std::move(normals), result.warnings, pos, false),
            std::move(result.warnings)};
  }

  LineReader lines(bytes.substr(header.body_offset));
  std::string_view line;
  const std::size_t base = header.body_line - 1;
  for (const auto& el : header.elements) {
    const bool is_vertex = &el == vertex;
    if (is_vertex) pts.reserve(std::min<std::uint64_t>(el.count, 1u << 20));
    row.assign(el.properties.size(), 0.0);
    for (std::uint64_t r = 0; r < el.count; ++r) {
      if (!lines.next(line)) {
        throw ParseError("unexpected end of ASCII data", base + lines.line_no() + 1, true);
      }
      const std::size_t line_no = base + lines.line_no();
      const auto tok = split_ws(line);
      std::size_t t = 0;
      auto take = [&]() -> double {
        if (t >= tok.size()) throw ParseError("too few values", line_no, true);
        try {
          return parse_real(tok[t++]);
        } catch (const InvalidArgument&) {
          throw ParseError("bad number '" + std::string(tok[t - 1]) + "'", line_no, true);
        }
      };
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        const auto& p = el.properties[k];
        if (p.is_list) {
          const double n = take();
          if (n < 0 || n != std::floor(n) || n > static_cast<double>(tok.size())) {
            throw ParseError("bad list length", line_no, true);
          }
          for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) take();
        } else {
          row[k] = take();
        }
      }
      if (t != tok.size()) throw ParseError("too many values", line_no, true);
      if (is_vertex) {
        const auto [x, y, z] = layout.xyz;
        pts.emplace_back(row[x], row[y], row[z]);
        if (layout.has_normals()) {
          const auto [a, b, c] = layout.normal;
          normals.emplace_back(row[a], row[b], row[c]);
        }
      }
    }
  }
  return {make_cloud(std::move(pts), std::move(normals), result.warnings, base + lines.line_no(),
                     true),
          std::move(result.warnings)};
}

CloudReadResult parse_xyz(std::string_view text) {
  LineReader lines(text);
  std::string_view line;
  std::vector<Point3> pts;
  std::vector<Vector3> normals;
  std::optional<bool> with_normals;
  CloudReadResult result;
  while (lines.next(line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tok = split_ws(body);
    if (tok.size() != 3 && tok.size() != 6) {
      throw ParseError("expected 3 or 6 values", lines.line_no(), true);
    }
    const bool n = tok.size() == 6;
    if (with_normals && *with_normals != n) {
      throw ParseError("inconsistent column count", lines.line_no(), true);
    }
    with_normals = n;
    double v[6];
    for (std::size_t i = 0; i < tok.size(); ++i) {
      try {
        v[i] = parse_real(tok[i]);
      } catch (const InvalidArgument&) {
        throw ParseError("bad number '" + std::string(tok[i]) + "'", lines.line_no(), true);
      }
    }
    pts.emplace_back(v[0], v[1], v[2]);
    if (n) normals.emplace_back(v[3], v[4], v[5]);
  }
  result.cloud = make_cloud(std::move(pts), std::move(normals), result.warnings, lines.line_no(),
                            true);
  return result;
}

void append_le(std::string& out, double v) {
  char buf[sizeof(double)];
  std::memcpy(buf, &v, sizeof(double));
  out.append(buf, sizeof(double));
}

}  // namespace

// ---------------------------------------------------------------- numbers

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string format_17(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

double parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InvalidArgument("not a finite number: '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgument("not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidArgument("not a boolean: '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

// ---------------------------------------------------------------- clouds

CloudFormat cloud_format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ply" ? CloudFormat::PlyBinaryLittleEndian : CloudFormat::XyzWhitespace;
}

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "ply" || name == "ply_binary" || name == "binary_little_endian") {
    return CloudFormat::PlyBinaryLittleEndian;
  }
  if (name == "ply_ascii") return CloudFormat::PlyAscii;
  if (name == "xyz") return CloudFormat::XyzWhitespace;
  throw InvalidArgument("unknown cloud format '" + std::string(name) + "'");
}

CloudReadResult parse_cloud(std::string_view bytes, CloudFormat format) {
  switch (format) {
    case CloudFormat::PlyBinaryLittleEndian:
    case CloudFormat::PlyAscii:
      return parse_ply(bytes);
    case CloudFormat::XyzWhitespace:
      return parse_xyz(bytes);
  }
  throw InvalidArgument("unknown cloud format");
}

CloudReadResult read_cloud_detailed(const std::filesystem::path& path, CloudFormat format) {
  return parse_cloud(read_file(path), format);
}

PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format) {
  return read_cloud_detailed(path, format).cloud;
}

std::string serialize_cloud(const PointCloud& cloud, CloudFormat format) {
  const bool normals = cloud.has_normals();
  std::string out;
  if (format == CloudFormat::XyzWhitespace) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud[i];
      out += format_real(p.x()) + ' ' + format_real(p.y()) + ' ' + format_real(p.z());
      if (normals) {
        const auto& n = cloud.normals()[i];
        out += ' ' + format_real(n.x()) + ' ' + format_real(n.y()) + ' ' + format_real(n.z());
      }
      out += '\n';
    }
    return out;
  }

  const bool binary = format == CloudFormat::PlyBinaryLittleEndian;
  out += "ply\n";
  out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    if (binary) {
      for (int a = 0; a < 3; ++a) append_le(out, p(a));
      if (normals) {
        for (int a = 0; a < 3; ++a) append_le(out, cloud.normals()[i](a));
      }
    } else {
      out += format_real(p.x()) + ' ' + format_real(p.y()) + ' ' + format_real(p.z());
      if (normals) {
        const auto& n = cloud.normals()[i];
        out += ' ' + format_real(n.x()) + ' ' + format_real(n.y()) + ' ' + format_real(n.z());
      }
      out += '\n';
    }
  }
  return out;
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  write_file(path, serialize_cloud(cloud, format));
}

// ---------------------------------------------------------------- correspondences

std::vector<Correspondence> parse_correspondences(std::string_view text) {
  LineReader lines(text);
  std::string_view line;
  std::vector<Correspondence> out;
  std::optional<bool> with_score;
  while (lines.next(line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      fields.push_back(trim(body.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!with_score) {
      if (fields.size() == 3 && fields[0] == "src" && fields[1] == "dst" && fields[2] == "score") {
        with_score = true;
      } else if (fields.size() == 2 && fields[0] == "src" && fields[1] == "dst") {
        with_score = false;
      } else {
        throw ParseError("expected header 'src,dst,score'", lines.line_no(), true);
      }
      continue;
    }
    if (fields.size() != (*with_score ? 3u : 2u)) {
      throw ParseError("wrong number of columns", lines.line_no(), true);
    }
    Correspondence c;
    try {
      c.source_index = static_cast<std::size_t>(parse_unsigned(fields[0]));
      c.target_index = static_cast<std::size_t>(parse_unsigned(fields[1]));
      if (*with_score) c.score = parse_real(fields[2]);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lines.line_no(), true);
    }
    if (!(c.score >= 0.0 && c.score <= 1.0)) {
      throw ParseError("score outside [0, 1]", lines.line_no(), true);
    }
    out.push_back(c);
  }
  return out;
}

std::vector<Correspondence> read_correspondences(const std::filesystem::path& path) {
  return parse_correspondences(read_file(path));
}

std::string serialize_correspondences(std::span<const Correspondence> corrs) {
  std::string out = "src,dst,score\n";
  for (const auto& c : corrs) {
    out += std::to_string(c.source_index) + ',' + std::to_string(c.target_index) + ',' +
           format_real(c.score) + '\n';
  }
  return out;
}

void write_correspondences(std::span<const Correspondence> corrs,
                           const std::filesystem::path& path) {
  write_file(path, serialize_correspondences(corrs));
}

// ---------------------------------------------------------------- transforms

std::string serialize_transform(const RigidTransform& T) {
  const Matrix4 m = T.matrix();
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (c) out += ' ';
      out += format_17(m(r, c));
    }
    out += '\n';
  }
  return out;
}

RigidTransform parse_transform(std::string_view text) {
  LineReader lines(text);
  std::string_view line;
  Matrix4 m;
  int row = 0;
  while (lines.next(line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (row == 4) throw ParseError("more than four matrix rows", lines.line_no(), true);
    const auto tok = split_ws(body);
    if (tok.size() != 4) throw ParseError("expected four values per row", lines.line_no(), true);
    for (int c = 0; c < 4; ++c) {
      try {
        m(row, c) = parse_real(tok[static_cast<std::size_t>(c)]);
      } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), lines.line_no(), true);
      }
    }
    ++row;
  }
  if (row != 4) throw ParseError("expected four matrix rows", lines.line_no(), true);
  try {
    return RigidTransform::from_matrix(m);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), lines.line_no(), true);
  }
}

void write_transform(const RigidTransform& T, const std::filesystem::path& path) {
  write_file(path, serialize_transform(T));
}

RigidTransform read_transform(const std::filesystem::path& path) {
  return parse_transform(read_file(path));
}

// ---------------------------------------------------------------- reports

std::string report_to_json(const RegistrationReport& report, const Settings& settings,
                           const std::vector<std::pair<std::string, double>>& metrics) {
  using nlohmann::ordered_json;
  auto matrix_rows = [](const RigidTransform& T) {
    ordered_json rows = ordered_json::array();
    const Matrix4 m = T.matrix();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
  };

  ordered_json j;
  j["method"] = report.method;
  j["transform"] = matrix_rows(report.best_transform);
  j["pre_lo_transform"] = matrix_rows(report.pre_lo_transform);
  j["inlier_count"] = report.inlier_count;
  j["inlier_indices"] = report.inlier_indices;
  j["candidates_evaluated"] = report.candidates_evaluated;
  j["eligible_correspondences"] = report.eligible_correspondences;
  j["patch_failures"] = report.patch_failures;
  ordered_json timings = ordered_json::object();
  for (const auto& [stage, secs] : report.stage_timings) timings[stage] = secs;
  j["stage_timings"] = timings;

  const auto& c = report.config;
  ordered_json cfg;
  cfg["inlier_threshold"] = c.inlier_threshold;
  cfg["lo_iterations"] = c.lo_iterations;
  cfg["lo_sample_fraction"] = c.lo_sample_fraction;
  cfg["lo_normal_angle_max"] = c.lo_normal_angle_max;
  cfg["lo_normal_gate"] = c.lo_normal_gate;
  cfg["scale_min"] = c.solver.scale_min;
  cfg["scale_max"] = c.solver.scale_max;
  cfg["axis_ratio_tolerance"] = c.solver.axis_ratio_tolerance;
  cfg["rng_seed"] = c.rng_seed;
  cfg["gamma"] = c.gamma;
  cfg["record_candidates"] = c.record_candidates;
  j["estimator_config"] = cfg;

  if (!settings.empty()) {
    ordered_json s = ordered_json::object();
    for (const auto& [k, v] : settings) s[k] = v;
    j["settings"] = s;
  }
  if (!metrics.empty()) {
    ordered_json m = ordered_json::object();
    for (const auto& [k, v] : metrics) m[k] = v;
    j["metrics"] = m;
  }
  if (report.per_candidate_scores) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : *report.per_candidate_scores) {
      arr.push_back({{"correspondence", s.correspondence},
                     {"sign_variant", s.sign_variant},
                     {"inliers", s.inliers}});
    }
    j["per_candidate_scores"] = arr;
  }
  return j.dump(2) + "\n";
}

void write_report(const RegistrationReport& report, const std::filesystem::path& path,
                  const Settings& settings,
                  const std::vector<std::pair<std::string, double>>& metrics) {
  write_file(path, report_to_json(report, settings, metrics));
}

// ---------------------------------------------------------------- key/value config

std::vector<Setting> parse_key_values(std::string_view text) {
  LineReader lines(text);
  std::string_view line;
  std::vector<Setting> out;
  while (lines.next(line)) {
    auto body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lines.line_no(), true);
    const auto key = trim(body.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lines.line_no(), true);
    out.push_back({std::string(key), std::string(trim(body.substr(eq + 1))), lines.line_no()});
  }
  return out;
}

std::vector<Setting> read_key_value_file(const std::filesystem::path& path) {
  return parse_key_values(read_file(path));
}

void write_key_value_file(const Settings& settings, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [k, v] : settings) out += k + " = " + v + "\n";
  write_file(path, out);
}

}  // namespace qreg
