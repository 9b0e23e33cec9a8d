#pragma once

#include "morphofuse/mesh.hpp"
#include "morphofuse/volume_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace morphofuse {

enum class MeshFormat { automatic, off, ply };

/// Range a channel gets when a file does not declare one.
inline FieldRange default_range_for(const std::string& name) {
  if (name == "d1") return FieldRange::signed_unit;
  if (name == "d2") return FieldRange::unit;
  if (name == "region") return FieldRange::label;
  return FieldRange::unbounded_mm;
}

// ---------------------------------------------------------------------------
// OFF

inline TriangleMesh parse_off(std::string_view text) {
  std::istringstream in{std::string(text)};
  auto next_token = [&](std::string& tok) -> bool {
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return true;
    }
    return false;
  };
  std::string tok;
  if (!next_token(tok) || tok != "OFF") throw Error(ErrorCode::parse, "missing OFF magic");
  auto next_number = [&]() -> double {
    if (!next_token(tok)) throw Error(ErrorCode::parse, "unexpected end of OFF data");
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse, "bad number '" + tok + "' in OFF data");
    }
  };
  const auto nv = static_cast<long long>(next_number());
  const auto nf = static_cast<long long>(next_number());
  next_number();  // edge count, unused
  if (nv < 0 || nf < 0) throw Error(ErrorCode::parse, "negative OFF element count");
  TriangleMesh m;
  m.vertices.resize(static_cast<std::size_t>(nv));
  for (auto& v : m.vertices) v = {next_number(), next_number(), next_number()};
  m.triangles.resize(static_cast<std::size_t>(nf));
  for (auto& t : m.triangles) {
    const auto k = static_cast<long long>(next_number());
    if (k != 3) throw Error(ErrorCode::unsupported, "only triangle faces are supported (got " + std::to_string(k) + ")");
    for (auto& i : t) {
      const double idx = next_number();
      if (idx < 0 || idx >= static_cast<double>(nv))
        throw Error(ErrorCode::out_of_range, "face index " + detail::format_double(idx) + " out of range");
      i = static_cast<std::uint32_t>(idx);
    }
  }
  m.validate();
  return m;
}

inline std::string format_off(const TriangleMesh& m) {
  std::string s = "OFF\n" + std::to_string(m.vertices.size()) + " " + std::to_string(m.triangles.size()) + " 0\n";
  for (const auto& v : m.vertices)
    s += detail::format_double(v.x()) + " " + detail::format_double(v.y()) + " " + detail::format_double(v.z()) + "\n";
  for (const auto& t : m.triangles)
    s += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// PLY

namespace detail {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline PlyType parse_ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw Error(ErrorCode::parse, "unknown PLY property type '" + s + "'");
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

/// Sequential reader over either ASCII tokens or little-endian binary.
class PlyCursor {
 public:
  PlyCursor(std::string_view body, bool binary) : body_(body), binary_(binary) {}

  double read(PlyType t) {
    if (!binary_) return read_ascii();
    const std::size_t n = ply_type_size(t);
    if (pos_ + n > body_.size()) throw Error(ErrorCode::parse, "truncated PLY body");
    const char* p = body_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::i8: return load_le<std::int8_t>(p);
      case PlyType::u8: return load_le<std::uint8_t>(p);
      case PlyType::i16: return load_le<std::int16_t>(p);
      case PlyType::u16: return load_le<std::uint16_t>(p);
      case PlyType::i32: return load_le<std::int32_t>(p);
      case PlyType::u32: return load_le<std::uint32_t>(p);
      case PlyType::f32: return load_le<float>(p);
      case PlyType::f64: return load_le<double>(p);
    }
    return 0.0;
  }

 private:
  double read_ascii() {
    while (pos_ < body_.size() && std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < body_.size() && !std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
    if (start == pos_) throw Error(ErrorCode::parse, "truncated PLY body");
    const std::string tok(body_.substr(start, pos_ - start));
    if (tok == "nan" || tok == "NaN" || tok == "-nan") return kUnmapped;
    double v = 0.0;
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size())
      throw Error(ErrorCode::parse, "bad PLY number '" + tok + "'");
    return v;
  }

  std::string_view body_;
  bool binary_;
  std::size_t pos_ = 0;
};

inline bool is_color_property(const std::string& n) {
  return n == "red" || n == "green" || n == "blue" || n == "alpha";
}

}  // namespace detail

/// Parses ASCII or binary-little-endian PLY. Per-vertex scalar properties
/// other than x/y/z and colors become channels; ranges declared with
/// `comment channel <name> <range>` are honoured.
inline TriangleMesh parse_ply(std::string_view bytes) {
  using namespace detail;
  const auto header_end = bytes.find("end_header");
  if (bytes.substr(0, 3) != "ply" || header_end == std::string_view::npos)
    throw Error(ErrorCode::parse, "missing PLY magic or end_header");
  auto body_start = bytes.find('\n', header_end);
  if (body_start == std::string_view::npos) throw Error(ErrorCode::parse, "unterminated PLY header");
  ++body_start;

  std::istringstream header{std::string(bytes.substr(0, header_end))};
  std::string line;
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  std::map<std::string, FieldRange> declared;
  std::optional<std::int32_t> bone_id;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw Error(ErrorCode::unsupported, "PLY format '" + fmt + "' is not supported");
      have_format = true;
    } else if (key == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (count < 0) throw Error(ErrorCode::parse, "bad PLY element count");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw Error(ErrorCode::parse, "PLY property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(ct);
        p.type = parse_ply_type(it);
      } else {
        p.type = parse_ply_type(t);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (key == "comment") {
      std::string tag;
      ls >> tag;
      if (tag == "channel") {
        std::string name, range;
        ls >> name >> range;
        declared[name] = parse_field_range(range);
      } else if (tag == "bone_id") {
        std::int32_t id = 0;
        if (ls >> id) bone_id = id;
      }
    }
  }
  if (!have_format) throw Error(ErrorCode::parse, "PLY header lacks a format line");

  TriangleMesh m;
  m.bone_id = bone_id;
  std::map<std::string, std::vector<double>> channel_values;
  PlyCursor cur(bytes.substr(body_start), binary);
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      m.vertices.resize(e.count);
      for (const auto& p : e.properties)
        if (!p.is_list && p.name != "x" && p.name != "y" && p.name != "z" && !is_color_property(p.name))
          channel_values[p.name].resize(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto k = static_cast<std::size_t>(cur.read(p.count_type));
            for (std::size_t j = 0; j < k; ++j) cur.read(p.type);
            continue;
          }
          const double v = cur.read(p.type);
          if (p.name == "x") m.vertices[i].x() = v;
          else if (p.name == "y") m.vertices[i].y() = v;
          else if (p.name == "z") m.vertices[i].z() = v;
          else if (!is_color_property(p.name)) channel_values[p.name][i] = v;
        }
      }
    } else if (e.name == "face") {
      m.triangles.reserve(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (!p.is_list) {
            cur.read(p.type);
            continue;
          }
          const auto k = static_cast<std::size_t>(cur.read(p.count_type));
          if (p.name != "vertex_indices" && p.name != "vertex_index") {
            for (std::size_t j = 0; j < k; ++j) cur.read(p.type);
            continue;
          }
          if (k != 3) throw Error(ErrorCode::unsupported, "only triangle faces are supported");
          Triangle t{};
          for (auto& idx : t) {
            const double v = cur.read(p.type);
            if (v < 0 || v >= static_cast<double>(m.vertices.size()))
              throw Error(ErrorCode::out_of_range, "face index " + format_double(v) + " out of range");
            idx = static_cast<std::uint32_t>(v);
          }
          m.triangles.push_back(t);
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i)
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto k = static_cast<std::size_t>(cur.read(p.count_type));
            for (std::size_t j = 0; j < k; ++j) cur.read(p.type);
          } else {
            cur.read(p.type);
          }
        }
    }
  }
  for (auto& [name, values] : channel_values) {
    const auto it = declared.find(name);
    m.set_channel({name, std::move(values), it != declared.end() ? it->second : default_range_for(name)});
  }
  m.validate();
  return m;
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct PlyWriteOptions {
  bool binary = true;
  std::vector<Rgb> colors;                  // empty: no color properties
  std::optional<std::vector<double>> quality;  // extra "quality" property
};

/// Serialises the mesh as PLY: positions as float, every channel as a float
/// property (range recorded in a `comment channel` line), optional colors.
inline std::string format_ply(const TriangleMesh& m, const PlyWriteOptions& opt = {}) {
  using detail::store_le;
  const bool with_colors = !opt.colors.empty();
  if (with_colors && opt.colors.size() != m.vertices.size())
    throw Error(ErrorCode::size_mismatch, "color count does not match vertex count");
  if (opt.quality && opt.quality->size() != m.vertices.size())
    throw Error(ErrorCode::size_mismatch, "quality count does not match vertex count");

  std::vector<const ScalarField*> fields;
  for (const auto& [name, f] : m.channels)
    if (!(opt.quality && name == "quality")) fields.push_back(&f);

  std::string s = "ply\n";
  s += opt.binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  s += "comment generator morphofuse\n";
  if (m.bone_id) s += "comment bone_id " + std::to_string(*m.bone_id) + "\n";
  for (const auto* f : fields) s += "comment channel " + f->name + " " + to_string(f->range) + "\n";
  s += "element vertex " + std::to_string(m.vertices.size()) + "\n";
  s += "property float x\nproperty float y\nproperty float z\n";
  for (const auto* f : fields) s += "property float " + f->name + "\n";
  if (with_colors) s += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (opt.quality) s += "property float quality\n";
  s += "element face " + std::to_string(m.triangles.size()) + "\n";
  s += "property list uchar int vertex_indices\n";
  s += "end_header\n";

  auto put_float = [&](double v) {
    if (opt.binary) {
      store_le(s, static_cast<float>(v));
    } else {
      s += is_unmapped(v) ? std::string("nan") : detail::format_double(static_cast<double>(static_cast<float>(v)));
      s += ' ';
    }
  };
  auto put_byte = [&](std::uint8_t v) {
    if (opt.binary) s.push_back(static_cast<char>(v));
    else s += std::to_string(v) + ' ';
  };
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) put_float(m.vertices[i][a]);
    for (const auto* f : fields) put_float(f->values[i]);
    if (with_colors) {
      put_byte(opt.colors[i].r);
      put_byte(opt.colors[i].g);
      put_byte(opt.colors[i].b);
    }
    if (opt.quality) put_float((*opt.quality)[i]);
    if (!opt.binary) s.back() = '\n';
  }
  for (const auto& t : m.triangles) {
    if (opt.binary) {
      s.push_back(3);
      for (auto i : t) store_le(s, static_cast<std::int32_t>(i));
    } else {
      s += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
    }
  }
  return s;
}

inline MeshFormat detect_mesh_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".off" || ext == ".OFF") return MeshFormat::off;
  if (ext == ".ply" || ext == ".PLY") return MeshFormat::ply;
  throw Error(ErrorCode::unsupported, "cannot infer mesh format from '" + path.string() + "'");
}

inline TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::automatic) {
  if (format == MeshFormat::automatic) format = detect_mesh_format(path);
  const std::string bytes = detail::read_file(path);
  return format == MeshFormat::off ? parse_off(bytes) : parse_ply(bytes);
}

inline void save_mesh(const std::filesystem::path& path, const TriangleMesh& m,
                      MeshFormat format = MeshFormat::automatic, const PlyWriteOptions& opt = {}) {
  if (format == MeshFormat::automatic) format = detect_mesh_format(path);
  detail::write_file(path, format == MeshFormat::off ? format_off(m) : format_ply(m, opt));
}

// ---------------------------------------------------------------------------
// Color maps

enum class Colormap {
  warm_cold,    // blue (low) -> cyan -> green -> yellow -> red (high)
  divergent,    // blue (-) -> white (0) -> red (+)
  categorical,  // region palette: 0 red, 1 blue, 2 green
};

inline constexpr Rgb kUnmappedColor{128, 128, 128};
inline constexpr Rgb kColdColor{0, 0, 255};
inline constexpr Rgb kWarmColor{255, 0, 0};

namespace detail {
inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace detail

/// Color for normalised position t in [0,1] (clamped).
inline Rgb warm_cold_color(double t) {
  using detail::to_byte;
  t = std::clamp(t, 0.0, 1.0);
  // Piecewise-linear through blue, cyan, green, yellow, red.
  static constexpr double stops[5][3] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
  const double s = t * 4.0;
  const int k = std::min(3, static_cast<int>(s));
  const double f = s - k;
  return {to_byte(stops[k][0] + f * (stops[k + 1][0] - stops[k][0])),
          to_byte(stops[k][1] + f * (stops[k + 1][1] - stops[k][1])),
          to_byte(stops[k][2] + f * (stops[k + 1][2] - stops[k][2]))};
}

inline Rgb divergent_color(double t) {
  using detail::to_byte;
  t = std::clamp(t, 0.0, 1.0);
  if (t < 0.5) {
    const double f = t / 0.5;
    return {to_byte(f), to_byte(f), 255};
  }
  const double f = (1.0 - t) / 0.5;
  return {255, to_byte(f), to_byte(f)};
}

inline Rgb region_color(double label) {
  switch (static_cast<int>(label)) {
    case 0: return {255, 0, 0};
    case 1: return {0, 0, 255};
    case 2: return {0, 170, 0};
    default: return kUnmappedColor;
  }
}

/// Display interval of a channel: its declared range, or the data extent
/// for unbounded / label channels.
inline std::pair<double, double> display_range(const ScalarField& f) {
  switch (f.range) {
    case FieldRange::unit: return {0.0, 1.0};
    case FieldRange::signed_unit: return {-1.0, 1.0};
    default: break;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : f.values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(lo <= hi)) return {0.0, 1.0};
  return {lo, hi};
}

inline std::vector<Rgb> colorize(const ScalarField& f, Colormap map) {
  std::vector<Rgb> out(f.values.size());
  const auto [lo, hi] = display_range(f);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = f.values[i];
    if (!std::isfinite(v)) {
      out[i] = kUnmappedColor;
      continue;
    }
    if (map == Colormap::categorical) {
      out[i] = region_color(v);
      continue;
    }
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    out[i] = map == Colormap::warm_cold ? warm_cold_color(t) : divergent_color(t);
  }
  return out;
}

/// Default color map for a channel's declared range.
inline Colormap default_colormap(const ScalarField& f) {
  if (f.range == FieldRange::label) return Colormap::categorical;
  if (f.range == FieldRange::signed_unit) return Colormap::divergent;
  return Colormap::warm_cold;
}

/// Writes a binary PLY colored by `channel`, with the raw channel repeated
/// as the "quality" property. All channels are kept as vertex properties.
inline void save_colored_mesh(const std::filesystem::path& path, const TriangleMesh& m, const std::string& channel,
                              Colormap map) {
  const ScalarField& f = m.channel(channel);
  PlyWriteOptions opt;
  opt.binary = true;
  opt.colors = colorize(f, map);
  opt.quality = f.values;
  detail::write_file(path, format_ply(m, opt));
}

}  // namespace morphofuse
