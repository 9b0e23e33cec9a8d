#pragma once

#include "morphofuse/volume.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace morphofuse {

static_assert(std::endian::native == std::endian::little, "volume readers assume a little-endian host");

enum class VolumeFormat { automatic, mvol, nifti };
enum class VoxelType { u8, i16, f32 };

inline const char* to_string(VoxelType t) {
  switch (t) {
    case VoxelType::u8: return "u8";
    case VoxelType::i16: return "i16";
    case VoxelType::f32: return "f32";
  }
  return "?";
}

inline VoxelType parse_voxel_type(std::string_view s) {
  if (s == "u8") return VoxelType::u8;
  if (s == "i16") return VoxelType::i16;
  if (s == "f32") return VoxelType::f32;
  throw Error(ErrorCode::parse, "unknown dtype '" + std::string(s) + "'");
}

inline std::size_t voxel_bytes(VoxelType t) { return t == VoxelType::u8 ? 1 : t == VoxelType::i16 ? 2 : 4; }

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

inline std::vector<double> decode_payload(std::string_view payload, VoxelType t, std::size_t count) {
  const std::size_t need = count * voxel_bytes(t);
  if (payload.size() != need)
    throw Error(ErrorCode::size_mismatch, "payload holds " + std::to_string(payload.size() / voxel_bytes(t)) +
                                              " values, header declares " + std::to_string(count));
  std::vector<double> out(count);
  const char* p = payload.data();
  for (std::size_t k = 0; k < count; ++k) {
    switch (t) {
      case VoxelType::u8: out[k] = static_cast<unsigned char>(p[k]); break;
      case VoxelType::i16: out[k] = load_le<std::int16_t>(p + 2 * k); break;
      case VoxelType::f32: out[k] = load_le<float>(p + 4 * k); break;
    }
  }
  return out;
}

template <typename Range>
std::string encode_payload(const Range& values, VoxelType t) {
  std::string out;
  for (auto v : values) {
    switch (t) {
      case VoxelType::u8:
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L))));
        break;
      case VoxelType::i16: store_le(out, static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L))); break;
      case VoxelType::f32: store_le(out, static_cast<float>(v)); break;
    }
  }
  return out;
}

struct MvolHeader {
  GridGeometry geometry;
  VoxelType dtype = VoxelType::f32;
  std::string labels_path;
  std::size_t payload_offset = 0;
};

inline Vec3 parse_vec3(std::istringstream& line, std::string_view key) {
  Vec3 v;
  if (!(line >> v.x() >> v.y() >> v.z())) throw Error(ErrorCode::parse, "malformed '" + std::string(key) + "' line");
  return v;
}

inline MvolHeader parse_mvol_header(std::string_view bytes) {
  MvolHeader h;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw Error(ErrorCode::parse, "mvol header is not terminated by 'end'");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != "MVOL1") throw Error(ErrorCode::parse, "missing MVOL1 magic");
  bool have_dims = false, have_dtype = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims") {
      if (!(ls >> h.geometry.dims.x >> h.geometry.dims.y >> h.geometry.dims.z))
        throw Error(ErrorCode::parse, "malformed 'dims' line");
      have_dims = true;
    } else if (key == "spacing") {
      h.geometry.spacing = parse_vec3(ls, key);
    } else if (key == "origin") {
      h.geometry.origin = parse_vec3(ls, key);
    } else if (key == "dtype") {
      std::string t;
      ls >> t;
      h.dtype = parse_voxel_type(t);
      have_dtype = true;
    } else if (key == "endian") {
      std::string e;
      ls >> e;
      if (e != "little") throw Error(ErrorCode::unsupported, "only little-endian payloads are supported");
    } else if (key == "labels") {
      ls >> h.labels_path;
    } else {
      throw Error(ErrorCode::parse, "unknown mvol header key '" + key + "'");
    }
  }
  if (!have_dims || !have_dtype) throw Error(ErrorCode::parse, "mvol header lacks dims or dtype");
  const auto& d = h.geometry.dims;
  if (d.x <= 0 || d.y <= 0 || d.z <= 0) throw Error(ErrorCode::parse, "mvol dims must be positive");
  for (int a = 0; a < 3; ++a)
    if (!(h.geometry.spacing[a] > 0.0)) throw Error(ErrorCode::invalid_argument, "non-positive spacing in mvol header");
  h.payload_offset = pos;
  return h;
}

inline std::vector<std::int32_t> to_labels(const std::vector<double>& raw) {
  std::vector<std::int32_t> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = static_cast<std::int32_t>(std::lround(raw[k]));
  return out;
}

}  // namespace detail

/// Reads an mvol file. A `labels` entry names a companion mvol (u8/i16)
/// relative to the volume's directory; its geometry must match.
inline VoxelGrid load_mvol(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  const auto h = detail::parse_mvol_header(bytes);
  auto values = detail::decode_payload(std::string_view(bytes).substr(h.payload_offset), h.dtype,
                                       h.geometry.voxel_count());
  if (h.labels_path.empty()) return VoxelGrid(h.geometry, std::move(values));

  const auto label_path = path.parent_path() / h.labels_path;
  const std::string lbytes = detail::read_file(label_path);
  const auto lh = detail::parse_mvol_header(lbytes);
  if (!(lh.geometry == h.geometry)) throw Error(ErrorCode::size_mismatch, "label mask geometry differs from volume");
  if (lh.dtype == VoxelType::f32) throw Error(ErrorCode::parse, "label masks must be u8 or i16");
  auto raw = detail::decode_payload(std::string_view(lbytes).substr(lh.payload_offset), lh.dtype,
                                    lh.geometry.voxel_count());
  return VoxelGrid(h.geometry, std::move(values), detail::to_labels(raw));
}

namespace detail {
inline std::string mvol_header(const GridGeometry& g, VoxelType t, const std::string& labels_path) {
  std::string h = "MVOL1\n";
  h += "dims " + std::to_string(g.dims.x) + " " + std::to_string(g.dims.y) + " " + std::to_string(g.dims.z) + "\n";
  h += "spacing " + format_double(g.spacing.x()) + " " + format_double(g.spacing.y()) + " " +
       format_double(g.spacing.z()) + "\n";
  h += "origin " + format_double(g.origin.x()) + " " + format_double(g.origin.y()) + " " +
       format_double(g.origin.z()) + "\n";
  h += std::string("dtype ") + to_string(t) + "\n";
  h += "endian little\n";
  if (!labels_path.empty()) h += "labels " + labels_path + "\n";
  h += "end\n";
  return h;
}
}  // namespace detail

/// Writes `grid` as mvol; when the grid carries labels they go to a
/// companion i16 file `<stem>.labels.mvol` next to it.
inline void save_mvol(const std::filesystem::path& path, const VoxelGrid& grid, VoxelType dtype = VoxelType::f32) {
  std::string labels_name;
  if (grid.has_labels()) {
    labels_name = path.stem().string() + ".labels.mvol";
    std::string lbytes = detail::mvol_header(grid.geometry(), VoxelType::i16, "");
    lbytes += detail::encode_payload(grid.labels(), VoxelType::i16);
    detail::write_file(path.parent_path() / labels_name, lbytes);
  }
  std::string bytes = detail::mvol_header(grid.geometry(), dtype, labels_name);
  bytes += detail::encode_payload(grid.intensities(), dtype);
  detail::write_file(path, bytes);
}

// ---------------------------------------------------------------------------
// NIfTI-1 single-file subset.

namespace detail {
namespace nii {
inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDim = 40;
inline constexpr std::size_t kDatatype = 70;
inline constexpr std::size_t kBitpix = 72;
inline constexpr std::size_t kPixdim = 76;
inline constexpr std::size_t kVoxOffset = 108;
inline constexpr std::size_t kSclSlope = 112;
inline constexpr std::size_t kSclInter = 116;
inline constexpr std::size_t kQformCode = 252;
inline constexpr std::size_t kSformCode = 254;
inline constexpr std::size_t kQuatern = 256;
inline constexpr std::size_t kQoffset = 268;
inline constexpr std::size_t kSrow = 280;
inline constexpr std::size_t kMagic = 344;
}  // namespace nii
}  // namespace detail

/// Reads a single-file NIfTI-1 ("n+1") volume with u8/i16/f32 voxels.
/// Only axis-aligned affines with positive axis directions are accepted.
inline VoxelGrid load_nifti(const std::filesystem::path& path) {
  namespace nii = detail::nii;
  using detail::load_le;
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < nii::kHeaderSize + 4) throw Error(ErrorCode::parse, "file too short for a NIfTI-1 header");
  const char* b = bytes.data();
  if (load_le<std::int32_t>(b) != 348) throw Error(ErrorCode::unsupported, "not a little-endian NIfTI-1 header");
  if (std::memcmp(b + nii::kMagic, "n+1\0", 4) != 0) throw Error(ErrorCode::parse, "NIfTI magic is not 'n+1'");

  std::array<std::int16_t, 8> dim{};
  for (int k = 0; k < 8; ++k) dim[k] = load_le<std::int16_t>(b + nii::kDim + 2 * k);
  if (dim[0] < 3 || dim[0] > 7) throw Error(ErrorCode::parse, "NIfTI dim[0] must describe a 3D volume");
  for (int k = 4; k <= dim[0]; ++k)
    if (dim[k] > 1) throw Error(ErrorCode::unsupported, "multi-channel / 4D NIfTI volumes are not supported");

  VoxelType dtype;
  switch (load_le<std::int16_t>(b + nii::kDatatype)) {
    case 2: dtype = VoxelType::u8; break;
    case 4: dtype = VoxelType::i16; break;
    case 16: dtype = VoxelType::f32; break;
    default: throw Error(ErrorCode::unsupported, "NIfTI datatype must be uint8, int16 or float32");
  }

  GridGeometry g;
  g.dims = {dim[1], dim[2], dim[3]};
  std::array<float, 8> pixdim{};
  for (int k = 0; k < 8; ++k) pixdim[k] = load_le<float>(b + nii::kPixdim + 4 * k);
  g.spacing = {pixdim[1], pixdim[2], pixdim[3]};

  const auto sform = load_le<std::int16_t>(b + nii::kSformCode);
  const auto qform = load_le<std::int16_t>(b + nii::kQformCode);
  if (sform > 0) {
    std::array<std::array<float, 4>, 3> srow{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) srow[r][c] = load_le<float>(b + nii::kSrow + 16 * r + 4 * c);
    for (int r = 0; r < 3; ++r) {
      const double scale = std::abs(srow[r][r]);
      for (int c = 0; c < 3; ++c)
        if (c != r && std::abs(srow[r][c]) > 1e-6 * std::max(scale, 1.0))
          throw Error(ErrorCode::unsupported, "oblique NIfTI affine (sform) is not supported");
      if (!(srow[r][r] > 0.0f))
        throw Error(ErrorCode::unsupported, "NIfTI sform with flipped or zero axis is not supported");
      g.spacing[r] = srow[r][r];
      g.origin[r] = srow[r][3];
    }
  } else if (qform > 0) {
    for (int k = 0; k < 3; ++k)
      if (std::abs(load_le<float>(b + nii::kQuatern + 4 * k)) > 1e-6f)
        throw Error(ErrorCode::unsupported, "oblique NIfTI affine (qform rotation) is not supported");
    if (pixdim[0] < 0.0f) throw Error(ErrorCode::unsupported, "NIfTI qform with flipped axis is not supported");
    for (int k = 0; k < 3; ++k) g.origin[k] = load_le<float>(b + nii::kQoffset + 4 * k);
  }
  for (int a = 0; a < 3; ++a)
    if (!(g.spacing[a] > 0.0)) throw Error(ErrorCode::invalid_argument, "non-positive NIfTI voxel spacing");
  if (g.dims.x <= 0 || g.dims.y <= 0 || g.dims.z <= 0) throw Error(ErrorCode::parse, "NIfTI dims must be positive");

  const auto offset = static_cast<std::size_t>(load_le<float>(b + nii::kVoxOffset));
  if (offset < nii::kHeaderSize || offset > bytes.size()) throw Error(ErrorCode::parse, "bad NIfTI vox_offset");
  auto values = detail::decode_payload(std::string_view(bytes).substr(offset), dtype, g.voxel_count());

  const float slope = load_le<float>(b + nii::kSclSlope);
  const float inter = load_le<float>(b + nii::kSclInter);
  if (slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f)) {
    for (auto& v : values) v = static_cast<double>(slope) * v + static_cast<double>(inter);
  }
  return VoxelGrid(g, std::move(values));
}

/// Writes a minimal NIfTI-1 file with an axis-aligned sform.
inline void save_nifti(const std::filesystem::path& path, const VoxelGrid& grid, VoxelType dtype = VoxelType::f32,
                       float scl_slope = 0.0f, float scl_inter = 0.0f) {
  namespace nii = detail::nii;
  std::string h(352, '\0');
  auto put = [&](std::size_t off, auto v) { std::memcpy(h.data() + off, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  const auto& g = grid.geometry();
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(g.dims.x), static_cast<std::int16_t>(g.dims.y),
                               static_cast<std::int16_t>(g.dims.z), 1, 1, 1, 1};
  for (int k = 0; k < 8; ++k) put(nii::kDim + 2 * k, dim[k]);
  const std::int16_t code = dtype == VoxelType::u8 ? 2 : dtype == VoxelType::i16 ? 4 : 16;
  put(nii::kDatatype, code);
  put(nii::kBitpix, static_cast<std::int16_t>(8 * voxel_bytes(dtype)));
  const float pixdim[8] = {1.0f, static_cast<float>(g.spacing.x()), static_cast<float>(g.spacing.y()),
                           static_cast<float>(g.spacing.z()), 0, 0, 0, 0};
  for (int k = 0; k < 8; ++k) put(nii::kPixdim + 4 * k, pixdim[k]);
  put(nii::kVoxOffset, 352.0f);
  put(nii::kSclSlope, scl_slope);
  put(nii::kSclInter, scl_inter);
  put(nii::kSformCode, std::int16_t{1});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) put(nii::kSrow + 16 * r + 4 * c, r == c ? static_cast<float>(g.spacing[r]) : 0.0f);
    put(nii::kSrow + 16 * r + 12, static_cast<float>(g.origin[r]));
  }
  std::memcpy(h.data() + nii::kMagic, "n+1\0", 4);
  std::vector<double> raw = grid.intensities();
  if (scl_slope != 0.0f)
    for (auto& v : raw) v = (v - scl_inter) / scl_slope;
  h += detail::encode_payload(raw, dtype);
  detail::write_file(path, h);
}

inline VolumeFormat detect_volume_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".nii") return VolumeFormat::nifti;
  if (ext == ".mvol") return VolumeFormat::mvol;
  throw Error(ErrorCode::unsupported, "cannot infer volume format from '" + path.string() + "'");
}

/// Loads a volume; `labels_path` (optional) attaches a separate label file
/// of either format sharing the same geometry.
inline VoxelGrid load_volume(const std::filesystem::path& path, VolumeFormat format = VolumeFormat::automatic,
                             const std::filesystem::path& labels_path = {}) {
  if (format == VolumeFormat::automatic) format = detect_volume_format(path);
  VoxelGrid grid = format == VolumeFormat::mvol ? load_mvol(path) : load_nifti(path);
  if (labels_path.empty()) return grid;
  const VoxelGrid mask = load_volume(labels_path);
  if (!(mask.geometry() == grid.geometry()))
    throw Error(ErrorCode::size_mismatch, "label file geometry differs from volume");
  return grid.with_labels(detail::to_labels(mask.intensities()));
}

/// Label id -> structure name, stored as a JSON object {"1": "scaphoid", ...}.
using LabelLegend = std::map<std::int32_t, std::string>;

inline LabelLegend load_label_legend(const std::filesystem::path& path) {
  LabelLegend legend;
  const auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::parse, "label legend must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw Error(ErrorCode::parse, "label legend values must be strings");
    legend[std::stoi(key)] = value.get<std::string>();
  }
  return legend;
}

inline void save_label_legend(const std::filesystem::path& path, const LabelLegend& legend) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, name] : legend) j[std::to_string(id)] = name;
  detail::write_file(path, j.dump(2) + "\n");
}

}  // namespace morphofuse
