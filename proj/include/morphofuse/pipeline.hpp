#pragma once

#include "morphofuse/fusion.hpp"
#include "morphofuse/marching_cubes.hpp"
#include "morphofuse/mesh_io.hpp"
#include "morphofuse/phantom.hpp"
#include "morphofuse/registration.hpp"
#include "morphofuse/reports.hpp"
#include "morphofuse/spine.hpp"
#include "morphofuse/texture.hpp"
#include "morphofuse/volume_io.hpp"

#include <algorithm>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace morphofuse {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Exam directories
//
//   volume.mvol | volume.nii   intensities (+ mask: mvol companion or labels.nii)
//   legend.json                optional label legend
//   centroids.json             optional {"<label>": [x, y, z]} annotations
//   meshes/<name>_<label>.ply  optional surfaces (.off also accepted);
//                              missing ones are extracted from the mask

struct Exam {
  fs::path dir;
  std::string subject;
  VoxelGrid grid;
  std::map<std::int32_t, TriangleMesh> meshes;
  std::map<std::int32_t, Vec3> centroids;
  LabelLegend legend;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<std::int32_t> trailing_label(const std::string& stem) {
  const auto us = stem.find_last_of('_');
  const std::string digits = us == std::string::npos ? stem : stem.substr(us + 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  return static_cast<std::int32_t>(std::stol(digits));
}

inline std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline std::map<std::int32_t, Vec3> load_centroids(const fs::path& path) {
  const auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::parse, "centroid file must be a JSON object");
  std::map<std::int32_t, Vec3> out;
  for (const auto& [key, v] : j.items()) {
    if (!v.is_array() || v.size() != 3) throw Error(ErrorCode::parse, "centroid '" + key + "' must be [x, y, z]");
    out[std::stoi(key)] = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  }
  return out;
}

inline void save_centroids(const fs::path& path, const std::map<std::int32_t, Vec3>& centroids) {
  Json j = Json::object();
  for (const auto& [id, c] : centroids) j[std::to_string(id)] = {c.x(), c.y(), c.z()};
  detail::write_file(path, j.dump(2) + "\n");
}

/// Loads an exam directory. Meshes for mask labels without a file are
/// extracted with marching cubes.
inline Exam load_exam(const fs::path& dir) {
  Exam e;
  e.dir = dir;
  e.subject = fs::path(dir).lexically_normal().filename().string();
  if (e.subject.empty()) e.subject = fs::path(dir).lexically_normal().parent_path().filename().string();
  if (fs::exists(dir / "volume.mvol")) {
    e.grid = load_volume(dir / "volume.mvol");
  } else if (fs::exists(dir / "volume.nii")) {
    const fs::path labels = dir / "labels.nii";
    e.grid = load_volume(dir / "volume.nii", VolumeFormat::nifti, fs::exists(labels) ? labels : fs::path());
  } else {
    throw Error(ErrorCode::not_found, "no volume.mvol or volume.nii in " + dir.string());
  }
  if (!e.grid.has_labels()) throw Error(ErrorCode::not_found, "exam " + dir.string() + " has no label mask");
  if (fs::exists(dir / "legend.json")) e.legend = load_label_legend(dir / "legend.json");
  if (fs::exists(dir / "centroids.json")) e.centroids = load_centroids(dir / "centroids.json");

  for (const auto& p : detail::sorted_entries(dir / "meshes")) {
    const auto ext = p.extension().string();
    if (ext != ".ply" && ext != ".off") continue;
    const auto id = detail::trailing_label(p.stem().string());
    if (!id) continue;
    auto m = load_mesh(p);
    m.bone_id = *id;
    e.meshes[*id] = std::move(m);
  }
  for (auto id : label_ids(e.grid)) {
    if (e.meshes.count(id)) continue;
    e.meshes[id] = extract_isosurface(e.grid, id);
  }
  return e;
}

enum class NormalizeMode { automatic, always, never };

inline NormalizeMode parse_normalize_mode(const std::string& s) {
  if (s == "auto") return NormalizeMode::automatic;
  if (s == "always") return NormalizeMode::always;
  if (s == "never") return NormalizeMode::never;
  throw Error(ErrorCode::invalid_argument, "normalize must be auto, always or never");
}

/// `automatic` rescales only volumes with values outside [0,1].
inline VoxelGrid prepare_intensities(const VoxelGrid& g, NormalizeMode mode) {
  if (mode == NormalizeMode::never) return g;
  if (mode == NormalizeMode::automatic) {
    const auto& v = g.intensities();
    const bool unit = std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
    if (unit) return g;
  }
  return normalize_intensities(g);
}

// ---------------------------------------------------------------------------
// Follow-up

struct FollowupParams {
  unsigned threads = 0;  // 0: MORPHOFUSE_THREADS or 1
  IcpParams icp;
  DistanceMode distance_mode = DistanceMode::vertex_to_vertex;
  bool district_normalization = false;
  MappingCriterion mapping{MappingKind::external, 5.0};
  std::vector<double> epsilons = kDefaultEpsilonSweep;
  NormalizeMode normalize = NormalizeMode::automatic;
  std::vector<std::int32_t> bones;  // empty: every shared label
};

struct FollowupBone {
  std::int32_t bone_id = 0;
  TriangleMesh mesh;  // follow-up surface in the baseline frame, with channels
  RegistrationRecord registration;
  SurfaceTexture baseline_texture;
  SurfaceTexture followup_texture;
};

struct FollowupOutcome {
  std::vector<FollowupBone> bones;
  std::vector<std::int32_t> skipped;
  std::vector<std::string> warnings;

  int exit_code() const { return skipped.empty() ? 0 : 2; }
};

namespace detail {

inline std::vector<std::int32_t> shared_bones(const Exam& a, const Exam& b, const std::vector<std::int32_t>& wanted,
                                              FollowupOutcome& out) {
  std::set<std::int32_t> ids;
  for (const auto& [id, m] : a.meshes) ids.insert(id);
  for (const auto& [id, m] : b.meshes) ids.insert(id);
  if (!wanted.empty()) ids = std::set<std::int32_t>(wanted.begin(), wanted.end());
  std::vector<std::int32_t> shared;
  for (auto id : ids) {
    const bool in_a = a.meshes.count(id) != 0, in_b = b.meshes.count(id) != 0;
    if (in_a && in_b) {
      shared.push_back(id);
      continue;
    }
    out.skipped.push_back(id);
    out.warnings.push_back("bone " + std::to_string(id) + " missing in " +
                           (in_a ? "follow-up" : in_b ? "baseline" : "both exams") + "; skipped");
  }
  return shared;
}

}  // namespace detail

/// Per bone: register follow-up onto baseline, distance field d2, textures
/// at both times on the registered follow-up surface, d1, fused channels.
inline FollowupOutcome run_followup(const Exam& baseline, const Exam& followup, const FollowupParams& params) {
  params.mapping.validate();
  for (double e : params.epsilons)
    if (!(e > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be strictly positive");
  FollowupOutcome out;
  const auto ids = detail::shared_bones(baseline, followup, params.bones, out);
  if (ids.empty()) throw Error(ErrorCode::not_found, "the exams share no bone labels");

  const VoxelGrid g1 = prepare_intensities(baseline.grid, params.normalize);
  const VoxelGrid g2 = prepare_intensities(followup.grid, params.normalize);
  const unsigned threads = resolve_threads(params.threads);

  struct Slot {
    std::optional<FollowupBone> bone;
    FollowupDistances dist;
    std::string error;
  };
  std::vector<Slot> slots(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t k) {
    const auto id = ids[k];
    try {
      const TriangleMesh& m1 = baseline.meshes.at(id);
      const TriangleMesh& m2 = followup.meshes.at(id);
      IcpParams icp = params.icp;
      icp.threads = 1;
      FollowupBone b;
      b.bone_id = id;
      b.registration.bone_id = id;
      b.registration.icp = rigid_icp(m2, m1, icp);
      const RigidTransform& xf = b.registration.icp.transform;
      b.mesh = transformed(m2, xf);
      b.mesh.bone_id = id;
      slots[k].dist = vertex_distance_field(b.mesh, m1, params.distance_mode);
      b.registration.hausdorff_mm = slots[k].dist.hausdorff_mm;

      if (params.mapping.kind == MappingKind::euclidean) {
        b.baseline_texture = map_grey_levels(b.mesh, g1, params.mapping, nullptr);
      } else {
        // Sides follow the follow-up mask, carried into the baseline frame.
        const VoxelSides sides = classify_voxel_side(g1.geometry(), followup.grid, id, xf.inverse());
        b.baseline_texture = map_grey_levels(b.mesh, g1, params.mapping, &sides);
      }
      b.followup_texture = map_grey_levels(m2, g2, params.mapping, id);
      slots[k].bone = std::move(b);
    } catch (const std::exception& ex) {
      slots[k].error = ex.what();
    }
  });

  std::vector<std::size_t> done;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (slots[k].bone) {
      done.push_back(k);
      continue;
    }
    out.skipped.push_back(ids[k]);
    out.warnings.push_back("bone " + std::to_string(ids[k]) + " failed: " + slots[k].error);
  }

  std::vector<ScalarField> d2(done.size());
  if (params.district_normalization) {
    std::vector<ScalarField> raw;
    for (auto k : done) raw.push_back(slots[k].dist.per_vertex_mm);
    bool degenerate = false;
    d2 = normalize_district(raw, &degenerate);
    if (degenerate) out.warnings.push_back("district distance range is zero; d2 set to 0");
  } else {
    for (std::size_t i = 0; i < done.size(); ++i) d2[i] = slots[done[i]].dist.normalized;
  }

  for (std::size_t i = 0; i < done.size(); ++i) {
    auto& slot = slots[done[i]];
    FollowupBone b = std::move(*slot.bone);
    b.registration.degenerate_range = slot.dist.degenerate_range;
    if (!b.registration.icp.converged)
      out.warnings.push_back("bone " + std::to_string(b.bone_id) + ": ICP did not converge in " +
                             std::to_string(b.registration.icp.iterations) + " iterations");
    const auto d1 = texture_difference(b.baseline_texture, b.followup_texture).values;
    auto tex_base = b.baseline_texture.values;
    tex_base.name += "_baseline";
    b.mesh.set_channel(slot.dist.per_vertex_mm);
    b.mesh.set_channel(d2[i]);
    b.mesh.set_channel(tex_base);
    b.mesh.set_channel(b.followup_texture.values);
    b.mesh.set_channel(d1);
    b.mesh.set_channel(fuse_multiply(d1, d2[i]));
    for (auto& f : fuse_sweep(d1, d2[i], params.epsilons)) b.mesh.set_channel(std::move(f));
    out.bones.push_back(std::move(b));
  }
  return out;
}

inline Json to_json(const FollowupParams& p) {
  Json eps = Json::array();
  for (double e : p.epsilons) eps.push_back(e);
  return {{"icp_tol", p.icp.tol},
          {"icp_max_iters", p.icp.max_iters},
          {"icp_trim_fraction", p.icp.trim_fraction},
          {"distance_mode", p.distance_mode == DistanceMode::vertex_to_vertex ? "vertex" : "triangle"},
          {"d2_normalization", p.district_normalization ? "district" : "bone"},
          {"criterion", to_string(p.mapping.kind)},
          {"max_search_radius_mm", p.mapping.max_search_radius},
          {"epsilons", eps},
          {"normalize", p.normalize == NormalizeMode::automatic ? "auto"
                        : p.normalize == NormalizeMode::always  ? "always"
                                                                : "never"}};
}

inline std::string bone_stem(std::int32_t id) { return "bone_" + std::to_string(id); }

/// Writes meshes, colored meshes, registration/texture reports and the
/// bundle index. Only this function touches the output directory.
inline void write_followup_bundle(const fs::path& out_dir, const FollowupOutcome& r, const FollowupParams& params,
                                  const Json& inputs) {
  Json reg = Json::array(), tex = Json::array(), bones = Json::array();
  for (const auto& b : r.bones) {
    reg.push_back(to_json(b.registration));
    tex.push_back(texture_report_entry(b.bone_id, "baseline", b.baseline_texture));
    tex.push_back(texture_report_entry(b.bone_id, "followup", b.followup_texture));
    const std::string mesh_file = "meshes/" + bone_stem(b.bone_id) + ".ply";
    save_mesh(out_dir / mesh_file, b.mesh);
    Json colored = Json::object();
    for (const auto& [name, f] : b.mesh.channels) {
      if (name != "d1" && name != "d2" && name.rfind("fused", 0) != 0) continue;
      const std::string file = "colored/" + bone_stem(b.bone_id) + "_" + name + ".ply";
      save_colored_mesh(out_dir / file, b.mesh, name, default_colormap(f));
      colored[name] = file;
    }
    const auto& fused = b.mesh.channel("fused").values;
    double fmax = -std::numeric_limits<double>::infinity();
    for (double v : fused)
      if (!is_unmapped(v)) fmax = std::max(fmax, v);
    bones.push_back({{"bone_id", b.bone_id},
                     {"mesh", mesh_file},
                     {"colored", colored},
                     {"vertex_count", b.mesh.vertex_count()},
                     {"hausdorff_mm", b.registration.hausdorff_mm},
                     {"fused_max", detail::number_or_null(fmax)},
                     {"converged", b.registration.icp.converged}});
  }
  detail::write_file(out_dir / "registration.json", Json{{"bones", reg}}.dump(2) + "\n");
  detail::write_file(out_dir / "texture.json", Json{{"entries", tex}}.dump(2) + "\n");
  Json bundle = {{"version", kManifestVersion},
                 {"kind", "followup"},
                 {"inputs", inputs},
                 {"params", to_json(params)},
                 {"bones", bones},
                 {"skipped", r.skipped},
                 {"warnings", r.warnings}};
  detail::write_file(out_dir / "bundle.json", bundle.dump(2) + "\n");
}

inline int cmd_followup(const fs::path& baseline_dir, const fs::path& followup_dir, const fs::path& out_dir,
                        const FollowupParams& params) {
  const Exam a = load_exam(baseline_dir);
  const Exam b = load_exam(followup_dir);
  const auto r = run_followup(a, b, params);
  write_followup_bundle(out_dir, r, params,
                        {{"baseline", baseline_dir.generic_string()}, {"followup", followup_dir.generic_string()}});
  return r.exit_code();
}

// ---------------------------------------------------------------------------
// Spine

struct SpineParams {
  unsigned threads = 0;
  double bandwidth = 0.0;  // mm; 0 selects Silverman's rule
  std::size_t density_samples = kDefaultDensitySamples;
  double max_search_radius = 5.0;
  NormalizeMode normalize = NormalizeMode::never;
  std::vector<std::int32_t> vertebrae;  // empty: every mask label
};

struct SpineVertebra {
  std::string subject;
  std::int32_t vertebra_id = 0;
  TriangleMesh mesh;  // channels: centroid_distance, region, tex_*
  Vec3 centroid = Vec3::Zero();
  bool centroid_annotated = false;
  DensityCurve curve;
  RegionThresholds thresholds;
  std::array<double, kRegionCount> region_fraction{};
  std::map<MappingKind, SurfaceTexture> textures;
  std::vector<std::string> warnings;
};

struct SpineOutcome {
  std::vector<SpineVertebra> vertebrae;
  std::vector<GeometryTissueRecord> records;
  std::vector<std::string> skipped;  // "<subject>:<id>"
  std::vector<std::string> warnings;

  int exit_code() const { return skipped.empty() ? 0 : 2; }
};

/// Vertebra characterisation for every labelled vertebra of every exam,
/// followed by the cohort geometry–tissue report.
inline SpineOutcome run_spine(const std::vector<const Exam*>& exams, const SpineParams& params) {
  struct Job {
    const Exam* exam;
    const VoxelGrid* grid;
    std::int32_t id;
  };
  SpineOutcome out;
  std::vector<Job> jobs;
  std::deque<VoxelGrid> grids;
  for (const Exam* e : exams) {
    const VoxelGrid& g = grids.emplace_back(prepare_intensities(e->grid, params.normalize));
    std::vector<std::int32_t> ids;
    for (const auto& [id, m] : e->meshes) ids.push_back(id);
    if (!params.vertebrae.empty()) ids = params.vertebrae;
    for (auto id : ids) {
      if (!e->meshes.count(id)) {
        out.skipped.push_back(e->subject + ":" + std::to_string(id));
        out.warnings.push_back(e->subject + ": vertebra " + std::to_string(id) + " not found; skipped");
        continue;
      }
      jobs.push_back({e, &g, id});
    }
  }

  const unsigned threads = resolve_threads(params.threads);
  std::vector<std::optional<SpineVertebra>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t k) {
    const auto& job = jobs[k];
    try {
      SpineVertebra v;
      v.subject = job.exam->subject;
      v.vertebra_id = job.id;
      v.mesh = job.exam->meshes.at(job.id);
      v.mesh.bone_id = job.id;
      if (auto it = job.exam->centroids.find(job.id); it != job.exam->centroids.end()) {
        v.centroid = it->second;
        v.centroid_annotated = true;
      } else {
        v.centroid = mesh_centroid(v.mesh);
        v.warnings.push_back("no centroid annotation; using the area-weighted surface centroid");
      }
      const auto dist = centroid_distances(v.mesh, v.centroid);
      v.curve = estimate_density(dist, params.bandwidth, params.density_samples);
      for (const auto& w : v.curve.warnings) v.warnings.push_back(w);
      v.thresholds = thresholds_from_density(v.curve);
      if (v.thresholds.degraded)
        v.warnings.push_back("only two thresholds found; T3 set to the maximum distance");
      const auto labels = segment_vertebra(dist, v.thresholds);
      for (double l : labels.values) v.region_fraction[static_cast<int>(l)] += 1.0;
      for (auto& f : v.region_fraction) f /= static_cast<double>(labels.size());
      const VoxelSides sides = classify_voxel_side(*job.grid, job.id);
      for (auto kind : kAllMappingKinds) {
        const MappingCriterion c{kind, params.max_search_radius};
        v.textures[kind] = map_grey_levels(v.mesh, *job.grid, c, kind == MappingKind::euclidean ? nullptr : &sides);
        v.mesh.set_channel(v.textures[kind].values);
      }
      v.mesh.set_channel(dist);
      v.mesh.set_channel(labels);
      slots[k] = std::move(v);
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  });

  std::vector<VertebraAnalysis> cohort;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!slots[k]) {
      const auto tag = jobs[k].exam->subject + ":" + std::to_string(jobs[k].id);
      out.skipped.push_back(tag);
      out.warnings.push_back(tag + " failed: " + errors[k]);
      continue;
    }
    auto& v = *slots[k];
    for (const auto& w : v.warnings) out.warnings.push_back(v.subject + ":" + std::to_string(v.vertebra_id) + ": " + w);
    cohort.push_back({v.subject, v.vertebra_id, v.thresholds, v.textures, v.mesh.channel("region")});
    out.vertebrae.push_back(std::move(v));
  }
  out.records = geometry_tissue_report(cohort);
  return out;
}

inline std::string vertebra_stem(const SpineVertebra& v) {
  return v.subject + "_vertebra_" + std::to_string(v.vertebra_id);
}

inline Json to_json(const SpineParams& p) {
  return {{"bandwidth_mm", p.bandwidth > 0.0 ? Json(p.bandwidth) : Json("silverman")},
          {"density_samples", p.density_samples},
          {"max_search_radius_mm", p.max_search_radius},
          {"normalize", p.normalize == NormalizeMode::automatic ? "auto"
                        : p.normalize == NormalizeMode::always  ? "always"
                                                                : "never"}};
}

inline void write_spine_bundle(const fs::path& out_dir, const SpineOutcome& r, const SpineParams& params,
                               const Json& inputs) {
  Json verts = Json::array(), tex = Json::array(), meshes = Json::array();
  std::size_t cohort_points = 0;
  for (const auto& v : r.vertebrae) {
    const std::string stem = vertebra_stem(v);
    const std::string mesh_file = "meshes/" + stem + ".ply";
    const std::string colored = "colored/" + stem + "_region.ply";
    save_mesh(out_dir / mesh_file, v.mesh);
    save_colored_mesh(out_dir / colored, v.mesh, "region", Colormap::categorical);
    const auto& labels = v.mesh.channel("region");
    for (auto kind : kAllMappingKinds) tex.push_back(texture_report_entry(v.vertebra_id, v.subject, v.textures.at(kind), &labels));
    bool flagged = false;
    for (const auto& rec : r.records)
      if (rec.subject == v.subject && rec.vertebra_id == v.vertebra_id && rec.outlier) flagged = true;
    verts.push_back({{"subject", v.subject},
                     {"vertebra_id", v.vertebra_id},
                     {"mesh", mesh_file},
                     {"colored", colored},
                     {"centroid_mm", {v.centroid.x(), v.centroid.y(), v.centroid.z()}},
                     {"centroid_source", v.centroid_annotated ? "annotation" : "surface"},
                     {"thresholds", to_json(v.thresholds)},
                     {"region_fraction", {{"body", v.region_fraction[0]},
                                          {"arch", v.region_fraction[1]},
                                          {"process", v.region_fraction[2]}}},
                     {"outlier", flagged},
                     {"density_curve", to_json(v.curve)},
                     {"warnings", v.warnings}});
    meshes.push_back({{"subject", v.subject}, {"vertebra_id", v.vertebra_id}, {"mesh", mesh_file},
                      {"colored", colored}});
  }
  Json records = Json::array();
  for (const auto& rec : r.records) {
    records.push_back(to_json(rec));
    cohort_points += rec.present ? 1 : 0;
  }
  const bool stats = r.vertebrae.size() >= kMinCohortSize;
  detail::write_file(out_dir / "spine_report.csv", format_spine_csv(r.records));
  detail::write_file(out_dir / "spine_report.json",
                     Json{{"cohort", {{"vertebra_count", r.vertebrae.size()},
                                      {"statistics", stats},
                                      {"rule", "median +/- 3 MAD per region and criterion"}}},
                          {"vertebrae", verts},
                          {"records", records}}
                             .dump(2) +
                         "\n");
  detail::write_file(out_dir / "texture.json", Json{{"entries", tex}}.dump(2) + "\n");
  Json bundle = {{"version", kManifestVersion},
                 {"kind", "spine"},
                 {"inputs", inputs},
                 {"params", to_json(params)},
                 {"vertebrae", meshes},
                 {"skipped", r.skipped},
                 {"warnings", r.warnings}};
  detail::write_file(out_dir / "bundle.json", bundle.dump(2) + "\n");
}

inline int cmd_spine(const std::vector<fs::path>& exam_dirs, const fs::path& out_dir, const SpineParams& params) {
  if (exam_dirs.empty()) throw Error(ErrorCode::invalid_argument, "spine needs at least one exam directory");
  std::vector<Exam> exams;
  for (const auto& d : exam_dirs) exams.push_back(load_exam(d));
  std::set<std::string> subjects;
  for (const auto& e : exams)
    if (!subjects.insert(e.subject).second) throw Error(ErrorCode::invalid_argument, "duplicate subject " + e.subject);
  std::vector<const Exam*> ptrs;
  for (const auto& e : exams) ptrs.push_back(&e);
  const auto r = run_spine(ptrs, params);
  Json inputs = Json::array();
  for (const auto& d : exam_dirs) inputs.push_back(d.generic_string());
  write_spine_bundle(out_dir, r, params, inputs);
  return r.exit_code();
}

// ---------------------------------------------------------------------------
// Phantoms

inline const std::vector<std::string>& phantom_kinds() {
  static const std::vector<std::string> kinds = {"wrist-pair", "spine-healthy", "spine-fractured", "sphere-dent"};
  return kinds;
}

namespace detail {
inline void write_exam_volume(const fs::path& dir, const VoxelGrid& g, const LabelLegend& legend) {
  save_mvol(dir / "volume.mvol", g, VoxelType::f32);
  save_label_legend(dir / "legend.json", legend);
}
}  // namespace detail

/// Writes a synthetic dataset. Pair phantoms produce baseline/ and
/// followup/ exam directories; spine phantoms produce one exam directory.
/// truth.json records the analytic ground truth.
inline void cmd_phantom(const std::string& kind, const fs::path& out_dir, std::optional<std::uint64_t> seed = {}) {
  if (kind == "wrist-pair" || kind == "sphere-dent") {
    WristPhantomParams p;
    if (seed) p.seed = *seed;
    const auto ph = kind == "wrist-pair" ? make_wrist_phantom(p) : make_sphere_dent_phantom(p);
    LabelLegend legend;
    for (const auto& b : ph.bones) legend[b.label] = kind == "wrist-pair" ? "bone_" + std::to_string(b.label) : "ball";
    detail::write_exam_volume(out_dir / "baseline", ph.baseline, legend);
    detail::write_exam_volume(out_dir / "followup", ph.followup, legend);
    detail::write_file(out_dir / "truth.json", ph.truth().dump(2) + "\n");
    return;
  }
  if (kind == "spine-healthy" || kind == "spine-fractured") {
    SpinePhantomParams p;
    if (seed) p.seed = *seed;
    p.fractured = kind == "spine-fractured";
    const auto ph = make_spine_phantom(p);
    LabelLegend legend;
    std::map<std::int32_t, Vec3> centroids;
    for (const auto& v : ph.vertebrae) {
      legend[v.id] = "vertebra_" + std::to_string(v.id);
      centroids[v.id] = v.center;
      save_mesh(out_dir / "meshes" / ("vertebra_" + std::to_string(v.id) + ".ply"), v.mesh);
    }
    detail::write_exam_volume(out_dir, ph.volume, legend);
    save_centroids(out_dir / "centroids.json", centroids);
    detail::write_file(out_dir / "truth.json", ph.truth().dump(2) + "\n");
    return;
  }
  throw Error(ErrorCode::invalid_argument, "unknown phantom kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Viewer export

/// Channels a viewer bundle must carry per mesh, by bundle kind.
inline std::vector<std::string> required_channels(const std::string& kind) {
  if (kind == "followup") return {"d1", "d2"};
  if (kind == "spine") return {"region"};
  throw Error(ErrorCode::invalid_argument, "unknown bundle kind '" + kind + "'");
}

/// Copies the bundle's meshes into `out_dir` and writes manifest.json.
/// Fails naming the first mesh that lacks a required channel.
inline Json cmd_export_viewer(const fs::path& bundle_dir, const fs::path& out_dir) {
  const fs::path index = bundle_dir / "bundle.json";
  if (!fs::exists(index)) throw Error(ErrorCode::not_found, "incomplete bundle: " + index.string() + " missing");
  const auto bundle = Json::parse(detail::read_file(index), nullptr, false);
  if (bundle.is_discarded()) throw Error(ErrorCode::parse, "bundle.json is not valid JSON");
  const std::string kind = bundle.value("kind", "");
  const auto required = required_channels(kind);
  const Json& entries = kind == "followup" ? bundle.at("bones") : bundle.at("vertebrae");

  std::map<std::string, Json> curves;
  if (kind == "spine") {
    const fs::path report = bundle_dir / "spine_report.json";
    if (!fs::exists(report)) throw Error(ErrorCode::not_found, "incomplete bundle: spine_report.json missing");
    const auto rep = Json::parse(detail::read_file(report));
    for (const auto& v : rep.at("vertebrae")) {
      Json infl = Json::array();
      for (const auto& i : v.at("density_curve").at("inflexions")) infl.push_back(i.at("distance_mm"));
      const auto& t = v.at("thresholds");
      curves[v.at("mesh").get<std::string>()] = {
          {"sample_xs", v.at("density_curve").at("sample_xs")},
          {"density", v.at("density_curve").at("density")},
          {"inflexions", infl},
          {"thresholds", {t.at("t1_mm"), t.at("t2_mm"), t.at("t3_mm")}},
          {"degraded", t.at("degraded")}};
    }
  }

  Json meshes = Json::array(), density = Json::array();
  for (const auto& e : entries) {
    const std::string file = e.at("mesh").get<std::string>();
    if (!fs::exists(bundle_dir / file)) throw Error(ErrorCode::not_found, "incomplete bundle: " + file + " missing");
    const TriangleMesh m = load_mesh(bundle_dir / file);
    for (const auto& name : required)
      if (!m.has_channel(name))
        throw Error(ErrorCode::not_found, "mesh " + file + " lacks required channel '" + name + "'");
    const std::string id = fs::path(file).stem().string();
    Json channels = Json::array();
    for (const auto& [name, f] : m.channels) channels.push_back(channel_descriptor(f));
    Json entry = {{"id", id}, {"file", file}, {"vertex_count", m.vertex_count()}};
    if (m.bone_id) entry["bone_id"] = *m.bone_id;
    if (e.contains("subject")) entry["subject"] = e.at("subject");
    entry["channels"] = channels;
    meshes.push_back(entry);
    if (fs::absolute(bundle_dir / file) != fs::absolute(out_dir / file)) {
      fs::create_directories((out_dir / file).parent_path());
      fs::copy_file(bundle_dir / file, out_dir / file, fs::copy_options::overwrite_existing);
    }
    if (auto it = curves.find(file); it != curves.end()) {
      Json c = it->second;
      c["mesh_id"] = id;
      density.push_back(c);
    }
  }

  Json presets = Json::array();
  if (kind == "followup" && bundle.contains("params") && bundle["params"].contains("epsilons"))
    presets = bundle["params"]["epsilons"];
  else
    for (double e : kDefaultEpsilonSweep) presets.push_back(e);

  Json manifest = {{"version", kManifestVersion},
                   {"kind", kind},
                   {"epsilon_presets", presets},
                   {"epsilon_bounds", {0.01, 3.0}},
                   {"meshes", meshes},
                   {"density_curves", density},
                   {"colormaps", colormap_legend()}};
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace morphofuse
