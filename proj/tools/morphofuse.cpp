// morphofuse command-line entry point.

#include "morphofuse/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace mf = morphofuse;

namespace {

std::vector<std::int32_t> parse_id_list(const std::string& text) {
  std::vector<std::int32_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw mf::Error(mf::ErrorCode::parse, "bad label id '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void report_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bone surface morphometry, texture mapping and follow-up fusion"};
  app.set_config("--config", "", "TOML-style file with option overrides");
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: MORPHOFUSE_THREADS or 1)");

  // followup
  auto* fu = app.add_subcommand("followup", "compare a baseline and a follow-up exam bone by bone");
  std::string base_dir, follow_dir, fu_out, eps_text = "1,0.5,0.2", criterion = "external", distance = "vertex",
                                          d2_norm = "bone", normalize = "auto", bone_list;
  mf::FollowupParams fp;
  bool trimmed = false;
  fu->add_option("--baseline", base_dir, "baseline exam directory")->required();
  fu->add_option("--followup", follow_dir, "follow-up exam directory")->required();
  fu->add_option("--out", fu_out, "output bundle directory")->required();
  fu->add_option("--epsilons", eps_text, "linear fusion weights, comma separated");
  fu->add_option("--criterion", criterion, "mapping criterion")->check(CLI::IsMember({"euclidean", "internal", "external"}));
  fu->add_option("--radius", fp.mapping.max_search_radius, "mapping search radius (mm)");
  fu->add_option("--icp-tol", fp.icp.tol, "relative RMS change that stops ICP");
  fu->add_option("--icp-max-iters", fp.icp.max_iters, "ICP iteration cap");
  fu->add_flag("--trimmed", trimmed, "drop the worst 10% of ICP pairs");
  fu->add_option("--distance", distance, "distance definition")->check(CLI::IsMember({"vertex", "triangle"}));
  fu->add_option("--d2-normalization", d2_norm, "d2 scaling scope")->check(CLI::IsMember({"bone", "district"}));
  fu->add_option("--normalize", normalize, "intensity normalisation")->check(CLI::IsMember({"auto", "always", "never"}));
  fu->add_option("--bones", bone_list, "restrict to these label ids, comma separated");

  // spine
  auto* sp = app.add_subcommand("spine", "characterise vertebrae: thresholds, regions, geometry-tissue report");
  std::vector<std::string> exam_dirs;
  std::string sp_out, sp_normalize = "never", vert_list;
  mf::SpineParams spp;
  sp->add_option("exams", exam_dirs, "exam directories (one subject each)")->required();
  sp->add_option("--out", sp_out, "output bundle directory")->required();
  sp->add_option("--bandwidth", spp.bandwidth, "kernel bandwidth in mm (0: Silverman)");
  sp->add_option("--samples", spp.density_samples, "density grid size");
  sp->add_option("--radius", spp.max_search_radius, "mapping search radius (mm)");
  sp->add_option("--normalize", sp_normalize, "intensity normalisation")->check(CLI::IsMember({"auto", "always", "never"}));
  sp->add_option("--vertebrae", vert_list, "restrict to these label ids, comma separated");

  // phantom
  auto* ph = app.add_subcommand("phantom", "write a synthetic dataset with ground truth");
  std::string kind, ph_out;
  std::optional<std::uint64_t> seed;
  ph->add_option("kind", kind, "phantom kind")->required()->check(CLI::IsMember(mf::phantom_kinds()));
  ph->add_option("--out", ph_out, "output directory")->required();
  ph->add_option("--seed", seed, "noise seed");

  // export-viewer
  auto* ev = app.add_subcommand("export-viewer", "package a bundle for the viewer");
  std::string bundle_dir, ev_out;
  ev->add_option("bundle", bundle_dir, "bundle directory written by followup or spine")->required();
  ev->add_option("--out", ev_out, "viewer package directory (default: <bundle>/viewer)");

  // map
  auto* mp = app.add_subcommand("map", "map grey levels of a volume onto a mesh");
  std::string mp_mesh, mp_volume, mp_labels, mp_out, mp_report, mp_criterion = "external", mp_normalize = "never";
  std::int32_t mp_label = 0;
  double mp_radius = 5.0;
  mp->add_option("--mesh", mp_mesh, "input mesh (PLY/OFF)")->required();
  mp->add_option("--volume", mp_volume, "volume (mvol or NIfTI)")->required();
  mp->add_option("--labels", mp_labels, "label mask for NIfTI volumes");
  mp->add_option("--criterion", mp_criterion, "mapping criterion")
      ->check(CLI::IsMember({"euclidean", "internal", "external", "all"}));
  mp->add_option("--label", mp_label, "structure label for internal/external sides");
  mp->add_option("--radius", mp_radius, "search radius (mm)");
  mp->add_option("--normalize", mp_normalize, "intensity normalisation")->check(CLI::IsMember({"auto", "always", "never"}));
  mp->add_option("--out", mp_out, "output PLY")->required();
  mp->add_option("--report", mp_report, "texture report JSON");

  // fuse
  auto* fz = app.add_subcommand("fuse", "fuse d1 and d2 channels of a mesh");
  std::string fz_mesh, fz_out, fz_mode = "multiply", fz_sweep;
  double fz_eps = 1.0;
  fz->add_option("--mesh", fz_mesh, "mesh with d1 and d2 channels")->required();
  fz->add_option("--mode", fz_mode, "fusion scheme")->check(CLI::IsMember({"multiply", "linear"}));
  fz->add_option("--epsilon", fz_eps, "weight of d2 in linear mode");
  fz->add_option("--sweep", fz_sweep, "also write linear fusions for these weights, comma separated");
  fz->add_option("--out", fz_out, "output PLY")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fu) {
      fp.threads = threads;
      fp.epsilons = mf::parse_epsilon_list(eps_text);
      fp.mapping.kind = mf::parse_mapping_kind(criterion);
      fp.icp.trim_fraction = trimmed ? 0.1 : 0.0;
      fp.distance_mode = distance == "vertex" ? mf::DistanceMode::vertex_to_vertex : mf::DistanceMode::point_to_triangle;
      fp.district_normalization = d2_norm == "district";
      fp.normalize = mf::parse_normalize_mode(normalize);
      if (!bone_list.empty()) fp.bones = parse_id_list(bone_list);
      const mf::Exam a = mf::load_exam(base_dir);
      const mf::Exam b = mf::load_exam(follow_dir);
      const auto r = mf::run_followup(a, b, fp);
      mf::write_followup_bundle(fu_out, r, fp, {{"baseline", base_dir}, {"followup", follow_dir}});
      report_warnings(r.warnings);
      std::cout << "followup: " << r.bones.size() << " bones written to " << fu_out << "\n";
      return r.exit_code();
    }
    if (*sp) {
      spp.threads = threads;
      spp.normalize = mf::parse_normalize_mode(sp_normalize);
      if (!vert_list.empty()) spp.vertebrae = parse_id_list(vert_list);
      std::vector<mf::fs::path> dirs(exam_dirs.begin(), exam_dirs.end());
      const int code = mf::cmd_spine(dirs, sp_out, spp);
      std::cout << "spine: report written to " << sp_out << "\n";
      return code;
    }
    if (*ph) {
      mf::cmd_phantom(kind, ph_out, seed);
      std::cout << "phantom " << kind << " written to " << ph_out << "\n";
      return 0;
    }
    if (*ev) {
      const mf::fs::path out = ev_out.empty() ? mf::fs::path(bundle_dir) / "viewer" : mf::fs::path(ev_out);
      const auto manifest = mf::cmd_export_viewer(bundle_dir, out);
      std::cout << "export-viewer: " << manifest["meshes"].size() << " meshes written to " << out.string() << "\n";
      return 0;
    }
    if (*mp) {
      auto mesh = mf::load_mesh(mp_mesh);
      const auto grid = mf::prepare_intensities(
          mf::load_volume(mp_volume, mf::VolumeFormat::automatic, mp_labels), mf::parse_normalize_mode(mp_normalize));
      std::vector<mf::MappingKind> kinds;
      if (mp_criterion == "all") kinds.assign(mf::kAllMappingKinds.begin(), mf::kAllMappingKinds.end());
      else kinds.push_back(mf::parse_mapping_kind(mp_criterion));
      mf::Json entries = mf::Json::array();
      std::optional<mf::VoxelSides> sides;
      for (auto k : kinds) {
        if (k != mf::MappingKind::euclidean && !sides) sides = mf::classify_voxel_side(grid, mp_label);
        const auto tex = mf::map_grey_levels(mesh, grid, {k, mp_radius}, sides ? &*sides : nullptr,
                                             mf::resolve_threads(threads));
        entries.push_back(mf::texture_report_entry(mp_label, "input", tex));
        mesh.set_channel(tex.values);
      }
      mf::save_mesh(mp_out, mesh);
      if (!mp_report.empty()) mf::detail::write_file(mp_report, mf::Json{{"entries", entries}}.dump(2) + "\n");
      return 0;
    }
    if (*fz) {
      auto mesh = mf::load_mesh(fz_mesh);
      mf::FusionParams p{fz_mode == "multiply" ? mf::FusionMode::multiply : mf::FusionMode::linear, fz_eps};
      auto f = mf::fuse(mesh.channel("d1"), mesh.channel("d2"), p);
      if (p.mode == mf::FusionMode::linear) f.name = mf::epsilon_channel_name(fz_eps);
      const std::string name = f.name;
      mesh.set_channel(std::move(f));
      if (!fz_sweep.empty())
        for (auto& g : mf::fuse_sweep(mesh.channel("d1"), mesh.channel("d2"), mf::parse_epsilon_list(fz_sweep)))
          mesh.set_channel(std::move(g));
      mf::save_colored_mesh(fz_out, mesh, name, mf::default_colormap(mesh.channel(name)));
      return 0;
    }
  } catch (const mf::Error& e) {
    std::cerr << "error [" << mf::to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
