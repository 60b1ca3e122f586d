#include "cadnerf/library.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "cadnerf/errors.hpp"
#include "cadnerf/parallel.hpp"

namespace cadnerf {

namespace fs = std::filesystem;

const LibraryEntry& Library::entry(const std::string& model_id) const {
  for (const auto& e : entries) {
    if (e.model_id == model_id) return e;
  }
  fail(ErrorKind::InvalidInput, "model '" + model_id + "' not in library");
}

Library build_library(const std::vector<std::pair<std::string, TriangleMesh>>& models, LibrarySampling sampling,
                      int threads) {
  if (sampling.pose_count < 1 || sampling.radius <= 0.0 || sampling.resolution < 8) {
    fail(ErrorKind::InvalidInput, "library sampling needs pose_count >= 1, radius > 0, resolution >= 8");
  }
  Library lib;
  lib.sampling = sampling;
  const auto poses = sample_library_poses(sampling.pose_count, sampling.radius, sampling.resolution);
  std::set<std::string> seen;
  for (const auto& [id, mesh] : models) {
    if (!seen.insert(id).second) fail(ErrorKind::InvalidInput, "duplicate model id '" + id + "'");
    if (!mesh.watertight) fail(ErrorKind::InvalidInput, "model '" + id + "' is not watertight");
    LibraryEntry entry{id, mesh, poses, std::vector<MaskRaster>(poses.size())};
    std::vector<char> empty(poses.size(), 0);
    parallel_for(poses.size(), threads, [&](std::size_t i) {
      auto result = render_silhouette(mesh, poses[i]);
      empty[i] = result.empty;
      entry.masks[i] = std::move(result.mask);
    });
    for (std::size_t i = 0; i < poses.size(); ++i) {
      if (empty[i]) {
        fail(ErrorKind::EmptySilhouette,
             "model '" + id + "' has an empty silhouette at pose " + std::to_string(i) + " (object escaped frustum)");
      }
    }
    lib.entries.push_back(std::move(entry));
  }
  return lib;
}

Library build_library(const std::vector<fs::path>& mesh_paths, LibrarySampling sampling, int threads) {
  std::vector<std::pair<std::string, TriangleMesh>> models;
  for (const auto& p : mesh_paths) models.emplace_back(p.stem().string(), load_mesh(p));
  return build_library(models, sampling, threads);
}

void save_library(const Library& library, const fs::path& root) {
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["format_version"] = kLibraryFormatVersion;
  manifest["pose_count"] = library.sampling.pose_count;
  manifest["radius"] = library.sampling.radius;
  manifest["resolution"] = library.sampling.resolution;
  manifest["models"] = nlohmann::json::array();
  for (const auto& e : library.entries) {
    manifest["models"].push_back(e.model_id);
    const fs::path dir = root / e.model_id;
    fs::create_directories(dir / "masks");
    save_obj(dir / "model.obj", e.mesh);
    save_poses_json(dir / "poses.json", e.poses);
    for (std::size_t i = 0; i < e.masks.size(); ++i) {
      write_mask_png(dir / "masks" / (std::to_string(i) + ".png"), e.masks[i]);
    }
  }
  std::ofstream out(root / "manifest.json");
  if (!out) fail(ErrorKind::Io, "cannot write manifest in " + root.string());
  out << manifest.dump(2) << '\n';
}

Library load_library(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) fail(ErrorKind::CorruptLibrary, "missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptLibrary, manifest_path.string() + ": " + e.what());
  }
  Library lib;
  try {
    if (manifest.at("format_version").get<int>() != kLibraryFormatVersion) {
      fail(ErrorKind::CorruptLibrary, "unsupported library format version");
    }
    lib.sampling.pose_count = manifest.at("pose_count").get<int>();
    lib.sampling.radius = manifest.at("radius").get<double>();
    lib.sampling.resolution = manifest.at("resolution").get<int>();
    for (const auto& id_json : manifest.at("models")) {
      const auto id = id_json.get<std::string>();
      const fs::path dir = root / id;
      if (!fs::exists(dir / "model.obj")) fail(ErrorKind::CorruptLibrary, "missing " + (dir / "model.obj").string());
      if (!fs::exists(dir / "poses.json")) fail(ErrorKind::CorruptLibrary, "missing " + (dir / "poses.json").string());
      LibraryEntry entry;
      entry.model_id = id;
      entry.mesh = load_mesh(dir / "model.obj");
      entry.poses = load_poses_json(dir / "poses.json");
      if (static_cast<int>(entry.poses.size()) != lib.sampling.pose_count) {
        fail(ErrorKind::CorruptLibrary, "model '" + id + "': manifest pose_count " +
                                            std::to_string(lib.sampling.pose_count) + " but " +
                                            std::to_string(entry.poses.size()) + " pose records");
      }
      for (int i = 0; i < lib.sampling.pose_count; ++i) {
        const fs::path mask_path = dir / "masks" / (std::to_string(i) + ".png");
        if (!fs::exists(mask_path)) fail(ErrorKind::CorruptLibrary, "missing mask file " + mask_path.string());
        entry.masks.push_back(read_mask_png(mask_path));
      }
      lib.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptLibrary, manifest_path.string() + ": " + e.what());
  }
  return lib;
}

}  // namespace cadnerf
