#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cadnerf/camera.hpp"
#include "cadnerf/image.hpp"
#include "cadnerf/mesh.hpp"

namespace cadnerf {

struct LibrarySampling {
  int pose_count = 100;
  double radius = 2.0;
  int resolution = 128;

  bool operator==(const LibrarySampling&) const = default;
};

struct LibraryEntry {
  std::string model_id;
  TriangleMesh mesh;
  std::vector<CameraPose> poses;  // sorted by library pose index
  std::vector<MaskRaster> masks;  // aligned with poses
};

struct Library {
  std::vector<LibraryEntry> entries;
  LibrarySampling sampling;

  const LibraryEntry& entry(const std::string& model_id) const;
};

inline constexpr int kLibraryFormatVersion = 1;

/// Renders one silhouette per sampled pose for each model. Throws
/// InvalidInput (naming the model) for open meshes and EmptySilhouette when a
/// view misses the object.
Library build_library(const std::vector<std::pair<std::string, TriangleMesh>>& models, LibrarySampling sampling,
                      int threads = 1);
/// Loads meshes from disk; the model id is the file stem.
Library build_library(const std::vector<std::filesystem::path>& mesh_paths, LibrarySampling sampling,
                      int threads = 1);

void save_library(const Library& library, const std::filesystem::path& root);
Library load_library(const std::filesystem::path& root);

}  // namespace cadnerf
