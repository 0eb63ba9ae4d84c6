#pragma once

#include <filesystem>

#include "pcdiff/geometry.hpp"

namespace pcdiff {

// ASCII PLY, vertex element only. Coordinates are stored as float32 with
// 9 significant digits, which round-trips float32 exactly. A non-identity
// world transform is kept in `comment world_scale` / `comment world_offset`
// header lines.
PointCloud load_ply(const std::filesystem::path& path);
void save_ply(const std::filesystem::path& path, const PointCloud& cloud);

// Pose files: one keypoint per line, whitespace separated "x y z".
Pose load_pose(const std::filesystem::path& path);
void save_pose(const std::filesystem::path& path, const Pose& pose);

}  // namespace pcdiff
