#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcdiff/geometry.hpp"
#include "pcdiff/metrics.hpp"

namespace pcdiff {

struct Joint {
    std::string name;
    int parent;   // -1 for the root
    Vec3 offset;  // rest-pose offset from the parent, cm
};

// Capsule between two joints. `mirror` names the segment reflected onto
// this one through the sagittal plane (x -> -x); a midline segment mirrors
// itself, and right-side segments mirror their left twin.
struct Segment {
    int a;
    int b;
    double radius;
    int mirror;
};

// One rotational degree of freedom, applied to the bone ending at `joint`.
// Mirrored dofs negate y and z rotations so equal angles give mirror
// images of the left side.
struct Dof {
    std::string name;
    int joint;
    int axis;  // 0 = x, 1 = y, 2 = z
    double lo;  // degrees
    double hi;
    bool mirrored = false;
};

// Cone hung from the root joint. Radius grows linearly from top to hem and
// is displaced by sum_i mode_i * sin(i * azimuth) scaled with depth.
struct SkirtSpec {
    double top_height;   // above the root, cm
    double length;
    double top_radius;
    double hem_radius;
    int fold_modes = 3;
    double fold_amplitude;  // mode coefficients are uniform in [-A, A]
    double sway_gain;       // hem follows the mean knee offset
    double flare_gain;      // hem widens with knee separation
};

struct FigureSpec {
    std::vector<Joint> joints;
    std::vector<Segment> segments;
    std::vector<Dof> dofs;
    SkirtSpec skirt;
    double skirt_fraction = 0.5;
    int n_points = 512;
    std::uint64_t layout_seed = 1;
    int split_dof = 0;  // train/test split is on this dof's range

    // 16 keypoints, 16 dofs, capsule body and a skirt.
    static FigureSpec standard();
    void validate() const;
    std::size_t joint_count() const { return joints.size(); }
    // Height of the skirt top in world cm at every pose.
    double waist_height() const;
};

struct FrameParams {
    std::vector<double> angles;  // degrees, one per dof
    std::vector<double> modes;   // one per fold mode
};

struct Frame {
    Pose pose;
    PointCloud cloud;
    std::vector<std::uint8_t> skirt;  // 1 for skirt points
    FrameParams params;
};

// Joint positions in world cm for the given angles.
std::vector<Vec3> forward_kinematics(const FigureSpec& spec, std::span<const double> angles);

// Fold modes drawn from `seed`, independent of the pose.
std::vector<double> draw_modes(const FigureSpec& spec, std::uint64_t seed);

Frame make_frame(const FigureSpec& spec, std::span<const double> angles, std::uint64_t seed);
// Same with explicit mode coefficients.
Frame make_frame_with_modes(const FigureSpec& spec, std::span<const double> angles, std::span<const double> modes);

// Region holding the skirt (z at or below the waist).
HalfSpace skirt_region(const FigureSpec& spec);

struct ManifestEntry {
    int id = 0;
    std::string split;  // "train" or "test"
    std::filesystem::path pose_path;   // absolute
    std::filesystem::path cloud_path;  // absolute
    std::optional<HalfSpace> skirt_region;
    std::vector<double> angles;
    std::vector<double> modes;
};

struct Manifest {
    std::filesystem::path root;
    std::string generator;  // JSON text describing how the data was made
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const;
};

Manifest load_manifest(const std::filesystem::path& path);
// Paths are written relative to the manifest directory when possible.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct DatasetOptions {
    int frames = 2000;
    std::uint64_t seed = 0;
    double split_ratio = 0.8;
};

// Writes poses/, clouds/ and manifest.jsonl under `out_dir`. Train frames
// take the lower split_ratio share of the split dof's range, test frames
// the rest.
Manifest gen_dataset(const FigureSpec& spec, const DatasetOptions& options, const std::filesystem::path& out_dir);

}  // namespace pcdiff
