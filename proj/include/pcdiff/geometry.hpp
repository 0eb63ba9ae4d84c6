#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pcdiff/tensor.hpp"

namespace pcdiff {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_norm(const Vec3& a) { return dot(a, a); }
double norm(const Vec3& a);
Vec3 cross(const Vec3& a, const Vec3& b);

// Map from stored (normalized) coordinates to world centimetres:
// world = scale * p + offset.
struct WorldTransform {
    double scale = 1.0;
    Vec3 offset{0.0, 0.0, 0.0};

    Vec3 apply(const Vec3& p) const { return scale * p + offset; }
    bool operator==(const WorldTransform&) const = default;
};

// N unordered points plus the transform back to world centimetres.
struct PointCloud {
    std::vector<Vec3> points;
    WorldTransform world;

    std::size_t size() const { return points.size(); }
    // Throws unless N >= 1, every coordinate is finite and scale > 0.
    void validate() const;
};

// J skeletal keypoints in the same frame as the paired cloud.
struct Pose {
    std::vector<Vec3> keypoints;
    WorldTransform world;

    std::size_t size() const { return keypoints.size(); }
    // Throws unless J >= 2, coordinates are finite and scale > 0.
    void validate() const;
};

// Recentres both at the pose centroid and scales uniformly so the cloud
// fits the closed unit ball. The inverse map is recorded in `world`.
std::pair<PointCloud, Pose> normalize(const PointCloud& cloud, const Pose& pose);

// Normalizes a pose alone using a known scale (cm per unit).
Pose normalize_pose(const Pose& pose, double scale);

PointCloud denormalize(const PointCloud& cloud);
Pose denormalize(const Pose& pose);

// n points drawn uniformly without replacement; deterministic for a seed.
PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

Matrix to_matrix(const std::vector<Vec3>& points);
std::vector<Vec3> to_points(const Matrix& m);

}  // namespace pcdiff
