#include "pcdiff/geometry.hpp"

#include <cmath>
#include <numeric>

#include "pcdiff/error.hpp"
#include "pcdiff/rng.hpp"

namespace pcdiff {

double norm(const Vec3& a) { return std::sqrt(squared_norm(a)); }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

namespace {

bool finite(const Vec3& p) { return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]); }

void check_transform(const WorldTransform& w, const char* what) {
    if (!(w.scale > 0.0) || !std::isfinite(w.scale) || !finite(w.offset))
        throw Error(std::string("geometry: ") + what + " world transform must have finite scale > 0");
}

}  // namespace

void PointCloud::validate() const {
    if (points.empty()) throw Error("geometry: point cloud is empty");
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!finite(points[i])) throw Error("geometry: point " + std::to_string(i) + " is not finite");
    check_transform(world, "cloud");
}

void Pose::validate() const {
    if (keypoints.size() < 2) throw Error("geometry: pose needs at least 2 keypoints");
    for (std::size_t i = 0; i < keypoints.size(); ++i)
        if (!finite(keypoints[i])) throw Error("geometry: keypoint " + std::to_string(i) + " is not finite");
    check_transform(world, "pose");
}

std::pair<PointCloud, Pose> normalize(const PointCloud& cloud, const Pose& pose) {
    cloud.validate();
    pose.validate();
    const PointCloud wc = denormalize(cloud);
    const Pose wp = denormalize(pose);

    Vec3 center{0.0, 0.0, 0.0};
    for (const auto& k : wp.keypoints) center = center + k;
    center = (1.0 / static_cast<double>(wp.size())) * center;

    bool all_same = true;
    double extent = 0.0;
    for (const auto& p : wc.points) {
        all_same = all_same && p == wc.points.front();
        extent = std::max(extent, norm(p - center));
    }
    if (wc.size() > 1 && all_same) throw Error("geometry: zero extent");
    // A lone point sitting on the centroid keeps unit scale.
    const double scale = extent > 0.0 ? extent : 1.0;
    const double inv = 1.0 / scale;

    PointCloud out;
    out.world = {scale, center};
    out.points.reserve(wc.size());
    for (const auto& p : wc.points) out.points.push_back(inv * (p - center));

    Pose op;
    op.world = out.world;
    op.keypoints.reserve(wp.size());
    for (const auto& k : wp.keypoints) op.keypoints.push_back(inv * (k - center));
    return {std::move(out), std::move(op)};
}

Pose normalize_pose(const Pose& pose, double scale) {
    pose.validate();
    if (!(scale > 0.0)) throw Error("geometry: normalization scale must be positive");
    const Pose wp = denormalize(pose);
    Vec3 center{0.0, 0.0, 0.0};
    for (const auto& k : wp.keypoints) center = center + k;
    center = (1.0 / static_cast<double>(wp.size())) * center;
    Pose out;
    out.world = {scale, center};
    for (const auto& k : wp.keypoints) out.keypoints.push_back((1.0 / scale) * (k - center));
    return out;
}

PointCloud denormalize(const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(cloud.world.apply(p));
    return out;
}

Pose denormalize(const Pose& pose) {
    Pose out;
    out.keypoints.reserve(pose.size());
    for (const auto& k : pose.keypoints) out.keypoints.push_back(pose.world.apply(k));
    return out;
}

PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
    if (n > cloud.size())
        throw Error("geometry: cannot subsample " + std::to_string(n) + " of " + std::to_string(cloud.size()) +
                    " points");
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(order.size() - i));
        std::swap(order[i], order[j]);
    }
    PointCloud out;
    out.world = cloud.world;
    out.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(cloud.points[order[i]]);
    return out;
}

Matrix to_matrix(const std::vector<Vec3>& points) {
    Matrix m(points.size(), 3);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t c = 0; c < 3; ++c) m(i, c) = points[i][c];
    return m;
}

std::vector<Vec3> to_points(const Matrix& m) {
    if (m.cols != 3) throw Error("geometry: expected an N x 3 matrix");
    std::vector<Vec3> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = {m(i, 0), m(i, 1), m(i, 2)};
    return out;
}

}  // namespace pcdiff
