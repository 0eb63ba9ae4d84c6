#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "pcdiff/geometry.hpp"

namespace pcdiff {

// Exact Euclidean nearest-neighbour index over a fixed 3D point set.
class NNIndex {
public:
    explicit NNIndex(std::vector<Vec3> points);

    // Squared distance to the nearest indexed point.
    double nearest_squared(const Vec3& q) const;
    double nearest(const Vec3& q) const;
    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        std::size_t begin, end;  // range in order_
        int axis;                // -1 for leaves
        double split;
        int left, right;
    };
    int build(std::size_t begin, std::size_t end, int depth);
    void search(int node, const Vec3& q, double& best) const;

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

// Mean over points of `a` of the distance (world cm) to the nearest point of `b`.
double directional_distance(const PointCloud& a, const PointCloud& b);

// 0.5 * (directional(a, b) + directional(b, a)), unsquared, in cm.
double chamfer(const PointCloud& a, const PointCloud& b);

// Model-to-scan and scan-to-model distances with their Chamfer average.
struct SurfaceDistances {
    double chamfer;
    double m2s;
    double s2m;
};
SurfaceDistances surface_distances(const PointCloud& model, const PointCloud& scan);

// Closed box [lo, hi] in world cm.
struct Box {
    Vec3 lo;
    Vec3 hi;
};
// {p : normal . p <= offset} in world cm.
struct HalfSpace {
    Vec3 normal;
    double offset;

    HalfSpace complement() const { return {-1.0 * normal, -offset}; }
};
using Region = std::variant<Box, HalfSpace>;

bool contains(const Region& region, const Vec3& world_point);

// Fraction of points (mapped to world cm) inside the region.
double region_fraction(const PointCloud& cloud, const Region& region);

// World-frame points of `cloud` that lie inside `region`.
PointCloud crop(const PointCloud& cloud, const Region& region);

// Mean Chamfer over all unordered pairs; needs at least two clouds.
double diversity(std::span<const PointCloud> clouds);

}  // namespace pcdiff
