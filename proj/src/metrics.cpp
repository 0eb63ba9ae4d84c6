#include "pcdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcdiff/error.hpp"

namespace pcdiff {

namespace {
constexpr std::size_t kLeafSize = 8;

double sq_dist(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}
}  // namespace

NNIndex::NNIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw Error("metrics: cannot index an empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, points_.size(), 0);
}

int NNIndex::build(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, -1, 0.0, -1, -1});
    if (end - begin <= kLeafSize) return id;

    // split on the widest axis at the median
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], points_[order_[i]][c]);
            hi[c] = std::max(hi[c], points_[order_[i]][c]);
        }
    int axis = 0;
    for (int c = 1; c < 3; ++c)
        if (hi[c] - lo[c] > hi[axis] - lo[axis]) axis = c;
    if (hi[axis] == lo[axis]) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void NNIndex::search(int node, const Vec3& q, double& best) const {
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.axis < 0) {
        for (std::size_t i = n.begin; i < n.end; ++i) best = std::min(best, sq_dist(q, points_[order_[i]]));
        return;
    }
    // Left holds coordinates <= split, right holds >= split.
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best) search(far, q, best);
}

double NNIndex::nearest_squared(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(0, q, best);
    return best;
}

double NNIndex::nearest(const Vec3& q) const { return std::sqrt(nearest_squared(q)); }

double directional_distance(const PointCloud& a, const PointCloud& b) {
    if (a.size() == 0 || b.size() == 0) throw Error("metrics: empty cloud");
    const PointCloud wa = denormalize(a);
    const NNIndex index(denormalize(b).points);
    double sum = 0.0;
    for (const auto& p : wa.points) sum += std::sqrt(index.nearest_squared(p));
    return sum / static_cast<double>(wa.size());
}

double chamfer(const PointCloud& a, const PointCloud& b) {
    return 0.5 * (directional_distance(a, b) + directional_distance(b, a));
}

SurfaceDistances surface_distances(const PointCloud& model, const PointCloud& scan) {
    const double m2s = directional_distance(model, scan);
    const double s2m = directional_distance(scan, model);
    return {0.5 * (m2s + s2m), m2s, s2m};
}

bool contains(const Region& region, const Vec3& p) {
    if (const auto* box = std::get_if<Box>(&region)) {
        for (int c = 0; c < 3; ++c)
            if (p[c] < box->lo[c] || p[c] > box->hi[c]) return false;
        return true;
    }
    const auto& hs = std::get<HalfSpace>(region);
    return dot(hs.normal, p) <= hs.offset;
}

double region_fraction(const PointCloud& cloud, const Region& region) {
    if (cloud.size() == 0) return 0.0;
    std::size_t inside = 0;
    for (const auto& p : cloud.points) inside += contains(region, cloud.world.apply(p)) ? 1 : 0;
    return static_cast<double>(inside) / static_cast<double>(cloud.size());
}

PointCloud crop(const PointCloud& cloud, const Region& region) {
    PointCloud out;
    for (const auto& p : cloud.points) {
        const Vec3 w = cloud.world.apply(p);
        if (contains(region, w)) out.points.push_back(w);
    }
    return out;
}

double diversity(std::span<const PointCloud> clouds) {
    if (clouds.size() < 2) throw Error("metrics: diversity needs at least two clouds");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < clouds.size(); ++i)
        for (std::size_t j = i + 1; j < clouds.size(); ++j, ++pairs) sum += chamfer(clouds[i], clouds[j]);
    return sum / static_cast<double>(pairs);
}

}  // namespace pcdiff
