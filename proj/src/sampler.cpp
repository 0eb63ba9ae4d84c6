#include "pcdiff/sampler.hpp"

#include <cmath>

#include "pcdiff/error.hpp"
#include "pcdiff/rng.hpp"

namespace pcdiff {

namespace {

// Reverse steps from `from` down to 1 on the rows flagged in `free`; other
// rows are clean context held at step 0.
void denoise(const DenoiserParams& params, const Schedule& sched, Matrix& x, const std::vector<std::uint8_t>& free,
             const Matrix& keypoints, int from, Rng& rng, const std::function<void(int)>& after_step = {}) {
    std::vector<int> steps(x.rows, 0);
    for (int t = from; t >= 1; --t) {
        for (std::size_t i = 0; i < x.rows; ++i) steps[i] = free[i] ? t : 0;
        const ForwardPass pass(params, x, steps, keypoints);
        const Matrix& eps = pass.output();
        const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
        const double inv = 1.0 / std::sqrt(sched.alpha(t));
        const double sigma = t > 1 ? std::sqrt(sched.beta(t)) : 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            if (!free[i]) continue;
            for (std::size_t c = 0; c < 3; ++c) {
                const double z = t > 1 ? rng.normal() : 0.0;
                double& v = x(i, c);
                v = (v - coef * eps(i, c)) * inv + sigma * z;
                if (!std::isfinite(v)) throw Error("sampler: non-finite value at t = " + std::to_string(t));
            }
        }
        if (after_step) after_step(t - 1);
    }
}

PointCloud as_cloud(const Matrix& x, const WorldTransform& world) {
    PointCloud out;
    out.points = to_points(x);
    out.world = world;
    return out;
}

}  // namespace

PointCloud sample(const DenoiserParams& params, const Schedule& sched, const SampleRequest& req, const TraceFn& trace) {
    if (req.n_points < 1) throw Error("sampler: n_points must be >= 1");
    if (req.trace_every < 0) throw Error("sampler: trace_every must be >= 0");
    req.pose.validate();
    Rng rng(req.seed);
    Matrix x(static_cast<std::size_t>(req.n_points), 3);
    for (double& v : x.data) v = rng.normal();
    const int T = sched.steps();
    if (trace && req.trace_every > 0) trace(T, as_cloud(x, req.pose.world));
    const std::vector<std::uint8_t> free(x.rows, 1);
    denoise(params, sched, x, free, to_matrix(req.pose.keypoints), T, rng, [&](int t) {
        if (trace && req.trace_every > 0 && (t % req.trace_every == 0 || t == 0)) trace(t, as_cloud(x, req.pose.world));
    });
    return as_cloud(x, req.pose.world);
}

PointCloud complete(const DenoiserParams& params, const Schedule& sched, const PointCloud& partial, const Pose& pose,
                    int k, std::uint64_t seed) {
    if (partial.size() == 0) throw Error("sampler: completion needs at least one given point");
    if (k < 0) throw Error("sampler: k must be >= 0");
    partial.validate();
    pose.validate();
    if (k == 0) return partial;

    const std::size_t n = partial.size() + static_cast<std::size_t>(k);
    Rng rng(seed);
    Matrix x(n, 3);
    std::vector<std::uint8_t> free(n, 0);
    for (std::size_t i = 0; i < partial.size(); ++i)
        for (std::size_t c = 0; c < 3; ++c) x(i, c) = partial.points[i][c];
    for (std::size_t i = partial.size(); i < n; ++i) {
        free[i] = 1;
        for (std::size_t c = 0; c < 3; ++c) x(i, c) = rng.normal();
    }
    denoise(params, sched, x, free, to_matrix(pose.keypoints), sched.steps(), rng);
    PointCloud out = as_cloud(x, partial.world);
    // the given points are returned exactly as passed in
    for (std::size_t i = 0; i < partial.size(); ++i) out.points[i] = partial.points[i];
    return out;
}

PointCloud pose_edit(const DenoiserParams& params, const Schedule& sched, const PointCloud& source,
                     const Pose& target_pose, int t_edit, std::uint64_t seed) {
    if (t_edit < 1 || t_edit > sched.steps())
        throw Error("sampler: t_edit " + std::to_string(t_edit) + " outside [1, " + std::to_string(sched.steps()) +
                    "]");
    source.validate();
    target_pose.validate();
    Rng rng(seed);
    Matrix eps(source.size(), 3);
    for (double& v : eps.data) v = rng.normal();
    Matrix x = q_sample(to_matrix(source.points), t_edit, eps, sched);
    const std::vector<std::uint8_t> free(x.rows, 1);
    denoise(params, sched, x, free, to_matrix(target_pose.keypoints), t_edit, rng);
    return as_cloud(x, target_pose.world);
}

}  // namespace pcdiff
