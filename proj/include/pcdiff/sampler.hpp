#pragma once

#include <cstdint>
#include <functional>

#include "pcdiff/denoiser.hpp"
#include "pcdiff/geometry.hpp"
#include "pcdiff/schedule.hpp"

namespace pcdiff {

// Called with (t, X^(t)) for traced steps.
using TraceFn = std::function<void(int, const PointCloud&)>;

struct SampleRequest {
    Pose pose;  // normalized
    int n_points = 512;
    std::uint64_t seed = 0;
    int trace_every = 0;  // 0 disables tracing
};

// Ancestral sampling from X^(T) ~ N(0, I):
//   X^(t-1) = (X^(t) - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z
// with z = 0 at t = 1. The result carries the pose's world transform.
PointCloud sample(const DenoiserParams& params, const Schedule& sched, const SampleRequest& req,
                  const TraceFn& trace = {});

// Generates k new points next to the clean `partial` points, which enter the
// network as step-0 context tokens and are copied to the output unchanged
// (first in the output, in input order).
PointCloud complete(const DenoiserParams& params, const Schedule& sched, const PointCloud& partial, const Pose& pose,
                    int k, std::uint64_t seed);

// Noises `source` to t_edit and denoises it back under `target_pose`.
PointCloud pose_edit(const DenoiserParams& params, const Schedule& sched, const PointCloud& source,
                     const Pose& target_pose, int t_edit, std::uint64_t seed);

}  // namespace pcdiff
