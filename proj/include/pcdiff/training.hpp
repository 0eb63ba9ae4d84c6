#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pcdiff/denoiser.hpp"
#include "pcdiff/geometry.hpp"
#include "pcdiff/rng.hpp"
#include "pcdiff/schedule.hpp"

namespace pcdiff {

struct Manifest;
class Settings;

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int total_steps = 1000;
    std::uint64_t seed = 0;
    ScheduleSpec schedule;
    DenoiserConfig denoiser;
    int checkpoint_every = 1000;
    // Share of batch items trained as completion tasks.
    double completion_ratio = 0.0;
    // Points per cloud after subsampling.
    int points = 512;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int workers = 1;

    void validate() const;
};

// A normalized (cloud, pose) pair.
struct TrainItem {
    PointCloud cloud;
    Pose pose;
};

struct AdamState {
    DenoiserParams m;
    DenoiserParams v;
    std::int64_t step = 0;
};

AdamState init_adam(const DenoiserConfig& config);

struct LossResult {
    double loss = 0.0;
    DenoiserParams grads;
};

// Noise-prediction loss over a batch. Per item: t ~ U{1..T}, eps ~ N(0, I),
// mean squared error between eps and the prediction over the noised points.
// With probability completion_ratio an item becomes a completion task: a
// random contiguous patch of N/8..N/2 points is noised, the rest are clean
// context tokens at step 0. Items may run on up to `workers` threads;
// gradients are reduced in item order so the result does not depend on it.
LossResult loss(const DenoiserParams& params, std::span<const TrainItem> batch, const Schedule& sched, Rng& rng,
                double completion_ratio = 0.0, int workers = 1);

// Bias-corrected Adam update in place.
void adam_update(DenoiserParams& params, AdamState& state, const DenoiserParams& grads, const TrainConfig& cfg);

// One optimizer step; returns the batch loss. Throws on a non-finite loss,
// naming the step.
double train_step(DenoiserParams& params, AdamState& state, std::span<const TrainItem> batch, const TrainConfig& cfg,
                  const Schedule& sched, Rng& rng);

struct TrainState {
    DenoiserParams params;
    AdamState adam;
    std::int64_t step = 0;  // completed steps
    Rng rng;                // noise stream
};

TrainState init_train_state(const TrainConfig& cfg);

// Batch composition for a step: item indices drawn from per-epoch
// permutations of the dataset seeded from (seed, epoch).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size, int batch_size,
                                       std::int64_t step);

// Advances `state` until state.step == until_step; on_step sees each
// completed step number and its loss.
void run_training(TrainState& state, std::span<const TrainItem> data, const TrainConfig& cfg, std::int64_t until_step,
                  const std::function<void(std::int64_t, double)>& on_step = {});

// Training split loaded from a manifest, subsampled to cfg.points and
// normalized with one dataset-wide scale.
struct Dataset {
    std::vector<TrainItem> items;
    double scale = 1.0;  // cm per normalized unit
};

// Scale = largest pose-centred extent over the clouds, so all of them fit
// the unit ball.
double dataset_scale(std::span<const PointCloud> clouds, std::span<const Pose> poses);
// Pose-centred normalization with an explicit scale.
TrainItem normalize_with_scale(const PointCloud& cloud, const Pose& pose, double scale);

Dataset load_dataset(const Manifest& manifest, const std::string& split, int points, std::uint64_t seed);

// Item whose pose is closest to the mean pose; its cloud replayed for every
// pose is the pose-agnostic baseline.
std::size_t mean_pose_index(const Dataset& data);

struct Checkpoint;

// Full training run driven by resolved settings. Writes loss.csv (step,
// loss), timing.csv (step, seconds), ckpt_<step>.bin every
// checkpoint_every steps and final.bin under out_dir. With `resume` the
// run continues from that checkpoint.
Checkpoint train(const Manifest& manifest, const Settings& settings, const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace pcdiff
