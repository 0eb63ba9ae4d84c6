#include "pcdiff/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "pcdiff/checkpoint.hpp"
#include "pcdiff/config.hpp"
#include "pcdiff/error.hpp"
#include "pcdiff/ply.hpp"
#include "pcdiff/synthdata.hpp"

namespace pcdiff {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw Error("training: learning rate must be a finite non-negative number");
    if (batch_size < 1 || total_steps < 1 || checkpoint_every < 1 || points < 1 || workers < 1)
        throw Error("training: batch_size, steps, checkpoint_every, points and workers must be >= 1");
    if (!(completion_ratio >= 0.0 && completion_ratio <= 1.0))
        throw Error("training: completion ratio must lie in [0, 1]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
        throw Error("training: invalid Adam hyperparameters");
    denoiser.validate();
    Schedule{schedule};
}

AdamState init_adam(const DenoiserConfig& config) {
    return {DenoiserParams::zeros(config), DenoiserParams::zeros(config), 0};
}

namespace {

// What one batch item needs after its random draws are made.
struct ItemTask {
    Matrix points;           // network input, N x 3
    std::vector<int> steps;  // per point; 0 for clean context
    Matrix keypoints;
    Matrix eps;
    std::size_t noised = 0;
};

// K points nearest to an anchor, ties broken by index.
std::vector<std::size_t> patch(const PointCloud& cloud, std::size_t anchor, std::size_t k) {
    std::vector<std::size_t> idx(cloud.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Vec3 a = cloud.points[anchor];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return squared_norm(cloud.points[x] - a) < squared_norm(cloud.points[y] - a);
    });
    idx.resize(k);
    return idx;
}

ItemTask draw_task(const TrainItem& item, const Schedule& sched, Rng& rng, double completion_ratio) {
    const std::size_t n = item.cloud.size();
    ItemTask task;
    const int t = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(sched.steps())));
    std::vector<std::uint8_t> noised(n, 1);
    if (completion_ratio > 0.0 && rng.uniform() < completion_ratio && n >= 2) {
        const std::size_t kmin = std::max<std::size_t>(1, n / 8);
        const std::size_t kmax = std::max(kmin, n / 2);
        const std::size_t anchor = rng.index(n);
        const std::size_t k = kmin + rng.index(kmax - kmin + 1);
        std::fill(noised.begin(), noised.end(), 0);
        for (std::size_t i : patch(item.cloud, anchor, k)) noised[i] = 1;
    }
    task.eps = Matrix(n, 3);
    for (double& e : task.eps.data) e = rng.normal();

    const double a = std::sqrt(sched.alpha_bar(t));
    const double s = std::sqrt(1.0 - sched.alpha_bar(t));
    task.points = Matrix(n, 3);
    task.steps.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c)
            task.points(i, c) = noised[i] ? a * item.cloud.points[i][c] + s * task.eps(i, c) : item.cloud.points[i][c];
        if (noised[i]) {
            task.steps[i] = t;
            ++task.noised;
        }
    }
    task.keypoints = to_matrix(item.pose.keypoints);
    return task;
}

void add_into(DenoiserParams& total, const DenoiserParams& g) {
    auto dst = total.tensors();
    const auto src = g.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        double* d = dst[i].second->data.data();
        const double* s = src[i].second->data.data();
        for (std::size_t j = 0; j < dst[i].second->size(); ++j) d[j] += s[j];
    }
}

// Loss and gradient of one item; grads must be zero on entry.
double item_loss(const DenoiserParams& params, const ItemTask& task, std::size_t batch, DenoiserParams& grads) {
    const ForwardPass pass(params, task.points, task.steps, task.keypoints);
    const Matrix& out = pass.output();
    const double denom = 3.0 * static_cast<double>(task.noised);
    Matrix upstream(out.rows, 3);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.rows; ++i) {
        if (task.steps[i] == 0) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = out(i, c) - task.eps(i, c);
            sum += d * d;
            upstream(i, c) = 2.0 * d / (denom * static_cast<double>(batch));
        }
    }
    pass.backward(upstream, grads);
    return sum / denom;
}

}  // namespace

LossResult loss(const DenoiserParams& params, std::span<const TrainItem> batch, const Schedule& sched, Rng& rng,
                double completion_ratio, int workers) {
    if (batch.empty()) throw Error("training: empty batch");
    std::vector<ItemTask> tasks;
    tasks.reserve(batch.size());
    for (const auto& item : batch) tasks.push_back(draw_task(item, sched, rng, completion_ratio));

    LossResult result{0.0, DenoiserParams::zeros(params.config)};
    const std::size_t lanes = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, batch.size());
    std::vector<DenoiserParams> buffers(lanes, DenoiserParams::zeros(params.config));
    std::vector<double> losses(batch.size(), 0.0);

    // Items are evaluated in waves of `lanes`; every gradient is then added
    // in item order, so the sum is the same for any worker count.
    for (std::size_t start = 0; start < batch.size(); start += lanes) {
        const std::size_t count = std::min(lanes, batch.size() - start);
        if (count == 1) {
            losses[start] = item_loss(params, tasks[start], batch.size(), buffers[0]);
        } else {
            std::vector<std::thread> threads;
            std::vector<std::exception_ptr> errors(count);
            for (std::size_t w = 0; w < count; ++w)
                threads.emplace_back([&, w] {
                    try {
                        losses[start + w] = item_loss(params, tasks[start + w], batch.size(), buffers[w]);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            for (auto& th : threads) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        for (std::size_t w = 0; w < count; ++w) {
            add_into(result.grads, buffers[w]);
            for (auto& [name, m] : buffers[w].tensors()) m->fill(0.0);
        }
    }
    for (double l : losses) result.loss += l;
    result.loss /= static_cast<double>(batch.size());
    return result;
}

void adam_update(DenoiserParams& params, AdamState& state, const DenoiserParams& grads, const TrainConfig& cfg) {
    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto p = params.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    const auto g = grads.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
        double* pd = p[i].second->data.data();
        double* md = m[i].second->data.data();
        double* vd = v[i].second->data.data();
        const double* gd = g[i].second->data.data();
        for (std::size_t j = 0; j < p[i].second->size(); ++j) {
            md[j] = b1 * md[j] + (1.0 - b1) * gd[j];
            vd[j] = b2 * vd[j] + (1.0 - b2) * gd[j] * gd[j];
            const double mhat = md[j] / c1;
            const double vhat = vd[j] / c2;
            pd[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

double train_step(DenoiserParams& params, AdamState& state, std::span<const TrainItem> batch, const TrainConfig& cfg,
                  const Schedule& sched, Rng& rng) {
    const LossResult r = loss(params, batch, sched, rng, cfg.completion_ratio, cfg.workers);
    if (!std::isfinite(r.loss))
        throw Error("training: non-finite loss at step " + std::to_string(state.step + 1));
    adam_update(params, state, r.grads, cfg);
    return r.loss;
}

TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState s{init_params(cfg.denoiser, mix_seed(cfg.seed, 2)), init_adam(cfg.denoiser), 0,
                 Rng(mix_seed(cfg.seed, 1))};
    return s;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size, int batch_size,
                                       std::int64_t step) {
    if (dataset_size == 0) throw Error("training: empty dataset");
    const std::uint64_t order_seed = mix_seed(seed, 3);
    std::vector<std::size_t> perm;
    std::uint64_t perm_epoch = UINT64_MAX;
    std::vector<std::size_t> out;
    for (int b = 0; b < batch_size; ++b) {
        const std::uint64_t pos = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                                  static_cast<std::uint64_t>(b);
        const std::uint64_t epoch = pos / dataset_size;
        if (epoch != perm_epoch) {
            perm.resize(dataset_size);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(mix_seed(order_seed, epoch));
            for (std::size_t i = dataset_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
            perm_epoch = epoch;
        }
        out.push_back(perm[pos % dataset_size]);
    }
    return out;
}

void run_training(TrainState& state, std::span<const TrainItem> data, const TrainConfig& cfg, std::int64_t until_step,
                  const std::function<void(std::int64_t, double)>& on_step) {
    if (data.empty()) throw Error("training: no training items");
    const Schedule sched(cfg.schedule);
    std::vector<TrainItem> batch;
    while (state.step < until_step) {
        batch.clear();
        for (std::size_t i : batch_indices(cfg.seed, data.size(), cfg.batch_size, state.step)) batch.push_back(data[i]);
        const double l = train_step(state.params, state.adam, batch, cfg, sched, state.rng);
        ++state.step;
        if (on_step) on_step(state.step, l);
    }
}

double dataset_scale(std::span<const PointCloud> clouds, std::span<const Pose> poses) {
    double scale = 0.0;
    for (std::size_t f = 0; f < clouds.size(); ++f) {
        const PointCloud wc = denormalize(clouds[f]);
        const Pose wp = denormalize(poses[f]);
        Vec3 c{0.0, 0.0, 0.0};
        for (const auto& k : wp.keypoints) c = c + k;
        c = (1.0 / static_cast<double>(wp.size())) * c;
        for (const auto& p : wc.points) scale = std::max(scale, norm(p - c));
    }
    if (!(scale > 0.0)) throw Error("geometry: zero extent");
    return scale;
}

TrainItem normalize_with_scale(const PointCloud& cloud, const Pose& pose, double scale) {
    TrainItem item;
    item.pose = normalize_pose(pose, scale);
    const PointCloud wc = denormalize(cloud);
    item.cloud.world = item.pose.world;
    const double inv = 1.0 / scale;
    for (const auto& p : wc.points) item.cloud.points.push_back(inv * (p - item.pose.world.offset));
    return item;
}

Dataset load_dataset(const Manifest& manifest, const std::string& split, int points, std::uint64_t seed) {
    const auto entries = manifest.split(split);
    if (entries.empty()) throw Error("training: manifest has no '" + split + "' entries");
    std::vector<PointCloud> clouds;
    std::vector<Pose> poses;
    for (const auto& e : entries) {
        PointCloud c = load_ply(e.cloud_path);
        Pose p = load_pose(e.pose_path);
        if (c.size() < static_cast<std::size_t>(points))
            throw Error("training: " + e.cloud_path.string() + " has " + std::to_string(c.size()) +
                        " points, fewer than " + std::to_string(points));
        if (!poses.empty() && p.size() != poses.front().size())
            throw Error("training: " + e.pose_path.string() + " has " + std::to_string(p.size()) +
                        " keypoints, expected " + std::to_string(poses.front().size()));
        // one shared subset seed keeps the same surface layout in every frame
        if (c.size() > static_cast<std::size_t>(points))
            c = subsample(c, static_cast<std::size_t>(points), mix_seed(seed, 4));
        clouds.push_back(std::move(c));
        poses.push_back(std::move(p));
    }
    Dataset d;
    d.scale = dataset_scale(clouds, poses);
    for (std::size_t i = 0; i < clouds.size(); ++i) d.items.push_back(normalize_with_scale(clouds[i], poses[i], d.scale));
    return d;
}

std::size_t mean_pose_index(const Dataset& data) {
    if (data.items.empty()) throw Error("training: empty dataset");
    const std::size_t j = data.items.front().pose.size();
    std::vector<Vec3> mean(j, Vec3{0.0, 0.0, 0.0});
    for (const auto& it : data.items)
        for (std::size_t k = 0; k < j; ++k) mean[k] = mean[k] + it.pose.keypoints[k];
    for (auto& m : mean) m = (1.0 / static_cast<double>(data.items.size())) * m;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < j; ++k) d += squared_norm(data.items[i].pose.keypoints[k] - mean[k]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

namespace {

// Rows of an existing loss log up to and including `step`.
std::string log_prefix(const fs::path& path, std::int64_t step) {
    std::ifstream in(path);
    std::string out, line;
    if (!in || !std::getline(in, line)) return "";
    out = line + "\n";
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) break;
        if (std::stoll(line.substr(0, comma)) > step) break;
        out += line + "\n";
    }
    return out;
}

std::string checkpoint_name(std::int64_t step) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "ckpt_%08lld.bin", static_cast<long long>(step));
    return buf;
}

}  // namespace

Checkpoint train(const Manifest& manifest, const Settings& settings, const fs::path& out_dir,
                 const std::optional<fs::path>& resume) {
    Checkpoint ck;
    if (resume) {
        ck = load_checkpoint(*resume);
        // only the run length and checkpoint cadence may change on resume
        for (const char* key : {"train.steps", "train.checkpoint_every", "run.workers"})
            ck.settings.set(key, settings.get(key));
    } else {
        ck.settings = settings;
    }
    const TrainConfig cfg = train_config(ck.settings);
    cfg.validate();
    const Dataset data = load_dataset(manifest, "train", cfg.points, cfg.seed);
    if (resume) {
        if (data.scale != ck.data_scale)
            throw Error("training: training data differs from the data the checkpoint was trained on");
        if (ck.state.step > cfg.total_steps)
            throw Error("training: checkpoint is already past train.steps = " + std::to_string(cfg.total_steps));
    } else {
        ck.state = init_train_state(cfg);
        ck.data_scale = data.scale;
    }

    fs::create_directories(out_dir);
    ck.settings.save_file(out_dir / "config.resolved");
    const std::string loss_head = resume ? log_prefix(out_dir / "loss.csv", ck.state.step) : "";
    std::ofstream loss_log(out_dir / "loss.csv", std::ios::binary | std::ios::trunc);
    std::ofstream timing(out_dir / "timing.csv", resume ? std::ios::app : std::ios::trunc);
    if (!loss_log || !timing) throw Error("training: cannot write logs in " + out_dir.string());
    loss_log << (loss_head.empty() ? "step,loss\n" : loss_head);
    if (!resume) timing << "step,seconds\n";

    const auto t0 = std::chrono::steady_clock::now();
    char row[64];
    run_training(ck.state, data.items, cfg, cfg.total_steps, [&](std::int64_t step, double l) {
        std::snprintf(row, sizeof row, "%lld,%.17g\n", static_cast<long long>(step), l);
        loss_log << row;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::snprintf(row, sizeof row, "%lld,%.3f\n", static_cast<long long>(step), secs);
        timing << row;
        if (step % cfg.checkpoint_every == 0) {
            loss_log.flush();
            save_checkpoint(out_dir / checkpoint_name(step), ck);
        }
    });
    save_checkpoint(out_dir / "final.bin", ck);
    if (!loss_log) throw Error("training: failed writing " + (out_dir / "loss.csv").string());
    return ck;
}

}  // namespace pcdiff
