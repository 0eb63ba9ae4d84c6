#include "pcdiff/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "pcdiff/checkpoint.hpp"
#include "pcdiff/config.hpp"
#include "pcdiff/error.hpp"
#include "pcdiff/metrics.hpp"
#include "pcdiff/ply.hpp"
#include "pcdiff/rng.hpp"
#include "pcdiff/sampler.hpp"
#include "pcdiff/schedule.hpp"
#include "pcdiff/synthdata.hpp"
#include "pcdiff/training.hpp"

namespace pcdiff::cli {

namespace fs = std::filesystem;

namespace {

// Config file, then --set pairs, then dedicated flags, in that order.
struct Overrides {
    std::string config_file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;

    Settings resolve() const {
        Settings s;
        if (!config_file.empty()) s.load_file(config_file);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw Error("cli: --set expects key=value, got '" + kv + "'");
            s.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        for (const auto& [k, v] : flags) s.set(k, v);
        return s;
    }
};

void add_common(CLI::App* app, Overrides& ov) {
    app->add_option("--config", ov.config_file, "key = value settings file");
    app->add_option("--set", ov.sets, "override one setting, key=value")->take_all();
}

void bind(CLI::App* app, Overrides& ov, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [&ov, key](const std::string& v) { ov.flags.emplace_back(key, v); }, help + " (" + key + ")");
}

void bind_model(CLI::App* app, Overrides& ov) {
    bind(app, ov, "--kind", "schedule.kind", "noise schedule");
    bind(app, ov, "--T", "schedule.T", "diffusion steps");
    bind(app, ov, "--beta-max", "schedule.beta_max", "largest beta of scaled schedules");
    bind(app, ov, "--layers", "denoiser.layers", "transformer blocks");
    bind(app, ov, "--heads", "denoiser.heads", "attention heads");
    bind(app, ov, "--head-dim", "denoiser.head_dim", "width per head");
    bind(app, ov, "--model-dim", "denoiser.model_dim", "token width");
    bind(app, ov, "--frequencies", "denoiser.frequencies", "positional encoding frequencies");
    bind(app, ov, "--attention", "denoiser.attention_mode", "self_only, cross_only or self_plus_cross");
}

void write_run_files(const fs::path& dir, const Settings& s, const std::string& seed_key) {
    fs::create_directories(dir);
    s.save_file(dir / "config.resolved");
    std::ofstream(dir / "seed", std::ios::binary) << s.get(seed_key) << "\n";
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t lanes = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
    if (lanes <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(lanes);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < lanes; ++w)
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < count; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct Loaded {
    Checkpoint ck;
    Schedule sched;
};

Loaded load_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    Schedule sched(schedule_spec(ck.settings));
    return {std::move(ck), std::move(sched)};
}

// Copies the checkpoint's model-defining settings over `s` so the echoed
// config describes the model that actually ran.
Settings with_model(Settings s, const Settings& model) {
    for (const auto& [k, v] : model.values())
        if (k.starts_with("schedule.") || k.starts_with("denoiser.") || k.starts_with("train.")) s.set(k, v);
    return s;
}

struct EvalRow {
    std::string frame;
    SurfaceDistances d;
};

void write_eval(std::ostream& out, const std::vector<EvalRow>& rows) {
    out << "frame,cham,m2s,s2m\n";
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    for (const auto& r : rows) {
        const double v[3] = {r.d.chamfer, r.d.m2s, r.d.s2m};
        out << r.frame << ',' << fmt(v[0]) << ',' << fmt(v[1]) << ',' << fmt(v[2]) << '\n';
        for (int i = 0; i < 3; ++i) {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
    }
    const double n = static_cast<double>(rows.size());
    double mean[3], sd[3];
    for (int i = 0; i < 3; ++i) {
        mean[i] = n > 0 ? sum[i] / n : 0.0;
        sd[i] = n > 1 ? std::sqrt(std::max(0.0, (sq[i] - n * mean[i] * mean[i]) / (n - 1))) : 0.0;
    }
    out << "mean," << fmt(mean[0]) << ',' << fmt(mean[1]) << ',' << fmt(mean[2]) << '\n';
    out << "std," << fmt(sd[0]) << ',' << fmt(sd[1]) << ',' << fmt(sd[2]) << '\n';
}

int dispatch(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Pose-conditioned diffusion for clothed human point clouds"};
    app.require_subcommand(1);
    Overrides ov;
    std::string out_dir, manifest_path, checkpoint_path, pose_path, resume, partial_path, source_path,
        source_pose_path, pred_dir, target_dir, split = "test";
    int limit = 0;
    bool baseline = false;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    add_common(gen, ov);
    gen->add_option("--out", out_dir, "output directory")->required();
    bind(gen, ov, "--frames", "data.frames", "frame count");
    bind(gen, ov, "--seed", "data.seed", "generator seed");
    bind(gen, ov, "--split-ratio", "data.split_ratio", "training share");
    bind(gen, ov, "--points", "data.points", "points per cloud");

    auto* train_cmd = app.add_subcommand("train", "train a denoiser");
    add_common(train_cmd, ov);
    bind_model(train_cmd, ov);
    train_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to continue from");
    bind(train_cmd, ov, "--steps", "train.steps", "total optimizer steps");
    bind(train_cmd, ov, "--seed", "train.seed", "training seed");
    bind(train_cmd, ov, "--lr", "train.learning_rate", "learning rate");
    bind(train_cmd, ov, "--batch", "train.batch_size", "batch size");
    bind(train_cmd, ov, "--points", "train.points", "points per training cloud");
    bind(train_cmd, ov, "--completion-ratio", "train.completion_ratio", "share of completion tasks");
    bind(train_cmd, ov, "--checkpoint-every", "train.checkpoint_every", "checkpoint period");
    bind(train_cmd, ov, "--workers", "run.workers", "threads");

    auto* sample_cmd = app.add_subcommand("sample", "generate a cloud for a pose");
    add_common(sample_cmd, ov);
    sample_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sample_cmd->add_option("--pose", pose_path, "pose file (world cm)")->required();
    sample_cmd->add_option("--out", out_dir, "output directory")->required();
    bind(sample_cmd, ov, "--seed", "sample.seed", "noise seed");
    bind(sample_cmd, ov, "--points", "sample.points", "points to generate (0: training count)");
    bind(sample_cmd, ov, "--trace-every", "sample.trace_every", "write X^(t) every this many steps");

    auto* complete_cmd = app.add_subcommand("complete", "fill in missing points of a partial cloud");
    add_common(complete_cmd, ov);
    complete_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    complete_cmd->add_option("--pose", pose_path, "pose file (world cm)")->required();
    complete_cmd->add_option("--partial", partial_path, "partial cloud PLY")->required();
    complete_cmd->add_option("--out", out_dir, "output directory")->required();
    bind(complete_cmd, ov, "--k", "complete.k", "points to generate");
    bind(complete_cmd, ov, "--seed", "sample.seed", "noise seed");

    auto* edit_cmd = app.add_subcommand("edit-pose", "re-pose a cloud by partial noising");
    add_common(edit_cmd, ov);
    edit_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    edit_cmd->add_option("--source", source_path, "source cloud PLY")->required();
    edit_cmd->add_option("--source-pose", source_pose_path, "pose of the source cloud")->required();
    edit_cmd->add_option("--pose", pose_path, "target pose file")->required();
    edit_cmd->add_option("--out", out_dir, "output directory")->required();
    bind(edit_cmd, ov, "--t", "edit.t", "noising step");
    bind(edit_cmd, ov, "--seed", "sample.seed", "noise seed");

    auto* eval_cmd = app.add_subcommand("eval", "surface distances");
    add_common(eval_cmd, ov);
    eval_cmd->add_option("--pred", pred_dir, "directory of predicted PLYs");
    eval_cmd->add_option("--target", target_dir, "directory of ground-truth PLYs with matching names");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "sample from this checkpoint instead");
    eval_cmd->add_option("--manifest", manifest_path, "dataset to evaluate on");
    eval_cmd->add_option("--split", split, "manifest split")->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--limit", limit, "evaluate only the first frames (0: all)");
    eval_cmd->add_flag("--baseline", baseline, "also score the pose-agnostic baseline");
    eval_cmd->add_option("--out", out_dir, "output directory")->required();
    bind(eval_cmd, ov, "--runs", "eval.runs", "sampling runs averaged per frame");
    bind(eval_cmd, ov, "--seed", "sample.seed", "noise seed");
    bind(eval_cmd, ov, "--points", "sample.points", "points to generate (0: training count)");
    bind(eval_cmd, ov, "--workers", "run.workers", "threads");

    auto* sched_cmd = app.add_subcommand("schedule", "print a noise schedule as CSV");
    add_common(sched_cmd, ov);
    bind(sched_cmd, ov, "--kind", "schedule.kind", "noise schedule");
    bind(sched_cmd, ov, "--T", "schedule.T", "diffusion steps");
    bind(sched_cmd, ov, "--beta-max", "schedule.beta_max", "largest beta of scaled schedules");
    bind(sched_cmd, ov, "--beta-start", "schedule.beta_start", "explicit linear start");
    bind(sched_cmd, ov, "--beta-end", "schedule.beta_end", "explicit linear end");
    sched_cmd->add_option("--out", out_dir, "output directory (default: stdout)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        throw Error(std::string("cli: ") + e.what());
    }
    // help on a subcommand
    for (auto* sub : app.get_subcommands())
        if (sub->get_option("--help")->count() > 0) {
            out << sub->help();
            return 0;
        }

    Settings s = ov.resolve();

    if (gen->parsed()) {
        write_run_files(out_dir, s, "data.seed");
        const Manifest m = gen_dataset(figure_spec(s), dataset_options(s), out_dir);
        out << "wrote " << m.entries.size() << " frames to " << (fs::path(out_dir) / "manifest.jsonl").string()
            << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        const Manifest m = load_manifest(manifest_path);
        std::optional<fs::path> from;
        if (!resume.empty()) from = resume;
        const Checkpoint ck = train(m, s, out_dir, from);
        std::ofstream(fs::path(out_dir) / "seed", std::ios::binary) << ck.settings.get("train.seed") << "\n";
        out << "trained to step " << ck.state.step << "; final checkpoint "
            << (fs::path(out_dir) / "final.bin").string() << "\n";
        return 0;
    }

    if (sched_cmd->parsed()) {
        const Schedule sched(schedule_spec(s));
        if (out_dir.empty()) {
            write_schedule_csv(out, sched);
        } else {
            write_run_files(out_dir, s, "schedule.T");
            std::ofstream f(fs::path(out_dir) / "schedule.csv", std::ios::binary);
            write_schedule_csv(f, sched);
            if (!f) throw Error("cli: cannot write schedule.csv");
        }
        return 0;
    }

    if (sample_cmd->parsed()) {
        const Loaded model = load_model(checkpoint_path);
        s = with_model(s, model.ck.settings);
        write_run_files(out_dir, s, "sample.seed");
        const int points = s.get_int("sample.points") > 0 ? s.get_int("sample.points") : s.get_int("train.points");
        SampleRequest req{normalize_pose(load_pose(pose_path), model.ck.data_scale), points,
                          s.get_u64("sample.seed"), s.get_int("sample.trace_every")};
        const fs::path trace_dir = fs::path(out_dir) / "trace";
        TraceFn trace;
        if (req.trace_every > 0) {
            fs::create_directories(trace_dir);
            trace = [&](int t, const PointCloud& x) {
                char name[32];
                std::snprintf(name, sizeof name, "step_%06d.ply", t);
                save_ply(trace_dir / name, denormalize(x));
            };
        }
        const PointCloud cloud = sample(model.ck.state.params, model.sched, req, trace);
        save_ply(fs::path(out_dir) / "sample.ply", denormalize(cloud));
        return 0;
    }

    if (complete_cmd->parsed()) {
        const Loaded model = load_model(checkpoint_path);
        s = with_model(s, model.ck.settings);
        write_run_files(out_dir, s, "sample.seed");
        const PointCloud given = load_ply(partial_path);
        const TrainItem item = normalize_with_scale(given, load_pose(pose_path), model.ck.data_scale);
        PointCloud full = denormalize(complete(model.ck.state.params, model.sched, item.cloud, item.pose,
                                               s.get_int("complete.k"), s.get_u64("sample.seed")));
        // given points go back out exactly as read
        const PointCloud given_world = denormalize(given);
        for (std::size_t i = 0; i < given_world.size(); ++i) full.points[i] = given_world.points[i];
        save_ply(fs::path(out_dir) / "completed.ply", full);
        return 0;
    }

    if (edit_cmd->parsed()) {
        const Loaded model = load_model(checkpoint_path);
        s = with_model(s, model.ck.settings);
        write_run_files(out_dir, s, "sample.seed");
        const TrainItem src = normalize_with_scale(load_ply(source_path), load_pose(source_pose_path),
                                                   model.ck.data_scale);
        const Pose target = normalize_pose(load_pose(pose_path), model.ck.data_scale);
        const PointCloud edited = pose_edit(model.ck.state.params, model.sched, src.cloud, target,
                                            s.get_int("edit.t"), s.get_u64("sample.seed"));
        save_ply(fs::path(out_dir) / "edited.ply", denormalize(edited));
        return 0;
    }

    if (eval_cmd->parsed()) {
        std::vector<EvalRow> rows, base_rows;
        const bool from_dirs = !pred_dir.empty() || !target_dir.empty();
        if (from_dirs == !checkpoint_path.empty() || (from_dirs && (pred_dir.empty() || target_dir.empty())) ||
            (!from_dirs && manifest_path.empty()))
            throw Error("cli: eval takes either --pred and --target, or --checkpoint and --manifest");
        const int workers = resolve_workers(s);
        if (from_dirs) {
            write_run_files(out_dir, s, "sample.seed");
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(target_dir))
                if (e.path().extension() == ".ply") files.push_back(e.path().filename());
            std::sort(files.begin(), files.end());
            if (files.empty()) throw Error("cli: no .ply files in " + target_dir);
            rows.resize(files.size());
            parallel_for(files.size(), workers, [&](std::size_t i) {
                const fs::path pred = fs::path(pred_dir) / files[i];
                if (!fs::exists(pred)) throw Error("cli: missing prediction " + pred.string());
                rows[i] = {files[i].stem().string(),
                           surface_distances(load_ply(pred), load_ply(fs::path(target_dir) / files[i]))};
            });
        } else {
            const Loaded model = load_model(checkpoint_path);
            s = with_model(s, model.ck.settings);
            write_run_files(out_dir, s, "sample.seed");
            const Manifest m = load_manifest(manifest_path);
            auto entries = m.split(split);
            if (entries.empty()) throw Error("cli: manifest has no '" + split + "' entries");
            if (limit > 0 && static_cast<std::size_t>(limit) < entries.size()) entries.resize(static_cast<std::size_t>(limit));
            const int runs = s.get_int("eval.runs");
            if (runs < 1) throw Error("cli: eval.runs must be >= 1");
            const int points =
                s.get_int("sample.points") > 0 ? s.get_int("sample.points") : s.get_int("train.points");
            const std::uint64_t seed = s.get_u64("sample.seed");

            std::vector<PointCloud> targets(entries.size());
            std::vector<Pose> poses(entries.size());
            for (std::size_t f = 0; f < entries.size(); ++f) {
                targets[f] = load_ply(entries[f].cloud_path);
                poses[f] = normalize_pose(load_pose(entries[f].pose_path), model.ck.data_scale);
            }
            const std::size_t jobs = entries.size() * static_cast<std::size_t>(runs);
            std::vector<SurfaceDistances> scores(jobs);
            parallel_for(jobs, workers, [&](std::size_t j) {
                const std::size_t f = j / static_cast<std::size_t>(runs);
                const SampleRequest req{poses[f], points, mix_seed(seed, j), 0};
                scores[j] = surface_distances(sample(model.ck.state.params, model.sched, req), targets[f]);
            });
            for (std::size_t f = 0; f < entries.size(); ++f) {
                SurfaceDistances avg{0, 0, 0};
                for (int r = 0; r < runs; ++r) {
                    const auto& d = scores[f * static_cast<std::size_t>(runs) + static_cast<std::size_t>(r)];
                    avg.chamfer += d.chamfer / runs;
                    avg.m2s += d.m2s / runs;
                    avg.s2m += d.s2m / runs;
                }
                rows.push_back({"frame_" + std::to_string(entries[f].id), avg});
            }
            if (baseline) {
                const TrainConfig cfg = train_config(model.ck.settings);
                const Dataset data = load_dataset(m, "train", cfg.points, cfg.seed);
                const PointCloud& mean_cloud = data.items[mean_pose_index(data)].cloud;
                for (std::size_t f = 0; f < entries.size(); ++f) {
                    PointCloud replay = mean_cloud;
                    replay.world = poses[f].world;
                    base_rows.push_back({"frame_" + std::to_string(entries[f].id), surface_distances(replay, targets[f])});
                }
            }
        }
        std::ofstream f(fs::path(out_dir) / "eval.csv", std::ios::binary);
        write_eval(f, rows);
        if (!base_rows.empty()) {
            std::ofstream b(fs::path(out_dir) / "baseline.csv", std::ios::binary);
            write_eval(b, base_rows);
        }
        write_eval(out, rows);
        return 0;
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n' || c == '\r') c = ' ';
        err << "error: " << msg << "\n";
        return 1;
    }
}

}  // namespace pcdiff::cli
