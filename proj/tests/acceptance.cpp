// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails that is not listed with --expect-fail.
//
// The experiments in criteria 6-10 use desk-scale models. Their thresholds
// were fixed by running this program with --pilot (different data, training
// and sampling seeds) and are kept in kPilot below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcdiff/checkpoint.hpp"
#include "pcdiff/cli.hpp"
#include "pcdiff/config.hpp"
#include "pcdiff/denoiser.hpp"
#include "pcdiff/error.hpp"
#include "pcdiff/metrics.hpp"
#include "pcdiff/ply.hpp"
#include "pcdiff/rng.hpp"
#include "pcdiff/sampler.hpp"
#include "pcdiff/schedule.hpp"
#include "pcdiff/synthdata.hpp"
#include "pcdiff/training.hpp"

using namespace pcdiff;
namespace fs = std::filesystem;

namespace {

struct Thresholds {
    double overfit_chamfer_cm;     // criterion 6
    double completion_chamfer_cm;  // criterion 9
    double identity_edit_cm;       // criterion 10
};

// Pilot measurements (seed set 101) were 7.437, 9.895 and 2.477 cm; each
// threshold is 1.5 times that, rounded up.
constexpr Thresholds kPilot{11.2, 14.9, 3.8};

// Seeds for the data, training and sampling of one acceptance run.
struct SeedSet {
    std::uint64_t data;
    std::uint64_t train;
    std::uint64_t sample;
};
constexpr SeedSet kAcceptanceSeeds{7, 7, 7};
constexpr SeedSet kPilotSeeds{101, 101, 101};

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

// ---------------------------------------------------------------------------
// Shared experiment setup

// Desk-scale model and schedule for the trained experiments: 100 steps of a
// quartic schedule whose beta_max puts abar_T near exp(-10).
Settings toy_settings(const SeedSet& seeds) {
    Settings s;
    s.set("schedule.kind", "quartic_scaled");
    s.set("schedule.T", "100");
    s.set("schedule.beta_max", "0.423");
    s.set("denoiser.layers", "2");
    s.set("denoiser.heads", "4");
    s.set("denoiser.head_dim", "16");
    s.set("denoiser.model_dim", "64");
    s.set("denoiser.frequencies", "7");
    s.set("denoiser.mlp_ratio", "2");
    s.set("train.learning_rate", "0.001");
    s.set("train.batch_size", "8");
    s.set("train.points", "128");
    s.set("train.seed", std::to_string(seeds.train));
    s.set("data.frames", "2000");
    s.set("data.seed", std::to_string(seeds.data));
    s.set("data.split_ratio", "0.8");
    s.set("sample.seed", std::to_string(seeds.sample));
    s.set("run.workers", "1");
    return s;
}

int call_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) throw Error("acceptance: pcdiff " + args.front() + " failed: " + err.str());
    return code;
}

// Mean row of an eval CSV: cham, m2s, s2m.
std::vector<double> csv_means(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("mean,", 0) != 0) continue;
        std::vector<double> v;
        std::istringstream row(line.substr(5));
        for (std::string cell; std::getline(row, cell, ',');) v.push_back(std::stod(cell));
        return v;
    }
    throw Error("acceptance: no mean row in " + path.string());
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Two-sided Mann-Whitney U test, normal approximation with tie correction.
double mann_whitney_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::pair<double, int>> all;
    for (double v : a) all.emplace_back(v, 0);
    for (double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end());
    const double n1 = a.size(), n2 = b.size(), n = n1 + n2;
    double rank_a = 0, ties = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double r = 0.5 * (i + 1 + j);
        const double t = j - i;
        ties += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_a += r;
        i = j;
    }
    const double u = rank_a - n1 * (n1 + 1) / 2;
    const double mu = n1 * n2 / 2;
    const double sd = std::sqrt(n1 * n2 / 12 * ((n + 1) - ties / (n * (n - 1))));
    const double z = (std::abs(u - mu) - 0.5) / sd;
    return std::erfc(std::max(z, 0.0) / std::sqrt(2.0));
}

DenoiserConfig gradcheck_config() {
    DenoiserConfig c;
    c.layers = 2;
    c.heads = 2;
    c.head_dim = 8;
    c.model_dim = 16;
    c.frequencies = 2;
    c.mlp_ratio = 4;
    return c;
}

// Every tensor random, the head included, so no gradient path is trivially zero.
DenoiserParams random_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserParams p = init_params(cfg, seed);
    Rng rng(seed + 1000);
    for (auto& [name, m] : p.tensors()) {
        const double s = 1.0 / std::sqrt(static_cast<double>(m->rows));
        for (double& v : m->data) {
            if (name.ends_with(".gain")) v = 1.0 + 0.3 * rng.normal();
            else if (m->rows == 1) v = 0.2 * rng.normal();
            else v = s * rng.normal();
        }
    }
    return p;
}

std::vector<Vec3> random_points(std::size_t n, Rng& rng) {
    std::vector<Vec3> out(n);
    for (auto& p : out) p = {2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    return out;
}

// ---------------------------------------------------------------------------
// Criteria 1-5, 11: exact and statistical checks

Outcome schedule_correctness() {
    const auto t0 = Clock::now();
    const Schedule paper = make_schedule(ScheduleKind::quartic_paper, 1000);
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t) prod *= 1.0L - std::pow(static_cast<long double>(t) / 10000.0L, 4);
    const double paper_err = std::abs(paper.alpha_bar(1000) - static_cast<double>(prod));
    const Schedule scaled(ScheduleSpec{});
    const double rel = std::abs(scaled.alpha_bar(1000) / std::exp(-10.0) - 1.0);
    const double secs = seconds_since(t0);
    const bool pass = paper.beta(1000) == 1e-4 && paper_err <= 1e-6 && rel <= 0.05 && secs < 1.0;
    return {pass, "beta_1000=" + g(paper.beta(1000)) + " abar_paper=" + fmt("%.6f", paper.alpha_bar(1000)) +
                      " |err|=" + g(paper_err) + " abar_scaled=" + g(scaled.alpha_bar(1000)) +
                      " rel_to_e^-10=" + g(rel) + " (" + g(secs) + " s)"};
}

Outcome quartic_vs_linear() {
    const auto t0 = Clock::now();
    const Schedule q(ScheduleSpec{});
    const Schedule l(ScheduleSpec{ScheduleKind::linear, 1000, kDefaultBetaMax, 0, 0});
    int violations = 0, first_bad = 0;
    for (int t = 1; t <= 1000; ++t) {
        const bool ok = t < 1000 ? q.alpha_bar(t) > l.alpha_bar(t) : q.alpha_bar(t) >= l.alpha_bar(t);
        if (!ok) {
            ++violations;
            if (!first_bad) first_bad = t;
        }
    }
    const double secs = seconds_since(t0);
    std::string detail = "sum-matched linear; " + std::to_string(violations) + " of 1000 steps violate";
    if (violations)
        detail += " (first t=" + std::to_string(first_bad) + ", abar_q(1000)=" + g(q.alpha_bar(1000)) +
                  " < abar_lin(1000)=" + g(l.alpha_bar(1000)) + ")";
    return {violations == 0 && secs < 1.0, detail + " (" + g(secs) + " s)"};
}

Outcome forward_consistency() {
    const auto t0 = Clock::now();
    const int trials = 100000;
    bool pass = true;
    std::string detail;
    const Schedule sched(ScheduleSpec{});
    for (int t_check : {10, 50}) {
        Rng rng(1000 + t_check);
        const double x0 = 0.7;
        std::vector<double> xs(trials, x0);
        for (int t = 1; t <= t_check; ++t) {
            const double a = std::sqrt(1.0 - sched.beta(t)), s = std::sqrt(sched.beta(t));
            for (double& x : xs) x = a * x + s * rng.normal();
        }
        const double m = mean(xs);
        double ss = 0;
        for (double x : xs) ss += (x - m) * (x - m);
        const double var = ss / (trials - 1);
        const double ab = sched.alpha_bar(t_check);
        const double want_m = std::sqrt(ab) * x0, want_v = 1 - ab;
        const double zm = std::abs(m - want_m) / std::sqrt(want_v / trials);
        const double zv = std::abs(var - want_v) / (want_v * std::sqrt(2.0 / (trials - 1)));
        pass = pass && zm < 3 && zv < 3;
        detail += "t=" + std::to_string(t_check) + ": mean z=" + fmt("%.2f", zm) + " var z=" + fmt("%.2f", zv) + "; ";
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 10.0, detail + "1e5 trials (" + g(secs) + " s)"};
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    DenoiserParams p = random_params(gradcheck_config(), 21);
    Rng rng(22);
    Matrix x = to_matrix(random_points(8, rng));
    Matrix keys = to_matrix(random_points(5, rng));
    const std::vector<int> steps(8, 37);
    Matrix up(8, 3);
    for (double& v : up.data) v = rng.normal();
    auto objective = [&] {
        const ForwardPass pass(p, x, steps, keys);
        const Matrix& out = pass.output();
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * up.data[i];
        return s;
    };
    DenoiserParams grads = DenoiserParams::zeros(p.config);
    ForwardPass(p, x, steps, keys).backward(up, grads);
    const double h = 1e-5;
    double worst = 0;
    std::size_t checked = 0;
    auto pt = p.tensors();
    auto gt = grads.tensors();
    for (std::size_t k = 0; k < pt.size(); ++k) {
        Matrix& m = *pt[k].second;
        for (std::size_t i = 0; i < m.size(); ++i, ++checked) {
            const double keep = m.data[i];
            m.data[i] = keep + h;
            const double fp = objective();
            m.data[i] = keep - h;
            const double fm = objective();
            m.data[i] = keep;
            const double num = (fp - fm) / (2 * h), ana = gt[k].second->data[i];
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, std::to_string(checked) + " parameters, worst relative error " + g(worst) +
                                              " (" + g(secs) + " s)"};
}

Outcome permutation_equivariance() {
    const auto t0 = Clock::now();
    DenoiserConfig cfg = gradcheck_config();
    cfg.model_dim = 32;
    const DenoiserParams p = random_params(cfg, 31);
    Rng rng(32);
    PointCloud x;
    x.points = random_points(128, rng);
    Pose pose;
    pose.keypoints = random_points(16, rng);
    const Matrix base = forward(p, x, 50, pose);
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    int mismatches = 0;
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
        PointCloud px;
        for (std::size_t i : perm) px.points.push_back(x.points[i]);
        const Matrix out = forward(p, px, 50, pose);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (int c = 0; c < 3; ++c) mismatches += out(i, c) != base(perm[i], c);
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 10.0,
            "20 permutations of 128 points, " + std::to_string(mismatches) + " non-identical entries (" + g(secs) + " s)"};
}

Outcome metrics_oracle() {
    const auto t0 = Clock::now();
    Rng rng(111);
    double worst = 0;
    for (int pair = 0; pair < 100; ++pair) {
        PointCloud a, b;
        a.points = random_points(1 + rng.index(500), rng);
        b.points = random_points(1 + rng.index(500), rng);
        a.world = b.world = {50 + 50 * rng.uniform(), {rng.normal(), rng.normal(), 100 * rng.uniform()}};
        auto brute = [](const PointCloud& u, const PointCloud& v) {
            double total = 0;
            for (const auto& p : u.points) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& q : v.points) best = std::min(best, squared_norm(u.world.apply(p) - v.world.apply(q)));
                total += std::sqrt(best);
            }
            return total / u.size();
        };
        const double m2s = brute(a, b), s2m = brute(b, a);
        const SurfaceDistances d = surface_distances(a, b);
        worst = std::max({worst, std::abs(d.m2s - m2s), std::abs(d.s2m - s2m), std::abs(d.chamfer - 0.5 * (m2s + s2m))});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 60.0, "100 pairs, worst |diff| " + g(worst) + " cm (" + g(secs) + " s)"};
}

// ---------------------------------------------------------------------------
// Criteria 6-10: trained toy models

struct Trained {
    Checkpoint ck;
    Manifest manifest;
    Dataset train;
};

Trained train_model(const Settings& s, const fs::path& dir, bool reuse) {
    const fs::path data = dir / "data";
    const fs::path run = dir / "train";
    if (!(reuse && fs::exists(data / "manifest.jsonl")))
        call_cli({"gen-data", "--config", (dir / "run.cfg").string(), "--out", data.string()});
    Manifest m = load_manifest(data / "manifest.jsonl");
    Checkpoint ck;
    // run.* keys do not affect results and are not kept in checkpoints
    auto matches = [&](const Checkpoint& c) {
        for (const auto& [k, v] : c.settings.values())
            if (!k.starts_with("run.") && s.get(k) != v) return false;
        return true;
    };
    if (reuse && fs::exists(run / "final.bin") && matches(ck = load_checkpoint(run / "final.bin"))) {
    } else {
        ck = train(m, s, run);
    }
    Dataset d = load_dataset(m, "train", s.get_int("train.points"), s.get_u64("train.seed"));
    return {std::move(ck), std::move(m), std::move(d)};
}

void write_settings(const Settings& s, const fs::path& dir) {
    fs::create_directories(dir);
    s.save_file(dir / "run.cfg");
}

// Initial loss = mean of the first 20 steps, final = mean of the last 100.
std::pair<double, double> loss_ends(const fs::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<double> v;
    while (std::getline(in, line)) v.push_back(std::stod(line.substr(line.find(',') + 1)));
    if (v.size() < 120) throw Error("acceptance: loss log too short");
    const double first = std::accumulate(v.begin(), v.begin() + 20, 0.0) / 20;
    const double last = std::accumulate(v.end() - 100, v.end(), 0.0) / 100;
    return {first, last};
}

// Expected loss of a denoiser that knows which clean cloud was noised and
// predicts each point from its own posterior over that cloud's points,
// averaged over uniform t. Only the point-to-point correspondence is left
// unknown, so at mid noise levels the loss cannot go to zero.
double known_cloud_floor(std::span<const TrainItem> items, const Schedule& sched, std::uint64_t seed) {
    Rng rng(seed);
    double total = 0;
    for (int t = 1; t <= sched.steps(); ++t) {
        const double ab = sched.alpha_bar(t), sa = std::sqrt(ab), sb = std::sqrt(1 - ab);
        double sum = 0;
        std::size_t count = 0;
        for (const TrainItem& item : items) {
            const auto& pts = item.cloud.points;
            std::vector<double> logw(pts.size());
            for (const Vec3& x0 : pts) {
                const Vec3 e{rng.normal(), rng.normal(), rng.normal()};
                const Vec3 xt = sa * x0 + sb * e;
                double top = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < pts.size(); ++j) {
                    logw[j] = -squared_norm(xt - sa * pts[j]) / (2 * (1 - ab));
                    top = std::max(top, logw[j]);
                }
                double wsum = 0;
                Vec3 mu{0, 0, 0};
                for (std::size_t j = 0; j < pts.size(); ++j) {
                    const double w = std::exp(logw[j] - top);
                    wsum += w;
                    mu = mu + w * pts[j];
                }
                const Vec3 e_hat = (1 / sb) * (xt - (sa / wsum) * mu);
                sum += squared_norm(e_hat - e);
                count += 3;
            }
        }
        total += sum / count;
    }
    return total / sched.steps();
}

Outcome overfit(const SeedSet& seeds, const fs::path& work, bool reuse, double threshold) {
    const auto t0 = Clock::now();
    Settings s = toy_settings(seeds);
    s.set("data.frames", "8");
    s.set("data.split_ratio", "1");
    s.set("train.steps", "2000");
    s.set("train.checkpoint_every", "2000");
    const fs::path dir = work / "overfit";
    write_settings(s, dir);
    const Trained t = train_model(s, dir, reuse);
    const auto [first, last] = loss_ends(dir / "train" / "loss.csv");

    const Schedule sched(schedule_spec(s));
    std::vector<double> cham;
    for (std::size_t f = 0; f < t.train.items.size(); ++f) {
        const TrainItem& item = t.train.items[f];
        const SampleRequest req{item.pose, 128, mix_seed(seeds.sample, f), 0};
        cham.push_back(chamfer(sample(t.ck.state.params, sched, req), item.cloud));
    }
    const double c = mean(cham);
    const double secs = seconds_since(t0);
    const double floor = known_cloud_floor(t.train.items, sched, mix_seed(seeds.sample, 6));
    const bool pass = last <= 0.1 * first && c <= threshold && secs <= 1800;
    return {pass, "loss " + g(first) + " -> " + g(last) + " (ratio " + g(last / first) + ", known-cloud floor " +
                      g(floor) + "), train-pose Chamfer " +
                      g(c) + " cm vs threshold " + g(threshold) + " (" + fmt("%.0f", secs) + " s)"};
}

struct ToyResults {
    Outcome generalization, diversity, completion, editing;
};

ToyResults toy_experiments(const SeedSet& seeds, const fs::path& work, bool reuse, const Thresholds& th,
                           int steps, int eval_poses, const std::function<bool(int)>& wanted) {
    ToyResults r;
    auto t0 = Clock::now();
    Settings s = toy_settings(seeds);
    s.set("train.steps", std::to_string(steps));
    s.set("train.checkpoint_every", "2000");
    s.set("train.completion_ratio", "0.5");
    const fs::path dir = work / "toy";
    write_settings(s, dir);
    const Trained t = train_model(s, dir, reuse);
    const double train_secs = seconds_since(t0);
    const Schedule sched(schedule_spec(s));
    const auto& params = t.ck.state.params;
    const auto test = t.manifest.split("test");
    const int T = sched.steps();

    // 7: held-out poses, ten sampling runs each, against the pose-agnostic baseline
    t0 = Clock::now();
    if (wanted(7)) {
        std::vector<std::string> args = {"eval",   "--checkpoint", (dir / "train" / "final.bin").string(),
                                         "--manifest", (dir / "data" / "manifest.jsonl").string(),
                                         "--split", "test", "--runs", "10", "--seed", std::to_string(seeds.sample),
                                         "--baseline", "--workers", "1", "--out", (dir / "eval").string()};
        if (eval_poses > 0) {
            args.push_back("--limit");
            args.push_back(std::to_string(eval_poses));
        }
        call_cli(args);
        const auto model = csv_means(dir / "eval" / "eval.csv");
        const auto base = csv_means(dir / "eval" / "baseline.csv");
        const double secs = train_secs + seconds_since(t0);
        r.generalization = {model[0] < base[0],
                            std::to_string(eval_poses > 0 ? eval_poses : static_cast<int>(test.size())) +
                                " test poses x 10 seeds: model Chamfer " + g(model[0]) + " cm vs baseline " +
                                g(base[0]) + " cm (M2S " + g(model[1]) + "/" + g(base[1]) + ", S2M " + g(model[2]) +
                                "/" + g(base[2]) + ") (" + fmt("%.0f", secs) + " s)"};
    }

    // 8: per-pose sample diversity inside and outside the skirt region
    if (wanted(8)) {
        // Reference: the generator itself with fresh modes and a fresh point
        // layout per draw, i.e. a perfect model whose samples place points at
        // random. Chamfer between random placements of one surface is not zero,
        // which bounds the ratio a sampler can reach at this point count.
        FigureSpec fig = figure_spec(s);
        fig.n_points = 128;
        std::vector<double> skirt, body, ideal_skirt, ideal_body;
        bool cropped_ok = true;
        for (std::size_t f = 0; f < 10 && f < test.size(); ++f) {
            const Pose pose = normalize_pose(load_pose(test[f].pose_path), t.ck.data_scale);
            const HalfSpace region = test[f].skirt_region.value();
            std::vector<PointCloud> in, out, ideal_in, ideal_out;
            for (std::uint64_t k = 0; k < 5; ++k) {
                const PointCloud x = sample(params, sched, {pose, 128, mix_seed(seeds.sample + 8, 5 * f + k), 0});
                in.push_back(crop(x, region));
                out.push_back(crop(x, region.complement()));
                cropped_ok = cropped_ok && in.back().size() > 0 && out.back().size() > 0;
                FigureSpec draw = fig;
                draw.layout_seed = mix_seed(seeds.sample + 80, 5 * f + k);
                const Frame gt = make_frame(draw, test[f].angles, mix_seed(seeds.sample + 81, 5 * f + k));
                ideal_in.push_back(crop(gt.cloud, region));
                ideal_out.push_back(crop(gt.cloud, region.complement()));
            }
            if (!cropped_ok) break;
            skirt.push_back(diversity(in));
            body.push_back(diversity(out));
            ideal_skirt.push_back(diversity(ideal_in));
            ideal_body.push_back(diversity(ideal_out));
        }
        if (!cropped_ok) {
            r.diversity = {false, "a sample had no points in one of the regions"};
        } else {
            const double ds = mean(skirt), db = mean(body);
            r.diversity = {ds > 0 && ds >= 3 * db, "10 test poses x 5 seeds: skirt diversity " + g(ds) +
                                                       " cm, body diversity " + g(db) + " cm, ratio " + g(ds / db) +
                                                       "; generator with random layouts: ratio " +
                                                       g(mean(ideal_skirt) / mean(ideal_body))};
        }
    }

    // 9: complete a 25% patch of training clouds
    if (wanted(9)) {
        std::vector<double> cham;
        bool preserved = true;
        Rng rng(mix_seed(seeds.sample, 9));
        for (std::size_t f = 0; f < 10; ++f) {
            const TrainItem& item = t.train.items[rng.index(t.train.items.size())];
            const std::size_t n = item.cloud.size(), k = n / 4;
            const Vec3 anchor = item.cloud.points[rng.index(n)];
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return squared_norm(item.cloud.points[a] - anchor) < squared_norm(item.cloud.points[b] - anchor);
            });
            PointCloud held, partial;
            held.world = partial.world = item.cloud.world;
            for (std::size_t i = 0; i < n; ++i) (i < k ? held : partial).points.push_back(item.cloud.points[idx[i]]);
            const PointCloud done =
                complete(params, sched, partial, item.pose, static_cast<int>(k), mix_seed(seeds.sample, 90 + f));
            for (std::size_t i = 0; i < partial.size(); ++i) {
                for (int c = 0; c < 3; ++c) {
                    std::uint64_t a, b;
                    std::memcpy(&a, &done.points[i][c], 8);
                    std::memcpy(&b, &partial.points[i][c], 8);
                    preserved = preserved && a == b;
                }
            }
            PointCloud generated;
            generated.world = done.world;
            generated.points.assign(done.points.begin() + static_cast<std::ptrdiff_t>(partial.size()), done.points.end());
            cham.push_back(chamfer(generated, held));
        }
        const double c = mean(cham);
        r.completion = {preserved && c <= th.completion_chamfer_cm,
                        "10 training clouds, 25% patch: completed-region Chamfer " + g(c) + " cm vs threshold " +
                            g(th.completion_chamfer_cm) + ", partial points " +
                            (preserved ? "bitwise preserved" : "MODIFIED")};
    }

    // 10: identity edits at T/10 and full-horizon edits against fresh samples
    if (wanted(10)) {
        const int t_small = std::max(1, T / 10);
        std::vector<double> ident;
        for (std::size_t f = 0; f < 10; ++f) {
            const TrainItem& item = t.train.items[f];
            ident.push_back(chamfer(item.cloud, pose_edit(params, sched, item.cloud, item.pose, t_small,
                                                          mix_seed(seeds.sample, 100 + f))));
        }
        const TrainItem& src = t.train.items[0];
        std::vector<double> edited, fresh;
        for (std::uint64_t k = 0; k < 30; ++k) {
            edited.push_back(chamfer(src.cloud, pose_edit(params, sched, src.cloud, src.pose, T, mix_seed(seeds.sample, 200 + k))));
            fresh.push_back(chamfer(src.cloud, sample(params, sched, {src.pose, static_cast<int>(src.cloud.size()),
                                                                      mix_seed(seeds.sample, 300 + k), 0})));
        }
        const double p = mann_whitney_p(edited, fresh);
        const double ci = mean(ident);
        r.editing = {ci <= th.identity_edit_cm && p >= 0.05,
                     "identity edit at t=" + std::to_string(t_small) + ": Chamfer " + g(ci) + " cm vs threshold " +
                         g(th.identity_edit_cm) + "; t=T edit vs fresh Chamfer-to-source " + g(mean(edited)) + " / " +
                         g(mean(fresh)) + " cm, Mann-Whitney p=" + fmt("%.3f", p)};
    }
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 12

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "timing.csv") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

Outcome determinism(const fs::path& work) {
    const auto t0 = Clock::now();
    Settings s;
    s.set("schedule.T", "20");
    s.set("schedule.beta_max", "0.6");
    s.set("denoiser.layers", "2");
    s.set("denoiser.heads", "2");
    s.set("denoiser.head_dim", "8");
    s.set("denoiser.model_dim", "16");
    s.set("denoiser.frequencies", "3");
    s.set("train.steps", "20");
    s.set("train.checkpoint_every", "10");
    s.set("train.batch_size", "4");
    s.set("train.points", "64");
    s.set("train.completion_ratio", "0.5");
    s.set("train.learning_rate", "0.001");
    s.set("data.frames", "20");
    s.set("data.points", "128");
    s.set("eval.runs", "2");
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* name : {"a", "b"}) {
        const fs::path dir = work / "determinism" / name;
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cfg = (dir / "run.cfg").string();
        s.save_file(cfg);
        const std::string data = (dir / "data").string(), model = (dir / "train").string();
        call_cli({"gen-data", "--config", cfg, "--out", data});
        call_cli({"train", "--config", cfg, "--manifest", data + "/manifest.jsonl", "--out", model});
        const std::string ck = model + "/final.bin", pose = data + "/poses/frame_000017.txt",
                          cloud = data + "/clouds/frame_000017.ply";
        call_cli({"sample", "--config", cfg, "--checkpoint", ck, "--pose", pose, "--seed", "7", "--trace-every", "5",
                  "--out", (dir / "sample").string()});
        call_cli({"complete", "--config", cfg, "--checkpoint", ck, "--pose", pose, "--partial", cloud, "--k", "16",
                  "--out", (dir / "complete").string()});
        call_cli({"edit-pose", "--config", cfg, "--checkpoint", ck, "--source", cloud, "--source-pose", pose, "--pose",
                  data + "/poses/frame_000003.txt", "--t", "5", "--out", (dir / "edit").string()});
        call_cli({"eval", "--config", cfg, "--checkpoint", ck, "--manifest", data + "/manifest.jsonl", "--baseline",
                  "--out", (dir / "eval").string()});
        call_cli({"schedule", "--config", cfg, "--out", (dir / "schedule").string()});
        trees.push_back(tree_bytes(dir));
    }
    std::size_t differing = 0, checkpoints = 0;
    for (const auto& [name, bytes] : trees[0]) {
        auto it = trees[1].find(name);
        differing += it == trees[1].end() || it->second != bytes;
        checkpoints += name.ends_with(".bin");
    }
    differing += trees[1].size() != trees[0].size();
    const bool pass = differing == 0 && checkpoints >= 3 && trees[0].size() > 10;
    return {pass, std::to_string(trees[0].size()) + " files (" + std::to_string(checkpoints) +
                      " checkpoints, samples, CSVs) compared, " + std::to_string(differing) + " differ (" +
                      g(seconds_since(t0)) + " s)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string work = "acceptance_work";
    std::vector<int> only, expect_fail;
    bool pilot = false, reuse = false;
    int steps = 10000, eval_poses = 0;
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "run just these criteria");
    app.add_option("--expect-fail", expect_fail, "criteria known to be unattainable");
    app.add_option("--toy-steps", steps, "training steps of the toy model");
    app.add_option("--eval-poses", eval_poses, "limit held-out poses in criterion 7 (0: all)");
    app.add_flag("--pilot", pilot, "pilot seeds; thresholds are reported, not enforced");
    app.add_flag("--reuse", reuse, "reuse data and models already in --work");
    CLI11_PARSE(app, argc, argv);

    const SeedSet seeds = pilot ? kPilotSeeds : kAcceptanceSeeds;
    const Thresholds th = pilot ? Thresholds{1e9, 1e9, 1e9} : kPilot;
    const fs::path root = fs::absolute(fs::path(work) / (pilot ? "pilot" : "run"));
    fs::create_directories(root);
    auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

    std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria;
    criteria[1] = {"schedule correctness", schedule_correctness};
    criteria[2] = {"quartic keeps more signal than sum-matched linear", quartic_vs_linear};
    criteria[3] = {"forward diffusion consistency", forward_consistency};
    criteria[4] = {"gradient check", gradient_check};
    criteria[5] = {"permutation equivariance", permutation_equivariance};
    criteria[6] = {"overfit", [&] { return overfit(seeds, root, reuse, th.overfit_chamfer_cm); }};
    criteria[11] = {"metrics oracle", metrics_oracle};
    criteria[12] = {"determinism", [&] { return determinism(root); }};

    std::map<int, Outcome> results;
    auto report = [&](int c, const std::string& name, const Outcome& o) {
        results[c] = o;
        std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << " -- " << o.detail
                  << std::endl;
    };
    auto guarded = [&](int c, const std::string& name, const std::function<Outcome()>& fn) {
        try {
            report(c, name, fn());
        } catch (const std::exception& e) {
            report(c, name, {false, std::string("error: ") + e.what()});
        }
    };

    for (int c : {1, 2, 3, 4, 5, 6})
        if (wanted(c)) guarded(c, criteria[c].first, criteria[c].second);
    if (wanted(7) || wanted(8) || wanted(9) || wanted(10)) {
        try {
            const ToyResults r = toy_experiments(seeds, root, reuse, th, steps, eval_poses, wanted);
            if (wanted(7)) report(7, "toy generalization", r.generalization);
            if (wanted(8)) report(8, "diversity", r.diversity);
            if (wanted(9)) report(9, "completion", r.completion);
            if (wanted(10)) report(10, "pose editing", r.editing);
        } catch (const std::exception& e) {
            for (int c : {7, 8, 9, 10})
                if (wanted(c)) report(c, "toy experiments", {false, std::string("error: ") + e.what()});
        }
    }
    for (int c : {11, 12})
        if (wanted(c)) guarded(c, criteria[c].first, criteria[c].second);

    int unexpected = 0;
    for (const auto& [c, o] : results) {
        const bool expected = std::find(expect_fail.begin(), expect_fail.end(), c) != expect_fail.end();
        if (o.pass == expected) {
            ++unexpected;
            std::cout << "criterion " << c << (o.pass ? " passed but was expected to fail" : " failed unexpectedly")
                      << std::endl;
        }
    }
    const std::size_t passed = std::count_if(results.begin(), results.end(), [](const auto& kv) { return kv.second.pass; });
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return unexpected == 0 ? 0 : 1;
}
