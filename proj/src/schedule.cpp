#include "pcdiff/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "pcdiff/error.hpp"

namespace pcdiff {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::cubic: return "cubic";
        case ScheduleKind::quartic_paper: return "quartic_paper";
        case ScheduleKind::quartic_scaled: return "quartic_scaled";
    }
    return "?";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
    if (text == "linear") return ScheduleKind::linear;
    if (text == "cubic") return ScheduleKind::cubic;
    if (text == "quartic_paper") return ScheduleKind::quartic_paper;
    if (text == "quartic_scaled") return ScheduleKind::quartic_scaled;
    throw Error("schedule: unknown kind '" + std::string(text) + "'");
}

namespace {

double ipow(double x, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
}

std::vector<double> power_betas(int steps, double beta_max, int power) {
    std::vector<double> b(static_cast<std::size_t>(steps));
    const double denom = ipow(steps, power);
    for (int t = 1; t <= steps; ++t) b[t - 1] = beta_max * (ipow(t, power) / denom);
    return b;
}

}  // namespace

Schedule::Schedule(const ScheduleSpec& spec) : spec_(spec) {
    const int T = spec.steps;
    if (T < 1) throw Error("schedule: T must be >= 1");
    const bool scaled = spec.kind != ScheduleKind::quartic_paper;
    const bool explicit_linear = spec.kind == ScheduleKind::linear && (spec.beta_start != 0.0 || spec.beta_end != 0.0);
    if (scaled && !explicit_linear && !(spec.beta_max > 0.0 && spec.beta_max < 1.0))
        throw Error("schedule: beta_max must lie in (0, 1)");

    switch (spec.kind) {
        case ScheduleKind::quartic_paper:
            betas_.resize(static_cast<std::size_t>(T));
            // t^4 and 1e16 are exact doubles, so the quotient is correctly rounded.
            for (int t = 1; t <= T; ++t) betas_[t - 1] = ipow(t, 4) / 1.0e16;
            break;
        case ScheduleKind::quartic_scaled: betas_ = power_betas(T, spec.beta_max, 4); break;
        case ScheduleKind::cubic: betas_ = power_betas(T, spec.beta_max, 3); break;
        case ScheduleKind::linear:
            betas_.resize(static_cast<std::size_t>(T));
            if (explicit_linear) {
                for (int t = 1; t <= T; ++t) {
                    const double f = T > 1 ? static_cast<double>(t - 1) / (T - 1) : 1.0;
                    betas_[t - 1] = spec.beta_start + f * (spec.beta_end - spec.beta_start);
                }
            } else {
                double total = 0.0;
                for (double b : power_betas(T, spec.beta_max, 4)) total += b;
                const double slope = total / (0.5 * T * (T + 1.0));
                for (int t = 1; t <= T; ++t) betas_[t - 1] = slope * t;
            }
            break;
    }

    alphas_.resize(betas_.size());
    alpha_bars_.resize(betas_.size());
    double running = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        const double b = betas_[i];
        if (!(b > 0.0 && b < 1.0))
            throw Error("schedule: beta at t=" + std::to_string(i + 1) + " is outside (0, 1)");
        if (i > 0 && b < betas_[i - 1]) throw Error("schedule: betas must be nondecreasing");
        alphas_[i] = 1.0 - b;
        running *= alphas_[i];
        alpha_bars_[i] = running;
    }
    if (!(alpha_bars_.back() > 0.0)) throw Error("schedule: alpha_bar underflows to zero");
}

void Schedule::check_step(int t) const {
    if (t < 1 || t > spec_.steps)
        throw Error("schedule: step " + std::to_string(t) + " outside [1, " + std::to_string(spec_.steps) + "]");
}

std::size_t Schedule::index(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
}

Schedule make_schedule(ScheduleKind kind, int steps, double beta_max) {
    ScheduleSpec spec;
    spec.kind = kind;
    spec.steps = steps;
    spec.beta_max = beta_max;
    return Schedule(spec);
}

Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const Schedule& sched) {
    if (x0.rows != eps.rows || x0.cols != eps.cols) throw Error("schedule: noise shape does not match data");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double s = std::sqrt(1.0 - ab);
    Matrix out(x0.rows, x0.cols);
    for (std::size_t i = 0; i < x0.size(); ++i) out.data[i] = a * x0.data[i] + s * eps.data[i];
    return out;
}

PointCloud q_sample(const PointCloud& x0, int t, const Matrix& eps, const Schedule& sched) {
    PointCloud out;
    out.world = x0.world;
    out.points = to_points(q_sample(to_matrix(x0.points), t, eps, sched));
    return out;
}

double snr(const Schedule& sched, int t) {
    const double ab = sched.alpha_bar(t);
    return ab / (1.0 - ab);
}

void write_schedule_csv(std::ostream& out, const Schedule& sched) {
    out << "t,beta,alpha_bar,snr\n";
    char buf[160];
    for (int t = 1; t <= sched.steps(); ++t) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", t, sched.beta(t), sched.alpha_bar(t), snr(sched, t));
        out << buf;
    }
}

}  // namespace pcdiff
