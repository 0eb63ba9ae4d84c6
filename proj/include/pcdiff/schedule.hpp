#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pcdiff/geometry.hpp"
#include "pcdiff/tensor.hpp"

namespace pcdiff {

enum class ScheduleKind { linear, cubic, quartic_paper, quartic_scaled };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

inline constexpr double kDefaultBetaMax = 0.0492;

// Everything needed to rebuild a schedule bit for bit.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::quartic_scaled;
    int steps = 1000;
    double beta_max = kDefaultBetaMax;
    // Explicit linear endpoints; when both are zero the linear schedule is
    // proportional to t and sum-matched to quartic_scaled at beta_max.
    double beta_start = 0.0;
    double beta_end = 0.0;

    bool operator==(const ScheduleSpec&) const = default;
};

// Per-step noise rates. Indexing is 1-based in t to match the diffusion
// step numbering; vectors are stored 0-based.
class Schedule {
public:
    explicit Schedule(const ScheduleSpec& spec);

    const ScheduleSpec& spec() const { return spec_; }
    int steps() const { return spec_.steps; }
    double beta(int t) const { return betas_.at(index(t)); }
    double alpha(int t) const { return alphas_.at(index(t)); }
    double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

    // Throws unless 1 <= t <= T.
    void check_step(int t) const;

private:
    std::size_t index(int t) const;

    ScheduleSpec spec_;
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

Schedule make_schedule(ScheduleKind kind, int steps, double beta_max = kDefaultBetaMax);

// X_t = sqrt(abar_t) X_0 + sqrt(1 - abar_t) eps, elementwise.
Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const Schedule& sched);
PointCloud q_sample(const PointCloud& x0, int t, const Matrix& eps, const Schedule& sched);

// abar_t / (1 - abar_t)
double snr(const Schedule& sched, int t);

// CSV with header "t,beta,alpha_bar,snr", one row per step.
void write_schedule_csv(std::ostream& out, const Schedule& sched);

}  // namespace pcdiff
