#include "pcdiff/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <numeric>

#include "pcdiff/encoding.hpp"
#include "pcdiff/error.hpp"
#include "pcdiff/rng.hpp"

namespace pcdiff {

std::string to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::self_only: return "self_only";
        case AttentionMode::cross_only: return "cross_only";
        case AttentionMode::self_plus_cross: return "self_plus_cross";
    }
    return "?";
}

AttentionMode parse_attention_mode(std::string_view text) {
    if (text == "self_only") return AttentionMode::self_only;
    if (text == "cross_only") return AttentionMode::cross_only;
    if (text == "self_plus_cross") return AttentionMode::self_plus_cross;
    throw Error("denoiser: unknown attention mode '" + std::string(text) + "'");
}

void DenoiserConfig::validate() const {
    if (layers < 1) throw Error("denoiser: layers must be >= 1");
    if (heads < 1 || head_dim < 1) throw Error("denoiser: heads and head_dim must be >= 1");
    if (model_dim < 2 || model_dim % 2 != 0) throw Error("denoiser: model_dim must be even");
    if (frequencies < 1) throw Error("denoiser: frequency count must be >= 1");
    if (mlp_ratio < 1) throw Error("denoiser: mlp_ratio must be >= 1");
}

// ---------------------------------------------------------------------------
// Parameter container

namespace {

Linear make_linear(std::size_t in, std::size_t out) { return {Matrix(in, out), Matrix(1, out)}; }
Norm make_norm(std::size_t d) { return {Matrix(1, d), Matrix(1, d)}; }
AttentionWeights make_attention(std::size_t d, std::size_t inner) {
    return {Matrix(d, inner), Matrix(d, inner), Matrix(d, inner), make_linear(inner, d)};
}
Mlp make_mlp(std::size_t d, std::size_t hidden) { return {make_linear(d, hidden), make_linear(hidden, d)}; }

template <class P, class M>
std::vector<std::pair<std::string, M*>> collect(P& p) {
    std::vector<std::pair<std::string, M*>> out;
    auto lin = [&](const std::string& n, auto& l) {
        out.emplace_back(n + ".weight", &l.weight);
        out.emplace_back(n + ".bias", &l.bias);
    };
    auto norm = [&](const std::string& n, auto& l) {
        out.emplace_back(n + ".gain", &l.gain);
        out.emplace_back(n + ".bias", &l.bias);
    };
    auto attn = [&](const std::string& n, auto& a) {
        out.emplace_back(n + ".wq", &a.wq);
        out.emplace_back(n + ".wk", &a.wk);
        out.emplace_back(n + ".wv", &a.wv);
        lin(n + ".out", a.out);
    };
    auto mlp = [&](const std::string& n, auto& m) {
        lin(n + ".fc1", m.fc1);
        lin(n + ".fc2", m.fc2);
    };
    lin("point_in", p.point_in);
    lin("pose_in", p.pose_in);
    lin("time_in", p.time_in);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string pre = "blocks." + std::to_string(l) + ".";
        norm(pre + "self_norm", b.self_norm);
        attn(pre + "self_attn", b.self_attn);
        norm(pre + "self_mlp_norm", b.self_mlp_norm);
        mlp(pre + "self_mlp", b.self_mlp);
        norm(pre + "cross_norm", b.cross_norm);
        attn(pre + "cross_attn", b.cross_attn);
        norm(pre + "cross_mlp_norm", b.cross_mlp_norm);
        mlp(pre + "cross_mlp", b.cross_mlp);
    }
    norm("final_norm", p.final_norm);
    lin("head", p.head);
    return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> DenoiserParams::tensors() { return collect<DenoiserParams, Matrix>(*this); }

std::vector<std::pair<std::string, const Matrix*>> DenoiserParams::tensors() const {
    return collect<const DenoiserParams, const Matrix>(*this);
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : tensors()) n += m->size();
    return n;
}

DenoiserParams DenoiserParams::zeros(const DenoiserConfig& config) {
    config.validate();
    const auto d = static_cast<std::size_t>(config.model_dim);
    const auto inner = static_cast<std::size_t>(config.inner_dim());
    const auto feat = static_cast<std::size_t>(config.token_features());
    const auto hidden = static_cast<std::size_t>(config.mlp_hidden());
    DenoiserParams p;
    p.config = config;
    p.point_in = make_linear(feat, d);
    p.pose_in = make_linear(feat, d);
    p.time_in = make_linear(d, d);
    p.blocks.resize(static_cast<std::size_t>(config.layers));
    for (auto& b : p.blocks) {
        b.self_norm = make_norm(d);
        b.self_attn = make_attention(d, inner);
        b.self_mlp_norm = make_norm(d);
        b.self_mlp = make_mlp(d, hidden);
        b.cross_norm = make_norm(d);
        b.cross_attn = make_attention(d, inner);
        b.cross_mlp_norm = make_norm(d);
        b.cross_mlp = make_mlp(d, hidden);
    }
    p.final_norm = make_norm(d);
    p.head = make_linear(d, 3);
    return p;
}

bool DenoiserParams::operator==(const DenoiserParams& other) const {
    if (!(config == other.config) || seed != other.seed) return false;
    const auto a = tensors();
    const auto b = other.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first || !(*a[i].second == *b[i].second)) return false;
    return true;
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed) {
    DenoiserParams p = DenoiserParams::zeros(config);
    p.seed = seed;
    Rng rng(seed);
    for (auto& [name, m] : p.tensors()) {
        if (name.starts_with("head.")) continue;
        if (ends_with(name, ".gain")) {
            m->fill(1.0);
        } else if (ends_with(name, ".weight") || ends_with(name, ".wq") || ends_with(name, ".wk") ||
                   ends_with(name, ".wv")) {
            const double std = 1.0 / std::sqrt(static_cast<double>(m->rows));
            for (double& v : m->data) v = std * rng.normal();
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

constexpr double kNormEps = 1e-5;

// Branch-free exp so the softmax and GELU loops vectorize; agrees with
// std::exp to a few ulp on [-700, 700] and saturates outside.
inline double fast_exp(double x) {
    x = x < -700.0 ? -700.0 : x;
    x = x > 700.0 ? 700.0 : x;
    // adding 1.5 * 2^52 rounds to an integer held in the low mantissa bits
    const double shifted = x * std::numbers::log2e + 0x1.8p52;
    const double n = shifted - 0x1.8p52;
    const double r = (x - n * 0x1.62e42fefa3800p-1) - n * 0x1.ef35793c76730p-45;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    std::uint64_t bits;
    std::memcpy(&bits, &shifted, sizeof bits);
    const std::uint64_t scale_bits = (bits + 1023) << 52;
    double scale;
    std::memcpy(&scale, &scale_bits, sizeof scale);
    return p * scale;
}

struct NormCache {
    Matrix xhat;
    std::vector<double> rstd;
    Matrix out;
};

void norm_forward(const Matrix& x, const Norm& p, NormCache& c) {
    const std::size_t n = x.rows, d = x.cols;
    c.xhat.resize(n, d);
    c.out.resize(n, d);
    c.rstd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kNormEps);
        c.rstd[i] = rstd;
        auto xh = c.xhat.row(i);
        auto o = c.out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (r[j] - mean) * rstd;
            o[j] = xh[j] * p.gain.data[j] + p.bias.data[j];
        }
    }
}

void norm_backward(const NormCache& c, const Norm& p, const Matrix& dout, Norm& g, Matrix& dx) {
    const std::size_t n = dout.rows, d = dout.cols;
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto dy = dout.row(i);
        const auto xh = c.xhat.row(i);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            g.gain.data[j] += dy[j] * xh[j];
            g.bias.data[j] += dy[j];
            dxhat[j] = dy[j] * p.gain.data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        auto dxr = dx.row(i);
        for (std::size_t j = 0; j < d; ++j) dxr[j] += c.rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
}

// tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
constexpr double kGeluC = 0.7978845608028654;
constexpr double kGeluA = 0.044715;

inline double gelu_tanh(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 1.0 - 2.0 / (fast_exp(2.0 * u) + 1.0);
}

struct MlpCache {
    Matrix pre;
    Matrix act;
    Matrix slope;  // d act / d pre
};

void linear_forward(const Matrix& x, const Linear& l, Matrix& out) {
    matmul(x, l.weight, out);
    add_row_broadcast(out, l.bias);
}

// Returns the MLP output; `in` must outlive the cache.
Matrix mlp_forward(const Matrix& in, const Mlp& m, MlpCache& c) {
    linear_forward(in, m.fc1, c.pre);
    c.act.resize(c.pre.rows, c.pre.cols);
    c.slope.resize(c.pre.rows, c.pre.cols);
    const std::size_t count = c.pre.size();
    const double* __restrict x = c.pre.data.data();
    double* __restrict a = c.act.data.data();
    double* __restrict g = c.slope.data.data();
    for (std::size_t i = 0; i < count; ++i) {
        const double th = gelu_tanh(x[i]);
        a[i] = 0.5 * x[i] * (1.0 + th);
        g[i] = 0.5 * (1.0 + th) + 0.5 * x[i] * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x[i] * x[i]);
    }
    Matrix out;
    linear_forward(c.act, m.fc2, out);
    return out;
}

void mlp_backward(const Matrix& in, const MlpCache& c, const Mlp& m, const Matrix& dout, Mlp& g, Matrix& din) {
    matmul_tn_acc(c.act, dout, g.fc2.weight);
    column_sum_acc(dout, g.fc2.bias);
    Matrix dact;
    matmul_nt(dout, m.fc2.weight, dact);
    for (std::size_t i = 0; i < dact.size(); ++i) dact.data[i] *= c.slope.data[i];
    matmul_tn_acc(in, dact, g.fc1.weight);
    column_sum_acc(dact, g.fc1.bias);
    matmul_acc(dact, transpose(m.fc1.weight), din);
}

struct AttnCache {
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, n x p
    Matrix concat;
};

// Columns [h * hd, (h + 1) * hd) of m as their own matrix.
Matrix head_slice(const Matrix& m, std::size_t h, std::size_t hd) {
    Matrix out(m.rows, hd);
    for (std::size_t i = 0; i < m.rows; ++i)
        std::memcpy(out.data.data() + i * hd, m.data.data() + i * m.cols + h * hd, hd * sizeof(double));
    return out;
}

void add_head_slice(Matrix& m, const Matrix& part, std::size_t h) {
    const std::size_t hd = part.cols;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* dst = m.data.data() + i * m.cols + h * hd;
        const double* src = part.data.data() + i * hd;
        for (std::size_t e = 0; e < hd; ++e) dst[e] += src[e];
    }
}

Matrix attention_forward(const Matrix& xq, const Matrix& xkv, const AttentionWeights& w, int heads, int head_dim,
                         AttnCache& c) {
    if (xq.cols != w.wq.rows || xkv.cols != w.wk.rows) throw Error("denoiser: attention token width mismatch");
    matmul(xq, w.wq, c.q);
    matmul(xkv, w.wk, c.k);
    matmul(xkv, w.wv, c.v);
    const std::size_t n = xq.rows, p = xkv.rows, hd = static_cast<std::size_t>(head_dim);
    c.probs.assign(static_cast<std::size_t>(heads), Matrix());
    c.concat.resize(n, static_cast<std::size_t>(heads) * hd);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        Matrix& s = c.probs[h];
        matmul(head_slice(c.q, h, hd), transpose(head_slice(c.k, h, hd)), s);
        for (std::size_t i = 0; i < n; ++i) {
            double* __restrict r = s.data.data() + i * p;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < p; ++j) {
                r[j] *= scale;
                mx = std::max(mx, r[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                r[j] = fast_exp(r[j] - mx);
                sum += r[j];
            }
            const double inv = 1.0 / sum;
            for (std::size_t j = 0; j < p; ++j) r[j] *= inv;
        }
        Matrix o;
        matmul(s, head_slice(c.v, h, hd), o);
        add_head_slice(c.concat, o, h);
    }
    Matrix out;
    linear_forward(c.concat, w.out, out);
    return out;
}

// dxq and dxkv may alias (self-attention).
void attention_backward(const Matrix& xq, const Matrix& xkv, const AttnCache& c, const AttentionWeights& w, int heads,
                        int head_dim, const Matrix& dout, AttentionWeights& g, Matrix& dxq, Matrix& dxkv) {
    matmul_tn_acc(c.concat, dout, g.out.weight);
    column_sum_acc(dout, g.out.bias);
    Matrix dconcat;
    matmul_nt(dout, w.out.weight, dconcat);

    const std::size_t n = xq.rows, p = xkv.rows, hd = static_cast<std::size_t>(head_dim);
    const std::size_t inner = static_cast<std::size_t>(heads) * hd;
    Matrix dq(n, inner), dk(p, inner), dv(p, inner);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const Matrix& pr = c.probs[h];
        const Matrix dout_h = head_slice(dconcat, h, hd);
        // dP = dO V^T, dS = P * (dP - rowsum(P * dP)) * scale
        Matrix ds;
        matmul_nt(dout_h, head_slice(c.v, h, hd), ds);
        for (std::size_t i = 0; i < n; ++i) {
            const double* prow = pr.data.data() + i * p;
            double* __restrict r = ds.data.data() + i * p;
            double rowdot = 0.0;
            for (std::size_t j = 0; j < p; ++j) rowdot += prow[j] * r[j];
            for (std::size_t j = 0; j < p; ++j) r[j] = prow[j] * (r[j] - rowdot) * scale;
        }
        Matrix part(n, hd);
        matmul_acc(ds, head_slice(c.k, h, hd), part);
        add_head_slice(dq, part, h);
        Matrix kpart(p, hd);
        matmul_tn_acc(ds, head_slice(c.q, h, hd), kpart);
        add_head_slice(dk, kpart, h);
        Matrix vpart(p, hd);
        matmul_tn_acc(pr, dout_h, vpart);
        add_head_slice(dv, vpart, h);
    }
    matmul_tn_acc(xq, dq, g.wq);
    matmul_tn_acc(xkv, dk, g.wk);
    matmul_tn_acc(xkv, dv, g.wv);
    matmul_acc(dq, transpose(w.wq), dxq);
    matmul_acc(dk, transpose(w.wk), dxkv);
    matmul_acc(dv, transpose(w.wv), dxkv);
}

void add_in_place(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

// Total order on doubles consistent with < and separating -0 from +0.
std::int64_t order_key(double v) {
    const auto bits = std::bit_cast<std::int64_t>(v);
    return bits < 0 ? std::numeric_limits<std::int64_t>::min() - bits - 1 : bits;
}

void token_features(const Matrix& coords, int frequencies, Matrix& out) {
    const std::size_t width = 3 + 6 * static_cast<std::size_t>(frequencies);
    out.resize(coords.rows, width);
    for (std::size_t i = 0; i < coords.rows; ++i) {
        auto r = out.row(i);
        const Vec3 p{coords(i, 0), coords(i, 1), coords(i, 2)};
        r[0] = p[0];
        r[1] = p[1];
        r[2] = p[2];
        posenc_into(p, frequencies, r.subspan(3));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward / backward

struct SubCache {
    NormCache norm;
    AttnCache attn;
    NormCache mlp_norm;
    MlpCache mlp;
};

struct LayerCache {
    SubCache self;
    SubCache cross;
};

struct ForwardPass::Cache {
    Matrix features;       // sorted point tokens, N x F
    Matrix pose_features;  // J x F
    Matrix context;        // pose tokens, J x d
    std::vector<int> steps;                       // sorted
    std::map<int, std::vector<double>> embeds;    // step -> sinusoidal embedding
    std::vector<LayerCache> layers;
    NormCache final_norm;
};

ForwardPass::ForwardPass(const DenoiserParams& params, const Matrix& points, std::span<const int> steps,
                         const Matrix& keypoints)
    : params_(&params), cache_(std::make_unique<Cache>()) {
    const DenoiserConfig& cfg = params.config;
    if (points.cols != 3 || keypoints.cols != 3) throw Error("denoiser: inputs must be N x 3 and J x 3");
    if (points.rows == 0 || keypoints.rows == 0) throw Error("denoiser: empty input");
    if (steps.size() != points.rows) throw Error("denoiser: one step per point token is required");
    for (double v : points.data)
        if (!std::isfinite(v)) throw Error("denoiser: non-finite input point");
    for (double v : keypoints.data)
        if (!std::isfinite(v)) throw Error("denoiser: non-finite keypoint");
    for (int s : steps)
        if (s < 0) throw Error("denoiser: negative diffusion step");

    const std::size_t n = points.rows;
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    auto key_less = [&](std::size_t a, std::size_t b) {
        if (steps[a] != steps[b]) return steps[a] < steps[b];
        for (std::size_t c = 0; c < 3; ++c) {
            const auto ka = order_key(points(a, c)), kb = order_key(points(b, c));
            if (ka != kb) return ka < kb;
        }
        return false;
    };
    std::stable_sort(order_.begin(), order_.end(), key_less);

    Cache& c = *cache_;
    Matrix sorted(n, 3);
    c.steps.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < 3; ++k) sorted(s, k) = points(order_[s], k);
        c.steps[s] = steps[order_[s]];
    }

    token_features(sorted, cfg.frequencies, c.features);
    token_features(keypoints, cfg.frequencies, c.pose_features);

    Matrix h;
    linear_forward(c.features, params.point_in, h);
    std::map<int, Matrix> projected;
    for (int s : c.steps) {
        if (projected.contains(s)) continue;
        c.embeds[s] = timestep_embed(s, cfg.model_dim);
        Matrix e(1, static_cast<std::size_t>(cfg.model_dim));
        std::copy(c.embeds[s].begin(), c.embeds[s].end(), e.data.begin());
        Matrix proj;
        linear_forward(e, params.time_in, proj);
        projected.emplace(s, std::move(proj));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix& proj = projected.at(c.steps[i]);
        auto r = h.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += proj.data[j];
    }
    linear_forward(c.pose_features, params.pose_in, c.context);

    c.layers.resize(params.blocks.size());
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        const Block& b = params.blocks[l];
        LayerCache& lc = c.layers[l];
        if (cfg.uses_self()) {
            norm_forward(h, b.self_norm, lc.self.norm);
            add_in_place(h, attention_forward(lc.self.norm.out, lc.self.norm.out, b.self_attn, cfg.heads,
                                              cfg.head_dim, lc.self.attn));
            norm_forward(h, b.self_mlp_norm, lc.self.mlp_norm);
            add_in_place(h, mlp_forward(lc.self.mlp_norm.out, b.self_mlp, lc.self.mlp));
        }
        if (cfg.uses_cross()) {
            norm_forward(h, b.cross_norm, lc.cross.norm);
            add_in_place(h, attention_forward(lc.cross.norm.out, c.context, b.cross_attn, cfg.heads, cfg.head_dim,
                                              lc.cross.attn));
            norm_forward(h, b.cross_mlp_norm, lc.cross.mlp_norm);
            add_in_place(h, mlp_forward(lc.cross.mlp_norm.out, b.cross_mlp, lc.cross.mlp));
        }
    }
    norm_forward(h, params.final_norm, c.final_norm);
    Matrix out_sorted;
    linear_forward(c.final_norm.out, params.head, out_sorted);

    output_.resize(n, 3);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < 3; ++k) output_(order_[s], k) = out_sorted(s, k);
}

ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;
ForwardPass& ForwardPass::operator=(ForwardPass&&) noexcept = default;

void ForwardPass::backward(const Matrix& upstream, DenoiserParams& grads) const {
    const DenoiserParams& params = *params_;
    const DenoiserConfig& cfg = params.config;
    const Cache& c = *cache_;
    const std::size_t n = output_.rows;
    if (upstream.rows != n || upstream.cols != 3) throw Error("denoiser: upstream gradient shape mismatch");
    if (!(grads.config == cfg) || grads.blocks.size() != params.blocks.size())
        throw Error("denoiser: gradient set does not match parameters");

    Matrix dy(n, 3);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < 3; ++k) dy(s, k) = upstream(order_[s], k);

    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    matmul_tn_acc(c.final_norm.out, dy, grads.head.weight);
    column_sum_acc(dy, grads.head.bias);
    Matrix dnorm;
    matmul_nt(dy, params.head.weight, dnorm);
    Matrix dh(n, d);
    norm_backward(c.final_norm, params.final_norm, dnorm, grads.final_norm, dh);

    Matrix dcontext(c.context.rows, d);
    for (std::size_t l = params.blocks.size(); l-- > 0;) {
        const Block& b = params.blocks[l];
        Block& gb = grads.blocks[l];
        const LayerCache& lc = c.layers[l];
        if (cfg.uses_cross()) {
            Matrix din(n, d);
            mlp_backward(lc.cross.mlp_norm.out, lc.cross.mlp, b.cross_mlp, dh, gb.cross_mlp, din);
            norm_backward(lc.cross.mlp_norm, b.cross_mlp_norm, din, gb.cross_mlp_norm, dh);
            Matrix dq(n, d);
            attention_backward(lc.cross.norm.out, c.context, lc.cross.attn, b.cross_attn, cfg.heads, cfg.head_dim, dh,
                               gb.cross_attn, dq, dcontext);
            norm_backward(lc.cross.norm, b.cross_norm, dq, gb.cross_norm, dh);
        }
        if (cfg.uses_self()) {
            Matrix din(n, d);
            mlp_backward(lc.self.mlp_norm.out, lc.self.mlp, b.self_mlp, dh, gb.self_mlp, din);
            norm_backward(lc.self.mlp_norm, b.self_mlp_norm, din, gb.self_mlp_norm, dh);
            Matrix dx(n, d);
            attention_backward(lc.self.norm.out, lc.self.norm.out, lc.self.attn, b.self_attn, cfg.heads, cfg.head_dim,
                               dh, gb.self_attn, dx, dx);
            norm_backward(lc.self.norm, b.self_norm, dx, gb.self_norm, dh);
        }
    }

    matmul_tn_acc(c.features, dh, grads.point_in.weight);
    column_sum_acc(dh, grads.point_in.bias);
    // Group token gradients by step, in sorted order, for the time projection.
    std::map<int, Matrix> per_step;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = per_step.try_emplace(c.steps[i], 1, d);
        auto acc = it->second.row(0);
        const auto r = dh.row(i);
        for (std::size_t j = 0; j < d; ++j) acc[j] += r[j];
    }
    for (const auto& [s, g] : per_step) {
        const auto& e = c.embeds.at(s);
        Matrix em(1, d);
        std::copy(e.begin(), e.end(), em.data.begin());
        matmul_tn_acc(em, g, grads.time_in.weight);
        column_sum_acc(g, grads.time_in.bias);
    }
    matmul_tn_acc(c.pose_features, dcontext, grads.pose_in.weight);
    column_sum_acc(dcontext, grads.pose_in.bias);
}

Matrix attention(const Matrix& q_tokens, const Matrix& kv_tokens, const DenoiserParams& params, int layer,
                 Branch branch) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= params.blocks.size())
        throw Error("denoiser: layer index out of range");
    const auto d = static_cast<std::size_t>(params.config.model_dim);
    if (q_tokens.cols != d || kv_tokens.cols != d) throw Error("denoiser: attention token width mismatch");
    const Block& b = params.blocks[static_cast<std::size_t>(layer)];
    AttnCache cache;
    return attention_forward(q_tokens, kv_tokens, branch == Branch::self ? b.self_attn : b.cross_attn,
                             params.config.heads, params.config.head_dim, cache);
}

namespace {

ForwardPass run(const DenoiserParams& params, const PointCloud& xt, int t, const Pose& pose) {
    if (t < 1) throw Error("denoiser: step " + std::to_string(t) + " out of range");
    const std::vector<int> steps(xt.size(), t);
    return ForwardPass(params, to_matrix(xt.points), steps, to_matrix(pose.keypoints));
}

}  // namespace

Matrix forward(const DenoiserParams& params, const PointCloud& xt, int t, const Pose& pose) {
    return run(params, xt, t, pose).output();
}

DenoiserParams backward(const DenoiserParams& params, const PointCloud& xt, int t, const Pose& pose,
                        const Matrix& upstream) {
    const ForwardPass pass = run(params, xt, t, pose);
    DenoiserParams grads = DenoiserParams::zeros(params.config);
    grads.seed = params.seed;
    pass.backward(upstream, grads);
    return grads;
}

}  // namespace pcdiff
