#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcdiff/geometry.hpp"
#include "pcdiff/tensor.hpp"

namespace pcdiff {

enum class AttentionMode { self_only, cross_only, self_plus_cross };

std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view text);

struct DenoiserConfig {
    int layers = 8;
    int heads = 4;
    int head_dim = 128;
    int model_dim = 512;
    int frequencies = 7;
    int mlp_ratio = 4;
    AttentionMode attention_mode = AttentionMode::self_plus_cross;

    void validate() const;
    // Per-token input width: raw coordinates plus the 6L frequency features.
    int token_features() const { return 3 + 6 * frequencies; }
    int inner_dim() const { return heads * head_dim; }
    int mlp_hidden() const { return mlp_ratio * model_dim; }
    bool uses_self() const { return attention_mode != AttentionMode::cross_only; }
    bool uses_cross() const { return attention_mode != AttentionMode::self_only; }

    bool operator==(const DenoiserConfig&) const = default;
};

struct Linear {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

struct Norm {
    Matrix gain;  // 1 x d
    Matrix bias;  // 1 x d
};

struct AttentionWeights {
    Matrix wq, wk, wv;  // d x inner
    Linear out;         // inner x d
};

struct Mlp {
    Linear fc1;
    Linear fc2;
};

struct Block {
    Norm self_norm;
    AttentionWeights self_attn;
    Norm self_mlp_norm;
    Mlp self_mlp;
    Norm cross_norm;
    AttentionWeights cross_attn;
    Norm cross_mlp_norm;
    Mlp cross_mlp;
};

// Full learnable parameter set. Gradients use the same type.
struct DenoiserParams {
    DenoiserConfig config;
    std::uint64_t seed = 0;
    Linear point_in;
    Linear pose_in;
    Linear time_in;
    std::vector<Block> blocks;
    Norm final_norm;
    Linear head;

    // Every tensor with a stable dotted name, in a fixed canonical order.
    std::vector<std::pair<std::string, Matrix*>> tensors();
    std::vector<std::pair<std::string, const Matrix*>> tensors() const;
    std::size_t parameter_count() const;

    // Same shapes as `config` implies, all entries zero.
    static DenoiserParams zeros(const DenoiserConfig& config);

    bool operator==(const DenoiserParams& other) const;
};

// Scaled-normal weights (std = 1/sqrt(fan_in)), zero biases, unit norm
// gains and a zero output head; deterministic per seed.
DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed);

enum class Branch { self, cross };

// Multi-head scaled dot-product attention of layer `layer`'s branch:
// per head softmax(Q K^T / sqrt(head_dim)) V, heads concatenated and
// output-projected. Self-attention passes the same tokens twice.
Matrix attention(const Matrix& q_tokens, const Matrix& kv_tokens, const DenoiserParams& params, int layer,
                 Branch branch);

// One evaluation of the noise predictor with everything the reverse pass
// needs. `steps` holds a diffusion step per point token; step 0 marks a
// clean context token (used by completion). Tokens are processed in a
// canonical order keyed on (step, coordinates), which makes every reduction
// over the point set independent of input order.
class ForwardPass {
public:
    ForwardPass(const DenoiserParams& params, const Matrix& points, std::span<const int> steps,
                const Matrix& keypoints);
    ~ForwardPass();
    ForwardPass(ForwardPass&&) noexcept;
    ForwardPass& operator=(ForwardPass&&) noexcept;

    // N x 3 predicted noise, rows in input order.
    const Matrix& output() const { return output_; }

    // Accumulates the gradient of <output, upstream> into `grads`.
    void backward(const Matrix& upstream, DenoiserParams& grads) const;

private:
    struct Cache;
    const DenoiserParams* params_;
    Matrix output_;
    std::vector<std::size_t> order_;  // sorted position -> input row
    std::unique_ptr<Cache> cache_;
};

// eps_hat = f(X_t, t, pose); t >= 1.
Matrix forward(const DenoiserParams& params, const PointCloud& xt, int t, const Pose& pose);

// Exact gradient of <forward(...), upstream> with respect to every parameter.
DenoiserParams backward(const DenoiserParams& params, const PointCloud& xt, int t, const Pose& pose,
                        const Matrix& upstream);

}  // namespace pcdiff
