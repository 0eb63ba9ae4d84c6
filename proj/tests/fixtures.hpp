#pragma once

#include <filesystem>

#include "pcdiff/config.hpp"
#include "pcdiff/synthdata.hpp"

namespace testing {

// Small but complete settings: 2-layer width-16 model, 20 diffusion steps.
inline pcdiff::Settings tiny_settings() {
    pcdiff::Settings s;
    s.set("schedule.T", "20");
    s.set("schedule.beta_max", "0.6");
    s.set("denoiser.layers", "2");
    s.set("denoiser.heads", "2");
    s.set("denoiser.head_dim", "8");
    s.set("denoiser.model_dim", "16");
    s.set("denoiser.frequencies", "2");
    s.set("denoiser.mlp_ratio", "2");
    s.set("train.learning_rate", "0.001");
    s.set("train.batch_size", "3");
    s.set("train.steps", "6");
    s.set("train.checkpoint_every", "3");
    s.set("train.points", "32");
    s.set("train.seed", "5");
    s.set("train.completion_ratio", "0.5");
    s.set("data.frames", "10");
    s.set("data.points", "64");
    s.set("data.seed", "3");
    s.set("run.workers", "1");
    return s;
}

inline pcdiff::Manifest tiny_dataset(const pcdiff::Settings& s, const std::filesystem::path& dir) {
    return pcdiff::gen_dataset(pcdiff::figure_spec(s), pcdiff::dataset_options(s), dir);
}

}  // namespace testing
