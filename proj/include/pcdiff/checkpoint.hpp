#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pcdiff/config.hpp"
#include "pcdiff/denoiser.hpp"
#include "pcdiff/training.hpp"

namespace pcdiff {

inline constexpr char kCheckpointMagic[8] = {'P', 'C', 'D', 'I', 'F', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume training or to sample: resolved settings,
// parameters, Adam moments, step counter, noise stream and data scale.
struct Checkpoint {
    Settings settings;
    TrainState state;
    double data_scale = 1.0;
};

// Little-endian: magic, u32 version, u64-length config blob (sorted
// "key = value" text), u64 tensor count, then per tensor: u32 name length,
// name, u32 rank, u64 dims, f64 payload.
std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pcdiff
