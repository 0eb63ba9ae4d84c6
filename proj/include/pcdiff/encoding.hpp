#pragma once

#include <span>
#include <vector>

#include "pcdiff/geometry.hpp"

namespace pcdiff {

struct EncodingConfig {
    int frequencies = 7;  // L
    int model_dim = 512;

    void validate() const;
};

// Frequency encoding of a 3D coordinate: for each axis and each
// i = 0..L-1 the pair sin(2^i pi p), cos(2^i pi p). Output size 6L.
std::vector<double> posenc(const Vec3& p, int frequencies);
void posenc_into(const Vec3& p, int frequencies, std::span<double> out);

// Sinusoidal step embedding: sin half then cos half, angular frequencies
// geometrically spaced from 1 down to 1e-4. `dim` must be even.
std::vector<double> timestep_embed(int t, int dim);

}  // namespace pcdiff
