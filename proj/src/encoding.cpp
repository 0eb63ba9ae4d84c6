#include "pcdiff/encoding.hpp"

#include <cmath>
#include <numbers>

#include "pcdiff/error.hpp"

namespace pcdiff {

void EncodingConfig::validate() const {
    if (frequencies < 1) throw Error("encoding: frequency count must be >= 1");
    if (model_dim < 2 || model_dim % 2 != 0) throw Error("encoding: model_dim must be even");
}

void posenc_into(const Vec3& p, int frequencies, std::span<double> out) {
    if (frequencies < 1) throw Error("encoding: frequency count must be >= 1");
    if (out.size() != static_cast<std::size_t>(6 * frequencies)) throw Error("encoding: output size must be 6L");
    std::size_t k = 0;
    for (int c = 0; c < 3; ++c) {
        double freq = std::numbers::pi;
        for (int i = 0; i < frequencies; ++i, freq *= 2.0) {
            out[k++] = std::sin(freq * p[c]);
            out[k++] = std::cos(freq * p[c]);
        }
    }
}

std::vector<double> posenc(const Vec3& p, int frequencies) {
    if (frequencies < 1) throw Error("encoding: frequency count must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(6 * frequencies));
    posenc_into(p, frequencies, out);
    return out;
}

std::vector<double> timestep_embed(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw Error("encoding: timestep embedding width must be even");
    if (t < 0) throw Error("encoding: negative timestep");
    const int half = dim / 2;
    const double step = half > 1 ? std::log(1.0e4) / (half - 1) : 0.0;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int k = 0; k < half; ++k) {
        const double angle = t * std::exp(-step * k);
        out[k] = std::sin(angle);
        out[half + k] = std::cos(angle);
    }
    return out;
}

}  // namespace pcdiff
