#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <unistd.h>

#include "pcdiff/geometry.hpp"
#include "pcdiff/rng.hpp"

namespace testing {

// Fresh empty directory removed again on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("pcdiff_" + name + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline pcdiff::PointCloud random_cloud(std::size_t n, pcdiff::Rng& rng, double spread = 1.0) {
    pcdiff::PointCloud c;
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({spread * (2 * rng.uniform() - 1), spread * (2 * rng.uniform() - 1),
                            spread * (2 * rng.uniform() - 1)});
    return c;
}

inline pcdiff::Pose random_pose(std::size_t j, pcdiff::Rng& rng, double spread = 0.5) {
    pcdiff::Pose p;
    for (std::size_t i = 0; i < j; ++i)
        p.keypoints.push_back({spread * (2 * rng.uniform() - 1), spread * (2 * rng.uniform() - 1),
                               spread * (2 * rng.uniform() - 1)});
    return p;
}

}  // namespace testing
