#include "pcdiff/ply.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcdiff/error.hpp"

namespace pcdiff {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw Error("ply: " + path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool is_float_type(const std::string& t) {
    return t == "float" || t == "float32" || t == "double" || t == "float64";
}

bool is_single(const std::string& t) { return t == "float" || t == "float32"; }

std::string format_g(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("ply: cannot open " + path.string());

    std::string line;
    std::size_t lineno = 0;
    auto next = [&](std::string& out) {
        if (!std::getline(in, out)) return false;
        ++lineno;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
    };

    if (!next(line) || line != "ply") fail(path, lineno, "missing 'ply' magic");
    if (!next(line) || split(line) != std::vector<std::string>{"format", "ascii", "1.0"})
        fail(path, lineno, "expected 'format ascii 1.0'");

    PointCloud cloud;
    long long vertex_count = -1;
    bool in_vertex = false;
    std::vector<std::string> props;
    int ix = -1, iy = -1, iz = -1;
    bool single[3] = {false, false, false};
    bool ended = false;
    while (next(line)) {
        const auto w = split(line);
        if (w.empty()) continue;
        if (w[0] == "end_header") {
            ended = true;
            break;
        }
        if (w[0] == "comment" || w[0] == "obj_info") {
            if (w.size() == 3 && w[1] == "world_scale") {
                if (!parse_double(w[2], cloud.world.scale)) fail(path, lineno, "bad world_scale comment");
            } else if (w.size() == 5 && w[1] == "world_offset") {
                for (int c = 0; c < 3; ++c)
                    if (!parse_double(w[2 + c], cloud.world.offset[c])) fail(path, lineno, "bad world_offset comment");
            }
            continue;
        }
        if (w[0] == "element") {
            if (w.size() != 3) fail(path, lineno, "malformed element line");
            long long count = 0;
            auto [p, ec] = std::from_chars(w[2].data(), w[2].data() + w[2].size(), count);
            if (ec != std::errc() || p != w[2].data() + w[2].size() || count < 0)
                fail(path, lineno, "bad element count '" + w[2] + "'");
            in_vertex = w[1] == "vertex";
            if (in_vertex) {
                if (vertex_count >= 0) fail(path, lineno, "duplicate vertex element");
                vertex_count = count;
            } else if (count != 0) {
                fail(path, lineno, "unsupported non-empty element '" + w[1] + "'");
            }
            continue;
        }
        if (w[0] == "property") {
            if (!in_vertex) continue;
            if (w.size() != 3) fail(path, lineno, "unsupported vertex property '" + line + "'");
            const std::string& name = w[2];
            if (name == "x" || name == "y" || name == "z") {
                if (!is_float_type(w[1])) fail(path, lineno, "property " + name + " is not a float type");
                const int idx = static_cast<int>(props.size());
                const int axis = name == "x" ? 0 : name == "y" ? 1 : 2;
                (axis == 0 ? ix : axis == 1 ? iy : iz) = idx;
                single[axis] = is_single(w[1]);
            }
            props.push_back(name);
            continue;
        }
        fail(path, lineno, "unexpected header line '" + line + "' (missing end_header?)");
    }
    if (!ended) fail(path, lineno, "missing end_header");
    if (vertex_count < 0) fail(path, lineno, "missing vertex element");
    if (ix < 0 || iy < 0 || iz < 0) fail(path, lineno, "vertex element lacks x, y, z properties");

    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    for (long long v = 0; v < vertex_count; ++v) {
        if (!next(line))
            fail(path, lineno, "truncated body: expected " + std::to_string(vertex_count) + " vertices, found " +
                                   std::to_string(v));
        const auto w = split(line);
        if (w.size() != props.size())
            fail(path, lineno, "expected " + std::to_string(props.size()) + " values, found " +
                                   std::to_string(w.size()));
        Vec3 p{};
        const int idx[3] = {ix, iy, iz};
        for (int c = 0; c < 3; ++c) {
            if (!parse_double(w[idx[c]], p[c])) fail(path, lineno, "bad number '" + w[idx[c]] + "'");
            // 9 digits name a float uniquely; snap back onto it
            if (single[c]) p[c] = static_cast<float>(p[c]);
        }
        cloud.points.push_back(p);
    }
    while (next(line))
        if (!split(line).empty())
            fail(path, lineno, "vertex count mismatch: more rows than the declared " + std::to_string(vertex_count));
    try {
        cloud.validate();
    } catch (const Error& e) {
        throw Error("ply: " + path.string() + ": " + e.what());
    }
    return cloud;
}

void save_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("ply: cannot write " + path.string());
    out << "ply\nformat ascii 1.0\n";
    if (!(cloud.world == WorldTransform{})) {
        out << "comment world_scale " << format_g(cloud.world.scale, 17) << "\n";
        out << "comment world_offset " << format_g(cloud.world.offset[0], 17) << " "
            << format_g(cloud.world.offset[1], 17) << " " << format_g(cloud.world.offset[2], 17) << "\n";
    }
    out << "element vertex " << cloud.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : cloud.points) {
        out << format_g(static_cast<float>(p[0]), 9) << " " << format_g(static_cast<float>(p[1]), 9) << " "
            << format_g(static_cast<float>(p[2]), 9) << "\n";
    }
    if (!out) throw Error("ply: write failed for " + path.string());
}

Pose load_pose(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("pose: cannot open " + path.string());
    Pose pose;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto w = split(line);
        if (w.empty() || w[0][0] == '#') continue;
        if (w.size() != 3)
            throw Error("pose: " + path.string() + ":" + std::to_string(lineno) + ": expected 3 values, found " +
                        std::to_string(w.size()));
        Vec3 k{};
        for (int c = 0; c < 3; ++c)
            if (!parse_double(w[c], k[c]))
                throw Error("pose: " + path.string() + ":" + std::to_string(lineno) + ": bad number '" + w[c] + "'");
        pose.keypoints.push_back(k);
    }
    try {
        pose.validate();
    } catch (const Error& e) {
        throw Error("pose: " + path.string() + ": " + e.what());
    }
    return pose;
}

void save_pose(const std::filesystem::path& path, const Pose& pose) {
    const Pose world = denormalize(pose);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("pose: cannot write " + path.string());
    for (const auto& k : world.keypoints)
        out << format_g(k[0], 17) << " " << format_g(k[1], 17) << " " << format_g(k[2], 17) << "\n";
    if (!out) throw Error("pose: write failed for " + path.string());
}

}  // namespace pcdiff
