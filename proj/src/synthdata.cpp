#include "pcdiff/synthdata.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "pcdiff/error.hpp"
#include "pcdiff/ply.hpp"
#include "pcdiff/rng.hpp"

namespace pcdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Mat3 = std::array<Vec3, 3>;  // rows

constexpr Mat3 kIdentity{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

Mat3 mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    return r;
}

Vec3 apply(const Mat3& m, const Vec3& v) { return {dot(m[0], v), dot(m[1], v), dot(m[2], v)}; }

Mat3 rotation(int axis, double degrees) {
    const double r = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    switch (axis) {
        case 0: return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
        case 1: return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
        default: return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    }
}

Vec3 mirror(const Vec3& v) { return {-v[0], v[1], v[2]}; }

Vec3 unit(const Vec3& v) { return (1.0 / norm(v)) * v; }

// Local surface coordinates of one layout sample.
struct Sample {
    bool skirt = false;
    int segment = -1;
    bool cap = false;
    double s = 0.0;    // along the axis (body) or depth (skirt), in [0, 1]
    double phi = 0.0;  // azimuth
    Vec3 dir{};        // cap direction in the segment frame
};

struct SegmentFrame {
    Vec3 e1, e2, axis;
};

double segment_area(const std::vector<Vec3>& rest, const Segment& seg) {
    const double len = norm(rest[static_cast<std::size_t>(seg.b)] - rest[static_cast<std::size_t>(seg.a)]);
    return 2.0 * std::numbers::pi * seg.radius * len + 4.0 * std::numbers::pi * seg.radius * seg.radius;
}

// Rest frames; midline segments get e1 = +x so mirroring negates e1 only,
// right segments take the mirror image of their left twin.
std::vector<SegmentFrame> rest_frames(const FigureSpec& spec, const std::vector<Vec3>& rest) {
    std::vector<SegmentFrame> frames(spec.segments.size());
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        const auto& seg = spec.segments[i];
        if (seg.mirror < static_cast<int>(i)) continue;
        const Vec3 axis = unit(rest[static_cast<std::size_t>(seg.b)] - rest[static_cast<std::size_t>(seg.a)]);
        Vec3 ref{1.0, 0.0, 0.0};
        if (std::abs(dot(ref, axis)) > 0.99) ref = {0.0, 1.0, 0.0};
        const Vec3 e1 = unit(ref - dot(ref, axis) * axis);
        frames[i] = {e1, cross(axis, e1), axis};
    }
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        const auto& seg = spec.segments[i];
        if (seg.mirror >= static_cast<int>(i)) continue;
        const auto& f = frames[static_cast<std::size_t>(seg.mirror)];
        frames[i] = {mirror(f.e1), mirror(f.e2), mirror(f.axis)};
    }
    return frames;
}

// Fixed surface layout shared by every frame: a list of local coordinates,
// emitted in mirror pairs so the rest pose is exactly symmetric.
std::vector<Sample> layout(const FigureSpec& spec) {
    const auto rest = forward_kinematics(spec, std::vector<double>(spec.dofs.size(), 0.0));
    std::vector<double> weights;
    std::vector<int> choices;
    double total = 0.0;
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        const auto& seg = spec.segments[i];
        if (seg.mirror < static_cast<int>(i)) continue;
        // a pair on a midline segment puts both points on it
        const double w = segment_area(rest, seg) * (seg.mirror == static_cast<int>(i) ? 0.5 : 1.0);
        weights.push_back(w);
        choices.push_back(static_cast<int>(i));
        total += w;
    }

    const auto& sk = spec.skirt;
    const double dr = sk.hem_radius - sk.top_radius;
    Rng rng(spec.layout_seed);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(spec.n_points));
    while (out.size() < static_cast<std::size_t>(spec.n_points)) {
        Sample a;
        a.skirt = rng.uniform() < spec.skirt_fraction;
        if (a.skirt) {
            // area density along the cone grows with the radius
            const double u = rng.uniform();
            const double r0 = sk.top_radius;
            a.s = std::abs(dr) < 1e-12 ? u : (-r0 + std::sqrt(r0 * r0 + 2.0 * dr * u * (r0 + 0.5 * dr))) / dr;
            a.phi = 2.0 * std::numbers::pi * rng.uniform();
        } else {
            double pick = rng.uniform() * total;
            std::size_t k = 0;
            while (k + 1 < weights.size() && pick >= weights[k]) pick -= weights[k++];
            a.segment = choices[k];
            const auto& seg = spec.segments[static_cast<std::size_t>(a.segment)];
            const double len =
                norm(rest[static_cast<std::size_t>(seg.b)] - rest[static_cast<std::size_t>(seg.a)]);
            const double side = 2.0 * std::numbers::pi * seg.radius * len;
            const double caps = 4.0 * std::numbers::pi * seg.radius * seg.radius;
            a.cap = rng.uniform() * (side + caps) >= side;
            if (a.cap) {
                const double z = 2.0 * rng.uniform() - 1.0;
                const double t = 2.0 * std::numbers::pi * rng.uniform();
                const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
                a.dir = {rho * std::cos(t), rho * std::sin(t), z};
            } else {
                a.s = rng.uniform();
                a.phi = 2.0 * std::numbers::pi * rng.uniform();
            }
        }
        out.push_back(a);
        if (out.size() == static_cast<std::size_t>(spec.n_points)) break;

        Sample b = a;
        if (a.skirt) {
            b.phi = std::numbers::pi - a.phi;
        } else {
            const auto& seg = spec.segments[static_cast<std::size_t>(a.segment)];
            if (seg.mirror == a.segment) {
                b.phi = std::numbers::pi - a.phi;
                b.dir = {-a.dir[0], a.dir[1], a.dir[2]};
            } else {
                b.segment = seg.mirror;
            }
        }
        out.push_back(b);
    }
    return out;
}

int find_joint(const FigureSpec& spec, const std::string& name) {
    for (std::size_t i = 0; i < spec.joints.size(); ++i)
        if (spec.joints[i].name == name) return static_cast<int>(i);
    throw Error("synthdata: figure has no joint '" + name + "'");
}

std::vector<Mat3> global_rotations(const FigureSpec& spec, std::span<const double> angles) {
    std::vector<Mat3> local(spec.joints.size(), kIdentity);
    for (std::size_t d = 0; d < spec.dofs.size(); ++d) {
        const auto& dof = spec.dofs[d];
        const double a = dof.mirrored && dof.axis != 0 ? -angles[d] : angles[d];
        auto& m = local[static_cast<std::size_t>(dof.joint)];
        m = mul(m, rotation(dof.axis, a));
    }
    std::vector<Mat3> global(spec.joints.size());
    for (std::size_t j = 0; j < spec.joints.size(); ++j) {
        const int p = spec.joints[j].parent;
        global[j] = p < 0 ? local[j] : mul(global[static_cast<std::size_t>(p)], local[j]);
    }
    return global;
}

void check_angles(const FigureSpec& spec, std::span<const double> angles) {
    if (angles.size() != spec.dofs.size())
        throw Error("synthdata: expected " + std::to_string(spec.dofs.size()) + " angles, got " +
                    std::to_string(angles.size()));
    for (std::size_t d = 0; d < angles.size(); ++d) {
        const auto& dof = spec.dofs[d];
        if (!std::isfinite(angles[d]) || angles[d] < dof.lo || angles[d] > dof.hi)
            throw Error("synthdata: invalid angle " + std::to_string(angles[d]) + " for dof '" + dof.name + "'");
    }
}

}  // namespace

FigureSpec FigureSpec::standard() {
    FigureSpec s;
    s.joints = {
        {"pelvis", -1, {0, 0, 100}},       {"chest", 0, {0, 0, 28}},
        {"neck", 1, {0, 0, 22}},           {"head", 2, {0, 0, 14}},
        {"l_shoulder", 1, {17, 0, 18}},    {"l_elbow", 4, {0, 0, -29}},
        {"l_wrist", 5, {0, 0, -25}},       {"r_shoulder", 1, {-17, 0, 18}},
        {"r_elbow", 7, {0, 0, -29}},       {"r_wrist", 8, {0, 0, -25}},
        {"l_hip", 0, {9, 0, -8}},          {"l_knee", 10, {0, 0, -43}},
        {"l_ankle", 11, {0, 0, -42}},      {"r_hip", 0, {-9, 0, -8}},
        {"r_knee", 13, {0, 0, -43}},       {"r_ankle", 14, {0, 0, -42}},
    };
    s.segments = {
        {0, 1, 13.0, 0},  {1, 2, 14.0, 1},   {2, 3, 9.0, 2},                      // midline
        {1, 4, 6.0, 6},   {4, 5, 5.0, 7},    {5, 6, 4.0, 8},                      // left arm
        {1, 7, 6.0, 3},   {7, 8, 5.0, 4},    {8, 9, 4.0, 5},                      // right arm
        {0, 10, 9.0, 12}, {10, 11, 7.5, 13}, {11, 12, 5.5, 14},                   // left leg
        {0, 13, 9.0, 9},  {13, 14, 7.5, 10}, {14, 15, 5.5, 11},                   // right leg
    };
    s.dofs = {
        {"l_shoulder_flex", 5, 0, -60, 90},       {"l_shoulder_abd", 5, 1, -80, 0},
        {"l_elbow_flex", 6, 0, 0, 120},           {"r_shoulder_flex", 8, 0, -60, 90, true},
        {"r_shoulder_abd", 8, 1, -80, 0, true},   {"r_elbow_flex", 9, 0, 0, 120, true},
        {"l_hip_flex", 11, 0, -30, 70},           {"l_hip_abd", 11, 1, -35, 0},
        {"l_knee_flex", 12, 0, -100, 0},          {"r_hip_flex", 14, 0, -30, 70, true},
        {"r_hip_abd", 14, 1, -35, 0, true},       {"r_knee_flex", 15, 0, -100, 0, true},
        {"torso_flex", 1, 0, -30, 15},            {"torso_side", 1, 1, -20, 20},
        {"torso_twist", 1, 2, -35, 35},           {"head_nod", 3, 0, -25, 25},
    };
    s.skirt = {2.0, 55.0, 15.0, 32.0, 3, 8.0, 0.6, 0.5};
    return s;
}

void FigureSpec::validate() const {
    if (joints.size() < 2) throw Error("synthdata: figure needs at least 2 joints");
    for (std::size_t j = 0; j < joints.size(); ++j) {
        const int p = joints[j].parent;
        if ((j == 0) != (p < 0) || p >= static_cast<int>(j))
            throw Error("synthdata: joint '" + joints[j].name + "' must follow its parent");
    }
    const int nseg = static_cast<int>(segments.size());
    if (nseg == 0) throw Error("synthdata: figure has no segments");
    for (int i = 0; i < nseg; ++i) {
        const auto& s = segments[static_cast<std::size_t>(i)];
        if (s.b <= 0 || s.b >= static_cast<int>(joints.size()) || joints[static_cast<std::size_t>(s.b)].parent != s.a)
            throw Error("synthdata: segment " + std::to_string(i) + " must join a joint to its parent");
        if (!(s.radius > 0.0)) throw Error("synthdata: segment " + std::to_string(i) + " radius must be positive");
        if (s.mirror < 0 || s.mirror >= nseg || segments[static_cast<std::size_t>(s.mirror)].mirror != i)
            throw Error("synthdata: segment " + std::to_string(i) + " has an inconsistent mirror");
    }
    for (const auto& d : dofs)
        if (d.joint < 0 || d.joint >= static_cast<int>(joints.size()) || d.axis < 0 || d.axis > 2 || !(d.lo <= d.hi))
            throw Error("synthdata: malformed dof '" + d.name + "'");
    if (split_dof < 0 || split_dof >= static_cast<int>(dofs.size())) throw Error("synthdata: split dof out of range");
    if (!(skirt_fraction >= 0.0 && skirt_fraction <= 1.0))
        throw Error("synthdata: skirt fraction must lie in [0, 1]");
    if (n_points < 1) throw Error("synthdata: n_points must be >= 1");
    if (!(skirt.top_radius > 0.0) || !(skirt.hem_radius > 0.0) || !(skirt.length > 0.0))
        throw Error("synthdata: skirt radii and length must be positive");
    if (skirt.fold_modes < 0 || !(skirt.fold_amplitude >= 0.0)) throw Error("synthdata: bad fold parameters");
    // the folds may never turn the radius negative
    const double worst = std::min(skirt.top_radius, skirt.hem_radius - skirt.fold_modes * skirt.fold_amplitude);
    if (!(worst > 0.0)) throw Error("synthdata: fold amplitude too large for the skirt radius");
}

double FigureSpec::waist_height() const { return joints.front().offset[2] + skirt.top_height; }

std::vector<Vec3> forward_kinematics(const FigureSpec& spec, std::span<const double> angles) {
    const auto rot = global_rotations(spec, angles);
    std::vector<Vec3> pos(spec.joints.size());
    for (std::size_t j = 0; j < spec.joints.size(); ++j) {
        const int p = spec.joints[j].parent;
        pos[j] = p < 0 ? spec.joints[j].offset
                       : pos[static_cast<std::size_t>(p)] + apply(rot[j], spec.joints[j].offset);
    }
    return pos;
}

std::vector<double> draw_modes(const FigureSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> modes(static_cast<std::size_t>(spec.skirt.fold_modes));
    for (double& m : modes) m = spec.skirt.fold_amplitude * (2.0 * rng.uniform() - 1.0);
    return modes;
}

Frame make_frame(const FigureSpec& spec, std::span<const double> angles, std::uint64_t seed) {
    return make_frame_with_modes(spec, angles, draw_modes(spec, seed));
}

Frame make_frame_with_modes(const FigureSpec& spec, std::span<const double> angles, std::span<const double> modes) {
    spec.validate();
    check_angles(spec, angles);
    if (modes.size() != static_cast<std::size_t>(spec.skirt.fold_modes))
        throw Error("synthdata: expected " + std::to_string(spec.skirt.fold_modes) + " fold modes");
    for (double m : modes)
        if (!(std::abs(m) <= spec.skirt.fold_amplitude)) throw Error("synthdata: fold mode out of bounds");

    const auto rot = global_rotations(spec, angles);
    const auto pos = forward_kinematics(spec, angles);
    const auto rest = forward_kinematics(spec, std::vector<double>(spec.dofs.size(), 0.0));
    const auto frames = rest_frames(spec, rest);

    // skirt drape driven by the legs
    const auto& sk = spec.skirt;
    const std::size_t lk = static_cast<std::size_t>(find_joint(spec, "l_knee"));
    const std::size_t rk = static_cast<std::size_t>(find_joint(spec, "r_knee"));
    const std::size_t lh = static_cast<std::size_t>(find_joint(spec, "l_hip"));
    const std::size_t rh = static_cast<std::size_t>(find_joint(spec, "r_hip"));
    const Vec3 lean = 0.5 * ((pos[lk] + pos[rk]) - (pos[lh] + pos[rh]));
    const auto planar = [](const Vec3& v) { return std::hypot(v[0], v[1]); };
    const double spread = std::max(0.0, planar(pos[lk] - pos[rk]) - planar(rest[lk] - rest[rk]));
    const Vec3 top = pos[0] + Vec3{0.0, 0.0, sk.top_height};

    Frame f;
    f.params = {std::vector<double>(angles.begin(), angles.end()), std::vector<double>(modes.begin(), modes.end())};
    f.pose.keypoints = pos;
    const auto samples = layout(spec);
    f.cloud.points.reserve(samples.size());
    f.skirt.reserve(samples.size());
    for (const auto& a : samples) {
        Vec3 p;
        if (a.skirt) {
            double fold = 0.0;
            for (std::size_t i = 0; i < modes.size(); ++i) fold += modes[i] * std::sin(static_cast<double>(i + 1) * a.phi);
            const double r = sk.top_radius + a.s * (sk.hem_radius - sk.top_radius + sk.flare_gain * spread + fold);
            const double sway = a.s * sk.sway_gain;
            p = {top[0] + sway * lean[0] + r * std::cos(a.phi), top[1] + sway * lean[1] + r * std::sin(a.phi),
                 top[2] - a.s * sk.length};
        } else {
            const auto& seg = spec.segments[static_cast<std::size_t>(a.segment)];
            const auto& fr = frames[static_cast<std::size_t>(a.segment)];
            const auto& R = rot[static_cast<std::size_t>(seg.b)];
            const Vec3 e1 = apply(R, fr.e1), e2 = apply(R, fr.e2), ax = apply(R, fr.axis);
            const Vec3& pa = pos[static_cast<std::size_t>(seg.a)];
            const Vec3& pb = pos[static_cast<std::size_t>(seg.b)];
            if (a.cap) {
                const Vec3 d = a.dir[0] * e1 + a.dir[1] * e2 + a.dir[2] * ax;
                p = (a.dir[2] >= 0.0 ? pb : pa) + seg.radius * d;
            } else {
                p = pa + a.s * (pb - pa) + seg.radius * (std::cos(a.phi) * e1 + std::sin(a.phi) * e2);
            }
        }
        f.cloud.points.push_back(p);
        f.skirt.push_back(a.skirt ? 1 : 0);
    }
    return f;
}

HalfSpace skirt_region(const FigureSpec& spec) { return {{0.0, 0.0, 1.0}, spec.waist_height()}; }

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == name) out.push_back(e);
    return out;
}

namespace {

json region_json(const HalfSpace& h) {
    return {{"type", "halfspace"}, {"normal", {h.normal[0], h.normal[1], h.normal[2]}}, {"offset", h.offset}};
}

std::string relative_to(const fs::path& p, const fs::path& root) {
    const fs::path rel = p.lexically_relative(root);
    return rel.empty() || rel.native().starts_with("..") ? p.generic_string() : rel.generic_string();
}

std::string frame_name(int id, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d%s", id, ext);
    return buf;
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("manifest: cannot open " + path.string());
    Manifest m;
    m.root = fs::absolute(path).parent_path();
    std::string line;
    int lineno = 0;
    const auto fail = [&](const std::string& what) {
        throw Error("manifest: " + path.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) fail("record is not an object");
        if (j.contains("format")) {
            if (j["format"] != "pcdiff-manifest") fail("unknown manifest format");
            if (j.value("version", 0) != 1) fail("unsupported manifest version");
            m.generator = j.contains("generator") ? j["generator"].dump() : "{}";
            continue;
        }
        try {
            ManifestEntry e;
            e.id = j.at("id").get<int>();
            e.split = j.at("split").get<std::string>();
            if (e.split != "train" && e.split != "test") fail("split must be train or test");
            const auto resolve = [&](const std::string& p) {
                const fs::path fp(p);
                return fp.is_absolute() ? fp : m.root / fp;
            };
            e.pose_path = resolve(j.at("pose").get<std::string>());
            e.cloud_path = resolve(j.at("cloud").get<std::string>());
            if (j.contains("skirt_region")) {
                const auto& r = j["skirt_region"];
                if (r.at("type") != "halfspace") fail("only halfspace regions are supported");
                const auto n = r.at("normal").get<std::vector<double>>();
                if (n.size() != 3) fail("region normal needs 3 components");
                e.skirt_region = HalfSpace{{n[0], n[1], n[2]}, r.at("offset").get<double>()};
            }
            if (j.contains("angles")) e.angles = j["angles"].get<std::vector<double>>();
            if (j.contains("modes")) e.modes = j["modes"].get<std::vector<double>>();
            m.entries.push_back(std::move(e));
        } catch (const json::exception& e) {
            fail(std::string("bad record: ") + e.what());
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("manifest: cannot write " + path.string());
    const fs::path root = fs::absolute(path).parent_path();
    json header{{"format", "pcdiff-manifest"}, {"version", 1}};
    header["generator"] = m.generator.empty() ? json::object() : json::parse(m.generator);
    out << header.dump() << '\n';
    for (const auto& e : m.entries) {
        json j{{"id", e.id},
               {"split", e.split},
               {"pose", relative_to(fs::absolute(e.pose_path), root)},
               {"cloud", relative_to(fs::absolute(e.cloud_path), root)}};
        if (e.skirt_region) j["skirt_region"] = region_json(*e.skirt_region);
        if (!e.angles.empty()) j["angles"] = e.angles;
        if (!e.modes.empty()) j["modes"] = e.modes;
        out << j.dump() << '\n';
    }
    if (!out) throw Error("manifest: write failed for " + path.string());
}

Manifest gen_dataset(const FigureSpec& spec, const DatasetOptions& opt, const fs::path& out_dir) {
    spec.validate();
    if (opt.frames < 1) throw Error("synthdata: frame count must be >= 1");
    if (!(opt.split_ratio > 0.0 && opt.split_ratio <= 1.0)) throw Error("synthdata: split ratio must lie in (0, 1]");
    fs::create_directories(out_dir / "poses");
    fs::create_directories(out_dir / "clouds");

    const int n_train = static_cast<int>(std::llround(opt.frames * opt.split_ratio));
    const HalfSpace region = skirt_region(spec);
    Manifest m;
    m.root = fs::absolute(out_dir);
    m.generator = json{{"seed", opt.seed},
                       {"frames", opt.frames},
                       {"split_ratio", opt.split_ratio},
                       {"split_dof", spec.dofs[static_cast<std::size_t>(spec.split_dof)].name},
                       {"n_points", spec.n_points},
                       {"joints", spec.joints.size()},
                       {"skirt_fraction", spec.skirt_fraction},
                       {"fold_modes", spec.skirt.fold_modes},
                       {"fold_amplitude", spec.skirt.fold_amplitude},
                       {"layout_seed", spec.layout_seed}}
                      .dump();

    for (int i = 0; i < opt.frames; ++i) {
        const bool train = i < n_train;
        Rng prng(mix_seed(opt.seed, 2 * static_cast<std::uint64_t>(i)));
        std::vector<double> angles(spec.dofs.size());
        for (std::size_t d = 0; d < spec.dofs.size(); ++d) {
            double u = prng.uniform();
            if (static_cast<int>(d) == spec.split_dof)
                u = train ? opt.split_ratio * u : opt.split_ratio + (1.0 - opt.split_ratio) * u;
            angles[d] = spec.dofs[d].lo + u * (spec.dofs[d].hi - spec.dofs[d].lo);
        }
        const Frame f = make_frame(spec, angles, mix_seed(opt.seed, 2 * static_cast<std::uint64_t>(i) + 1));

        ManifestEntry e;
        e.id = i;
        e.split = train ? "train" : "test";
        e.pose_path = m.root / "poses" / frame_name(i, ".txt");
        e.cloud_path = m.root / "clouds" / frame_name(i, ".ply");
        e.skirt_region = region;
        e.angles = f.params.angles;
        e.modes = f.params.modes;
        save_pose(e.pose_path, f.pose);
        save_ply(e.cloud_path, f.cloud);
        m.entries.push_back(std::move(e));
    }
    save_manifest(m.root / "manifest.jsonl", m);
    return m;
}

}  // namespace pcdiff
