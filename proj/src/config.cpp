#include "pcdiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <climits>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "pcdiff/denoiser.hpp"
#include "pcdiff/error.hpp"
#include "pcdiff/schedule.hpp"
#include "pcdiff/synthdata.hpp"
#include "pcdiff/training.hpp"

namespace pcdiff {

namespace {

enum class Type { integer, unsigned_integer, real, choice };

struct KeyInfo {
    const char* key;
    Type type;
    const char* fallback;
    std::vector<std::string> choices = {};
};

const std::vector<KeyInfo>& registry() {
    static const std::vector<KeyInfo> keys = {
        {"schedule.kind", Type::choice, "quartic_scaled", {"linear", "cubic", "quartic_paper", "quartic_scaled"}},
        {"schedule.T", Type::integer, "1000"},
        {"schedule.beta_max", Type::real, "0.0492"},
        {"schedule.beta_start", Type::real, "0"},
        {"schedule.beta_end", Type::real, "0"},
        {"denoiser.layers", Type::integer, "8"},
        {"denoiser.heads", Type::integer, "4"},
        {"denoiser.head_dim", Type::integer, "128"},
        {"denoiser.model_dim", Type::integer, "512"},
        {"denoiser.frequencies", Type::integer, "7"},
        {"denoiser.mlp_ratio", Type::integer, "4"},
        {"denoiser.attention_mode", Type::choice, "self_plus_cross", {"self_only", "cross_only", "self_plus_cross"}},
        {"train.learning_rate", Type::real, "0.0001"},
        {"train.batch_size", Type::integer, "8"},
        {"train.steps", Type::integer, "1000"},
        {"train.seed", Type::unsigned_integer, "0"},
        {"train.checkpoint_every", Type::integer, "1000"},
        {"train.completion_ratio", Type::real, "0"},
        {"train.points", Type::integer, "512"},
        {"train.adam_beta1", Type::real, "0.9"},
        {"train.adam_beta2", Type::real, "0.999"},
        {"train.adam_eps", Type::real, "1e-08"},
        {"data.frames", Type::integer, "2000"},
        {"data.seed", Type::unsigned_integer, "0"},
        {"data.split_ratio", Type::real, "0.8"},
        {"data.points", Type::integer, "512"},
        {"data.skirt_fraction", Type::real, "0.5"},
        {"data.fold_modes", Type::integer, "3"},
        {"data.fold_amplitude", Type::real, "8"},
        {"data.layout_seed", Type::unsigned_integer, "1"},
        {"sample.seed", Type::unsigned_integer, "0"},
        {"sample.points", Type::integer, "0"},
        {"sample.trace_every", Type::integer, "0"},
        {"complete.k", Type::integer, "0"},
        {"edit.t", Type::integer, "100"},
        {"eval.runs", Type::integer, "10"},
        {"run.workers", Type::integer, "0"},
    };
    return keys;
}

const KeyInfo& info(const std::string& key) {
    for (const auto& k : registry())
        if (key == k.key) return k;
    throw Error("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string canonical(const KeyInfo& k, const std::string& raw) {
    const std::string v = trim(raw);
    const auto bad = [&](const char* what) -> std::string {
        throw Error("config: " + std::string(k.key) + " expects " + what + ", got '" + v + "'");
    };
    switch (k.type) {
        case Type::integer: {
            long long x;
            if (!parse_number(v, x) || x < INT32_MIN || x > INT32_MAX) return bad("an integer");
            return std::to_string(x);
        }
        case Type::unsigned_integer: {
            std::uint64_t x;
            if (!parse_number(v, x)) return bad("a non-negative integer");
            return std::to_string(x);
        }
        case Type::real: {
            double x;
            if (!parse_number(v, x) || !std::isfinite(x)) return bad("a finite number");
            return format_double(x);
        }
        case Type::choice:
            for (const auto& c : k.choices)
                if (v == c) return v;
            return bad("one of the listed choices");
    }
    return v;
}

}  // namespace

Settings::Settings() {
    for (const auto& k : registry()) values_[k.key] = canonical(k, k.fallback);
}

void Settings::set(const std::string& key, const std::string& value) { values_[key] = canonical(info(key), value); }

const std::string& Settings::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error("config: unknown key '" + key + "'");
    return it->second;
}

int Settings::get_int(const std::string& key) const { return std::stoi(get(key)); }
std::uint64_t Settings::get_u64(const std::string& key) const { return std::stoull(get(key)); }
double Settings::get_double(const std::string& key) const {
    double x = 0.0;
    parse_number(get(key), x);
    return x;
}

void Settings::parse(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw Error("config: " + where + ": expected 'key = value'");
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const Error& e) {
            std::string msg = e.what();
            if (msg.starts_with("config: ")) msg = msg.substr(8);
            throw Error("config: " + where + ": " + msg);
        }
    }
}

void Settings::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    parse(ss.str(), path.string());
}

std::string Settings::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void Settings::save_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    out << to_text();
    if (!out) throw Error("config: cannot write " + path.string());
}

DenoiserConfig denoiser_config(const Settings& s) {
    DenoiserConfig c;
    c.layers = s.get_int("denoiser.layers");
    c.heads = s.get_int("denoiser.heads");
    c.head_dim = s.get_int("denoiser.head_dim");
    c.model_dim = s.get_int("denoiser.model_dim");
    c.frequencies = s.get_int("denoiser.frequencies");
    c.mlp_ratio = s.get_int("denoiser.mlp_ratio");
    c.attention_mode = parse_attention_mode(s.get("denoiser.attention_mode"));
    return c;
}

ScheduleSpec schedule_spec(const Settings& s) {
    ScheduleSpec c;
    c.kind = parse_schedule_kind(s.get("schedule.kind"));
    c.steps = s.get_int("schedule.T");
    c.beta_max = s.get_double("schedule.beta_max");
    c.beta_start = s.get_double("schedule.beta_start");
    c.beta_end = s.get_double("schedule.beta_end");
    return c;
}

TrainConfig train_config(const Settings& s) {
    TrainConfig c;
    c.learning_rate = s.get_double("train.learning_rate");
    c.batch_size = s.get_int("train.batch_size");
    c.total_steps = s.get_int("train.steps");
    c.seed = s.get_u64("train.seed");
    c.schedule = schedule_spec(s);
    c.denoiser = denoiser_config(s);
    c.checkpoint_every = s.get_int("train.checkpoint_every");
    c.completion_ratio = s.get_double("train.completion_ratio");
    c.points = s.get_int("train.points");
    c.adam_beta1 = s.get_double("train.adam_beta1");
    c.adam_beta2 = s.get_double("train.adam_beta2");
    c.adam_eps = s.get_double("train.adam_eps");
    c.workers = resolve_workers(s);
    return c;
}

FigureSpec figure_spec(const Settings& s) {
    FigureSpec f = FigureSpec::standard();
    f.n_points = s.get_int("data.points");
    f.skirt_fraction = s.get_double("data.skirt_fraction");
    f.skirt.fold_modes = s.get_int("data.fold_modes");
    f.skirt.fold_amplitude = s.get_double("data.fold_amplitude");
    f.layout_seed = s.get_u64("data.layout_seed");
    f.validate();
    return f;
}

DatasetOptions dataset_options(const Settings& s) {
    DatasetOptions o;
    o.frames = s.get_int("data.frames");
    o.seed = s.get_u64("data.seed");
    o.split_ratio = s.get_double("data.split_ratio");
    return o;
}

void store(Settings& s, const DenoiserConfig& c) {
    s.set("denoiser.layers", std::to_string(c.layers));
    s.set("denoiser.heads", std::to_string(c.heads));
    s.set("denoiser.head_dim", std::to_string(c.head_dim));
    s.set("denoiser.model_dim", std::to_string(c.model_dim));
    s.set("denoiser.frequencies", std::to_string(c.frequencies));
    s.set("denoiser.mlp_ratio", std::to_string(c.mlp_ratio));
    s.set("denoiser.attention_mode", to_string(c.attention_mode));
}

void store(Settings& s, const ScheduleSpec& c) {
    s.set("schedule.kind", to_string(c.kind));
    s.set("schedule.T", std::to_string(c.steps));
    s.set("schedule.beta_max", format_double(c.beta_max));
    s.set("schedule.beta_start", format_double(c.beta_start));
    s.set("schedule.beta_end", format_double(c.beta_end));
}

void store(Settings& s, const TrainConfig& c) {
    s.set("train.learning_rate", format_double(c.learning_rate));
    s.set("train.batch_size", std::to_string(c.batch_size));
    s.set("train.steps", std::to_string(c.total_steps));
    s.set("train.seed", std::to_string(c.seed));
    s.set("train.checkpoint_every", std::to_string(c.checkpoint_every));
    s.set("train.completion_ratio", format_double(c.completion_ratio));
    s.set("train.points", std::to_string(c.points));
    s.set("train.adam_beta1", format_double(c.adam_beta1));
    s.set("train.adam_beta2", format_double(c.adam_beta2));
    s.set("train.adam_eps", format_double(c.adam_eps));
    store(s, c.schedule);
    store(s, c.denoiser);
}

int resolve_workers(const Settings& s) {
    const int w = s.get_int("run.workers");
    if (w < 0) throw Error("config: run.workers must be >= 0");
    if (w > 0) return w;
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace pcdiff
