#include "pcdiff/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pcdiff/error.hpp"

namespace pcdiff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw Error(std::string("checkpoint: truncated while reading ") + what);
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string exact(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

using Named = std::vector<std::pair<std::string, const Matrix*>>;

Named tensor_table(const Checkpoint& ck) {
    Named out;
    for (const auto& [name, m] : ck.state.params.tensors()) out.emplace_back("param/" + name, m);
    for (const auto& [name, m] : ck.state.adam.m.tensors()) out.emplace_back("adam.m/" + name, m);
    for (const auto& [name, m] : ck.state.adam.v.tensors()) out.emplace_back("adam.v/" + name, m);
    return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
    std::map<std::string, std::string> blob;
    for (const auto& [k, v] : ck.settings.values())
        if (!k.starts_with("run.")) blob[k] = v;  // parallelism never changes results
    blob["state.step"] = std::to_string(ck.state.step);
    blob["state.adam_step"] = std::to_string(ck.state.adam.step);
    blob["state.param_seed"] = std::to_string(ck.state.params.seed);
    blob["state.rng"] = ck.state.rng.state();
    blob["state.data_scale"] = exact(ck.data_scale);
    std::string text;
    for (const auto& [k, v] : blob) text += k + " = " + v + "\n";

    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out += text;
    const Named tensors = tensor_table(ck);
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, m] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, m->rows);
        put<std::uint64_t>(out, m->cols);
        out.append(reinterpret_cast<const char*>(m->data.data()), m->size() * sizeof(double));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.take(sizeof kCheckpointMagic, "magic") != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
        throw Error("checkpoint: bad magic, not a checkpoint file");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw Error("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    const auto blob_size = r.get<std::uint64_t>("config length");
    const std::string text = r.take(blob_size, "config");

    Checkpoint ck;
    std::map<std::string, std::string> state;
    std::istringstream in(text);
    std::string line, settings_text;
    while (std::getline(in, line)) {
        if (line.starts_with("state.")) {
            const auto eq = line.find(" = ");
            if (eq == std::string::npos) throw Error("checkpoint: malformed state line '" + line + "'");
            state[line.substr(0, eq)] = line.substr(eq + 3);
        } else {
            settings_text += line + "\n";
        }
    }
    ck.settings.parse(settings_text, "checkpoint config");
    for (const char* k : {"state.step", "state.adam_step", "state.param_seed", "state.rng", "state.data_scale"})
        if (!state.count(k)) throw Error(std::string("checkpoint: missing ") + k);

    const DenoiserConfig cfg = denoiser_config(ck.settings);
    ck.state.params = DenoiserParams::zeros(cfg);
    ck.state.adam = init_adam(cfg);
    try {
        ck.state.step = std::stoll(state["state.step"]);
        ck.state.adam.step = std::stoll(state["state.adam_step"]);
        ck.state.params.seed = std::stoull(state["state.param_seed"]);
        ck.data_scale = std::stod(state["state.data_scale"]);
    } catch (const std::exception&) {
        throw Error("checkpoint: malformed state values");
    }
    ck.state.rng.set_state(state["state.rng"]);

    std::map<std::string, Matrix*> slots;
    for (auto& [name, m] : ck.state.params.tensors()) slots["param/" + name] = m;
    for (auto& [name, m] : ck.state.adam.m.tensors()) slots["adam.m/" + name] = m;
    for (auto& [name, m] : ck.state.adam.v.tensors()) slots["adam.v/" + name] = m;

    const auto count = r.get<std::uint64_t>("tensor count");
    if (count != slots.size())
        throw Error("checkpoint: expected " + std::to_string(slots.size()) + " tensors, found " + std::to_string(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>("tensor name length");
        const std::string name = r.take(len, "tensor name");
        const auto it = slots.find(name);
        if (it == slots.end()) throw Error("checkpoint: unexpected tensor '" + name + "'");
        Matrix& m = *it->second;
        const auto rank = r.get<std::uint32_t>("tensor rank");
        if (rank != 2) throw Error("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
        const auto rows = r.get<std::uint64_t>("tensor dims");
        const auto cols = r.get<std::uint64_t>("tensor dims");
        if (rows != m.rows || cols != m.cols)
            throw Error("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", config implies " + std::to_string(m.rows) + "x" +
                        std::to_string(m.cols));
        const std::string payload = r.take(m.size() * sizeof(double), "tensor payload");
        std::memcpy(m.data.data(), payload.data(), payload.size());
        slots.erase(it);
    }
    if (!r.done()) throw Error("checkpoint: trailing bytes after tensor table");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const std::string bytes = encode_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("checkpoint: cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("checkpoint: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return decode_checkpoint(ss.str());
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (" + path.string() + ")");
    }
}

}  // namespace pcdiff
