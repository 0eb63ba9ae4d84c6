#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace pcdiff {

struct DenoiserConfig;
struct ScheduleSpec;
struct TrainConfig;
struct FigureSpec;
struct DatasetOptions;

// Flat "section.key = value" settings covering every module. Keys are fixed
// and typed; values are stored in canonical text so that writing and
// re-reading yields identical settings.
class Settings {
public:
    // Every key at its default value.
    Settings();

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // "key = value" lines; blank lines and '#' comments are skipped.
    // `source` names the input in error messages.
    void parse(const std::string& text, const std::string& source);
    void load_file(const std::filesystem::path& path);
    // Sorted, one "key = value" per line.
    std::string to_text() const;
    void save_file(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    bool operator==(const Settings&) const = default;

private:
    std::map<std::string, std::string> values_;
};

DenoiserConfig denoiser_config(const Settings& s);
ScheduleSpec schedule_spec(const Settings& s);
TrainConfig train_config(const Settings& s);
FigureSpec figure_spec(const Settings& s);
DatasetOptions dataset_options(const Settings& s);

void store(Settings& s, const DenoiserConfig& c);
void store(Settings& s, const ScheduleSpec& c);
void store(Settings& s, const TrainConfig& c);

// Parallelism from run.workers; 0 means every available core.
int resolve_workers(const Settings& s);

}  // namespace pcdiff
