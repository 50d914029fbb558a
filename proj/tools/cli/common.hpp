#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace sage::cli {

using json = nlohmann::ordered_json;

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kUsage = 2;

// Usage or configuration problem; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { Quiet, Info, Debug };
// From SAGE_LOG: quiet|0, info|1 (default), debug|2.
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

// key = value settings file; every key must be consumed before finish().
class Settings {
public:
    Settings() = default;
    static Settings load(const std::string& path);  // empty path -> no settings

    double number(const std::string& key, double fallback);
    std::size_t count(const std::string& key, std::size_t fallback);
    bool flag(const std::string& key, bool fallback);
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback);
    const std::map<std::string, std::string>& raw() const { return kv_; }
    void finish() const;

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

struct RunContext {
    std::string subcommand;
    std::string config;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    json args = json::object();  // remaining flags, recorded in the manifest
};

// Creates the output directory and writes manifest.json.
void begin_run(const RunContext& ctx);
void write_file(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& j);
std::string fmt(double v);  // %.17g

}  // namespace sage::cli
