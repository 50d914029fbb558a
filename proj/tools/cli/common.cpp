#include "common.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "sage/common/kv.hpp"

#ifndef SAGE_VERSION
#define SAGE_VERSION "unknown"
#endif

namespace sage::cli {

LogLevel log_level() {
    const char* v = std::getenv("SAGE_LOG");
    if (!v) return LogLevel::Info;
    const std::string s = v;
    if (s == "quiet" || s == "0") return LogLevel::Quiet;
    if (s == "debug" || s == "2") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_info(const std::string& msg) {
    if (log_level() != LogLevel::Quiet) std::cerr << msg << '\n';
}

void log_debug(const std::string& msg) {
    if (log_level() == LogLevel::Debug) std::cerr << msg << '\n';
}

Settings Settings::load(const std::string& path) {
    Settings s;
    if (path.empty()) return s;
    try {
        s.kv_ = parse_key_values(read_text_file(path));
    } catch (const std::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    return s;
}

double Settings::number(const std::string& key, double fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    try {
        return parse_double(key, it->second);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

std::size_t Settings::count(const std::string& key, std::size_t fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    long long v = 0;
    try {
        v = parse_int(key, it->second);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    if (v < 0) throw UsageError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

bool Settings::flag(const std::string& key, bool fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw UsageError(key + ": expected true or false");
}

std::vector<double> Settings::numbers(const std::string& key, std::vector<double> fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(parse_double(key, item));
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError(key + ": empty list");
    return out;
}

void Settings::finish() const {
    for (const auto& [k, v] : kv_)
        if (!used_.count(k)) throw UsageError("unknown config key '" + k + "'");
}

void begin_run(const RunContext& ctx) {
    std::error_code ec;
    std::filesystem::create_directories(ctx.out, ec);
    if (ec) throw UsageError("cannot create " + ctx.out.string() + ": " + ec.message());
    json m;
    m["subcommand"] = ctx.subcommand;
    m["config"] = ctx.config;
    m["seed"] = ctx.seed;
    m["out"] = ctx.out.string();
    m["version"] = SAGE_VERSION;
    m["args"] = ctx.args;
    write_json(ctx.out / "manifest.json", m);
}

void write_file(const std::filesystem::path& path, const std::string& text) { write_text_file(path, text); }

void write_json(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace sage::cli
