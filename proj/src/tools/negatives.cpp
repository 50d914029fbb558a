#include "sage/tools/negatives.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace sage::tools {

const std::vector<std::string>& decoy_keys() {
    static const std::vector<std::string> keys{"verbose", "debug",  "force",   "timeout_ms", "user_token",
                                               "dry_run", "format", "retries", "callback",   "priority"};
    return keys;
}

namespace {

// A date strictly before `after`, by stepping the year back.
std::string date_before(const std::string& after, int years) {
    const int y = std::max(1000, std::stoi(after.substr(0, 4)) - years);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%s", y, after.substr(4).c_str());
    return buf;
}

std::string date_after(const std::string& after, int days) {
    const int y = std::stoi(after.substr(0, 4)) + 1 + days / 365;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, 1 + days % 12, 1 + days % 28);
    return buf;
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

json wrong_type(const ParamSpec& p, const json& v) {
    switch (p.type) {
        case ParamType::Int: return std::to_string(v.get<long long>());
        case ParamType::Float: return v.dump();
        case ParamType::Bool: return v.get<bool>() ? "true" : "false";
        case ParamType::String:
        case ParamType::Enum: return 0;
    }
    return nullptr;
}

// A correctly typed value outside the declared domain.
std::optional<json> out_of_domain(const ParamSpec& p, std::mt19937_64& rng) {
    const auto& d = p.domain;
    const int off = std::uniform_int_distribution<int>(1, 50)(rng);
    switch (p.type) {
        case ParamType::Int:
            if (d.min) return static_cast<long long>(std::ceil(*d.min)) - off;
            if (d.max) return static_cast<long long>(std::floor(*d.max)) + off;
            return std::nullopt;
        case ParamType::Float:
            if (d.min) return *d.min - off - 0.5;
            if (d.max) return *d.max + off + 0.5;
            return std::nullopt;
        case ParamType::Enum: {
            std::string s = "not_" + d.values.front();
            while (std::find(d.values.begin(), d.values.end(), s) != d.values.end()) s += "_";
            return s;
        }
        case ParamType::String:
            if (d.date_after) return date_before(*d.date_after, off);
            return std::nullopt;
        case ParamType::Bool: return std::nullopt;
    }
    return std::nullopt;
}

HardNegative missing_required(const ToolCall& call, const ToolSchema& schema, std::mt19937_64& rng) {
    std::vector<std::string> required;
    for (const auto& p : schema.params)
        if (p.required && call.arguments.contains(p.name)) required.push_back(p.name);
    if (required.empty()) throw std::invalid_argument("negative_constraint_samples: schema '" + schema.name +
                                                      "' has no slot for a substitute mutant");
    ToolCall m = call;
    m.arguments.erase(pick(required, rng));
    return {m, ViolationKind::MissingRequired, true};
}

}  // namespace

std::array<HardNegative, 3> negative_constraint_samples(const ToolCall& call, const ToolSchema& schema,
                                                        std::uint64_t seed) {
    if (!validate_call(call, schema).empty()) {
        throw std::invalid_argument("negative_constraint_samples: input call does not validate");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::string> present;
    for (const auto& [k, v] : call.arguments.items()) present.push_back(k);

    std::array<HardNegative, 3> out;
    if (present.empty()) {
        out[0] = missing_required(call, schema, rng);
    } else {
        ToolCall m = call;
        const auto& key = pick(present, rng);
        m.arguments[key] = wrong_type(*schema.find(key), call.arguments[key]);
        out[0] = {m, ViolationKind::TypeError, false};
    }

    {
        std::vector<std::string> decoys;
        for (const auto& k : decoy_keys())
            if (!schema.find(k)) decoys.push_back(k);
        std::string key = decoys.empty() ? "extra" : pick(decoys, rng);
        while (schema.find(key)) key += "_x";
        ToolCall m = call;
        m.arguments[key] = true;
        out[1] = {m, ViolationKind::HallucinatedKey, false};
    }

    std::vector<std::pair<std::string, json>> logic;
    for (const auto& k : present)
        if (auto v = out_of_domain(*schema.find(k), rng)) logic.emplace_back(k, *v);
    if (logic.empty()) {
        out[2] = missing_required(call, schema, rng);
    } else {
        const auto& [k, v] = pick(logic, rng);
        ToolCall m = call;
        m.arguments[k] = v;
        out[2] = {m, ViolationKind::LogicError, false};
    }
    return out;
}

ToolSchema random_schema(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coin(0, 1), types(0, 4), n_params(1, 6);
    ToolSchema s;
    s.name = "tool_" + std::to_string(seed % 1000);
    const int n = n_params(rng);
    for (int i = 0; i < n; ++i) {
        ParamSpec p;
        p.name = "p" + std::to_string(i);
        p.type = static_cast<ParamType>(types(rng));
        p.required = coin(rng) || i == 0;
        const bool with_domain = coin(rng);
        switch (p.type) {
            case ParamType::Int:
            case ParamType::Float:
                if (with_domain) {
                    p.domain.min = std::uniform_int_distribution<int>(-10, 10)(rng);
                    if (coin(rng)) p.domain.max = *p.domain.min + std::uniform_int_distribution<int>(0, 100)(rng);
                }
                break;
            case ParamType::Enum: {
                const int k = std::uniform_int_distribution<int>(1, 4)(rng);
                for (int v = 0; v < k; ++v) p.domain.values.push_back("v" + std::to_string(v));
                break;
            }
            case ParamType::String:
                if (with_domain) p.domain.date_after = "2026-0" + std::to_string(1 + coin(rng)) + "-15";
                break;
            case ParamType::Bool: break;
        }
        s.params.push_back(std::move(p));
    }
    return s;
}

ToolCall random_valid_call(const ToolSchema& schema, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coin(0, 1), small(0, 500);
    ToolCall c;
    c.name = schema.name;
    for (const auto& p : schema.params) {
        if (!p.required && coin(rng)) continue;
        const auto& d = p.domain;
        switch (p.type) {
            case ParamType::Int: {
                const long long lo = d.min ? static_cast<long long>(std::ceil(*d.min)) : -100;
                const long long hi = d.max ? static_cast<long long>(std::floor(*d.max)) : lo + 200;
                c.arguments[p.name] = std::uniform_int_distribution<long long>(lo, hi)(rng);
                break;
            }
            case ParamType::Float: {
                const double lo = d.min.value_or(-100.0), hi = d.max.value_or(lo + 200.0);
                c.arguments[p.name] = std::uniform_real_distribution<double>(lo, hi)(rng);
                break;
            }
            case ParamType::Enum: c.arguments[p.name] = pick(d.values, rng); break;
            case ParamType::Bool: c.arguments[p.name] = static_cast<bool>(coin(rng)); break;
            case ParamType::String:
                c.arguments[p.name] = d.date_after ? date_after(*d.date_after, small(rng)) : "s" + std::to_string(small(rng));
                break;
        }
    }
    return c;
}

}  // namespace sage::tools
