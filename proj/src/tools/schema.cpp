#include "sage/tools/schema.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace sage::tools {

std::string to_string(ParamType t) {
    switch (t) {
        case ParamType::Int: return "int";
        case ParamType::Float: return "float";
        case ParamType::String: return "string";
        case ParamType::Bool: return "bool";
        case ParamType::Enum: return "enum";
    }
    return "?";
}

ParamType param_type_from(const std::string& s) {
    if (s == "int") return ParamType::Int;
    if (s == "float") return ParamType::Float;
    if (s == "string") return ParamType::String;
    if (s == "bool") return ParamType::Bool;
    if (s == "enum") return ParamType::Enum;
    throw std::invalid_argument("unknown parameter type '" + s + "'");
}

std::string to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::Malformed: return "Malformed";
        case ViolationKind::UnknownTool: return "UnknownTool";
        case ViolationKind::TypeError: return "TypeError";
        case ViolationKind::HallucinatedKey: return "HallucinatedKey";
        case ViolationKind::MissingRequired: return "MissingRequired";
        case ViolationKind::LogicError: return "LogicError";
    }
    return "?";
}

const ParamSpec* ToolSchema::find(const std::string& param) const {
    for (const auto& p : params)
        if (p.name == param) return &p;
    return nullptr;
}

json to_json(const ToolSchema& s) {
    json j;
    j["name"] = s.name;
    if (!s.description.empty()) j["description"] = s.description;
    if (s.destructive) j["destructive"] = true;
    j["params"] = json::array();
    for (const auto& p : s.params) {
        json pj;
        pj["name"] = p.name;
        pj["type"] = to_string(p.type);
        pj["required"] = p.required;
        if (!p.domain.empty()) {
            json d;
            if (p.domain.min) d["min"] = *p.domain.min;
            if (p.domain.max) d["max"] = *p.domain.max;
            if (!p.domain.values.empty()) d["enum"] = p.domain.values;
            if (p.domain.date_after) d["date_after"] = *p.domain.date_after;
            pj["domain"] = d;
        }
        j["params"].push_back(pj);
    }
    return j;
}

ToolSchema schema_from_json(const json& j) {
    try {
        ToolSchema s;
        s.name = j.at("name").get<std::string>();
        if (s.name.empty()) throw std::invalid_argument("empty tool name");
        s.description = j.value("description", "");
        s.destructive = j.value("destructive", false);
        std::set<std::string> seen;
        for (const auto& pj : j.at("params")) {
            ParamSpec p;
            p.name = pj.at("name").get<std::string>();
            if (!seen.insert(p.name).second) throw std::invalid_argument("duplicate parameter '" + p.name + "'");
            p.type = param_type_from(pj.at("type").get<std::string>());
            p.required = pj.value("required", true);
            if (pj.contains("domain")) {
                const auto& d = pj["domain"];
                if (d.contains("min")) p.domain.min = d["min"].get<double>();
                if (d.contains("max")) p.domain.max = d["max"].get<double>();
                if (d.contains("enum")) p.domain.values = d["enum"].get<std::vector<std::string>>();
                if (d.contains("date_after")) {
                    p.domain.date_after = d["date_after"].get<std::string>();
                    if (!is_iso_date(*p.domain.date_after)) throw std::invalid_argument("bad date_after");
                }
            }
            if (p.type == ParamType::Enum && p.domain.values.empty()) {
                throw std::invalid_argument("enum parameter '" + p.name + "' has an empty domain");
            }
            s.params.push_back(std::move(p));
        }
        return s;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed tool schema: ") + e.what());
    }
}

SchemaRegistry::SchemaRegistry(std::vector<ToolSchema> schemas) : schemas_(std::move(schemas)) {
    for (std::size_t i = 0; i < schemas_.size(); ++i) {
        if (!index_.emplace(schemas_[i].name, i).second) {
            throw std::invalid_argument("duplicate tool name '" + schemas_[i].name + "'");
        }
    }
}

SchemaRegistry SchemaRegistry::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    std::vector<ToolSchema> out;
    for (const auto& t : j.at("tools")) out.push_back(schema_from_json(t));
    return SchemaRegistry(std::move(out));
}

const ToolSchema* SchemaRegistry::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &schemas_[it->second];
}

json SchemaRegistry::to_json() const {
    json j;
    j["tools"] = json::array();
    for (const auto& s : schemas_) j["tools"].push_back(tools::to_json(s));
    return j;
}

std::string serialize_call(const ToolCall& call) {
    json j;
    j["tool_call"]["name"] = call.name;
    j["tool_call"]["arguments"] = call.arguments;
    return j.dump();
}

std::optional<ToolCall> parse_call(const std::string& text, std::string* error) {
    auto fail = [&](const std::string& why) -> std::optional<ToolCall> {
        if (error) *error = why;
        return std::nullopt;
    };
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) return fail("invalid JSON");
    if (!j.is_object() || j.size() != 1 || !j.contains("tool_call")) return fail("expected a single \"tool_call\" key");
    const auto& tc = j["tool_call"];
    if (!tc.is_object() || !tc.contains("name") || !tc["name"].is_string()) return fail("tool_call.name missing");
    ToolCall call;
    call.name = tc["name"].get<std::string>();
    if (tc.contains("arguments")) {
        if (!tc["arguments"].is_object()) return fail("tool_call.arguments must be an object");
        call.arguments = tc["arguments"];
    }
    for (const auto& [k, v] : tc.items())
        if (k != "name" && k != "arguments") return fail("unexpected field tool_call." + k);
    return call;
}

bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return false;
    const int m = std::stoi(s.substr(5, 2)), d = std::stoi(s.substr(8, 2));
    return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

namespace {

bool type_ok(ParamType t, const json& v) {
    switch (t) {
        case ParamType::Int: return v.is_number_integer();
        case ParamType::Float: return v.is_number();
        case ParamType::String:
        case ParamType::Enum: return v.is_string();
        case ParamType::Bool: return v.is_boolean();
    }
    return false;
}

std::optional<std::string> domain_violation(const ParamSpec& p, const json& v) {
    const auto& d = p.domain;
    if (p.type == ParamType::Int || p.type == ParamType::Float) {
        const double x = v.get<double>();
        if (d.min && x < *d.min) return "below minimum";
        if (d.max && x > *d.max) return "above maximum";
    }
    if (p.type == ParamType::Enum) {
        const auto s = v.get<std::string>();
        if (std::find(d.values.begin(), d.values.end(), s) == d.values.end()) return "not an allowed value";
    }
    if (p.type == ParamType::String && d.date_after) {
        const auto s = v.get<std::string>();
        if (!is_iso_date(s)) return "not an ISO date";
        // ISO dates order lexicographically.
        if (s <= *d.date_after) return "date not after " + *d.date_after;
    }
    return std::nullopt;
}

}  // namespace

std::vector<Violation> validate_call(const ToolCall& call, const ToolSchema& schema) {
    std::vector<Violation> out;
    if (call.name != schema.name) {
        out.push_back({ViolationKind::UnknownTool, "", "tool '" + call.name + "' does not match schema"});
        return out;
    }
    if (!call.arguments.is_object()) {
        out.push_back({ViolationKind::Malformed, "", "arguments must be an object"});
        return out;
    }
    for (const auto& [k, v] : call.arguments.items()) {
        const auto* p = schema.find(k);
        if (!p) {
            out.push_back({ViolationKind::HallucinatedKey, k, "argument '" + k + "' is not in the schema"});
            continue;
        }
        if (!type_ok(p->type, v)) {
            out.push_back({ViolationKind::TypeError, k, "argument '" + k + "' must be " + to_string(p->type)});
            continue;
        }
        if (auto why = domain_violation(*p, v)) {
            out.push_back({ViolationKind::LogicError, k, "argument '" + k + "' " + *why});
        }
    }
    for (const auto& p : schema.params) {
        if (p.required && !call.arguments.contains(p.name)) {
            out.push_back({ViolationKind::MissingRequired, p.name, "missing required argument '" + p.name + "'"});
        }
    }
    return out;
}

std::vector<Violation> validate_text(const std::string& text, const SchemaRegistry& registry) {
    std::string why;
    auto call = parse_call(text, &why);
    if (!call) return {{ViolationKind::Malformed, "", why}};
    const auto* schema = registry.find(call->name);
    if (!schema) return {{ViolationKind::UnknownTool, "", "unknown tool '" + call->name + "'"}};
    return validate_call(*call, *schema);
}

}  // namespace sage::tools
