#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sage::tools {

using json = nlohmann::ordered_json;

enum class ParamType { Int, Float, String, Bool, Enum };
std::string to_string(ParamType t);
ParamType param_type_from(const std::string& s);

// Declared value constraint. LogicError is only detectable where one exists.
struct Domain {
    std::optional<double> min, max;  // Int, Float
    std::vector<std::string> values;  // Enum
    std::optional<std::string> date_after;  // String, ISO YYYY-MM-DD, strictly later

    bool empty() const { return !min && !max && values.empty() && !date_after; }
};

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::String;
    bool required = true;
    Domain domain;
};

struct ToolSchema {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    bool destructive = false;

    const ParamSpec* find(const std::string& param) const;
};

json to_json(const ToolSchema& s);
// Throws std::invalid_argument on malformed schema JSON, duplicate params or an
// empty enum domain.
ToolSchema schema_from_json(const json& j);

class SchemaRegistry {
public:
    SchemaRegistry() = default;
    explicit SchemaRegistry(std::vector<ToolSchema> schemas);  // names must be unique
    static SchemaRegistry load(const std::string& path);

    const ToolSchema* find(const std::string& name) const;
    const std::vector<ToolSchema>& schemas() const noexcept { return schemas_; }
    json to_json() const;

private:
    std::vector<ToolSchema> schemas_;
    std::map<std::string, std::size_t> index_;
};

struct ToolCall {
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

// {"tool_call":{"name":...,"arguments":{...}}}
std::string serialize_call(const ToolCall& call);
// nullopt when the text is not a well-formed tool_call object.
std::optional<ToolCall> parse_call(const std::string& text, std::string* error = nullptr);

enum class ViolationKind { Malformed, UnknownTool, TypeError, HallucinatedKey, MissingRequired, LogicError };
std::string to_string(ViolationKind k);

struct Violation {
    ViolationKind kind;
    std::string param;  // empty when not tied to a parameter
    std::string message;
};

bool is_iso_date(const std::string& s);

// Every violation of `call` against `schema`; empty means valid. A name
// mismatch is UnknownTool. Domain checks run only on correctly typed values.
std::vector<Violation> validate_call(const ToolCall& call, const ToolSchema& schema);
// Parses the wire text and validates against the registry.
std::vector<Violation> validate_text(const std::string& text, const SchemaRegistry& registry);

}  // namespace sage::tools
