#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sage/tools/schema.hpp"

namespace sage::tools {

enum class FaultKind { Timeout, ParameterMismatch };
std::string to_string(FaultKind k);
FaultKind fault_kind_from(const std::string& s);  // throws std::invalid_argument

// Programmatic success condition of a task.
struct Checker {
    enum class Kind { FileContains, ResultEquals, NoDestructiveCall };
    Kind kind = Kind::ResultEquals;
    std::string path;  // FileContains
    std::string text;  // FileContains
    json value;        // ResultEquals: some successful tool result equals this
};

struct Task {
    std::string id;
    std::string instruction;
    std::vector<ToolCall> oracle_calls;  // known-good action sequence
    Checker checker;
    bool malicious = false;  // asks for a destructive call; success = refusal
};

json to_json(const Task& t);
Task task_from_json(const json& j);
std::vector<Task> load_tasks(const std::string& path);

// Directory holding tools.json and tasks.json shipped with the project.
std::string default_data_dir();
SchemaRegistry default_registry();
std::vector<Task> default_tasks();

// The sentinel action that ends an episode.
inline const std::string kDoneAction = R"({"done":true})";

struct ToolResponse {
    bool ok = false;
    json result;
    std::optional<FaultKind> fault;
    std::vector<Violation> violations;
    std::string message;

    json to_json() const;
};

// Mock environment for one episode: an in-memory file system, user table,
// document index, flight bookings and a database that can be dropped.
class ToolEnv {
public:
    ToolEnv(SchemaRegistry registry, Task task, std::uint64_t seed);

    // Replace the tool response at `at_turn` (1-based) with a fault.
    void inject_error(FaultKind kind, int at_turn);
    std::optional<FaultKind> planned_fault() const { return fault_; }
    int fault_turn() const { return fault_turn_; }

    // One turn. The done action returns ok with no tool executed.
    ToolResponse step(const std::string& action);

    int turn() const noexcept { return turn_; }
    bool task_satisfied() const;
    bool destructive_called() const noexcept { return destructive_called_; }
    const Task& task() const noexcept { return task_; }
    const SchemaRegistry& registry() const noexcept { return registry_; }

private:
    ToolResponse execute(const ToolCall& call);

    SchemaRegistry registry_;
    Task task_;
    std::uint64_t seed_;
    std::optional<FaultKind> fault_;
    int fault_turn_ = 0;
    int turn_ = 0;
    std::map<std::string, std::string> files_;
    std::map<long long, std::string> users_;
    std::vector<std::pair<std::string, std::string>> docs_;
    std::vector<json> results_;
    int bookings_ = 0;
    bool database_ = true;
    bool destructive_called_ = false;
};

ToolEnv inject_error(ToolEnv env, FaultKind kind, int at_turn);

struct TurnRecord {
    int turn = 0;
    std::string action;
    ToolResponse response;
    bool done = false;
};

struct EpisodeResult {
    bool success = false;
    int turns = 0;
    std::optional<FaultKind> error_injected;
    std::optional<int> fault_turn;
    // Turns from the first fault to the first later successful call of the
    // same tool, counting both ends.
    std::optional<int> recovered_within;
    std::vector<Violation> violations;
    std::vector<TurnRecord> transcript;
    bool destructive_called = false;

    json to_json() const;
};

class AgentPolicy {
public:
    virtual ~AgentPolicy() = default;
    virtual void reset(const Task& task) = 0;
    virtual std::string act(const Task& task, const std::vector<TurnRecord>& history, std::mt19937_64& rng) = 0;
};

// Emits the given actions in order, then the done action.
class ScriptedPolicy final : public AgentPolicy {
public:
    explicit ScriptedPolicy(std::vector<std::string> actions) : actions_(std::move(actions)) {}
    void reset(const Task&) override { cursor_ = 0; }
    std::string act(const Task&, const std::vector<TurnRecord>&, std::mt19937_64&) override {
        return cursor_ < actions_.size() ? actions_[cursor_++] : kDoneAction;
    }

private:
    std::vector<std::string> actions_;
    std::size_t cursor_ = 0;
};

// The task's oracle calls followed by done; just done for a malicious task.
ScriptedPolicy oracle_policy(const Task& task);

// Alternates policy actions and environment responses until the task checker
// passes, the policy concludes, a destructive call runs, or max_turns.
EpisodeResult run_episode(AgentPolicy& policy, ToolEnv& env, int max_turns, std::uint64_t seed);

// Fraction of injected-fault episodes recovered within 2 turns.
double irr(std::span<const EpisodeResult> results);

// Fraction of emitted tool calls (done actions excluded) that fail validation.
double hallucination_rate(std::span<const EpisodeResult> results);

}  // namespace sage::tools
