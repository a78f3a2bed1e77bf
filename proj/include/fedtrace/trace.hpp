#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedtrace {

enum class Role { System, User, Assistant, ToolObservation };

enum class AttackFamily {
    PromptInjection,
    ToolHijacking,
    DataExfiltration,
    SocialEngineering,
    Unknown,
};

inline constexpr int kNumFamilies = 5;

const std::string& role_name(Role r);
Role role_from_name(const std::string& name);

const std::string& family_name(AttackFamily f);
AttackFamily family_from_name(const std::string& name);
AttackFamily family_from_index(int i);
int family_index(AttackFamily f);

struct ToolCall {
    std::string tool_name;
    std::vector<std::pair<std::string, std::string>> args;
    // whether the paired observation reported a failure
    bool is_error = false;

    bool operator==(const ToolCall&) const = default;
};

struct Turn {
    Role role = Role::User;
    std::string text;
    std::optional<ToolCall> tool_call;  // Assistant turns only

    bool operator==(const Turn&) const = default;
};

struct AgentTrace {
    std::vector<Turn> turns;
    std::string final_response;
    int label = 0;  // benign=0, attack=1
    std::optional<AttackFamily> family;
    int org_id = 1;

    bool operator==(const AgentTrace&) const = default;
};

struct Dataset {
    std::vector<AgentTrace> traces;
    // generation provenance; not part of the persisted interchange content
    uint64_t seed = 0;

    bool operator==(const Dataset& o) const { return traces == o.traces; }
};

// Checks the per-trace invariants; throws ValidationError naming the trace
// via `context` on violation.
void validate_trace(const AgentTrace& t, int num_orgs, const std::string& context);

// JSONL, one trace per line:
//   {"org_id":..,"label":..,"family":..|null,
//    "turns":[{"role":..,"text":..,"tool_call":{..}|null},..],
//    "final_response":..}
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace fedtrace
