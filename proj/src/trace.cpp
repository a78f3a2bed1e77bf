#include "fedtrace/trace.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "fedtrace/errors.hpp"
#include "json.hpp"

using ordered_json = nlohmann::ordered_json;

namespace fedtrace {

namespace {

const std::array<std::string, 4> kRoleNames = {"system", "user", "assistant", "tool_observation"};
const std::array<std::string, 5> kFamilyNames = {"prompt_injection", "tool_hijacking",
                                                 "data_exfiltration", "social_engineering",
                                                 "unknown"};

}  // namespace

const std::string& role_name(Role r) { return kRoleNames[static_cast<int>(r)]; }

Role role_from_name(const std::string& name) {
    for (size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == name) return static_cast<Role>(i);
    }
    throw ValidationError("unknown role: \"" + name + "\"");
}

const std::string& family_name(AttackFamily f) { return kFamilyNames[static_cast<int>(f)]; }

AttackFamily family_from_name(const std::string& name) {
    for (size_t i = 0; i < kFamilyNames.size(); ++i) {
        if (kFamilyNames[i] == name) return static_cast<AttackFamily>(i);
    }
    throw ValidationError("unknown attack family: \"" + name + "\"");
}

AttackFamily family_from_index(int i) {
    if (i < 0 || i >= kNumFamilies) throw ValidationError("family index out of range");
    return static_cast<AttackFamily>(i);
}

int family_index(AttackFamily f) { return static_cast<int>(f); }

void validate_trace(const AgentTrace& t, int num_orgs, const std::string& context) {
    if (t.turns.empty()) throw ValidationError(context + ": trace has no turns");
    if (t.label != 0 && t.label != 1) throw ValidationError(context + ": label must be 0 or 1");
    if (t.label == 1 && !t.family.has_value())
        throw ValidationError(context + ": attack trace missing family");
    if (t.label == 0 && t.family.has_value())
        throw ValidationError(context + ": benign trace carries a family");
    if (t.org_id < 1 || (num_orgs > 0 && t.org_id > num_orgs))
        throw ValidationError(context + ": org_id " + std::to_string(t.org_id) +
                              " outside [1, " + std::to_string(num_orgs) + "]");
    for (const Turn& turn : t.turns) {
        if (turn.tool_call.has_value()) {
            if (turn.role != Role::Assistant)
                throw ValidationError(context + ": tool_call on non-assistant turn");
            if (turn.tool_call->tool_name.empty())
                throw ValidationError(context + ": empty tool_name");
        }
    }
}

namespace {

ordered_json turn_to_json(const Turn& turn) {
    ordered_json j;
    j["role"] = role_name(turn.role);
    j["text"] = turn.text;
    if (turn.tool_call.has_value()) {
        ordered_json tc;
        tc["tool_name"] = turn.tool_call->tool_name;
        ordered_json args = ordered_json::array();
        for (const auto& [k, v] : turn.tool_call->args) args.push_back({k, v});
        tc["args"] = std::move(args);
        tc["is_error"] = turn.tool_call->is_error;
        j["tool_call"] = std::move(tc);
    } else {
        j["tool_call"] = nullptr;
    }
    return j;
}

Turn turn_from_json(const ordered_json& j) {
    Turn turn;
    turn.role = role_from_name(j.at("role").get<std::string>());
    turn.text = j.at("text").get<std::string>();
    const auto& tc = j.at("tool_call");
    if (!tc.is_null()) {
        ToolCall call;
        call.tool_name = tc.at("tool_name").get<std::string>();
        for (const auto& kv : tc.at("args")) {
            call.args.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
        }
        call.is_error = tc.at("is_error").get<bool>();
        turn.tool_call = std::move(call);
    }
    return turn;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    for (size_t i = 0; i < ds.traces.size(); ++i) {
        validate_trace(ds.traces[i], 0, "trace " + std::to_string(i));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const AgentTrace& t : ds.traces) {
        ordered_json j;
        j["org_id"] = t.org_id;
        j["label"] = t.label;
        if (t.family.has_value()) {
            j["family"] = family_name(*t.family);
        } else {
            j["family"] = nullptr;
        }
        ordered_json turns = ordered_json::array();
        for (const Turn& turn : t.turns) turns.push_back(turn_to_json(turn));
        j["turns"] = std::move(turns);
        j["final_response"] = t.final_response;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    Dataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string context = path + ":" + std::to_string(lineno);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(context + ": malformed JSON: " + e.what());
        }
        try {
            AgentTrace t;
            t.org_id = j.at("org_id").get<int>();
            t.label = j.at("label").get<int>();
            const auto& fam = j.at("family");
            if (!fam.is_null()) t.family = family_from_name(fam.get<std::string>());
            for (const auto& tj : j.at("turns")) t.turns.push_back(turn_from_json(tj));
            t.final_response = j.at("final_response").get<std::string>();
            validate_trace(t, 0, context);
            ds.traces.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(context + ": bad trace record: " + e.what());
        } catch (const ValidationError& e) {
            std::string msg = e.what();
            if (msg.rfind(context, 0) == 0) throw;
            throw ValidationError(context + ": " + msg);
        }
    }
    return ds;
}

}  // namespace fedtrace
