#include "fedtrace/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <sstream>

#include "fedtrace/errors.hpp"

namespace fedtrace {
namespace detail {
const char* default_rules_text(); // generated from data/conversational_rules.txt
} // namespace detail

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

RuleKind kind_from_name(const std::string& name, const std::string& where) {
  if (name == "tool") return RuleKind::Tool;
  if (name == "arg") return RuleKind::Arg;
  if (name == "keyword") return RuleKind::Keyword;
  if (name == "response") return RuleKind::Response;
  if (name == "control") return RuleKind::Control;
  throw ConfigError(where + ": unknown rule kind '" + name + "'");
}

// Category layout the vocabulary is built around.
constexpr int kToolRules = 8;
constexpr int kArgRules = 6;
constexpr int kKeywordRules = 6;
constexpr int kResponseRules = 3;
constexpr int kControlRules = 3;

} // namespace

const char* scheme_name(Scheme s) {
  return s == Scheme::Conversational ? "conversational" : "structural";
}

const std::vector<std::string>& structural_token_names() {
  static const std::vector<std::string> names = {
      "[SYS]", "[USER]", "[ASSISTANT]", "[TOOL]", "[ARGS]",
      "[OBS]", "[OUTPUT]", "[ERROR]", "[OTHER]"};
  return names;
}

RuleTable RuleTable::parse(const std::string& text, const std::string& origin) {
  RuleTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool saw_version = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head == "version") {
      int v = 0;
      if (!(fields >> v) || v <= 0) throw ConfigError(where + ": bad version line");
      table.version_ = v;
      saw_version = true;
      continue;
    }
    if (head != "rule") throw ConfigError(where + ": expected 'rule' or 'version'");
    Rule rule;
    std::string kind_name;
    if (!(fields >> rule.token >> kind_name))
      throw ConfigError(where + ": rule needs a token name and a kind");
    rule.kind = kind_from_name(kind_name, where);
    std::string patterns;
    std::getline(fields, patterns);
    auto start = patterns.find_first_not_of(" \t");
    if (start == std::string::npos) throw ConfigError(where + ": rule has no patterns");
    patterns = patterns.substr(start);
    while (!patterns.empty() && (patterns.back() == '\r' || patterns.back() == ' '))
      patterns.pop_back();
    size_t pos = 0;
    while (pos <= patterns.size()) {
      size_t bar = patterns.find('|', pos);
      std::string pat = patterns.substr(pos, bar == std::string::npos ? bar : bar - pos);
      if (pat.empty()) throw ConfigError(where + ": empty pattern");
      rule.patterns.push_back(to_lower(pat));
      if (bar == std::string::npos) break;
      pos = bar + 1;
    }
    table.rules_.push_back(std::move(rule));
  }
  if (!saw_version) throw ConfigError(origin + ": missing version line");

  if (static_cast<int>(table.rules_.size()) != kConversationalTokens)
    throw ConfigError(origin + ": expected " + std::to_string(kConversationalTokens) +
                      " rules, got " + std::to_string(table.rules_.size()));
  const std::array<std::pair<RuleKind, int>, 5> layout = {{
      {RuleKind::Tool, kToolRules},
      {RuleKind::Arg, kArgRules},
      {RuleKind::Keyword, kKeywordRules},
      {RuleKind::Response, kResponseRules},
      {RuleKind::Control, kControlRules},
  }};
  int at = 0;
  for (auto [kind, count] : layout) {
    for (int i = 0; i < count; ++i, ++at) {
      if (table.rules_[at].kind != kind)
        throw ConfigError(origin + ": rule " + table.rules_[at].token +
                          " breaks the tool/arg/keyword/response/control layout");
    }
  }
  std::vector<std::string> detectors;
  for (const Rule& r : table.rules_) {
    if (r.kind != RuleKind::Control) continue;
    if (r.patterns.size() != 1)
      throw ConfigError(origin + ": control rule " + r.token + " needs exactly one detector");
    detectors.push_back(r.patterns[0]);
  }
  std::sort(detectors.begin(), detectors.end());
  if (detectors != std::vector<std::string>{"branch", "loop", "recursion"})
    throw ConfigError(origin + ": control rules must name loop, branch and recursion");
  for (size_t i = 0; i < table.rules_.size(); ++i)
    for (size_t j = i + 1; j < table.rules_.size(); ++j)
      if (table.rules_[i].token == table.rules_[j].token)
        throw ConfigError(origin + ": duplicate token " + table.rules_[i].token);
  return table;
}

RuleTable RuleTable::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rule table: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

const RuleTable& RuleTable::builtin() {
  static const RuleTable table = parse(detail::default_rules_text(), "<builtin rules>");
  return table;
}

std::vector<std::string> RuleTable::token_names() const {
  std::vector<std::string> names;
  names.reserve(rules_.size());
  for (const Rule& r : rules_) names.push_back(r.token);
  return names;
}

TokenSeq pad_tokens_to(Scheme scheme, const std::vector<int32_t>& tokens, int l_max) {
  if (l_max <= 0) throw InternalError("pad_tokens_to: l_max must be positive");
  TokenSeq seq;
  seq.scheme = scheme;
  seq.indices.assign(l_max, kPadIndex);
  if (tokens.size() <= static_cast<size_t>(l_max)) {
    std::copy(tokens.begin(), tokens.end(), seq.indices.begin());
    seq.true_length = static_cast<int>(tokens.size());
  } else {
    // Keep the most recent events; old context is the part that can go.
    std::copy(tokens.end() - l_max, tokens.end(), seq.indices.begin());
    seq.true_length = l_max;
  }
  return seq;
}

TokenSeq pad_tokens(Scheme scheme, const std::vector<int32_t>& tokens) {
  return pad_tokens_to(scheme, tokens, kMaxSeqLen);
}

TokenSeq tokenize_structural(const AgentTrace& trace) {
  enum : int32_t { SYS = 1, USER, ASSISTANT, TOOL, ARGS, OBS, OUTPUT, ERROR, OTHER };
  std::vector<int32_t> out;
  out.reserve(trace.turns.size() * 3 + 1);
  std::deque<bool> pending_error; // tool calls awaiting their observation
  for (const Turn& turn : trace.turns) {
    switch (turn.role) {
      case Role::System:
        out.push_back(SYS);
        break;
      case Role::User:
        out.push_back(USER);
        break;
      case Role::Assistant:
        out.push_back(ASSISTANT);
        if (turn.tool_call) {
          out.push_back(TOOL);
          if (!turn.tool_call->args.empty()) out.push_back(ARGS);
          pending_error.push_back(turn.tool_call->is_error);
        }
        break;
      case Role::ToolObservation: {
        bool is_error = false;
        if (!pending_error.empty()) {
          is_error = pending_error.front();
          pending_error.pop_front();
        }
        out.push_back(is_error ? ERROR : OBS);
        break;
      }
    }
  }
  if (!trace.final_response.empty()) out.push_back(OUTPUT);
  return pad_tokens(Scheme::Structural, out);
}

TokenSeq tokenize_conversational(const AgentTrace& trace, const RuleTable& table) {
  const std::vector<Rule>& rules = table.rules();
  std::vector<int32_t> out;
  out.reserve(trace.turns.size() * 2 + 3);

  for (const Turn& turn : trace.turns) {
    const std::string text = to_lower(turn.text);
    std::string tool_name;
    std::string arg_text;
    if (turn.tool_call) {
      tool_name = to_lower(turn.tool_call->tool_name);
      std::string joined;
      for (const auto& [k, v] : turn.tool_call->args) {
        if (!joined.empty()) joined += ' ';
        joined += k;
        joined += '=';
        joined += v;
      }
      arg_text = to_lower(joined);
    }
    // One pass in vocabulary order keeps per-turn emission deterministic:
    // tools, then args, then keywords, then responses.
    for (size_t i = 0; i < rules.size(); ++i) {
      const Rule& rule = rules[i];
      bool hit = false;
      switch (rule.kind) {
        case RuleKind::Tool:
          hit = turn.tool_call &&
                std::find(rule.patterns.begin(), rule.patterns.end(), tool_name) !=
                    rule.patterns.end();
          break;
        case RuleKind::Arg:
          if (turn.tool_call)
            for (const std::string& p : rule.patterns)
              if (contains(arg_text, p)) { hit = true; break; }
          break;
        case RuleKind::Keyword:
          for (const std::string& p : rule.patterns)
            if (contains(text, p)) { hit = true; break; }
          break;
        case RuleKind::Response:
          if (turn.role == Role::Assistant)
            for (const std::string& p : rule.patterns)
              if (contains(text, p)) { hit = true; break; }
          break;
        case RuleKind::Control:
          break; // sequence-level, handled after the turn loop
      }
      if (hit) out.push_back(static_cast<int32_t>(i + 1));
    }
  }

  // Control-flow detectors over the order of tool calls. "names" is the call
  // sequence; interrupted marks calls with a plain assistant turn since the
  // previous call.
  std::vector<std::string> names;
  std::vector<bool> interrupted;
  bool plain_since_last_call = false;
  bool any_call_seen = false;
  for (const Turn& turn : trace.turns) {
    if (turn.role != Role::Assistant) continue;
    if (turn.tool_call) {
      names.push_back(to_lower(turn.tool_call->tool_name));
      interrupted.push_back(any_call_seen && plain_since_last_call);
      plain_since_last_call = false;
      any_call_seen = true;
    } else if (any_call_seen) {
      plain_since_last_call = true;
    }
  }
  bool loop = false, branch = false, recursion = false;
  for (size_t i = 0; i + 1 < names.size(); ++i)
    if (names[i] == names[i + 1]) { loop = true; break; }
  for (size_t i = 1; i < names.size(); ++i)
    if (interrupted[i]) { branch = true; break; }
  for (size_t i = 0; i < names.size() && !recursion; ++i)
    for (size_t j = i + 2; j < names.size() && !recursion; ++j)
      if (names[i] == names[j])
        for (size_t k = i + 1; k < j; ++k)
          if (names[k] != names[i]) { recursion = true; break; }
  for (size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].kind != RuleKind::Control) continue;
    const std::string& detector = rules[i].patterns[0];
    bool fired = (detector == "loop" && loop) || (detector == "branch" && branch) ||
                 (detector == "recursion" && recursion);
    if (fired) out.push_back(static_cast<int32_t>(i + 1));
  }
  return pad_tokens(Scheme::Conversational, out);
}

TokenSeq tokenize(const AgentTrace& trace, Scheme scheme, const RuleTable& table) {
  return scheme == Scheme::Structural ? tokenize_structural(trace)
                                      : tokenize_conversational(trace, table);
}

} // namespace fedtrace
