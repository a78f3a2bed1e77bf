#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedtrace/trace.hpp"

namespace fedtrace {

// Both vocabularies reserve index 0 for PAD; real tokens start at 1.
inline constexpr int kPadIndex = 0;
inline constexpr int kMaxSeqLen = 64;
inline constexpr int kStructuralTokens = 9;      // vocab size excluding PAD
inline constexpr int kConversationalTokens = 26; // vocab size excluding PAD

enum class Scheme { Conversational, Structural };

const char* scheme_name(Scheme s);

// Structural vocabulary, fixed order; index = position + 1.
const std::vector<std::string>& structural_token_names();

enum class RuleKind { Tool, Arg, Keyword, Response, Control };

struct Rule {
  std::string token;
  RuleKind kind = RuleKind::Keyword;
  std::vector<std::string> patterns; // lowercase
};

// Conversational rule table. Rules appear in vocabulary order, so rule i
// produces token index i + 1. Category layout is validated on parse:
// 8 tool, 6 arg, 6 keyword, 3 response, 3 control, in that order.
class RuleTable {
 public:
  static RuleTable parse(const std::string& text, const std::string& origin);
  static RuleTable load_file(const std::string& path);
  // Table compiled in from data/conversational_rules.txt at build time.
  static const RuleTable& builtin();

  const std::vector<Rule>& rules() const { return rules_; }
  int version() const { return version_; }
  std::vector<std::string> token_names() const;

 private:
  std::vector<Rule> rules_;
  int version_ = 0;
};

struct TokenSeq {
  Scheme scheme = Scheme::Structural;
  std::vector<int32_t> indices; // size kMaxSeqLen, PAD-filled tail
  int true_length = 0;          // count of real positions; 0 for no tokens

  bool operator==(const TokenSeq&) const = default;
};

// Pads to l_max. Longer sequences keep the most recent tokens (front
// truncation). Empty input stays all-PAD with true_length 0; sequence models
// read such inputs as length 1 over the PAD row.
TokenSeq pad_tokens_to(Scheme scheme, const std::vector<int32_t>& tokens, int l_max);
TokenSeq pad_tokens(Scheme scheme, const std::vector<int32_t>& tokens); // l_max = kMaxSeqLen

// Event-level view: one block per turn. Assistant turns with a tool call emit
// [ASSISTANT][TOOL][ARGS] ([ARGS] only when the call has arguments);
// observations emit [OBS], or [ERROR] when the observation answers a call
// flagged is_error (calls and observations pair up first-in-first-out).
// A non-empty final_response appends [OUTPUT].
TokenSeq tokenize_structural(const AgentTrace& trace);

// Rule-based view: per turn, matching tokens are emitted once each in
// vocabulary order (tools, then args, then keywords, then responses);
// control-flow tokens fire once at the end of the sequence.
TokenSeq tokenize_conversational(const AgentTrace& trace, const RuleTable& table);

// Convenience over the scheme switch above.
TokenSeq tokenize(const AgentTrace& trace, Scheme scheme, const RuleTable& table);

} // namespace fedtrace
