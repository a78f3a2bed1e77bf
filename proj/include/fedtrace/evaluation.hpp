#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedtrace/federated.hpp"
#include "fedtrace/trace.hpp"

namespace fedtrace {

enum class SplitMode { IID, HoldOutFamily };

struct SplitSpec {
  SplitMode mode = SplitMode::IID;
  AttackFamily family = AttackFamily::PromptInjection;  // HoldOutFamily only
  double train_fraction = 0.8;
  uint64_t seed = 0;
};

void validate_split_spec(const SplitSpec& spec);

// "iid" or "holdout:<family>"
std::string split_name(const SplitSpec& spec);

struct Split {
  std::vector<AgentTrace> train;
  std::vector<AgentTrace> test;
};

// IID: per-(org, class-group) train_fraction split of every trace. HoldOut:
// the held family goes to the test set in full, the other attack families
// contribute only their train_fraction share, and the benign partition is the
// same one the IID split would produce for this seed, so hold-out rows stay
// comparable with the IID row. Train and test never share a trace.
Split make_splits(const Dataset& ds, const SplitSpec& spec);

// Probability that a random positive outranks a random negative; ties count
// one half (Mann-Whitney). Labels must include both classes.
double roc_auc(const std::vector<std::pair<double, int>>& scored);
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct InversionDiag {
  double benign_mean = 0.0;
  double attack_mean = 0.0;
  bool inverted = false;  // benign scored above attacks on average
};

InversionDiag score_inversion_diag(const std::vector<double>& scores,
                                   const std::vector<int>& labels);
InversionDiag score_inversion_diag(const Model& m, const std::vector<Example>& test);

struct EvalEntry {
  View view = View::Struct;
  Aggregation agg = Aggregation::FedAvg;
  SplitSpec split;
  int org = 0;  // 0 = pooled over all orgs
  double auc = 0.0;
  double benign_mean = 0.0;
  double attack_mean = 0.0;
  bool inverted = false;
  int n_test = 0;
};

struct EvalReport {
  // pooled entry first, then one per org in id order
  std::vector<EvalEntry> entries;
  std::vector<RoundMetrics> round_log;
  uint64_t seed = 0;
  uint64_t config_hash = 0;  // caller-supplied provenance
};

// Split, train via run_federation, score the test set. Scoring follows the
// deployment story of each aggregation: FedAvg scores everything with the
// global model, Local scores each org's traces with that org's own model,
// Ensemble averages all member probabilities. Per-org entries restrict the
// test set to one org. Re-asserts hold-out hygiene on the realized train set.
EvalReport run_protocol(const Dataset& ds, View view, Aggregation agg, const SplitSpec& spec,
                        const FederationConfig& cfg);

}  // namespace fedtrace
