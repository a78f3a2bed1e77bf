#pragma once

#include <string>
#include <vector>

namespace fedtrace {

struct SelfCheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // what was measured, or why it failed
};

struct SelfCheckOpts {
  // negative control: perturb one analytic gradient coordinate before the
  // finite-difference comparison, which must then fail by name
  bool corrupt_gradient = false;
};

// Fast property sweep over the whole pipeline: gradient checks on all model
// variants, AUC oracle equivalence, federated-averaging algebra, tokenizer
// fixtures, dataset round-trip, training determinism, privacy-accountant
// monotonicity. Each result is independent; nothing throws for a failed
// property (errors are folded into the result).
std::vector<SelfCheckResult> run_selfcheck(const SelfCheckOpts& opts);

}  // namespace fedtrace
