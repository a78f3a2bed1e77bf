#pragma once

#include <array>
#include <cstdint>

#include "fedtrace/trace.hpp"

namespace fedtrace {

struct GenConfig {
  int num_orgs = 5;
  int traces_per_org = 500;
  double benign_fraction = 0.5;
  // Share of each org's attack traces drawn from its dominant family; the
  // remainder is split uniformly over the other four families.
  double dominant_family_share = 0.6;
  uint64_t seed = 0;
};

// Throws ConfigError on invalid settings (non-integral benign count,
// dominant share outside [1/5, 1], non-positive counts).
void validate_gen_config(const GenConfig& cfg);

// Deterministic synthetic federation. Org i's dominant family is family
// (i-1) mod 5. Every trace is generated from an rng stream forked on
// (org, index), so output is independent of generation order.
//
// Family signatures follow the dependency taxonomy the detectors are meant to
// probe: social engineering shares the benign structure generator and differs
// only in inserted persuasion text; tool hijacking and data exfiltration keep
// benign wording but carry error-retry blocks and long read chains; prompt
// injection differs in both channels; unknown-family traces use novel tool
// names, scrubbed text, and structural anomalies (error cascades, orphan
// observations, mid-trace system turns) absent from every other family.
Dataset generate(const GenConfig& cfg);

// Attack-family counts over one org's traces (benign traces not counted).
std::array<int, kNumFamilies> family_histogram(const Dataset& ds, int org);

} // namespace fedtrace
