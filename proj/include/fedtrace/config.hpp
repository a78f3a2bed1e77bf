#pragma once

#include <cstdint>
#include <string>

#include "fedtrace/evaluation.hpp"
#include "fedtrace/federated.hpp"
#include "fedtrace/trace_gen.hpp"

namespace fedtrace {

// Flat, fully resolved description of one run. A single master seed drives
// generation, splitting, and training; the sub-config seeds are stamped from
// it by the *_of accessors so the serialized form has exactly one seed key.
struct RunConfig {
  uint64_t seed = 0;

  // gen.*
  GenConfig gen;

  // fed.*
  int num_clients = 5;
  int rounds = 5;
  int local_epochs = 5;
  int batch_size = 32;
  double lr = 1e-3;
  int train_jobs = 1;
  bool dp_on = false;
  DpConfig dp;

  // split.*
  SplitMode split_mode = SplitMode::IID;
  AttackFamily holdout = AttackFamily::PromptInjection;
  double train_fraction = 0.8;

  // run.*
  View view = View::Struct;
  Aggregation agg = Aggregation::FedAvg;
  std::string dataset_path;  // empty: generate in memory
  std::string out_dir = "out";
  std::string grid = "single";  // single | table1 | table2 | table4 | table5
  int grid_jobs = 1;
};

GenConfig gen_of(const RunConfig& cfg);
FederationConfig federation_of(const RunConfig& cfg);
SplitSpec split_of(const RunConfig& cfg);

void validate_run_config(const RunConfig& cfg);

// `key = value` lines, one per setting, # comments allowed. Unknown keys and
// malformed values are configuration errors naming the offender.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(const std::string& text, const std::string& source);
RunConfig load_config(const std::string& path);

// Layered forms: apply the file's settings on top of an existing config, so
// precedence chains (defaults, then environment, then file, then flags) keep
// earlier layers for keys the later layer does not mention.
void parse_config_into(RunConfig& cfg, const std::string& text, const std::string& source);
void load_config_into(RunConfig& cfg, const std::string& path);

// Canonical round-trippable form; equal configs serialize identically.
std::string serialize_config(const RunConfig& cfg);

// FNV-1a over the canonical serialization.
uint64_t config_hash(const RunConfig& cfg);

}  // namespace fedtrace
