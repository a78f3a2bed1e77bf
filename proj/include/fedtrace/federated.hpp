#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedtrace/detector.hpp"
#include "fedtrace/nn.hpp"
#include "fedtrace/trace.hpp"

namespace fedtrace {

struct DpConfig {
  double clip_norm = 1.0;        // C; may be +inf to disable clipping
  double noise_multiplier = 1.0; // sigma; 0 disables noise
  double delta = 1e-5;
};

void validate_dp_config(const DpConfig& dp);

struct FederationConfig {
  int num_clients = 5;
  int rounds = 5;
  int local_epochs = 5;
  int batch_size = 32;
  AdamConfig optimizer;
  std::optional<DpConfig> dp;
  uint64_t seed = 0;
  // deterministic intra-batch parallelism; 1 = sequential
  int jobs = 1;
};

void validate_federation_config(const FederationConfig& cfg);

enum class Aggregation { Local, FedAvg, Ensemble };

const char* aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& name);

struct RoundMetrics {
  int round = 0;  // 1-based
  int client = 0; // org id
  double train_loss = 0.0;
  // cumulative privacy spend after this round; NaN when DP is off
  double epsilon_so_far = 0.0;
};

struct ClientState {
  int id = 0;
  std::vector<Example> train; // this client's org only
  Model model;
  AdamState opt;
  std::vector<RoundMetrics> metrics;
};

struct LocalTrainOpts {
  int batch_size = 32;
  AdamConfig optimizer;
  uint64_t stream = 0; // rng stream tag, forked per (seed, client, round)
  int jobs = 1;
  // when set, receives the post-clip L2 norm of every per-example gradient
  // entering a batch average, in visit order (verification seam)
  std::vector<double>* norm_probe = nullptr;
};

// `epochs` shuffled mini-batch passes of Adam on BCE over c.train. Gradients
// are computed per example, summed, and divided by the batch count; with dp
// set, each per-example gradient is L2-clipped to C over the concatenated
// parameter vector and Gaussian noise of std sigma*C is added to the sum
// before dividing. The shuffle and noise streams are independent, so
// dp(sigma=0, C=inf) reproduces the non-DP path bit for bit.
// Returns the mean per-example loss over everything visited this call.
double local_train(ClientState& c, int epochs, const std::optional<DpConfig>& dp,
                   const LocalTrainOpts& opts);

// Elementwise weighted mean of client parameters, weights n_k / sum n_k.
ParamSet fedavg(const std::vector<ClientState>& clients, const std::vector<size_t>& weights);

struct FederationResult {
  View view = View::Struct;
  Aggregation agg = Aggregation::FedAvg;
  // FedAvg: one global model; Local/Ensemble: one per client, order matching client_ids
  std::vector<Model> models;
  std::vector<int> client_ids;
  std::vector<RoundMetrics> round_log;
};

// Trains detectors over the per-org partition of `examples`.
//   Local    — each org trains alone (rounds x local_epochs passes, optimizer
//              state reset at round boundaries exactly like a FedAvg client);
//   FedAvg   — broadcast, train local_epochs, aggregate, repeat `rounds` times;
//   Ensemble — trained exactly like Local, scored by probability averaging.
// Deterministic for a fixed config, including under jobs > 1.
FederationResult run_federation(const FederationConfig& cfg, const std::vector<Example>& examples,
                                View view, Aggregation agg);

// Convenience overload: tokenizes the dataset with the built-in rule table.
FederationResult run_federation(const FederationConfig& cfg, const Dataset& ds, View view,
                                Aggregation agg);

// Unweighted mean of member probabilities.
std::vector<double> ensemble_predict(const std::vector<Model>& members,
                                     const std::vector<Example>& batch);

// Round log as CSV: round,client,train_loss,epsilon_so_far (blank when DP off).
std::string round_log_csv(const std::vector<RoundMetrics>& log);

} // namespace fedtrace
