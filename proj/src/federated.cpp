#include "fedtrace/federated.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedtrace/dp_accounting.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {
namespace {

constexpr uint64_t k_init_tag = 0x696e6974ULL;    // model initialization stream
constexpr uint64_t k_local_tag = 0x6c636cULL;     // per-(client, round) training stream
constexpr uint64_t k_shuffle_tag = 0x73687566ULL; // batch order within local_train
constexpr uint64_t k_noise_tag = 0x6e6f6973ULL;   // DP noise within local_train

void zero_params(ParamSet& p) {
    for (size_t i = 0; i < p.count(); ++i) p[i].fill(0.0);
}

} // namespace

void validate_dp_config(const DpConfig& dp) {
    if (!(dp.clip_norm > 0.0)) throw ConfigError("dp clip_norm must be positive");
    if (!(dp.noise_multiplier >= 0.0)) throw ConfigError("dp noise_multiplier must be non-negative");
    if (!(dp.delta > 0.0 && dp.delta < 1.0)) throw ConfigError("dp delta must lie in (0, 1)");
    if (dp.noise_multiplier > 0.0 && !std::isfinite(dp.clip_norm))
        throw ConfigError("dp noise requires a finite clip_norm");
}

void validate_federation_config(const FederationConfig& cfg) {
    if (cfg.num_clients < 1) throw ConfigError("num_clients must be at least 1");
    if (cfg.rounds < 1) throw ConfigError("rounds must be at least 1");
    // 0 keeps parameters at the broadcast value; used by aggregation-only runs
    if (cfg.local_epochs < 0) throw ConfigError("local_epochs must be non-negative");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
    if (cfg.dp.has_value()) validate_dp_config(*cfg.dp);
}

const char* aggregation_name(Aggregation a) {
    switch (a) {
        case Aggregation::Local: return "local";
        case Aggregation::FedAvg: return "fedavg";
        case Aggregation::Ensemble: return "ensemble";
    }
    return "?";
}

Aggregation aggregation_from_name(const std::string& name) {
    if (name == "local") return Aggregation::Local;
    if (name == "fedavg") return Aggregation::FedAvg;
    if (name == "ensemble") return Aggregation::Ensemble;
    throw ConfigError("unknown aggregation '" + name + "' (expected local|fedavg|ensemble)");
}

double local_train(ClientState& c, int epochs, const std::optional<DpConfig>& dp,
                   const LocalTrainOpts& opts) {
    if (c.train.empty())
        throw ConfigError("local_train: client " + std::to_string(c.id) + " has no training data");
    if (epochs < 0) throw ConfigError("local_train: negative epoch count");
    if (opts.batch_size < 1) throw ConfigError("local_train: batch_size must be at least 1");
    if (dp.has_value()) validate_dp_config(*dp);
    if (epochs == 0) return 0.0;

    const bool clip = dp.has_value() && std::isfinite(dp->clip_norm);
    const bool noisy = dp.has_value() && dp->noise_multiplier > 0.0;
    Rng shuffle_rng = Rng(opts.stream).fork(k_shuffle_tag);
    Rng noise_rng = Rng(opts.stream).fork(k_noise_tag);

    const size_t n = c.train.size();
    const size_t bmax = std::min<size_t>(opts.batch_size, n);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    ParamSet gsum = c.model.params.zeros_like();
    // per-example buffers, filled (possibly in parallel) then reduced in batch
    // order so results are independent of the job count
    std::vector<ParamSet> gex(bmax, c.model.params.zeros_like());
    std::vector<double> ex_loss(bmax, 0.0);

    double loss_total = 0.0;
    size_t visited = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < n; start += opts.batch_size) {
            const size_t bsz = std::min<size_t>(opts.batch_size, n - start);
            const int workers = static_cast<int>(std::min<size_t>(opts.jobs, bsz));
            auto work = [&](size_t i) {
                zero_params(gex[i]);
                ex_loss[i] = model_loss_grad(c.model, c.train[order[start + i]], gex[i]);
                if (clip) {
                    double norm = l2_norm(gex[i]);
                    if (norm > dp->clip_norm) scale(dp->clip_norm / norm, gex[i]);
                }
            };
            if (workers <= 1) {
                for (size_t i = 0; i < bsz; ++i) work(i);
            } else {
                std::atomic<size_t> next{0};
                std::vector<std::thread> pool;
                pool.reserve(workers);
                for (int w = 0; w < workers; ++w)
                    pool.emplace_back([&] {
                        for (size_t i = next.fetch_add(1); i < bsz; i = next.fetch_add(1)) work(i);
                    });
                for (auto& th : pool) th.join();
            }
            zero_params(gsum);
            for (size_t i = 0; i < bsz; ++i) {
                axpy(1.0, gex[i], gsum);
                loss_total += ex_loss[i];
                if (opts.norm_probe != nullptr) opts.norm_probe->push_back(l2_norm(gex[i]));
            }
            visited += bsz;
            if (noisy) {
                const double std_dev = dp->noise_multiplier * dp->clip_norm;
                for (size_t t = 0; t < gsum.count(); ++t)
                    for (double& v : gsum[t].data) v += noise_rng.normal() * std_dev;
            }
            scale(1.0 / static_cast<double>(bsz), gsum);
            adam_step(c.model.params, gsum, c.opt, opts.optimizer);
        }
    }
    return loss_total / static_cast<double>(visited);
}

ParamSet fedavg(const std::vector<ClientState>& clients, const std::vector<size_t>& weights) {
    if (clients.empty()) throw ConfigError("fedavg: no clients");
    if (weights.size() != clients.size()) throw ConfigError("fedavg: one weight per client required");
    size_t total = 0;
    for (size_t w : weights) total += w;
    if (total == 0) throw ConfigError("fedavg: total weight is zero");
    ParamSet out = clients[0].model.params.zeros_like();
    for (size_t k = 0; k < clients.size(); ++k) {
        if (!out.same_layout(clients[k].model.params))
            throw ConfigError("fedavg: client " + std::to_string(clients[k].id) +
                              " has a mismatched parameter layout");
        axpy(static_cast<double>(weights[k]) / static_cast<double>(total),
             clients[k].model.params, out);
    }
    return out;
}

FederationResult run_federation(const FederationConfig& cfg, const std::vector<Example>& examples,
                                View view, Aggregation agg) {
    validate_federation_config(cfg);
    std::vector<std::vector<Example>> per_org(cfg.num_clients);
    for (const Example& ex : examples) {
        if (ex.org_id < 1 || ex.org_id > cfg.num_clients)
            throw ConfigError("run_federation: example org_id " + std::to_string(ex.org_id) +
                              " outside [1, " + std::to_string(cfg.num_clients) + "]");
        per_org[ex.org_id - 1].push_back(ex);
    }
    for (int k = 0; k < cfg.num_clients; ++k)
        if (per_org[k].empty())
            throw ConfigError("run_federation: org " + std::to_string(k + 1) +
                              " has no training data");

    const uint64_t init_seed = Rng(cfg.seed).fork(k_init_tag).next_u64();
    Model global = Model::init(view, init_seed);

    std::vector<ClientState> clients;
    clients.reserve(cfg.num_clients);
    for (int k = 0; k < cfg.num_clients; ++k) {
        ClientState c;
        c.id = k + 1;
        c.train = std::move(per_org[k]);
        c.model = global;
        c.opt = AdamState::init(global.params);
        clients.push_back(std::move(c));
    }

    FederationResult res;
    res.view = view;
    res.agg = agg;
    const bool communicating = agg == Aggregation::FedAvg;
    for (int round = 1; round <= cfg.rounds; ++round) {
        for (ClientState& c : clients) {
            if (communicating) c.model.params = global.params;
            // optimizer moments restart with the round, matching the broadcast
            c.opt = AdamState::init(c.model.params);
            LocalTrainOpts opts;
            opts.batch_size = cfg.batch_size;
            opts.optimizer = cfg.optimizer;
            opts.stream = Rng(cfg.seed)
                              .fork(k_local_tag, static_cast<uint64_t>(c.id),
                                    static_cast<uint64_t>(round))
                              .next_u64();
            opts.jobs = cfg.jobs;
            double loss = local_train(c, cfg.local_epochs, cfg.dp, opts);
            RoundMetrics m;
            m.round = round;
            m.client = c.id;
            m.train_loss = loss;
            if (cfg.dp.has_value()) {
                const size_t n_k = c.train.size();
                const double q = std::min(1.0, static_cast<double>(cfg.batch_size) /
                                                   static_cast<double>(n_k));
                const long long steps_per_epoch =
                    static_cast<long long>((n_k + cfg.batch_size - 1) / cfg.batch_size);
                const long long steps =
                    static_cast<long long>(round) * cfg.local_epochs * steps_per_epoch;
                m.epsilon_so_far = steps == 0 ? 0.0 : rdp_epsilon(*cfg.dp, q, steps);
            } else {
                m.epsilon_so_far = std::numeric_limits<double>::quiet_NaN();
            }
            c.metrics.push_back(m);
            res.round_log.push_back(m);
        }
        if (communicating) {
            std::vector<size_t> weights;
            weights.reserve(clients.size());
            for (const ClientState& c : clients) weights.push_back(c.train.size());
            global.params = fedavg(clients, weights);
        }
    }
    if (communicating) {
        res.models.push_back(std::move(global));
    } else {
        for (ClientState& c : clients) {
            res.models.push_back(std::move(c.model));
            res.client_ids.push_back(c.id);
        }
    }
    return res;
}

FederationResult run_federation(const FederationConfig& cfg, const Dataset& ds, View view,
                                Aggregation agg) {
    return run_federation(cfg, make_examples(ds.traces, RuleTable::builtin()), view, agg);
}

std::vector<double> ensemble_predict(const std::vector<Model>& members,
                                     const std::vector<Example>& batch) {
    if (members.empty()) throw ConfigError("ensemble_predict: no member models");
    std::vector<double> out(batch.size(), 0.0);
    for (const Model& m : members) {
        std::vector<double> p = predict_batch(m, batch);
        for (size_t i = 0; i < out.size(); ++i) out[i] += p[i] / members.size();
    }
    return out;
}

std::string round_log_csv(const std::vector<RoundMetrics>& log) {
    std::ostringstream os;
    os << "round,client,train_loss,epsilon_so_far\n";
    for (const RoundMetrics& m : log) {
        os << m.round << ',' << m.client << ',' << m.train_loss << ',';
        if (std::isnan(m.epsilon_so_far)) os << '\n';
        else if (std::isinf(m.epsilon_so_far)) os << "inf\n";
        else os << m.epsilon_so_far << '\n';
    }
    return os.str();
}

} // namespace fedtrace
