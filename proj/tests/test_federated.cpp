#include <cmath>
#include <limits>

#include <doctest.h>

#include "fedtrace/detector.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/federated.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/trace_gen.hpp"

using namespace fedtrace;

namespace {

bool params_equal(const ParamSet& a, const ParamSet& b) {
    if (!a.same_layout(b)) return false;
    for (size_t i = 0; i < a.count(); ++i)
        if (a[i].data != b[i].data) return false;
    return true;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
    REQUIRE(a.same_layout(b));
    double worst = 0.0;
    for (size_t i = 0; i < a.count(); ++i)
        for (size_t j = 0; j < a[i].data.size(); ++j)
            worst = std::max(worst, std::abs(a[i].data[j] - b[i].data[j]));
    return worst;
}

std::vector<Example> small_corpus(int orgs, int per_org, uint64_t seed) {
    GenConfig g;
    g.num_orgs = orgs;
    g.traces_per_org = per_org;
    g.seed = seed;
    return make_examples(generate(g).traces, RuleTable::builtin());
}

ClientState make_client(int id, const std::vector<Example>& ex, View view, uint64_t seed) {
    ClientState c;
    c.id = id;
    c.train = ex;
    c.model = Model::init(view, seed);
    c.opt = AdamState::init(c.model.params);
    return c;
}

} // namespace

TEST_CASE("zero epochs leaves parameters untouched and reports zero loss") {
    auto ex = small_corpus(1, 20, 3);
    ClientState c = make_client(1, ex, View::Struct, 7);
    ParamSet before = c.model.params;
    LocalTrainOpts opts;
    opts.stream = 11;
    double loss = local_train(c, 0, std::nullopt, opts);
    CHECK(loss == 0.0);
    CHECK(params_equal(before, c.model.params));
}

TEST_CASE("training reduces mean loss on a fixed corpus") {
    auto ex = small_corpus(1, 200, 5);
    ClientState c = make_client(1, ex, View::Struct, 7);
    LocalTrainOpts opts;
    opts.stream = 11;
    double first = local_train(c, 1, std::nullopt, opts);
    double later = local_train(c, 4, std::nullopt, opts);
    CHECK(later < first - 0.02);
}

TEST_CASE("fedavg: identical clients average to themselves") {
    auto ex = small_corpus(1, 10, 9);
    std::vector<ClientState> clients;
    for (int id = 1; id <= 3; ++id) clients.push_back(make_client(id, ex, View::Struct, 42));
    ParamSet avg = fedavg(clients, {10, 25, 7});
    CHECK(max_abs_diff(avg, clients[0].model.params) < 1e-12);
}

TEST_CASE("fedavg: hand-checked weighted mean") {
    auto ex = small_corpus(1, 10, 9);
    ClientState a = make_client(1, ex, View::Struct, 1);
    ClientState b = make_client(2, ex, View::Struct, 2);
    for (size_t i = 0; i < a.model.params.count(); ++i) a.model.params[i].fill(0.0);
    for (size_t i = 0; i < b.model.params.count(); ++i) b.model.params[i].fill(4.0);
    // (1*0 + 3*4) / 4 = 3 exactly
    ParamSet avg = fedavg({a, b}, {1, 3});
    for (size_t i = 0; i < avg.count(); ++i)
        for (double v : avg[i].data) REQUIRE(v == 3.0);
}

TEST_CASE("fedavg: matches direct recomputation and ignores client order") {
    auto ex = small_corpus(1, 10, 9);
    std::vector<ClientState> clients;
    std::vector<size_t> weights = {5, 7, 11};
    for (int id = 1; id <= 3; ++id) clients.push_back(make_client(id, ex, View::Struct, 100 + id));
    ParamSet avg = fedavg(clients, weights);

    ParamSet manual = clients[0].model.params.zeros_like();
    double total = 5 + 7 + 11;
    for (size_t k = 0; k < clients.size(); ++k)
        for (size_t i = 0; i < manual.count(); ++i)
            for (size_t j = 0; j < manual[i].data.size(); ++j)
                manual[i].data[j] +=
                    static_cast<double>(weights[k]) / total * clients[k].model.params[i].data[j];
    CHECK(max_abs_diff(avg, manual) < 1e-12);

    std::vector<ClientState> permuted = {clients[2], clients[0], clients[1]};
    ParamSet avg2 = fedavg(permuted, {11, 5, 7});
    CHECK(max_abs_diff(avg, avg2) < 1e-12);
}

TEST_CASE("fedavg: input validation") {
    auto ex = small_corpus(1, 10, 9);
    std::vector<ClientState> clients = {make_client(1, ex, View::Struct, 1),
                                        make_client(2, ex, View::Struct, 2)};
    CHECK_THROWS_AS((void)fedavg({}, {}), ConfigError);
    CHECK_THROWS_AS((void)fedavg(clients, {1}), ConfigError);
    CHECK_THROWS_AS((void)fedavg(clients, {0, 0}), ConfigError);
    std::vector<ClientState> mixed = {make_client(1, ex, View::Struct, 1),
                                      make_client(2, ex, View::Conv, 2)};
    CHECK_THROWS_AS((void)fedavg(mixed, {1, 1}), ConfigError);
}

TEST_CASE("run_federation: result shapes and round log layout") {
    auto ex = small_corpus(5, 40, 21);
    FederationConfig cfg;
    cfg.num_clients = 5;
    cfg.rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 77;

    FederationResult fa = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
    CHECK(fa.models.size() == 1);
    CHECK(fa.client_ids.empty());
    REQUIRE(fa.round_log.size() == 10);
    for (size_t i = 0; i < fa.round_log.size(); ++i) {
        const RoundMetrics& m = fa.round_log[i];
        CHECK(m.round == static_cast<int>(i / 5) + 1);
        CHECK(m.client == static_cast<int>(i % 5) + 1);
        CHECK(std::isfinite(m.train_loss));
        CHECK(m.train_loss > 0.0);
        CHECK(std::isnan(m.epsilon_so_far));
    }

    FederationResult lo = run_federation(cfg, ex, View::Struct, Aggregation::Local);
    CHECK(lo.models.size() == 5);
    CHECK(lo.client_ids == std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("run_federation: deterministic for a fixed config") {
    auto ex = small_corpus(3, 30, 31);
    FederationConfig cfg;
    cfg.num_clients = 3;
    cfg.rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 5;
    FederationResult a = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
    FederationResult b = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
    CHECK(params_equal(a.models[0].params, b.models[0].params));
    CHECK(round_log_csv(a.round_log) == round_log_csv(b.round_log));
}

TEST_CASE("run_federation: single-client fedavg equals local training bit for bit") {
    auto ex = small_corpus(1, 60, 41);
    FederationConfig cfg;
    cfg.num_clients = 1;
    cfg.rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 13;
    FederationResult fa = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
    FederationResult lo = run_federation(cfg, ex, View::Struct, Aggregation::Local);
    REQUIRE(fa.models.size() == 1);
    REQUIRE(lo.models.size() == 1);
    CHECK(params_equal(fa.models[0].params, lo.models[0].params));
}

TEST_CASE("run_federation: ensemble members train exactly like local models") {
    auto ex = small_corpus(3, 30, 51);
    FederationConfig cfg;
    cfg.num_clients = 3;
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 19;
    FederationResult lo = run_federation(cfg, ex, View::Struct, Aggregation::Local);
    FederationResult en = run_federation(cfg, ex, View::Struct, Aggregation::Ensemble);
    REQUIRE(lo.models.size() == en.models.size());
    CHECK(lo.client_ids == en.client_ids);
    for (size_t k = 0; k < lo.models.size(); ++k)
        CHECK(params_equal(lo.models[k].params, en.models[k].params));
}

TEST_CASE("ensemble_predict: probability averaging") {
    auto ex = small_corpus(1, 20, 61);
    Model a = Model::init(View::Struct, 1);
    Model b = Model::init(View::Struct, 2);

    SUBCASE("identical members reduce to the single model") {
        std::vector<double> single = predict_batch(a, ex);
        std::vector<double> mean = ensemble_predict({a, a, a}, ex);
        REQUIRE(mean.size() == single.size());
        for (size_t i = 0; i < mean.size(); ++i) CHECK(mean[i] == doctest::Approx(single[i]).epsilon(1e-12));
    }
    SUBCASE("two distinct members average") {
        std::vector<double> pa = predict_batch(a, ex);
        std::vector<double> pb = predict_batch(b, ex);
        std::vector<double> mean = ensemble_predict({a, b}, ex);
        for (size_t i = 0; i < mean.size(); ++i)
            CHECK(mean[i] == doctest::Approx(pa[i] / 2 + pb[i] / 2).epsilon(1e-12));
    }
    SUBCASE("no members is a configuration error") {
        CHECK_THROWS_AS((void)ensemble_predict({}, ex), ConfigError);
    }
}

TEST_CASE("dp: per-example gradients obey the clip bound") {
    auto ex = small_corpus(1, 60, 71);
    ClientState c = make_client(1, ex, View::Struct, 7);
    DpConfig dp;
    dp.clip_norm = 0.05;
    dp.noise_multiplier = 0.0;
    std::vector<double> norms;
    LocalTrainOpts opts;
    opts.stream = 11;
    opts.norm_probe = &norms;
    local_train(c, 1, dp, opts);
    REQUIRE(norms.size() == ex.size());
    size_t at_bound = 0;
    for (double n : norms) {
        CHECK(n <= dp.clip_norm + 1e-12);
        if (n > dp.clip_norm - 1e-9) ++at_bound;
    }
    // a clip this tight must actually engage
    CHECK(at_bound > norms.size() / 2);
}

TEST_CASE("dp: sigma=0 with infinite clip reproduces plain training bit for bit") {
    auto ex = small_corpus(2, 30, 81);
    FederationConfig plain;
    plain.num_clients = 2;
    plain.rounds = 1;
    plain.local_epochs = 2;
    plain.batch_size = 16;
    plain.seed = 23;
    FederationConfig dp_off = plain;
    DpConfig dp;
    dp.clip_norm = std::numeric_limits<double>::infinity();
    dp.noise_multiplier = 0.0;
    dp_off.dp = dp;

    FederationResult a = run_federation(plain, ex, View::Struct, Aggregation::FedAvg);
    FederationResult b = run_federation(dp_off, ex, View::Struct, Aggregation::FedAvg);
    CHECK(params_equal(a.models[0].params, b.models[0].params));

    // and a real noise multiplier must not
    FederationConfig dp_on = plain;
    DpConfig noisy;
    noisy.clip_norm = 1.0;
    noisy.noise_multiplier = 0.8;
    dp_on.dp = noisy;
    FederationResult n = run_federation(dp_on, ex, View::Struct, Aggregation::FedAvg);
    CHECK_FALSE(params_equal(a.models[0].params, n.models[0].params));
    for (const RoundMetrics& m : n.round_log) {
        CHECK(std::isfinite(m.epsilon_so_far));
        CHECK(m.epsilon_so_far > 0.0);
    }
}

TEST_CASE("parallel gradient workers do not change the result") {
    auto ex = small_corpus(2, 40, 91);
    FederationConfig one;
    one.num_clients = 2;
    one.rounds = 1;
    one.local_epochs = 1;
    one.batch_size = 32;
    one.seed = 29;
    DpConfig dp;
    dp.clip_norm = 0.5;
    dp.noise_multiplier = 0.3;
    one.dp = dp;
    FederationConfig four = one;
    four.jobs = 4;
    FederationResult a = run_federation(one, ex, View::Struct, Aggregation::FedAvg);
    FederationResult b = run_federation(four, ex, View::Struct, Aggregation::FedAvg);
    CHECK(params_equal(a.models[0].params, b.models[0].params));
}

TEST_CASE("config validation") {
    FederationConfig cfg;
    SUBCASE("defaults are valid") { CHECK_NOTHROW(validate_federation_config(cfg)); }
    SUBCASE("bad client count") {
        cfg.num_clients = 0;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("bad rounds") {
        cfg.rounds = 0;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("negative epochs") {
        cfg.local_epochs = -1;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("zero epochs allowed") {
        cfg.local_epochs = 0;
        CHECK_NOTHROW(validate_federation_config(cfg));
    }
    SUBCASE("bad batch") {
        cfg.batch_size = 0;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("bad jobs") {
        cfg.jobs = 0;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("dp clip must be positive") {
        DpConfig dp;
        dp.clip_norm = 0.0;
        cfg.dp = dp;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("dp noise must be non-negative") {
        DpConfig dp;
        dp.noise_multiplier = -0.1;
        cfg.dp = dp;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("dp delta in (0,1)") {
        DpConfig dp;
        dp.delta = 0.0;
        cfg.dp = dp;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
        dp.delta = 1.0;
        cfg.dp = dp;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
    SUBCASE("noise with infinite clip is rejected") {
        DpConfig dp;
        dp.clip_norm = std::numeric_limits<double>::infinity();
        dp.noise_multiplier = 1.0;
        cfg.dp = dp;
        CHECK_THROWS_AS(validate_federation_config(cfg), ConfigError);
    }
}

TEST_CASE("run_federation: org coverage errors") {
    auto ex = small_corpus(2, 10, 101);
    FederationConfig cfg;
    cfg.num_clients = 3; // org 3 has no traces
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    CHECK_THROWS_AS((void)run_federation(cfg, ex, View::Struct, Aggregation::FedAvg), ConfigError);
    cfg.num_clients = 1; // org 2 out of range
    CHECK_THROWS_AS((void)run_federation(cfg, ex, View::Struct, Aggregation::FedAvg), ConfigError);
}

TEST_CASE("aggregation names round-trip") {
    for (Aggregation a : {Aggregation::Local, Aggregation::FedAvg, Aggregation::Ensemble})
        CHECK(aggregation_from_name(aggregation_name(a)) == a);
    CHECK_THROWS_AS((void)aggregation_from_name("median"), ConfigError);
}

TEST_CASE("round log renders as csv") {
    std::vector<RoundMetrics> log(2);
    log[0].round = 1;
    log[0].client = 2;
    log[0].train_loss = 0.5;
    log[0].epsilon_so_far = std::numeric_limits<double>::quiet_NaN();
    log[1].round = 1;
    log[1].client = 3;
    log[1].train_loss = 0.25;
    log[1].epsilon_so_far = 1.5;
    CHECK(round_log_csv(log) ==
          "round,client,train_loss,epsilon_so_far\n"
          "1,2,0.5,\n"
          "1,3,0.25,1.5\n");
}
