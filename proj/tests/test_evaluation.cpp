#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "fedtrace/errors.hpp"
#include "fedtrace/evaluation.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/trace_gen.hpp"

using namespace fedtrace;

namespace {

// brute-force pairwise AUC: every positive x negative pair, ties half credit
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

Dataset small_dataset(int orgs, int per_org, uint64_t seed) {
    GenConfig g;
    g.num_orgs = orgs;
    g.traces_per_org = per_org;
    g.seed = seed;
    return generate(g);
}

size_t count_family(const std::vector<AgentTrace>& traces, AttackFamily f) {
    size_t n = 0;
    for (const AgentTrace& t : traces)
        if (t.label == 1 && t.family == f) ++n;
    return n;
}

std::vector<AgentTrace> benign_of(const std::vector<AgentTrace>& traces) {
    std::vector<AgentTrace> out;
    for (const AgentTrace& t : traces)
        if (t.label == 0) out.push_back(t);
    return out;
}

FederationConfig tiny_federation(int clients, uint64_t seed) {
    FederationConfig cfg;
    cfg.num_clients = clients;
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("roc_auc: pinned cases") {
    CHECK(roc_auc({0.9, 0.8, 0.7}, {1, 1, 0}) == 1.0);
    CHECK(roc_auc({0.1, 0.9}, {1, 0}) == 0.0);
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
    // one tie pair out of two -> 0.75
    CHECK(roc_auc({0.3, 0.3, 0.8}, {0, 1, 1}) == 0.75);
}

TEST_CASE("roc_auc: input validation") {
    CHECK_THROWS_AS((void)roc_auc({0.1, 0.2}, {1, 1}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.1, 0.2}, {0, 0}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.1, 0.2}, {0, 2}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.1}, {0, 1}), ValidationError);
}

TEST_CASE("roc_auc: label flip complements, monotone transforms do nothing") {
    Rng rng(99);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
        s.push_back(rng.uniform()); // continuous, ties have measure zero
        y.push_back(i < 15 ? 1 : 0);
    }
    std::vector<int> flipped(y.size());
    for (size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - y[i];
    CHECK(roc_auc(s, y) + roc_auc(s, flipped) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> warped(s.size());
    for (size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3.0 * s[i]) - 0.5;
    CHECK(roc_auc(warped, y) == roc_auc(s, y));
}

TEST_CASE("roc_auc: equals the pairwise oracle on random tied sets") {
    Rng rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.range(5, 40);
        std::vector<double> s;
        std::vector<int> y;
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            s.push_back(0.1 * rng.range(0, 10)); // coarse grid forces ties
            y.push_back(rng.chance(0.5) ? 1 : 0);
            (y.back() == 1 ? pos : neg) = true;
        }
        if (!pos) y[0] = 1;
        if (!neg) y[1 % n] = 0;
        CHECK(std::abs(roc_auc(s, y) - auc_oracle(s, y)) < 1e-12);
    }
}

TEST_CASE("iid split: exact partition with balanced orgs") {
    Dataset ds = small_dataset(5, 100, 7);
    SplitSpec spec;
    spec.seed = 3;
    Split sp = make_splits(ds, spec);

    CHECK(sp.train.size() + sp.test.size() == ds.traces.size());
    CHECK(sp.train.size() == 400); // 0.8 of every (org, group) cell exactly

    for (int org = 1; org <= 5; ++org) {
        size_t benign = 0, attack = 0;
        for (const AgentTrace& t : sp.train)
            if (t.org_id == org) (t.label == 0 ? benign : attack)++;
        // generator gives 50/50 per org; stratification must keep it within one
        CHECK(std::llabs(static_cast<long long>(benign) - static_cast<long long>(attack)) <= 1);
    }

    // per-(org, family) counts are preserved across the partition
    for (int org = 1; org <= 5; ++org)
        for (int f = 0; f < kNumFamilies; ++f) {
            AttackFamily fam = family_from_index(f);
            size_t total = 0;
            for (const AgentTrace& t : ds.traces)
                if (t.org_id == org && t.label == 1 && t.family == fam) ++total;
            size_t train_n = 0, test_n = 0;
            for (const AgentTrace& t : sp.train)
                if (t.org_id == org && t.label == 1 && t.family == fam) ++train_n;
            for (const AgentTrace& t : sp.test)
                if (t.org_id == org && t.label == 1 && t.family == fam) ++test_n;
            CHECK(train_n + test_n == total);
        }
}

TEST_CASE("iid split: deterministic in the seed") {
    Dataset ds = small_dataset(3, 60, 11);
    SplitSpec spec;
    spec.seed = 5;
    Split a = make_splits(ds, spec);
    Split b = make_splits(ds, spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    spec.seed = 6;
    Split c = make_splits(ds, spec);
    CHECK(a.train != c.train);
}

TEST_CASE("hold-out split: held family never trains, benign side matches iid") {
    Dataset ds = small_dataset(5, 100, 13);
    SplitSpec iid;
    iid.seed = 9;

    for (int f = 0; f < kNumFamilies; ++f) {
        AttackFamily fam = family_from_index(f);
        SplitSpec spec;
        spec.mode = SplitMode::HoldOutFamily;
        spec.family = fam;
        spec.seed = 9;
        Split sp = make_splits(ds, spec);

        CHECK(count_family(sp.train, fam) == 0);
        // the whole family lands in the test set
        size_t total = 0;
        for (const AgentTrace& t : ds.traces)
            if (t.label == 1 && t.family == fam) ++total;
        CHECK(count_family(sp.test, fam) == total);
        // no other attack family leaks into the test set
        for (const AgentTrace& t : sp.test)
            if (t.label == 1) CHECK(t.family == fam);

        // benign test subset is the one the iid split produces (comparability)
        Split ii = make_splits(ds, iid);
        CHECK(benign_of(sp.test) == benign_of(ii.test));
    }
}

TEST_CASE("hold-out split: absent family is a configuration error") {
    GenConfig g;
    g.num_orgs = 2;
    g.traces_per_org = 20;
    g.benign_fraction = 1.0;
    g.seed = 1;
    Dataset benign_only = generate(g);
    SplitSpec spec;
    spec.mode = SplitMode::HoldOutFamily;
    spec.family = AttackFamily::PromptInjection;
    CHECK_THROWS_AS((void)make_splits(benign_only, spec), ConfigError);
}

TEST_CASE("split spec validation") {
    SplitSpec spec;
    spec.train_fraction = 0.0;
    CHECK_THROWS_AS(validate_split_spec(spec), ConfigError);
    spec.train_fraction = 1.0;
    CHECK_THROWS_AS(validate_split_spec(spec), ConfigError);
    spec.train_fraction = -0.1;
    CHECK_THROWS_AS(validate_split_spec(spec), ConfigError);
    spec.train_fraction = 0.8;
    CHECK_NOTHROW(validate_split_spec(spec));
    CHECK(split_name(spec) == "iid");
    spec.mode = SplitMode::HoldOutFamily;
    spec.family = AttackFamily::ToolHijacking;
    CHECK(split_name(spec) == "holdout:tool_hijacking");
}

TEST_CASE("score_inversion_diag: means and the inversion flag") {
    SUBCASE("constant scores are not inverted") {
        InversionDiag d = score_inversion_diag({0.5, 0.5, 0.5}, {0, 1, 0});
        CHECK(d.benign_mean == 0.5);
        CHECK(d.attack_mean == 0.5);
        CHECK_FALSE(d.inverted);
    }
    SUBCASE("benign outranking attacks flags inversion and drops auc below half") {
        std::vector<double> s = {0.9, 0.95, 0.2, 0.3};
        std::vector<int> y = {0, 0, 1, 1};
        InversionDiag d = score_inversion_diag(s, y);
        CHECK(d.inverted);
        CHECK(roc_auc(s, y) < 0.5);
    }
    SUBCASE("model overload agrees with manual scoring") {
        Dataset ds = small_dataset(1, 30, 17);
        auto ex = make_examples(ds.traces, RuleTable::builtin());
        Model m = Model::init(View::Struct, 5);
        InversionDiag d = score_inversion_diag(m, ex);
        std::vector<double> p = predict_batch(m, ex);
        double sums[2] = {0, 0};
        size_t counts[2] = {0, 0};
        for (size_t i = 0; i < ex.size(); ++i) {
            sums[ex[i].label] += p[i];
            ++counts[ex[i].label];
        }
        CHECK(d.benign_mean == sums[0] / counts[0]);
        CHECK(d.attack_mean == sums[1] / counts[1]);
    }
    SUBCASE("single class rejected") {
        CHECK_THROWS_AS((void)score_inversion_diag({0.5}, {1}), ValidationError);
    }
}

TEST_CASE("run_protocol: iid fedavg report shape and determinism") {
    Dataset ds = small_dataset(5, 40, 19);
    SplitSpec spec;
    spec.seed = 2;
    FederationConfig cfg = tiny_federation(5, 23);

    EvalReport r = run_protocol(ds, View::Struct, Aggregation::FedAvg, spec, cfg);
    REQUIRE(r.entries.size() == 6);
    CHECK(r.entries[0].org == 0);
    int pooled_n = r.entries[0].n_test;
    int per_org_sum = 0;
    for (size_t i = 1; i < r.entries.size(); ++i) {
        CHECK(r.entries[i].org == static_cast<int>(i));
        per_org_sum += r.entries[i].n_test;
    }
    CHECK(pooled_n == per_org_sum);
    for (const EvalEntry& e : r.entries) {
        CHECK(e.auc >= 0.0);
        CHECK(e.auc <= 1.0);
        CHECK(e.inverted == (e.benign_mean > e.attack_mean));
    }
    CHECK(r.round_log.size() == 5);
    CHECK(r.seed == cfg.seed);

    EvalReport again = run_protocol(ds, View::Struct, Aggregation::FedAvg, spec, cfg);
    REQUIRE(again.entries.size() == r.entries.size());
    for (size_t i = 0; i < r.entries.size(); ++i) {
        CHECK(again.entries[i].auc == r.entries[i].auc);
        CHECK(again.entries[i].benign_mean == r.entries[i].benign_mean);
        CHECK(again.entries[i].attack_mean == r.entries[i].attack_mean);
    }
}

TEST_CASE("run_protocol: local and ensemble aggregations") {
    Dataset ds = small_dataset(3, 40, 29);
    SplitSpec spec;
    spec.mode = SplitMode::HoldOutFamily;
    spec.family = AttackFamily::ToolHijacking;
    spec.seed = 4;
    FederationConfig cfg = tiny_federation(3, 31);

    for (Aggregation agg : {Aggregation::Local, Aggregation::Ensemble}) {
        EvalReport r = run_protocol(ds, View::Struct, agg, spec, cfg);
        REQUIRE(r.entries.size() == 4);
        for (const EvalEntry& e : r.entries) {
            CHECK(e.auc >= 0.0);
            CHECK(e.auc <= 1.0);
        }
    }
}

TEST_CASE("run_protocol: client count must cover the dataset orgs") {
    Dataset ds = small_dataset(3, 40, 37);
    SplitSpec spec;
    spec.seed = 1;
    FederationConfig cfg = tiny_federation(2, 1); // org 3 out of range
    CHECK_THROWS_AS((void)run_protocol(ds, View::Struct, Aggregation::FedAvg, spec, cfg),
                    ConfigError);
}
