#include "fedtrace/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fedtrace/checkpoint.hpp"
#include "fedtrace/detector.hpp"
#include "fedtrace/dp_accounting.hpp"
#include "fedtrace/evaluation.hpp"
#include "fedtrace/federated.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/trace_gen.hpp"

namespace fedtrace {
namespace {

std::string fmt_err(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

template <typename Fn>
SelfCheckResult guarded(const std::string& name, Fn&& body) {
    SelfCheckResult r;
    r.name = name;
    try {
        body(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    return r;
}

std::vector<Example> probe_examples(uint64_t seed, int count) {
    GenConfig g;
    g.num_orgs = 1;
    g.traces_per_org = count;
    g.seed = seed;
    return make_examples(generate(g).traces, RuleTable::builtin());
}

SelfCheckResult check_gradients(bool corrupt) {
    return guarded("gradient_finite_difference", [&](SelfCheckResult& r) {
        std::vector<Example> ex = probe_examples(101, 6);
        ex.resize(3);
        Rng rng(7);
        std::ostringstream detail;
        double worst = 0.0;
        for (View view : {View::Conv, View::Struct, View::Gated}) {
            Model m = Model::init(view, 42);
            ParamSet grads = m.params.zeros_like();
            double base = 0.0;
            for (const Example& e : ex) base += model_loss_grad(m, e, grads);
            if (corrupt) // bias every coordinate so any probed one trips the check
                for (Tensor& t : grads.tensors)
                    for (double& v : t.data) v += 1e-2;
            ParamSet scratch = m.params.zeros_like();
            auto loss = [&]() {
                double acc = 0.0;
                for (const Example& e : ex) acc += model_loss_grad(m, e, scratch);
                return acc;
            };
            FdResult fd = fd_check(loss, m.params, grads, 1e-3, 3, rng);
            worst = std::max(worst, fd.max_rel_err);
            detail << view_name(view) << ' ' << fmt_err(fd.max_rel_err) << " ("
                   << fd.coords_checked << " coords) ";
            (void)base;
        }
        r.pass = worst < 1e-4;
        r.detail = detail.str() + (corrupt ? "[gradient deliberately corrupted]" : "");
    });
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
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

SelfCheckResult check_auc_oracle() {
    return guarded("auc_oracle_equivalence", [](SelfCheckResult& r) {
        Rng rng(202);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = static_cast<int>(rng.range(5, 40));
            std::vector<double> s;
            std::vector<int> y;
            for (int i = 0; i < n; ++i) {
                s.push_back(0.1 * static_cast<double>(rng.range(0, 10)));
                y.push_back(rng.chance(0.5) ? 1 : 0);
            }
            y[0] = 1;
            y[1] = 0;
            worst = std::max(worst, std::abs(roc_auc(s, y) - pairwise_auc(s, y)));
        }
        r.pass = worst < 1e-12;
        r.detail = "max |rank - pairwise| = " + fmt_err(worst) + " over 100 tied sets";
    });
}

SelfCheckResult check_fedavg_algebra() {
    return guarded("fedavg_algebra", [](SelfCheckResult& r) {
        std::vector<Example> ex = probe_examples(303, 4);
        auto client = [&](int id, uint64_t seed) {
            ClientState c;
            c.id = id;
            c.train = ex;
            c.model = Model::init(View::Struct, seed);
            return c;
        };
        double worst = 0.0;

        std::vector<ClientState> same = {client(1, 9), client(2, 9), client(3, 9)};
        ParamSet avg = fedavg(same, {3, 14, 8});
        for (size_t t = 0; t < avg.count(); ++t)
            for (size_t i = 0; i < avg[t].data.size(); ++i)
                worst = std::max(worst,
                                 std::abs(avg[t].data[i] - same[0].model.params[t].data[i]));

        std::vector<ClientState> two = {client(1, 1), client(2, 2)};
        for (size_t t = 0; t < two[0].model.params.count(); ++t) {
            two[0].model.params[t].fill(0.0);
            two[1].model.params[t].fill(4.0);
        }
        ParamSet mixed = fedavg(two, {1, 3});
        for (size_t t = 0; t < mixed.count(); ++t)
            for (double v : mixed[t].data) worst = std::max(worst, std::abs(v - 3.0));

        std::vector<ClientState> abc = {client(1, 11), client(2, 12), client(3, 13)};
        ParamSet fwd = fedavg(abc, {5, 7, 11});
        std::vector<ClientState> cba = {abc[2], abc[0], abc[1]};
        ParamSet rev = fedavg(cba, {11, 5, 7});
        for (size_t t = 0; t < fwd.count(); ++t)
            for (size_t i = 0; i < fwd[t].data.size(); ++i)
                worst = std::max(worst, std::abs(fwd[t].data[i] - rev[t].data[i]));

        r.pass = worst < 1e-12;
        r.detail = "identity, weighted mean, permutation: max deviation " + fmt_err(worst);
    });
}

SelfCheckResult check_tokenizer_fixtures() {
    return guarded("tokenizer_fixtures", [](SelfCheckResult& r) {
        auto struct_index = [](const std::string& name) {
            const std::vector<std::string>& names = structural_token_names();
            auto it = std::find(names.begin(), names.end(), name);
            return static_cast<int32_t>(it - names.begin()) + 1;
        };
        auto turn = [](Role role, const std::string& text) {
            Turn t;
            t.role = role;
            t.text = text;
            return t;
        };
        auto call = [](const std::string& tool, bool is_error,
                       std::vector<std::pair<std::string, std::string>> args = {}) {
            Turn t;
            t.role = Role::Assistant;
            t.tool_call = ToolCall{tool, std::move(args), is_error};
            return t;
        };

        int failures = 0;
        std::ostringstream detail;

        AgentTrace plain;
        plain.turns = {turn(Role::System, "you are a helpful assistant"),
                       turn(Role::User, "please summarize the report"),
                       call("read_file", false, {{"path", "/srv/data/report.txt"}}),
                       turn(Role::ToolObservation, "report contents")};
        plain.final_response = "summary attached";
        TokenSeq st = tokenize_structural(plain);
        std::vector<int32_t> want = {struct_index("[SYS]"),  struct_index("[USER]"),
                                     struct_index("[ASSISTANT]"), struct_index("[TOOL]"),
                                     struct_index("[ARGS]"), struct_index("[OBS]"),
                                     struct_index("[OUTPUT]")};
        if (st.true_length != static_cast<int>(want.size()) ||
            !std::equal(want.begin(), want.end(), st.indices.begin())) {
            ++failures;
            detail << "role/call/output sequence mismatch; ";
        }

        AgentTrace fifo;
        fifo.turns = {turn(Role::User, "run both"), call("search_web", true),
                      call("query_db", false), turn(Role::ToolObservation, "lookup failed"),
                      turn(Role::ToolObservation, "3 rows")};
        TokenSeq ft = tokenize_structural(fifo);
        std::vector<int32_t> fifo_want = {
            struct_index("[USER]"), struct_index("[ASSISTANT]"), struct_index("[TOOL]"),
            struct_index("[ASSISTANT]"), struct_index("[TOOL]"), struct_index("[ERROR]"),
            struct_index("[OBS]")};
        if (ft.true_length != static_cast<int>(fifo_want.size()) ||
            !std::equal(fifo_want.begin(), fifo_want.end(), ft.indices.begin())) {
            ++failures;
            detail << "observation pairing is not first-in-first-out; ";
        }

        const RuleTable& rules = RuleTable::builtin();
        std::vector<std::string> names = rules.token_names();
        auto conv_index = [&](const std::string& name) {
            auto it = std::find(names.begin(), names.end(), name);
            return static_cast<int32_t>(it - names.begin()) + 1;
        };
        AgentTrace loopy;
        loopy.turns = {turn(Role::User, "send it immediately"), call("send_email", false),
                       call("send_email", false)};
        TokenSeq ct = tokenize_conversational(loopy, rules);
        std::vector<int32_t> conv_want = {conv_index("URGENCY_CUE"), conv_index("SEND_EMAIL"),
                                          conv_index("SEND_EMAIL"), conv_index("LOOP")};
        if (ct.true_length != static_cast<int>(conv_want.size()) ||
            !std::equal(conv_want.begin(), conv_want.end(), ct.indices.begin())) {
            ++failures;
            detail << "rule table tokens mismatch; ";
        }

        r.pass = failures == 0;
        r.detail = failures == 0 ? "role, pairing, and rule fixtures hold" : detail.str();
    });
}

SelfCheckResult check_round_trips() {
    return guarded("persistence_round_trip", [](SelfCheckResult& r) {
        namespace fs = std::filesystem;
        GenConfig g;
        g.num_orgs = 2;
        g.traces_per_org = 20;
        g.seed = 404;
        Dataset ds = generate(g);
        const std::string tpath = (fs::temp_directory_path() / "fedtrace_sc_traces.jsonl").string();
        write_dataset(ds, tpath);
        Dataset back = read_dataset(tpath);
        bool traces_ok = back == ds;
        fs::remove(tpath);

        Model m = Model::init(View::Gated, 5);
        const std::string cpath = (fs::temp_directory_path() / "fedtrace_sc_model.bin").string();
        save_checkpoint(cpath, m.params, {{"view", view_name(View::Gated)}});
        Checkpoint cp = load_checkpoint(cpath);
        bool params_ok = cp.params.same_layout(m.params);
        if (params_ok)
            for (size_t t = 0; t < cp.params.count(); ++t)
                if (cp.params[t].data != m.params[t].data) params_ok = false;
        bool meta_ok = cp.metadata.at("view") == std::string(view_name(View::Gated));
        fs::remove(cpath);

        r.pass = traces_ok && params_ok && meta_ok;
        r.detail = std::string("dataset ") + (traces_ok ? "ok" : "MISMATCH") + ", checkpoint " +
                   (params_ok && meta_ok ? "ok" : "MISMATCH");
    });
}

SelfCheckResult check_determinism() {
    return guarded("training_determinism", [](SelfCheckResult& r) {
        GenConfig g;
        g.num_orgs = 1;
        g.traces_per_org = 24;
        g.seed = 505;
        bool gen_ok = generate(g) == generate(g);

        FederationConfig cfg;
        cfg.num_clients = 1;
        cfg.rounds = 1;
        cfg.local_epochs = 1;
        cfg.batch_size = 16;
        cfg.seed = 3;
        std::vector<Example> ex = make_examples(generate(g).traces, RuleTable::builtin());
        FederationResult a = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
        FederationResult b = run_federation(cfg, ex, View::Struct, Aggregation::FedAvg);
        bool train_ok = true;
        for (size_t t = 0; t < a.models[0].params.count(); ++t)
            if (a.models[0].params[t].data != b.models[0].params[t].data) train_ok = false;

        r.pass = gen_ok && train_ok;
        r.detail = std::string("generation ") + (gen_ok ? "reproducible" : "DIVERGED") +
                   ", training " + (train_ok ? "bit-identical" : "DIVERGED");
    });
}

SelfCheckResult check_privacy_accounting() {
    return guarded("privacy_accounting", [](SelfCheckResult& r) {
        DpConfig dp;
        dp.noise_multiplier = 0.0;
        bool inf_ok = std::isinf(rdp_epsilon(dp, 0.1, 100));
        double prev = std::numeric_limits<double>::infinity();
        bool mono_ok = true;
        for (double sigma : {0.6, 1.0, 2.0}) {
            dp.noise_multiplier = sigma;
            double eps = rdp_epsilon(dp, 0.1, 100);
            if (!(eps < prev)) mono_ok = false;
            prev = eps;
        }
        r.pass = inf_ok && mono_ok;
        r.detail = std::string("zero noise diverges: ") + (inf_ok ? "yes" : "NO") +
                   ", epsilon falls with sigma: " + (mono_ok ? "yes" : "NO");
    });
}

} // namespace

std::vector<SelfCheckResult> run_selfcheck(const SelfCheckOpts& opts) {
    std::vector<SelfCheckResult> results;
    results.push_back(check_gradients(opts.corrupt_gradient));
    results.push_back(check_auc_oracle());
    results.push_back(check_fedavg_algebra());
    results.push_back(check_tokenizer_fixtures());
    results.push_back(check_round_trips());
    results.push_back(check_determinism());
    results.push_back(check_privacy_accounting());
    return results;
}

}  // namespace fedtrace
