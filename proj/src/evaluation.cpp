#include "fedtrace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/tokenizer.hpp"

namespace fedtrace {
namespace {

constexpr uint64_t k_split_tag = 0x73706c6974ULL;

// group 0 = benign, 1 + family index = that attack family
int group_of(const AgentTrace& t) {
    return t.label == 0 ? 0 : 1 + family_index(*t.family);
}

size_t train_count(double fraction, size_t group_size) {
    auto n = static_cast<long long>(std::llround(fraction * static_cast<double>(group_size)));
    n = std::max(0LL, std::min<long long>(n, static_cast<long long>(group_size)));
    return static_cast<size_t>(n);
}

} // namespace

void validate_split_spec(const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("split train_fraction must lie in (0, 1)");
}

std::string split_name(const SplitSpec& spec) {
    if (spec.mode == SplitMode::IID) return "iid";
    return "holdout:" + family_name(spec.family);
}

Split make_splits(const Dataset& ds, const SplitSpec& spec) {
    validate_split_spec(spec);
    if (ds.traces.empty()) throw ConfigError("make_splits: empty dataset");
    const bool holdout = spec.mode == SplitMode::HoldOutFamily;
    const int held_group = holdout ? 1 + family_index(spec.family) : -1;
    if (holdout) {
        bool present = false;
        for (const AgentTrace& t : ds.traces)
            if (t.label == 1 && group_of(t) == held_group) present = true;
        if (!present)
            throw ConfigError("make_splits: family '" + family_name(spec.family) +
                              "' absent from dataset");
    }

    // indices per (org, group); shuffled per group so membership is a pure
    // function of (seed, org, group) and the benign partition is identical
    // across IID and hold-out modes
    std::map<std::pair<int, int>, std::vector<size_t>> groups;
    for (size_t i = 0; i < ds.traces.size(); ++i)
        groups[{ds.traces[i].org_id, group_of(ds.traces[i])}].push_back(i);

    std::vector<size_t> train_idx, test_idx;
    for (auto& [key, idx] : groups) {
        const auto [org, group] = key;
        Rng(spec.seed)
            .fork(k_split_tag, static_cast<uint64_t>(org), static_cast<uint64_t>(group))
            .shuffle(idx);
        if (holdout && group == held_group) {
            test_idx.insert(test_idx.end(), idx.begin(), idx.end());
            continue;
        }
        const size_t n_train = train_count(spec.train_fraction, idx.size());
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        // in hold-out mode the tail of the other attack families is dropped:
        // the test set stays benign vs held family only
        if (group == 0 || !holdout)
            test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Split out;
    out.train.reserve(train_idx.size());
    out.test.reserve(test_idx.size());
    for (size_t i : train_idx) out.train.push_back(ds.traces[i]);
    for (size_t i : test_idx) out.test.push_back(ds.traces[i]);
    return out;
}

double roc_auc(const std::vector<std::pair<double, int>>& scored) {
    size_t npos = 0, nneg = 0;
    for (const auto& [s, y] : scored) {
        if (y == 1) ++npos;
        else if (y == 0) ++nneg;
        else throw ValidationError("roc_auc: labels must be 0 or 1");
    }
    if (npos == 0 || nneg == 0)
        throw ValidationError("roc_auc: both classes required, got " + std::to_string(npos) +
                              " positive / " + std::to_string(nneg) + " negative");

    std::vector<size_t> idx(scored.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scored[a].first < scored[b].first; });

    // average rank over each tie run, summed for positives (Mann-Whitney U)
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && scored[idx[j]].first == scored[idx[i]].first) ++j;
        const double avg_rank = static_cast<double>(i + 1 + j) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (scored[idx[k]].second == 1) pos_rank_sum += avg_rank;
        i = j;
    }
    const double n_pos = static_cast<double>(npos);
    return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * static_cast<double>(nneg));
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ValidationError("roc_auc: scores and labels must align");
    std::vector<std::pair<double, int>> scored(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) scored[i] = {scores[i], labels[i]};
    return roc_auc(scored);
}

InversionDiag score_inversion_diag(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ValidationError("score_inversion_diag: scores and labels must align");
    double sums[2] = {0.0, 0.0};
    size_t counts[2] = {0, 0};
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("score_inversion_diag: labels must be 0 or 1");
        sums[labels[i]] += scores[i];
        ++counts[labels[i]];
    }
    if (counts[0] == 0 || counts[1] == 0)
        throw ValidationError("score_inversion_diag: both classes required");
    InversionDiag d;
    d.benign_mean = sums[0] / static_cast<double>(counts[0]);
    d.attack_mean = sums[1] / static_cast<double>(counts[1]);
    d.inverted = d.benign_mean > d.attack_mean;
    return d;
}

InversionDiag score_inversion_diag(const Model& m, const std::vector<Example>& test) {
    std::vector<double> scores = predict_batch(m, test);
    std::vector<int> labels(test.size());
    for (size_t i = 0; i < test.size(); ++i) labels[i] = test[i].label;
    return score_inversion_diag(scores, labels);
}

EvalReport run_protocol(const Dataset& ds, View view, Aggregation agg, const SplitSpec& spec,
                        const FederationConfig& cfg) {
    validate_split_spec(spec);
    validate_federation_config(cfg);
    Split split = make_splits(ds, spec);

    // hygiene re-checked on the realized train set, not just promised by the
    // splitter
    if (spec.mode == SplitMode::HoldOutFamily)
        for (const AgentTrace& t : split.train)
            if (t.label == 1 && t.family == spec.family)
                throw ValidationError("run_protocol: held-out family '" +
                                      family_name(spec.family) + "' leaked into training");

    const RuleTable& rules = RuleTable::builtin();
    FederationResult fr = run_federation(cfg, make_examples(split.train, rules), view, agg);
    std::vector<Example> test = make_examples(split.test, rules);

    std::vector<double> scores(test.size(), 0.0);
    switch (agg) {
        case Aggregation::FedAvg:
            scores = predict_batch(fr.models[0], test);
            break;
        case Aggregation::Ensemble:
            scores = ensemble_predict(fr.models, test);
            break;
        case Aggregation::Local: {
            // each trace is scored by its own org's model
            std::map<int, size_t> model_of;
            for (size_t k = 0; k < fr.client_ids.size(); ++k) model_of[fr.client_ids[k]] = k;
            std::map<int, std::vector<size_t>> per_org;
            for (size_t i = 0; i < test.size(); ++i) per_org[test[i].org_id].push_back(i);
            for (const auto& [org, idx] : per_org) {
                auto it = model_of.find(org);
                if (it == model_of.end())
                    throw ConfigError("run_protocol: no local model for org " +
                                      std::to_string(org));
                std::vector<Example> slice;
                slice.reserve(idx.size());
                for (size_t i : idx) slice.push_back(test[i]);
                std::vector<double> p = predict_batch(fr.models[it->second], slice);
                for (size_t k = 0; k < idx.size(); ++k) scores[idx[k]] = p[k];
            }
            break;
        }
    }

    EvalReport report;
    report.seed = cfg.seed;
    report.round_log = fr.round_log;

    auto push_entry = [&](int org) {
        std::vector<double> s;
        std::vector<int> y;
        for (size_t i = 0; i < test.size(); ++i) {
            if (org != 0 && test[i].org_id != org) continue;
            s.push_back(scores[i]);
            y.push_back(test[i].label);
        }
        EvalEntry e;
        e.view = view;
        e.agg = agg;
        e.split = spec;
        e.org = org;
        e.auc = roc_auc(s, y);
        InversionDiag d = score_inversion_diag(s, y);
        e.benign_mean = d.benign_mean;
        e.attack_mean = d.attack_mean;
        e.inverted = d.inverted;
        e.n_test = static_cast<int>(s.size());
        report.entries.push_back(e);
    };
    push_entry(0);
    for (int org = 1; org <= cfg.num_clients; ++org) push_entry(org);
    return report;
}

}  // namespace fedtrace
