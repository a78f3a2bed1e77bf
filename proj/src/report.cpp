#include "fedtrace/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>

#include "fedtrace/errors.hpp"

namespace fedtrace {
namespace {

// display order for family rows
constexpr AttackFamily k_family_rows[] = {
    AttackFamily::SocialEngineering, AttackFamily::PromptInjection,
    AttackFamily::DataExfiltration,  AttackFamily::ToolHijacking,
    AttackFamily::Unknown,
};

std::string fmt_full(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt_delta(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", v);
    return buf;
}

bool same_split(const SplitSpec& a, const SplitSpec& b) {
    if (a.mode != b.mode) return false;
    return a.mode == SplitMode::IID || a.family == b.family;
}

const EvalEntry* find_entry(const std::vector<EvalEntry>& entries, View view,
                            const SplitSpec& split, int org) {
    for (const EvalEntry& e : entries)
        if (e.view == view && e.org == org && same_split(e.split, split)) return &e;
    return nullptr;
}

std::optional<double> pooled_auc(const std::vector<EvalEntry>& entries, View view,
                                 const SplitSpec& split) {
    const EvalEntry* e = find_entry(entries, view, split, 0);
    if (e == nullptr) return std::nullopt;
    return e->auc;
}

SplitSpec iid_split() { return SplitSpec{}; }

SplitSpec holdout_split(AttackFamily f) {
    SplitSpec s;
    s.mode = SplitMode::HoldOutFamily;
    s.family = f;
    return s;
}

std::string cell(const std::optional<double>& v) { return v ? fmt2(*v) : "-"; }

std::vector<Aggregation> aggs_present(const std::vector<EvalEntry>& entries) {
    std::vector<Aggregation> out;
    for (const EvalEntry& e : entries)
        if (std::find(out.begin(), out.end(), e.agg) == out.end()) out.push_back(e.agg);
    return out;
}

std::vector<EvalEntry> filter_agg(const std::vector<EvalEntry>& entries, Aggregation agg) {
    std::vector<EvalEntry> out;
    for (const EvalEntry& e : entries)
        if (e.agg == agg) out.push_back(e);
    return out;
}

} // namespace

std::string entries_csv(const std::vector<EvalEntry>& entries) {
    std::ostringstream os;
    os << "view,agg,split,org,auc,benign_mean,attack_mean,inverted,n_test\n";
    for (const EvalEntry& e : entries) {
        os << view_name(e.view) << ',' << aggregation_name(e.agg) << ',' << split_name(e.split)
           << ',' << e.org << ',' << fmt_full(e.auc) << ',' << fmt_full(e.benign_mean) << ','
           << fmt_full(e.attack_mean) << ',' << (e.inverted ? 1 : 0) << ',' << e.n_test << '\n';
    }
    return os.str();
}

std::vector<EvalEntry> entries_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "view,agg,split,org,auc,benign_mean,attack_mean,inverted,n_test")
        throw ValidationError("cells csv: missing or unexpected header");
    std::vector<EvalEntry> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            size_t comma = line.find(',', start);
            cols.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cols.size() != 9)
            throw ValidationError("cells csv line " + std::to_string(lineno) +
                                  ": expected 9 columns");
        EvalEntry e;
        e.view = view_from_name(cols[0]);
        e.agg = aggregation_from_name(cols[1]);
        if (cols[2] == "iid") {
            e.split.mode = SplitMode::IID;
        } else if (cols[2].rfind("holdout:", 0) == 0) {
            e.split.mode = SplitMode::HoldOutFamily;
            e.split.family = family_from_name(cols[2].substr(8));
        } else {
            throw ValidationError("cells csv line " + std::to_string(lineno) +
                                  ": bad split '" + cols[2] + "'");
        }
        try {
            e.org = std::stoi(cols[3]);
            e.auc = std::stod(cols[4]);
            e.benign_mean = std::stod(cols[5]);
            e.attack_mean = std::stod(cols[6]);
            e.inverted = std::stoi(cols[7]) != 0;
            e.n_test = std::stoi(cols[8]);
        } catch (const std::exception&) {
            throw ValidationError("cells csv line " + std::to_string(lineno) +
                                  ": malformed numeric field");
        }
        out.push_back(e);
    }
    return out;
}

std::string main_results_markdown(const std::vector<EvalEntry>& entries) {
    std::ostringstream os;
    os << "| Held-Out Attack | Conv | Struct | Gated |\n";
    os << "|---|---|---|---|\n";
    for (AttackFamily f : k_family_rows) {
        SplitSpec s = holdout_split(f);
        os << "| " << family_name(f) << " | " << cell(pooled_auc(entries, View::Conv, s)) << " | "
           << cell(pooled_auc(entries, View::Struct, s)) << " | "
           << cell(pooled_auc(entries, View::Gated, s)) << " |\n";
    }
    SplitSpec iid = iid_split();
    os << "| iid (seen attacks) | " << cell(pooled_auc(entries, View::Conv, iid)) << " | "
       << cell(pooled_auc(entries, View::Struct, iid)) << " | "
       << cell(pooled_auc(entries, View::Gated, iid)) << " |\n";
    return os.str();
}

std::string effect_size_markdown(const std::vector<EvalEntry>& entries) {
    struct Row {
        std::string name;
        double conv, strct;
    };
    std::vector<Row> rows;
    for (AttackFamily f : k_family_rows) {
        SplitSpec s = holdout_split(f);
        auto c = pooled_auc(entries, View::Conv, s);
        auto t = pooled_auc(entries, View::Struct, s);
        if (c && t) rows.push_back({family_name(f) + " (ood)", *c, *t});
    }
    auto c = pooled_auc(entries, View::Conv, iid_split());
    auto t = pooled_auc(entries, View::Struct, iid_split());
    if (c && t) rows.push_back({"iid", *c, *t});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.strct - a.conv > b.strct - b.conv;
    });

    std::ostringstream os;
    os << "| Setting | Conv | Struct | Delta |\n";
    os << "|---|---|---|---|\n";
    for (const Row& r : rows)
        os << "| " << r.name << " | " << fmt2(r.conv) << " | " << fmt2(r.strct) << " | "
           << fmt_delta(r.strct - r.conv) << " |\n";
    return os.str();
}

std::string complete_results_markdown(const std::vector<EvalEntry>& entries) {
    constexpr View views[] = {View::Conv, View::Struct, View::Gated};
    auto row = [&](const std::string& name, const std::optional<double> v[3]) {
        std::ostringstream os;
        os << "| " << name << " |";
        int best = -1;
        for (int i = 0; i < 3; ++i)
            if (v[i] && (best < 0 || *v[i] > *v[best])) best = i;
        for (int i = 0; i < 3; ++i) os << ' ' << cell(v[i]) << " |";
        os << ' ' << (best >= 0 ? view_name(views[best]) : "-") << " |\n";
        return os.str();
    };

    std::ostringstream os;
    os << "| Setting | Conv | Struct | Gated | Best |\n";
    os << "|---|---|---|---|---|\n";
    std::optional<double> iid[3];
    for (int i = 0; i < 3; ++i) iid[i] = pooled_auc(entries, views[i], iid_split());
    os << row("iid", iid);

    double sums[3] = {0, 0, 0};
    int counts[3] = {0, 0, 0};
    for (AttackFamily f : k_family_rows) {
        std::optional<double> v[3];
        for (int i = 0; i < 3; ++i) {
            v[i] = pooled_auc(entries, views[i], holdout_split(f));
            if (v[i]) {
                sums[i] += *v[i];
                ++counts[i];
            }
        }
        os << row(family_name(f), v);
    }
    std::optional<double> avg[3];
    for (int i = 0; i < 3; ++i)
        if (counts[i] == 5) avg[i] = sums[i] / 5.0; // only a complete hold-out sweep averages
    os << row("ood average", avg);
    return os.str();
}

std::string per_org_markdown(const std::vector<EvalEntry>& entries) {
    std::vector<int> orgs;
    for (const EvalEntry& e : entries)
        if (e.org > 0 && std::find(orgs.begin(), orgs.end(), e.org) == orgs.end())
            orgs.push_back(e.org);
    std::sort(orgs.begin(), orgs.end());

    auto org_ood = [&](View view, int org) -> std::optional<double> {
        double sum = 0.0;
        int n = 0;
        for (AttackFamily f : k_family_rows) {
            const EvalEntry* e = find_entry(entries, view, holdout_split(f), org);
            if (e != nullptr) {
                sum += e->auc;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    };

    std::ostringstream os;
    os << "| Org | Conv IID | Struct IID | Struct OOD |\n";
    os << "|---|---|---|---|\n";
    std::vector<double> cols[3];
    for (int org : orgs) {
        const EvalEntry* conv = find_entry(entries, View::Conv, iid_split(), org);
        const EvalEntry* strct = find_entry(entries, View::Struct, iid_split(), org);
        std::optional<double> ood = org_ood(View::Struct, org);
        os << "| " << org << " | " << cell(conv ? std::optional(conv->auc) : std::nullopt)
           << " | " << cell(strct ? std::optional(strct->auc) : std::nullopt) << " | "
           << cell(ood) << " |\n";
        if (conv != nullptr) cols[0].push_back(conv->auc);
        if (strct != nullptr) cols[1].push_back(strct->auc);
        if (ood) cols[2].push_back(*ood);
    }
    auto mean_of = [](const std::vector<double>& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        double m = *mean_of(v), s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size()));
    };
    os << "| mean | " << cell(mean_of(cols[0])) << " | " << cell(mean_of(cols[1])) << " | "
       << cell(mean_of(cols[2])) << " |\n";
    os << "| std | " << cell(std_of(cols[0])) << " | " << cell(std_of(cols[1])) << " | "
       << cell(std_of(cols[2])) << " |\n";
    return os.str();
}

std::string markdown_report(const std::vector<EvalEntry>& entries) {
    std::ostringstream os;
    for (Aggregation agg : aggs_present(entries)) {
        std::vector<EvalEntry> sub = filter_agg(entries, agg);
        os << "## aggregation: " << aggregation_name(agg) << "\n\n";
        os << "### cross-attack generalization (roc-auc)\n\n" << main_results_markdown(sub) << '\n';
        os << "### struct-vs-conv effect size\n\n" << effect_size_markdown(sub) << '\n';
        os << "### complete results\n\n" << complete_results_markdown(sub) << '\n';
        os << "### per-org consistency\n\n" << per_org_markdown(sub) << '\n';
    }
    return os.str();
}

}  // namespace fedtrace
