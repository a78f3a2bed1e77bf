// fedtrace: synthetic trace generation, federated detector training, and
// cross-attack evaluation in one pipeline binary.
//
// Subcommands: generate | experiment | selfcheck | report. Exit codes:
// 0 success, 2 configuration error, 3 assertion/property failure, 4 I/O
// error, 1 internal error.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "fedtrace/config.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/evaluation.hpp"
#include "fedtrace/report.hpp"
#include "fedtrace/selfcheck.hpp"
#include "fedtrace/trace_gen.hpp"

namespace fs = std::filesystem;
using namespace fedtrace;

namespace {

struct Flags {
    std::string config_path;
    std::string seed;
    std::vector<std::string> sets;
    std::string out;
    std::string view;
    std::string agg;
    std::string holdout;
    std::string grid;
    std::string dataset;
    std::string benign_fraction;
    std::string sigma;
    std::string jobs;
    bool dp = false;

    CLI::Option* o_config = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_out = nullptr;
    CLI::Option* o_view = nullptr;
    CLI::Option* o_agg = nullptr;
    CLI::Option* o_holdout = nullptr;
    CLI::Option* o_grid = nullptr;
    CLI::Option* o_dataset = nullptr;
    CLI::Option* o_benign = nullptr;
    CLI::Option* o_sigma = nullptr;
    CLI::Option* o_jobs = nullptr;
    CLI::Option* o_dp = nullptr;
};

void attach_run_flags(CLI::App* sub, Flags& f) {
    f.o_config = sub->add_option("--config", f.config_path, "config file (key = value lines)");
    f.o_seed = sub->add_option("--seed", f.seed, "master seed (fallback: FEDTRACE_SEED)");
    sub->add_option("--set", f.sets, "override any config key, as key=value")
        ->take_all();
    f.o_out = sub->add_option("--out", f.out, "output location");
    f.o_view = sub->add_option("--view", f.view, "detector view: conv|struct|gated");
    f.o_agg = sub->add_option("--agg", f.agg, "aggregation: local|fedavg|ensemble");
    f.o_holdout = sub->add_option("--holdout", f.holdout,
                                  "held-out attack family, or 'none' for the iid split");
    f.o_grid = sub->add_option("--grid", f.grid, "cell grid: table1|table2|table4|table5");
    f.o_dataset = sub->add_option("--dataset", f.dataset, "existing dataset file (jsonl)");
    f.o_benign = sub->add_option("--benign-fraction", f.benign_fraction,
                                 "benign share of generated traces");
    f.o_dp = sub->add_flag("--dp", f.dp, "train with clipping and noise");
    f.o_sigma = sub->add_option("--sigma", f.sigma, "noise multiplier (implies nothing else)");
    f.o_jobs = sub->add_option("--jobs", f.jobs, "parallel grid cells");
}

RunConfig resolve(const Flags& f) {
    RunConfig cfg;
    if (!f.o_seed->count())
        if (const char* env = std::getenv("FEDTRACE_SEED"); env != nullptr)
            apply_setting(cfg, "seed", env);
    if (f.o_config->count()) load_config_into(cfg, f.config_path);
    if (f.o_seed->count()) apply_setting(cfg, "seed", f.seed);
    for (const std::string& kv : f.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.o_out->count()) apply_setting(cfg, "run.out", f.out);
    if (f.o_view->count()) apply_setting(cfg, "run.view", f.view);
    if (f.o_agg->count()) apply_setting(cfg, "run.agg", f.agg);
    if (f.o_holdout->count()) {
        if (f.holdout == "none") {
            apply_setting(cfg, "split.mode", "iid");
        } else {
            apply_setting(cfg, "split.mode", "holdout");
            apply_setting(cfg, "split.family", f.holdout);
        }
    }
    if (f.o_grid->count()) apply_setting(cfg, "run.grid", f.grid);
    if (f.o_dataset->count()) apply_setting(cfg, "run.dataset", f.dataset);
    if (f.o_benign->count()) apply_setting(cfg, "gen.benign_fraction", f.benign_fraction);
    if (f.o_dp->count()) apply_setting(cfg, "fed.dp", "on");
    if (f.o_sigma->count()) apply_setting(cfg, "fed.sigma", f.sigma);
    if (f.o_jobs->count()) apply_setting(cfg, "run.jobs", f.jobs);
    return cfg;
}

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out << content;
        if (!out.good()) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

void write_dataset_atomic(const Dataset& ds, const std::string& path) {
    const std::string tmp = path + ".tmp";
    write_dataset(ds, tmp);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void print_histogram(const Dataset& ds, int num_orgs) {
    for (int org = 1; org <= num_orgs; ++org) {
        size_t total = 0, benign = 0;
        for (const AgentTrace& t : ds.traces)
            if (t.org_id == org) {
                ++total;
                if (t.label == 0) ++benign;
            }
        std::array<int, kNumFamilies> hist = family_histogram(ds, org);
        std::cout << "org " << org << ": total " << total << ", benign " << benign;
        for (int fidx = 0; fidx < kNumFamilies; ++fidx)
            std::cout << ", " << family_name(family_from_index(fidx)) << ' ' << hist[fidx];
        std::cout << '\n';
    }
}

int cmd_generate(const Flags& f) {
    RunConfig cfg = resolve(f);
    GenConfig gen = gen_of(cfg);
    validate_gen_config(gen);
    // --out names the dataset file here; run.dataset works too
    std::string path = f.o_out->count() ? f.out : cfg.dataset_path;
    if (path.empty()) path = "traces.jsonl";
    Dataset ds = generate(gen);
    write_dataset_atomic(ds, path);
    print_histogram(ds, gen.num_orgs);
    std::cout << ds.traces.size() << " traces -> " << path << '\n';
    return 0;
}

struct Cell {
    View view;
    Aggregation agg;
    SplitSpec split;
    std::string name;
};

std::string cell_file_name(const Cell& c) {
    std::string split = c.split.mode == SplitMode::IID
                            ? "iid"
                            : "holdout_" + family_name(c.split.family);
    return std::string(view_name(c.view)) + "_" + split + "_" + aggregation_name(c.agg);
}

std::vector<Cell> build_cells(const RunConfig& cfg) {
    const SplitSpec base = split_of(cfg);
    auto iid = [&]() {
        SplitSpec s = base;
        s.mode = SplitMode::IID;
        return s;
    };
    auto holdout = [&](AttackFamily fam) {
        SplitSpec s = base;
        s.mode = SplitMode::HoldOutFamily;
        s.family = fam;
        return s;
    };

    std::vector<Cell> cells;
    auto add = [&](View v, const SplitSpec& s) { cells.push_back({v, cfg.agg, s, ""}); };
    if (cfg.grid == "single") {
        add(cfg.view, base);
    } else if (cfg.grid == "table5") {
        // per-org consistency needs conv/struct iid plus the struct hold-outs
        add(View::Conv, iid());
        add(View::Struct, iid());
        for (int fidx = 0; fidx < kNumFamilies; ++fidx)
            add(View::Struct, holdout(family_from_index(fidx)));
    } else {
        // the full view x split matrix behind the headline tables
        for (View v : {View::Conv, View::Struct, View::Gated}) {
            add(v, iid());
            for (int fidx = 0; fidx < kNumFamilies; ++fidx) add(v, holdout(family_from_index(fidx)));
        }
    }
    for (Cell& c : cells) c.name = cell_file_name(c);
    return cells;
}

int max_org(const Dataset& ds) {
    int m = 0;
    for (const AgentTrace& t : ds.traces) m = std::max(m, t.org_id);
    return m;
}

int cmd_experiment(const Flags& f) {
    RunConfig cfg = resolve(f);
    validate_run_config(cfg);

    Dataset ds;
    if (!cfg.dataset_path.empty()) {
        ds = read_dataset(cfg.dataset_path);
        cfg.num_clients = max_org(ds); // the file decides the federation size
    } else {
        ds = generate(gen_of(cfg));
    }

    fs::create_directories(fs::path(cfg.out_dir) / "cells");
    if (cfg.dataset_path.empty())
        write_dataset_atomic(ds, (fs::path(cfg.out_dir) / "traces.jsonl").string());

    const std::vector<Cell> cells = build_cells(cfg);
    const FederationConfig fed = federation_of(cfg);

    struct CellOutcome {
        std::vector<EvalEntry> entries;
        std::string round_csv;
        int error_kind = -1; // 0 config, 1 validation, 2 io, 3 other
        std::string error;
    };
    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
            CellOutcome& out = outcomes[i];
            try {
                EvalReport rep = run_protocol(ds, cells[i].view, cells[i].agg, cells[i].split, fed);
                out.entries = rep.entries;
                out.round_csv = round_log_csv(rep.round_log);
            } catch (const ConfigError& e) {
                out.error_kind = 0;
                out.error = e.what();
            } catch (const ValidationError& e) {
                out.error_kind = 1;
                out.error = e.what();
            } catch (const IoError& e) {
                out.error_kind = 2;
                out.error = e.what();
            } catch (const std::exception& e) {
                out.error_kind = 3;
                out.error = e.what();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(cfg.grid_jobs, static_cast<int>(cells.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (size_t i = 0; i < cells.size(); ++i) {
        const CellOutcome& out = outcomes[i];
        if (out.error_kind < 0) continue;
        const std::string msg = "cell " + cells[i].name + ": " + out.error;
        if (out.error_kind == 0) throw ConfigError(msg);
        if (out.error_kind == 1) throw ValidationError(msg);
        if (out.error_kind == 2) throw IoError(msg);
        throw InternalError(msg);
    }

    std::vector<EvalEntry> all;
    for (size_t i = 0; i < cells.size(); ++i) {
        const fs::path base = fs::path(cfg.out_dir) / "cells" / cells[i].name;
        write_atomic(base.string() + ".csv", entries_csv(outcomes[i].entries));
        write_atomic(base.string() + ".rounds.csv", outcomes[i].round_csv);
        all.insert(all.end(), outcomes[i].entries.begin(), outcomes[i].entries.end());
    }

    const std::string report_md = markdown_report(all);
    write_atomic((fs::path(cfg.out_dir) / "cells.csv").string(), entries_csv(all));
    write_atomic((fs::path(cfg.out_dir) / "report.md").string(), report_md);
    write_atomic((fs::path(cfg.out_dir) / "config.txt").string(),
                 serialize_config(cfg) + "# hash = " + hash_hex(config_hash(cfg)) + "\n");

    std::cout << report_md;
    std::cout << cells.size() << " cells -> " << (fs::path(cfg.out_dir) / "cells.csv").string()
              << '\n';
    return 0;
}

int cmd_selfcheck(bool corrupt_gradient) {
    SelfCheckOpts opts;
    opts.corrupt_gradient = corrupt_gradient;
    std::vector<SelfCheckResult> results = run_selfcheck(opts);
    int failed = 0;
    for (const SelfCheckResult& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " - " << r.detail << '\n';
        if (!r.pass) ++failed;
    }
    std::cout << results.size() - failed << '/' << results.size() << " checks passed\n";
    return failed == 0 ? 0 : 3;
}

int cmd_report(const std::string& cells_path, const Flags& f) {
    std::ifstream in(cells_path);
    if (!in) throw IoError("cannot read cells file '" + cells_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string md = markdown_report(entries_from_csv(buf.str()));
    if (f.o_out->count()) {
        fs::create_directories(f.out);
        write_atomic((fs::path(f.out) / "report.md").string(), md);
        std::cout << "report -> " << (fs::path(f.out) / "report.md").string() << '\n';
    } else {
        std::cout << md;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated trace detectors: generate, train, evaluate"};
    app.require_subcommand(1);

    Flags gen_f, exp_f, rep_f;
    bool corrupt_gradient = false;
    std::string cells_path;

    CLI::App* gen = app.add_subcommand("generate", "write a synthetic trace dataset");
    attach_run_flags(gen, gen_f);
    CLI::App* exp = app.add_subcommand("experiment", "train and evaluate a cell grid");
    attach_run_flags(exp, exp_f);
    CLI::App* chk = app.add_subcommand("selfcheck", "run the built-in property suite");
    chk->add_flag("--corrupt-gradient", corrupt_gradient,
                  "negative control: injects a gradient fault that must be caught");
    CLI::App* rep = app.add_subcommand("report", "re-render markdown from a cells csv");
    rep->add_option("cells", cells_path, "cells csv produced by experiment")->required();
    attach_run_flags(rep, rep_f);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(gen_f);
        if (exp->parsed()) return cmd_experiment(exp_f);
        if (chk->parsed()) return cmd_selfcheck(corrupt_gradient);
        if (rep->parsed()) return cmd_report(cells_path, rep_f);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "assertion failure: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
