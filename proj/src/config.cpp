#include "fedtrace/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedtrace/errors.hpp"

namespace fedtrace {
namespace {

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw ConfigError("config key '" + key + "': bad value '" + value + "'");
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size()) bad_value(key, value);
    return out;
}

int parse_int(const std::string& key, const std::string& value) {
    int out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size()) bad_value(key, value);
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    if (value == "inf") return std::numeric_limits<double>::infinity();
    double out = 0.0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size()) bad_value(key, value);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    bad_value(key, value);
}

const char* split_mode_name(SplitMode m) { return m == SplitMode::IID ? "iid" : "holdout"; }

SplitMode split_mode_from_name(const std::string& name) {
    if (name == "iid") return SplitMode::IID;
    if (name == "holdout") return SplitMode::HoldOutFamily;
    throw ConfigError("unknown split mode '" + name + "' (expected iid|holdout)");
}

} // namespace

GenConfig gen_of(const RunConfig& cfg) {
    GenConfig g = cfg.gen;
    g.seed = cfg.seed;
    return g;
}

FederationConfig federation_of(const RunConfig& cfg) {
    FederationConfig f;
    f.num_clients = cfg.num_clients;
    f.rounds = cfg.rounds;
    f.local_epochs = cfg.local_epochs;
    f.batch_size = cfg.batch_size;
    f.optimizer.lr = cfg.lr;
    f.jobs = cfg.train_jobs;
    f.seed = cfg.seed;
    if (cfg.dp_on) f.dp = cfg.dp;
    return f;
}

SplitSpec split_of(const RunConfig& cfg) {
    SplitSpec s;
    s.mode = cfg.split_mode;
    s.family = cfg.holdout;
    s.train_fraction = cfg.train_fraction;
    s.seed = cfg.seed;
    return s;
}

void validate_run_config(const RunConfig& cfg) {
    validate_gen_config(gen_of(cfg));
    validate_federation_config(federation_of(cfg));
    validate_split_spec(split_of(cfg));
    if (cfg.dataset_path.empty() && cfg.gen.num_orgs != cfg.num_clients)
        throw ConfigError("gen.num_orgs must equal fed.num_clients when generating in-process");
    if (cfg.grid != "single" && cfg.grid != "table1" && cfg.grid != "table2" &&
        cfg.grid != "table4" && cfg.grid != "table5")
        throw ConfigError("run.grid must be single|table1|table2|table4|table5");
    if (cfg.grid_jobs < 1) throw ConfigError("run.jobs must be at least 1");
    if (cfg.out_dir.empty()) throw ConfigError("run.out must not be empty");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) try {
    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "gen.num_orgs") cfg.gen.num_orgs = parse_int(key, value);
    else if (key == "gen.traces_per_org") cfg.gen.traces_per_org = parse_int(key, value);
    else if (key == "gen.benign_fraction") cfg.gen.benign_fraction = parse_double(key, value);
    else if (key == "gen.dominant_family_share")
        cfg.gen.dominant_family_share = parse_double(key, value);
    else if (key == "fed.num_clients") cfg.num_clients = parse_int(key, value);
    else if (key == "fed.rounds") cfg.rounds = parse_int(key, value);
    else if (key == "fed.local_epochs") cfg.local_epochs = parse_int(key, value);
    else if (key == "fed.batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "fed.lr") cfg.lr = parse_double(key, value);
    else if (key == "fed.jobs") cfg.train_jobs = parse_int(key, value);
    else if (key == "fed.dp") cfg.dp_on = parse_bool(key, value);
    else if (key == "fed.clip_norm") cfg.dp.clip_norm = parse_double(key, value);
    else if (key == "fed.sigma") cfg.dp.noise_multiplier = parse_double(key, value);
    else if (key == "fed.delta") cfg.dp.delta = parse_double(key, value);
    else if (key == "split.mode") cfg.split_mode = split_mode_from_name(value);
    else if (key == "split.family") cfg.holdout = family_from_name(value);
    else if (key == "split.train_fraction") cfg.train_fraction = parse_double(key, value);
    else if (key == "run.view") cfg.view = view_from_name(value);
    else if (key == "run.agg") cfg.agg = aggregation_from_name(value);
    else if (key == "run.dataset") cfg.dataset_path = value;
    else if (key == "run.out") cfg.out_dir = value;
    else if (key == "run.grid") cfg.grid = value;
    else if (key == "run.jobs") cfg.grid_jobs = parse_int(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
} catch (const ValidationError& e) {
    // name lookups (family, view, ...) report validation errors; in a config
    // they are configuration mistakes
    throw ConfigError("config key '" + key + "': " + e.what());
}

void parse_config_into(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        try {
            apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    RunConfig cfg;
    parse_config_into(cfg, text, source);
    return cfg;
}

void load_config_into(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    parse_config_into(cfg, buf.str(), path);
}

RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    load_config_into(cfg, path);
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "seed = " << cfg.seed << '\n';
    os << "gen.num_orgs = " << cfg.gen.num_orgs << '\n';
    os << "gen.traces_per_org = " << cfg.gen.traces_per_org << '\n';
    os << "gen.benign_fraction = " << fmt_double(cfg.gen.benign_fraction) << '\n';
    os << "gen.dominant_family_share = " << fmt_double(cfg.gen.dominant_family_share) << '\n';
    os << "fed.num_clients = " << cfg.num_clients << '\n';
    os << "fed.rounds = " << cfg.rounds << '\n';
    os << "fed.local_epochs = " << cfg.local_epochs << '\n';
    os << "fed.batch_size = " << cfg.batch_size << '\n';
    os << "fed.lr = " << fmt_double(cfg.lr) << '\n';
    os << "fed.jobs = " << cfg.train_jobs << '\n';
    os << "fed.dp = " << (cfg.dp_on ? "on" : "off") << '\n';
    os << "fed.clip_norm = " << fmt_double(cfg.dp.clip_norm) << '\n';
    os << "fed.sigma = " << fmt_double(cfg.dp.noise_multiplier) << '\n';
    os << "fed.delta = " << fmt_double(cfg.dp.delta) << '\n';
    os << "split.mode = " << split_mode_name(cfg.split_mode) << '\n';
    os << "split.family = " << family_name(cfg.holdout) << '\n';
    os << "split.train_fraction = " << fmt_double(cfg.train_fraction) << '\n';
    os << "run.view = " << view_name(cfg.view) << '\n';
    os << "run.agg = " << aggregation_name(cfg.agg) << '\n';
    os << "run.dataset = " << cfg.dataset_path << '\n';
    os << "run.out = " << cfg.out_dir << '\n';
    os << "run.grid = " << cfg.grid << '\n';
    os << "run.jobs = " << cfg.grid_jobs << '\n';
    return os.str();
}

uint64_t config_hash(const RunConfig& cfg) {
    const std::string text = serialize_config(cfg);
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace fedtrace
