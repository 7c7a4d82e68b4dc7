#pragma once

// Configuration for the command line tool: an INI style text file with
// [model], [policy], [run], [study] sections, DITCACHE_* environment
// overrides, and a stable hash of the effective settings. Precedence is
// defaults, then file, then environment, then explicit command line flags.

#include <cctype>
#include <charconv>
#include <climits>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditcache/cache_policy.hpp"
#include "ditcache/toy_dit.hpp"

extern "C" char** environ;

namespace ditcache {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StudyParams {
    int samples = 5;
    int trials = 24;
    std::vector<double> taus{0.3, 0.4, 0.5, 0.6, 0.8};
    std::vector<int> c_values{1, 2, 3, 4, 5};
    int anchor = 5;
    int probes = 8;
    std::vector<double> rhos{0.0, 0.5, 0.9};
    int fp_trials = 10000;
    int bands = 8;
    int block = 0;  // 0 picks the middle block
    int k_max = 0;  // 0 runs k up to the full depth
};

struct RunParams {
    uint64_t seed = 42;
    std::string out = "out";
    std::string controller = "policy";
    int interval = 1;
    double fb_tau = 0.12;
};

struct RunConfig {
    ModelConfig model;
    PolicyConfig policy;
    StudyParams study;
    RunParams run;
    bool model_seed_set = false;

    void validate() const {
        try {
            model.validate();
            policy.validate();
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (study.samples < 1) throw ConfigError("study.samples must be >= 1");
        if (study.trials < 1) throw ConfigError("study.trials must be >= 1");
        if (study.taus.empty()) throw ConfigError("study.taus must not be empty");
        for (double t : study.taus) {
            if (!(t >= 0.0) || !std::isfinite(t)) {
                throw ConfigError("study.taus entries must be finite and >= 0");
            }
        }
        if (study.c_values.empty()) throw ConfigError("study.c_values must not be empty");
        for (int c : study.c_values) {
            if (c < 0) throw ConfigError("study.c_values entries must be >= 0");
        }
        if (study.anchor < 0) throw ConfigError("study.anchor must be >= 0");
        if (study.probes < 1) throw ConfigError("study.probes must be >= 1");
        if (study.rhos.empty()) throw ConfigError("study.rhos must not be empty");
        for (double r : study.rhos) {
            if (!(r >= 0.0) || !(r <= 1.0)) throw ConfigError("study.rhos entries must lie in [0, 1]");
        }
        if (study.fp_trials < 1000) throw ConfigError("study.fp_trials must be >= 1000");
        if (study.bands < 1) throw ConfigError("study.bands must be >= 1");
        if (study.block < 0 || study.block > model.num_blocks) {
            throw ConfigError("study.block must lie in [0, model.blocks]");
        }
        if (study.k_max < 0 || study.k_max > model.num_blocks) {
            throw ConfigError("study.k_max must lie in [0, model.blocks]");
        }
        if (run.out.empty()) throw ConfigError("run.out must not be empty");
        if (run.controller != "policy" && run.controller != "nocache" &&
            run.controller != "uniform" && run.controller != "fixed-interval" &&
            run.controller != "first-block") {
            throw ConfigError(
                "run.controller must be one of policy, nocache, uniform, "
                "fixed-interval, first-block");
        }
        if (run.interval < 0) throw ConfigError("run.interval must be >= 0");
        if (!(run.fb_tau >= 0.0) || !std::isfinite(run.fb_tau)) {
            throw ConfigError("run.fb_tau must be finite and >= 0");
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

[[noreturn]] inline void bad_value(const std::string& where, const std::string& section,
                                   const std::string& key, const std::string& value) {
    throw ConfigError(where + ": invalid value '" + value + "' for " + section + "." + key);
}

inline long long parse_ll(const std::string& where, const std::string& section,
                          const std::string& key, const std::string& value) {
    long long out = 0;
    const char* b = value.data();
    const char* e = b + value.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) bad_value(where, section, key, value);
    return out;
}

inline int parse_int(const std::string& where, const std::string& section,
                     const std::string& key, const std::string& value) {
    long long v = parse_ll(where, section, key, value);
    if (v < INT_MIN || v > INT_MAX) bad_value(where, section, key, value);
    return static_cast<int>(v);
}

inline uint64_t parse_u64(const std::string& where, const std::string& section,
                          const std::string& key, const std::string& value) {
    uint64_t out = 0;
    const char* b = value.data();
    const char* e = b + value.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) bad_value(where, section, key, value);
    return out;
}

inline double parse_double(const std::string& where, const std::string& section,
                           const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* b = value.data();
    const char* e = b + value.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) bad_value(where, section, key, value);
    return out;
}

inline bool parse_bool(const std::string& where, const std::string& section,
                       const std::string& key, const std::string& value) {
    std::string v = lower(value);
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    bad_value(where, section, key, value);
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

inline std::vector<double> parse_double_list(const std::string& where, const std::string& section,
                                             const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const std::string& p : split_list(value)) {
        if (p.empty()) bad_value(where, section, key, value);
        out.push_back(parse_double(where, section, key, p));
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& where, const std::string& section,
                                       const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const std::string& p : split_list(value)) {
        if (p.empty()) bad_value(where, section, key, value);
        out.push_back(parse_int(where, section, key, p));
    }
    return out;
}

}  // namespace detail

// Applies one key = value setting. `where` names the source location (file
// line or environment variable) for error messages.
inline void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key,
                             const std::string& value, const std::string& where) {
    using namespace detail;
    if (section == "model") {
        if (key == "blocks") cfg.model.num_blocks = parse_int(where, section, key, value);
        else if (key == "dim") cfg.model.hidden_dim = parse_int(where, section, key, value);
        else if (key == "tokens") cfg.model.token_count = parse_int(where, section, key, value);
        else if (key == "heads") cfg.model.num_heads = parse_int(where, section, key, value);
        else if (key == "weight_scale") cfg.model.weight_scale = parse_double(where, section, key, value);
        else if (key == "steps") cfg.model.num_steps = parse_int(where, section, key, value);
        else if (key == "seed") {
            cfg.model.seed = parse_u64(where, section, key, value);
            cfg.model_seed_set = true;
        } else {
            throw ConfigError(where + ": unknown key " + section + "." + key);
        }
        return;
    }
    if (section == "policy") {
        if (key == "tau") cfg.policy.tau_base = parse_double(where, section, key, value);
        else if (key == "s_min") cfg.policy.s_min = parse_double(where, section, key, value);
        else if (key == "s_max") cfg.policy.s_max = parse_double(where, section, key, value);
        else if (key == "c_max") cfg.policy.c_max = parse_int(where, section, key, value);
        else if (key == "split_ratio") cfg.policy.split_ratio = parse_double(where, section, key, value);
        else if (key == "gamma_low") cfg.policy.gamma_low = parse_double(where, section, key, value);
        else if (key == "gamma_high") cfg.policy.gamma_high = parse_double(where, section, key, value);
        else if (key == "poly") cfg.policy.poly.coeffs = parse_double_list(where, section, key, value);
        else if (key == "tads") cfg.policy.enable_tads = parse_bool(where, section, key, value);
        else if (key == "ceb") cfg.policy.enable_ceb = parse_bool(where, section, key, value);
        else if (key == "fdc") cfg.policy.enable_fdc = parse_bool(where, section, key, value);
        else throw ConfigError(where + ": unknown key " + section + "." + key);
        return;
    }
    if (section == "run") {
        if (key == "seed") cfg.run.seed = parse_u64(where, section, key, value);
        else if (key == "out") cfg.run.out = value;
        else if (key == "controller") cfg.run.controller = detail::lower(value);
        else if (key == "interval") cfg.run.interval = parse_int(where, section, key, value);
        else if (key == "fb_tau") cfg.run.fb_tau = parse_double(where, section, key, value);
        else throw ConfigError(where + ": unknown key " + section + "." + key);
        return;
    }
    if (section == "study") {
        if (key == "samples") cfg.study.samples = parse_int(where, section, key, value);
        else if (key == "trials") cfg.study.trials = parse_int(where, section, key, value);
        else if (key == "taus") cfg.study.taus = parse_double_list(where, section, key, value);
        else if (key == "c_values") cfg.study.c_values = parse_int_list(where, section, key, value);
        else if (key == "anchor") cfg.study.anchor = parse_int(where, section, key, value);
        else if (key == "probes") cfg.study.probes = parse_int(where, section, key, value);
        else if (key == "rhos") cfg.study.rhos = parse_double_list(where, section, key, value);
        else if (key == "fp_trials") cfg.study.fp_trials = parse_int(where, section, key, value);
        else if (key == "bands") cfg.study.bands = parse_int(where, section, key, value);
        else if (key == "block") cfg.study.block = parse_int(where, section, key, value);
        else if (key == "k_max") cfg.study.k_max = parse_int(where, section, key, value);
        else throw ConfigError(where + ": unknown key " + section + "." + key);
        return;
    }
    throw ConfigError(where + ": unknown section [" + section + "]");
}

inline void parse_config_into(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        std::string where = source + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            std::string name = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
            if (name != "model" && name != "policy" && name != "run" && name != "study") {
                throw ConfigError(where + ": unknown section [" + name + "]");
            }
            section = name;
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": expected key = value");
        if (section.empty()) {
            throw ConfigError(where + ": key " + key + " appears before any [section] header");
        }
        apply_config_key(cfg, section, key, value, where);
    }
}

// Environment variables of the form DITCACHE_<SECTION>_<KEY> override file
// settings; any other DITCACHE_ variable is rejected so typos fail loudly.
inline void apply_env_overrides(RunConfig& cfg) {
    static const std::string prefix = "DITCACHE_";
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        if (entry.compare(0, prefix.size(), prefix) != 0) continue;
        size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(0, eq);
        std::string value = entry.substr(eq + 1);
        std::string rest = name.substr(prefix.size());
        size_t us = rest.find('_');
        std::string where = "environment variable " + name;
        if (us == std::string::npos || us == 0 || us + 1 >= rest.size()) {
            throw ConfigError(where + " does not name a known setting");
        }
        std::string section = detail::lower(rest.substr(0, us));
        std::string key = detail::lower(rest.substr(us + 1));
        try {
            apply_config_key(cfg, section, key, value, where);
        } catch (const ConfigError& err) {
            std::string msg(err.what());
            if (msg.find("unknown") != std::string::npos) {
                throw ConfigError(where + " does not name a known setting");
            }
            throw;
        }
    }
}

// Later stages may adjust run.seed or run.out, so this is safe to call again:
// the model seed follows the run seed only while it was never set explicitly,
// and the policy always sees the model's step count.
inline void finalize_config(RunConfig& cfg) {
    if (!cfg.model_seed_set) cfg.model.seed = cfg.run.seed;
    cfg.policy.num_steps = cfg.model.num_steps;
}

inline RunConfig load_config_text(const std::string& text, const std::string& source = "<config>") {
    RunConfig cfg;
    parse_config_into(cfg, text, source);
    apply_env_overrides(cfg);
    finalize_config(cfg);
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), path);
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace detail

// Canonical one-line-per-setting rendering of everything that affects
// results. run.out is deliberately excluded so the same experiment written to
// two directories carries the same hash.
inline std::vector<std::string> canonical_config_lines(const RunConfig& cfg) {
    using detail::fmt_double;
    std::vector<std::string> lines;
    lines.push_back("model.blocks=" + std::to_string(cfg.model.num_blocks));
    lines.push_back("model.dim=" + std::to_string(cfg.model.hidden_dim));
    lines.push_back("model.tokens=" + std::to_string(cfg.model.token_count));
    lines.push_back("model.heads=" + std::to_string(cfg.model.num_heads));
    lines.push_back("model.weight_scale=" + fmt_double(cfg.model.weight_scale));
    lines.push_back("model.steps=" + std::to_string(cfg.model.num_steps));
    lines.push_back("model.seed=" + std::to_string(cfg.model.seed));
    lines.push_back("policy.tau=" + fmt_double(cfg.policy.tau_base));
    lines.push_back("policy.s_min=" + fmt_double(cfg.policy.s_min));
    lines.push_back("policy.s_max=" + fmt_double(cfg.policy.s_max));
    lines.push_back("policy.c_max=" + std::to_string(cfg.policy.c_max));
    lines.push_back("policy.split_ratio=" + fmt_double(cfg.policy.split_ratio));
    lines.push_back("policy.gamma_low=" + fmt_double(cfg.policy.gamma_low));
    lines.push_back("policy.gamma_high=" + fmt_double(cfg.policy.gamma_high));
    lines.push_back("policy.poly=" + detail::join_doubles(cfg.policy.poly.coeffs));
    lines.push_back("policy.tads=" + std::string(cfg.policy.enable_tads ? "1" : "0"));
    lines.push_back("policy.ceb=" + std::string(cfg.policy.enable_ceb ? "1" : "0"));
    lines.push_back("policy.fdc=" + std::string(cfg.policy.enable_fdc ? "1" : "0"));
    lines.push_back("run.seed=" + std::to_string(cfg.run.seed));
    lines.push_back("run.controller=" + cfg.run.controller);
    lines.push_back("run.interval=" + std::to_string(cfg.run.interval));
    lines.push_back("run.fb_tau=" + fmt_double(cfg.run.fb_tau));
    lines.push_back("study.samples=" + std::to_string(cfg.study.samples));
    lines.push_back("study.trials=" + std::to_string(cfg.study.trials));
    lines.push_back("study.taus=" + detail::join_doubles(cfg.study.taus));
    lines.push_back("study.c_values=" + detail::join_ints(cfg.study.c_values));
    lines.push_back("study.anchor=" + std::to_string(cfg.study.anchor));
    lines.push_back("study.probes=" + std::to_string(cfg.study.probes));
    lines.push_back("study.rhos=" + detail::join_doubles(cfg.study.rhos));
    lines.push_back("study.fp_trials=" + std::to_string(cfg.study.fp_trials));
    lines.push_back("study.bands=" + std::to_string(cfg.study.bands));
    lines.push_back("study.block=" + std::to_string(cfg.study.block));
    lines.push_back("study.k_max=" + std::to_string(cfg.study.k_max));
    return lines;
}

inline uint64_t config_hash(const RunConfig& cfg) {
    uint64_t h = 14695981039346656037ull;
    for (const std::string& line : canonical_config_lines(cfg)) {
        for (char c : line) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ditcache
