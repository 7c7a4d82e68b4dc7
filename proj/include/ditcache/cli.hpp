#pragma once

// Subcommand dispatch for the ditcache tool. Each subcommand materializes the
// model from the effective config, runs one study, and writes its CSV (plus a
// decision trace for policy-backed runs) into the output directory.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ditcache/config.hpp"
#include "ditcache/experiments.hpp"
#include "ditcache/report_io.hpp"

namespace ditcache {

inline const std::vector<std::string>& subcommand_names() {
    static const std::vector<std::string> names = {
        "run", "ablate", "sweep", "sensitivity", "cascade", "spectral", "errgrowth", "fdcfp",
    };
    return names;
}

namespace detail {

inline int middle_block(int num_blocks) { return (num_blocks + 1) / 2; }

struct RunArtifacts {
    RunReport report;
    const std::vector<StepDecision>* trace = nullptr;  // null for traceless controllers
};

inline RunArtifacts execute_single_run(const RunConfig& cfg, const ModelWeights& w,
                                       std::unique_ptr<StepController>& holder) {
    if (cfg.run.controller == "policy") {
        holder = std::make_unique<PolicyController>(cfg.policy);
    } else {
        BaselineSpec spec;
        if (cfg.run.controller == "nocache") spec.kind = BaselineKind::NoCache;
        else if (cfg.run.controller == "uniform") spec.kind = BaselineKind::UniformThreshold;
        else if (cfg.run.controller == "fixed-interval") spec.kind = BaselineKind::FixedInterval;
        else spec.kind = BaselineKind::FirstBlockProxy;
        spec.interval = cfg.run.interval;
        spec.fb_tau = cfg.run.fb_tau;
        holder = baseline_policy(spec, cfg.policy, &w);
    }
    SamplerResult run = sampler_run(w, *holder, cfg.run.seed);
    NoCacheController nc;
    SamplerResult ref = sampler_run(w, nc, cfg.run.seed);
    RunArtifacts a;
    a.report = build_run_report(run, ref.final_sample, w.config.num_blocks);
    if (auto* pc = dynamic_cast<PolicyController*>(holder.get())) a.trace = &pc->trace();
    return a;
}

}  // namespace detail

// Runs one subcommand against a validated config and returns the paths of
// the files written.
inline std::vector<std::filesystem::path> run_subcommand(const std::string& name,
                                                         const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.run.out);
    fs::create_directories(out_dir);
    ModelWeights w = init_model(cfg.model);
    const int L = cfg.model.num_blocks;
    std::vector<fs::path> written;

    auto emit = [&](const char* file, const std::string& content) {
        fs::path p = out_dir / file;
        write_text_file(p, content);
        written.push_back(p);
    };

    if (name == "run") {
        std::unique_ptr<StepController> holder;
        detail::RunArtifacts a = detail::execute_single_run(cfg, w, holder);
        emit("run_report.csv", run_report_csv(cfg, a.report));
        if (a.trace) emit("decisions.txt", csv_comment_line(cfg) + trace_lines(*a.trace));
    } else if (name == "ablate") {
        emit("ablation.csv", ablation_csv(cfg, ablation_grid(w, cfg.policy, cfg.run.seed)));
    } else if (name == "sweep") {
        emit("sweep.csv",
             sweep_csv(cfg, threshold_sweep(w, cfg.policy, cfg.study.taus, cfg.run.seed)));
    } else if (name == "sensitivity") {
        emit("sensitivity.csv",
             sensitivity_csv(cfg, temporal_sensitivity(w, cfg.study.samples, cfg.run.seed)));
    } else if (name == "cascade") {
        int k_max = cfg.study.k_max > 0 ? cfg.study.k_max : L;
        std::vector<int> ks;
        for (int k = 1; k <= k_max; ++k) ks.push_back(k);
        emit("cascade.csv", cascade_csv(cfg, cascade_study(w, ks, cfg.study.trials, cfg.run.seed)));
    } else if (name == "spectral") {
        int block = cfg.study.block > 0 ? cfg.study.block : detail::middle_block(L);
        emit("spectral.csv",
             spectral_csv(cfg, spectral_volatility_study(w, block, cfg.study.bands, cfg.run.seed)));
    } else if (name == "errgrowth") {
        emit("errgrowth.csv",
             error_growth_csv(cfg, error_growth_study(w, cfg.study.c_values, cfg.study.anchor,
                                                      cfg.study.probes, cfg.run.seed)));
    } else if (name == "fdcfp") {
        emit("fdcfp.csv",
             false_positive_csv(
                 cfg, fdc_false_positive_study(cfg.study.rhos, cfg.study.fp_trials,
                                               cfg.policy.tau_base, cfg.policy.gamma_low,
                                               cfg.policy.gamma_high, cfg.run.seed)));
    } else {
        throw ConfigError("unknown subcommand: " + name);
    }
    return written;
}

inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"frequency aware cache policy laboratory for a toy diffusion transformer"};
    app.require_subcommand(1);

    struct SubOptions {
        CLI::App* sub = nullptr;
        std::string config_path;
        std::string out_dir;
        uint64_t seed = 0;
    };
    std::vector<SubOptions> subs(subcommand_names().size());
    for (size_t i = 0; i < subcommand_names().size(); ++i) {
        const std::string& name = subcommand_names()[i];
        subs[i].sub = app.add_subcommand(name, name + " study");
        subs[i].sub->add_option("--config", subs[i].config_path, "settings file (key = value sections)");
        subs[i].sub->add_option("--out", subs[i].out_dir, "output directory");
        subs[i].sub->add_option("--seed", subs[i].seed, "run seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const SubOptions* active = nullptr;
        for (const SubOptions& s : subs) {
            if (s.sub->parsed()) active = &s;
        }
        if (!active) return 2;
        RunConfig cfg = active->config_path.empty()
                            ? load_config_text("", "<defaults>")
                            : load_config(active->config_path);
        if (active->sub->count("--seed") > 0) cfg.run.seed = active->seed;
        if (active->sub->count("--out") > 0) cfg.run.out = active->out_dir;
        finalize_config(cfg);
        cfg.validate();
        std::vector<std::filesystem::path> files = run_subcommand(active->sub->get_name(), cfg);
        for (const auto& p : files) std::printf("wrote %s\n", p.string().c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace ditcache
