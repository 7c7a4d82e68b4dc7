#pragma once

// CSV and decision trace serialization for the command line tool. Every CSV
// starts with a comment line carrying the config hash and seed, then a fixed
// header row. Doubles are written with %.17g so reruns are byte comparable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ditcache/cache_policy.hpp"
#include "ditcache/config.hpp"
#include "ditcache/experiments.hpp"

namespace ditcache {

inline std::string csv_comment_line(const RunConfig& cfg) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "# config_hash=%016llx seed=%llu\n",
                  static_cast<unsigned long long>(config_hash(cfg)),
                  static_cast<unsigned long long>(cfg.run.seed));
    return buf;
}

namespace detail {

inline std::string csv_cell(double v) { return fmt_double(v); }
inline std::string csv_cell(int v) { return std::to_string(v); }
inline std::string csv_cell(long v) { return std::to_string(v); }
inline std::string csv_cell(bool v) { return v ? "1" : "0"; }

inline std::string report_cells(const RunReport& r) {
    return csv_cell(r.num_steps) + "," + csv_cell(r.hit_count) + "," + csv_cell(r.miss_count) +
           "," + csv_cell(r.hit_rate) + "," + csv_cell(r.total_block_evals) + "," +
           csv_cell(r.blocks_skipped) + "," + csv_cell(r.speedup_proxy) + "," +
           csv_cell(r.l2_vs_reference) + "," + csv_cell(r.psnr_vs_reference) + "," +
           csv_cell(r.ssim_vs_reference);
}

constexpr const char* report_header =
    "steps,hits,misses,hit_rate,block_evals,blocks_skipped,speedup_proxy,"
    "l2_vs_reference,psnr_vs_reference,ssim_vs_reference";

}  // namespace detail

inline std::string run_report_csv(const RunConfig& cfg, const RunReport& r) {
    return csv_comment_line(cfg) + detail::report_header + "\n" + detail::report_cells(r) + "\n";
}

// One decision per line, fixed field order, absent optionals written as "-".
inline std::string trace_lines(const std::vector<StepDecision>& trace) {
    auto opt = [](const std::optional<double>& v) {
        return v ? detail::fmt_double(*v) : std::string("-");
    };
    std::string out;
    for (const StepDecision& d : trace) {
        out += "t=" + std::to_string(d.t);
        out += " verdict=";
        out += (d.verdict == Verdict::Hit ? "hit" : "miss");
        out += " reason=";
        out += reason_name(d.reason);
        out += " scale=" + detail::fmt_double(d.scale);
        out += " tau_eff=" + detail::fmt_double(d.tau_eff);
        out += " distance=" + opt(d.distance);
        out += " accumulated=" + detail::fmt_double(d.accumulated_after);
        out += " delta_low=" + opt(d.delta_low);
        out += " delta_high=" + opt(d.delta_high);
        out += "\n";
    }
    return out;
}

inline std::string sensitivity_csv(const RunConfig& cfg, const SensitivityCurve& curve) {
    std::string out = csv_comment_line(cfg) + "t,mean_error,samples\n";
    for (size_t i = 0; i < curve.timesteps.size(); ++i) {
        out += detail::csv_cell(curve.timesteps[i]) + "," +
               detail::csv_cell(curve.mean_error[i]) + "," + detail::csv_cell(curve.num_samples) +
               "\n";
    }
    return out;
}

inline std::string cascade_csv(const RunConfig& cfg, const CascadeTable& table) {
    std::string out = csv_comment_line(cfg) + "k,e_consecutive,e_random,trials\n";
    for (const CascadeRow& r : table.rows) {
        out += detail::csv_cell(r.k) + "," + detail::csv_cell(r.mean_consecutive) + "," +
               detail::csv_cell(r.mean_random) + "," + detail::csv_cell(table.trials) + "\n";
    }
    return out;
}

inline std::string spectral_csv(const RunConfig& cfg, const std::vector<VolatilityRow>& rows) {
    std::string out = csv_comment_line(cfg) + "band,coefficients,delta\n";
    for (const VolatilityRow& r : rows) {
        out += detail::csv_cell(r.band) + "," + detail::csv_cell(r.coefficients) + "," +
               detail::csv_cell(r.delta) + "\n";
    }
    return out;
}

inline std::string ablation_csv(const RunConfig& cfg, const std::vector<AblationRow>& rows) {
    std::string out = csv_comment_line(cfg);
    out += "tads,ceb,fdc,";
    out += detail::report_header;
    out += "\n";
    for (const AblationRow& r : rows) {
        out += detail::csv_cell(r.tads) + "," + detail::csv_cell(r.ceb) + "," +
               detail::csv_cell(r.fdc) + "," + detail::report_cells(r.report) + "\n";
    }
    return out;
}

inline std::string sweep_csv(const RunConfig& cfg, const std::vector<SweepRow>& rows) {
    std::string out = csv_comment_line(cfg);
    out += "tau,hit_rate,speedup_proxy,l2_vs_reference,psnr_vs_reference,ssim_vs_reference\n";
    for (const SweepRow& r : rows) {
        out += detail::csv_cell(r.tau) + "," + detail::csv_cell(r.report.hit_rate) + "," +
               detail::csv_cell(r.report.speedup_proxy) + "," +
               detail::csv_cell(r.report.l2_vs_reference) + "," +
               detail::csv_cell(r.report.psnr_vs_reference) + "," +
               detail::csv_cell(r.report.ssim_vs_reference) + "\n";
    }
    return out;
}

inline std::string error_growth_csv(const RunConfig& cfg, const ErrorGrowthTable& table) {
    std::string out = csv_comment_line(cfg);
    out += "c,measured,bound,bound_ok,probes_used,anchor,gain_product,fitted_slope\n";
    double slope = table.fitted_slope ? *table.fitted_slope
                                      : std::numeric_limits<double>::quiet_NaN();
    for (const ErrorGrowthRow& r : table.rows) {
        out += detail::csv_cell(r.c) + "," + detail::csv_cell(r.measured) + "," +
               detail::csv_cell(r.bound) + "," + detail::csv_cell(r.bound_ok) + "," +
               detail::csv_cell(r.probes_used) + "," + detail::csv_cell(table.anchor) + "," +
               detail::csv_cell(table.gain_product) + "," + detail::csv_cell(slope) + "\n";
    }
    return out;
}

inline std::string false_positive_csv(const RunConfig& cfg,
                                      const std::vector<FalsePositiveRow>& rows) {
    std::string out = csv_comment_line(cfg) + "rho,fp_single,fp_dual,trials\n";
    for (const FalsePositiveRow& r : rows) {
        out += detail::csv_cell(r.rho) + "," + detail::csv_cell(r.fp_single) + "," +
               detail::csv_cell(r.fp_dual) + "," + detail::csv_cell(r.trials) + "\n";
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace ditcache
