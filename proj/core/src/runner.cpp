#include "qlink/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <fstream>
#include <sstream>
#include <thread>

#include "qlink/config.hpp"
#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"

namespace qlink {

namespace fs = std::filesystem;

std::string default_out_dir() {
    const char* env = std::getenv("QLINK_OUT_DIR");
    return env && *env ? std::string(env) : std::string("qlink-out");
}

std::uint64_t resolve_trials(const LinkConfig& cfg, const RunOptions& opt) {
    if (opt.trials) return *opt.trials;
    if (opt.duration_s) return session_trials(cfg, *opt.duration_s);
    if (cfg.run.trials > 0) return cfg.run.trials;
    if (cfg.run.duration_s > 0.0) return session_trials(cfg, cfg.run.duration_s);
    throw ValidationError("run.trials", "set run.trials or run.duration_s (or --trials / --duration-s)");
}

namespace {

int shard_count(const RunOptions& opt, std::uint64_t trials) {
    int n = opt.shards;
    if (n <= 0) n = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u));
    if (trials < 100000) n = 1;
    return n;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

void write_json(const fs::path& p, const Json& j) {
    auto os = open_out(p);
    os << j.dump(2) << '\n';
}

Json visibility_json(const VisibilityEstimate& v) {
    Json j;
    j["value"] = number_or_null(v.V);
    j["sigma"] = number_or_null(v.sigma_V);
    j["period"] = number_or_null(v.period);
    j["sigma_period"] = number_or_null(v.sigma_period);
    j["chi2"] = number_or_null(v.chi2);
    j["dof"] = v.dof;
    return j;
}

std::optional<VisibilityEstimate> try_fit(const FringeDataset& d, PeriodMode mode, double period) {
    try {
        bool any = false;
        for (double s : d.singles) any = any || s > 0.0;
        if (!any) return std::nullopt;
        return fit_fringe(d, mode, period);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

double clamp_v(double v) { return std::clamp(v, -1.0, 1.0); }

struct SessionFits {
    std::optional<VisibilityEstimate> vz;
    std::optional<VisibilityEstimate> vz_free;
    std::optional<VisibilityEstimate> vx;
    std::optional<VisibilityEstimate> vx_free;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
    double fidelity_sigma = std::numeric_limits<double>::quiet_NaN();
};

SessionFits fit_session(const LinkConfig& cfg, const SessionResult& r) {
    SessionFits f;
    const double tl = larmor_period_us(cfg.node);
    f.vz = try_fit(fringe_dataset(cfg, r, ReadoutBasis::z), PeriodMode::fixed, 90.0);
    f.vz_free = try_fit(fringe_dataset(cfg, r, ReadoutBasis::z), PeriodMode::free, 90.0);
    f.vx = try_fit(fringe_dataset(cfg, r, ReadoutBasis::x), PeriodMode::fixed, tl);
    f.vx_free = try_fit(fringe_dataset(cfg, r, ReadoutBasis::x), PeriodMode::free, tl);
    if (f.vz && f.vx) {
        f.fidelity = fidelity_from_visibilities(clamp_v(f.vz->V), clamp_v(f.vx->V));
        f.fidelity_sigma = fidelity_sigma(f.vz->sigma_V, f.vx->sigma_V);
    }
    return f;
}

double histogram_snr(const Histogram& h, SnrMode mode) {
    if (h.total() == 0) return std::numeric_limits<double>::quiet_NaN();
    return snr_from_histogram(h, mode).snr;
}

}  // namespace

Json summarize(const LinkConfig& cfg, const SessionResult& r, std::uint64_t seed) {
    const Schedule sch = build_schedule(cfg);
    const LinkPrediction pred = predict(cfg);
    const SessionFits fits = fit_session(cfg, r);

    Json j;
    j["schema_version"] = kSummarySchemaVersion;
    j["seed"] = seed;
    j["trials"] = r.trials;
    j["heralds"] = r.heralds;
    j["signal_heralds"] = r.signal_heralds;
    const double n = static_cast<double>(r.trials);
    const double rate = n > 0 ? static_cast<double>(r.heralds) / n : 0.0;
    j["herald_rate"] = rate;
    j["herald_rate_sigma"] = n > 0 ? std::sqrt(rate * (1.0 - rate) / n) : 0.0;
    std::uint64_t readouts = 0;
    for (const auto& c : r.counts) readouts += c.total();
    j["readouts"] = readouts;
    j["repetition_rate_khz"] = sch.repetition_rate_khz;
    j["cycles_per_load"] = sch.cycles_per_load;
    j["cycle_time_us"] = sch.cycle_time_us;
    j["simulated_wall_time_s"] = sch.repetition_rate_khz > 0
                                     ? n / (sch.repetition_rate_khz * 1e3) / (1.0 - cfg.sequence.aux_dead_fraction)
                                     : 0.0;

    j["vz"] = fits.vz ? visibility_json(*fits.vz) : Json(nullptr);
    j["vz_free_period"] = fits.vz_free ? visibility_json(*fits.vz_free) : Json(nullptr);
    j["vx"] = fits.vx ? visibility_json(*fits.vx) : Json(nullptr);
    j["vx_free_period"] = fits.vx_free ? visibility_json(*fits.vx_free) : Json(nullptr);
    j["fidelity"] = {{"value", number_or_null(fits.fidelity)}, {"sigma", number_or_null(fits.fidelity_sigma)}};

    Json snr;
    snr["herald_full"] = number_or_null(histogram_snr(r.herald_histogram, SnrMode::full_width));
    snr["herald_fwhm"] = number_or_null(histogram_snr(r.herald_histogram, SnrMode::fwhm));
    if (r.herald_histogram.total() > 0) {
        const auto full = snr_from_histogram(r.herald_histogram, SnrMode::full_width);
        const auto half = snr_from_histogram(r.herald_histogram, SnrMode::fwhm);
        snr["fwhm_event_fraction"] =
            full.in_window_events ? static_cast<double>(half.in_window_events) / full.in_window_events : 0.0;
    } else {
        snr["fwhm_event_fraction"] = nullptr;
    }
    snr["readout"] = r.readout_noise ? Json(static_cast<double>(r.readout_signal) / r.readout_noise) : Json(nullptr);
    j["snr"] = snr;

    j["compensation"] = {{"runs", r.compensations},
                         {"failures", r.compensation_failures},
                         {"max_objective", r.max_compensation_error}};

    Json m;
    m["p_eff"] = pred.p_eff;
    m["herald_efficiency"] = pred.herald_efficiency;
    m["herald_probability"] = pred.herald_probability;
    m["background_probability"] = pred.background_probability;
    m["herald_snr_full"] = number_or_null(pred.herald_snr_full);
    m["herald_snr_fwhm"] = number_or_null(pred.herald_snr_fwhm);
    m["readout_snr"] = pred.readout_snr;
    m["vz"] = pred.vz;
    m["vx"] = pred.vx;
    m["fidelity"] = pred.fidelity;
    m["snr_vs_length"] = number_or_null(snr_model(cfg.fiber.length_km, cfg.snr_model));
    j["model"] = m;
    return j;
}

Json cmd_run(LinkConfig cfg, const RunOptions& opt) {
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.all_trials) cfg.run.record_all_trials = *opt.all_trials;
    cfg.validate();
    const std::uint64_t trials = resolve_trials(cfg, opt);
    const SessionResult r = run_sharded(cfg, trials, shard_count(opt, trials), cfg.seed, false, opt.write_files);
    Json summary = summarize(cfg, r, cfg.seed);
    if (!opt.write_files) return summary;

    const fs::path dir = opt.out_dir.empty() ? fs::path(default_out_dir()) : fs::path(opt.out_dir);
    fs::create_directories(dir);
    {
        auto os = open_out(dir / "trials.csv");
        write_trials_csv(os, r.records);
    }
    {
        auto os = open_out(dir / "events.csv");
        write_events_csv(os, r.events);
    }
    {
        auto os = open_out(dir / "herald_histogram.csv");
        write_histogram_csv(os, r.herald_histogram);
    }
    for (ReadoutBasis b : cfg.run.bases) {
        auto os = open_out(dir / (std::string("fringe_") + to_string(b) + ".csv"));
        write_fringe_csv(os, fringe_dataset(cfg, r, b));
    }
    {
        auto os = open_out(dir / "config.resolved.cfg");
        os << render_config(cfg);
    }
    summary["config_echo"] = "config.resolved.cfg";
    write_json(dir / "summary.json", summary);
    return summary;
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "fiber_length") return SweepAxis::fiber_length;
    if (name == "pump_power") return SweepAxis::pump_power;
    if (name == "delay") return SweepAxis::delay;
    throw ValidationError("axis", "expected fiber_length, pump_power or delay, got '" + name + "'");
}

const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::fiber_length: return "fiber_length";
        case SweepAxis::pump_power: return "pump_power";
        case SweepAxis::delay: return "delay";
    }
    return "?";
}

std::vector<SweepRow> cmd_sweep(const LinkConfig& base, SweepAxis axis, const std::vector<double>& values,
                                const RunOptions& opt) {
    LinkConfig cfg0 = base;
    if (opt.seed) cfg0.seed = *opt.seed;
    cfg0.validate();
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        LinkConfig cfg = cfg0;
        const double v = values[i];
        switch (axis) {
            case SweepAxis::fiber_length: cfg.fiber.length_km = v; break;
            case SweepAxis::pump_power: cfg.qfc.pump_power_w = v; break;
            case SweepAxis::delay:
                cfg.fiber.delay_offset_us = v - cfg.fiber.delay_us_per_km * cfg.fiber.length_km;
                break;
        }
        cfg.seed = derive_seed(cfg0.seed, i);
        cfg.validate();
        const std::uint64_t trials = resolve_trials(cfg, opt);
        const SessionResult r = run_sharded(cfg, trials, shard_count(opt, trials), cfg.seed, false, false);
        const SessionFits fits = fit_session(cfg, r);
        SweepRow row;
        row.value = v;
        row.f_sim = fits.fidelity;
        row.f_sim_err = fits.fidelity_sigma;
        row.snr_sim = histogram_snr(r.herald_histogram, SnrMode::full_width);
        row.snr_model = snr_model(cfg.fiber.length_km, cfg.snr_model);
        row.rep_rate_khz = repetition_rate(cfg);
        rows.push_back(row);
    }
    if (opt.write_files) {
        const fs::path dir = opt.out_dir.empty() ? fs::path(default_out_dir()) : fs::path(opt.out_dir);
        fs::create_directories(dir);
        auto os = open_out(dir / "sweep.csv");
        os << "value,F_sim,F_sim_err,SNR_sim,SNR_model,rep_rate\n";
        os << std::setprecision(10);
        for (const auto& r : rows) {
            os << r.value << ',' << r.f_sim << ',' << r.f_sim_err << ',' << r.snr_sim << ',' << r.snr_model << ','
               << r.rep_rate_khz << '\n';
        }
    }
    return rows;
}

FitKind parse_fit_kind(const std::string& name) {
    if (name == "snr") return FitKind::snr;
    if (name == "decay") return FitKind::decay;
    if (name == "dfg") return FitKind::dfg;
    if (name == "fringe") return FitKind::fringe;
    throw ValidationError("kind", "expected snr, decay, dfg or fringe, got '" + name + "'");
}

std::vector<std::string> fit_columns(FitKind kind) {
    switch (kind) {
        case FitKind::snr: return {"length_km", "snr"};
        case FitKind::decay: return {"time_us", "efficiency"};
        case FitKind::dfg: return {"pump_w", "efficiency"};
        case FitKind::fringe: return {"setting", "coincidences", "singles"};
    }
    return {};
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto a = cell.find_first_not_of(" \t\r");
        const auto b = cell.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, const std::vector<std::string>& columns) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, 0, "cannot open file");
    std::vector<std::vector<double>> cols(columns.size());
    std::string line;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
        const auto cells = split_csv(line);
        if (!header) {
            for (std::size_t i = 0; i < columns.size(); ++i) {
                if (i >= cells.size()) throw SchemaError(columns[i], "missing column '" + columns[i] + "'");
                if (cells[i] != columns[i]) {
                    throw SchemaError(cells[i], "unexpected column '" + cells[i] + "', expected '" + columns[i] + "'");
                }
            }
            if (cells.size() > columns.size()) {
                throw SchemaError(cells[columns.size()], "unexpected extra column '" + cells[columns.size()] + "'");
            }
            header = true;
            continue;
        }
        if (cells.size() != columns.size()) {
            const std::string col = cells.size() < columns.size() ? columns[cells.size()] : "<extra>";
            throw SchemaError(col, "line " + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                                       " fields, got " + std::to_string(cells.size()));
        }
        for (std::size_t i = 0; i < columns.size(); ++i) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[i], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (cells[i].empty() || used != cells[i].size() || !std::isfinite(v)) {
                throw SchemaError(columns[i], "line " + std::to_string(line_no) + ": column '" + columns[i] +
                                                  "' is not a finite number");
            }
            cols[i].push_back(v);
        }
    }
    if (!header) throw SchemaError(columns.front(), "missing header row");
    return cols;
}

Json cmd_fit(FitKind kind, const std::string& data_path, const std::string& out_dir, const FitOptions& opt) {
    const auto cols = read_numeric_csv(data_path, fit_columns(kind));
    Json j;
    j["schema_version"] = kSummarySchemaVersion;
    j["source"] = data_path;
    std::string name;
    switch (kind) {
        case FitKind::snr: {
            name = "snr";
            const SnrFit f = fit_snr_model(cols[0], cols[1], opt.r_dark);
            j["kind"] = name;
            j["r_exc"] = f.params.r_exc;
            j["r_noise"] = f.params.r_noise;
            j["r_dark"] = f.params.r_dark;
            j["r_dark_fixed"] = true;
            j["atten_db_per_km"] = f.params.atten_db_per_km;
            j["sigma_r_exc"] = f.sigma_r_exc;
            j["sigma_r_noise"] = f.sigma_r_noise;
            j["sigma_atten"] = f.sigma_atten;
            j["residual_norm"] = f.residual_norm;
            j["converged"] = f.converged;
            j["snr_at_100km"] = snr_model(100.0, f.params);
            break;
        }
        case FitKind::decay: {
            name = "decay";
            const DecayFit f = fit_decay(cols[0], cols[1]);
            auto shape = [](const DecayShapeFit& s) {
                return Json{{"eta0", s.eta0},
                            {"tau_us", number_or_null(s.tau_us)},
                            {"sigma_eta0", s.sigma_eta0},
                            {"sigma_tau_us", number_or_null(s.sigma_tau_us)},
                            {"residual_norm", s.residual_norm}};
            };
            j["kind"] = name;
            j["gaussian"] = shape(f.gaussian);
            j["exponential"] = shape(f.exponential);
            j["best_shape"] = f.best_shape;
            break;
        }
        case FitKind::dfg: {
            name = "dfg";
            const EfficiencyCurveFit f = fit_efficiency_curve(cols[0], cols[1], opt.crystal_length_mm);
            j["kind"] = name;
            j["eta_max"] = f.eta_max;
            j["alpha_nor"] = f.alpha_nor;
            j["p_peak_w"] = number_or_null(f.p_peak_w);
            j["sigma_eta_max"] = f.sigma_eta_max;
            j["residual_norm"] = f.residual_norm;
            j["converged"] = f.converged;
            break;
        }
        case FitKind::fringe: {
            name = "fringe";
            FringeDataset d{cols[0], cols[1], cols[2]};
            const VisibilityEstimate v = fit_fringe(d, opt.free_period ? PeriodMode::free : PeriodMode::fixed, opt.period);
            j["kind"] = name;
            j["period_mode"] = opt.free_period ? "free" : "fixed";
            j["visibility"] = visibility_json(v);
            break;
        }
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(fs::path(out_dir) / ("fit_" + name + ".json"), j);
    }
    return j;
}

Json cmd_analyze(const std::string& run_dir, const std::string& out_dir, double x_period_us) {
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir)) throw ParseError(run_dir, 0, 0, "not a run directory");
    Json j;
    j["schema_version"] = kSummarySchemaVersion;
    j["run_dir"] = run_dir;
    std::optional<VisibilityEstimate> vz, vx;
    const auto cols = fit_columns(FitKind::fringe);
    if (fs::exists(dir / "fringe_z.csv")) {
        const auto c = read_numeric_csv((dir / "fringe_z.csv").string(), cols);
        const FringeDataset d{c[0], c[1], c[2]};
        vz = fit_fringe(d, PeriodMode::fixed, 90.0);
        j["vz"] = visibility_json(*vz);
        j["vz_free_period"] = visibility_json(fit_fringe(d, PeriodMode::free, 90.0));
    }
    if (fs::exists(dir / "fringe_x.csv")) {
        const auto c = read_numeric_csv((dir / "fringe_x.csv").string(), cols);
        const FringeDataset d{c[0], c[1], c[2]};
        vx = fit_fringe(d, PeriodMode::fixed, x_period_us);
        j["vx"] = visibility_json(*vx);
        j["vx_free_period"] = visibility_json(fit_fringe(d, PeriodMode::free, x_period_us));
    }
    if (vz && vx) {
        j["fidelity"] = {{"value", fidelity_from_visibilities(clamp_v(vz->V), clamp_v(vx->V))},
                         {"sigma", fidelity_sigma(vz->sigma_V, vx->sigma_V)}};
    }
    if (fs::exists(dir / "herald_histogram.csv")) {
        std::ifstream in(dir / "herald_histogram.csv");
        std::string line;
        double ws = 0.0, we = 0.0;
        while (std::getline(in, line)) {
            if (line.rfind("# window_start_ns=", 0) == 0) ws = std::stod(line.substr(18));
            if (line.rfind("# window_end_ns=", 0) == 0) we = std::stod(line.substr(16));
        }
        const auto c = read_numeric_csv((dir / "herald_histogram.csv").string(), {"bin_start_ns", "count"});
        Histogram h;
        h.bin_width_ns = c[0].size() > 1 ? c[0][1] - c[0][0] : 1.0;
        h.record_ns = h.bin_width_ns * static_cast<double>(c[0].size());
        h.window_start_ns = ws;
        h.window_end_ns = we;
        for (double v : c[1]) h.counts.push_back(static_cast<std::uint64_t>(v));
        j["snr"] = {{"herald_full", number_or_null(histogram_snr(h, SnrMode::full_width))},
                    {"herald_fwhm", number_or_null(histogram_snr(h, SnrMode::fwhm))}};
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(fs::path(out_dir) / "analysis.json", j);
    }
    return j;
}

}  // namespace qlink
