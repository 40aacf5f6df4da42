// qlink: run, sweep, fit and analyze simulated atom-photon links.
//
// Exit codes: 0 success, 1 usage, 2 invalid input (config, data, parameters),
// 3 runtime failure.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qlink/config.hpp"
#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"
#include "qlink/runner.hpp"
#include "qlink/sequencer.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

void print_run(const qlink::Json& s) {
    auto show = [](const qlink::Json& v) { return v.is_null() ? std::string("n/a") : v.dump(); };
    std::cout << "trials " << s["trials"] << ", heralds " << s["heralds"] << " (rate " << s["herald_rate"] << ")\n";
    std::cout << "Vz " << show(s["vz"].is_null() ? s["vz"] : s["vz"]["value"]) << " +- "
              << show(s["vz"].is_null() ? s["vz"] : s["vz"]["sigma"]) << '\n';
    std::cout << "Vx " << show(s["vx"].is_null() ? s["vx"] : s["vx"]["value"]) << " +- "
              << show(s["vx"].is_null() ? s["vx"] : s["vx"]["sigma"]) << '\n';
    std::cout << "F  " << show(s["fidelity"]["value"]) << " +- " << show(s["fidelity"]["sigma"]) << '\n';
    std::cout << "herald SNR " << show(s["snr"]["herald_full"]) << ", repetition rate "
              << s["repetition_rate_khz"] << " kHz\n";
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::string cell;
    std::stringstream ss(text);
    while (std::getline(ss, cell, ',')) {
        if (cell.find_first_not_of(" \t") == std::string::npos) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos) {
            throw qlink::ValidationError("values", "not a number: '" + cell + "'");
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Memory-based quantum link simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> trials;
    std::optional<double> duration_s;
    bool all_trials = false;
    int shards = 0;

    auto add_run_flags = [&](CLI::App* c) {
        c->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out_dir, "Output directory (default $QLINK_OUT_DIR or ./qlink-out)");
        c->add_option("--seed", seed, "Master seed (overrides the config)");
        c->add_option("--trials", trials, "Number of trials");
        c->add_option("--duration-s", duration_s, "Simulated wall-clock duration");
        c->add_option("--shards", shards, "Worker threads (0 = auto)")->check(CLI::NonNegativeNumber);
    };

    auto* run = app.add_subcommand("run", "Run one session and write trial/event/fringe CSVs and a summary");
    add_run_flags(run);
    run->add_flag("--all-trials", all_trials, "Record un-heralded trials in trials.csv too");

    auto* sweep = app.add_subcommand("sweep", "Run one session per value of a parameter axis");
    add_run_flags(sweep);
    std::string axis;
    std::string values_text;
    sweep->add_option("--axis", axis, "fiber_length | pump_power | delay")->required();
    sweep->add_option("--values", values_text, "Comma-separated values")->required();

    auto* fit = app.add_subcommand("fit", "Fit a CSV dataset");
    std::string kind;
    std::string data_path;
    qlink::FitOptions fit_opt;
    fit->add_option("kind", kind, "snr | decay | dfg | fringe")->required();
    fit->add_option("--data", data_path, "CSV input")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", out_dir, "Output directory for the JSON report");
    fit->add_option("--period", fit_opt.period, "Fringe period (fringe only)");
    fit->add_flag("--free-period", fit_opt.free_period, "Fit the fringe period too");
    fit->add_option("--r-dark", fit_opt.r_dark, "Fixed dark rate for the snr fit");

    auto* analyze = app.add_subcommand("analyze", "Re-fit the CSV artifacts of a run directory");
    std::string run_dir;
    analyze->add_option("--run-dir", run_dir, "Directory written by `qlink run`")->required();
    analyze->add_option("--config", config_path, "Config for the Larmor period (defaults otherwise)");
    analyze->add_option("--out", out_dir, "Output directory (default: the run directory)");

    auto* validate = app.add_subcommand("validate", "Load a config and print the schedule and model preview");
    validate->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        qlink::RunOptions opt;
        opt.out_dir = out_dir;
        opt.seed = seed;
        opt.trials = trials;
        opt.duration_s = duration_s;
        if (all_trials) opt.all_trials = true;
        opt.shards = shards;

        if (run->parsed()) {
            const qlink::LinkConfig cfg = qlink::load_config(config_path);
            print_run(qlink::cmd_run(cfg, opt));
        } else if (sweep->parsed()) {
            const qlink::LinkConfig cfg = qlink::load_config(config_path);
            const auto rows = qlink::cmd_sweep(cfg, qlink::parse_sweep_axis(axis), parse_values(values_text), opt);
            std::cout << rows.size() << " sweep points written\n";
        } else if (fit->parsed()) {
            const auto report = qlink::cmd_fit(qlink::parse_fit_kind(kind), data_path, out_dir, fit_opt);
            std::cout << report.dump(2) << '\n';
        } else if (analyze->parsed()) {
            qlink::LinkConfig cfg;
            if (!config_path.empty()) cfg = qlink::load_config(config_path);
            const auto report =
                qlink::cmd_analyze(run_dir, out_dir.empty() ? run_dir : out_dir, qlink::larmor_period_us(cfg.node));
            std::cout << report.dump(2) << '\n';
        } else if (validate->parsed()) {
            const qlink::LinkConfig cfg = qlink::load_config(config_path);
            const qlink::Schedule s = qlink::build_schedule(cfg);
            const qlink::LinkPrediction p = qlink::predict(cfg);
            std::cout << "config ok\n"
                      << "cycle time " << s.cycle_time_us << " us, " << s.cycles_per_round << " cycles/round, "
                      << s.cycles_per_load << " cycles/load\n"
                      << "repetition rate " << s.repetition_rate_khz << " kHz\n"
                      << "herald probability " << p.herald_probability << ", herald SNR " << p.herald_snr_full << '\n'
                      << "predicted Vz " << p.vz << ", Vx " << p.vx << ", F " << p.fidelity << '\n';
        }
    } catch (const qlink::ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const qlink::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const qlink::SchemaError& e) {
        std::cerr << "schema error (column " << e.column() << "): " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
