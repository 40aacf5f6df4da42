#pragma once

// Command implementations behind the `qlink` tool. Each command writes its artifacts
// into an output directory and returns the JSON it wrote.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlink/link_config.hpp"
#include "qlink/sequencer.hpp"

namespace qlink {

using Json = nlohmann::ordered_json;

inline constexpr int kSummarySchemaVersion = 1;

/// $QLINK_OUT_DIR, or "qlink-out" when unset.
std::string default_out_dir();

struct RunOptions {
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> trials;
    std::optional<double> duration_s;
    std::optional<bool> all_trials;
    int shards = 0;  ///< 0: hardware concurrency, capped at 8
    bool write_files = true;
};

/// Trials requested by the config after command-line overrides. Throws ValidationError
/// when neither a trial count nor a duration is set.
std::uint64_t resolve_trials(const LinkConfig& cfg, const RunOptions& opt);

/// Fits and rates of one session (the "summary.json" body).
Json summarize(const LinkConfig& cfg, const SessionResult& r, std::uint64_t seed);

/// Runs a session and writes trials.csv, events.csv, herald_histogram.csv,
/// fringe_<basis>.csv, summary.json and config.resolved.cfg.
Json cmd_run(LinkConfig cfg, const RunOptions& opt);

enum class SweepAxis { fiber_length, pump_power, delay };
SweepAxis parse_sweep_axis(const std::string& name);
const char* to_string(SweepAxis a);

struct SweepRow {
    double value = 0.0;
    double f_sim = 0.0;
    double f_sim_err = 0.0;
    double snr_sim = 0.0;
    double snr_model = 0.0;
    double rep_rate_khz = 0.0;
};

/// One session per value with seed derive_seed(seed, index); writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const LinkConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                                const RunOptions& opt);

enum class FitKind { snr, decay, dfg, fringe };
FitKind parse_fit_kind(const std::string& name);

struct FitOptions {
    double period = 90.0;  ///< fringe only
    bool free_period = false;
    double r_dark = 38.0;  ///< snr only: held fixed
    double crystal_length_mm = 50.0;
};

/// Expected CSV header per kind: snr "length_km,snr", decay "time_us,efficiency",
/// dfg "pump_w,efficiency", fringe "setting,coincidences,singles".
std::vector<std::string> fit_columns(FitKind kind);

/// Reads a numeric CSV with exactly `columns` as header. '#' lines are skipped.
/// Throws SchemaError naming the offending column.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, const std::vector<std::string>& columns);

/// Fits the file and writes fit_<kind>.json into out_dir (when non-empty).
Json cmd_fit(FitKind kind, const std::string& data_path, const std::string& out_dir, const FitOptions& opt = {});

/// Re-analyzes the CSV artifacts of a run directory (fringes and herald histogram)
/// and writes analysis.json into out_dir.
Json cmd_analyze(const std::string& run_dir, const std::string& out_dir, double x_period_us);

}  // namespace qlink
