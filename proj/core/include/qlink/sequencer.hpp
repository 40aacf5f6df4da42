#pragma once

// Duty cycle and trial-level Monte Carlo of the heralded link: cooling, rounds, cycles,
// write / photon window / herald / triggered read.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "qlink/link_config.hpp"

namespace qlink {

struct Schedule {
    double propagation_delay_us = 0.0;
    double cycle_time_us = 0.0;  ///< pump + write + delay + window + read
    int cycles_per_round = 0;
    int cycles_per_load = 0;
    double used_phase_us = 0.0;  ///< rounds of cycles plus inter-round gaps
    double load_period_us = 0.0;
    double compensation_duty = 1.0;
    double repetition_rate_khz = 0.0;
};

/// cycles_per_round = min(cap, ceil(round budget / cycle_time)); the last partial cycle
/// may run past the nominal phase length, which then stretches the load period.
/// Throws ValidationError when one cycle does not fit in a round.
Schedule build_schedule(const LinkConfig& cfg);

/// Trials per wall-clock second / 1000, including the compensation duty cycle
/// (applied when the fiber is longer than 0 km).
double repetition_rate(const LinkConfig& cfg);

/// Trials that fit in `duration_s` of wall clock, after the auxiliary dead fraction.
std::uint64_t session_trials(const LinkConfig& cfg, double duration_s);

/// Absolute start of the write pulse for a global trial index (compensation pauses
/// are not inserted in the time line; they only reduce the trial count).
double write_time_us(const LinkConfig& cfg, const Schedule& schedule, std::uint64_t trial_id);
/// Time since the start of the experiment phase of the trial's load.
double phase_elapsed_us(const Schedule& schedule, const LinkConfig& cfg, std::uint64_t trial_id);

enum class Outcome { none, down, up };
const char* to_string(Outcome o);

struct TrialRecord {
    std::uint64_t trial_id = 0;
    double write_time_us = 0.0;
    int herald = -1;  ///< herald channel (0 = PBS transmit, 1 = reflect) or -1
    ClickKind herald_kind = ClickKind::signal;
    double herald_time_us = 0.0;
    ReadoutBasis basis = ReadoutBasis::z;
    int setting = 0;
    double delay_us = 0.0;  ///< read-out time minus write time
    Outcome outcome = Outcome::none;
    bool readout_noise = false;
};

/// Read-out counts of one setting, indexed [herald channel][outcome down/up].
struct SettingCounts {
    std::uint64_t trials = 0;
    std::uint64_t heralds = 0;
    std::array<std::array<std::uint64_t, 2>, 2> n{};

    std::uint64_t correlated() const { return n[0][0] + n[1][1]; }
    std::uint64_t total() const { return n[0][0] + n[0][1] + n[1][0] + n[1][1]; }
};

struct SessionOptions {
    std::uint64_t seed = 1;
    std::uint64_t first_trial = 0;
    std::uint64_t n_trials = 0;
    bool record_all_trials = false;
    bool record_events = true;
};

struct SessionResult {
    std::uint64_t trials = 0;
    std::uint64_t heralds = 0;
    std::uint64_t signal_heralds = 0;
    std::uint64_t readout_signal = 0;  ///< detected retrieved photons
    std::uint64_t readout_noise = 0;   ///< detected read-out noise photons
    std::uint64_t compensations = 0;
    std::uint64_t compensation_failures = 0;
    double max_compensation_error = 0.0;
    std::vector<SettingCounts> counts;  ///< per measurement setting
    Histogram herald_histogram;         ///< herald click offsets from window open
    std::vector<TrialRecord> records;
    std::vector<DetectionEvent> events;

    /// Appends another shard (records and events are concatenated in call order).
    SessionResult& merge(const SessionResult& other);
};

/// Deterministic given (cfg, options): every trial draws from its own stream
/// Rng(seed, trial_id) and the fiber drift from Rng(seed, "drift"), so results do not
/// depend on how the trial range is split.
SessionResult run_session(const LinkConfig& cfg, const SessionOptions& options);

/// Splits [0, n_trials) into `shards` contiguous ranges run concurrently. With
/// `derive_seeds` each shard uses derive_seed(seed, shard) (independent statistics);
/// otherwise all shards share `seed` and the merge equals a single run.
SessionResult run_sharded(const LinkConfig& cfg, std::uint64_t n_trials, int shards, std::uint64_t seed,
                          bool derive_seeds, bool record_events = true);

/// Correlated fraction data of one basis: coincidences = N(T, down) + N(R, up),
/// singles = all read-outs of the setting.
FringeDataset fringe_dataset(const LinkConfig& cfg, const SessionResult& r, ReadoutBasis basis);

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records);
void write_events_csv(std::ostream& os, const std::vector<DetectionEvent>& events);
void write_histogram_csv(std::ostream& os, const Histogram& h);
void write_fringe_csv(std::ostream& os, const FringeDataset& d);

}  // namespace qlink
