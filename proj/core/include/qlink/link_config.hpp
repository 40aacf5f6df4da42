#pragma once

// Complete parameter record for one run.

#include <cstdint>
#include <string>
#include <vector>

#include "qlink/analysis.hpp"
#include "qlink/conversion.hpp"
#include "qlink/detection.hpp"
#include "qlink/fiber.hpp"
#include "qlink/node.hpp"

namespace qlink {

struct SequenceParams {
    double cooling_ms = 28.6;  ///< includes the 16-us initial optical pumping
    double experiment_phase_ms = 6.0;
    int rounds = 4;
    int max_cycles_per_round = 250;
    double pump_us = 2.0;
    double write_ns = 50.0;
    double window_ns = 200.0;
    double read_ns = 250.0;
    double init_pump_us = 16.0;
    double inter_round_us = 2.0;
    /// Extra wall-clock dead fraction (e.g. filter-cavity re-optimization); scales the
    /// session length only, not the repetition rate.
    double aux_dead_fraction = 0.0;

    void validate() const;
};

struct RunParams {
    std::uint64_t trials = 0;  ///< 0: derive from duration_s
    double duration_s = 0.0;
    std::vector<ReadoutBasis> bases{ReadoutBasis::z, ReadoutBasis::x};
    std::vector<double> z_hwp_deg{0.0, 11.25, 22.5, 33.75, 45.0, 56.25, 67.5, 78.75};
    double z_qwp_deg = 45.0;
    int x_delay_steps = 8;  ///< extra delays k * larmor_period / 8, k = 0..steps-1
    double x_hwp_deg = 0.0;
    bool record_all_trials = false;

    void validate() const;
};

struct LinkConfig {
    NodeParams node;
    QfcParams qfc;
    SagnacGeometry sagnac;
    LockGains lock;
    FilterParams filter;
    FiberParams fiber;
    DetectorParams snspd = DetectorParams::snspd();
    DetectorParams apd = DetectorParams::apd();
    DetectorKind herald_detector = DetectorKind::snspd;
    PulseShape herald_pulse;
    PulseShape readout_pulse{40.0, 8.0, 20.0, 3.1};
    SequenceParams sequence;
    SnrModelParams snr_model{27736.3, 257.0, 38.0, 0.2};
    RunParams run;
    std::uint64_t seed = 1;

    /// Re-validates every section; throws ValidationError naming the field.
    void validate() const;
    const DetectorParams& herald() const { return herald_detector == DetectorKind::snspd ? snspd : apd; }
};

/// One analyzer/readout configuration of the fringe scans.
struct MeasurementSetting {
    ReadoutBasis basis = ReadoutBasis::z;
    AnalyzerSetting analyzer;    ///< port field unused; both PBS ports are recorded
    double extra_delay_us = 0.0;
    double value = 0.0;          ///< fringe x-axis: HWP angle (deg) or extra delay (us)
};

/// z settings (QWP fixed, HWP scanned) followed by x settings (HWP fixed, delay scanned).
/// Trial k uses entry k mod size.
std::vector<MeasurementSetting> measurement_settings(const LinkConfig& cfg);

const char* to_string(ReadoutBasis b);
const char* to_string(DecayShape s);

}  // namespace qlink
