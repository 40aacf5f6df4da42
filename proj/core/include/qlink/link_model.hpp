#pragma once

// Closed-form expectations for a configured link: herald probability, herald SNR,
// expected fringes and visibilities. These are the cross-checks for the Monte Carlo
// and the basis of the calibration routines.
//
// Per trial, with p the effective excitation probability, h the herald detection
// probability of an emitted photon, n the probability of a background click in either
// herald channel, r the read-out signal detection probability and q the read-out noise
// detection probability, the heralded-and-read events split into
//   S  = p h r                       correlated
//   U1 = p h (1-r) q                 herald true, read-out noise only
//   U2 = p (1-h) n (r + (1-r) q)     background herald, excited but unrelated atom
//   U3 = (1-p) n q                   background herald, no excitation
// so the observed visibility is V_state S / (S + U1 + U2 + U3). The expected fringes
// below evaluate the same terms per setting from the density matrix.

#include <vector>

#include "qlink/link_config.hpp"

namespace qlink {

/// Photon transmission from the node to the herald detector input, per QFC arm
/// (H, V), excluding detector efficiency.
std::array<double, 2> photon_path_transmission(const LinkConfig& cfg);
/// Photon Kraus operator from node to analyzer (fiber assumed compensated), detector
/// efficiency included.
Matrix2c photon_kraus(const LinkConfig& cfg);
/// Detected background rate per herald channel (converter noise after the fiber).
double herald_noise_cps(const LinkConfig& cfg);
double herald_dark_cps(const LinkConfig& cfg);
/// Probability of at least one background click in either herald channel per window.
double herald_background_probability(const LinkConfig& cfg);

/// Mean storage time at readout for a setting (herald at the pulse peak).
double readout_storage_time_us(const LinkConfig& cfg, const MeasurementSetting& s);
/// Read-out detection probability per photon (APD efficiency times read-out path).
double readout_detection_eff(const LinkConfig& cfg);

struct FringeExpectation {
    std::vector<double> settings;
    std::vector<double> correlated;  ///< expected correlated read-outs per trial
    std::vector<double> total;       ///< expected read-outs (heralded) per trial
};

struct LinkPrediction {
    double p_eff = 0.0;
    double herald_efficiency = 0.0;  ///< h, averaged over input polarization
    double background_probability = 0.0;
    double herald_probability = 0.0;
    double herald_snr_full = 0.0;
    double herald_snr_fwhm = 0.0;
    double readout_signal = 0.0;  ///< r at the mean readout delay, z basis
    double readout_noise = 0.0;   ///< q
    double readout_snr = 0.0;     ///< readout_snr_factor * eta(delay)
    double vz = 0.0;
    double vx = 0.0;
    double fidelity = 0.0;
    FringeExpectation z;
    FringeExpectation x;
};

FringeExpectation expected_fringe(const LinkConfig& cfg, ReadoutBasis basis);
LinkPrediction predict(const LinkConfig& cfg);

/// p h + n - p h n: probability that a trial is heralded.
double herald_probability(const LinkConfig& cfg);

/// Visibility of a noiseless fringe expectation (fraction fitted at the known period).
double expected_visibility(const LinkConfig& cfg, ReadoutBasis basis);

// ---------------------------------------------------------------------------
// Calibration. Each routine returns the parameter value; it does not modify cfg.

/// multi_excitation_coeff giving predicted Vz = target.
double calibrate_multi_excitation(const LinkConfig& cfg, double target_vz);
/// Raman rotation error giving a superposition-basis visibility factor `factor`.
double calibrate_raman_error(double factor);
/// node.p_exc giving herald_probability = target.
double calibrate_excitation(const LinkConfig& cfg, double target_herald);
/// node.p_exc giving effective excitation p_exc * pump_init_eff = target.
double excitation_for_effective(const LinkConfig& cfg, double target_p_eff);

struct DecoherenceCalibration {
    double coherence_tau_us = 0.0;
    double phase_jitter_sigma_rad = 0.0;
    double factor = 0.0;  ///< total coherence factor at the mean x-basis storage time
};
/// coherence_tau and phase_jitter_sigma giving predicted Vx = target, with the
/// required coherence factor split equally (in log) between the two mechanisms.
DecoherenceCalibration calibrate_decoherence(const LinkConfig& cfg, double target_vx);

/// node.readout_path_eff giving read-outs per herald = target.
double calibrate_readout_path(const LinkConfig& cfg, double target_readouts_per_herald);
/// sequence.aux_dead_fraction so that a session of `hours` yields `target_heralds`
/// heralds in basis `basis`.
double calibrate_aux_dead(const LinkConfig& cfg, double hours, double target_heralds, ReadoutBasis basis);

}  // namespace qlink
