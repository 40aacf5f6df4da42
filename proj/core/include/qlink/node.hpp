#pragma once

// Atomic-ensemble memory node: entangled-state preparation with multi-excitation
// noise, retrieval-efficiency decay, Larmor precession of the stored qubit, the
// Raman basis transfer and heralded readout sampling.

#include <limits>
#include <optional>

#include "qlink/random.hpp"
#include "qlink/two_qubit.hpp"

namespace qlink {

enum class DecayShape { gaussian, exponential };
enum class ReadoutBasis { z, x };

struct NodeParams {
    double p_exc = 0.01;                  ///< excitation probability per trial, before init efficiency
    double eta0 = 0.50;                   ///< internal retrieval efficiency at zero delay
    double tau_mem_us = 160.0;            ///< 1/e point of the retrieval efficiency
    DecayShape decay_shape = DecayShape::gaussian;
    double b_guide_mg = 127.5;
    double gf_rate_mhz_per_g = 0.6996;    ///< Zeeman shift per unit field for |dm| = 1 (87Rb F=2)
    double raman_error_rad = 0.0;
    double phase_jitter_sigma_rad = 0.0;  ///< Larmor-phase jitter std-dev at t = tau_mem
    double eta_down = 1.0;
    double eta_up = 1.0;
    double coherence_tau_us = std::numeric_limits<double>::infinity();
    double pump_init_eff = 0.90;
    double readout_snr_factor = 1500.0;
    double multi_excitation_coeff = 2.0;  ///< w = coeff * effective excitation probability
    double readout_path_eff = 1.0;        ///< read-out photon transmission to the APDs
    double ripple_amplitude = 0.0;        ///< relative sinusoidal ripple on the efficiency decay
    double ripple_period_us = 20.0;
    double od_decay_fraction = 0.0;       ///< linear eta0 loss across the experiment phase
    double od_decay_window_us = 6000.0;

    /// Throws ValidationError naming `node.<field>`.
    void validate() const;

    /// Probability that a trial emits an entangled write-out photon.
    double effective_excitation() const { return p_exc * pump_init_eff; }
};

/// Weight of the white-noise admixture in the heralded state. Second excitations
/// in the two-mode-squeezing picture emit an unpolarized, uncorrelated photon;
/// conditioned on a herald their share of heralds is ~2p for small p, which sets
/// the default coefficient.
double multi_excitation_weight(const NodeParams& params);

/// (1 - w)|Phi><Phi| + w I/4.
TwoQubitState initial_state(const NodeParams& params);

/// eta(t) with eta(0) = eta0 and eta(tau_mem) = eta0/e for either shape.
/// `phase_elapsed_us` is the time since the start of the experiment phase (OD decay).
double retrieval_efficiency(double t_us, const NodeParams& params, double phase_elapsed_us = 0.0);

/// Relative phase between |up> (m=+1) and |down> (m=-1): 2 pi * 2 * g * B * t.
double larmor_phase(double t_us, const NodeParams& params);
double larmor_period_us(const NodeParams& params);

/// Atomic coherence envelope exp(-t / coherence_tau).
double coherence_factor(double t_us, const NodeParams& params);
/// Std-dev of the per-trial Larmor phase jitter at storage time t.
double jitter_sigma(double t_us, const NodeParams& params);
/// Ensemble-averaged coherence factor from the jitter: exp(-sigma(t)^2 / 2).
double jitter_dephasing_factor(double t_us, const NodeParams& params);

/// Larmor rotation diag(1, exp(-i phi)) on {|down>, |up>}.
Matrix2c larmor_unitary(double phase);

/// Larmor precession plus phase damping for storage time t. Deterministic (no jitter).
TwoQubitState apply_memory_channel(const TwoQubitState& rho, double t_us, const NodeParams& params);
/// Same with one sampled jitter phase, as seen by a single trial.
TwoQubitState apply_memory_channel(const TwoQubitState& rho, double t_us, const NodeParams& params, Rng& rng);
AtomState apply_memory_channel(const AtomState& rho, double t_us, const NodeParams& params);
AtomState apply_memory_channel(const AtomState& rho, double t_us, const NodeParams& params, Rng& rng);

/// Raman transfer: rotation by (pi/2 + error) about the -y axis of the atomic Bloch
/// sphere, R = exp(+i (pi/2 + error) sigma_y / 2). With error = 0 it maps
/// |down>_x = (|down> + |up>)/sqrt2 to |down>_z and |up>_x = (|down> - |up>)/sqrt2 to |up>_z.
Matrix2c raman_unitary(double error_rad);
TwoQubitState raman_transfer(const TwoQubitState& rho, double error_rad);
AtomState raman_transfer(const AtomState& rho, double error_rad);

struct ReadoutSample {
    std::optional<AtomLevel> outcome;  ///< set when a photon (signal or noise) was detected
    bool retrieved = false;            ///< the spin-wave photon was retrieved and detected
    bool readout_noise_click = false;  ///< a noise photon was detected
};

/// Samples the triggered readout of a heralded trial. `atom` is the conditioned atomic
/// state at the herald; the memory channel (with jitter) for `delay_us` and, in the x
/// basis, the Raman transfer are applied here. The noise photon probability per read is
/// 1/readout_snr_factor, so the signal-to-noise ratio equals readout_snr_factor * eta.
/// Signal and noise photons both pass readout_path_eff * `detector_eff`; when both are
/// detected the signal photon decides the outcome. Throws ValidationError if !heralded.
ReadoutSample readout_sample(const AtomState& atom, ReadoutBasis basis, double delay_us, const NodeParams& params,
                             bool heralded, Rng& rng, double detector_eff = 1.0, double phase_elapsed_us = 0.0);

/// Born probabilities of reading |down>, |up> (before retrieval) after the memory
/// channel (jitter-averaged) and basis transfer.
std::array<double, 2> readout_probabilities(const AtomState& atom, ReadoutBasis basis, double delay_us,
                                            const NodeParams& params);

}  // namespace qlink
