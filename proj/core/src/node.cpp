#include "qlink/node.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw ValidationError(std::string("node.") + field, what);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void NodeParams::validate() const {
    require(finite(p_exc) && p_exc >= 0.0 && p_exc < 0.5, "p_exc", "must be in [0, 0.5)");
    require(finite(eta0) && eta0 > 0.0 && eta0 <= 1.0, "eta0", "must be in (0, 1]");
    require(finite(tau_mem_us) && tau_mem_us > 0.0, "tau_mem_us", "must be positive");
    require(finite(b_guide_mg) && b_guide_mg >= 0.0, "b_guide_mg", "must be non-negative");
    require(finite(gf_rate_mhz_per_g) && gf_rate_mhz_per_g >= 0.0, "gf_rate_mhz_per_g", "must be non-negative");
    require(finite(raman_error_rad), "raman_error_rad", "must be finite");
    require(finite(phase_jitter_sigma_rad) && phase_jitter_sigma_rad >= 0.0, "phase_jitter_sigma_rad",
            "must be non-negative");
    require(eta_down > 0.0 && eta_down <= 1.0, "eta_down", "must be in (0, 1]");
    require(eta_up > 0.0 && eta_up <= 1.0, "eta_up", "must be in (0, 1]");
    require(coherence_tau_us > 0.0, "coherence_tau_us", "must be positive (inf allowed)");
    require(pump_init_eff > 0.0 && pump_init_eff <= 1.0, "pump_init_eff", "must be in (0, 1]");
    require(finite(readout_snr_factor) && readout_snr_factor > 0.0, "readout_snr_factor", "must be positive");
    require(finite(multi_excitation_coeff) && multi_excitation_coeff >= 0.0, "multi_excitation_coeff",
            "must be non-negative");
    require(readout_path_eff > 0.0 && readout_path_eff <= 1.0, "readout_path_eff", "must be in (0, 1]");
    require(finite(ripple_amplitude) && ripple_amplitude >= 0.0 && ripple_amplitude < 1.0, "ripple_amplitude",
            "must be in [0, 1)");
    require(finite(ripple_period_us) && ripple_period_us > 0.0, "ripple_period_us", "must be positive");
    require(od_decay_fraction >= 0.0 && od_decay_fraction < 1.0, "od_decay_fraction", "must be in [0, 1)");
    require(finite(od_decay_window_us) && od_decay_window_us > 0.0, "od_decay_window_us", "must be positive");
    require(multi_excitation_weight(*this) <= 1.0, "multi_excitation_coeff",
            "noise weight coeff * p_exc * pump_init_eff exceeds 1");
}

double multi_excitation_weight(const NodeParams& params) {
    return params.multi_excitation_coeff * params.effective_excitation();
}

TwoQubitState initial_state(const NodeParams& params) {
    params.validate();
    const double w = multi_excitation_weight(params);
    const Matrix4c rho = (1.0 - w) * TwoQubitState::bell_phi().matrix() + (w / 4.0) * Matrix4c::Identity();
    return TwoQubitState(rho);
}

double retrieval_efficiency(double t_us, const NodeParams& params, double phase_elapsed_us) {
    if (!(t_us >= 0.0)) throw ValidationError("delay_us", "storage time must be non-negative");
    const double x = t_us / params.tau_mem_us;
    double envelope = params.decay_shape == DecayShape::gaussian ? std::exp(-x * x) : std::exp(-x);
    if (params.ripple_amplitude > 0.0) {
        envelope *= 1.0 + params.ripple_amplitude * std::sin(2.0 * std::numbers::pi * t_us / params.ripple_period_us);
    }
    double eta0 = params.eta0;
    if (params.od_decay_fraction > 0.0) {
        const double f = std::clamp(phase_elapsed_us / params.od_decay_window_us, 0.0, 1.0);
        eta0 *= 1.0 - params.od_decay_fraction * f;
    }
    return std::clamp(eta0 * envelope, 0.0, 1.0);
}

double larmor_phase(double t_us, const NodeParams& params) {
    // MHz/G * mG * 1e-3 = MHz; MHz * us = cycles
    const double freq_mhz = 2.0 * params.gf_rate_mhz_per_g * params.b_guide_mg * 1e-3;
    return 2.0 * std::numbers::pi * freq_mhz * t_us;
}

double larmor_period_us(const NodeParams& params) {
    const double freq_mhz = 2.0 * params.gf_rate_mhz_per_g * params.b_guide_mg * 1e-3;
    if (freq_mhz == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / freq_mhz;
}

double coherence_factor(double t_us, const NodeParams& params) {
    if (std::isinf(params.coherence_tau_us)) return 1.0;
    return std::exp(-t_us / params.coherence_tau_us);
}

double jitter_sigma(double t_us, const NodeParams& params) {
    return params.phase_jitter_sigma_rad * t_us / params.tau_mem_us;
}

double jitter_dephasing_factor(double t_us, const NodeParams& params) {
    const double s = jitter_sigma(t_us, params);
    return std::exp(-0.5 * s * s);
}

Matrix2c larmor_unitary(double phase) {
    Matrix2c u = Matrix2c::Zero();
    u(0, 0) = 1.0;
    u(1, 1) = std::polar(1.0, -phase);
    return u;
}

TwoQubitState apply_memory_channel(const TwoQubitState& rho, double t_us, const NodeParams& params) {
    if (!(t_us >= 0.0)) throw ValidationError("delay_us", "storage time must be non-negative");
    return rho.with_atom_unitary(larmor_unitary(larmor_phase(t_us, params)))
        .with_atom_dephasing(coherence_factor(t_us, params));
}

TwoQubitState apply_memory_channel(const TwoQubitState& rho, double t_us, const NodeParams& params, Rng& rng) {
    if (!(t_us >= 0.0)) throw ValidationError("delay_us", "storage time must be non-negative");
    const double phase = larmor_phase(t_us, params) + rng.normal(0.0, jitter_sigma(t_us, params));
    return rho.with_atom_unitary(larmor_unitary(phase)).with_atom_dephasing(coherence_factor(t_us, params));
}

AtomState apply_memory_channel(const AtomState& rho, double t_us, const NodeParams& params) {
    if (!(t_us >= 0.0)) throw ValidationError("delay_us", "storage time must be non-negative");
    return rho.transformed(larmor_unitary(larmor_phase(t_us, params))).dephased(coherence_factor(t_us, params));
}

AtomState apply_memory_channel(const AtomState& rho, double t_us, const NodeParams& params, Rng& rng) {
    if (!(t_us >= 0.0)) throw ValidationError("delay_us", "storage time must be non-negative");
    const double phase = larmor_phase(t_us, params) + rng.normal(0.0, jitter_sigma(t_us, params));
    return rho.transformed(larmor_unitary(phase)).dephased(coherence_factor(t_us, params));
}

Matrix2c raman_unitary(double error_rad) {
    const double half = 0.5 * (std::numbers::pi / 2.0 + error_rad);
    const double c = std::cos(half);
    const double s = std::sin(half);
    // cos(h) I + i sin(h) sigma_y
    Matrix2c r;
    r << c, s, -s, c;
    return r;
}

TwoQubitState raman_transfer(const TwoQubitState& rho, double error_rad) {
    return rho.with_atom_unitary(raman_unitary(error_rad));
}

AtomState raman_transfer(const AtomState& rho, double error_rad) { return rho.transformed(raman_unitary(error_rad)); }

std::array<double, 2> readout_probabilities(const AtomState& atom, ReadoutBasis basis, double delay_us,
                                            const NodeParams& params) {
    AtomState s = apply_memory_channel(atom, delay_us, params).dephased(jitter_dephasing_factor(delay_us, params));
    if (basis == ReadoutBasis::x) s = raman_transfer(s, params.raman_error_rad);
    const double down = std::clamp(s.population(AtomLevel::down), 0.0, 1.0);
    return {down, 1.0 - down};
}

ReadoutSample readout_sample(const AtomState& atom, ReadoutBasis basis, double delay_us, const NodeParams& params,
                             bool heralded, Rng& rng, double detector_eff, double phase_elapsed_us) {
    if (!heralded) throw ValidationError("herald", "readout requested for an un-heralded trial");
    if (!(detector_eff >= 0.0 && detector_eff <= 1.0)) {
        throw ValidationError("detector_eff", "must be in [0, 1]");
    }
    AtomState s = apply_memory_channel(atom, delay_us, params, rng);
    if (basis == ReadoutBasis::x) s = raman_transfer(s, params.raman_error_rad);
    const double p_down = std::clamp(s.population(AtomLevel::down), 0.0, 1.0);

    const double eta = retrieval_efficiency(delay_us, params, phase_elapsed_us);
    const double det = detector_eff * params.readout_path_eff;
    const double sig_down = eta * params.eta_down * p_down * det;
    const double sig_up = eta * params.eta_up * (1.0 - p_down) * det;

    ReadoutSample out;
    const double u = rng.uniform();
    if (u < sig_down) {
        out.retrieved = true;
        out.outcome = AtomLevel::down;
    } else if (u < sig_down + sig_up) {
        out.retrieved = true;
        out.outcome = AtomLevel::up;
    }
    // Noise photons (read-pulse leakage) are unpolarized with respect to the atomic basis.
    const double noise = det / params.readout_snr_factor;
    const double v = rng.uniform();
    if (v < noise) {
        out.readout_noise_click = true;
        if (!out.outcome) out.outcome = rng.bernoulli(0.5) ? AtomLevel::up : AtomLevel::down;
    }
    return out;
}

}  // namespace qlink
