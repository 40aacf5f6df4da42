#pragma once

// Polarization-independent frequency converter (780 nm -> 1522 nm) in a Sagnac loop,
// plus the filter stack behind it.

#include <numbers>
#include <string>
#include <vector>

#include "qlink/polarization.hpp"
#include "qlink/random.hpp"

namespace qlink {

enum class Arm { h, v };

struct QfcParams {
    bool enabled = true;
    double eta_max_h = 0.472;  ///< peak EQE per arm, filter module included
    double eta_max_v = 0.485;
    double p_peak_w = 1.749;
    double pump_power_w = 1.749;  ///< operating point
    double crystal_length_mm = 50.0;
    double noise_rate_cps = 250.0;
    double internal_eff = 0.945;
    double coupling_eff = 0.892;
    double optics_eff = 0.862;

    void validate() const;
    double eta_max(Arm arm) const { return arm == Arm::h ? eta_max_h : eta_max_v; }
    /// Fixed by the peak condition alpha * P_peak * Lc^2 = (pi/2)^2. Units W^-1 mm^-2.
    double alpha_nor() const;
};

struct FilterParams {
    bool enabled = true;
    double flange_fpc_eff = 0.915;
    double etalon_eff = 0.749;
    double vbg_eff = 0.977;
    double bpf_coupling_eff = 0.826;  ///< second BPF plus fiber coupling before the SNSPD
    double analyzer_eff = 0.93;       ///< HWP + PBS + Faraday rotator
    double etalon_fwhm_mhz = 27.0;
    double etalon_fsr_ghz = 15.0;
    double vbg_fwhm_ghz = 25.0;

    void validate() const;
};

/// eta_max(arm) * sin^2(sqrt(alpha P) Lc). Throws on negative power.
double dfg_efficiency(double pump_w, Arm arm, const QfcParams& params);

/// One named multiplicative stage of a loss chain.
struct LossStage {
    std::string name;
    double efficiency = 1.0;
};

std::vector<LossStage> converter_stages(const QfcParams& params);
std::vector<LossStage> filter_stages(const FilterParams& params);
double chain_product(const std::vector<LossStage>& stages);

/// Converter alone (filter excluded), V arm: coupling * optics * internal.
double converter_eqe(const QfcParams& params, Arm arm = Arm::v);
/// flange/FPC * etalon * VBG.
double filter_transmission(const FilterParams& params);

/// Per-arm photon transmission from the converter input through the filter module at
/// the operating pump power. The dfg curve already contains the filter loss; with the
/// filter disabled that loss is divided back out. With the converter disabled only the
/// filter stages (if enabled) remain.
double qfc_arm_transmission(Arm arm, const QfcParams& qfc, const FilterParams& filter);

struct NoiseComponent {
    std::string name;
    double cps = 0.0;
};

struct NoiseBudget {
    std::vector<NoiseComponent> components;
    double total_cps = 0.0;
};

/// Per detector channel: converter noise plus detector dark counts.
NoiseBudget noise_budget(double converter_cps, double dark_cps);
NoiseBudget noise_budget(const QfcParams& qfc, double dark_cps);

/// Path lengths in metres, wavevectors in rad/m, dispersion phases in rad.
struct SagnacGeometry {
    double l1_m = 0.30;
    double l2_m = 0.30;
    double s1_m = 0.15;
    double s2_m = 0.15;
    double k_s = 2.0 * std::numbers::pi / 780.241e-9;
    double k_c = 2.0 * std::numbers::pi / 1522.0e-9;
    double k_p = k_s - k_c;
    double disp_h = 0.0;
    double disp_v = 0.0;
    double disp_m2 = 0.0;
    double disp_m3 = 0.0;
    double pump_leak_w = 1e-3;

    /// Wavevectors from vacuum wavelengths; k_p is set to k_s - k_c.
    static SagnacGeometry from_wavelengths(double lambda_s_nm = 780.241, double lambda_c_nm = 1522.0);
    /// Checks k_p = k_s - k_c within 1e-6 relative and non-negative lengths/power.
    void validate() const;
};

/// Output phase of the H-input branch (converted light leaves the loop H-polarized).
double conversion_phase_h(const SagnacGeometry& g);
/// Output phase of the V-input branch.
double conversion_phase_v(const SagnacGeometry& g);
/// phi_conH - phi_conV reduced with k_p = k_s - k_c: k_p (2 S2 + L2 - L1) + (disp_H - disp_V).
double conversion_phase_difference(const SagnacGeometry& g);
/// k_p (2 S2 + L2 - L1) + (disp_M3 - disp_M2).
double pump_phase_difference(const SagnacGeometry& g);
/// Conversion phase left over when the pump phase is locked to 0 mod 2 pi.
double locked_conversion_phase(const SagnacGeometry& g);
/// 2 P_leak sin(dphi_p).
double lock_error_signal(const SagnacGeometry& g);

struct LockState {
    double pzt_m = 0.0;
    double integrator = 0.0;  ///< running sum of the error signal (W)
    double last_error = 0.0;  ///< error signal at the previous step (W)
};

struct LockGains {
    double kp = 5e-6;   ///< m/W
    double ki = 1.5e-5;  ///< m/W per step
};

/// Geometry seen by the loop: S2 + drift + pzt.
SagnacGeometry perturbed_geometry(const SagnacGeometry& g, const LockState& state, double drift_m);

/// One discrete PI update. The PZT output is -(kp e + ki sum e) on top of its starting
/// value, where e is the error signal with the current PZT setting; since dE/dS2 > 0
/// near the lock point this drives dphi_p to 0 mod 2 pi.
/// `drift_m` is the current (absolute) disturbance of S2.
LockState lock_loop_step(const LockState& state, const SagnacGeometry& g, const LockGains& gains, double drift_m);

/// dphi_p wrapped to (-pi, pi] for the perturbed geometry.
double residual_pump_phase(const LockState& state, const SagnacGeometry& g, double drift_m);

/// Kraus operator of the converter (filter included) in the circular basis:
/// diag(sqrt(eta_H) e^{i dphi}, sqrt(eta_V)) in {H, V}.
Matrix2c qfc_kraus(double eta_h, double eta_v, double dphi);

struct ConversionResult {
    bool survived = false;
    JonesVector pol_out;  ///< normalized output polarization
};

/// Samples survival from the transmitted norm and returns the output polarization.
/// Throws ValidationError for unnormalized input.
ConversionResult convert_photon(const JonesVector& pol, double eta_h, double eta_v, double dphi, Rng& rng);
ConversionResult convert_photon(const JonesVector& pol, const QfcParams& qfc, const FilterParams& filter,
                                const SagnacGeometry& g, Rng& rng);

}  // namespace qlink
