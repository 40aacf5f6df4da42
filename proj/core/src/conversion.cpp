#include "qlink/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
}

bool unit_interval(double x) { return x > 0.0 && x <= 1.0; }

double wrap_phase(double x) {
    const double two_pi = 2.0 * std::numbers::pi;
    double r = std::remainder(x, two_pi);
    if (r <= -std::numbers::pi) r += two_pi;
    return r;
}

}  // namespace

void QfcParams::validate() const {
    require(unit_interval(eta_max_h), "qfc.eta_max_h", "must be in (0, 1]");
    require(unit_interval(eta_max_v), "qfc.eta_max_v", "must be in (0, 1]");
    require(std::isfinite(p_peak_w) && p_peak_w > 0.0, "qfc.p_peak_w", "must be positive");
    require(std::isfinite(pump_power_w) && pump_power_w >= 0.0, "qfc.pump_power_w", "must be non-negative");
    require(std::isfinite(crystal_length_mm) && crystal_length_mm > 0.0, "qfc.crystal_length_mm", "must be positive");
    require(std::isfinite(noise_rate_cps) && noise_rate_cps >= 0.0, "qfc.noise_rate_cps", "must be non-negative");
    require(unit_interval(internal_eff), "qfc.internal_eff", "must be in (0, 1]");
    require(unit_interval(coupling_eff), "qfc.coupling_eff", "must be in (0, 1]");
    require(unit_interval(optics_eff), "qfc.optics_eff", "must be in (0, 1]");
}

double QfcParams::alpha_nor() const {
    const double q = std::numbers::pi / 2.0;
    return q * q / (p_peak_w * crystal_length_mm * crystal_length_mm);
}

void FilterParams::validate() const {
    require(unit_interval(flange_fpc_eff), "filter.flange_fpc_eff", "must be in (0, 1]");
    require(unit_interval(etalon_eff), "filter.etalon_eff", "must be in (0, 1]");
    require(unit_interval(vbg_eff), "filter.vbg_eff", "must be in (0, 1]");
    require(unit_interval(bpf_coupling_eff), "filter.bpf_coupling_eff", "must be in (0, 1]");
    require(unit_interval(analyzer_eff), "filter.analyzer_eff", "must be in (0, 1]");
    require(etalon_fwhm_mhz > 0.0, "filter.etalon_fwhm_mhz", "must be positive");
    require(etalon_fsr_ghz > 0.0, "filter.etalon_fsr_ghz", "must be positive");
    require(vbg_fwhm_ghz > 0.0, "filter.vbg_fwhm_ghz", "must be positive");
}

double dfg_efficiency(double pump_w, Arm arm, const QfcParams& params) {
    if (!(pump_w >= 0.0)) throw ValidationError("qfc.pump_power_w", "pump power must be non-negative");
    const double s = std::sin(std::sqrt(params.alpha_nor() * pump_w) * params.crystal_length_mm);
    return params.eta_max(arm) * s * s;
}

std::vector<LossStage> converter_stages(const QfcParams& params) {
    return {{"fiber_coupling", params.coupling_eff},
            {"optics", params.optics_eff},
            {"internal", params.internal_eff}};
}

std::vector<LossStage> filter_stages(const FilterParams& params) {
    return {{"flange_fpc", params.flange_fpc_eff}, {"etalon", params.etalon_eff}, {"vbg", params.vbg_eff}};
}

double chain_product(const std::vector<LossStage>& stages) {
    double p = 1.0;
    for (const auto& s : stages) p *= s.efficiency;
    return p;
}

double converter_eqe(const QfcParams& params, Arm arm) {
    const double v = chain_product(converter_stages(params));
    // Only the V-arm breakdown is itemized; the H arm keeps the same stage shape,
    // scaled by the ratio of the measured peak EQEs.
    return arm == Arm::v ? v : v * params.eta_max_h / params.eta_max_v;
}

double filter_transmission(const FilterParams& params) { return chain_product(filter_stages(params)); }

double qfc_arm_transmission(Arm arm, const QfcParams& qfc, const FilterParams& filter) {
    if (!qfc.enabled) return filter.enabled ? filter_transmission(filter) : 1.0;
    double eta = dfg_efficiency(qfc.pump_power_w, arm, qfc);
    if (!filter.enabled) eta /= filter_transmission(filter);
    return std::min(eta, 1.0);
}

NoiseBudget noise_budget(double converter_cps, double dark_cps) {
    NoiseBudget b;
    b.components = {{"converter", converter_cps}, {"detector_dark", dark_cps}};
    for (const auto& c : b.components) b.total_cps += c.cps;
    return b;
}

NoiseBudget noise_budget(const QfcParams& qfc, double dark_cps) {
    return noise_budget(qfc.enabled ? qfc.noise_rate_cps : 0.0, dark_cps);
}

SagnacGeometry SagnacGeometry::from_wavelengths(double lambda_s_nm, double lambda_c_nm) {
    SagnacGeometry g;
    g.k_s = 2.0 * std::numbers::pi / (lambda_s_nm * 1e-9);
    g.k_c = 2.0 * std::numbers::pi / (lambda_c_nm * 1e-9);
    g.k_p = g.k_s - g.k_c;
    return g;
}

void SagnacGeometry::validate() const {
    require(l1_m >= 0.0 && l2_m >= 0.0 && s1_m >= 0.0, "qfc.sagnac", "path lengths must be non-negative");
    require(k_s > 0.0 && k_c > 0.0 && k_p > 0.0, "qfc.sagnac", "wavevectors must be positive");
    require(std::abs(k_p - (k_s - k_c)) <= 1e-6 * k_p, "qfc.sagnac.k_p", "k_p must equal k_s - k_c");
    require(pump_leak_w >= 0.0, "qfc.sagnac.pump_leak_w", "must be non-negative");
}

double conversion_phase_h(const SagnacGeometry& g) {
    return g.k_s * g.l2_m - g.k_p * g.s1_m + g.k_c * g.l1_m + g.disp_h;
}

double conversion_phase_v(const SagnacGeometry& g) {
    return g.k_s * g.l1_m - g.k_p * (g.s1_m + 2.0 * g.s2_m) + g.k_c * g.l2_m + g.disp_v;
}

double conversion_phase_difference(const SagnacGeometry& g) {
    return g.k_p * (2.0 * g.s2_m + g.l2_m - g.l1_m) + (g.disp_h - g.disp_v);
}

double pump_phase_difference(const SagnacGeometry& g) {
    return g.k_p * (2.0 * g.s2_m + g.l2_m - g.l1_m) + (g.disp_m3 - g.disp_m2);
}

double locked_conversion_phase(const SagnacGeometry& g) {
    return (g.disp_h - g.disp_v) - (g.disp_m3 - g.disp_m2);
}

double lock_error_signal(const SagnacGeometry& g) { return 2.0 * g.pump_leak_w * std::sin(pump_phase_difference(g)); }

SagnacGeometry perturbed_geometry(const SagnacGeometry& g, const LockState& state, double drift_m) {
    SagnacGeometry out = g;
    out.s2_m += drift_m + state.pzt_m;
    return out;
}

LockState lock_loop_step(const LockState& state, const SagnacGeometry& g, const LockGains& gains, double drift_m) {
    if (gains.kp < 0.0 || gains.ki < 0.0) throw ValidationError("qfc.lock", "gains must be non-negative");
    const double e = lock_error_signal(perturbed_geometry(g, state, drift_m));
    LockState next;
    next.integrator = state.integrator + e;
    next.last_error = e;
    // u = -(kp e + ki sum e), applied incrementally so the PZT keeps its starting offset
    next.pzt_m = state.pzt_m - gains.kp * (e - state.last_error) - gains.ki * e;
    return next;
}

double residual_pump_phase(const LockState& state, const SagnacGeometry& g, double drift_m) {
    return wrap_phase(pump_phase_difference(perturbed_geometry(g, state, drift_m)));
}

Matrix2c qfc_kraus(double eta_h, double eta_v, double dphi) {
    Matrix2c hv = Matrix2c::Zero();
    hv(0, 0) = std::sqrt(eta_h) * std::polar(1.0, dphi);
    hv(1, 1) = std::sqrt(eta_v);
    const Matrix2c& c = linear_to_circular();
    return c * hv * c.adjoint();
}

ConversionResult convert_photon(const JonesVector& pol, double eta_h, double eta_v, double dphi, Rng& rng) {
    if (!pol.is_normalized(1e-9)) throw ValidationError("polarization", "input Jones vector is not normalized");
    const Vector2c out = qfc_kraus(eta_h, eta_v, dphi) * pol.vector();
    const double p = out.squaredNorm();
    ConversionResult r;
    r.survived = rng.uniform() < p;
    r.pol_out = p > 0.0 ? JonesVector::from_vector(out / std::sqrt(p)) : pol;
    return r;
}

ConversionResult convert_photon(const JonesVector& pol, const QfcParams& qfc, const FilterParams& filter,
                                const SagnacGeometry& g, Rng& rng) {
    const double eh = qfc_arm_transmission(Arm::h, qfc, filter);
    const double ev = qfc_arm_transmission(Arm::v, qfc, filter);
    return convert_photon(pol, eh, ev, locked_conversion_phase(g), rng);
}

}  // namespace qlink
