#include "qlink/link_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "qlink/errors.hpp"
#include "qlink/sequencer.hpp"

namespace qlink {

namespace {

double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
    double flo = f(lo);
    const double fhi = f(hi);
    if (flo * fhi > 0.0) throw ValidationError("calibration", "target outside the reachable range");
    for (int i = 0; i < iters && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Unweighted a + b cos + c sin at a known period, V = sqrt(b^2 + c^2) / a.
double sine_visibility(const std::vector<double>& x, const std::vector<double>& y, double period) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), 3);
    Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ph = 2.0 * std::numbers::pi * x[i] / period;
        const auto r = static_cast<Eigen::Index>(i);
        m(r, 0) = 1.0;
        m(r, 1) = std::cos(ph);
        m(r, 2) = std::sin(ph);
        v(r) = y[i];
    }
    const Eigen::Vector3d p = m.colPivHouseholderQr().solve(v);
    if (p(0) <= 0.0) return 0.0;
    return std::hypot(p(1), p(2)) / p(0);
}

// Unnormalized atomic operator tr_photon[(I x E) rho].
Matrix2c atom_partial(const TwoQubitState& rho, const Matrix2c& e) {
    const Matrix4c m = kron(Matrix2c::Identity(), e) * rho.matrix();
    Matrix2c out;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) out(a, b) = m(2 * a, 2 * b) + m(2 * a + 1, 2 * b + 1);
    }
    return out;
}

// Expected read-out probabilities {down, up} for an unnormalized atomic operator.
std::array<double, 2> readout_weights(const Matrix2c& sigma, ReadoutBasis basis, double delay_us,
                                      const LinkConfig& cfg) {
    const double w = sigma.trace().real();
    const double r = retrieval_efficiency(delay_us, cfg.node) * readout_detection_eff(cfg);
    const double q = readout_detection_eff(cfg) / cfg.node.readout_snr_factor;
    if (w <= 1e-300) return {0.0, 0.0};
    Matrix2c n = sigma / w;
    n = 0.5 * (n + n.adjoint()).eval();
    const auto pop = readout_probabilities(AtomState(n, 1e-8), basis, delay_us, cfg.node);
    const double sd = r * cfg.node.eta_down * pop[0];
    const double su = r * cfg.node.eta_up * pop[1];
    const double miss = 1.0 - sd - su;
    return {w * (sd + miss * q / 2.0), w * (su + miss * q / 2.0)};
}

struct SnrPair {
    double full = 0.0;
    double fwhm = 0.0;
};

// Expected herald-time histogram per trial, evaluated with the same bin classification
// as snr_from_histogram.
SnrPair herald_snr(const LinkConfig& cfg, double p_signal) {
    const PulseShape& pulse = cfg.herald_pulse;
    const double record = cfg.herald().window_ns;
    const double bg_per_ns = 2.0 * (herald_noise_cps(cfg) + herald_dark_cps(cfg)) * 1e-9;
    const auto n = static_cast<std::size_t>(std::ceil(record));
    std::vector<double> bins(n);
    double peak_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = static_cast<double>(i);
        const double b = std::min(a + 1.0, record);
        bins[i] = p_signal * (pulse.cdf(b) - pulse.cdf(a)) + bg_per_ns * (b - a);
        peak_mass = std::max(peak_mass, p_signal * (pulse.cdf(b) - pulse.cdf(a)));
    }
    const double ws = pulse.window_start_ns();
    const double we = pulse.window_end_ns();
    double bg = 0.0;
    std::size_t nb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i);
        if (!(s >= ws && s < we)) {
            bg += bins[i];
            ++nb;
        }
    }
    bg /= static_cast<double>(nb);
    auto snr_over = [&](const std::function<bool(std::size_t)>& in) {
        double sum = 0.0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (in(i)) {
                sum += bins[i];
                ++k;
            }
        }
        return k && bg > 0.0 ? (sum / static_cast<double>(k) - bg) / bg : 0.0;
    };
    SnrPair out;
    out.full = snr_over([&](std::size_t i) {
        const double s = static_cast<double>(i);
        return s >= ws && s < we;
    });
    out.fwhm = snr_over([&](std::size_t i) {
        const double s = static_cast<double>(i);
        const double m = p_signal * (pulse.cdf(s + 1.0) - pulse.cdf(s));
        return m >= 0.5 * peak_mass;
    });
    return out;
}

std::vector<MeasurementSetting> basis_settings(const LinkConfig& cfg, ReadoutBasis basis) {
    std::vector<MeasurementSetting> out;
    for (const auto& s : measurement_settings(cfg)) {
        if (s.basis == basis) out.push_back(s);
    }
    return out;
}

double fringe_period(const LinkConfig& cfg, ReadoutBasis basis) {
    return basis == ReadoutBasis::z ? 90.0 : larmor_period_us(cfg.node);
}

double mean_storage_time(const LinkConfig& cfg, ReadoutBasis basis) {
    const auto settings = basis_settings(cfg, basis);
    double t = 0.0;
    for (const auto& s : settings) t += readout_storage_time_us(cfg, s);
    return settings.empty() ? 0.0 : t / static_cast<double>(settings.size());
}

}  // namespace

std::array<double, 2> photon_path_transmission(const LinkConfig& cfg) {
    double common = cfg.filter.analyzer_eff * transmittance(cfg.fiber.length_km, cfg.fiber.atten_db_per_km);
    if (cfg.filter.enabled) common *= cfg.filter.bpf_coupling_eff;
    return {qfc_arm_transmission(Arm::h, cfg.qfc, cfg.filter) * common,
            qfc_arm_transmission(Arm::v, cfg.qfc, cfg.filter) * common};
}

Matrix2c photon_kraus(const LinkConfig& cfg) {
    const auto t = photon_path_transmission(cfg);
    const double dphi = cfg.qfc.enabled ? locked_conversion_phase(cfg.sagnac) : 0.0;
    return std::sqrt(cfg.herald().efficiency) * qfc_kraus(t[0], t[1], dphi);
}

double herald_noise_cps(const LinkConfig& cfg) {
    if (!cfg.qfc.enabled || cfg.herald().efficiency == 0.0) return 0.0;
    return cfg.qfc.noise_rate_cps * transmittance(cfg.fiber.length_km, cfg.fiber.atten_db_per_km);
}

// A detector with zero efficiency is treated as switched off.
double herald_dark_cps(const LinkConfig& cfg) {
    return cfg.herald().efficiency == 0.0 ? 0.0 : cfg.herald().dark_rate_cps;
}

double herald_background_probability(const LinkConfig& cfg) {
    return poisson_click_probability(2.0 * (herald_noise_cps(cfg) + herald_dark_cps(cfg)), cfg.herald().window_ns);
}

double readout_storage_time_us(const LinkConfig& cfg, const MeasurementSetting& s) {
    return propagation_delay(cfg.fiber.length_km, cfg.fiber) + s.extra_delay_us;
}

double readout_detection_eff(const LinkConfig& cfg) { return cfg.apd.efficiency * cfg.node.readout_path_eff; }

FringeExpectation expected_fringe(const LinkConfig& cfg, ReadoutBasis basis) {
    cfg.validate();
    const TwoQubitState rho = initial_state(cfg.node);
    const double p = cfg.node.effective_excitation();
    const double n = herald_background_probability(cfg);
    const double q = readout_detection_eff(cfg) / cfg.node.readout_snr_factor;
    const Matrix2c a = photon_kraus(cfg);

    FringeExpectation out;
    for (const auto& s : basis_settings(cfg, basis)) {
        AnalyzerSetting at = s.analyzer;
        at.port = PbsPort::transmit;
        AnalyzerSetting ar = s.analyzer;
        ar.port = PbsPort::reflect;
        const Matrix2c et = a.adjoint() * projector(at) * a;
        const Matrix2c er = a.adjoint() * projector(ar) * a;
        const Matrix2c eu = Matrix2c::Identity() - et - er;
        const double t = readout_storage_time_us(cfg, s);

        const auto rt = readout_weights(atom_partial(rho, et), basis, t, cfg);
        const auto rr = readout_weights(atom_partial(rho, er), basis, t, cfg);
        const auto ru = readout_weights(atom_partial(rho, eu), basis, t, cfg);

        // Correlated: transmit herald with |down>, reflect herald with |up>.
        double corr = p * (rt[0] + rr[1]);
        double total = p * (rt[0] + rt[1] + rr[0] + rr[1]);
        // Background heralds, split evenly over the two channels.
        corr += n / 2.0 * (p * (ru[0] + ru[1]) + (1.0 - p) * q);
        total += n * (p * (ru[0] + ru[1]) + (1.0 - p) * q);

        out.settings.push_back(s.value);
        out.correlated.push_back(corr);
        out.total.push_back(total);
    }
    return out;
}

double herald_probability(const LinkConfig& cfg) {
    const double p = cfg.node.effective_excitation();
    const Matrix2c a = photon_kraus(cfg);
    const double h = (a.adjoint() * a).trace().real() / 2.0;
    const double n = herald_background_probability(cfg);
    return p * h + n - p * h * n;
}

double expected_visibility(const LinkConfig& cfg, ReadoutBasis basis) {
    const FringeExpectation f = expected_fringe(cfg, basis);
    if (f.settings.size() < 3) return 0.0;
    std::vector<double> frac(f.total.size());
    for (std::size_t i = 0; i < frac.size(); ++i) frac[i] = f.total[i] > 0.0 ? f.correlated[i] / f.total[i] : 0.0;
    return sine_visibility(f.settings, frac, fringe_period(cfg, basis));
}

LinkPrediction predict(const LinkConfig& cfg) {
    cfg.validate();
    LinkPrediction out;
    out.p_eff = cfg.node.effective_excitation();
    const Matrix2c a = photon_kraus(cfg);
    out.herald_efficiency = (a.adjoint() * a).trace().real() / 2.0;
    out.background_probability = herald_background_probability(cfg);
    out.herald_probability = herald_probability(cfg);
    const SnrPair snr = herald_snr(cfg, out.p_eff * out.herald_efficiency);
    out.herald_snr_full = snr.full;
    out.herald_snr_fwhm = snr.fwhm;
    const double t = mean_storage_time(cfg, ReadoutBasis::z);
    const double eta = retrieval_efficiency(t, cfg.node);
    out.readout_signal = eta * readout_detection_eff(cfg);
    out.readout_noise = readout_detection_eff(cfg) / cfg.node.readout_snr_factor;
    out.readout_snr = cfg.node.readout_snr_factor * eta;
    out.z = expected_fringe(cfg, ReadoutBasis::z);
    out.x = expected_fringe(cfg, ReadoutBasis::x);
    auto vis = [&](const FringeExpectation& f, ReadoutBasis b) {
        if (f.settings.size() < 3) return 0.0;
        std::vector<double> frac(f.total.size());
        for (std::size_t i = 0; i < frac.size(); ++i) frac[i] = f.total[i] > 0.0 ? f.correlated[i] / f.total[i] : 0.0;
        return sine_visibility(f.settings, frac, fringe_period(cfg, b));
    };
    out.vz = vis(out.z, ReadoutBasis::z);
    out.vx = vis(out.x, ReadoutBasis::x);
    out.fidelity = fidelity_from_visibilities(out.vz, out.vx);
    return out;
}

double calibrate_multi_excitation(const LinkConfig& cfg, double target_vz) {
    const double p = cfg.node.effective_excitation();
    if (!(p > 0.0)) throw ValidationError("node.p_exc", "must be positive to calibrate multi-excitation noise");
    LinkConfig c = cfg;
    return bisect(
        [&](double k) {
            c.node.multi_excitation_coeff = k;
            return expected_visibility(c, ReadoutBasis::z) - target_vz;
        },
        0.0, 1.0 / p);
}

double calibrate_raman_error(double factor) {
    if (!(factor > 0.0 && factor <= 1.0)) throw ValidationError("factor", "must be in (0, 1]");
    return std::acos(factor);
}

double calibrate_excitation(const LinkConfig& cfg, double target_herald) {
    LinkConfig c = cfg;
    return bisect(
        [&](double p) {
            c.node.p_exc = p;
            return herald_probability(c) - target_herald;
        },
        0.0, 1.0);
}

double excitation_for_effective(const LinkConfig& cfg, double target_p_eff) {
    const double p = target_p_eff / cfg.node.pump_init_eff;
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("node.p_exc", "effective excitation not reachable");
    return p;
}

DecoherenceCalibration calibrate_decoherence(const LinkConfig& cfg, double target_vx) {
    const double tbar = mean_storage_time(cfg, ReadoutBasis::x);
    if (!(tbar > 0.0)) throw ValidationError("fiber", "x-basis storage time must be positive");
    auto with_factor = [&](double g) {
        LinkConfig c = cfg;
        const double half_log = -0.5 * std::log(g);  // each mechanism contributes sqrt(g)
        c.node.coherence_tau_us = half_log > 0.0 ? tbar / half_log : std::numeric_limits<double>::infinity();
        c.node.phase_jitter_sigma_rad = std::sqrt(2.0 * half_log) * c.node.tau_mem_us / tbar;
        return c;
    };
    const double g = bisect(
        [&](double g) { return expected_visibility(with_factor(g), ReadoutBasis::x) - target_vx; }, 1e-6, 1.0);
    const LinkConfig c = with_factor(g);
    return {c.node.coherence_tau_us, c.node.phase_jitter_sigma_rad, g};
}

double calibrate_readout_path(const LinkConfig& cfg, double target_readouts_per_herald) {
    LinkConfig c = cfg;
    return bisect(
        [&](double e) {
            c.node.readout_path_eff = e;
            const FringeExpectation f = expected_fringe(c, ReadoutBasis::z);
            double total = 0.0;
            for (double v : f.total) total += v;
            total /= static_cast<double>(f.total.size());
            return total / herald_probability(c) - target_readouts_per_herald;
        },
        1e-9, 1.0);
}

double calibrate_aux_dead(const LinkConfig& cfg, double hours, double target_heralds, ReadoutBasis basis) {
    LinkConfig c = cfg;
    c.sequence.aux_dead_fraction = 0.0;
    const auto all = measurement_settings(c);
    const double share = static_cast<double>(basis_settings(c, basis).size()) / static_cast<double>(all.size());
    const double heralds = hours * 3600.0 * repetition_rate(c) * 1e3 * herald_probability(c) * share;
    const double f = 1.0 - target_heralds / heralds;
    if (!(f >= 0.0 && f < 1.0)) {
        throw ValidationError("sequence.aux_dead_fraction", "target herald count exceeds the dead-time-free yield");
    }
    return f;
}

}  // namespace qlink
