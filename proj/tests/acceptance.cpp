// Acceptance run: one PASS/FAIL line per criterion at the pinned tolerances.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qlink/analysis.hpp"
#include "qlink/config.hpp"
#include "qlink/conversion.hpp"
#include "qlink/detection.hpp"
#include "qlink/fiber.hpp"
#include "qlink/link_model.hpp"
#include "qlink/node.hpp"
#include "qlink/random.hpp"
#include "qlink/runner.hpp"
#include "qlink/sequencer.hpp"

using namespace qlink;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

LinkConfig shipped(const std::string& name) { return load_config(std::string(QLINK_SOURCE_ROOT) + "/configs/" + name); }

std::string csv_of(const SessionResult& r) {
    std::ostringstream os;
    write_trials_csv(os, r.records);
    write_events_csv(os, r.events);
    return os.str();
}

void fidelity_formula(Verdict& o) {
    const double f = fidelity_from_visibilities(0.955, 0.942);
    o.detail << "F(0.955, 0.942) = " << f;
    o.check(std::abs(f - 0.9598) <= 0.0005, "|F - 0.9598| <= 0.0005");
}

void twenty_km_fidelity(Verdict& o) {
    const double f0 = fidelity_from_visibilities(0.890, 0.836);
    const LinkConfig cfg = shipped("km20.cfg");
    RunOptions opt;
    opt.duration_s = cfg.run.duration_s;
    opt.write_files = false;
    const Json s = cmd_run(cfg, opt);
    const double f = s["fidelity"]["value"].get<double>(), sf = s["fidelity"]["sigma"].get<double>();
    o.detail << "F(0.890, 0.836) = " << f0 << ", simulated F = " << f << " +- " << sf << " over "
             << s["trials"].get<std::uint64_t>() << " trials";
    o.check(std::abs(f0 - 0.8905) <= 5e-5, "formula gives 0.8905");
    o.check(f > 0.80, "F > 0.80");
    o.check(std::abs(f - 0.89) <= 0.04, "|F - 0.89| <= 0.04");
}

void snr_model_criterion(Verdict& o) {
    SnrModelParams p;
    p.r_exc = calibrate_r_exc(100.0, 6.9, p);
    const double at100 = snr_model(100.0, p);
    bool monotone = true;
    for (double l = 0; l < 200; l += 0.5) monotone = monotone && snr_model(l + 0.5, p) <= snr_model(l, p);
    SnrModelParams dark_free = p;
    dark_free.r_dark = 0.0;
    bool constant = true;
    for (double l = 0; l <= 200; l += 5) constant = constant && std::abs(snr_model(l, dark_free) - snr_model(0, dark_free)) < 1e-9;
    o.detail << "R_exc = " << p.r_exc << ", snr_model(100) = " << at100;
    o.check(std::abs(at100 - 6.9) < 1e-9, "snr_model(100) = 6.9");
    o.check(monotone, "non-increasing in L");
    o.check(constant, "constant with R_dark = 0");
}

void larmor(Verdict& o) {
    const double t = larmor_period_us(NodeParams{});
    const double phase = larmor_phase(t, NodeParams{});
    o.detail << "period = " << t << " us";
    o.check(std::abs(t - 5.60) <= 0.05, "period 5.60 +- 0.05 us");
    o.check(std::abs(phase - 2 * kPi) < 1e-9, "larmor_phase(period) = 2 pi");
}

void readout_delays(Verdict& o) {
    const AffineFit f = fit_affine({0.01, 5.0, 10.0, 20.0}, {1.10, 25.65, 50.15, 99.25});
    double worst = 0;
    for (double r : f.residuals) worst = std::max(worst, std::abs(r));
    const double d20 = propagation_delay(20.0, FiberParams{});
    o.detail << "max residual = " << worst << " us, delay(20 km) = " << d20 << " us";
    o.check(worst < 0.35, "residuals < 0.35 us");
    o.check(std::abs(d20 - 99.25) <= 0.35, "delay(20 km) = 99.25 +- 0.35 us");
}

void repetition_rates(Verdict& o) {
    const std::vector<std::pair<std::string, double>> table{
        {"local.cfg", 31.4}, {"telecom_10m.cfg", 31.0}, {"km5.cfg", 5.8}, {"km10.cfg", 3.4}, {"km20.cfg", 1.7}};
    for (const auto& [name, khz] : table) {
        const double r = repetition_rate(shipped(name));
        o.detail << name << " " << r << " kHz; ";
        o.check(std::abs(r - khz) / khz < 0.15, name + " within 15% of " + std::to_string(khz));
    }
    const int local = build_schedule(shipped("local.cfg")).cycles_per_load;
    const int far = build_schedule(shipped("km20.cfg")).cycles_per_load;
    o.detail << "cycles/load " << local << ", " << far;
    o.check(local == 1000, "1000 cycles per load locally");
    o.check(far == 60, "60 cycles per load at 20 km");
}

void loss_chain(Verdict& o) {
    const double eqe = converter_eqe(QfcParams{}), filt = filter_transmission(FilterParams{});
    const double noise = noise_budget(QfcParams{}, DetectorParams::snspd().dark_rate_cps).total_cps;
    o.detail << "EQE = " << eqe << ", filter = " << filt << ", noise = " << noise << " cps";
    o.check(std::abs(eqe - 0.726) <= 0.002, "EQE 72.6% +- 0.2%");
    o.check(std::abs(filt - 0.669) <= 0.002, "filter 66.9% +- 0.2%");
    o.check(std::abs(noise - 280.0) < 1e-9, "noise 280 cps");
}

void dfg_curve(Verdict& o) {
    const QfcParams q;
    const double v = dfg_efficiency(1.749, Arm::v, q), h = dfg_efficiency(1.749, Arm::h, q);
    double argmax = 0, best = -1;
    for (double p = 0.0; p <= 3.0; p += 1e-4) {
        if (dfg_efficiency(p, Arm::v, q) > best) {
            best = dfg_efficiency(p, Arm::v, q);
            argmax = p;
        }
    }
    std::vector<double> pw, eta;
    for (double p = 0.1; p <= 3.0; p += 0.1) {
        pw.push_back(p);
        eta.push_back(dfg_efficiency(p, Arm::v, q));
    }
    const EfficiencyCurveFit fit = fit_efficiency_curve(pw, eta, q.crystal_length_mm);
    o.detail << "peak " << argmax << " W, V " << v << ", H " << h << ", fit eta_max " << fit.eta_max << " p_peak "
             << fit.p_peak_w;
    o.check(std::abs(argmax - 1.749) <= 1e-4, "peak at 1.749 W");
    o.check(std::abs(v - 0.485) < 1e-12 && std::abs(h - 0.472) < 1e-12, "0.485 / 0.472 at peak");
    o.check(std::abs(fit.eta_max / 0.485 - 1) < 1e-6 && std::abs(fit.p_peak_w / 1.749 - 1) < 1e-6,
            "noiseless round trip to 1e-6");
}

void sagnac(Verdict& o) {
    Rng rng(77);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        SagnacGeometry g = SagnacGeometry::from_wavelengths();
        g.l1_m = rng.uniform(0.05, 0.5);
        g.l2_m = rng.uniform(0.05, 0.5);
        g.s1_m = rng.uniform(0.05, 0.3);
        g.s2_m = rng.uniform(0.05, 0.3);
        g.disp_h = rng.uniform(-3, 3);
        g.disp_v = rng.uniform(-3, 3);
        // Branch phases written out in extended precision and subtracted.
        const long double ph = (long double)g.k_s * g.l2_m - (long double)g.k_p * g.s1_m +
                               (long double)g.k_c * g.l1_m + g.disp_h;
        const long double pv = (long double)g.k_s * g.l1_m - (long double)g.k_p * (g.s1_m + 2.0L * g.s2_m) +
                               (long double)g.k_c * g.l2_m + g.disp_v;
        worst = std::max(worst, std::abs(conversion_phase_difference(g) - (double)(ph - pv)));
    }

    SagnacGeometry g = SagnacGeometry::from_wavelengths();
    g.l1_m = g.l2_m = 0.3;
    g.s2_m = 0.15;
    g.l1_m += std::remainder(pump_phase_difference(g), 2.0 * kPi) / g.k_p;
    LockState s;
    int steps = 0;
    double phase = 0;
    for (; steps < 1000; ++steps) {
        s = lock_loop_step(s, g, LockGains{}, 50e-9);
        phase = residual_pump_phase(s, g, 50e-9);
        if (std::abs(phase) < 1e-3) break;
    }
    o.detail << "max |closed form - subtraction| = " << worst << " rad, lock after " << steps + 1
             << " steps, |dphi_p| = " << std::abs(phase);
    o.check(worst <= 1e-9, "closed form within 1e-9");
    o.check(std::abs(phase) < 1e-3 && steps < 1000, "lock within 1000 steps");
}

void compensation(Verdict& o) {
    Rng rng(6);
    int ok = 0, probe_ok = 0;
    double worst_probe = 1.0;
    for (int i = 0; i < 1000; ++i) {
        CompensationState s;
        s.fiber_unitary = haar_random_unitary(rng);
        const CompensationState r = compensate(s);
        if (r.last_error < 1e-4) {
            ++ok;
            const JonesVector probe = (compensator_unitary(r.compensator) * s.fiber_unitary).apply(JonesVector::H());
            const double f = state_overlap(probe, JonesVector::H());
            worst_probe = std::min(worst_probe, f);
            probe_ok += f > 0.999;
        }
    }
    o.detail << ok << "/1000 converged, H probe ok in " << probe_ok << ", worst probe fidelity " << worst_probe;
    o.check(ok >= 990, ">= 99% below 1e-4");
    o.check(probe_ok == ok, "H probe > 0.999 after convergence");
}

void born_rule(Verdict& o) {
    Rng rng(2024);
    const int n = 1000000;
    double worst_z = 0;
    for (int k = 0; k < 50; ++k) {
        Matrix4c g;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
        const Matrix4c m = g * g.adjoint();
        const TwoQubitState rho(m / m.trace().real());
        NodeParams p;
        p.p_exc = 0.0;
        p.eta0 = 1.0;
        p.readout_snr_factor = 1e12;
        p.raman_error_rad = rng.uniform(-0.5, 0.5);
        const ReadoutBasis basis = k % 2 ? ReadoutBasis::x : ReadoutBasis::z;
        AnalyzerSetting a;
        a.use_qwp = true;
        a.qwp_angle = rng.uniform(0, kPi);
        a.hwp_angle = rng.uniform(0, kPi);
        const Matrix2c pt = projector(a), pr = Matrix2c::Identity() - pt;
        const Matrix2c rot = basis == ReadoutBasis::x ? raman_unitary(p.raman_error_rad) : Matrix2c::Identity();

        // Enumerated joint probabilities from explicit product effects.
        double expected[2][2];
        for (int port = 0; port < 2; ++port) {
            for (int lvl = 0; lvl < 2; ++lvl) {
                Matrix2c proj = Matrix2c::Zero();
                proj(lvl, lvl) = 1.0;
                const Matrix2c atom_eff = rot.adjoint() * proj * rot;
                const Matrix2c& ph = port == 0 ? pt : pr;
                Matrix4c eff;
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) eff.block<2, 2>(2 * i, 2 * j) = atom_eff(i, j) * ph;
                expected[port][lvl] = (eff * rho.matrix()).trace().real();
            }
        }
        const double p_t = rho.photon_probability(pt);
        const AtomState at = rho.atom_conditioned_on(pt), ar = rho.atom_conditioned_on(pr);
        long counts[2][2] = {{0, 0}, {0, 0}};
        for (int i = 0; i < n; ++i) {
            const int port = rng.uniform() < p_t ? 0 : 1;
            const ReadoutSample s = readout_sample(port == 0 ? at : ar, basis, 0.0, p, true, rng);
            ++counts[port][*s.outcome == AtomLevel::down ? 0 : 1];
        }
        for (int port = 0; port < 2; ++port) {
            for (int lvl = 0; lvl < 2; ++lvl) {
                const double q = expected[port][lvl];
                const double sd = std::sqrt(q * (1 - q) / n);
                const double dev = std::abs(static_cast<double>(counts[port][lvl]) / n - q);
                worst_z = std::max(worst_z, sd > 0 ? dev / sd : (dev > 0 ? INFINITY : 0.0));
            }
        }
    }
    o.detail << "50 states x 1e6 samples, worst deviation " << worst_z << " sigma";
    o.check(worst_z <= 4.0, "all within 4 sigma");
}

void determinism(Verdict& o) {
    const LinkConfig cfg = shipped("km5.cfg");
    SessionOptions so;
    so.seed = 17;
    so.n_trials = 300000;
    so.record_all_trials = true;
    const bool identical = csv_of(run_session(cfg, so)) == csv_of(run_session(cfg, so));
    const bool shards_equal =
        csv_of(run_sharded(cfg, 400000, 1, 5, false)) == csv_of(run_sharded(cfg, 400000, 4, 5, false));
    const std::uint64_t n = 2000000;
    const SessionResult one = run_sharded(cfg, n, 1, 9, false, false);
    const SessionResult four = run_sharded(cfg, n, 4, 9, true, false);
    const double p = static_cast<double>(one.heralds) / n;
    const double z = (static_cast<double>(four.heralds) - one.heralds) / std::sqrt(2.0 * n * p * (1 - p));
    o.detail << "byte-identical " << identical << ", shared-seed shards identical " << shards_equal
             << ", derived-seed herald difference " << z << " sigma";
    o.check(identical, "identical seeds give identical CSVs");
    o.check(shards_equal, "shared-seed shards merge to the single run");
    o.check(std::abs(z) <= 4.0, "derived-seed shards within 4 sigma");
}

void visibility_calibration(Verdict& o) {
    // Regenerated z-basis fringes: 8 HWP settings over one 90-deg period, 7353 read-outs
    // in total, correlated fraction (1 + V cos(4 theta))/2 per setting.
    const double v_true = 0.890;
    const int settings = 8, regenerations = 1000;
    std::mt19937_64 gen(13);
    int covered = 0;
    double sum_sigma = 0, sum_v = 0, sum_v2 = 0;
    for (int k = 0; k < regenerations; ++k) {
        FringeDataset d;
        for (int i = 0; i < settings; ++i) {
            const double theta = 90.0 * i / settings;
            const int singles = std::poisson_distribution<int>(7353.0 / settings)(gen);
            const double q = 0.5 * (1 + v_true * std::cos(4 * theta * kPi / 180));
            d.settings.push_back(theta);
            d.coincidences.push_back(std::binomial_distribution<int>(singles, q)(gen));
            d.singles.push_back(singles);
        }
        const VisibilityEstimate e = fit_fringe(d, PeriodMode::fixed, 90.0);
        covered += std::abs(e.V - v_true) <= e.sigma_V;
        sum_sigma += e.sigma_V;
        sum_v += e.V;
        sum_v2 += e.V * e.V;
    }
    const double mean_sigma = sum_sigma / regenerations;
    const double mean_v = sum_v / regenerations;
    const double sd_v = std::sqrt(sum_v2 / regenerations - mean_v * mean_v);
    const double coverage = static_cast<double>(covered) / regenerations;
    o.detail << "mean V = " << mean_v << ", mean sigma_V = " << mean_sigma << ", sd of V = " << sd_v
             << ", coverage within 1 sigma = " << coverage;
    o.check(coverage >= 0.95, "V within fitted sigma in >= 95% of regenerations");
    o.check(mean_sigma >= 0.05 && mean_sigma <= 0.06, "sigma_V of order 0.05-0.06");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"fidelity formula", fidelity_formula},
        {"20-km fidelity", twenty_km_fidelity},
        {"SNR model", snr_model_criterion},
        {"Larmor period", larmor},
        {"readout delays", readout_delays},
        {"repetition rates", repetition_rates},
        {"loss chain", loss_chain},
        {"DFG curve", dfg_curve},
        {"Sagnac model and lock", sagnac},
        {"polarization compensation", compensation},
        {"Born-rule oracle", born_rule},
        {"determinism", determinism},
        {"visibility estimator calibration", visibility_calibration},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("%s %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
