#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "qlink/analysis.hpp"
#include "qlink/errors.hpp"
#include "qlink/random.hpp"

using namespace qlink;

namespace {

constexpr double kPi = std::numbers::pi;

const SnrModelParams kPaperSnr{0.0, 257.0, 38.0, 0.2};

// Raw-count fringe over one 90-degree period: 8 settings, `total` expected counts.
FringeDataset fringe(double v, double total, double phase_deg = 0.0, double period = 90.0, int settings = 8) {
    FringeDataset d;
    for (int k = 0; k < settings; ++k) {
        const double x = k * period / settings;
        d.settings.push_back(x);
        d.coincidences.push_back(total / settings * (1.0 + v * std::cos(2 * kPi * (x - phase_deg) / period)));
        d.singles.push_back(0.0);
    }
    return d;
}

}  // namespace

TEST(Fidelity, FormulaValues) {
    EXPECT_NEAR(fidelity_from_visibilities(0.955, 0.942), 0.9598, 0.0005);
    EXPECT_DOUBLE_EQ(fidelity_from_visibilities(1.0, 1.0), 1.0);
    EXPECT_NEAR(fidelity_from_visibilities(0.890, 0.836), 0.8905, 1e-4);
    EXPECT_NEAR(fidelity_sigma(0.04, 0.02), std::sqrt(0.04 * 0.04 + 4 * 0.02 * 0.02) / 4, 1e-15);
}

TEST(Fidelity, AffineAndMonotone) {
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        const double a = rng.uniform(-1, 0.9), b = rng.uniform(-1, 0.9), d = rng.uniform(0, 0.1);
        EXPECT_NEAR(fidelity_from_visibilities(a + d, b) - fidelity_from_visibilities(a, b), d / 4, 1e-12);
        EXPECT_NEAR(fidelity_from_visibilities(a, b + d) - fidelity_from_visibilities(a, b), d / 2, 1e-12);
        EXPECT_GE(fidelity_from_visibilities(a + d, b + d), fidelity_from_visibilities(a, b));
    }
}

TEST(SnrModel, CalibratedAtOneHundredKilometres) {
    SnrModelParams p = kPaperSnr;
    p.r_exc = calibrate_r_exc(100.0, 6.9, p);
    EXPECT_NEAR(snr_model(100.0, p), 6.9, 1e-12);
    EXPECT_NEAR(p.r_exc, 2.77e4, 0.01e4);
    EXPECT_NEAR(snr_model(0.0, p), 94.9, 0.1);
    // Independent inversion: 6.9 (R_noise T + R_dark) / T - R_noise.
    const double t = std::pow(10.0, -0.2 * 100 / 10);
    EXPECT_NEAR(p.r_exc, 6.9 * (257.0 * t + 38.0) / t - 257.0, 1e-6);
}

TEST(SnrModel, MonotoneAndLimits) {
    SnrModelParams p = kPaperSnr;
    p.r_exc = 27736.3;
    double last = snr_model(0, p);
    for (double l = 0.5; l <= 300; l += 0.5) {
        const double s = snr_model(l, p);
        EXPECT_LE(s, last + 1e-12);
        last = s;
    }
    EXPECT_LT(snr_model(2000.0, p), 1e-10);
    p.r_dark = 0.0;
    for (double l : {0.0, 10.0, 100.0, 250.0}) EXPECT_NEAR(snr_model(l, p), (27736.3 + 257.0) / 257.0, 1e-9);
}

TEST(SnrFit, NoiselessRecovery) {
    SnrModelParams p = kPaperSnr;
    p.r_exc = 27736.3;
    std::vector<double> l{0, 5, 10, 20, 40, 60, 80, 100}, s;
    for (double x : l) s.push_back(snr_model(x, p));
    const SnrFit f = fit_snr_model(l, s, 38.0);
    EXPECT_TRUE(f.converged);
    EXPECT_NEAR(f.params.r_exc / p.r_exc, 1.0, 1e-6);
    EXPECT_NEAR(f.params.r_noise / 257.0, 1.0, 1e-6);
    EXPECT_NEAR(f.params.atten_db_per_km / 0.2, 1.0, 1e-6);
    EXPECT_EQ(f.params.r_dark, 38.0);
}

TEST(SnrFit, OnePercentNoise) {
    // Monte Carlo fit study over a 2-km grid to 100 km.
    SnrModelParams p = kPaperSnr;
    p.r_exc = 27736.3;
    std::vector<double> l;
    for (int i = 0; i <= 50; ++i) l.push_back(2.0 * i);
    Rng rng(3);
    int ok = 0;
    const int studies = 200;
    for (int k = 0; k < studies; ++k) {
        std::vector<double> s;
        for (double x : l) s.push_back(snr_model(x, p) * (1.0 + 0.01 * rng.normal()));
        const SnrFit f = fit_snr_model(l, s, 38.0);
        ok += std::abs(f.params.r_exc / p.r_exc - 1.0) < 0.05 && std::abs(f.params.r_noise / 257.0 - 1.0) < 0.05 &&
              std::abs(f.params.atten_db_per_km / 0.2 - 1.0) < 0.05;
    }
    EXPECT_GE(ok, 0.95 * studies);
}

TEST(SnrFit, FitIsAtLeastAsGoodAsTruth) {
    SnrModelParams p = kPaperSnr;
    p.r_exc = 27736.3;
    const std::vector<double> l{0, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    Rng rng(4);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> s;
        for (double x : l) s.push_back(snr_model(x, p) * (1.0 + 0.01 * rng.normal()));
        const SnrFit f = fit_snr_model(l, s, 38.0);
        double truth = 0;
        for (std::size_t i = 0; i < l.size(); ++i) truth += std::pow(snr_model(l[i], p) / s[i] - 1.0, 2);
        EXPECT_LE(f.residual_norm, std::sqrt(truth) + 1e-12);
    }
}

TEST(SnrFit, NeedsFourPoints) {
    EXPECT_THROW(fit_snr_model({0, 10, 20}, {90, 60, 40}), ValidationError);
}

TEST(DecayFit, GaussianRoundTrip) {
    std::vector<double> t, e;
    for (double x = 0; x <= 320; x += 20) {
        t.push_back(x);
        e.push_back(0.5 * std::exp(-std::pow(x / 160.0, 2)));
    }
    const DecayFit f = fit_decay(t, e);
    EXPECT_EQ(f.best_shape, "gaussian");
    EXPECT_NEAR(f.gaussian.eta0, 0.5, 0.005);
    EXPECT_NEAR(f.gaussian.tau_us, 160.0, 1.6);
    EXPECT_NEAR(f.gaussian.tau_us, 160.0, 160e-6);
}

TEST(DecayFit, ExponentialScoredBetter) {
    std::vector<double> t, e;
    for (double x = 0; x <= 400; x += 25) {
        t.push_back(x);
        e.push_back(0.45 * std::exp(-x / 120.0));
    }
    const DecayFit f = fit_decay(t, e);
    EXPECT_EQ(f.best_shape, "exponential");
    EXPECT_LT(f.exponential.residual_norm, f.gaussian.residual_norm);
    EXPECT_NEAR(f.exponential.tau_us, 120.0, 120e-6);
}

TEST(DecayFit, ConstantDataGiveInfiniteLifetime) {
    const DecayFit f = fit_decay({0, 10, 20, 30, 40}, {0.4, 0.4, 0.4, 0.4, 0.4});
    EXPECT_TRUE(std::isinf(f.gaussian.tau_us));
    EXPECT_TRUE(std::isinf(f.exponential.tau_us));
    EXPECT_NEAR(f.gaussian.eta0, 0.4, 1e-9);
}

TEST(EfficiencyFit, NoiselessRoundTrip) {
    const double lc = 50.0, alpha = std::pow(kPi / 2, 2) / (1.749 * lc * lc);
    std::vector<double> p, e;
    for (double x = 0.2; x <= 3.0; x += 0.2) {
        p.push_back(x);
        e.push_back(0.485 * std::pow(std::sin(std::sqrt(alpha * x) * lc), 2));
    }
    const EfficiencyCurveFit f = fit_efficiency_curve(p, e, lc);
    EXPECT_NEAR(f.eta_max, 0.485, 0.485e-6);
    EXPECT_NEAR(f.alpha_nor / alpha, 1.0, 1e-6);
    EXPECT_NEAR(f.p_peak_w, 1.749, 1.749e-6);
}

TEST(EfficiencyFit, AllZero) {
    const EfficiencyCurveFit f = fit_efficiency_curve({0.5, 1.0, 1.5}, {0, 0, 0});
    EXPECT_EQ(f.eta_max, 0.0);
}

TEST(EfficiencyFit, TenPercentNoise) {
    const double lc = 50.0, alpha = std::pow(kPi / 2, 2) / (1.749 * lc * lc);
    Rng rng(4);
    int ok = 0;
    const int studies = 50;
    for (int k = 0; k < studies; ++k) {
        std::vector<double> p, e;
        for (double x = 0.1; x <= 3.0; x += 0.1) {
            p.push_back(x);
            e.push_back(0.485 * std::pow(std::sin(std::sqrt(alpha * x) * lc), 2) * (1.0 + 0.1 * rng.normal()));
        }
        ok += std::abs(fit_efficiency_curve(p, e, lc).eta_max / 0.485 - 1.0) < 0.05;
    }
    EXPECT_GE(ok, studies * 9 / 10);
}

TEST(Fringe, NoiselessUnitVisibility) {
    const VisibilityEstimate v = fit_fringe(fringe(1.0, 8000.0, 10.0), PeriodMode::fixed, 90.0);
    EXPECT_NEAR(v.V, 1.0, 1e-9);
    EXPECT_NEAR(v.period, 90.0, 1e-12);
}

TEST(Fringe, ConstantCounts) {
    const VisibilityEstimate v = fit_fringe(fringe(0.0, 8000.0), PeriodMode::fixed, 90.0);
    EXPECT_NEAR(v.V, 0.0, 1e-9);
}

TEST(Fringe, DegenerateSettingsRejected) {
    FringeDataset d;
    d.settings = {5, 5, 5, 5};
    d.coincidences = {1, 2, 3, 4};
    d.singles = {0, 0, 0, 0};
    EXPECT_THROW(fit_fringe(d, PeriodMode::fixed, 90.0), ValidationError);
}

TEST(Fringe, NormalizedData) {
    FringeDataset d = fringe(0.8, 4000.0, 0.0, 90.0);
    d.singles.assign(d.coincidences.size(), 1000.0);
    const VisibilityEstimate v = fit_fringe(d, PeriodMode::fixed, 90.0);
    EXPECT_NEAR(v.V, 0.8, 1e-9);
    EXPECT_GT(v.sigma_V, 0.0);
}

TEST(Fringe, FreePeriodRecovered) {
    FringeDataset d;
    for (int k = 0; k < 16; ++k) {
        const double x = k * 0.7;
        d.settings.push_back(x);
        d.coincidences.push_back(500.0 * (1.0 + 0.7 * std::cos(2 * kPi * x / 5.9 - 0.4)));
        d.singles.push_back(0.0);
    }
    const VisibilityEstimate v = fit_fringe(d, PeriodMode::free, 5.6);
    EXPECT_NEAR(v.period, 5.9, 1e-6);
    EXPECT_NEAR(v.V, 0.7, 1e-6);
    EXPECT_GT(v.sigma_period, 0.0);
}

TEST(Fringe, DeltaMethodSigmaMatchesRegenerationSpread) {
    // Unbiased within sigma and sigma consistent with the spread over regenerations.
    std::mt19937_64 gen(5);
    const FringeDataset truth = fringe(0.89, 7353.0 / (1.0 + 0.0));
    double sum = 0, sum2 = 0, sig = 0;
    int covered = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        FringeDataset d = truth;
        for (double& c : d.coincidences) c = std::poisson_distribution<long>(c)(gen);
        const VisibilityEstimate v = fit_fringe(d, PeriodMode::fixed, 90.0);
        sum += v.V;
        sum2 += v.V * v.V;
        sig += v.sigma_V;
        covered += std::abs(v.V - 0.89) <= v.sigma_V;
    }
    const double mean = sum / n, sd = std::sqrt(sum2 / n - mean * mean), mean_sigma = sig / n;
    EXPECT_NEAR(mean, 0.89, 4 * sd / std::sqrt(n));
    EXPECT_NEAR(mean_sigma / sd, 1.0, 0.1);
    // A correct one-sigma interval covers about 68%.
    EXPECT_NEAR(covered / static_cast<double>(n), 0.683, 0.05);
}

TEST(Fringe, Validation) {
    FringeDataset d = fringe(0.5, 100.0);
    d.coincidences[0] = -1;
    EXPECT_THROW(d.validate(), ValidationError);
    d = fringe(0.5, 100.0, 0, 90, 3);
    EXPECT_THROW(d.validate(), ValidationError);
}

TEST(LeastSquares, GenericExponential) {
    const std::vector<double> x{0, 1, 2, 3, 4, 5};
    auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t i = 0; i < x.size(); ++i) r(i) = p(0) * std::exp(-p(1) * x[i]) - 2.0 * std::exp(-0.3 * x[i]);
    };
    Eigen::VectorXd x0(2);
    x0 << 1.0, 1.0;
    const LeastSquaresResult r = least_squares(fn, x0, 6);
    EXPECT_NEAR(r.params(0), 2.0, 1e-8);
    EXPECT_NEAR(r.params(1), 0.3, 1e-8);
}
