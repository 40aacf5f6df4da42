#include "qlink/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

struct Functor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const ResidualFn* fn = nullptr;
    int n_inputs = 0;
    int n_values = 0;
    mutable int calls = 0;

    int inputs() const { return n_inputs; }
    int values() const { return n_values; }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        ++calls;
        r.resize(n_values);
        (*fn)(x, r);
        return 0;
    }
};

Eigen::MatrixXd central_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x, int m) {
    Eigen::MatrixXd j(m, x.size());
    Eigen::VectorXd rp(m), rm(m);
    for (int k = 0; k < x.size(); ++k) {
        const double h = 1e-6 * std::max(std::abs(x(k)), 1e-6);
        Eigen::VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        fn(xp, rp);
        fn(xm, rm);
        j.col(k) = (rp - rm) / (2.0 * h);
    }
    return j;
}

Eigen::MatrixXd pseudo_inverse_normal(const Eigen::MatrixXd& j) {
    const Eigen::MatrixXd jtj = j.transpose() * j;
    return jtj.completeOrthogonalDecomposition().pseudoInverse();
}

void require_points(std::size_t n, std::size_t need, std::size_t other, const char* what) {
    if (n != other) throw ValidationError("data", std::string(what) + ": column lengths differ");
    if (n < need) throw ValidationError("data", std::string(what) + ": need at least " + std::to_string(need) + " points");
}

bool all_equal(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

LeastSquaresResult least_squares(const ResidualFn& fn, Eigen::VectorXd x0, int n_residuals) {
    Functor f;
    f.fn = &fn;
    f.n_inputs = static_cast<int>(x0.size());
    f.n_values = n_residuals;
    Eigen::NumericalDiff<Functor, Eigen::Central> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor, Eigen::Central>> lm(nd);
    lm.parameters.ftol = 1e-15;
    lm.parameters.xtol = 1e-15;
    lm.parameters.gtol = 0.0;
    lm.parameters.maxfev = 20000;
    const auto status = lm.minimize(x0);

    LeastSquaresResult out;
    out.params = x0;
    Eigen::VectorXd r(n_residuals);
    fn(x0, r);
    out.residual_norm = r.norm();
    out.evaluations = static_cast<int>(lm.nfev);
    using namespace Eigen::LevenbergMarquardtSpace;
    out.converged = status != ImproperInputParameters && status != TooManyFunctionEvaluation && std::isfinite(out.residual_norm);
    out.covariance = pseudo_inverse_normal(central_jacobian(fn, x0, n_residuals));
    return out;
}

// ---------------------------------------------------------------------------

void FringeDataset::validate() const {
    if (coincidences.size() != settings.size() || (!singles.empty() && singles.size() != settings.size())) {
        throw ValidationError("fringe", "settings, coincidences and singles must have equal lengths");
    }
    if (settings.size() < 4) throw ValidationError("fringe", "need at least 4 settings");
    for (std::size_t i = 0; i < settings.size(); ++i) {
        if (!(coincidences[i] >= 0.0)) throw ValidationError("fringe.coincidences", "counts must be >= 0");
        if (!singles.empty()) {
            if (!(singles[i] >= 0.0)) throw ValidationError("fringe.singles", "counts must be >= 0");
            if (normalized() && coincidences[i] > singles[i]) {
                throw ValidationError("fringe.coincidences", "coincidences exceed singles");
            }
        }
    }
    if (all_equal(settings)) throw ValidationError("fringe.settings", "all settings are equal");
}

bool FringeDataset::normalized() const {
    return !singles.empty() && std::any_of(singles.begin(), singles.end(), [](double s) { return s > 0.0; });
}

namespace {

struct FringePoints {
    std::vector<double> x, y, sigma;
};

FringePoints fringe_points(const FringeDataset& d) {
    FringePoints p;
    const bool norm = d.normalized();
    for (std::size_t i = 0; i < d.settings.size(); ++i) {
        if (norm) {
            const double s = d.singles[i];
            if (s <= 0.0) continue;
            const double c = d.coincidences[i];
            p.x.push_back(d.settings[i]);
            p.y.push_back(c / s);
            // Binomial variance with a half-count guard so 0/s and s/s keep finite weight.
            p.sigma.push_back(std::sqrt((c + 0.5) * (s - c + 0.5)) / (s * std::sqrt(s + 1.0)));
        } else {
            p.x.push_back(d.settings[i]);
            p.y.push_back(d.coincidences[i]);
            p.sigma.push_back(std::sqrt(std::max(d.coincidences[i], 1.0)));
        }
    }
    if (p.x.size() < 4) throw ValidationError("fringe", "need at least 4 settings with counts");
    return p;
}

struct LinearSine {
    Eigen::Vector3d coef;
    Eigen::Matrix3d cov;
    double chi2 = 0.0;
};

LinearSine linear_sine(const FringePoints& p, double period) {
    const int n = static_cast<int>(p.x.size());
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd y(n);
    const double w = 2.0 * std::numbers::pi / period;
    for (int i = 0; i < n; ++i) {
        const double inv = 1.0 / p.sigma[static_cast<std::size_t>(i)];
        a(i, 0) = inv;
        a(i, 1) = std::cos(w * p.x[static_cast<std::size_t>(i)]) * inv;
        a(i, 2) = std::sin(w * p.x[static_cast<std::size_t>(i)]) * inv;
        y(i) = p.y[static_cast<std::size_t>(i)] * inv;
    }
    LinearSine out;
    const Eigen::Matrix3d ata = a.transpose() * a;
    out.cov = ata.completeOrthogonalDecomposition().pseudoInverse();
    out.coef = out.cov * (a.transpose() * y);
    out.chi2 = (a * out.coef - y).squaredNorm();
    return out;
}

void fill_visibility(VisibilityEstimate& v, const Eigen::Vector3d& c, const Eigen::Matrix3d& cov) {
    const double a = c(0);
    const double amp = std::hypot(c(1), c(2));
    v.offset = a;
    v.amplitude = amp;
    v.phase = std::atan2(c(2), c(1));
    v.V = a != 0.0 ? amp / a : 0.0;
    if (a != 0.0) {
        Eigen::Vector3d g;
        g(0) = -v.V / a;
        if (amp > 0.0) {
            g(1) = c(1) / (a * amp);
            g(2) = c(2) / (a * amp);
        } else {
            // V is not differentiable at zero amplitude; use the radial scale instead.
            g(1) = g(2) = 1.0 / (a * std::sqrt(2.0));
        }
        v.sigma_V = std::sqrt(std::max(0.0, g.dot(cov * g)));
    }
}

}  // namespace

VisibilityEstimate fit_fringe(const FringeDataset& d, PeriodMode mode, double period) {
    d.validate();
    if (!(period > 0.0)) throw ValidationError("fringe.period", "must be positive");
    const FringePoints p = fringe_points(d);
    const int n = static_cast<int>(p.x.size());
    VisibilityEstimate v;

    if (mode == PeriodMode::fixed) {
        const LinearSine ls = linear_sine(p, period);
        fill_visibility(v, ls.coef, ls.cov);
        v.period = period;
        v.chi2 = ls.chi2;
        v.dof = n - 3;
        return v;
    }

    if (n < 5) throw ValidationError("fringe", "free-period fit needs at least 5 settings");
    double best_t = period;
    double best_chi2 = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 400;
    for (int k = 0; k <= kGrid; ++k) {
        const double t = period * std::pow(3.0, 2.0 * k / kGrid - 1.0);  // period/3 .. 3 period
        const double chi2 = linear_sine(p, t).chi2;
        if (chi2 < best_chi2) {
            best_chi2 = chi2;
            best_t = t;
        }
    }
    const LinearSine seed = linear_sine(p, best_t);
    ResidualFn fn = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        const double w = 2.0 * std::numbers::pi / q(3);
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double m = q(0) + q(1) * std::cos(w * p.x[ui]) + q(2) * std::sin(w * p.x[ui]);
            r(i) = (p.y[ui] - m) / p.sigma[ui];
        }
    };
    Eigen::VectorXd x0(4);
    x0 << seed.coef(0), seed.coef(1), seed.coef(2), best_t;
    const LeastSquaresResult res = least_squares(fn, x0, n);
    const Eigen::Vector3d c = res.params.head<3>();
    fill_visibility(v, c, res.covariance.topLeftCorner<3, 3>());
    v.period = res.params(3);
    v.sigma_period = std::sqrt(std::max(0.0, res.covariance(3, 3)));
    v.chi2 = res.residual_norm * res.residual_norm;
    v.dof = n - 4;
    return v;
}

double fidelity_from_visibilities(double vz, double vx) {
    if (!(vz >= -1.0 && vz <= 1.0)) throw ValidationError("Vz", "must be in [-1, 1]");
    if (!(vx >= -1.0 && vx <= 1.0)) throw ValidationError("Vx", "must be in [-1, 1]");
    return (1.0 + vz + 2.0 * vx) / 4.0;
}

double fidelity_sigma(double sigma_vz, double sigma_vx) {
    return std::sqrt(sigma_vz * sigma_vz + 4.0 * sigma_vx * sigma_vx) / 4.0;
}

// ---------------------------------------------------------------------------

void SnrModelParams::validate() const {
    if (!(r_exc >= 0.0)) throw ValidationError("snr_model.r_exc", "must be non-negative");
    if (!(r_noise >= 0.0)) throw ValidationError("snr_model.r_noise", "must be non-negative");
    if (!(r_dark >= 0.0)) throw ValidationError("snr_model.r_dark", "must be non-negative");
    if (!(atten_db_per_km >= 0.0)) throw ValidationError("snr_model.atten_db_per_km", "must be non-negative");
}

double snr_model(double length_km, const SnrModelParams& p) {
    if (!(length_km >= 0.0)) throw ValidationError("length_km", "must be non-negative");
    const double t = std::pow(10.0, -p.atten_db_per_km * length_km / 10.0);
    const double den = p.r_noise * t + p.r_dark;
    if (den == 0.0) return std::numeric_limits<double>::infinity();
    return (p.r_exc + p.r_noise) * t / den;
}

double calibrate_r_exc(double length_km, double snr, const SnrModelParams& p) {
    const double t = std::pow(10.0, -p.atten_db_per_km * length_km / 10.0);
    return snr * (p.r_noise * t + p.r_dark) / t - p.r_noise;
}

SnrFit fit_snr_model(const std::vector<double>& length_km, const std::vector<double>& snr, double r_dark) {
    require_points(length_km.size(), 4, snr.size(), "snr fit");
    if (all_equal(length_km)) throw ValidationError("length_km", "all lengths are equal");
    if (!(r_dark > 0.0)) throw ValidationError("snr_model.r_dark", "held value must be positive");
    for (double v : snr)
        if (!(v > 0.0)) throw ValidationError("snr", "values must be positive");
    const int n = static_cast<int>(length_km.size());

    // SNR errors scale with the SNR, so residuals are relative: model/snr - 1.
    // For fixed attenuation: snr R_dark = R_exc T + R_noise T (1 - snr), linear in the rates.
    auto linear_rates = [&](double atten, double& re, double& rn) {
        Eigen::MatrixXd a(n, 2);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double t = std::pow(10.0, -atten * length_km[ui] / 10.0);
            const double w = 1.0 / std::max(std::abs(snr[ui]), 1e-12);
            a(i, 0) = w * t;
            a(i, 1) = w * t * (1.0 - snr[ui]);
            b(i) = w * snr[ui] * r_dark;
        }
        const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);
        re = x(0);
        rn = x(1);
    };
    auto residual_norm = [&](const SnrModelParams& p) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double d = snr_model(length_km[ui], p) / snr[ui] - 1.0;
            s += d * d;
        }
        return std::sqrt(s);
    };

    SnrModelParams best{0.0, 0.0, r_dark, 0.2};
    double best_norm = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 300; ++k) {
        SnrModelParams p{0.0, 0.0, r_dark, 0.005 * k};
        linear_rates(p.atten_db_per_km, p.r_exc, p.r_noise);
        if (p.r_noise < 0.0 || p.r_exc < 0.0) continue;
        const double norm = residual_norm(p);
        if (norm < best_norm) {
            best_norm = norm;
            best = p;
        }
    }

    ResidualFn fn = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        const SnrModelParams p{q(0), q(1), r_dark, q(2)};
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            r(i) = snr_model(length_km[ui], p) / snr[ui] - 1.0;
        }
    };
    Eigen::VectorXd x0(3);
    x0 << best.r_exc, best.r_noise, best.atten_db_per_km;
    const LeastSquaresResult res = least_squares(fn, x0, n);

    SnrFit out;
    out.params = {res.params(0), res.params(1), r_dark, res.params(2)};
    // Scale the covariance by the residual variance (errors come from the data scatter).
    const double dof = std::max(1, n - 3);
    const double s2 = res.residual_norm * res.residual_norm / dof;
    out.sigma_r_exc = std::sqrt(std::max(0.0, res.covariance(0, 0) * s2));
    out.sigma_r_noise = std::sqrt(std::max(0.0, res.covariance(1, 1) * s2));
    out.sigma_atten = std::sqrt(std::max(0.0, res.covariance(2, 2) * s2));
    out.residual_norm = res.residual_norm;
    Eigen::VectorXd r(n);
    fn(res.params, r);
    out.residuals.assign(r.data(), r.data() + n);
    out.converged = res.converged;
    return out;
}

// ---------------------------------------------------------------------------

namespace {

DecayShapeFit fit_decay_shape(const std::vector<double>& t, const std::vector<double>& eta, bool gaussian) {
    const int n = static_cast<int>(t.size());
    auto g = [gaussian](double x) { return gaussian ? x * x : x; };

    // Seed from a log-linear fit over the positive points.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (eta[ui] <= 0.0) continue;
        const double x = g(t[ui]);
        const double y = std::log(eta[ui]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    double k0 = 0.0, l0 = 0.0;
    if (m >= 2 && m * sxx - sx * sx > 0.0) {
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        k0 = std::max(0.0, -slope);
        l0 = (sy + k0 * sx) / m;
    } else if (m >= 1) {
        l0 = sy / m;
    }

    ResidualFn fn = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            r(i) = q(0) * std::exp(-q(1) * g(t[ui])) - eta[ui];
        }
    };
    Eigen::VectorXd x0(2);
    x0 << std::exp(l0), k0;
    const LeastSquaresResult res = least_squares(fn, x0, n);

    DecayShapeFit out;
    out.eta0 = res.params(0);
    const double k = res.params(1);
    const double dof = std::max(1, n - 2);
    const double s2 = res.residual_norm * res.residual_norm / dof;
    out.sigma_eta0 = std::sqrt(std::max(0.0, res.covariance(0, 0) * s2));
    const double sk = std::sqrt(std::max(0.0, res.covariance(1, 1) * s2));
    double tmax = 0.0;
    for (double x : t) tmax = std::max(tmax, std::abs(x));
    // A decay rate whose effect over the sampled range is below 1e-9 counts as none.
    if (k * g(tmax) > 1e-9) {
        out.tau_us = gaussian ? 1.0 / std::sqrt(k) : 1.0 / k;
        out.sigma_tau_us = gaussian ? 0.5 * sk * std::pow(k, -1.5) : sk / (k * k);
    } else {
        out.tau_us = std::numeric_limits<double>::infinity();
        out.sigma_tau_us = 0.0;
    }
    out.residual_norm = res.residual_norm;
    return out;
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& t_us, const std::vector<double>& eta) {
    require_points(t_us.size(), 4, eta.size(), "decay fit");
    if (all_equal(t_us)) throw ValidationError("time_us", "all times are equal");
    for (double x : t_us) {
        if (!(x >= 0.0)) throw ValidationError("time_us", "times must be non-negative");
    }
    DecayFit out;
    out.gaussian = fit_decay_shape(t_us, eta, true);
    out.exponential = fit_decay_shape(t_us, eta, false);
    out.best_shape = out.gaussian.residual_norm <= out.exponential.residual_norm ? "gaussian" : "exponential";
    return out;
}

EfficiencyCurveFit fit_efficiency_curve(const std::vector<double>& pump_w, const std::vector<double>& eta,
                                        double crystal_length_mm) {
    require_points(pump_w.size(), 3, eta.size(), "efficiency fit");
    if (!(crystal_length_mm > 0.0)) throw ValidationError("crystal_length_mm", "must be positive");
    for (double p : pump_w) {
        if (!(p >= 0.0)) throw ValidationError("pump_w", "pump power must be non-negative");
    }
    EfficiencyCurveFit out;
    if (std::all_of(eta.begin(), eta.end(), [](double e) { return e == 0.0; })) {
        out.converged = true;
        return out;
    }
    const double pmax = *std::max_element(pump_w.begin(), pump_w.end());
    if (!(pmax > 0.0)) throw ValidationError("pump_w", "need at least one positive pump power");
    const int n = static_cast<int>(pump_w.size());

    auto model_scale = [&](double b, double& m) {
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double s = std::pow(std::sin(b * std::sqrt(pump_w[ui])), 2);
            num += s * eta[ui];
            den += s * s;
        }
        m = den > 0.0 ? num / den : 0.0;
        double r = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double d = m * std::pow(std::sin(b * std::sqrt(pump_w[ui])), 2) - eta[ui];
            r += d * d;
        }
        return r;
    };
    // Peak power from pmax/20 to 20 pmax.
    double best_b = 0.0, best_m = 0.0, best_r = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 2000; ++k) {
        const double ppk = pmax * std::pow(20.0, 2.0 * k / 2000.0 - 1.0);
        const double b = (std::numbers::pi / 2.0) / std::sqrt(ppk);
        double m = 0.0;
        const double r = model_scale(b, m);
        if (r < best_r) {
            best_r = r;
            best_b = b;
            best_m = m;
        }
    }
    ResidualFn fn = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            r(i) = q(0) * std::pow(std::sin(q(1) * std::sqrt(pump_w[ui])), 2) - eta[ui];
        }
    };
    Eigen::VectorXd x0(2);
    x0 << best_m, best_b;
    const LeastSquaresResult res = least_squares(fn, x0, n);
    out.eta_max = res.params(0);
    const double b = std::abs(res.params(1));
    out.alpha_nor = b * b / (crystal_length_mm * crystal_length_mm);
    out.p_peak_w = b > 0.0 ? std::pow(std::numbers::pi / 2.0 / b, 2) : std::numeric_limits<double>::infinity();
    const double dof = std::max(1, n - 2);
    out.sigma_eta_max = std::sqrt(std::max(0.0, res.covariance(0, 0) * res.residual_norm * res.residual_norm / dof));
    out.residual_norm = res.residual_norm;
    out.converged = res.converged;
    return out;
}

}  // namespace qlink
