#include "qlink/fiber.hpp"

#include <numbers>

#include <cmath>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

Eigen::Vector3d stokes3(const JonesVector& j) {
    const StokesVector s = jones_to_stokes(j);
    return {s.s1 / s.s0, s.s2 / s.s0, s.s3 / s.s0};
}

}  // namespace

void FiberParams::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ValidationError(std::string("fiber.") + field, what);
    };
    require(std::isfinite(length_km) && length_km >= 0.0, "length_km", "must be non-negative");
    require(std::isfinite(atten_db_per_km) && atten_db_per_km >= 0.0, "atten_db_per_km", "must be non-negative");
    require(std::isfinite(delay_us_per_km) && delay_us_per_km >= 0.0, "delay_us_per_km", "must be non-negative");
    require(std::isfinite(delay_offset_us) && delay_offset_us >= 0.0, "delay_offset_us", "must be non-negative");
    require(std::isfinite(drift_step_sigma_rad) && drift_step_sigma_rad >= 0.0, "drift_step_sigma_rad",
            "must be non-negative");
    require(drift_interval_s > 0.0, "drift_interval_s", "must be positive");
    require(compensation_period_s > 0.0, "compensation_period_s", "must be positive");
    require(compensation_dead_s >= 0.0 && compensation_dead_s < compensation_period_s, "compensation_dead_s",
            "must be in [0, compensation_period_s)");
    require(reference_toggle_hz > 0.0, "reference_toggle_hz", "must be positive");
}

double transmittance(double length_km, double atten_db_per_km) {
    if (!(length_km >= 0.0)) throw ValidationError("fiber.length_km", "must be non-negative");
    return std::pow(10.0, -atten_db_per_km * length_km / 10.0);
}

double propagation_delay(double length_km, const FiberParams& params) {
    if (!(length_km >= 0.0)) throw ValidationError("fiber.length_km", "must be non-negative");
    return params.delay_offset_us + params.delay_us_per_km * length_km;
}

AffineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("data", "need at least two (x, y) pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw ValidationError("data", "all x values are equal");
    AffineFit f;
    f.slope = sxy / sxx;
    f.offset = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) f.residuals.push_back(y[i] - (f.offset + f.slope * x[i]));
    return f;
}

PolarizationUnitary compensator_unitary(const CompensatorAngles& a) {
    return waveplate(Retarder::quarter, a[2]) * waveplate(Retarder::half, a[1]) * waveplate(Retarder::quarter, a[0]);
}

CompensationState drift_step(const CompensationState& state, double sigma_rad, Rng& rng) {
    if (sigma_rad == 0.0) return state;
    const Eigen::Vector3d axis(rng.normal(0.0, sigma_rad), rng.normal(0.0, sigma_rad), rng.normal(0.0, sigma_rad));
    CompensationState next = state;
    next.fiber_unitary = (poincare_rotation(axis) * state.fiber_unitary).reorthonormalized();
    return next;
}

double compensation_objective(const CompensatorAngles& angles, const PolarizationUnitary& fiber) {
    const PolarizationUnitary u = compensator_unitary(angles) * fiber;
    double total = 0.0;
    for (const JonesVector& ref : {JonesVector::V(), JonesVector::D()}) {
        total += (stokes3(u.apply(ref)) - stokes3(ref)).squaredNorm();
    }
    return total;
}

namespace {

struct Descent {
    CompensatorAngles x{};
    double f = 0.0;
    int iterations = 0;
};

using Residual = Eigen::Matrix<double, 6, 1>;

Residual residual(const CompensatorAngles& angles, const PolarizationUnitary& fiber) {
    const PolarizationUnitary u = compensator_unitary(angles) * fiber;
    Residual r;
    r.head<3>() = stokes3(u.apply(JonesVector::V())) - stokes3(JonesVector::V());
    r.tail<3>() = stokes3(u.apply(JonesVector::D())) - stokes3(JonesVector::D());
    return r;
}

// Damped Gauss-Newton descent: large damping is a short gradient step, small damping
// recovers the quadratic convergence that plain gradient steps lack near the minimum.
Descent descend(CompensatorAngles x, const PolarizationUnitary& fiber, const CompensationOptions& opt) {
    Residual r = residual(x, fiber);
    double f = r.squaredNorm();
    double damping = 1.0 / opt.learning_rate;
    int it = 0;
    while (f >= opt.tol && it < opt.max_iters) {
        ++it;
        Eigen::Matrix<double, 6, 3> jac;
        for (int k = 0; k < 3; ++k) {
            CompensatorAngles xp = x, xm = x;
            xp[k] += opt.fd_step;
            xm[k] -= opt.fd_step;
            jac.col(k) = (residual(xp, fiber) - residual(xm, fiber)) / (2.0 * opt.fd_step);
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d g = jac.transpose() * r;
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            const Eigen::Vector3d step = -(jtj + damping * Eigen::Matrix3d::Identity()).ldlt().solve(g);
            CompensatorAngles trial = x;
            for (int k = 0; k < 3; ++k) trial[k] += step[k];
            const Residual rt = residual(trial, fiber);
            const double ft = rt.squaredNorm();
            if (ft < f) {
                x = trial;
                r = rt;
                f = ft;
                damping = std::max(damping / 3.0, 1e-12);
                accepted = true;
                break;
            }
            damping *= 4.0;
        }
        if (!accepted) break;  // stationary to within the finite-difference resolution
    }
    return {x, f, it};
}

}  // namespace

CompensationState compensate(const CompensationState& state, const CompensationOptions& opt) {
    CompensationState s = state;
    Descent best = descend(s.compensator, s.fiber_unitary, opt);
    int total = best.iterations;
    Rng starts(stream_tag("compensator-restarts"));
    for (int r = 0; r < opt.restarts && best.f >= opt.tol; ++r) {
        CompensatorAngles x0{};
        for (double& a : x0) a = starts.uniform(0.0, std::numbers::pi);
        const Descent d = descend(x0, s.fiber_unitary, opt);
        total += d.iterations;
        if (d.f < best.f) best = d;
    }
    s.compensator = best.x;
    s.last_error = best.f;
    s.iterations = total;
    s.converged = best.f < opt.tol;
    return s;
}

double channel_process_fidelity(const CompensatorAngles& angles, const PolarizationUnitary& fiber) {
    const Complex tr = (compensator_unitary(angles) * fiber).matrix().trace();
    return std::norm(tr) / 4.0;
}

PolarizationUnitary haar_random_unitary(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    Matrix2c m;
    m << Complex(q(0), q(1)), Complex(q(2), q(3)), Complex(-q(2), q(3)), Complex(q(0), -q(1));
    return PolarizationUnitary::from_matrix(m, 1e-10);
}

}  // namespace qlink
