#pragma once

// Long-fiber transmission: loss, delay, slow polarization drift and the automated
// two-reference compensation loop.

#include <array>
#include <vector>

#include "qlink/polarization.hpp"
#include "qlink/random.hpp"

namespace qlink {

struct FiberParams {
    double length_km = 0.0;
    double atten_db_per_km = 0.2;
    double delay_us_per_km = 4.90911;  ///< least-squares fit of the measured readout delays
    double delay_offset_us = 1.07055;  ///< electronics and short patch fibers
    double drift_step_sigma_rad = 0.0;
    double drift_interval_s = 1.0;
    double compensation_period_s = 300.0;
    double compensation_dead_s = 2.0;
    double reference_toggle_hz = 10.0;

    void validate() const;
};

/// 10^(-atten L / 10).
double transmittance(double length_km, double atten_db_per_km);
/// delay_offset + delay_per_km * L.
double propagation_delay(double length_km, const FiberParams& params);

struct AffineFit {
    double offset = 0.0;
    double slope = 0.0;
    std::vector<double> residuals;  ///< y - (offset + slope x)
};

/// Ordinary least squares y = offset + slope x. Needs two distinct x values.
AffineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y);

/// Compensator angles (QWP, HWP, QWP); light meets angles[0] first.
using CompensatorAngles = std::array<double, 3>;

PolarizationUnitary compensator_unitary(const CompensatorAngles& angles);

struct CompensationState {
    PolarizationUnitary fiber_unitary;
    CompensatorAngles compensator{0.0, 0.0, 0.0};
    double last_error = 0.0;
    int iterations = 0;  ///< used by the last compensate() call
    bool converged = true;
};

/// fiber <- R * fiber with R a small Poincare rotation, per-axis angles ~ N(0, sigma);
/// the product is re-orthonormalized.
CompensationState drift_step(const CompensationState& state, double sigma_rad, Rng& rng);

/// Sum over the V and D references of |S(Uc Uf ref) - S(ref)|^2 (Stokes 3-vectors).
double compensation_objective(const CompensatorAngles& angles, const PolarizationUnitary& fiber);

struct CompensationOptions {
    int max_iters = 500;
    double tol = 1e-5;
    double fd_step = 1e-3;
    double learning_rate = 0.5;  ///< inverse of the initial damping
    int restarts = 12;  ///< extra descents from fixed pseudo-random angles if the warm start stalls
};

/// Damped (Levenberg-Marquardt) descent on the six Stokes residuals over the compensator
/// angles, with a finite-difference Jacobian, starting from the current setting. The
/// damping grows 4x on non-decrease and shrinks 3x after an accepted step. When the descent from the current setting stalls (for instance at the
/// gimbal-locked identity setting) it is repeated from a fixed sequence of starting
/// angles and the best result is kept. Non-convergence is reported in the returned state.
CompensationState compensate(const CompensationState& state, const CompensationOptions& options = {});

/// |tr(U)|^2 / 4 for the compensated channel Uc Uf: 1 iff identity up to global phase.
double channel_process_fidelity(const CompensatorAngles& angles, const PolarizationUnitary& fiber);

/// Haar-random element of U(2) (global phase irrelevant).
PolarizationUnitary haar_random_unitary(Rng& rng);

}  // namespace qlink
