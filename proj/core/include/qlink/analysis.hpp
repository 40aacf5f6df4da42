#pragma once

// Fringe visibility, fidelity, the fiber-length SNR model and the curve fits used by
// `qlink fit`.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qlink {

/// Generic weighted nonlinear least squares on top of Eigen's Levenberg-Marquardt.
struct LeastSquaresResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  ///< (J^T J)^-1 of the residual vector at the optimum
    double residual_norm = 0.0;  ///< |r| at the optimum
    int evaluations = 0;
    bool converged = false;
};

using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

LeastSquaresResult least_squares(const ResidualFn& fn, Eigen::VectorXd x0, int n_residuals);

// ---------------------------------------------------------------------------
// Fringes

struct FringeDataset {
    std::vector<double> settings;  ///< HWP angle (deg) or readout delay (us)
    std::vector<double> coincidences;
    std::vector<double> singles;   ///< all zero: fit raw counts with Poisson errors

    /// counts >= 0, equal lengths, >= 4 settings, coincidences <= singles when given.
    void validate() const;
    bool normalized() const;
};

enum class PeriodMode { fixed, free };

struct VisibilityEstimate {
    double V = 0.0;
    double sigma_V = 0.0;
    double offset = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;  ///< model a + A cos(2 pi x / T - phase)
    double period = 0.0;
    double sigma_period = 0.0;
    double chi2 = 0.0;
    int dof = 0;
};

/// Weighted least-squares sinusoid a + b cos(2 pi x/T) + c sin(2 pi x/T).
/// Data are coincidences/singles with binomial errors, or raw coincidences with
/// Poisson errors when no singles are given. V = sqrt(b^2 + c^2)/a and sigma_V comes
/// from the delta method on the fit covariance:
///   grad V = (-V/a, b/(a A), c/(a A)),  sigma_V^2 = grad^T Cov(a,b,c) grad.
/// In free mode `period` seeds a grid search over T and T is fitted too.
/// Throws ValidationError on degenerate data (all settings equal).
VisibilityEstimate fit_fringe(const FringeDataset& d, PeriodMode mode, double period);

/// F = (1 + Vz + 2 Vx)/4.
double fidelity_from_visibilities(double vz, double vx);
double fidelity_sigma(double sigma_vz, double sigma_vx);

// ---------------------------------------------------------------------------
// SNR versus fiber length

struct SnrModelParams {
    double r_exc = 0.0;
    double r_noise = 257.0;
    double r_dark = 38.0;
    double atten_db_per_km = 0.2;

    void validate() const;
};

/// (R_exc + R_noise) T / (R_noise T + R_dark), T = 10^(-atten L/10).
double snr_model(double length_km, const SnrModelParams& p);
/// R_exc that makes snr_model(length) equal `snr`.
double calibrate_r_exc(double length_km, double snr, const SnrModelParams& p);

struct SnrFit {
    SnrModelParams params;
    double sigma_r_exc = 0.0;
    double sigma_r_noise = 0.0;
    double sigma_atten = 0.0;
    double residual_norm = 0.0;
    std::vector<double> residuals;
    bool converged = false;
};

/// The model is invariant under a common scale of the three rates, so R_dark is held
/// at `r_dark` and R_exc, R_noise and the attenuation are fitted. Seeded by a grid over
/// the attenuation with the two rates solved linearly at each grid point. Residuals are
/// relative (model/snr - 1) since SNR errors scale with the SNR; snr must be positive.
SnrFit fit_snr_model(const std::vector<double>& length_km, const std::vector<double>& snr, double r_dark = 38.0);

// ---------------------------------------------------------------------------
// Retrieval-efficiency decay

struct DecayShapeFit {
    double eta0 = 0.0;
    double tau_us = std::numeric_limits<double>::infinity();  ///< inf when no decay
    double sigma_eta0 = 0.0;
    double sigma_tau_us = 0.0;
    double residual_norm = 0.0;
};

struct DecayFit {
    DecayShapeFit gaussian;     ///< eta0 exp(-(t/tau)^2)
    DecayShapeFit exponential;  ///< eta0 exp(-t/tau)
    std::string best_shape;     ///< smaller residual norm
};

DecayFit fit_decay(const std::vector<double>& t_us, const std::vector<double>& eta);

// ---------------------------------------------------------------------------
// DFG efficiency versus pump power

struct EfficiencyCurveFit {
    double eta_max = 0.0;
    double alpha_nor = 0.0;  ///< W^-1 mm^-2
    double p_peak_w = std::numeric_limits<double>::infinity();
    double sigma_eta_max = 0.0;
    double residual_norm = 0.0;
    bool converged = false;
};

/// eta_max sin^2(sqrt(alpha P) Lc), fitted as b = sqrt(alpha) Lc. All-zero data give
/// eta_max = 0 (alpha undetermined, reported as 0).
EfficiencyCurveFit fit_efficiency_curve(const std::vector<double>& pump_w, const std::vector<double>& eta,
                                        double crystal_length_mm = 50.0);

}  // namespace qlink
