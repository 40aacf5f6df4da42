#include "qlink/polarization.hpp"

#include <cmath>
#include <numbers>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
const Complex kI{0.0, 1.0};

Matrix2c rotation(double angle) {
    Matrix2c r;
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

}  // namespace

JonesVector JonesVector::L() { return {1.0, 0.0}; }
JonesVector JonesVector::R() { return {0.0, 1.0}; }
JonesVector JonesVector::H() { return {kInvSqrt2, kInvSqrt2}; }
JonesVector JonesVector::V() { return {-kI * kInvSqrt2, kI * kInvSqrt2}; }

JonesVector JonesVector::D() {
    const auto h = H();
    const auto v = V();
    return {(h.left + v.left) * kInvSqrt2, (h.right + v.right) * kInvSqrt2};
}

JonesVector JonesVector::A() {
    const auto h = H();
    const auto v = V();
    return {(h.left - v.left) * kInvSqrt2, (h.right - v.right) * kInvSqrt2};
}

bool JonesVector::is_normalized(double tol) const { return std::abs(norm_squared() - 1.0) <= tol; }

JonesVector JonesVector::normalized() const {
    const double n = std::sqrt(norm_squared());
    if (n == 0.0) throw ValidationError("", "cannot normalize a zero Jones vector");
    return {left / n, right / n};
}

bool StokesVector::is_physical(double tol) const {
    return s0 >= -tol && polarized_norm_squared() <= s0 * s0 + tol;
}

const Matrix2c& linear_to_circular() {
    static const Matrix2c m = [] {
        Matrix2c c;
        const auto h = JonesVector::H();
        const auto v = JonesVector::V();
        c << h.left, v.left, h.right, v.right;
        return c;
    }();
    return m;
}

StokesVector jones_to_stokes(const JonesVector& j) {
    const Vector2c hv = linear_to_circular().adjoint() * j.vector();
    const double h = std::norm(hv(0));
    const double v = std::norm(hv(1));
    const double d = std::norm((hv(0) + hv(1)) * kInvSqrt2);
    const double a = std::norm((hv(0) - hv(1)) * kInvSqrt2);
    const double l = std::norm(j.left);
    const double r = std::norm(j.right);
    return {l + r, h - v, d - a, l - r};
}

PolarizationUnitary PolarizationUnitary::from_matrix(const Matrix2c& m, double tol) {
    PolarizationUnitary u(m);
    if (!(u.unitarity_error() <= tol)) {
        throw ValidationError("", "matrix is not unitary (|U^dag U - I| = " +
                                      std::to_string(u.unitarity_error()) + ")");
    }
    return u;
}

PolarizationUnitary PolarizationUnitary::from_linear_basis(const Matrix2c& m_hv, double tol) {
    const Matrix2c& c = linear_to_circular();
    return from_matrix(c * m_hv * c.adjoint(), tol);
}

PolarizationUnitary PolarizationUnitary::adjoint() const { return PolarizationUnitary(m_.adjoint()); }

JonesVector PolarizationUnitary::apply(const JonesVector& j) const {
    return JonesVector::from_vector(m_ * j.vector());
}

double PolarizationUnitary::unitarity_error() const {
    return (m_.adjoint() * m_ - Matrix2c::Identity()).norm();
}

PolarizationUnitary PolarizationUnitary::reorthonormalized() const {
    Vector2c c0 = m_.col(0);
    c0.normalize();
    Vector2c c1 = m_.col(1);
    c1 -= c0.dot(c1) * c0;
    c1.normalize();
    Matrix2c out;
    out.col(0) = c0;
    out.col(1) = c1;
    return PolarizationUnitary(out);
}

PolarizationUnitary operator*(const PolarizationUnitary& a, const PolarizationUnitary& b) {
    return PolarizationUnitary(a.m_ * b.m_);
}

PolarizationUnitary waveplate(Retarder kind, double axis_angle) {
    const double retardance = kind == Retarder::half ? std::numbers::pi : std::numbers::pi / 2.0;
    Matrix2c phase = Matrix2c::Zero();
    phase(0, 0) = std::exp(-kI * (retardance / 2.0));
    phase(1, 1) = std::exp(kI * (retardance / 2.0));
    const Matrix2c hv = rotation(axis_angle) * phase * rotation(-axis_angle);
    return PolarizationUnitary::from_linear_basis(hv);
}

PolarizationUnitary poincare_rotation(const Eigen::Vector3d& rotation_vector) {
    const double angle = rotation_vector.norm();
    if (angle == 0.0) return PolarizationUnitary();
    const Eigen::Vector3d n = rotation_vector / angle;
    // Pauli operators matching the Stokes convention in the circular basis:
    // s3 <-> diag(1,-1), s1 <-> sigma_x, s2 <-> sigma_y with the phase of |V> above.
    Matrix2c sigma1;
    sigma1 << 0.0, 1.0, 1.0, 0.0;
    Matrix2c sigma2;
    sigma2 << 0.0, -kI, kI, 0.0;
    Matrix2c sigma3;
    sigma3 << 1.0, 0.0, 0.0, -1.0;
    const Matrix2c generator = n(0) * sigma1 + n(1) * sigma2 + n(2) * sigma3;
    const Matrix2c u = std::cos(angle / 2.0) * Matrix2c::Identity() - kI * std::sin(angle / 2.0) * generator;
    return PolarizationUnitary::from_matrix(u, 1e-10);
}

PolarizationUnitary analyzer_optics(const AnalyzerSetting& setting) {
    PolarizationUnitary u = waveplate(Retarder::half, setting.hwp_angle);
    if (setting.use_qwp) u = u * waveplate(Retarder::quarter, setting.qwp_angle);
    return u;
}

Matrix2c projector(const AnalyzerSetting& setting) {
    const JonesVector port = setting.port == PbsPort::transmit ? JonesVector::H() : JonesVector::V();
    const Vector2c p = port.vector();
    const Matrix2c u = analyzer_optics(setting).matrix();
    return u.adjoint() * (p * p.adjoint()) * u;
}

double state_overlap(const JonesVector& a, const JonesVector& b) {
    const Complex inner = a.vector().dot(b.vector());
    return std::norm(inner) / (a.norm_squared() * b.norm_squared());
}

bool equal_up_to_global_phase(const JonesVector& a, const JonesVector& b, double tol) {
    if (std::abs(a.norm_squared() - b.norm_squared()) > tol) return false;
    return std::abs(1.0 - state_overlap(a, b)) <= tol;
}

}  // namespace qlink
