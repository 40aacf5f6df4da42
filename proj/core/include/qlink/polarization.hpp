#pragma once

// Polarization-qubit algebra shared by every other module.
//
// Storage basis is circular: a Jones vector holds (aL, aR). The linear states are
//
//   |H> = (|L> + |R>)/sqrt2        |V> = -i(|L> - |R>)/sqrt2
//   |D> = (|H> + |V>)/sqrt2        |A> = (|H> - |V>)/sqrt2
//
// equivalently |L> = (|H> + i|V>)/sqrt2 and |R> = (|H> - i|V>)/sqrt2.
//
// Stokes convention (the only place it is defined):
//   s0 = |aL|^2 + |aR|^2
//   s1 = |<H|psi>|^2 - |<V|psi>|^2
//   s2 = |<D|psi>|^2 - |<A|psi>|^2
//   s3 = |aL|^2 - |aR|^2            so |L> -> (1, 0, 0, +1)

#include <complex>

#include <Eigen/Dense>

namespace qlink {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Vector2c = Eigen::Vector2cd;

struct JonesVector {
    Complex left{0.0, 0.0};
    Complex right{0.0, 0.0};

    static JonesVector L();
    static JonesVector R();
    static JonesVector H();
    static JonesVector V();
    static JonesVector D();
    static JonesVector A();

    static JonesVector from_vector(const Vector2c& v) { return {v(0), v(1)}; }
    Vector2c vector() const { return Vector2c(left, right); }

    double norm_squared() const { return std::norm(left) + std::norm(right); }
    bool is_normalized(double tol = 1e-12) const;
    JonesVector normalized() const;
};

struct StokesVector {
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    double s3 = 0.0;

    double polarized_norm_squared() const { return s1 * s1 + s2 * s2 + s3 * s3; }
    bool is_physical(double tol = 1e-9) const;
};

StokesVector jones_to_stokes(const JonesVector& j);

/// 2x2 unitary in the circular basis.
class PolarizationUnitary {
public:
    PolarizationUnitary() : m_(Matrix2c::Identity()) {}

    /// Throws ValidationError unless U^dagger U = I within `tol`.
    static PolarizationUnitary from_matrix(const Matrix2c& m, double tol = 1e-12);
    /// Same, but with the matrix given in the {H, V} basis.
    static PolarizationUnitary from_linear_basis(const Matrix2c& m_hv, double tol = 1e-12);

    const Matrix2c& matrix() const { return m_; }
    PolarizationUnitary adjoint() const;
    JonesVector apply(const JonesVector& j) const;
    double unitarity_error() const;

    /// Gram-Schmidt on the columns; keeps long products of small rotations unitary.
    PolarizationUnitary reorthonormalized() const;

    friend PolarizationUnitary operator*(const PolarizationUnitary& a, const PolarizationUnitary& b);

private:
    explicit PolarizationUnitary(const Matrix2c& m) : m_(m) {}
    Matrix2c m_;
};

enum class Retarder { half, quarter };

/// Linear retarder with fast axis at `axis_angle` from H.
PolarizationUnitary waveplate(Retarder kind, double axis_angle);

/// Rotation exp(-i (theta . sigma)/2) about the Poincare-sphere axis given by
/// `rotation` (Stokes components s1, s2, s3); |rotation| is the rotation angle.
PolarizationUnitary poincare_rotation(const Eigen::Vector3d& rotation);

enum class PbsPort { transmit, reflect };

/// Optional QWP followed by a HWP, then a PBS. Light meets the QWP first.
struct AnalyzerSetting {
    bool use_qwp = false;
    double qwp_angle = 0.0;
    double hwp_angle = 0.0;
    PbsPort port = PbsPort::transmit;
};

/// Unitary of the waveplates in front of the PBS.
PolarizationUnitary analyzer_optics(const AnalyzerSetting& setting);

/// Projector U^dagger |port><port| U, in the circular basis. Transmit port is |H>.
Matrix2c projector(const AnalyzerSetting& setting);

/// |<a|b>|^2 / (|a|^2 |b|^2).
double state_overlap(const JonesVector& a, const JonesVector& b);

bool equal_up_to_global_phase(const JonesVector& a, const JonesVector& b, double tol = 1e-12);

/// Change of basis: columns are |H>, |V> written in {L, R}.
const Matrix2c& linear_to_circular();

}  // namespace qlink
