#pragma once

#include <array>

#include <Eigen/Dense>

#include "qlink/polarization.hpp"

namespace qlink {

using Matrix4c = Eigen::Matrix4cd;
using Vector4c = Eigen::Vector4cd;

/// Atomic memory qubit basis. Index 0 is |down>_z (m = -1), 1 is |up>_z (m = +1).
enum class AtomLevel { down = 0, up = 1 };

/// Density matrix of the atomic memory qubit alone.
class AtomState {
public:
    AtomState() : rho_(Matrix2c::Zero()) { rho_(0, 0) = 1.0; }
    /// Validates Hermiticity, unit trace and positivity.
    explicit AtomState(const Matrix2c& rho, double tol = 1e-10);

    static AtomState pure(const Vector2c& psi);
    static AtomState maximally_mixed();

    const Matrix2c& matrix() const { return rho_; }
    double population(AtomLevel level) const { return rho_(static_cast<int>(level), static_cast<int>(level)).real(); }

    /// Applies U rho U^dagger.
    AtomState transformed(const Matrix2c& u) const;
    /// Multiplies the off-diagonal coherence by `factor` (phase damping, 0 <= factor <= 1).
    AtomState dephased(double factor) const;

private:
    struct Unchecked {};
    AtomState(const Matrix2c& rho, Unchecked) : rho_(rho) {}
    Matrix2c rho_;
};

/// Atom (memory qubit) x photon (polarization qubit) density matrix over
/// {|down>, |up>} x {|L>, |R>}; the flat index is 2 * atom + photon.
class TwoQubitState {
public:
    /// Validates: Hermitian and unit trace within `tol`, min eigenvalue >= -tol.
    explicit TwoQubitState(const Matrix4c& rho, double tol = 1e-10);

    static TwoQubitState pure(const Vector4c& psi);
    /// (|down>|L> + |up>|R>)/sqrt2.
    static TwoQubitState bell_phi();
    static TwoQubitState maximally_mixed();

    const Matrix4c& matrix() const { return rho_; }

    /// Returns the invariant violation (0 when valid).
    static double hermiticity_error(const Matrix4c& rho);
    static double min_eigenvalue(const Matrix4c& rho);

    /// Fidelity <Phi|rho|Phi> with the ideal entangled state.
    double bell_fidelity() const;

    /// (U_atom x I) rho (U_atom x I)^dagger.
    TwoQubitState with_atom_unitary(const Matrix2c& u) const;
    /// Phase damping of the atomic coherence.
    TwoQubitState with_atom_dephasing(double factor) const;
    /// (I x U_photon) rho (I x U_photon)^dagger.
    TwoQubitState with_photon_unitary(const Matrix2c& u) const;

    /// Joint probability tr[(atom_effect x photon_effect) rho].
    double probability(const Matrix2c& atom_effect, const Matrix2c& photon_effect) const;
    /// Probability of the photon-side effect alone.
    double photon_probability(const Matrix2c& photon_effect) const;
    /// Atomic state conditioned on the photon effect E (normalized tr_photon[(I x E) rho]).
    /// Throws if the outcome has zero probability.
    AtomState atom_conditioned_on(const Matrix2c& photon_effect) const;
    AtomState reduced_atom() const;

private:
    struct Unchecked {};
    TwoQubitState(const Matrix4c& rho, Unchecked) : rho_(rho) {}
    Matrix4c rho_;
};

/// Kronecker product a x b of 2x2 operators.
Matrix4c kron(const Matrix2c& a, const Matrix2c& b);

}  // namespace qlink
