#include "qlink/two_qubit.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "qlink/errors.hpp"

namespace qlink {
namespace {

template <typename M>
void validate_density(const M& rho, double tol, const char* what) {
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (!(herm <= tol)) throw ValidationError("", std::string(what) + " is not Hermitian");
    const double trace = rho.trace().real();
    if (!(std::abs(trace - 1.0) <= tol)) {
        throw ValidationError("", std::string(what) + " trace is " + std::to_string(trace));
    }
    Eigen::SelfAdjointEigenSolver<M> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() >= -tol)) {
        throw ValidationError("", std::string(what) + " is not positive semidefinite");
    }
}

}  // namespace

Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
    Matrix4c out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

AtomState::AtomState(const Matrix2c& rho, double tol) : rho_(rho) { validate_density(rho_, tol, "atom state"); }

AtomState AtomState::pure(const Vector2c& psi) {
    const Vector2c n = psi.normalized();
    return AtomState(n * n.adjoint(), Unchecked{});
}

AtomState AtomState::maximally_mixed() { return AtomState(0.5 * Matrix2c::Identity(), Unchecked{}); }

AtomState AtomState::transformed(const Matrix2c& u) const { return AtomState(u * rho_ * u.adjoint(), Unchecked{}); }

AtomState AtomState::dephased(double factor) const {
    Matrix2c out = rho_;
    out(0, 1) *= factor;
    out(1, 0) *= factor;
    return AtomState(out, Unchecked{});
}

TwoQubitState::TwoQubitState(const Matrix4c& rho, double tol) : rho_(rho) {
    validate_density(rho_, tol, "two-qubit state");
}

TwoQubitState TwoQubitState::pure(const Vector4c& psi) {
    const Vector4c n = psi.normalized();
    return TwoQubitState(n * n.adjoint(), Unchecked{});
}

TwoQubitState TwoQubitState::bell_phi() {
    Vector4c psi = Vector4c::Zero();
    psi(0) = 1.0;  // |down>|L>
    psi(3) = 1.0;  // |up>|R>
    return pure(psi);
}

TwoQubitState TwoQubitState::maximally_mixed() { return TwoQubitState(0.25 * Matrix4c::Identity(), Unchecked{}); }

double TwoQubitState::hermiticity_error(const Matrix4c& rho) { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

double TwoQubitState::min_eigenvalue(const Matrix4c& rho) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double TwoQubitState::bell_fidelity() const {
    const Matrix4c& ideal = bell_phi().matrix();
    return (ideal * rho_).trace().real();
}

TwoQubitState TwoQubitState::with_atom_unitary(const Matrix2c& u) const {
    const Matrix4c big = kron(u, Matrix2c::Identity());
    return TwoQubitState(big * rho_ * big.adjoint(), Unchecked{});
}

TwoQubitState TwoQubitState::with_atom_dephasing(double factor) const {
    Matrix4c out = rho_;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if ((i >> 1) != (j >> 1)) out(i, j) *= factor;
    return TwoQubitState(out, Unchecked{});
}

TwoQubitState TwoQubitState::with_photon_unitary(const Matrix2c& u) const {
    const Matrix4c big = kron(Matrix2c::Identity(), u);
    return TwoQubitState(big * rho_ * big.adjoint(), Unchecked{});
}

double TwoQubitState::probability(const Matrix2c& atom_effect, const Matrix2c& photon_effect) const {
    return (kron(atom_effect, photon_effect) * rho_).trace().real();
}

double TwoQubitState::photon_probability(const Matrix2c& photon_effect) const {
    return probability(Matrix2c::Identity(), photon_effect);
}

AtomState TwoQubitState::atom_conditioned_on(const Matrix2c& photon_effect) const {
    // tr_photon[(I x E) rho]_{ab} = sum_{p,q} E_{qp} rho_{(a,p),(b,q)}
    Matrix2c out = Matrix2c::Zero();
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) out(a, b) += photon_effect(q, p) * rho_(2 * a + p, 2 * b + q);
    const double norm = out.trace().real();
    if (!(norm > 0.0)) throw ValidationError("", "conditioning on a zero-probability photon outcome");
    out /= norm;
    return AtomState(0.5 * (out + out.adjoint()), 1e-9);
}

AtomState TwoQubitState::reduced_atom() const { return atom_conditioned_on(Matrix2c::Identity()); }

}  // namespace qlink
