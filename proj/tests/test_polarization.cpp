#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "qlink/errors.hpp"
#include "qlink/polarization.hpp"
#include "qlink/random.hpp"

using namespace qlink;

namespace {

constexpr double kPi = std::numbers::pi;

// Textbook retarder in the {H, V} basis: R(a) diag(1, e^{i delta}) R(-a).
Matrix2c retarder_hv(double delta, double a) {
    Matrix2c rot;
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    Matrix2c d = Matrix2c::Zero();
    d(0, 0) = 1.0;
    d(1, 1) = std::polar(1.0, delta);
    return rot * d * rot.transpose();
}

JonesVector random_state(Rng& rng) {
    const Vector2c v(Complex(rng.normal(), rng.normal()), Complex(rng.normal(), rng.normal()));
    return JonesVector::from_vector(v.normalized());
}

}  // namespace

TEST(Stokes, BasisStates) {
    const StokesVector h = jones_to_stokes(JonesVector::H());
    EXPECT_NEAR(h.s0, 1.0, 1e-12);
    EXPECT_NEAR(h.s1, 1.0, 1e-12);
    EXPECT_NEAR(h.s2, 0.0, 1e-12);
    EXPECT_NEAR(h.s3, 0.0, 1e-12);

    const StokesVector l = jones_to_stokes(JonesVector::L());
    EXPECT_NEAR(l.s1, 0.0, 1e-12);
    EXPECT_NEAR(l.s2, 0.0, 1e-12);
    EXPECT_NEAR(l.s3, 1.0, 1e-12);

    const StokesVector d = jones_to_stokes(JonesVector::D());
    EXPECT_NEAR(d.s1, 0.0, 1e-12);
    EXPECT_NEAR(d.s2, 1.0, 1e-12);
    EXPECT_NEAR(d.s3, 0.0, 1e-12);

    const StokesVector v = jones_to_stokes(JonesVector::V());
    EXPECT_NEAR(v.s1, -1.0, 1e-12);
    const StokesVector a = jones_to_stokes(JonesVector::A());
    EXPECT_NEAR(a.s2, -1.0, 1e-12);
}

TEST(Stokes, LinearStatesMatchCircularDefinition) {
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_TRUE(equal_up_to_global_phase(JonesVector::H(), JonesVector{r, r}));
    EXPECT_TRUE(equal_up_to_global_phase(JonesVector::V(), JonesVector{Complex(0, -r), Complex(0, r)}));
}

TEST(Stokes, PurityPreservedByUnitaries) {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const JonesVector j = random_state(rng);
        const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
        const PolarizationUnitary u = poincare_rotation(axis) * waveplate(Retarder::quarter, rng.uniform(0, kPi));
        const StokesVector before = jones_to_stokes(j);
        const StokesVector after = jones_to_stokes(u.apply(j));
        EXPECT_NEAR(after.s0, before.s0, 1e-12);
        EXPECT_NEAR(after.polarized_norm_squared(), before.polarized_norm_squared(), 1e-12);
        EXPECT_TRUE(after.is_physical());
    }
}

TEST(Waveplate, StandardActions) {
    EXPECT_TRUE(equal_up_to_global_phase(waveplate(Retarder::half, 0.0).apply(JonesVector::H()), JonesVector::H()));
    EXPECT_TRUE(
        equal_up_to_global_phase(waveplate(Retarder::half, kPi / 8).apply(JonesVector::H()), JonesVector::D(), 1e-12));
    const StokesVector s = jones_to_stokes(waveplate(Retarder::quarter, kPi / 4).apply(JonesVector::H()));
    EXPECT_NEAR(std::abs(s.s3), 1.0, 1e-12);
}

TEST(Waveplate, MatchesTextbookMatrixInLinearBasis) {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(-kPi, kPi);
        for (auto [kind, delta] : {std::pair{Retarder::half, kPi}, std::pair{Retarder::quarter, kPi / 2}}) {
            const PolarizationUnitary expected = PolarizationUnitary::from_linear_basis(retarder_hv(delta, a));
            const JonesVector probe = random_state(rng);
            EXPECT_TRUE(equal_up_to_global_phase(waveplate(kind, a).apply(probe), expected.apply(probe), 1e-12));
        }
    }
}

TEST(Waveplate, UnitaryProperty) {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        EXPECT_LT(waveplate(Retarder::half, rng.uniform(-10, 10)).unitarity_error(), 1e-12);
        EXPECT_LT(waveplate(Retarder::quarter, rng.uniform(-10, 10)).unitarity_error(), 1e-12);
        const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
        EXPECT_LT(poincare_rotation(axis).unitarity_error(), 1e-12);
    }
}

TEST(Unitary, RejectsNonUnitary) {
    Matrix2c m = Matrix2c::Identity();
    m(0, 0) = 1.01;
    EXPECT_THROW(PolarizationUnitary::from_matrix(m), ValidationError);
}

TEST(PoincareRotation, RotatesStokesVectorAboutAxis) {
    // pi/2 about s3 takes H (s1) to D (s2).
    const JonesVector out = poincare_rotation(Eigen::Vector3d(0, 0, kPi / 2)).apply(JonesVector::H());
    const StokesVector s = jones_to_stokes(out);
    EXPECT_NEAR(s.s2, 1.0, 1e-12);
}

TEST(Projector, HwpSettings) {
    AnalyzerSetting a;
    const Matrix2c ph = projector(a);
    const Vector2c h = JonesVector::H().vector();
    EXPECT_LT((ph - h * h.adjoint()).norm(), 1e-12);

    a.hwp_angle = kPi / 8;
    const Vector2c d = JonesVector::D().vector();
    EXPECT_LT((projector(a) - d * d.adjoint()).norm(), 1e-12);

    a.port = PbsPort::reflect;
    const Vector2c an = JonesVector::A().vector();
    EXPECT_LT((projector(a) - an * an.adjoint()).norm(), 1e-12);
}

TEST(Projector, IdempotentHermitianTraceOne) {
    Rng rng(9);
    for (int i = 0; i < 500; ++i) {
        AnalyzerSetting a;
        a.use_qwp = rng.bernoulli(0.5);
        a.qwp_angle = rng.uniform(-kPi, kPi);
        a.hwp_angle = rng.uniform(-kPi, kPi);
        a.port = rng.bernoulli(0.5) ? PbsPort::transmit : PbsPort::reflect;
        const Matrix2c p = projector(a);
        EXPECT_LT((p * p - p).norm(), 1e-12);
        EXPECT_LT((p - p.adjoint()).norm(), 1e-12);
        EXPECT_NEAR(p.trace().real(), 1.0, 1e-12);
        Eigen::SelfAdjointEigenSolver<Matrix2c> es(p);
        EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-12);
        EXPECT_NEAR(es.eigenvalues()(1), 1.0, 1e-12);
        // Both ports resolve the identity.
        AnalyzerSetting other = a;
        other.port = a.port == PbsPort::transmit ? PbsPort::reflect : PbsPort::transmit;
        EXPECT_LT((p + projector(other) - Matrix2c::Identity()).norm(), 1e-12);
    }
}

TEST(Jones, Normalization) {
    const JonesVector j{Complex(3, 0), Complex(0, 4)};
    EXPECT_FALSE(j.is_normalized());
    EXPECT_TRUE(j.normalized().is_normalized());
    EXPECT_NEAR(state_overlap(JonesVector::H(), JonesVector::V()), 0.0, 1e-15);
    EXPECT_NEAR(state_overlap(JonesVector::H(), JonesVector::D()), 0.5, 1e-15);
}
