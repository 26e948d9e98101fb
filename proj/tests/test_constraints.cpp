#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ff/constraints.hpp"
#include "test_helpers.hpp"

using namespace ff;

TEST_CASE("rotated_offset") {
    const auto I2 = RotationMatrix::identity(2);
    CHECK(rotated_offset(fft::v2(1, 2), fft::v2(1, 2), I2).norm() == 0.0);

    // Ring values: offset from agent 6 to the newcomer at [-1, -2.1].
    const Eigen::VectorXd off = rotated_offset(fft::v2(-2, -3), fft::agent7_nominal(), I2);
    CHECK(off(0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(off(1) == doctest::Approx(-0.9).epsilon(1e-12));

    // Quarter turn, checked against an explicit matrix-vector oracle.
    const auto R = RotationMatrix::rotation2d(M_PI / 2.0);
    const Eigen::VectorXd r = rotated_offset(fft::v2(1, 0), fft::v2(0, 0), R);
    Eigen::VectorXd oracle(2);
    for (int k = 0; k < 2; ++k) {
        oracle(k) = R.entries()(0, k) * 1.0 + R.entries()(1, k) * 0.0;
    }
    CHECK((r - oracle).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(r(0)) < 1e-15);
    CHECK(r(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constraint_weights on the ring triplet (5,6,7)") {
    const auto F7 = fft::ring6_formation().withAgent(7, fft::agent7_nominal());
    const TripletWeights w = constraint_weights({5, 6, 7}, F7);

    CHECK((w.w_jk - fft::diag2(-1.0, -0.9)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.w_ki - fft::diag2(-1.0, -0.1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.w_kk - fft::diag2(-2.0, -1.0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.w_kk - (w.w_jk + w.w_ki)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constraint_weights corner cases") {
    const auto F = fft::ring6_formation();

    // Coincident anchors: w_kk vanishes entirely.
    Eigen::VectorXd pt(6);
    pt << 1, 1, 1, 1, 0, 0;
    NominalFormation co(2, {1, 2, 3}, pt, RotationMatrix::identity(2), {1});
    const TripletWeights w0 = constraint_weights({1, 2, 3}, co);
    CHECK(w0.w_kk.cwiseAbs().maxCoeff() == 0.0);

    // Triplet (2,3,8): w_kk = diag of ptilde_3 - ptilde_2.
    const auto F8 = F.withAgent(8, fft::agent8_nominal());
    const TripletWeights w8 = constraint_weights({2, 3, 8}, F8);
    CHECK((w8.w_kk - fft::diag2(-1.0, -2.0)).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(constraint_weights({2, 3, 99}, F8), UnknownAgentError);
    CHECK_THROWS_AS(constraint_weights({2, 2, 8}, F8), Error);
}

TEST_CASE("genericity_check") {
    const auto I2 = RotationMatrix::identity(2);
    CHECK(genericity_check(fft::v2(0, -2), fft::v2(-2, -3), I2, 1e-9));
    CHECK_FALSE(genericity_check(fft::v2(0, 0), fft::v2(1, 0), I2, 1e-9));

    // A 45-degree frame kills the diagonal offset [1, 1].
    const auto R45 = RotationMatrix::rotation2d(M_PI / 4.0);
    CHECK_FALSE(genericity_check(fft::v2(0, 0), fft::v2(1, 1), R45, 1e-9));

    CHECK_THROWS_AS(genericity_check(fft::v2(0, 0), fft::v2(1, 1), I2, 0.0), Error);
}

TEST_CASE("constraint_residual vanishes at nominal and under maneuvers") {
    const auto F7 = fft::ring6_formation().withAgent(7, fft::agent7_nominal());
    const TripletWeights w = constraint_weights({5, 6, 7}, F7);
    const Eigen::VectorXd p5 = F7.nominalOf(5), p6 = F7.nominalOf(6), p7 = F7.nominalOf(7);

    CHECK(constraint_residual(w, p5, p6, p7).norm() < 1e-12);

    Rng rng(3);
    const double scale = 3.0;  // max nominal magnitude of the ring
    for (int it = 0; it < 100; ++it) {
        ManeuverParams m{fft::random_vector(2, rng, -2.0, 2.0),
                         fft::random_vector(2, rng, -5.0, 5.0)};
        const Eigen::VectorXd p = apply_maneuver(F7, m);
        const Eigen::VectorXd res =
            constraint_residual(w, p.segment(8, 2), p.segment(10, 2), p.segment(12, 2));
        CHECK(res.norm() <= 1e-9 * (1.0 + m.scale.cwiseAbs().maxCoeff()) * scale);
    }

    // Linearity in the dependent agent: moving p_k by delta changes the
    // residual by exactly -w_kk delta.
    const Eigen::VectorXd delta = fft::v2(0.25, -0.125);
    const Eigen::VectorXd base = constraint_residual(w, p5, p6, p7);
    const Eigen::VectorXd moved = constraint_residual(w, p5, p6, p7 + delta);
    CHECK((moved - base + w.w_kk * delta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("translation invariance is exact") {
    Rng rng(17);
    for (int it = 0; it < 200; ++it) {
        const int d = 2 + it % 3;
        const auto R = fft::random_rotation(d, rng);
        const Eigen::VectorXd pi = fft::random_vector(d, rng);
        const Eigen::VectorXd pj = fft::random_vector(d, rng);
        const Eigen::VectorXd pk = fft::random_vector(d, rng);
        const TripletWeights w = constraint_weights_at(pi, pj, pk, R);
        const Eigen::VectorXd tau = fft::random_vector(d, rng, -10.0, 10.0);
        const Eigen::VectorXd a = constraint_residual(w, pi, pj, pk);
        const Eigen::VectorXd b = constraint_residual(w, pi + tau, pj + tau, pk + tau);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("resolve_dependent") {
    const auto F7 = fft::ring6_formation().withAgent(7, fft::agent7_nominal());
    const TripletWeights w = constraint_weights({5, 6, 7}, F7);

    const Eigen::VectorXd p7 = resolve_dependent(w, F7.nominalOf(5), F7.nominalOf(6));
    CHECK((p7 - fft::agent7_nominal()).cwiseAbs().maxCoeff() < 1e-12);

    // Maneuvered anchors resolve to the maneuvered dependent position.
    Rng rng(41);
    for (int it = 0; it < 20; ++it) {
        ManeuverParams m{fft::random_vector(2, rng, -2.0, 2.0),
                         fft::random_vector(2, rng, -5.0, 5.0)};
        const Eigen::VectorXd p = apply_maneuver(F7, m);
        const Eigen::VectorXd got = resolve_dependent(w, p.segment(8, 2), p.segment(10, 2));
        CHECK((got - p.segment(12, 2)).norm() < 1e-9 * (1.0 + p.norm()));
    }

    // Degenerate anchors (zero offset component) are rejected.
    const auto I2 = RotationMatrix::identity(2);
    const TripletWeights bad =
        constraint_weights_at(fft::v2(0, 0), fft::v2(1, 0), fft::v2(0.5, 1), I2);
    CHECK_THROWS_AS(resolve_dependent(bad, fft::v2(0, 0), fft::v2(1, 0)), SingularWeightError);
    try {
        resolve_dependent(bad, fft::v2(0, 0), fft::v2(1, 0));
    } catch (const SingularWeightError& e) {
        CHECK(e.smallestSingularValue() < 1e-14);
    }
}

TEST_CASE("rank of w_kk matches the genericity condition") {
    Rng rng(29);
    for (int it = 0; it < 200; ++it) {
        const int d = 2 + it % 3;
        const auto R = fft::random_rotation(d, rng);
        Eigen::VectorXd pi = fft::random_vector(d, rng);
        Eigen::VectorXd pj = fft::random_vector(d, rng);
        if (it % 4 == 0) {
            // Force a degenerate pair: align one rotated component exactly.
            Eigen::VectorXd off = R.entries().transpose() * (pj - pi);
            off(it % d) = 0.0;
            pj = pi + R.entries() * off;
        }
        const Eigen::VectorXd pk = fft::random_vector(d, rng);
        const TripletWeights w = constraint_weights_at(pi, pj, pk, R);

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(w.w_kk);
        const auto& sigma = svd.singularValues();
        int rank = 0;
        for (Eigen::Index k = 0; k < sigma.size(); ++k) {
            if (sigma(k) > 1e-8 * sigma(0)) ++rank;
        }
        CHECK((rank == d) == genericity_check(pi, pj, R));
    }
}

TEST_CASE("scaling invariance holds per the weight construction") {
    Rng rng(59);
    for (int it = 0; it < 200; ++it) {
        const int d = 2 + it % 3;
        const auto R = fft::random_rotation(d, rng);
        const Eigen::VectorXd pi = fft::random_vector(d, rng);
        const Eigen::VectorXd pj = fft::random_vector(d, rng);
        const Eigen::VectorXd pk = fft::random_vector(d, rng);
        const TripletWeights w = constraint_weights_at(pi, pj, pk, R);

        const Eigen::VectorXd s = fft::random_vector(d, rng, -3.0, 3.0);
        const Eigen::VectorXd tau = fft::random_vector(d, rng, -10.0, 10.0);
        const Eigen::MatrixXd S = scaling_transform(s, R);
        const Eigen::VectorXd res =
            constraint_residual(w, S * pi + tau, S * pj + tau, S * pk + tau);
        const double max_p = std::max({pi.norm(), pj.norm(), pk.norm()});
        CHECK(res.norm() <= 1e-9 * (1.0 + s.cwiseAbs().maxCoeff()) * max_p);
    }
}
