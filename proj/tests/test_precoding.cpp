#include "doctest.h"

#include "cfmimo/errors.hpp"
#include "cfmimo/precoding.hpp"
#include "cfmimo/rng.hpp"

#include <cmath>

using namespace cfmimo;

namespace {

Dcc full_dcc(int K, int L) { return select_dcc(Eigen::MatrixXd::Ones(K, L), DccPolicy::All); }

LinkGrid<Eigen::VectorXcd> random_estimates(int K, int L, int N, std::uint64_t seed) {
    Rng rng(seed);
    LinkGrid<Eigen::VectorXcd> h(K, L, Eigen::VectorXcd::Zero(N));
    for (auto& v : h)
        for (int n = 0; n < N; ++n) v(n) = 1e-5 * rng.complex_normal();
    return h;
}

}  // namespace

TEST_CASE("MR direction is the estimate") {
    const Dcc dcc = full_dcc(1, 1);
    LinkGrid<Eigen::VectorXcd> h(1, 1, Eigen::VectorXcd::Zero(2));
    h(0, 0)(0) = 1.0;
    const auto w = mr_precoder(h, dcc);
    CHECK(w(0, 0) == h(0, 0));

    const auto h2 = random_estimates(3, 2, 4, 8);
    const auto n1 = normalize(mr_precoder(h2, full_dcc(3, 2)), full_dcc(3, 2), PrecodingScheme::MR);
    auto scaled = h2;
    for (auto& v : scaled) v *= 123.0;
    const auto n2 = normalize(mr_precoder(scaled, full_dcc(3, 2)), full_dcc(3, 2), PrecodingScheme::MR);
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 2; ++l) CHECK((n1.w(k, l) - n2.w(k, l)).norm() < 1e-14);
}

TEST_CASE("DCC masking gives explicit zero vectors") {
    Eigen::MatrixXd beta(2, 2);
    beta << 1, 0.1, 0.2, 3;
    const Dcc dcc = select_dcc(beta, DccPolicy::TopQ, 1);
    const auto h = random_estimates(2, 2, 2, 3);
    for (auto scheme : {PrecodingScheme::MR, PrecodingScheme::RZF}) {
        SystemConfig c;
        const auto p = compute_precoders(scheme, h, dcc, c);
        CHECK(p.w(0, 0).norm() == doctest::Approx(1.0));
        CHECK(p.w(0, 1).norm() == 0.0);
        CHECK(p.w(1, 0).norm() == 0.0);
        CHECK(p.w(1, 1).norm() == doctest::Approx(1.0));
        CHECK(p.w(0, 1).size() == 2);
    }
}

TEST_CASE("RZF single served UE stays collinear") {
    const Dcc dcc = full_dcc(1, 1);
    LinkGrid<Eigen::VectorXcd> h(1, 1, Eigen::VectorXcd::Zero(3));
    h(0, 0)(0) = cdouble(2e-5, 0);
    const auto w = normalize(rzf_precoder(h, dcc, 0.1, 4e-13), dcc, PrecodingScheme::RZF).w(0, 0);
    CHECK(std::abs(w(0)) == doctest::Approx(1.0));
    CHECK(std::abs(w(1)) < 1e-15);
    CHECK(std::abs(w(2)) < 1e-15);
}

TEST_CASE("RZF approaches MR as the regularization grows") {
    const Dcc dcc = full_dcc(3, 2);
    const auto h = random_estimates(3, 2, 4, 21);
    const auto mr = normalize(mr_precoder(h, dcc), dcc, PrecodingScheme::MR);
    const auto rzf = normalize(rzf_precoder(h, dcc, 0.1, 1e6), dcc, PrecodingScheme::RZF);
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 2; ++l) CHECK((mr.w(k, l) - rzf.w(k, l)).norm() < 1e-9);
}

TEST_CASE("RZF keeps orthogonal estimates orthogonal") {
    const Dcc dcc = full_dcc(2, 1);
    LinkGrid<Eigen::VectorXcd> h(2, 1, Eigen::VectorXcd::Zero(2));
    h(0, 0) << cdouble(3e-5, 0), cdouble(0, 0);
    h(1, 0) << cdouble(0, 0), cdouble(0, 1e-5);
    const auto w = rzf_precoder(h, dcc, 0.1, 4e-13);
    // hand evaluation: the Gram matrix is diagonal, so each direction is a
    // positive multiple of its own estimate
    const double d0 = 0.1 / (0.1 * 9e-10 + 4e-13);
    const double d1 = 0.1 / (0.1 * 1e-10 + 4e-13);
    CHECK(std::abs(w(0, 0)(0) - d0 * 3e-5) < 1e-9 * d0 * 3e-5);
    CHECK(std::abs(w(1, 0)(1) - cdouble(0, d1 * 1e-5)) < 1e-9 * d1 * 1e-5);
    CHECK(std::abs(w(0, 0).dot(w(1, 0))) == 0.0);
}

TEST_CASE("RZF is invariant to joint scaling of powers and noise") {
    const Dcc dcc = full_dcc(4, 3);
    const auto h = random_estimates(4, 3, 2, 5);
    const auto a = normalize(rzf_precoder(h, dcc, 0.1, 4e-13), dcc, PrecodingScheme::RZF);
    const auto b = normalize(rzf_precoder(h, dcc, 0.1 * 37.0, 4e-13 * 37.0), dcc, PrecodingScheme::RZF);
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 3; ++l) CHECK((a.w(k, l) - b.w(k, l)).norm() < 1e-10);
}

TEST_CASE("normalize") {
    const Dcc dcc = full_dcc(1, 1);
    LinkGrid<Eigen::VectorXcd> d(1, 1, Eigen::VectorXcd::Zero(2));
    d(0, 0) << cdouble(3, 0), cdouble(0, 4);
    auto p = normalize(d, dcc, PrecodingScheme::MR);
    CHECK(p.w(0, 0)(0).real() == doctest::Approx(0.6));
    CHECK(p.w(0, 0)(1).imag() == doctest::Approx(0.8));
    const auto again = normalize(p.w, dcc, PrecodingScheme::MR);
    CHECK((again.w(0, 0) - p.w(0, 0)).norm() < 1e-16);

    const auto h = random_estimates(5, 9, 2, 77);
    const auto q = normalize(h, full_dcc(5, 9), PrecodingScheme::MR);
    for (const auto& w : q.w) CHECK(std::fabs(w.norm() - 1.0) < 1e-15);

    d(0, 0).setZero();
    CHECK_THROWS_AS(normalize(d, dcc, PrecodingScheme::MR), NumericalError);
}
