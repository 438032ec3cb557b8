#include "doctest.h"

#include "cfmimo/errors.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/rng.hpp"

#include <cmath>

using namespace cfmimo;

namespace {

SystemConfig small_config(int K, int L, int N, int tau_p) {
    SystemConfig c;
    c.K = K;
    c.L = L;
    c.N = N;
    c.tau_p = tau_p;
    c.require_orthogonal_pilots = false;
    return c;
}

}  // namespace

TEST_CASE("assign_pilots") {
    auto a = assign_pilots(5, 5);
    CHECK(a.pilot_of_ue == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(a.tau_p() == 5);
    for (const auto& g : a.groups) CHECK(g.size() == 1);

    a = assign_pilots(4, 2);
    CHECK(a.pilot_of_ue == std::vector<int>{0, 1, 0, 1});
    CHECK(a.groups[0] == std::vector<int>{0, 2});
    CHECK(a.groups[1] == std::vector<int>{1, 3});

    a = assign_pilots(1, 3);
    CHECK(a.pilot_of_ue == std::vector<int>{0});
    CHECK(a.groups[1].empty());

    CHECK_THROWS_AS(assign_pilots(3, 0), ConfigError);
}

TEST_CASE("received_pilot is the scaled superposition") {
    const SystemConfig c = small_config(2, 1, 2, 1);
    const auto assign = assign_pilots(2, 1);
    ChannelSample s;
    s.h = LinkGrid<Eigen::VectorXcd>(2, 1, Eigen::VectorXcd::Zero(2));

    auto y = received_pilot(s, assign, c, 1, true);
    CHECK(y(0, 0).norm() == 0.0);

    s.h(0, 0) << cdouble(1, 2), cdouble(-3, 0.5);
    s.h(1, 0) << cdouble(0, 1), cdouble(2, 2);
    y = received_pilot(s, assign, c, 1, true);
    const double scale = std::sqrt(c.tau_p * c.p_ul);
    CHECK((y(0, 0) - scale * (s.h(0, 0) + s.h(1, 0))).norm() < 1e-15);

    const auto orth = assign_pilots(2, 2);
    SystemConfig c2 = c;
    c2.tau_p = 2;
    y = received_pilot(s, orth, c2, 1, true);
    CHECK((y(0, 0) - std::sqrt(2 * c.p_ul) * s.h(0, 0)).norm() < 1e-15);
    CHECK((y(1, 0) - std::sqrt(2 * c.p_ul) * s.h(1, 0)).norm() < 1e-15);

    // noisy pilots are reproducible per seed
    const auto n1 = received_pilot(s, orth, c2, 17);
    const auto n2 = received_pilot(s, orth, c2, 17);
    CHECK(n1(0, 0) == n2(0, 0));
    CHECK(n1(0, 0) != y(0, 0));
}

TEST_CASE("compute_phi closed forms") {
    SystemConfig c = small_config(1, 1, 2, 2);
    const auto net = make_realization(c, std::vector<Point3>{{40, 40, 0}});
    const double beta = net.beta(0, 0);
    const auto assign = assign_pilots(1, 2);
    const auto phi = compute_phi(assign, net, c);
    const double expect = c.tau_p * c.p_ul * beta + c.noise_power;
    CHECK(phi(0, 0)(0, 0).real() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(phi(0, 0)(1, 1).real() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(phi(0, 0)(0, 1)) == 0.0);
    // the second pilot is unused
    CHECK((phi(1, 0) - c.noise_power * Eigen::MatrixXcd::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("scalar closed-form estimate") {
    SystemConfig c = small_config(1, 1, 2, 1);
    const auto net = make_realization(c, std::vector<Point3>{{40, 40, 0}});
    const auto assign = assign_pilots(1, 1);
    const double beta = net.beta(0, 0);
    LinkGrid<Eigen::VectorXcd> y(1, 1, Eigen::VectorXcd::Zero(2));
    y(0, 0) << cdouble(1e-6, 2e-6), cdouble(-3e-6, 0);
    const auto est = mmse_estimate(y, net, assign, c);
    const double tp = c.tau_p * c.p_ul;
    const double factor = std::sqrt(tp) * beta / (tp * beta + c.noise_power);
    CHECK((est.h_hat(0, 0) - factor * y(0, 0)).norm() <= 1e-12 * (factor * y(0, 0)).norm());

    // vanishing noise: the estimator inverts the pilot scaling
    c.noise_power = 1e-30;
    ChannelSample s;
    s.h = LinkGrid<Eigen::VectorXcd>(1, 1, Eigen::VectorXcd::Zero(2));
    s.h(0, 0) << cdouble(1e-5, 0), cdouble(0, -2e-5);
    const auto y0 = received_pilot(s, assign, c, 1, true);
    const auto est0 = mmse_estimate(y0, net, assign, c);
    CHECK((est0.h_hat(0, 0) - s.h(0, 0)).norm() < 1e-9 * s.h(0, 0).norm());
}

TEST_CASE("estimator statistics match the sample statistics") {
    SystemConfig c = small_config(2, 2, 2, 1);  // contaminated: both UEs share a pilot
    c.correlation = CorrelationKind::Exponential;
    c.correlation_coeff = 0.6;
    c.ap_positions = {{30, 30, 0}, {110, 90, 0}};
    const auto net = make_realization(c, std::vector<Point3>{{35, 50, 0}, {90, 100, 0}});
    const auto assign = assign_pilots(2, 1);
    const auto stats = estimator_statistics(net, assign, c);

    const int draws = 100000;
    LinkGrid<Eigen::MatrixXcd> cov(2, 2, Eigen::MatrixXcd::Zero(2, 2));
    LinkGrid<Eigen::MatrixXcd> cross(2, 2, Eigen::MatrixXcd::Zero(2, 2));
    for (int r = 0; r < draws; ++r) {
        const auto s = draw_channels(net, derive_seed(3, r, StreamTag::Channel));
        const auto y = received_pilot(s, assign, c, derive_seed(3, r, StreamTag::PilotNoise));
        const auto h_hat = apply_estimator(y, stats, assign);
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) {
                cov(k, l) += h_hat(k, l) * h_hat(k, l).adjoint();
                cross(k, l) += h_hat(k, l) * (s.h(k, l) - h_hat(k, l)).adjoint();
            }
    }
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            const Eigen::MatrixXcd sample = cov(k, l) / draws;
            const Eigen::MatrixXcd& target = stats.est_cov(k, l);
            CHECK((sample - target).norm() / target.norm() < 0.05);
            // orthogonality of estimate and error
            CHECK((cross(k, l) / draws).norm() / net.correlation(k, l).norm() < 0.02);

            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(net.correlation(k, l) - target);
            CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * net.beta(k, l));
        }
}

TEST_CASE("orthogonal pilots with diagonal R decouple links") {
    SystemConfig c = small_config(2, 1, 1, 2);
    const auto net = make_realization(c, std::vector<Point3>{{30, 30, 0}, {100, 100, 0}});
    const auto assign = assign_pilots(2, 2);
    const auto stats = estimator_statistics(net, assign, c);
    ChannelSample a;
    a.h = LinkGrid<Eigen::VectorXcd>(2, 1, Eigen::VectorXcd::Zero(1));
    a.h(0, 0)(0) = cdouble(1e-5, 0);
    a.h(1, 0)(0) = cdouble(0, 3e-6);
    ChannelSample b = a;
    b.h(1, 0)(0) = cdouble(7e-6, 7e-6);
    const auto ha = apply_estimator(received_pilot(a, assign, c, 5), stats, assign);
    const auto hb = apply_estimator(received_pilot(b, assign, c, 5), stats, assign);
    CHECK(ha(0, 0) == hb(0, 0));
    CHECK(ha(1, 0) != hb(1, 0));
}
