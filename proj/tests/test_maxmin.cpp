#include "doctest.h"

#include "cfmimo/errors.hpp"
#include "cfmimo/maxmin.hpp"
#include "cfmimo/rng.hpp"

#include <cmath>

using namespace cfmimo;

namespace {

Dcc full_dcc(int K, int L) { return select_dcc(Eigen::MatrixXd::Ones(K, L), DccPolicy::All); }

SystemConfig sized(int K, int L) {
    SystemConfig c;
    c.K = K;
    c.L = L;
    c.tau_p = std::max(K, 1);
    c.require_orthogonal_pilots = false;
    return c;
}

// Random coefficients with magnitudes resembling the reference deployment.
SinrCoefficients random_coeffs(int K, int L, Rng& rng, double sigma2 = 4e-13) {
    SinrCoefficients c(K, L, sigma2);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) {
            c.a(k, l) = std::pow(10.0, rng.uniform(-6.5, -4.0));
            for (int i = 0; i < K; ++i)
                c.B(k, i, l) = (i == k ? 0.05 : 0.5) * std::pow(10.0, rng.uniform(-12.0, -9.0));
        }
    return c;
}

}  // namespace

TEST_CASE("assemble_subproblem layout") {
    SinrCoefficients c(1, 1, 4.0);
    c.a(0, 0) = 3.0;
    c.B(0, 0, 0) = 0.25;
    const auto sub = assemble_subproblem(2.0, c, sized(1, 1), full_dcc(1, 1));
    REQUIRE(sub.B_diag[0].size() == 2);
    CHECK(sub.B_diag[0](0) == 0.5);
    CHECK(sub.B_diag[0](1) == 1.0);
    CHECK(sub.sigma == 2.0);
    CHECK(sub.c[0](0) == 3.0);
    CHECK_THROWS_AS(assemble_subproblem(0.0, c, sized(1, 1), full_dcc(1, 1)), DomainError);

    Rng rng(1);
    const auto r = random_coeffs(3, 2, rng);
    const auto big = assemble_subproblem(1.0, r, sized(3, 2), full_dcc(3, 2));
    for (int k = 0; k < 3; ++k) {
        CHECK(big.B_diag[k].size() == 7);
        CHECK(big.B_diag[k](6) == 1.0);
        CHECK((big.B_diag[k].array() >= 0.0).all());
        // UE-major order: entry i*L + l holds sqrt(b_kil)
        CHECK(big.B_diag[k](1 * 2 + 1) == doctest::Approx(std::sqrt(r.B(k, 1, 1))));
    }
}

TEST_CASE("scalar margin has a closed form") {
    SinrCoefficients c(1, 1, 4e-13);
    c.a(0, 0) = 2e-5;
    SystemConfig cfg = sized(1, 1);
    for (double s : {0.5, 10.0, 300.0}) {
        const auto r = solve_subproblem(assemble_subproblem(s, c, cfg, full_dcc(1, 1)));
        REQUIRE(r.status == socp::Status::Optimal);
        const double expect = s * c.sigma2 / (c.a(0, 0) * c.a(0, 0) * cfg.P_dl_max);
        CHECK(r.c_opt == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("levels above the interference-free bound are infeasible") {
    Rng rng(5);
    const auto c = random_coeffs(3, 3, rng);
    const SystemConfig cfg = sized(3, 3);
    const double bound = interference_free_bound(c, cfg.P_dl_max);
    const auto r = solve_subproblem(assemble_subproblem(1.05 * bound, c, cfg, full_dcc(3, 3)));
    CHECK_FALSE(r.feasible());
    CHECK(r.solved());
}

TEST_CASE("single UE optimum is full power when the corner condition holds") {
    // With b_l proportional to a_l the gradient of the SINR is nonnegative at
    // full power, and the quasiconcave ratio is maximized there.
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const int L = trial == 0 ? 1 : 4;
        auto c = random_coeffs(1, L, rng);
        if (L > 1) {
            const double kappa = std::pow(10.0, rng.uniform(-7.0, -5.0));
            for (int l = 0; l < L; ++l) c.B(0, 0, l) = kappa * c.a(0, l);
        }
        const SystemConfig cfg = sized(1, L);
        const auto sol = bisection_maxmin(c, cfg, full_dcc(1, L), 1e-6);
        REQUIRE(sol.status == MaxMinStatus::Converged);
        double num = 0.0, den = c.sigma2;
        for (int l = 0; l < L; ++l) {
            num += std::sqrt(cfg.P_dl_max) * c.a(0, l);
            den += cfg.P_dl_max * c.B(0, 0, l);
        }
        CHECK(sol.s_star == doctest::Approx(num * num / den).epsilon(1e-6));
    }
}

TEST_CASE("single UE may switch off a poor AP") {
    SinrCoefficients c(1, 2, 1e-6);
    c.a << 1.0, 0.1;
    c.B(0, 0, 0) = 0.01;
    c.B(0, 0, 1) = 1.0;
    const auto sol = bisection_maxmin(c, sized(1, 2), full_dcc(1, 2), 1e-7);
    REQUIRE(sol.status == MaxMinStatus::Converged);
    // the optimum over gamma_2 in [0, 1] with gamma_1 = 1 has a closed form:
    // d/dg [(1 + 0.1 g)^2 / (0.01 + g^2 + 1e-6)] = 0  ->  g = 0.1 (0.010001)
    const double g = 0.1 * 0.010001;
    const double expect = (1.0 + 0.1 * g) * (1.0 + 0.1 * g) / (0.010001 + g * g);
    CHECK(sol.s_star == doctest::Approx(expect).epsilon(1e-6));
    CHECK(sol.gamma_star.gamma(0, 1) == doctest::Approx(g).epsilon(1e-2));
}

TEST_CASE("symmetric instance gives a symmetric optimum") {
    SinrCoefficients c(2, 2, 4e-13);
    c.a << 2e-5, 5e-6, 5e-6, 2e-5;
    // swapping both UE and AP indices leaves every coefficient unchanged
    for (int l = 0; l < 2; ++l) {
        c.B(0, 0, l) = 1e-11;
        c.B(1, 1, 1 - l) = 1e-11;
        c.B(0, 1, l) = l == 0 ? 3e-11 : 5e-12;
        c.B(1, 0, 1 - l) = l == 0 ? 3e-11 : 5e-12;
    }
    const auto sol = bisection_maxmin(c, sized(2, 2), full_dcc(2, 2), 1e-6);
    REQUIRE(sol.status == MaxMinStatus::Converged);
    CHECK(sol.per_ue_sinr(0) == doctest::Approx(sol.per_ue_sinr(1)).epsilon(1e-5));
    CHECK(sol.gamma_star.gamma(0, 0) == doctest::Approx(sol.gamma_star.gamma(1, 1)).epsilon(1e-3));
    CHECK(sol.gamma_star.gamma(0, 1) == doctest::Approx(sol.gamma_star.gamma(1, 0)).epsilon(1e-3));
}

TEST_CASE("bisection properties on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int K = 5, L = 9;
        const auto c = random_coeffs(K, L, rng);
        const SystemConfig cfg = sized(K, L);
        const Dcc dcc = full_dcc(K, L);
        const double tol_s = 1e-3;
        const auto sol = bisection_maxmin(c, cfg, dcc, tol_s);
        REQUIRE(sol.status == MaxMinStatus::Converged);
        CHECK(is_feasible(sol.gamma_star, dcc, cfg.P_dl_max, 1e-9));
        CHECK(sol.per_ue_sinr.maxCoeff() / sol.per_ue_sinr.minCoeff() <= 1.0 + 10.0 * tol_s);
        CHECK(sol.gamma_star.ap_power().maxCoeff() >= (1.0 - 1e-8) * cfg.P_dl_max);
        const double s_hi0 = interference_free_bound(c, cfg.P_dl_max);
        CHECK(sol.iterations <= static_cast<int>(std::ceil(std::log2(s_hi0 / tol_s))) + 1);

        for (const auto& a : sol.trace)
            for (const auto& b : sol.trace)
                if (!a.feasible && b.feasible) CHECK(b.s < a.s);

        // joint scaling of a, sqrt(b) and sigma
        SinrCoefficients scaled = c;
        const double f = 37.0;
        scaled.a *= f;
        for (double& v : scaled.b) v *= f * f;
        scaled.sigma2 *= f * f;
        const auto sol2 = bisection_maxmin(scaled, cfg, dcc, tol_s);
        CHECK(sol2.s_star == doctest::Approx(sol.s_star).epsilon(2e-3));
    }
}

TEST_CASE("small grid search agrees with bisection") {
    // coarse grid (with local refinement) on a K = 2, L = 2 power box
    Rng rng(13);
    for (int trial = 0; trial < 3; ++trial) {
        const auto c = random_coeffs(2, 2, rng);
        const SystemConfig cfg = sized(2, 2);
        const auto sol = bisection_maxmin(c, cfg, full_dcc(2, 2), 1e-4);
        REQUIRE(sol.status == MaxMinStatus::Converged);

        auto min_sinr = [&](const Eigen::Vector4d& g) {
            PowerAllocation p{Eigen::MatrixXd(2, 2)};
            p.gamma << g(0), g(1), g(2), g(3);
            if ((p.ap_power().array() > cfg.P_dl_max).any()) return -1.0;
            return compute_sinr(p, c).minCoeff();
        };
        const int n = 40;
        double h = std::sqrt(cfg.P_dl_max) / (n - 1);
        Eigen::Vector4d best = Eigen::Vector4d::Zero();
        double best_v = 0.0;
        for (int pass = 0; pass < 3; ++pass) {
            const Eigen::Vector4d centre = best;
            const Eigen::Vector4d lo = pass == 0 ? Eigen::Vector4d::Zero() : Eigen::Vector4d(centre.array() - h);
            const double step = pass == 0 ? h : 2.0 * h / (n - 1);
            for (int i0 = 0; i0 < n; ++i0)
                for (int i1 = 0; i1 < n; ++i1)
                    for (int i2 = 0; i2 < n; ++i2)
                        for (int i3 = 0; i3 < n; ++i3) {
                            Eigen::Vector4d g = lo + step * Eigen::Vector4d(i0, i1, i2, i3);
                            g = g.cwiseMax(0.0);
                            const double v = min_sinr(g);
                            if (v > best_v) {
                                best_v = v;
                                best = g;
                            }
                        }
            h = step;
        }
        CHECK(std::fabs(sol.s_star - best_v) / best_v < 0.01);
        CHECK(sol.s_star >= best_v * (1.0 - 1e-3));
    }
}

TEST_CASE("baselines use full power per AP") {
    SystemConfig cfg;
    const auto net = make_realization(cfg, 3ULL);
    const auto stats = estimator_statistics(net, assign_pilots(cfg.K, cfg.tau_p), cfg);
    const auto h = heuristic_allocation(net, stats, cfg);
    for (int l = 0; l < cfg.L; ++l) CHECK(h.ap_power()(l) == doctest::Approx(cfg.P_dl_max).epsilon(1e-12));
    const auto e = full_power_equal_split(net.dcc, cfg);
    for (int l = 0; l < cfg.L; ++l) {
        CHECK(e.ap_power()(l) == doctest::Approx(cfg.P_dl_max).epsilon(1e-12));
        for (int k = 0; k < cfg.K; ++k) CHECK(e.gamma(k, l) * e.gamma(k, l) == doctest::Approx(0.2));
    }

    cfg.dcc_policy = DccPolicy::TopQ;
    cfg.dcc_top_q = 1;
    const auto net1 = make_realization(cfg, 3ULL);
    const auto stats1 = estimator_statistics(net1, assign_pilots(cfg.K, cfg.tau_p), cfg);
    const auto h1 = heuristic_allocation(net1, stats1, cfg);
    const auto e1 = full_power_equal_split(net1.dcc, cfg);
    for (int l = 0; l < cfg.L; ++l) {
        const auto n_served = net1.dcc.served[l].size();
        const double expect = n_served == 0 ? 0.0 : cfg.P_dl_max;
        CHECK(h1.ap_power()(l) == doctest::Approx(expect));
        CHECK(e1.ap_power()(l) == doctest::Approx(expect));
        if (n_served == 1) CHECK(h1.gamma(net1.dcc.served[l][0], l) == doctest::Approx(1.0));
    }
}
