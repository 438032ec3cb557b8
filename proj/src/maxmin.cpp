#include "cfmimo/maxmin.hpp"

#include "cfmimo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace cfmimo {

const char* to_string(MaxMinStatus status) {
    switch (status) {
        case MaxMinStatus::Converged: return "converged";
        case MaxMinStatus::Infeasible: return "infeasible";
        case MaxMinStatus::SolverFailure: return "solver_failure";
    }
    return "unknown";
}

SocSubproblem assemble_subproblem(double s, const SinrCoefficients& coeffs, const SystemConfig& config,
                                  const Dcc& dcc) {
    if (!(s > 0.0)) throw DomainError("target SINR level must be positive");
    const int K = coeffs.K;
    const int L = coeffs.L;
    SocSubproblem sub;
    sub.s = s;
    sub.K = K;
    sub.L = L;
    sub.sigma = std::sqrt(coeffs.sigma2);
    sub.P_dl_max = config.P_dl_max;
    sub.active = LinkGrid<char>(K, L, 0);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) sub.active(k, l) = dcc.serves(k, l) ? 1 : 0;
    sub.c.resize(K);
    sub.B_diag.resize(K);
    for (int k = 0; k < K; ++k) {
        sub.c[k] = coeffs.a.row(k).transpose().cwiseAbs();
        Eigen::VectorXd d(K * L + 1);
        for (int i = 0; i < K; ++i)
            for (int l = 0; l < L; ++l) d(i * L + l) = std::sqrt(std::max(coeffs.B(k, i, l), 0.0));
        d(K * L) = 1.0;
        sub.B_diag[k] = std::move(d);
    }
    return sub;
}

SubproblemResult solve_subproblem(const SocSubproblem& sub, double tol, double margin_cap) {
    if (!(tol > 0.0)) throw DomainError("solver tolerance must be positive");
    const int K = sub.K;
    const int L = sub.L;

    // Variables: active amplitudes (scaled by 1/sqrt(P)) followed by t = sqrt(c).
    LinkGrid<int> var(K, L, -1);
    int na = 0;
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l)
            if (sub.active(k, l)) var(k, l) = na++;
    const int n = na + 1;
    const int t = na;
    const double sqrt_p = std::sqrt(sub.P_dl_max);
    const double sigma = sub.sigma / sqrt_p;

    socp::Problem prob;
    prob.dims.orthant = na + 1;
    for (int k = 0; k < K; ++k) prob.dims.soc.push_back(na + 2);
    std::vector<int> per_ap(L, 0);
    for (int l = 0; l < L; ++l) {
        for (int k = 0; k < K; ++k) per_ap[l] += sub.active(k, l) ? 1 : 0;
        prob.dims.soc.push_back(per_ap[l] + 1);
    }
    const int m = prob.dims.rows();
    prob.G = Eigen::MatrixXd::Zero(m, n);
    prob.h = Eigen::VectorXd::Zero(m);
    prob.c = Eigen::VectorXd::Zero(n);
    prob.c(t) = 1.0;

    int row = 0;
    for (int j = 0; j < na; ++j) prob.G(row++, j) = -1.0;  // gamma >= 0
    prob.G(row, t) = 1.0;                                    // t <= sqrt(cap)
    prob.h(row++) = std::sqrt(margin_cap);

    const double inv_sqrt_s = 1.0 / std::sqrt(sub.s);
    for (int k = 0; k < K; ++k) {
        // each cone is row-scaled to unit magnitude; membership is unchanged
        double scale = sigma;
        for (int l = 0; l < L; ++l)
            if (var(k, l) >= 0) scale = std::max(scale, inv_sqrt_s * sub.c[k](l));
        for (int i = 0; i < K; ++i)
            for (int l = 0; l < L; ++l)
                if (var(i, l) >= 0) scale = std::max(scale, sub.B_diag[k](i * L + l));
        const double f = 1.0 / scale;
        for (int l = 0; l < L; ++l)
            if (var(k, l) >= 0) prob.G(row, var(k, l)) = -f * inv_sqrt_s * sub.c[k](l);
        ++row;
        for (int i = 0; i < K; ++i)
            for (int l = 0; l < L; ++l)
                if (var(i, l) >= 0) prob.G(row + var(i, l), var(i, l)) = -f * sub.B_diag[k](i * L + l);
        row += na;
        prob.h(row++) = f * sigma * sub.B_diag[k](K * L);
    }
    for (int l = 0; l < L; ++l) {
        prob.G(row++, t) = -1.0;
        for (int k = 0; k < K; ++k)
            if (var(k, l) >= 0) prob.G(row++, var(k, l)) = -1.0;
    }

    socp::Settings settings;
    settings.feastol = tol;
    settings.abstol = tol;
    settings.reltol = tol;
    const socp::Result r = socp::solve(prob, settings);

    SubproblemResult out;
    out.status = r.status;
    out.iterations = r.iterations;
    out.residual = std::max(r.primal_residual, r.dual_residual);
    out.gamma.gamma = Eigen::MatrixXd::Zero(K, L);
    if (r.status == socp::Status::Optimal) {
        const double topt = std::max(r.x(t), 0.0);
        out.c_opt = topt * topt;
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < L; ++l)
                if (var(k, l) >= 0) out.gamma.gamma(k, l) = std::max(r.x(var(k, l)), 0.0) * sqrt_p;
    } else {
        out.c_opt = std::numeric_limits<double>::infinity();
    }
    return out;
}

double interference_free_bound(const SinrCoefficients& coeffs, double p_max) {
    double bound = std::numeric_limits<double>::infinity();
    for (int k = 0; k < coeffs.K; ++k) {
        const double amp = std::sqrt(p_max) * coeffs.a.row(k).cwiseAbs().sum();
        bound = std::min(bound, amp * amp / coeffs.sigma2);
    }
    return bound;
}

namespace {

// Scales the allocation so the most loaded AP uses exactly the budget.
PowerAllocation scale_to_budget(const PowerAllocation& alloc, double p_max) {
    const double peak = alloc.ap_power().maxCoeff();
    PowerAllocation out = alloc;
    if (peak > 0.0) out.gamma *= std::sqrt(p_max / peak);
    return out;
}

}  // namespace

namespace {

constexpr double kRetryTolFactor = 100.0;

}  // namespace

MaxMinSolution bisection_maxmin(const SinrCoefficients& coeffs, const SystemConfig& config,
                                const Dcc& dcc, double tol_s, double tol_solver) {
    if (!(tol_s > 0.0)) throw DomainError("bisection tolerance must be positive");
    MaxMinSolution sol;
    const int K = coeffs.K;
    const int L = coeffs.L;
    sol.gamma_star.gamma = Eigen::MatrixXd::Zero(K, L);
    sol.per_ue_sinr = Eigen::VectorXd::Zero(K);

    double s_lo = 0.0;
    double s_hi = interference_free_bound(coeffs, config.P_dl_max);
    if (!(s_hi > 0.0) || !std::isfinite(s_hi)) {
        sol.status = MaxMinStatus::Infeasible;
        return sol;
    }
    const int max_iterations =
        static_cast<int>(std::ceil(std::log2(std::max(s_hi / tol_s, 1.0)))) + 1;

    std::optional<PowerAllocation> best;
    auto consider = [&](const PowerAllocation& candidate) {
        const PowerAllocation scaled = scale_to_budget(candidate, config.P_dl_max);
        const Eigen::VectorXd sinr = compute_sinr(scaled, coeffs);
        const double achieved = sinr.minCoeff();
        if (!best || achieved > s_lo) {
            best = scaled;
            s_lo = std::max(s_lo, achieved);
        }
    };

    while (sol.iterations < max_iterations &&
           (s_hi - s_lo > tol_s * std::max(1.0, s_lo) || !best)) {
        const double s = 0.5 * (s_lo + s_hi);
        const SocSubproblem sub = assemble_subproblem(s, coeffs, config, dcc);
        SubproblemResult r = solve_subproblem(sub, tol_solver);
        // levels just above the optimum are nearly infeasible for every margin
        // and can stall the interior point method; a looser tolerance usually
        // settles them with a certificate
        if (!r.solved()) r = solve_subproblem(sub, tol_solver * kRetryTolFactor);
        ++sol.iterations;
        sol.trace.push_back({s, r.c_opt, r.feasible(), r.status, r.iterations});
        if (!r.solved()) {
            sol.status = MaxMinStatus::SolverFailure;
            return sol;
        }
        if (r.status == socp::Status::Optimal) sol.max_residual = std::max(sol.max_residual, r.residual);
        if (r.feasible()) {
            consider(r.gamma);
        } else {
            s_hi = s;
            // an over-budget solution, scaled down, is still a valid lower bound
            if (std::isfinite(r.c_opt)) consider(r.gamma);
        }
        if (s_lo > s_hi * (1.0 + 1e-6))
            throw NumericalError("bisection found a feasible level above an infeasible one");
        s_lo = std::min(s_lo, s_hi);
    }
    if (!best) {
        sol.status = MaxMinStatus::SolverFailure;
        return sol;
    }
    sol.gamma_star = *best;
    sol.per_ue_sinr = compute_sinr(sol.gamma_star, coeffs);
    sol.s_star = sol.per_ue_sinr.minCoeff();
    sol.status = MaxMinStatus::Converged;
    return sol;
}

PowerAllocation heuristic_allocation(const NetworkRealization& realization,
                                     const EstimatorStatistics& stats, const SystemConfig& config) {
    const int K = realization.K();
    const int L = realization.L();
    PowerAllocation out{Eigen::MatrixXd::Zero(K, L)};
    for (int l = 0; l < L; ++l) {
        const auto& served = realization.dcc.served[l];
        if (served.empty()) continue;
        double total = 0.0;
        for (int k : served) total += std::sqrt(stats.est_cov(k, l).trace().real());
        if (!(total > 0.0)) continue;
        for (int k : served) {
            const double share = std::sqrt(stats.est_cov(k, l).trace().real()) / total;
            out.gamma(k, l) = std::sqrt(config.P_dl_max * share);
        }
    }
    return out;
}

PowerAllocation full_power_equal_split(const Dcc& dcc, const SystemConfig& config) {
    const int K = dcc.mask.rows();
    const int L = dcc.mask.cols();
    PowerAllocation out{Eigen::MatrixXd::Zero(K, L)};
    for (int l = 0; l < L; ++l) {
        const auto& served = dcc.served[l];
        if (served.empty()) continue;
        const double amp = std::sqrt(config.P_dl_max / static_cast<double>(served.size()));
        for (int k : served) out.gamma(k, l) = amp;
    }
    return out;
}

}  // namespace cfmimo
