#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/se_stats.hpp"
#include "cfmimo/socp.hpp"

#include <Eigen/Dense>

#include <vector>

namespace cfmimo {

/// SINR cones at a fixed target level s:
///   sqrt(1/s) c_k^T gamma_k >= || B_k [gamma; sigma] ||,  k = 1..K
/// with gamma stacked UE-major (gamma = [gamma_1; ...; gamma_K], gamma_k of
/// length L) and B_k = diag(sqrt b_k11, ..., sqrt b_k1L, sqrt b_k21, ..., 1).
struct SocSubproblem {
    double s = 0.0;
    int K = 0;
    int L = 0;
    std::vector<Eigen::VectorXd> c;       // K vectors of length L: |a_kl|
    std::vector<Eigen::VectorXd> B_diag;  // K vectors of length K*L + 1
    double sigma = 0.0;                   // sqrt(sigma^2)
    double P_dl_max = 0.0;
    LinkGrid<char> active;                // links that may carry power
};

SocSubproblem assemble_subproblem(double s, const SinrCoefficients& coeffs, const SystemConfig& config,
                                  const Dcc& dcc);

/// Outcome of the power-margin problem
///   minimize c  s.t. SINR cones,  sum_i gamma_il^2 <= c P  for every AP l.
struct SubproblemResult {
    socp::Status status = socp::Status::NumericalFailure;
    double c_opt = 0.0;      // +inf when no power level reaches s
    PowerAllocation gamma;   // meaningful when c_opt is finite
    int iterations = 0;
    double residual = 0.0;   // max of primal and dual residuals

    bool solved() const {
        return status == socp::Status::Optimal || status == socp::Status::PrimalInfeasible;
    }
    bool feasible() const { return status == socp::Status::Optimal && c_opt <= 1.0; }
};

/// Solves the margin problem on the unit-power-scaled instance. The margin is
/// capped at `margin_cap` (levels needing more are reported infeasible).
SubproblemResult solve_subproblem(const SocSubproblem& sub, double tol = 1e-9, double margin_cap = 16.0);

enum class MaxMinStatus { Converged, Infeasible, SolverFailure };

const char* to_string(MaxMinStatus status);

struct BisectionStep {
    double s = 0.0;
    double c_opt = 0.0;
    bool feasible = false;
    socp::Status solver_status = socp::Status::NumericalFailure;
    int solver_iterations = 0;
};

struct MaxMinSolution {
    PowerAllocation gamma_star;
    double s_star = 0.0;
    int iterations = 0;
    Eigen::VectorXd per_ue_sinr;
    MaxMinStatus status = MaxMinStatus::SolverFailure;
    std::vector<BisectionStep> trace;
    double max_residual = 0.0;
};

/// Bisection over the common SINR level. Each feasible step's allocation is
/// rescaled to use the full budget at the most loaded AP, and its achieved
/// minimum SINR tightens the lower end of the bracket.
MaxMinSolution bisection_maxmin(const SinrCoefficients& coeffs, const SystemConfig& config,
                                const Dcc& dcc, double tol_s = 1e-3, double tol_solver = 1e-9);

/// Upper end of the initial bracket: min_k (sum_l sqrt(P) a_kl)^2 / sigma^2.
double interference_free_bound(const SinrCoefficients& coeffs, double p_max);

/// Every AP uses full power, split in proportion to sqrt(tr(est_cov_kl)).
PowerAllocation heuristic_allocation(const NetworkRealization& realization,
                                     const EstimatorStatistics& stats, const SystemConfig& config);

/// rho_kl = P / |D_l| on served links.
PowerAllocation full_power_equal_split(const Dcc& dcc, const SystemConfig& config);

}  // namespace cfmimo
