#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace cfmimo::socp {

/// Cone K = R_+^orthant x Q^{soc[0]} x Q^{soc[1]} x ..., where
/// Q^d = {(u0, u1) in R x R^{d-1} : u0 >= ||u1||}.
/// Rows of G and h are laid out in the same order.
struct ConeDims {
    int orthant = 0;
    std::vector<int> soc;

    int rows() const;
    /// Number of cone blocks counted with unit degree each.
    int degree() const;
};

/// minimize c^T x  subject to  h - G x in K.
struct Problem {
    Eigen::VectorXd c;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    ConeDims dims;
};

struct Settings {
    double feastol = 1e-9;
    double abstol = 1e-9;
    double reltol = 1e-9;
    int max_iter = 100;
    double step_fraction = 0.99;
};

enum class Status { Optimal, PrimalInfeasible, DualInfeasible, MaxIterations, NumericalFailure };

const char* to_string(Status status);

struct Result {
    Status status = Status::NumericalFailure;
    Eigen::VectorXd x;  // primal solution (scaled by 1/tau)
    Eigen::VectorXd s;  // primal slack
    Eigen::VectorXd z;  // dual variable (infeasibility certificate when PrimalInfeasible)
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;  // ||Gx + s - h|| / max(1, ||h||)
    double dual_residual = 0.0;    // ||G^T z + c|| / max(1, ||c||)
    double gap = 0.0;
    int iterations = 0;
};

/// Primal-dual interior-point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Dense
/// linear algebra: intended for problems with up to a few hundred variables.
Result solve(const Problem& problem, const Settings& settings = {});

// Cone primitives, exposed for testing.

/// Largest alpha in [0, alpha_max] keeping u + alpha * du inside the cone
/// (u must be strictly interior).
double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du, const ConeDims& dims,
                double alpha_max);

/// Nesterov-Todd scaling of a pair of interior points. W is symmetric and
/// satisfies W z = W^{-1} s = lambda.
class NtScaling {
public:
    NtScaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, const ConeDims& dims);

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;          // W v
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const;  // W^{-1} v
    Eigen::MatrixXd apply_inverse(const Eigen::MatrixXd& m) const;  // W^{-1} M
    const Eigen::VectorXd& lambda() const { return lambda_; }

private:
    ConeDims dims_;
    Eigen::VectorXd orth_;             // sqrt(s / z) on the orthant
    std::vector<double> eta_;          // per SOC block
    std::vector<Eigen::VectorXd> wbar_;  // the vector v of W = eta (2 v v^T - J)
    Eigen::VectorXd lambda_;
};

/// Jordan product u o v and its inverse: returns x with u o x = r.
Eigen::VectorXd jordan_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const ConeDims& dims);
Eigen::VectorXd jordan_divide(const Eigen::VectorXd& u, const Eigen::VectorXd& r, const ConeDims& dims);

/// Identity element e of the cone.
Eigen::VectorXd cone_identity(const ConeDims& dims);

/// Smallest alpha such that u + alpha * e is in the closed cone
/// (negative when u is strictly interior).
double cone_violation(const Eigen::VectorXd& u, const ConeDims& dims);

}  // namespace cfmimo::socp
