#include "cfmimo/socp.hpp"

#include "cfmimo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace cfmimo::socp {

int ConeDims::rows() const { return orthant + std::accumulate(soc.begin(), soc.end(), 0); }

int ConeDims::degree() const { return orthant + static_cast<int>(soc.size()); }

const char* to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::PrimalInfeasible: return "primal_infeasible";
        case Status::DualInfeasible: return "dual_infeasible";
        case Status::MaxIterations: return "max_iterations";
        case Status::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

// u0^2 - ||u1||^2 computed as a product to limit cancellation.
double soc_det(const Eigen::Ref<const Eigen::VectorXd>& u) {
    const double n1 = u.tail(u.size() - 1).norm();
    return (u(0) - n1) * (u(0) + n1);
}

}  // namespace

Eigen::VectorXd cone_identity(const ConeDims& dims) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dims.rows());
    e.head(dims.orthant).setOnes();
    int off = dims.orthant;
    for (int d : dims.soc) {
        e(off) = 1.0;
        off += d;
    }
    return e;
}

double cone_violation(const Eigen::VectorXd& u, const ConeDims& dims) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < dims.orthant; ++i) worst = std::max(worst, -u(i));
    int off = dims.orthant;
    for (int d : dims.soc) {
        worst = std::max(worst, u.segment(off + 1, d - 1).norm() - u(off));
        off += d;
    }
    return worst;
}

double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du, const ConeDims& dims,
                double alpha_max) {
    double alpha = alpha_max;
    for (int i = 0; i < dims.orthant; ++i)
        if (du(i) < 0.0) alpha = std::min(alpha, -u(i) / du(i));
    int off = dims.orthant;
    for (int d : dims.soc) {
        const auto u0 = u(off);
        const auto d0 = du(off);
        const auto u1 = u.segment(off + 1, d - 1);
        const auto d1 = du.segment(off + 1, d - 1);
        const double a = d0 * d0 - d1.squaredNorm();
        const double b = u0 * d0 - u1.dot(d1);
        const double c = soc_det(u.segment(off, d));
        off += d;
        // first positive root of a t^2 + 2 b t + c (c > 0 at an interior point)
        double root = std::numeric_limits<double>::infinity();
        if (a == 0.0) {
            if (b < 0.0) root = -c / (2.0 * b);
        } else {
            const double disc = b * b - a * c;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double q = -(b + std::copysign(sq, b));
                const double r1 = q / a;
                const double r2 = q != 0.0 ? c / q : std::numeric_limits<double>::infinity();
                for (double r : {r1, r2})
                    if (r > 0.0) root = std::min(root, r);
            }
        }
        alpha = std::min(alpha, root);
    }
    return std::max(alpha, 0.0);
}

NtScaling::NtScaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, const ConeDims& dims)
    : dims_(dims) {
    const int m = dims.rows();
    lambda_.resize(m);
    orth_.resize(dims.orthant);
    for (int i = 0; i < dims.orthant; ++i) {
        orth_(i) = std::sqrt(s(i) / z(i));
        lambda_(i) = std::sqrt(s(i) * z(i));
    }
    int off = dims.orthant;
    for (int d : dims.soc) {
        const auto sb = s.segment(off, d);
        const auto zb = z.segment(off, d);
        const double sdet = soc_det(sb);
        const double zdet = soc_det(zb);
        if (!(sdet > 0.0) || !(zdet > 0.0)) throw NumericalError("iterate left the cone interior");
        const Eigen::VectorXd sn = sb / std::sqrt(sdet);
        const Eigen::VectorXd zn = zb / std::sqrt(zdet);
        const double g = std::sqrt((1.0 + sn.dot(zn)) / 2.0);
        Eigen::VectorXd wb = sn;
        wb(0) += zn(0);
        wb.tail(d - 1) -= zn.tail(d - 1);
        wb /= 2.0 * g;
        // W = eta (2 v v^T - J) with v = (wbar + e) / sqrt(2 (wbar_0 + 1))
        wb(0) += 1.0;
        wb /= std::sqrt(2.0 * wb(0));
        eta_.push_back(std::pow(sdet / zdet, 0.25));
        wbar_.push_back(std::move(wb));
        off += d;
    }
    lambda_.tail(m - dims.orthant) = apply(z).tail(m - dims.orthant);
}

Eigen::VectorXd NtScaling::apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(dims_.orthant) = orth_.cwiseProduct(v.head(dims_.orthant));
    int off = dims_.orthant;
    for (std::size_t b = 0; b < dims_.soc.size(); ++b) {
        const int d = dims_.soc[b];
        const auto& w = wbar_[b];
        const auto vb = v.segment(off, d);
        const double wv = w.dot(vb);
        auto ob = out.segment(off, d);
        ob = 2.0 * wv * w;
        ob(0) -= vb(0);
        ob.tail(d - 1) += vb.tail(d - 1);
        ob *= eta_[b];
        off += d;
    }
    return out;
}

Eigen::VectorXd NtScaling::apply_inverse(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(dims_.orthant) = v.head(dims_.orthant).cwiseQuotient(orth_);
    int off = dims_.orthant;
    for (std::size_t b = 0; b < dims_.soc.size(); ++b) {
        const int d = dims_.soc[b];
        Eigen::VectorXd jw = wbar_[b];
        jw.tail(d - 1) = -jw.tail(d - 1);
        const auto vb = v.segment(off, d);
        const double wv = jw.dot(vb);
        auto ob = out.segment(off, d);
        ob = 2.0 * wv * jw;
        ob(0) -= vb(0);
        ob.tail(d - 1) += vb.tail(d - 1);
        ob /= eta_[b];
        off += d;
    }
    return out;
}

Eigen::MatrixXd NtScaling::apply_inverse(const Eigen::MatrixXd& mat) const {
    Eigen::MatrixXd out(mat.rows(), mat.cols());
    out.topRows(dims_.orthant) = orth_.cwiseInverse().asDiagonal() * mat.topRows(dims_.orthant);
    int off = dims_.orthant;
    for (std::size_t b = 0; b < dims_.soc.size(); ++b) {
        const int d = dims_.soc[b];
        Eigen::VectorXd jw = wbar_[b];
        jw.tail(d - 1) = -jw.tail(d - 1);
        const auto mb = mat.middleRows(off, d);
        const Eigen::RowVectorXd wm = jw.transpose() * mb;
        auto ob = out.middleRows(off, d);
        ob.noalias() = 2.0 * jw * wm;
        ob.row(0) -= mb.row(0);
        ob.bottomRows(d - 1) += mb.bottomRows(d - 1);
        ob /= eta_[b];
        off += d;
    }
    return out;
}

Eigen::VectorXd jordan_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const ConeDims& dims) {
    Eigen::VectorXd out(u.size());
    out.head(dims.orthant) = u.head(dims.orthant).cwiseProduct(v.head(dims.orthant));
    int off = dims.orthant;
    for (int d : dims.soc) {
        const auto ub = u.segment(off, d);
        const auto vb = v.segment(off, d);
        out(off) = ub.dot(vb);
        out.segment(off + 1, d - 1) = ub(0) * vb.tail(d - 1) + vb(0) * ub.tail(d - 1);
        off += d;
    }
    return out;
}

Eigen::VectorXd jordan_divide(const Eigen::VectorXd& u, const Eigen::VectorXd& r, const ConeDims& dims) {
    Eigen::VectorXd out(u.size());
    out.head(dims.orthant) = r.head(dims.orthant).cwiseQuotient(u.head(dims.orthant));
    int off = dims.orthant;
    for (int d : dims.soc) {
        const auto ub = u.segment(off, d);
        const auto rb = r.segment(off, d);
        const double det = soc_det(ub);
        const double x0 = (ub(0) * rb(0) - ub.tail(d - 1).dot(rb.tail(d - 1))) / det;
        out(off) = x0;
        out.segment(off + 1, d - 1) = (rb.tail(d - 1) - x0 * ub.tail(d - 1)) / ub(0);
        off += d;
    }
    return out;
}

namespace {

struct Direction {
    Eigen::VectorXd dx, dz, ds;
    double dtau = 0.0;
    double dkappa = 0.0;
};

double step_length(const Eigen::VectorXd& s, const Eigen::VectorXd& z, double tau, double kappa,
                   const Direction& d, const ConeDims& dims) {
    double alpha = 1.0;
    alpha = max_step(s, d.ds, dims, alpha);
    alpha = max_step(z, d.dz, dims, alpha);
    if (d.dtau < 0.0) alpha = std::min(alpha, -tau / d.dtau);
    if (d.dkappa < 0.0) alpha = std::min(alpha, -kappa / d.dkappa);
    return alpha;
}

}  // namespace

Result solve(const Problem& p, const Settings& settings) {
    const Eigen::Index n = p.c.size();
    const Eigen::Index m = p.h.size();
    const ConeDims& dims = p.dims;
    if (p.G.rows() != m || p.G.cols() != n || dims.rows() != m)
        throw DimensionError("inconsistent conic problem dimensions");
    for (int d : dims.soc)
        if (d < 1) throw DimensionError("second-order cone block of size < 1");

    const Eigen::MatrixXd& G = p.G;
    const Eigen::VectorXd& c = p.c;
    const Eigen::VectorXd& h = p.h;
    const double hnorm = std::max(1.0, h.norm());
    const double cnorm = std::max(1.0, c.norm());
    const Eigen::VectorXd e = cone_identity(dims);
    const double degree = dims.degree();

    Result res;

    // Starting point: least-squares primal, minimum-norm dual, shifted into the cone.
    Eigen::LLT<Eigen::MatrixXd> llt0(G.transpose() * G);
    if (llt0.info() != Eigen::Success) {
        res.status = Status::NumericalFailure;
        return res;
    }
    Eigen::VectorXd x = llt0.solve(G.transpose() * h);
    Eigen::VectorXd s = h - G * x;
    Eigen::VectorXd z = -G * llt0.solve(c);
    const double as = cone_violation(s, dims);
    if (as >= -1e-8) s += (1.0 + as) * e;
    const double az = cone_violation(z, dims);
    if (az >= -1e-8) z += (1.0 + az) * e;
    double tau = 1.0;
    double kappa = 1.0;

    // Best iterate seen so far, returned when the final iterations lose
    // accuracy and it already meets the reduced tolerance.
    Result best;
    double best_score = std::numeric_limits<double>::infinity();
    const double reduced_tol = std::max(1e-7, 100.0 * settings.feastol);
    auto fallback = [&](Status failure) {
        if (best_score <= reduced_tol) {
            best.status = Status::Optimal;
            return best;
        }
        res.status = failure;
        return res;
    };

    for (int iter = 0; iter <= settings.max_iter; ++iter) {
        res.iterations = iter;
        const Eigen::VectorXd rx = G.transpose() * z + c * tau;
        const Eigen::VectorXd rz = s + G * x - h * tau;
        const double cx = c.dot(x);
        const double hz = h.dot(z);
        const double rtau = kappa + cx + hz;
        const double sz = s.dot(z);
        const double mu = (sz + tau * kappa) / (degree + 1.0);

        const double pres = rz.norm() / tau / hnorm;
        const double dres = rx.norm() / tau / cnorm;
        const double pcost = cx / tau;
        const double dcost = -hz / tau;
        const double gap = sz / (tau * tau);
        double relgap = std::numeric_limits<double>::infinity();
        if (pcost < 0.0) relgap = gap / -pcost;
        else if (dcost > 0.0) relgap = gap / dcost;

        res.x = x / tau;
        res.s = s / tau;
        res.z = z / tau;
        res.primal_objective = pcost;
        res.dual_objective = dcost;
        res.primal_residual = pres;
        res.dual_residual = dres;
        res.gap = gap;

        const double score = std::max({pres, dres, std::min(gap, relgap)});
        if (pres > 1e3 * best.primal_residual && best_score <= reduced_tol) return fallback(Status::NumericalFailure);
        if (score < best_score) {
            best_score = score;
            best = res;
        }
        if (pres < settings.feastol && dres < settings.feastol &&
            (gap < settings.abstol || relgap < settings.reltol)) {
            res.status = Status::Optimal;
            return res;
        }
        if (hz < 0.0) {
            const double pinf = (G.transpose() * z).norm() / cnorm / -hz;
            if (pinf < settings.feastol) {
                res.status = Status::PrimalInfeasible;
                res.z = z / -hz;
                return res;
            }
        }
        if (cx < 0.0) {
            const double dinf = (G * x + s).norm() / hnorm / -cx;
            if (dinf < settings.feastol) {
                res.status = Status::DualInfeasible;
                res.x = x / -cx;
                return res;
            }
        }
        if (iter == settings.max_iter) break;

        // Newton system via the normal equations G^T W^{-2} G.
        std::optional<NtScaling> scaling;
        try {
            scaling.emplace(s, z, dims);
        } catch (const NumericalError&) {
            return fallback(Status::NumericalFailure);
        }
        const NtScaling& W = *scaling;
        const Eigen::VectorXd& lambda = W.lambda();
        const Eigen::MatrixXd M = W.apply_inverse(G);
        Eigen::MatrixXd H = M.transpose() * M;
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success) {
            H.diagonal().array() += 1e-12 * H.diagonal().maxCoeff();
            llt.compute(H);
            if (llt.info() != Eigen::Success) return fallback(Status::NumericalFailure);
        }
        // [0 G^T; G -W^2] [dx; dz] = [r1; r2]
        auto solve_kkt = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                             Eigen::VectorXd& dx, Eigen::VectorXd& dz) {
            const Eigen::VectorXd wr2 = W.apply_inverse(r2);
            dx = llt.solve(r1 + M.transpose() * wr2);
            dz = W.apply_inverse(Eigen::VectorXd(M * dx - wr2));
            // one step of iterative refinement on the full KKT residual
            const Eigen::VectorXd e1 = r1 - G.transpose() * dz;
            const Eigen::VectorXd e2 = r2 - (G * dx - W.apply(W.apply(dz)));
            const Eigen::VectorXd we2 = W.apply_inverse(e2);
            const Eigen::VectorXd cx_ = llt.solve(e1 + M.transpose() * we2);
            dx += cx_;
            dz += W.apply_inverse(Eigen::VectorXd(M * cx_ - we2));
        };

        Eigen::VectorXd x1, z1;
        solve_kkt(-c, h, x1, z1);
        const double denom = c.dot(x1) + h.dot(z1) - kappa / tau;

        auto direction = [&](const Eigen::VectorXd& rc, double rk, double residual_scale) {
            Direction d;
            const Eigen::VectorXd wl = W.apply(jordan_divide(lambda, rc, dims));
            Eigen::VectorXd x2, z2;
            solve_kkt(-residual_scale * rx, -residual_scale * rz - wl, x2, z2);
            d.dtau = (-residual_scale * rtau - rk / tau - c.dot(x2) - h.dot(z2)) / denom;
            d.dx = x2 + d.dtau * x1;
            d.dz = z2 + d.dtau * z1;
            d.ds = wl - W.apply(W.apply(d.dz));
            d.dkappa = (rk - kappa * d.dtau) / tau;
            return d;
        };

        const Eigen::VectorXd ll = jordan_product(lambda, lambda, dims);
        const Direction aff = direction(-ll, -kappa * tau, 1.0);
        const double alpha_aff = step_length(s, z, tau, kappa, aff, dims);
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

        const Eigen::VectorXd corr =
            jordan_product(W.apply_inverse(aff.ds), W.apply(aff.dz), dims);
        const Eigen::VectorXd rc = -ll + sigma * mu * e - corr;
        const double rk = -kappa * tau + sigma * mu - aff.dtau * aff.dkappa;
        const Direction d = direction(rc, rk, 1.0 - sigma);
        const double alpha = std::min(1.0, settings.step_fraction * step_length(s, z, tau, kappa, d, dims));

        x += alpha * d.dx;
        z += alpha * d.dz;
        s += alpha * d.ds;
        tau += alpha * d.dtau;
        kappa += alpha * d.dkappa;
        if (!x.allFinite() || !z.allFinite() || !s.allFinite() || !std::isfinite(tau))
            return fallback(Status::NumericalFailure);
    }
    return fallback(Status::MaxIterations);
}

}  // namespace cfmimo::socp
