#include "cfmimo/geometry.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfmimo {

std::vector<Point3> place_aps(const SystemConfig& config) {
    std::vector<Point3> aps;
    if (!config.ap_positions.empty()) {
        if (static_cast<int>(config.ap_positions.size()) != config.L)
            throw ConfigError("ap_positions size does not match L");
        for (const auto& p : config.ap_positions) aps.push_back({p.x, p.y, config.ap_height});
        return aps;
    }
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(config.L))));
    if (side * side != config.L)
        throw ConfigError("L = " + std::to_string(config.L) +
                          " is not a perfect square and no ap_positions were given");
    aps.reserve(config.L);
    for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
            const double x = config.area_side * (2.0 * col + 1.0) / (2.0 * side);
            const double y = config.area_side * (2.0 * row + 1.0) / (2.0 * side);
            aps.push_back({x, y, config.ap_height});
        }
    }
    return aps;
}

std::vector<Point3> drop_ues(const SystemConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point3> ues(static_cast<std::size_t>(std::max(config.K, 0)));
    for (auto& ue : ues) {
        ue.x = rng.uniform(0.0, config.area_side);
        ue.y = rng.uniform(0.0, config.area_side);
        ue.z = 0.0;
    }
    return ues;
}

double wrapped_horizontal_distance(const Point3& a, const Point3& b, double side) {
    auto wrap = [side](double d) {
        d = std::fabs(d);
        d = std::fmod(d, side);
        return std::min(d, side - d);
    };
    return std::hypot(wrap(a.x - b.x), wrap(a.y - b.y));
}

double link_distance(const Point3& ap, const Point3& ue, const SystemConfig& config) {
    return std::hypot(wrapped_horizontal_distance(ap, ue, config.area_side), config.ap_height);
}

double pathloss_db(double distance_m, const SystemConfig& config) {
    if (!(distance_m > 0.0)) throw DomainError("pathloss distance must be positive");
    return config.pathloss_intercept - config.pathloss_exponent_coeff * std::log10(distance_m);
}

namespace {

void check_hermitian_psd(const Eigen::MatrixXcd& r) {
    if (r.rows() != r.cols()) throw DomainError("correlation matrix is not square");
    const double scale = std::max(r.cwiseAbs().maxCoeff(), 1e-300);
    if ((r - r.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw DomainError("correlation matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
        throw DomainError("correlation matrix is not positive semidefinite");
}

}  // namespace

Eigen::MatrixXcd build_correlation(double beta, CorrelationKind kind, int n, double coeff) {
    if (!(beta > 0.0)) throw DomainError("large-scale fading gain must be positive");
    if (n < 1) throw DomainError("antenna count must be positive");
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(n, n);
    switch (kind) {
        case CorrelationKind::Diagonal:
            r.diagonal().setConstant(beta);
            break;
        case CorrelationKind::Exponential:
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) r(i, j) = beta * std::pow(coeff, std::abs(i - j));
            break;
    }
    return r;
}

Eigen::MatrixXcd build_correlation(double beta, const CorrelationFn& model, int n) {
    if (!(beta > 0.0)) throw DomainError("large-scale fading gain must be positive");
    Eigen::MatrixXcd r = model(beta, n);
    if (r.rows() != n || r.cols() != n) throw DomainError("custom correlation model returned wrong size");
    check_hermitian_psd(r);
    const double trace = r.trace().real();
    if (!(trace > 0.0)) throw DomainError("custom correlation model returned zero trace");
    r *= n * beta / trace;
    return r;
}

Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& r) {
    const Eigen::Index n = r.rows();
    // diagonal fast path (the default model)
    bool diagonal = true;
    for (Eigen::Index i = 0; i < n && diagonal; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && r(i, j) != cdouble(0.0)) {
                diagonal = false;
                break;
            }
    if (diagonal) {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = r(i, i).real();
            if (d < 0.0) throw NumericalError("cannot factor covariance with negative variance");
            out(i, i) = std::sqrt(d);
        }
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of covariance failed");
    Eigen::VectorXd ev = eig.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e-10 * scale)
        throw NumericalError("covariance matrix is not positive semidefinite");
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().adjoint();
}

Dcc select_dcc(const Eigen::MatrixXd& beta, DccPolicy policy, int top_q) {
    const int K = static_cast<int>(beta.rows());
    const int L = static_cast<int>(beta.cols());
    Dcc dcc;
    dcc.mask = LinkGrid<char>(K, L, 0);
    dcc.served.assign(L, {});
    if (policy == DccPolicy::All) {
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < L; ++l) dcc.mask(k, l) = 1;
    } else {
        if (top_q < 1 || top_q > L) throw ConfigError("top-Q cluster size must lie in [1, L]");
        std::vector<int> order(L);
        for (int k = 0; k < K; ++k) {
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return beta(k, a) > beta(k, b); });
            for (int q = 0; q < top_q; ++q) dcc.mask(k, order[q]) = 1;
        }
    }
    for (int l = 0; l < L; ++l)
        for (int k = 0; k < K; ++k)
            if (dcc.mask(k, l)) dcc.served[l].push_back(k);
    return dcc;
}

NetworkRealization make_realization(const SystemConfig& config, std::vector<Point3> ue_positions) {
    config.validate();
    NetworkRealization net;
    net.ap_positions = place_aps(config);
    net.ue_positions = std::move(ue_positions);
    const int K = static_cast<int>(net.ue_positions.size());
    const int L = config.L;
    net.beta.resize(K, L);
    net.correlation = LinkGrid<Eigen::MatrixXcd>(K, L);
    net.correlation_sqrt = LinkGrid<Eigen::MatrixXcd>(K, L);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            const double d = link_distance(net.ap_positions[l], net.ue_positions[k], config);
            const double beta = db_to_linear(pathloss_db(d, config));
            net.beta(k, l) = beta;
            net.correlation(k, l) =
                build_correlation(beta, config.correlation, config.N, config.correlation_coeff);
            net.correlation_sqrt(k, l) = psd_sqrt(net.correlation(k, l));
        }
    }
    net.dcc = select_dcc(net.beta, config.dcc_policy, config.dcc_top_q);
    return net;
}

NetworkRealization make_realization(const SystemConfig& config, std::uint64_t ue_seed) {
    return make_realization(config, drop_ues(config, ue_seed));
}

ChannelSample draw_channels(const NetworkRealization& net, std::uint64_t seed) {
    const int K = net.K();
    const int L = net.L();
    const int N = net.N();
    Rng rng(seed);
    ChannelSample out{LinkGrid<Eigen::VectorXcd>(K, L)};
    const bool cached = net.correlation_sqrt.rows() == K && net.correlation_sqrt.cols() == L;
    Eigen::VectorXcd z(N);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            for (int n = 0; n < N; ++n) z(n) = rng.complex_normal();
            if (cached)
                out.h(k, l) = net.correlation_sqrt(k, l) * z;
            else
                out.h(k, l) = psd_sqrt(net.correlation(k, l)) * z;
        }
    }
    return out;
}

}  // namespace cfmimo
