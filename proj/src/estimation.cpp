#include "cfmimo/estimation.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/rng.hpp"

#include <cmath>

namespace cfmimo {

PilotAssignment assign_pilots(int K, int tau_p) {
    if (tau_p < 1) throw ConfigError("tau_p must be at least 1");
    PilotAssignment out;
    out.pilot_of_ue.resize(std::max(K, 0));
    out.groups.assign(tau_p, {});
    for (int k = 0; k < K; ++k) {
        const int t = k % tau_p;
        out.pilot_of_ue[k] = t;
        out.groups[t].push_back(k);
    }
    return out;
}

LinkGrid<Eigen::VectorXcd> received_pilot(const ChannelSample& sample,
                                          const PilotAssignment& assignment,
                                          const SystemConfig& config, std::uint64_t seed,
                                          bool noiseless) {
    const int L = sample.h.cols();
    const int N = sample.h.rows() > 0 ? static_cast<int>(sample.h(0, 0).size()) : config.N;
    const int tau_p = assignment.tau_p();
    const double noise_std = std::sqrt(config.noise_power);
    Rng rng(seed);
    LinkGrid<Eigen::VectorXcd> y(tau_p, L);
    for (int t = 0; t < tau_p; ++t) {
        for (int l = 0; l < L; ++l) {
            Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N);
            for (int i : assignment.groups[t]) v += std::sqrt(tau_p * config.p_ul) * sample.h(i, l);
            if (!noiseless)
                for (int n = 0; n < N; ++n) v(n) += noise_std * rng.complex_normal();
            y(t, l) = std::move(v);
        }
    }
    return y;
}

LinkGrid<Eigen::MatrixXcd> compute_phi(const PilotAssignment& assignment,
                                       const NetworkRealization& realization,
                                       const SystemConfig& config) {
    const int L = realization.L();
    const int N = realization.N();
    const int tau_p = assignment.tau_p();
    LinkGrid<Eigen::MatrixXcd> phi(tau_p, L);
    for (int t = 0; t < tau_p; ++t) {
        for (int l = 0; l < L; ++l) {
            Eigen::MatrixXcd m = config.noise_power * Eigen::MatrixXcd::Identity(N, N);
            for (int i : assignment.groups[t]) m += tau_p * config.p_ul * realization.correlation(i, l);
            phi(t, l) = std::move(m);
        }
    }
    return phi;
}

EstimatorStatistics estimator_statistics(const NetworkRealization& realization,
                                         const PilotAssignment& assignment,
                                         const SystemConfig& config) {
    const int K = realization.K();
    const int L = realization.L();
    const int tau_p = assignment.tau_p();
    EstimatorStatistics stats;
    stats.phi = compute_phi(assignment, realization, config);
    stats.gain = LinkGrid<Eigen::MatrixXcd>(K, L);
    stats.est_cov = LinkGrid<Eigen::MatrixXcd>(K, L);

    LinkGrid<Eigen::LLT<Eigen::MatrixXcd>> factors(tau_p, L);
    for (int t = 0; t < tau_p; ++t) {
        for (int l = 0; l < L; ++l) {
            factors(t, l).compute(stats.phi(t, l));
            if (factors(t, l).info() != Eigen::Success)
                throw NumericalError("pilot correlation matrix Phi is not positive definite");
        }
    }
    for (int k = 0; k < K; ++k) {
        const int t = assignment.pilot_of_ue[k];
        const double scale = std::sqrt(tau_p * config.p_ul);
        for (int l = 0; l < L; ++l) {
            const Eigen::MatrixXcd& r = realization.correlation(k, l);
            // Phi^{-1} R is the solve; R Phi^{-1} = (Phi^{-1} R)^H since both are Hermitian.
            const Eigen::MatrixXcd phi_inv_r = factors(t, l).solve(r);
            stats.gain(k, l) = scale * phi_inv_r.adjoint();
            Eigen::MatrixXcd cov = tau_p * config.p_ul * r * phi_inv_r;
            stats.est_cov(k, l) = 0.5 * (cov + cov.adjoint());
        }
    }
    return stats;
}

LinkGrid<Eigen::VectorXcd> apply_estimator(const LinkGrid<Eigen::VectorXcd>& y_pilot,
                                           const EstimatorStatistics& stats,
                                           const PilotAssignment& assignment) {
    const int K = stats.gain.rows();
    const int L = stats.gain.cols();
    LinkGrid<Eigen::VectorXcd> h_hat(K, L);
    for (int k = 0; k < K; ++k) {
        const int t = assignment.pilot_of_ue[k];
        for (int l = 0; l < L; ++l) h_hat(k, l) = stats.gain(k, l) * y_pilot(t, l);
    }
    return h_hat;
}

ChannelEstimate mmse_estimate(const LinkGrid<Eigen::VectorXcd>& y_pilot,
                              const NetworkRealization& realization,
                              const PilotAssignment& assignment, const SystemConfig& config) {
    EstimatorStatistics stats = estimator_statistics(realization, assignment, config);
    ChannelEstimate est;
    est.h_hat = apply_estimator(y_pilot, stats, assignment);
    est.phi = std::move(stats.phi);
    est.est_cov = std::move(stats.est_cov);
    return est;
}

}  // namespace cfmimo
