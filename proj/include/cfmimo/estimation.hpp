#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace cfmimo {

/// Pilot indices are 0-based here: pilot_of_ue[k] in [0, tau_p).
struct PilotAssignment {
    std::vector<int> pilot_of_ue;
    std::vector<std::vector<int>> groups;  // groups[t] = UEs sharing pilot t

    int tau_p() const { return static_cast<int>(groups.size()); }
};

/// Orthogonal when tau_p >= K, otherwise round-robin k mod tau_p.
PilotAssignment assign_pilots(int K, int tau_p);

/// Second-order statistics of the MMSE estimator, computed once per network
/// realization from the true correlation matrices.
struct EstimatorStatistics {
    LinkGrid<Eigen::MatrixXcd> phi;      // (t, l): sum_{i in P_t} tau_p p_i R_il + sigma^2 I
    LinkGrid<Eigen::MatrixXcd> gain;     // (k, l): sqrt(tau_p p_k) R_kl Phi_tl^{-1}
    LinkGrid<Eigen::MatrixXcd> est_cov;  // (k, l): tau_p p_k R_kl Phi^{-1} R_kl
};

struct ChannelEstimate {
    LinkGrid<Eigen::VectorXcd> h_hat;  // (k, l)
    LinkGrid<Eigen::MatrixXcd> phi;
    LinkGrid<Eigen::MatrixXcd> est_cov;
};

/// Received pilot signal y_tl for every pilot t and AP l. Noise is drawn as
/// CN(0, sigma^2 I) from `seed`; `noiseless` skips the draw entirely.
LinkGrid<Eigen::VectorXcd> received_pilot(const ChannelSample& sample,
                                          const PilotAssignment& assignment,
                                          const SystemConfig& config, std::uint64_t seed,
                                          bool noiseless = false);

LinkGrid<Eigen::MatrixXcd> compute_phi(const PilotAssignment& assignment,
                                       const NetworkRealization& realization,
                                       const SystemConfig& config);

/// Throws NumericalError if some Phi is not positive definite.
EstimatorStatistics estimator_statistics(const NetworkRealization& realization,
                                         const PilotAssignment& assignment,
                                         const SystemConfig& config);

/// h_hat(k, l) = gain(k, l) * y_{t(k), l}.
LinkGrid<Eigen::VectorXcd> apply_estimator(const LinkGrid<Eigen::VectorXcd>& y_pilot,
                                           const EstimatorStatistics& stats,
                                           const PilotAssignment& assignment);

ChannelEstimate mmse_estimate(const LinkGrid<Eigen::VectorXcd>& y_pilot,
                              const NetworkRealization& realization,
                              const PilotAssignment& assignment, const SystemConfig& config);

}  // namespace cfmimo
