#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/precoding.hpp"
#include "cfmimo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace cfmimo {

/// Coefficients of the hardening-bound SINR
///   SINR_k = (sum_l g_kl a_kl)^2 / (sum_l sum_i g_il^2 b_kil + sigma^2)
/// where g_kl are the power amplitudes.
struct SinrCoefficients {
    int K = 0;
    int L = 0;
    Eigen::MatrixXd a;        // K x L, |E{h_kl^H D_kl w_kl}|
    std::vector<double> b;    // K*K*L, index (k, i, l)
    Eigen::MatrixXd a_stderr; // Monte-Carlo standard error of a
    std::vector<double> b_stderr;
    double sigma2 = 0.0;
    int mc_count = 0;

    SinrCoefficients() = default;
    SinrCoefficients(int k, int l, double noise);

    double& B(int k, int i, int l) { return b[(static_cast<std::size_t>(k) * K + i) * L + l]; }
    double B(int k, int i, int l) const { return b[(static_cast<std::size_t>(k) * K + i) * L + l]; }
    double& B_err(int k, int i, int l) { return b_stderr[(static_cast<std::size_t>(k) * K + i) * L + l]; }
    double B_err(int k, int i, int l) const {
        return b_stderr[(static_cast<std::size_t>(k) * K + i) * L + l];
    }
};

/// gamma(k, l) = sqrt(rho_kl), in sqrt(W).
struct PowerAllocation {
    Eigen::MatrixXd gamma;

    /// Per-AP transmit power sum_k gamma_kl^2.
    Eigen::VectorXd ap_power() const { return gamma.array().square().colwise().sum().transpose(); }
};

/// Checks nonnegativity, the per-AP budget (with relative tolerance) and the
/// zero pattern of unserved links.
bool is_feasible(const PowerAllocation& alloc, const Dcc& dcc, double p_max, double rel_tol = 1e-9);

/// Monte-Carlo estimate of a and b over `config.mc_realizations` coherence
/// blocks. Deterministic per seed; summation is compensated.
SinrCoefficients estimate_coefficients(const NetworkRealization& realization, PrecodingScheme scheme,
                                       const SystemConfig& config, std::uint64_t seed);

Eigen::VectorXd compute_sinr(const PowerAllocation& alloc, const SinrCoefficients& coeffs);

/// (tau_d / tau_c) log2(1 + SINR).
Eigen::VectorXd compute_se(const Eigen::VectorXd& sinr, const SystemConfig& config);

/// Direct Monte-Carlo evaluation of the hardening bound from the effective
/// downlink channels u_ki = sum_l sqrt(rho_il) h_kl^H D_il w_il, including the
/// cross-AP terms that the coefficient form drops. Standard errors are
/// delete-one-group jackknife estimates.
struct DirectSinrEstimate {
    Eigen::VectorXd sinr;
    Eigen::VectorXd stderr_;
};

DirectSinrEstimate direct_sinr(const NetworkRealization& realization, PrecodingScheme scheme,
                               const PowerAllocation& alloc, const SystemConfig& config,
                               std::uint64_t seed, int groups = 20);

/// Draws one coherence block (channels, pilots, estimates, precoders) for
/// realization index r under a coefficient seed. Shared by the estimators
/// above so that both see the identical channel stream.
struct BlockDraw {
    ChannelSample channels;
    PrecoderSet precoders;
};

BlockDraw draw_block(const NetworkRealization& realization, const EstimatorStatistics& stats,
                     const PilotAssignment& pilots, PrecodingScheme scheme,
                     const SystemConfig& config, std::uint64_t seed, std::uint64_t r);

}  // namespace cfmimo
