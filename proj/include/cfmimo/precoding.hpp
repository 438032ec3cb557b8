#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/types.hpp"

#include <Eigen/Dense>

namespace cfmimo {

/// Unit-norm precoders for served links, explicit zero vectors elsewhere.
struct PrecoderSet {
    LinkGrid<Eigen::VectorXcd> w;
    PrecodingScheme scheme = PrecodingScheme::MR;
};

LinkGrid<Eigen::VectorXcd> mr_precoder(const LinkGrid<Eigen::VectorXcd>& h_hat, const Dcc& dcc);

/// (sum_{i in D_l} p_i h_il h_il^H + sigma^2 I)^{-1} p_k h_kl per served link.
LinkGrid<Eigen::VectorXcd> rzf_precoder(const LinkGrid<Eigen::VectorXcd>& h_hat, const Dcc& dcc,
                                        double p_ul, double noise_power);

/// Throws NumericalError when a served link has a zero direction.
PrecoderSet normalize(const LinkGrid<Eigen::VectorXcd>& directions, const Dcc& dcc,
                      PrecodingScheme scheme);

PrecoderSet compute_precoders(PrecodingScheme scheme, const LinkGrid<Eigen::VectorXcd>& h_hat,
                              const Dcc& dcc, const SystemConfig& config);

}  // namespace cfmimo
