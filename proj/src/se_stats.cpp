#include "cfmimo/se_stats.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/log.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/summation.hpp"

#include <algorithm>
#include <cmath>

namespace cfmimo {

SinrCoefficients::SinrCoefficients(int k, int l, double noise)
    : K(k),
      L(l),
      a(Eigen::MatrixXd::Zero(k, l)),
      b(static_cast<std::size_t>(k) * k * l, 0.0),
      a_stderr(Eigen::MatrixXd::Zero(k, l)),
      b_stderr(static_cast<std::size_t>(k) * k * l, 0.0),
      sigma2(noise) {}

bool is_feasible(const PowerAllocation& alloc, const Dcc& dcc, double p_max, double rel_tol) {
    const auto& g = alloc.gamma;
    for (Eigen::Index k = 0; k < g.rows(); ++k)
        for (Eigen::Index l = 0; l < g.cols(); ++l) {
            if (!(g(k, l) >= 0.0) || !std::isfinite(g(k, l))) return false;
            if (!dcc.serves(static_cast<int>(k), static_cast<int>(l)) && g(k, l) != 0.0) return false;
        }
    const Eigen::VectorXd power = alloc.ap_power();
    return (power.array() <= p_max * (1.0 + rel_tol)).all();
}

BlockDraw draw_block(const NetworkRealization& realization, const EstimatorStatistics& stats,
                     const PilotAssignment& pilots, PrecodingScheme scheme,
                     const SystemConfig& config, std::uint64_t seed, std::uint64_t r) {
    BlockDraw block;
    block.channels = draw_channels(realization, derive_seed(seed, r, StreamTag::Channel));
    const auto y = received_pilot(block.channels, pilots, config,
                                  derive_seed(seed, r, StreamTag::PilotNoise));
    const auto h_hat = apply_estimator(y, stats, pilots);
    block.precoders = compute_precoders(scheme, h_hat, realization.dcc, config);
    return block;
}

SinrCoefficients estimate_coefficients(const NetworkRealization& realization, PrecodingScheme scheme,
                                       const SystemConfig& config, std::uint64_t seed) {
    const int K = realization.K();
    const int L = realization.L();
    const int mc = config.mc_realizations;
    if (mc < 100)
        log_warning("estimate_coefficients: only " + std::to_string(mc) +
                    " Monte-Carlo realizations; coefficients will be noisy");

    const PilotAssignment pilots = assign_pilots(K, config.tau_p);
    const EstimatorStatistics stats = estimator_statistics(realization, pilots, config);

    const std::size_t nb = static_cast<std::size_t>(K) * K * L;
    std::vector<CompensatedSum> mean_re(static_cast<std::size_t>(K) * L), mean_im(mean_re.size());
    std::vector<CompensatedSum> second(nb), fourth(nb);

    for (int r = 0; r < mc; ++r) {
        const BlockDraw block = draw_block(realization, stats, pilots, scheme, config, seed, r);
        const auto& h = block.channels.h;
        const auto& w = block.precoders.w;
        for (int k = 0; k < K; ++k) {
            for (int l = 0; l < L; ++l) {
                for (int i = 0; i < K; ++i) {
                    // w is zero on unserved links, which realizes the D_il mask
                    const cdouble g = h(k, l).dot(w(i, l));  // h^H w
                    const double g2 = std::norm(g);
                    const std::size_t idx = (static_cast<std::size_t>(k) * K + i) * L + l;
                    second[idx].add(g2);
                    fourth[idx].add(g2 * g2);
                    if (i == k) {
                        mean_re[static_cast<std::size_t>(k) * L + l].add(g.real());
                        mean_im[static_cast<std::size_t>(k) * L + l].add(g.imag());
                    }
                }
            }
        }
    }

    SinrCoefficients out(K, L, config.noise_power);
    out.mc_count = mc;
    const double n = mc;
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            const std::size_t kl = static_cast<std::size_t>(k) * L + l;
            const cdouble mean(mean_re[kl].value() / n, mean_im[kl].value() / n);
            out.a(k, l) = std::abs(mean);
            for (int i = 0; i < K; ++i) {
                const std::size_t idx = (static_cast<std::size_t>(k) * K + i) * L + l;
                const double m2 = second[idx].value() / n;
                const double m4 = fourth[idx].value() / n;
                double v = m2;
                if (i == k) {
                    v = m2 - std::norm(mean);
                    if (v < -1e-9 * m2)
                        throw NumericalError("negative variance estimate beyond clamp tolerance");
                    v = std::max(v, 0.0);
                    out.a_stderr(k, l) = std::sqrt(v / n);
                }
                out.B(k, i, l) = v;
                out.B_err(k, i, l) = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
            }
        }
    }
    return out;
}

Eigen::VectorXd compute_sinr(const PowerAllocation& alloc, const SinrCoefficients& coeffs) {
    const int K = coeffs.K;
    const int L = coeffs.L;
    const Eigen::MatrixXd& g = alloc.gamma;
    if (g.rows() != K || g.cols() != L) throw DimensionError("allocation does not match coefficients");
    Eigen::VectorXd sinr(K);
    for (int k = 0; k < K; ++k) {
        double signal = 0.0;
        double interference = coeffs.sigma2;
        for (int l = 0; l < L; ++l) {
            signal += g(k, l) * coeffs.a(k, l);
            for (int i = 0; i < K; ++i) interference += g(i, l) * g(i, l) * coeffs.B(k, i, l);
        }
        sinr(k) = signal * signal / interference;
    }
    return sinr;
}

Eigen::VectorXd compute_se(const Eigen::VectorXd& sinr, const SystemConfig& config) {
    return config.prelog() * (1.0 + sinr.array()).log2();
}

DirectSinrEstimate direct_sinr(const NetworkRealization& realization, PrecodingScheme scheme,
                               const PowerAllocation& alloc, const SystemConfig& config,
                               std::uint64_t seed, int groups) {
    const int K = realization.K();
    const int L = realization.L();
    const int mc = config.mc_realizations;
    if (groups < 2 || mc < groups) throw ConfigError("direct_sinr needs at least 2 groups and mc >= groups");

    const PilotAssignment pilots = assign_pilots(K, config.tau_p);
    const EstimatorStatistics stats = estimator_statistics(realization, pilots, config);

    // per group: sum of u_kk and sum of |u_ki|^2
    struct GroupSums {
        std::vector<CompensatedSum> re, im, power;
    };
    std::vector<GroupSums> per_group(groups);
    for (auto& gs : per_group) {
        gs.re.resize(K);
        gs.im.resize(K);
        gs.power.resize(static_cast<std::size_t>(K) * K);
    }
    std::vector<int> group_count(groups, 0);

    for (int r = 0; r < mc; ++r) {
        const int grp = static_cast<int>(static_cast<long long>(r) * groups / mc);
        ++group_count[grp];
        const BlockDraw block = draw_block(realization, stats, pilots, scheme, config, seed, r);
        const auto& h = block.channels.h;
        const auto& w = block.precoders.w;
        for (int k = 0; k < K; ++k) {
            for (int i = 0; i < K; ++i) {
                cdouble u = 0.0;
                for (int l = 0; l < L; ++l) u += alloc.gamma(i, l) * h(k, l).dot(w(i, l));
                per_group[grp].power[static_cast<std::size_t>(k) * K + i].add(std::norm(u));
                if (i == k) {
                    per_group[grp].re[k].add(u.real());
                    per_group[grp].im[k].add(u.imag());
                }
            }
        }
    }

    auto sinr_excluding = [&](int skip) {
        Eigen::VectorXd s(K);
        double count = 0.0;
        for (int g = 0; g < groups; ++g)
            if (g != skip) count += group_count[g];
        for (int k = 0; k < K; ++k) {
            CompensatedSum re, im;
            for (int g = 0; g < groups; ++g)
                if (g != skip) {
                    re.add(per_group[g].re[k]);
                    im.add(per_group[g].im[k]);
                }
            const double signal = std::norm(cdouble(re.value(), im.value()) / count);
            double total = 0.0;
            for (int i = 0; i < K; ++i) {
                CompensatedSum p;
                for (int g = 0; g < groups; ++g)
                    if (g != skip) p.add(per_group[g].power[static_cast<std::size_t>(k) * K + i]);
                total += p.value() / count;
            }
            s(k) = signal / (total - signal + config.noise_power);
        }
        return s;
    };

    DirectSinrEstimate out;
    out.sinr = sinr_excluding(-1);
    Eigen::MatrixXd leave_out(K, groups);
    for (int g = 0; g < groups; ++g) leave_out.col(g) = sinr_excluding(g);
    const Eigen::VectorXd mean = leave_out.rowwise().mean();
    out.stderr_ = (((leave_out.colwise() - mean).array().square().rowwise().sum()) *
                   (groups - 1.0) / groups)
                      .sqrt()
                      .matrix();
    return out;
}

}  // namespace cfmimo
