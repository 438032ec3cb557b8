#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace cfmimo {

/// Per-AP served-UE sets D_l plus a dense K x L membership mask.
struct Dcc {
    std::vector<std::vector<int>> served;  // served[l] = sorted UE indices
    LinkGrid<char> mask;                   // mask(k, l) != 0 iff k in D_l

    bool serves(int k, int l) const { return mask(k, l) != 0; }
};

/// One drop of the network: geometry, large-scale fading and the spatial
/// correlation of every link. `correlation_sqrt` caches Hermitian square
/// roots used when sampling channels.
struct NetworkRealization {
    std::vector<Point3> ap_positions;
    std::vector<Point3> ue_positions;
    Eigen::MatrixXd beta;  // K x L, linear
    LinkGrid<Eigen::MatrixXcd> correlation;
    LinkGrid<Eigen::MatrixXcd> correlation_sqrt;
    Dcc dcc;

    int K() const { return static_cast<int>(beta.rows()); }
    int L() const { return static_cast<int>(beta.cols()); }
    int N() const { return correlation.rows() > 0 ? static_cast<int>(correlation(0, 0).rows()) : 0; }
};

/// h(k, l) is the N-antenna channel from AP l to UE k in one coherence block.
struct ChannelSample {
    LinkGrid<Eigen::VectorXcd> h;
};

/// Regular sqrt(L) x sqrt(L) grid centred in equal sub-squares, or the
/// explicit `ap_positions` of the config.
std::vector<Point3> place_aps(const SystemConfig& config);

/// K i.i.d. uniform positions in the square at z = 0.
std::vector<Point3> drop_ues(const SystemConfig& config, std::uint64_t seed);

/// 3-D distance with wrap-around (torus) horizontal offsets and the AP
/// height as vertical offset.
double link_distance(const Point3& ap, const Point3& ue, const SystemConfig& config);

/// Horizontal torus distance only.
double wrapped_horizontal_distance(const Point3& a, const Point3& b, double side);

/// Channel gain in dB: intercept - exponent_coeff * log10(d / 1 m).
double pathloss_db(double distance_m, const SystemConfig& config);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

using CorrelationFn = std::function<Eigen::MatrixXcd(double beta, int n)>;

/// Built-in models: Diagonal gives beta * I; Exponential gives
/// beta * coeff^|i-j|. Trace is always n * beta.
Eigen::MatrixXcd build_correlation(double beta, CorrelationKind kind, int n, double coeff = 0.5);

/// Custom model. The output is checked to be Hermitian PSD (DomainError
/// otherwise) and rescaled so that its trace is exactly n * beta.
Eigen::MatrixXcd build_correlation(double beta, const CorrelationFn& model, int n);

/// Hermitian PSD square root. Throws NumericalError on a matrix with
/// significantly negative eigenvalues.
Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& r);

Dcc select_dcc(const Eigen::MatrixXd& beta, DccPolicy policy, int top_q = 1);

NetworkRealization make_realization(const SystemConfig& config, std::vector<Point3> ue_positions);
NetworkRealization make_realization(const SystemConfig& config, std::uint64_t ue_seed);

/// h(k, l) = R_kl^{1/2} z with z ~ CN(0, I). Deterministic per seed.
ChannelSample draw_channels(const NetworkRealization& realization, std::uint64_t seed);

}  // namespace cfmimo
