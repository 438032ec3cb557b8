#pragma once

#include "cfmimo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cfmimo {

enum class CorrelationKind { Diagonal, Exponential };
enum class DccPolicy { All, TopQ };

/// Network and simulation parameters. Defaults are the reference deployment:
/// 9 APs with 2 antennas, 5 UEs, 150 m x 150 m wrap-around area, APs 10 m
/// above the UEs, 200-symbol coherence blocks with 5 pilots.
struct SystemConfig {
    int L = 9;
    int K = 5;
    int N = 2;
    double area_side = 150.0;      // m
    double ap_height = 10.0;       // m
    int tau_c = 200;
    int tau_p = 5;
    int tau_d = 195;
    double p_ul = 0.1;             // W
    double P_dl_max = 1.0;         // W
    double noise_power = 3.981071705534973e-13;  // W, -94 dBm
    double pathloss_intercept = -30.5;           // dB at 1 m
    double pathloss_exponent_coeff = 36.7;       // dB per decade
    int mc_realizations = 1000;
    std::uint64_t master_seed = 1;

    bool require_orthogonal_pilots = true;
    CorrelationKind correlation = CorrelationKind::Diagonal;
    double correlation_coeff = 0.5;  // magnitude for the exponential model
    DccPolicy dcc_policy = DccPolicy::All;
    int dcc_top_q = 1;
    std::vector<Point3> ap_positions;  // optional override of the grid
    int threads = 1;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;

    double prelog() const { return static_cast<double>(tau_d) / tau_c; }
};

double dbm_to_watts(double dbm);

/// Parses `key = value` lines (`#` starts a comment). Unknown keys and
/// malformed values raise ConfigError. Missing keys keep their defaults.
SystemConfig parse_config(std::istream& in);
SystemConfig load_config(const std::filesystem::path& path);

/// Writes every field in the same key-value format.
void write_config(std::ostream& out, const SystemConfig& config);

}  // namespace cfmimo
