#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/maxmin.hpp"
#include "cfmimo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace cfmimo {

/// One labeled network realization. Matrices are K x L; in the CSV they are
/// flattened UE-major (index k * L + l), the same order as the solver's
/// gamma stacking.
struct DatasetRecord {
    std::uint64_t sample_id = 0;
    std::uint64_t seed = 0;  // per-sample seed; regenerates geometry and coefficients
    double s_star = 0.0;
    MaxMinStatus status = MaxMinStatus::SolverFailure;
    Eigen::MatrixXd beta_db;
    Eigen::MatrixXd gamma_star;  // sqrt(W)
    int iterations = 0;
    double max_residual = 0.0;
};

struct Dataset {
    int K = 0;
    int L = 0;
    PrecodingScheme scheme = PrecodingScheme::MR;
    std::uint64_t master_seed = 0;
    int mc_realizations = 0;
    std::vector<DatasetRecord> records;
};

/// Seeds of sample `sample_id` under a master seed.
std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t sample_id);
std::uint64_t ue_drop_seed(std::uint64_t sample_seed);
std::uint64_t coefficient_seed(std::uint64_t sample_seed);

/// Regenerates the network realization and coefficients behind a sample.
struct SampleInstance {
    NetworkRealization realization;
    SinrCoefficients coeffs;
};
SampleInstance rebuild_instance(const SystemConfig& config, PrecodingScheme scheme, std::uint64_t sample_seed);

/// Drops UEs, estimates coefficients and solves the max-min problem for one sample.
DatasetRecord label_sample(const SystemConfig& config, PrecodingScheme scheme, std::uint64_t sample_id,
                           MaxMinSolution* solution = nullptr);

struct GenerationStats {
    std::size_t requested = 0;
    std::size_t converged = 0;
    std::size_t solver_failures = 0;  // non-converged solves, excluded
    std::size_t audit_failures = 0;   // converged but infeasible allocations, excluded
};

/// Labels samples 0..n-1 on `config.threads` worker threads. The output only
/// depends on the config and the master seed, never on the thread count.
Dataset generate_dataset(const SystemConfig& config, std::size_t n_samples, PrecodingScheme scheme,
                         GenerationStats* stats = nullptr);

/// CSV with one `#` metadata line and a schema header.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Holds out `test_count` samples first, then splits the rest so that
/// val_fraction of it is validation. Assignment is a seeded permutation;
/// each part keeps the original record order.
DatasetSplit split_dataset(const Dataset& data, std::size_t test_count = 100, double val_fraction = 0.1,
                           std::uint64_t seed = 1);

}  // namespace cfmimo
