#pragma once

#include "cfmimo/config.hpp"
#include "cfmimo/dataset.hpp"
#include "cfmimo/neural.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cfmimo {

/// Centralized inputs and targets, one sample per column: beta in dB and
/// gamma / sqrt(P), both flattened UE-major (row k * L + l).
Eigen::MatrixXd centralized_features(const Dataset& data);
Eigen::MatrixXd centralized_targets(const Dataset& data, double p_max);

/// Local inputs and targets of AP l: column l of beta_db and of gamma / sqrt(P),
/// in UE index order.
Eigen::MatrixXd local_features(const Dataset& data, int l);
Eigen::MatrixXd local_targets(const Dataset& data, int l, double p_max);

struct TrainedModel {
    Model model;
    TrainHistory history;
};

/// Fits the input scaler on `train`, initializes from config.seed and trains.
TrainedModel train_centralized(const Dataset& train, const Dataset& val, const TrainConfig& config,
                               double p_max);

/// One network per AP. AP l uses seed derive_seed(config.seed, l, Instance)
/// for both its initialization and its shuffling.
std::vector<TrainedModel> train_decentralized(const Dataset& train, const Dataset& val,
                                              const TrainConfig& config, double p_max);

/// File names of the per-AP models inside a model directory.
std::filesystem::path local_model_path(const std::filesystem::path& dir, int l);

/// `epoch,train_loss,val_loss`; val_loss is empty without validation data.
void write_loss_curve(std::ostream& out, const TrainHistory& history);
void write_loss_curve(const std::filesystem::path& path, const TrainHistory& history);

/// Network output masked to the served links and projected onto the budget.
PowerAllocation predict_centralized(const Model& model, const Eigen::MatrixXd& beta_db, const Dcc& dcc,
                                    double p_max);
PowerAllocation predict_decentralized(const std::vector<Model>& models, const Eigen::MatrixXd& beta_db,
                                      const Dcc& dcc, double p_max);

enum class Policy { Optimal, CentralizedDnn, DecentralizedDnn, Heuristic, EqualSplit };

const char* to_string(Policy policy);
Policy parse_policy(const std::string& name);

struct SeSummary {
    double mean = 0.0;
    double median = 0.0;
    double p5 = 0.0;  // 5th percentile, linear interpolation between order statistics
};

SeSummary summarize(std::vector<double> values);

/// Per-UE SE of every evaluated policy. Samples are stored sample-major:
/// entry j * K + k is UE k of test sample j, identical across policies.
struct EvaluationReport {
    int K = 0;
    std::vector<std::uint64_t> sample_ids;
    std::vector<Policy> policies;
    std::vector<std::vector<double>> se;  // parallel to policies

    const std::vector<double>& samples(Policy policy) const;
    SeSummary summary(Policy policy) const;
};

struct PolicyModels {
    const Model* centralized = nullptr;               // policy skipped when null
    const std::vector<Model>* decentralized = nullptr;  // policy skipped when null
};

/// Rebuilds each test sample's coefficients from its seed and evaluates all
/// available policies on them. Every allocation is audited against the
/// per-AP budget before its SINR is computed.
EvaluationReport evaluate_policies(const Dataset& test, const PolicyModels& models, const SystemConfig& config);

/// `policy,se_bits_per_hz,cdf`, ascending per policy.
void emit_cdf(std::ostream& out, const EvaluationReport& report);
void emit_cdf(const std::filesystem::path& path, const EvaluationReport& report);

/// `sample_id,ue,<policy>...`, one row per (sample, UE).
void write_se_samples(std::ostream& out, const EvaluationReport& report);
EvaluationReport read_se_samples(std::istream& in);
void write_se_samples(const std::filesystem::path& path, const EvaluationReport& report);
EvaluationReport read_se_samples(const std::filesystem::path& path);

/// `policy,mean,median,p5`.
void write_summary(std::ostream& out, const EvaluationReport& report);

}  // namespace cfmimo
