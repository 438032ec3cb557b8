#pragma once

#include "cfmimo/se_stats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cfmimo {

enum class Activation { Elu, Sigmoid, Relu, Identity };

const char* to_string(Activation act);
Activation parse_activation(const std::string& name);

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
    Activation act = Activation::Identity;

    int in() const { return static_cast<int>(W.cols()); }
    int out() const { return static_cast<int>(W.rows()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(W.size() + b.size()); }
};

/// Fully connected feed-forward network. Batches are column-major: one
/// sample per column.
struct DenseNetwork {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out(); }
    std::size_t parameter_count() const;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const;
};

/// Zero-initialized network with the given widths (widths.size() - 1 layers).
DenseNetwork build_network(const std::vector<int>& widths, const std::vector<Activation>& acts);

/// KL -> 128 -> 512 -> 256 -> 128 -> KL.
DenseNetwork build_centralized(int K, int L);
/// K -> 16 -> 64 -> 32 -> 16 -> K.
DenseNetwork build_decentralized(int K);

/// Glorot-uniform weights; biases are zero except on relu layers, which
/// start at 0.5 so that no output unit is dead. Deterministic per seed.
void initialize(DenseNetwork& net, std::uint64_t seed);

/// All weights (row-major per layer) followed by the bias, layer by layer.
Eigen::VectorXd flatten(const DenseNetwork& net);
void unflatten(DenseNetwork& net, const Eigen::VectorXd& params);

enum class LossKind { Mse, CrossEntropy };

const char* to_string(LossKind loss);
LossKind parse_loss(const std::string& name);

/// Small constant guarding the normalization and log of the cross-entropy.
inline constexpr double kCrossEntropyEps = 1e-8;

/// Mean loss over the batch. MSE averages over samples and outputs; the
/// cross-entropy compares sum-normalized outputs with sum-normalized targets.
double loss(const DenseNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind);

struct Gradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
    double loss = 0.0;

    Eigen::VectorXd flatten() const;
};

/// Exact gradients of the mean batch loss. The derivative of elu and relu at
/// zero is taken from the right.
Gradients backward(const DenseNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                   LossKind kind);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    LossKind loss = LossKind::Mse;
    std::uint64_t seed = 1;

    void validate() const;
};

struct AdamState {
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;
    long step = 0;

    explicit AdamState(const DenseNetwork& net);
};

void adam_step(DenseNetwork& net, const Gradients& grads, AdamState& state, const TrainConfig& config);

struct TrainHistory {
    std::vector<double> train_loss;  // per epoch, over the full training set
    std::vector<double> val_loss;    // per epoch; empty without validation data
};

/// Mini-batch Adam. Each epoch reshuffles with a seed derived from
/// (config.seed, epoch). Throws TrainingError when the loss becomes non-finite.
TrainHistory train(DenseNetwork& net, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                   const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const TrainConfig& config);

/// Per-feature standardization fitted on training inputs.
struct FeatureScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;  // standard deviation, 1 where a feature is constant

    static FeatureScaler fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// A trained network together with its input standardization and the
/// target scale (targets are gamma / target_scale).
struct Model {
    DenseNetwork net;
    FeatureScaler scaler;
    double target_scale = 1.0;

    Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;
};

/// Text container: every double is written as its shortest round-trip
/// decimal, so save followed by load is bit-exact.
void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

/// Scales every AP column whose power exceeds p_max back onto the budget.
PowerAllocation project_powers(const Eigen::MatrixXd& gamma, double p_max);

}  // namespace cfmimo
