#include "cfmimo/neural.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/format.hpp"
#include "cfmimo/rng.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace cfmimo {

const char* to_string(Activation act) {
    switch (act) {
        case Activation::Elu: return "elu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "unknown";
}

Activation parse_activation(const std::string& name) {
    if (name == "elu") return Activation::Elu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + name + "'");
}

const char* to_string(LossKind loss) { return loss == LossKind::Mse ? "mse" : "cross_entropy"; }

LossKind parse_loss(const std::string& name) {
    if (name == "mse") return LossKind::Mse;
    if (name == "cross_entropy") return LossKind::CrossEntropy;
    throw ConfigError("unknown loss '" + name + "'");
}

namespace {

void activate(Eigen::MatrixXd& z, Activation act) {
    switch (act) {
        case Activation::Elu:
            z = z.unaryExpr([](double v) { return v >= 0.0 ? v : std::expm1(v); });
            break;
        case Activation::Sigmoid:
            z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
            break;
        case Activation::Relu: z = z.cwiseMax(0.0); break;
        case Activation::Identity: break;
    }
}

// Derivative expressed through the pre-activation z and the output a.
Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a, Activation act) {
    switch (act) {
        case Activation::Elu:
            return z.binaryExpr(a, [](double zv, double av) { return zv >= 0.0 ? 1.0 : av + 1.0; });
        case Activation::Sigmoid: return a.array() * (1.0 - a.array());
        case Activation::Relu: return z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : 0.0; });
        case Activation::Identity: break;
    }
    return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

void check_input(const DenseNetwork& net, const Eigen::MatrixXd& x) {
    if (net.layers.empty()) throw DimensionError("network has no layers");
    if (x.rows() != net.input_dim())
        throw DimensionError("input has " + std::to_string(x.rows()) + " features, network expects " +
                             std::to_string(net.input_dim()));
}

double batch_loss(const Eigen::MatrixXd& out, const Eigen::MatrixXd& y, LossKind kind) {
    if (out.rows() != y.rows() || out.cols() != y.cols()) throw DimensionError("target shape mismatch");
    const double n = static_cast<double>(out.cols());
    if (kind == LossKind::Mse) return (out - y).squaredNorm() / (n * static_cast<double>(out.rows()));
    double total = 0.0;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double sp = out.col(j).sum() + kCrossEntropyEps;
        const double sq = y.col(j).sum() + kCrossEntropyEps;
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            total -= (y(i, j) / sq) * std::log(out(i, j) / sp + kCrossEntropyEps);
    }
    return total / n;
}

// dLoss / dOutput for the mean batch loss.
Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& out, const Eigen::MatrixXd& y, LossKind kind) {
    const double n = static_cast<double>(out.cols());
    if (kind == LossKind::Mse) return 2.0 * (out - y) / (n * static_cast<double>(out.rows()));
    Eigen::MatrixXd g(out.rows(), out.cols());
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double sp = out.col(j).sum() + kCrossEntropyEps;
        const double sq = y.col(j).sum() + kCrossEntropyEps;
        const Eigen::VectorXd p = out.col(j) / sp;
        const Eigen::VectorXd gp =
            -(y.col(j) / sq).cwiseQuotient((p.array() + kCrossEntropyEps).matrix());
        g.col(j) = (gp.array() - gp.dot(p)) / sp / n;
    }
    return g;
}

}  // namespace

std::size_t DenseNetwork::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) total += layer.parameter_count();
    return total;
}

Eigen::MatrixXd DenseNetwork::forward(const Eigen::MatrixXd& x) const {
    check_input(*this, x);
    Eigen::MatrixXd a = x;
    for (const auto& layer : layers) {
        Eigen::MatrixXd z = layer.W * a;
        z.colwise() += layer.b;
        activate(z, layer.act);
        a = std::move(z);
    }
    return a;
}

Eigen::VectorXd DenseNetwork::forward_one(const Eigen::VectorXd& x) const {
    return forward(Eigen::MatrixXd(x)).col(0);
}

DenseNetwork build_network(const std::vector<int>& widths, const std::vector<Activation>& acts) {
    if (widths.size() < 2 || acts.size() != widths.size() - 1)
        throw DimensionError("layer widths and activations do not chain");
    DenseNetwork net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] < 1 || widths[i + 1] < 1) throw DimensionError("layer width must be positive");
        DenseLayer layer;
        layer.W = Eigen::MatrixXd::Zero(widths[i + 1], widths[i]);
        layer.b = Eigen::VectorXd::Zero(widths[i + 1]);
        layer.act = acts[i];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

constexpr double kReluBiasInit = 0.5;

const std::vector<Activation> kPowerNetActivations = {Activation::Elu, Activation::Elu, Activation::Sigmoid,
                                                      Activation::Sigmoid, Activation::Relu};

}  // namespace

DenseNetwork build_centralized(int K, int L) {
    if (K < 1 || L < 1) throw ConfigError("K and L must be at least 1");
    return build_network({K * L, 128, 512, 256, 128, K * L}, kPowerNetActivations);
}

DenseNetwork build_decentralized(int K) {
    if (K < 1) throw ConfigError("K must be at least 1");
    return build_network({K, 16, 64, 32, 16, K}, kPowerNetActivations);
}

void initialize(DenseNetwork& net, std::uint64_t seed) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& layer = net.layers[i];
        Rng rng(derive_seed(seed, i, StreamTag::WeightInit));
        const double limit = std::sqrt(6.0 / (layer.in() + layer.out()));
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = rng.uniform(-limit, limit);
        // a relu unit that starts negative on every input never recovers
        layer.b.setConstant(layer.act == Activation::Relu ? kReluBiasInit : 0.0);
    }
}

Eigen::VectorXd flatten(const DenseNetwork& net) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::Index off = 0;
    for (const auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
            out.segment(off, layer.W.cols()) = layer.W.row(r).transpose();
            off += layer.W.cols();
        }
        out.segment(off, layer.b.size()) = layer.b;
        off += layer.b.size();
    }
    return out;
}

void unflatten(DenseNetwork& net, const Eigen::VectorXd& params) {
    if (static_cast<std::size_t>(params.size()) != net.parameter_count())
        throw DimensionError("parameter vector does not match the network");
    Eigen::Index off = 0;
    for (auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
            layer.W.row(r) = params.segment(off, layer.W.cols()).transpose();
            off += layer.W.cols();
        }
        layer.b = params.segment(off, layer.b.size());
        off += layer.b.size();
    }
}

Eigen::VectorXd Gradients::flatten() const {
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < dW.size(); ++i) total += dW[i].size() + db[i].size();
    Eigen::VectorXd out(total);
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < dW.size(); ++i) {
        for (Eigen::Index r = 0; r < dW[i].rows(); ++r) {
            out.segment(off, dW[i].cols()) = dW[i].row(r).transpose();
            off += dW[i].cols();
        }
        out.segment(off, db[i].size()) = db[i];
        off += db[i].size();
    }
    return out;
}

double loss(const DenseNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind) {
    return batch_loss(net.forward(x), y, kind);
}

Gradients backward(const DenseNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                   LossKind kind) {
    check_input(net, x);
    if (x.cols() == 0) throw DimensionError("empty batch");
    const std::size_t n_layers = net.layers.size();
    std::vector<Eigen::MatrixXd> zs(n_layers), as(n_layers + 1);
    as[0] = x;
    for (std::size_t i = 0; i < n_layers; ++i) {
        const auto& layer = net.layers[i];
        zs[i] = layer.W * as[i];
        zs[i].colwise() += layer.b;
        as[i + 1] = zs[i];
        activate(as[i + 1], layer.act);
    }

    Gradients g;
    g.dW.resize(n_layers);
    g.db.resize(n_layers);
    g.loss = batch_loss(as[n_layers], y, kind);
    Eigen::MatrixXd delta = loss_gradient(as[n_layers], y, kind);
    for (std::size_t i = n_layers; i-- > 0;) {
        const auto& layer = net.layers[i];
        delta.array() *= activation_derivative(zs[i], as[i + 1], layer.act).array();
        g.dW[i].noalias() = delta * as[i].transpose();
        g.db[i] = delta.rowwise().sum();
        if (i > 0) delta = layer.W.transpose() * delta;
    }
    return g;
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
}

AdamState::AdamState(const DenseNetwork& net) {
    for (const auto& layer : net.layers) {
        mW.push_back(Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
        vW.push_back(Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
        mb.push_back(Eigen::VectorXd::Zero(layer.b.size()));
        vb.push_back(Eigen::VectorXd::Zero(layer.b.size()));
    }
}

void adam_step(DenseNetwork& net, const Gradients& grads, AdamState& state, const TrainConfig& config) {
    ++state.step;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = config.learning_rate;
    const double eps = config.adam_epsilon;
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        update(net.layers[i].W, grads.dW[i], state.mW[i], state.vW[i]);
        update(net.layers[i].b, grads.db[i], state.mb[i], state.vb[i]);
    }
}

TrainHistory train(DenseNetwork& net, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                   const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const TrainConfig& config) {
    config.validate();
    const Eigen::Index n = x_train.cols();
    if (n == 0) throw TrainingError("empty training set");
    if (y_train.cols() != n || y_train.rows() != net.output_dim())
        throw DimensionError("training targets do not match the network");
    const bool has_val = x_val.cols() > 0;

    TrainHistory history;
    AdamState state(net);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::MatrixXd xb, yb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), StreamTag::Shuffle));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
            xb.resize(x_train.rows(), count);
            yb.resize(y_train.rows(), count);
            for (Eigen::Index j = 0; j < count; ++j) {
                xb.col(j) = x_train.col(order[static_cast<std::size_t>(start + j)]);
                yb.col(j) = y_train.col(order[static_cast<std::size_t>(start + j)]);
            }
            const Gradients g = backward(net, xb, yb, config.loss);
            if (!std::isfinite(g.loss))
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch + 1));
            adam_step(net, g, state, config);
        }
        const double train_loss = loss(net, x_train, y_train, config.loss);
        if (!std::isfinite(train_loss))
            throw TrainingError("loss diverged at epoch " + std::to_string(epoch + 1));
        history.train_loss.push_back(train_loss);
        if (has_val) history.val_loss.push_back(loss(net, x_val, y_val, config.loss));
    }
    return history;
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& x) {
    if (x.cols() == 0) throw TrainingError("cannot fit a scaler on no samples");
    FeatureScaler s;
    s.mean = x.rowwise().mean();
    const Eigen::MatrixXd centred = x.colwise() - s.mean;
    s.scale = (centred.array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt();
    for (Eigen::Index i = 0; i < s.scale.size(); ++i)
        if (!(s.scale(i) > 0.0)) s.scale(i) = 1.0;
    return s;
}

Eigen::MatrixXd FeatureScaler::apply(const Eigen::MatrixXd& x) const {
    if (x.rows() != mean.size()) throw DimensionError("feature count does not match the scaler");
    return (x.colwise() - mean).array().colwise() / scale.array();
}

Eigen::MatrixXd Model::predict(const Eigen::MatrixXd& features) const {
    return net.forward(scaler.apply(features)) * target_scale;
}

namespace {

constexpr const char* kModelMagic = "cfmimo-model";
constexpr int kModelVersion = 1;

void write_values(std::ostream& out, const double* data, Eigen::Index count) {
    for (Eigen::Index i = 0; i < count; ++i) {
        if (i) out << ' ';
        out << format_double(data[i]);
    }
    out << '\n';
}

std::string next_token(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw IoError("model file truncated");
    return tok;
}

void expect_token(std::istream& in, const std::string& want) {
    const std::string tok = next_token(in);
    if (tok != want) throw IoError("model file: expected '" + want + "', found '" + tok + "'");
}

double read_double(std::istream& in) {
    const std::string tok = next_token(in);
    double v = 0.0;
    if (!parse_double(tok, v)) throw IoError("model file: malformed number '" + tok + "'");
    return v;
}

int read_int(std::istream& in) {
    const std::string tok = next_token(in);
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos == tok.size()) return v;
    } catch (const std::exception&) {
    }
    throw IoError("model file: malformed integer '" + tok + "'");
}

}  // namespace

void save_model(std::ostream& out, const Model& model) {
    out << kModelMagic << ' ' << kModelVersion << '\n';
    out << "target_scale " << format_double(model.target_scale) << '\n';
    out << "scaler " << model.scaler.mean.size() << '\n';
    write_values(out, model.scaler.mean.data(), model.scaler.mean.size());
    write_values(out, model.scaler.scale.data(), model.scaler.scale.size());
    out << "layers " << model.net.layers.size() << '\n';
    for (const auto& layer : model.net.layers) {
        out << "layer " << layer.out() << ' ' << layer.in() << ' ' << to_string(layer.act) << '\n';
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = layer.W;
        for (Eigen::Index r = 0; r < w.rows(); ++r) write_values(out, w.row(r).data(), w.cols());
        write_values(out, layer.b.data(), layer.b.size());
    }
    if (!out) throw IoError("failed to write model");
}

Model load_model(std::istream& in) {
    expect_token(in, kModelMagic);
    if (read_int(in) != kModelVersion) throw IoError("unsupported model version");
    Model m;
    expect_token(in, "target_scale");
    m.target_scale = read_double(in);
    expect_token(in, "scaler");
    const int n = read_int(in);
    if (n < 0) throw IoError("model file: negative scaler size");
    m.scaler.mean.resize(n);
    m.scaler.scale.resize(n);
    for (int i = 0; i < n; ++i) m.scaler.mean(i) = read_double(in);
    for (int i = 0; i < n; ++i) m.scaler.scale(i) = read_double(in);
    expect_token(in, "layers");
    const int count = read_int(in);
    for (int li = 0; li < count; ++li) {
        expect_token(in, "layer");
        const int out_dim = read_int(in);
        const int in_dim = read_int(in);
        if (out_dim < 1 || in_dim < 1) throw IoError("model file: bad layer shape");
        DenseLayer layer;
        try {
            layer.act = parse_activation(next_token(in));
        } catch (const ConfigError& e) {
            throw IoError(std::string("model file: ") + e.what());
        }
        layer.W.resize(out_dim, in_dim);
        for (int r = 0; r < out_dim; ++r)
            for (int c = 0; c < in_dim; ++c) layer.W(r, c) = read_double(in);
        layer.b.resize(out_dim);
        for (int r = 0; r < out_dim; ++r) layer.b(r) = read_double(in);
        if (!m.net.layers.empty() && m.net.layers.back().out() != in_dim)
            throw IoError("model file: layer dimensions do not chain");
        m.net.layers.push_back(std::move(layer));
    }
    if (m.net.layers.empty() || m.net.input_dim() != n)
        throw IoError("model file: scaler does not match the network input");
    return m;
}

void save_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    save_model(out, model);
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model '" + path.string() + "'");
    return load_model(in);
}

PowerAllocation project_powers(const Eigen::MatrixXd& gamma, double p_max) {
    PowerAllocation out{gamma};
    for (Eigen::Index l = 0; l < gamma.cols(); ++l) {
        const double power = gamma.col(l).squaredNorm();
        if (power > p_max) out.gamma.col(l) *= std::sqrt(p_max / power);
    }
    return out;
}

}  // namespace cfmimo
