#include "doctest.h"

#include "cfmimo/errors.hpp"
#include "cfmimo/neural.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace cfmimo;

TEST_CASE("parameter counts") {
    const auto c = build_centralized(5, 9);
    CHECK(c.parameter_count() == 241965);
    CHECK(c.input_dim() == 45);
    CHECK(c.output_dim() == 45);
    const std::size_t expect_c[] = {5888, 66048, 131328, 32896, 5805};
    for (std::size_t i = 0; i < 5; ++i) CHECK(c.layers[i].parameter_count() == expect_c[i]);

    const auto d = build_decentralized(5);
    CHECK(d.parameter_count() == 3877);
    CHECK(d.output_dim() == 5);
    const std::size_t expect_d[] = {96, 1088, 2080, 528, 85};
    for (std::size_t i = 0; i < 5; ++i) CHECK(d.layers[i].parameter_count() == expect_d[i]);

    auto formula = [](const std::vector<int>& w) {
        std::size_t total = 0;
        for (std::size_t i = 0; i + 1 < w.size(); ++i) total += static_cast<std::size_t>(w[i + 1]) * (w[i] + 1);
        return total;
    };
    CHECK(build_centralized(1, 1).parameter_count() == formula({1, 128, 512, 256, 128, 1}));
    CHECK(build_centralized(1, 1).parameter_count() == 230657);
    CHECK(build_decentralized(2).parameter_count() == 3778);

    const Activation acts[] = {Activation::Elu, Activation::Elu, Activation::Sigmoid, Activation::Sigmoid,
                               Activation::Relu};
    for (std::size_t i = 0; i < 5; ++i) CHECK(c.layers[i].act == acts[i]);
    CHECK_THROWS_AS(build_centralized(0, 3), ConfigError);
    CHECK_THROWS_AS(build_network({3, 4}, {}), DimensionError);
}

TEST_CASE("forward pass") {
    const auto zero = build_decentralized(3);
    CHECK(zero.forward_one(Eigen::VectorXd::Ones(3)).norm() == 0.0);

    auto id = build_network({2, 2}, {Activation::Relu});
    id.layers[0].W.setIdentity();
    CHECK(id.forward_one(Eigen::Vector2d(-1.0, 2.0)) == Eigen::Vector2d(0.0, 2.0));

    auto elu = build_network({1, 1}, {Activation::Elu});
    elu.layers[0].W(0, 0) = 1.0;
    CHECK(elu.forward_one(Eigen::VectorXd::Constant(1, 1.0))(0) == 1.0);
    CHECK(elu.forward_one(Eigen::VectorXd::Constant(1, -1e3))(0) == doctest::Approx(-1.0));

    auto sig = build_network({1, 1}, {Activation::Sigmoid});
    CHECK(sig.forward_one(Eigen::VectorXd::Zero(1))(0) == 0.5);

    CHECK_THROWS_AS(zero.forward_one(Eigen::VectorXd::Ones(4)), DimensionError);
}

TEST_CASE("elu derivative is continuous at zero") {
    auto net = build_network({1, 1}, {Activation::Elu});
    net.layers[0].W(0, 0) = 1.0;
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(1, 1, 5.0);
    for (double x0 : {0.0, -1e-9}) {
        const auto g = backward(net, Eigen::MatrixXd::Constant(1, 1, x0), y, LossKind::Mse);
        // dL/db = 2 (elu(x0) - 5) elu'(x0), with elu'(x0) -> 1 from both sides
        CHECK(g.db[0](0) == doctest::Approx(2.0 * (std::expm1(std::min(x0, 0.0)) - 5.0)).epsilon(1e-8));
    }
}

TEST_CASE("gradients match central finite differences") {
    for (auto kind : {LossKind::Mse, LossKind::CrossEntropy}) {
        const auto dec = testing::check_gradients(build_decentralized(5), kind, 7, 11, 100000);
        CHECK(dec.checked == 3877);
        CHECK(dec.max_layer_rel_error < 1e-5);
        const auto cen = testing::check_gradients(build_centralized(5, 9), kind, 3, 12, 60);
        CHECK(cen.max_layer_rel_error < 1e-5);
    }
}

TEST_CASE("perfect prediction has zero gradient") {
    auto net = build_decentralized(3);
    initialize(net, 4);
    net.layers.back().b.array() += 1.0;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
    const Eigen::MatrixXd y = net.forward(x);
    const auto g = backward(net, x, y, LossKind::Mse);
    CHECK(g.loss == 0.0);
    CHECK(g.flatten().norm() == 0.0);
}

TEST_CASE("adam step") {
    auto net = build_decentralized(2);
    initialize(net, 5);
    const auto before = flatten(net);
    TrainConfig cfg;
    AdamState state(net);
    Gradients zero;
    for (const auto& l : net.layers) {
        zero.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
        zero.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    adam_step(net, zero, state, cfg);
    CHECK((flatten(net) - before).norm() == 0.0);

    Gradients constant = zero;
    for (auto& m : constant.dW) m.setConstant(-3.0);
    for (auto& v : constant.db) v.setConstant(0.25);
    AdamState fresh(net);
    const auto start = flatten(net);
    adam_step(net, constant, fresh, cfg);
    const Eigen::VectorXd delta = flatten(net) - start;
    CHECK(delta.cwiseAbs().maxCoeff() <= cfg.learning_rate * (1.0 + 1e-6));
    CHECK(delta.cwiseAbs().minCoeff() >= cfg.learning_rate * (1.0 - 1e-4));
}

TEST_CASE("training") {
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.epochs = 200;
    cfg.seed = 3;
    Rng rng(8);
    Eigen::MatrixXd x(3, 64);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(3, 64, 0.3);

    SUBCASE("constant target") {
        auto net = build_decentralized(3);
        initialize(net, 1);
        cfg.learning_rate = 1e-3;
        const auto h = train(net, x, y, x.leftCols(8), y.leftCols(8), cfg);
        CHECK(h.train_loss.back() < 1e-4);
        CHECK(h.val_loss.back() <= h.val_loss.front());
    }
    SUBCASE("zero learning rate freezes parameters") {
        auto net = build_decentralized(3);
        initialize(net, 1);
        const auto before = flatten(net);
        cfg.learning_rate = 0.0;
        cfg.epochs = 5;
        const auto h = train(net, x, y, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg);
        CHECK(flatten(net) == before);
        CHECK(h.train_loss.front() == h.train_loss.back());
        CHECK(h.val_loss.empty());
    }
    SUBCASE("single sample is memorized") {
        auto net = build_decentralized(3);
        initialize(net, 2);
        Eigen::MatrixXd one_y(3, 1);
        one_y << 0.2, 0.9, 0.5;
        cfg.epochs = 1000;
        const auto h = train(net, x.leftCols(1), one_y, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg);
        CHECK(h.train_loss.back() < 1e-8);
    }
    SUBCASE("identical seeds give identical weights") {
        auto a = build_decentralized(3);
        auto b = build_decentralized(3);
        initialize(a, 9);
        initialize(b, 9);
        cfg.epochs = 20;
        train(a, x, y * 2.0 - x.cwiseAbs() * 0.1, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg);
        train(b, x, y * 2.0 - x.cwiseAbs() * 0.1, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg);
        CHECK(flatten(a) == flatten(b));
    }
    SUBCASE("divergence is reported") {
        auto net = build_decentralized(3);
        initialize(net, 2);
        Eigen::MatrixXd bad = y;
        bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(train(net, x, bad, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg), TrainingError);
    }
    SUBCASE("invalid configuration") {
        auto net = build_decentralized(3);
        cfg.batch_size = 0;
        CHECK_THROWS_AS(train(net, x, y, Eigen::MatrixXd(), Eigen::MatrixXd(), cfg), ConfigError);
    }
}

TEST_CASE("model round trip is bit-exact") {
    Model m;
    m.net = build_decentralized(4);
    initialize(m.net, 77);
    for (auto& l : m.net.layers) l.b.setRandom();
    Eigen::MatrixXd feats = Eigen::MatrixXd::Random(4, 30) * 40.0;
    m.scaler = FeatureScaler::fit(feats);
    m.target_scale = std::sqrt(2.0);

    std::stringstream ss;
    save_model(ss, m);
    const std::string first = ss.str();
    const Model back = load_model(ss);
    CHECK(flatten(back.net) == flatten(m.net));
    CHECK(back.scaler.mean == m.scaler.mean);
    CHECK(back.scaler.scale == m.scaler.scale);
    CHECK(back.target_scale == m.target_scale);
    CHECK(back.predict(feats) == m.predict(feats));
    std::stringstream again;
    save_model(again, back);
    CHECK(again.str() == first);

    std::stringstream broken(first.substr(0, first.size() / 2));
    CHECK_THROWS_AS(load_model(broken), IoError);
}

TEST_CASE("feature scaler standardizes") {
    Eigen::MatrixXd x(2, 4);
    x << 1, 2, 3, 4, 5, 5, 5, 5;
    const auto s = FeatureScaler::fit(x);
    const auto z = s.apply(x);
    CHECK(z.row(0).mean() == doctest::Approx(0.0));
    CHECK(z.row(0).squaredNorm() / 4.0 == doctest::Approx(1.0));
    CHECK(z.row(1).norm() == 0.0);
}

TEST_CASE("project_powers") {
    Eigen::MatrixXd g(2, 2);
    g << 0.5, 2.0, 0.5, 0.0;
    const auto p = project_powers(g, 1.0);
    CHECK(p.gamma(0, 0) == 0.5);
    CHECK(p.gamma(1, 0) == 0.5);
    CHECK(p.gamma(0, 1) == 1.0);
    CHECK(project_powers(Eigen::MatrixXd::Zero(3, 2), 1.0).gamma.norm() == 0.0);
    Eigen::MatrixXd big = Eigen::MatrixXd::Random(5, 9).cwiseAbs() * 3.0;
    const auto q = project_powers(big, 1.0);
    CHECK((q.ap_power().array() <= 1.0 + 1e-12).all());
}
