#include "cfmimo/pipeline.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/format.hpp"
#include "cfmimo/log.hpp"
#include "cfmimo/maxmin.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/summation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <system_error>

namespace cfmimo {

namespace {

Eigen::Index count_of(const Dataset& data) { return static_cast<Eigen::Index>(data.records.size()); }

void check_shape(const Dataset& data, const DatasetRecord& r) {
    if (r.beta_db.rows() != data.K || r.beta_db.cols() != data.L || r.gamma_star.rows() != data.K ||
        r.gamma_star.cols() != data.L)
        throw DimensionError("record " + std::to_string(r.sample_id) + " does not match the dataset shape");
}

Eigen::MatrixXd flatten_ue_major(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd v(m.size(), 1);
    for (Eigen::Index k = 0; k < m.rows(); ++k)
        for (Eigen::Index l = 0; l < m.cols(); ++l) v(k * m.cols() + l, 0) = m(k, l);
    return v;
}

}  // namespace

Eigen::MatrixXd centralized_features(const Dataset& data) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.K) * data.L, count_of(data));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto& r = data.records[static_cast<std::size_t>(j)];
        check_shape(data, r);
        x.col(j) = flatten_ue_major(r.beta_db);
    }
    return x;
}

Eigen::MatrixXd centralized_targets(const Dataset& data, double p_max) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(data.K) * data.L, count_of(data));
    const double scale = 1.0 / std::sqrt(p_max);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const auto& r = data.records[static_cast<std::size_t>(j)];
        check_shape(data, r);
        y.col(j) = flatten_ue_major(r.gamma_star) * scale;
    }
    return y;
}

Eigen::MatrixXd local_features(const Dataset& data, int l) {
    if (l < 0 || l >= data.L) throw DimensionError("AP index out of range");
    Eigen::MatrixXd x(data.K, count_of(data));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto& r = data.records[static_cast<std::size_t>(j)];
        check_shape(data, r);
        x.col(j) = r.beta_db.col(l);
    }
    return x;
}

Eigen::MatrixXd local_targets(const Dataset& data, int l, double p_max) {
    if (l < 0 || l >= data.L) throw DimensionError("AP index out of range");
    Eigen::MatrixXd y(data.K, count_of(data));
    const double scale = 1.0 / std::sqrt(p_max);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const auto& r = data.records[static_cast<std::size_t>(j)];
        check_shape(data, r);
        y.col(j) = r.gamma_star.col(l) * scale;
    }
    return y;
}

namespace {

void check_pair(const Dataset& train, const Dataset& val) {
    if (train.records.empty()) throw TrainingError("training set is empty");
    if (!val.records.empty() && (val.K != train.K || val.L != train.L))
        throw DimensionError("validation set shape differs from the training set");
    if (!val.records.empty() && val.scheme != train.scheme)
        throw ConfigError("training and validation sets use different precoding schemes");
}

TrainedModel fit(DenseNetwork net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::MatrixXd& xv,
                 const Eigen::MatrixXd& yv, const TrainConfig& config, double p_max) {
    TrainedModel out;
    out.model.scaler = FeatureScaler::fit(x);
    out.model.target_scale = std::sqrt(p_max);
    initialize(net, config.seed);
    const Eigen::MatrixXd xs = out.model.scaler.apply(x);
    const Eigen::MatrixXd xvs = xv.cols() > 0 ? out.model.scaler.apply(xv) : Eigen::MatrixXd();
    out.history = train(net, xs, y, xvs, yv.cols() > 0 ? yv : Eigen::MatrixXd(), config);
    out.model.net = std::move(net);
    return out;
}

}  // namespace

TrainedModel train_centralized(const Dataset& train, const Dataset& val, const TrainConfig& config, double p_max) {
    check_pair(train, val);
    return fit(build_centralized(train.K, train.L), centralized_features(train), centralized_targets(train, p_max),
               centralized_features(val), centralized_targets(val, p_max), config, p_max);
}

std::vector<TrainedModel> train_decentralized(const Dataset& train, const Dataset& val, const TrainConfig& config,
                                              double p_max) {
    check_pair(train, val);
    std::vector<TrainedModel> out;
    for (int l = 0; l < train.L; ++l) {
        TrainConfig local = config;
        local.seed = derive_seed(config.seed, static_cast<std::uint64_t>(l), StreamTag::Instance);
        log_info("training AP " + std::to_string(l));
        out.push_back(fit(build_decentralized(train.K), local_features(train, l), local_targets(train, l, p_max),
                          val.records.empty() ? Eigen::MatrixXd() : local_features(val, l),
                          val.records.empty() ? Eigen::MatrixXd() : local_targets(val, l, p_max), local, p_max));
    }
    return out;
}

std::filesystem::path local_model_path(const std::filesystem::path& dir, int l) {
    return dir / ("ap_" + std::to_string(l) + ".model");
}

void write_loss_curve(std::ostream& out, const TrainHistory& history) {
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        out << e + 1 << ',' << format_double(history.train_loss[e]) << ',';
        if (e < history.val_loss.size()) out << format_double(history.val_loss[e]);
        out << '\n';
    }
    if (!out) throw IoError("failed to write loss curve");
}

void write_loss_curve(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_loss_curve(out, history);
}

namespace {

PowerAllocation mask_and_project(Eigen::MatrixXd gamma, const Dcc& dcc, double p_max) {
    for (Eigen::Index k = 0; k < gamma.rows(); ++k)
        for (Eigen::Index l = 0; l < gamma.cols(); ++l)
            if (!dcc.serves(static_cast<int>(k), static_cast<int>(l))) gamma(k, l) = 0.0;
    return project_powers(gamma.cwiseMax(0.0), p_max);
}

}  // namespace

PowerAllocation predict_centralized(const Model& model, const Eigen::MatrixXd& beta_db, const Dcc& dcc,
                                    double p_max) {
    const Eigen::Index K = beta_db.rows();
    const Eigen::Index L = beta_db.cols();
    if (model.net.input_dim() != K * L || model.net.output_dim() != K * L)
        throw DimensionError("centralized model expects " + std::to_string(model.net.input_dim()) +
                             " inputs, the network has " + std::to_string(K * L) + " links");
    const Eigen::MatrixXd out = model.predict(flatten_ue_major(beta_db));
    Eigen::MatrixXd gamma(K, L);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index l = 0; l < L; ++l) gamma(k, l) = out(k * L + l, 0);
    return mask_and_project(std::move(gamma), dcc, p_max);
}

PowerAllocation predict_decentralized(const std::vector<Model>& models, const Eigen::MatrixXd& beta_db,
                                      const Dcc& dcc, double p_max) {
    const Eigen::Index K = beta_db.rows();
    const Eigen::Index L = beta_db.cols();
    if (static_cast<Eigen::Index>(models.size()) != L)
        throw DimensionError("expected " + std::to_string(L) + " AP models, found " + std::to_string(models.size()));
    Eigen::MatrixXd gamma(K, L);
    for (Eigen::Index l = 0; l < L; ++l) {
        const Model& m = models[static_cast<std::size_t>(l)];
        if (m.net.input_dim() != K || m.net.output_dim() != K)
            throw DimensionError("AP model " + std::to_string(l) + " does not have " + std::to_string(K) +
                                 " inputs and outputs");
        gamma.col(l) = m.predict(Eigen::MatrixXd(beta_db.col(l))).col(0);
    }
    return mask_and_project(std::move(gamma), dcc, p_max);
}

const char* to_string(Policy policy) {
    switch (policy) {
        case Policy::Optimal: return "maxmin-optimal";
        case Policy::CentralizedDnn: return "centralized-dnn";
        case Policy::DecentralizedDnn: return "decentralized-dnn";
        case Policy::Heuristic: return "heuristic";
        case Policy::EqualSplit: return "equal-split";
    }
    return "unknown";
}

Policy parse_policy(const std::string& name) {
    for (Policy p : {Policy::Optimal, Policy::CentralizedDnn, Policy::DecentralizedDnn, Policy::Heuristic,
                     Policy::EqualSplit})
        if (name == to_string(p)) return p;
    throw IoError("unknown policy '" + name + "'");
}

namespace {

double order_statistic(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

SeSummary summarize(std::vector<double> values) {
    SeSummary s;
    if (values.empty()) {
        s.mean = s.median = s.p5 = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    std::sort(values.begin(), values.end());
    CompensatedSum sum;
    for (double v : values) sum.add(v);
    s.mean = sum.value() / static_cast<double>(values.size());
    s.median = order_statistic(values, 0.5);
    s.p5 = order_statistic(values, 0.05);
    return s;
}

const std::vector<double>& EvaluationReport::samples(Policy policy) const {
    for (std::size_t i = 0; i < policies.size(); ++i)
        if (policies[i] == policy) return se[i];
    throw ConfigError(std::string("policy '") + to_string(policy) + "' was not evaluated");
}

SeSummary EvaluationReport::summary(Policy policy) const { return summarize(samples(policy)); }

EvaluationReport evaluate_policies(const Dataset& test, const PolicyModels& models, const SystemConfig& config) {
    config.validate();
    if (test.K != config.K || test.L != config.L)
        throw DimensionError("test set is " + std::to_string(test.K) + "x" + std::to_string(test.L) +
                             ", the config describes " + std::to_string(config.K) + "x" + std::to_string(config.L));
    SystemConfig cfg = config;
    if (test.mc_realizations > 0 && test.mc_realizations != cfg.mc_realizations) {
        log_warning("using the dataset's mc_realizations=" + std::to_string(test.mc_realizations) +
                    " so that coefficients match the labels");
        cfg.mc_realizations = test.mc_realizations;
    }
    if (models.centralized && models.centralized->net.input_dim() != test.K * test.L)
        throw DimensionError("centralized model does not match the test set");
    if (models.decentralized && static_cast<int>(models.decentralized->size()) != test.L)
        throw DimensionError("number of AP models does not match L");

    EvaluationReport report;
    report.K = test.K;
    report.policies.push_back(Policy::Optimal);
    if (models.centralized) report.policies.push_back(Policy::CentralizedDnn);
    if (models.decentralized) report.policies.push_back(Policy::DecentralizedDnn);
    report.policies.push_back(Policy::Heuristic);
    report.policies.push_back(Policy::EqualSplit);

    const std::size_t n = test.records.size();
    const std::size_t P = report.policies.size();
    const auto K = static_cast<std::size_t>(test.K);
    report.se.assign(P, std::vector<double>(n * K, 0.0));
    const PilotAssignment pilots = assign_pilots(cfg.K, cfg.tau_p);

    parallel_for(n, cfg.threads, [&](std::size_t j) {
        const DatasetRecord& rec = test.records[j];
        check_shape(test, rec);
        const SampleInstance inst = rebuild_instance(cfg, test.scheme, rec.seed);
        const Dcc& dcc = inst.realization.dcc;
        for (std::size_t p = 0; p < P; ++p) {
            PowerAllocation alloc;
            switch (report.policies[p]) {
                case Policy::Optimal: alloc = project_powers(rec.gamma_star, cfg.P_dl_max); break;
                case Policy::CentralizedDnn:
                    alloc = predict_centralized(*models.centralized, rec.beta_db, dcc, cfg.P_dl_max);
                    break;
                case Policy::DecentralizedDnn:
                    alloc = predict_decentralized(*models.decentralized, rec.beta_db, dcc, cfg.P_dl_max);
                    break;
                case Policy::Heuristic:
                    alloc = heuristic_allocation(inst.realization,
                                                 estimator_statistics(inst.realization, pilots, cfg), cfg);
                    break;
                case Policy::EqualSplit: alloc = full_power_equal_split(dcc, cfg); break;
            }
            if (!is_feasible(alloc, dcc, cfg.P_dl_max, 1e-9))
                throw NumericalError(std::string("policy '") + to_string(report.policies[p]) +
                                     "' produced an infeasible allocation for sample " +
                                     std::to_string(rec.sample_id));
            const Eigen::VectorXd se = compute_se(compute_sinr(alloc, inst.coeffs), cfg);
            for (std::size_t k = 0; k < K; ++k) report.se[p][j * K + k] = se(static_cast<Eigen::Index>(k));
        }
    });
    for (const auto& rec : test.records) report.sample_ids.push_back(rec.sample_id);
    return report;
}

void emit_cdf(std::ostream& out, const EvaluationReport& report) {
    out << "policy,se_bits_per_hz,cdf\n";
    for (std::size_t p = 0; p < report.policies.size(); ++p) {
        std::vector<double> v = report.se[p];
        std::sort(v.begin(), v.end());
        const auto n = static_cast<double>(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            out << to_string(report.policies[p]) << ',' << format_double(v[i]) << ','
                << format_double(static_cast<double>(i + 1) / n) << '\n';
    }
    if (!out) throw IoError("failed to write CDF");
}

void emit_cdf(const std::filesystem::path& path, const EvaluationReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    emit_cdf(out, report);
}

void write_se_samples(std::ostream& out, const EvaluationReport& report) {
    out << "sample_id,ue";
    for (Policy p : report.policies) out << ',' << to_string(p);
    out << '\n';
    const auto K = static_cast<std::size_t>(report.K);
    for (std::size_t j = 0; j < report.sample_ids.size(); ++j)
        for (std::size_t k = 0; k < K; ++k) {
            out << report.sample_ids[j] << ',' << k;
            for (const auto& col : report.se) out << ',' << format_double(col[j * K + k]);
            out << '\n';
        }
    if (!out) throw IoError("failed to write SE samples");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::uint64_t parse_index(const std::string& s, std::size_t lineno) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw IoError("SE samples line " + std::to_string(lineno) + ": malformed index '" + s + "'");
    return v;
}

}  // namespace

EvaluationReport read_se_samples(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("SE samples file is empty");
    const auto header = split_fields(line);
    if (header.size() < 2 || header[0] != "sample_id" || header[1] != "ue")
        throw IoError("SE samples header must start with sample_id,ue");
    EvaluationReport r;
    for (std::size_t i = 2; i < header.size(); ++i) r.policies.push_back(parse_policy(header[i]));
    r.se.resize(r.policies.size());

    std::size_t lineno = 1;
    std::uint64_t expected_ue = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != header.size())
            throw IoError("SE samples line " + std::to_string(lineno) + ": wrong number of fields");
        const std::uint64_t id = parse_index(f[0], lineno);
        const std::uint64_t ue = parse_index(f[1], lineno);
        if (ue == 0) {
            // the first sample fixes K
            if (r.sample_ids.size() == 1) r.K = static_cast<int>(expected_ue);
            if (!r.sample_ids.empty() && expected_ue != static_cast<std::uint64_t>(r.K))
                throw IoError("SE samples line " + std::to_string(lineno) + ": previous sample is incomplete");
            r.sample_ids.push_back(id);
            expected_ue = 0;
        } else if (r.sample_ids.empty() || id != r.sample_ids.back() || ue != expected_ue) {
            throw IoError("SE samples line " + std::to_string(lineno) + ": rows out of order");
        }
        if (r.K > 0 && ue >= static_cast<std::uint64_t>(r.K))
            throw IoError("SE samples line " + std::to_string(lineno) + ": UE index exceeds K");
        ++expected_ue;
        for (std::size_t p = 0; p < r.policies.size(); ++p) {
            double v = 0.0;
            if (!parse_double(f[2 + p], v))
                throw IoError("SE samples line " + std::to_string(lineno) + ": malformed value '" + f[2 + p] + "'");
            r.se[p].push_back(v);
        }
    }
    if (r.sample_ids.size() == 1) r.K = static_cast<int>(expected_ue);
    if (!r.sample_ids.empty() && expected_ue != static_cast<std::uint64_t>(r.K))
        throw IoError("SE samples file ends with an incomplete sample");
    return r;
}

void write_se_samples(const std::filesystem::path& path, const EvaluationReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_se_samples(out, report);
}

EvaluationReport read_se_samples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open SE samples '" + path.string() + "'");
    return read_se_samples(in);
}

void write_summary(std::ostream& out, const EvaluationReport& report) {
    out << "policy,mean,median,p5\n";
    for (Policy p : report.policies) {
        const SeSummary s = report.summary(p);
        out << to_string(p) << ',' << format_double(s.mean) << ',' << format_double(s.median) << ','
            << format_double(s.p5) << '\n';
    }
}

}  // namespace cfmimo
