#include "CLI11.hpp"

#include "cfmimo/config.hpp"
#include "cfmimo/dataset.hpp"
#include "cfmimo/errors.hpp"
#include "cfmimo/format.hpp"
#include "cfmimo/log.hpp"
#include "cfmimo/maxmin.hpp"
#include "cfmimo/neural.hpp"
#include "cfmimo/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace cfmimo;

namespace {

// Raised for problems that are the caller's fault but only detectable after
// parsing, such as a config path that does not exist.
struct UsageError {
    std::string message;
};

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string scheme = "mr";
};

SystemConfig load(const Common& c) {
    SystemConfig cfg;
    if (!c.config_path.empty()) {
        if (!fs::exists(c.config_path)) throw UsageError{"config file '" + c.config_path + "' does not exist"};
        cfg = load_config(c.config_path);
    }
    if (c.seed) cfg.master_seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_scheme) {
    cmd->add_option("--config", c.config_path, "key = value configuration file");
    cmd->add_option("--seed", c.seed, "master seed override");
    cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
    if (with_scheme)
        cmd->add_option("--scheme", c.scheme, "precoding scheme")->check(CLI::IsMember({"mr", "rzf"}));
}

void add_training(CLI::App* cmd, TrainConfig& t, std::string& loss) {
    cmd->add_option("--epochs", t.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", t.batch_size, "mini-batch size")->capture_default_str();
    cmd->add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--loss", loss, "mse or cross_entropy")->check(CLI::IsMember({"mse", "cross_entropy"}));
    cmd->add_option("--train-seed", t.seed, "initialization and shuffling seed")->capture_default_str();
}

Dataset read_optional(const std::string& path) { return path.empty() ? Dataset{} : read_dataset(fs::path(path)); }

void print_vector(const char* name, const Eigen::VectorXd& v) {
    std::cout << name;
    for (Eigen::Index i = 0; i < v.size(); ++i) std::cout << (i ? "," : " ") << format_double(v(i));
    std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cell-free massive MIMO max-min power control and learned allocation"};
    app.require_subcommand(1);
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "progress messages on stderr");
    app.add_flag("-q,--quiet", quiet, "suppress warnings");

    Common common;

    std::size_t samples = 1000;
    std::string out_path;
    auto* gen = app.add_subcommand("generate", "label samples with the max-min solver");
    add_common(gen, common, true);
    gen->add_option("--samples", samples, "number of samples")->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--out", out_path, "dataset CSV")->required();

    std::string in_path;
    std::size_t test_count = 100;
    double val_fraction = 0.1;
    std::uint64_t split_seed = 1;
    auto* split = app.add_subcommand("split", "hold out a test set, then split train/validation");
    split->add_option("--in", in_path, "dataset CSV")->required();
    split->add_option("--out", out_path, "output directory for train.csv, val.csv, test.csv")->required();
    split->add_option("--test-count", test_count, "held-out samples")->capture_default_str();
    split->add_option("--val-fraction", val_fraction, "validation share of the remainder")->capture_default_str();
    split->add_option("--seed", split_seed, "permutation seed")->capture_default_str();

    std::uint64_t sample_id = 0;
    auto* solve = app.add_subcommand("solve-one", "solve the max-min problem for one sample");
    add_common(solve, common, true);
    solve->add_option("--sample", sample_id, "sample index under the master seed")->capture_default_str();

    TrainConfig train_cfg;
    std::string loss = "mse";
    std::string train_path, val_path;
    double p_max = 0.0;
    auto* tc = app.add_subcommand("train-central", "train the centralized network");
    auto* tl = app.add_subcommand("train-local", "train one network per AP");
    for (auto* cmd : {tc, tl}) {
        cmd->add_option("--train", train_path, "training CSV")->required();
        cmd->add_option("--val", val_path, "validation CSV");
        cmd->add_option("--config", common.config_path, "configuration file (for the power budget)");
        add_training(cmd, train_cfg, loss);
    }
    tc->add_option("--out", out_path, "model file; the loss curve goes to <out>.loss.csv")->required();
    tl->add_option("--out", out_path, "model directory")->required();

    std::string central_path, local_dir, cdf_path;
    auto* eval = app.add_subcommand("evaluate", "evaluate every policy on a test set");
    add_common(eval, common, false);
    eval->add_option("--test", in_path, "test CSV")->required();
    eval->add_option("--central", central_path, "centralized model file");
    eval->add_option("--local", local_dir, "directory of per-AP models");
    eval->add_option("--out", out_path, "per-UE SE samples CSV")->required();
    eval->add_option("--cdf", cdf_path, "also write the CDF CSV");

    auto* report = app.add_subcommand("report", "CDF and summary from SE samples");
    report->add_option("--in", in_path, "per-UE SE samples CSV")->required();
    report->add_option("--out", out_path, "CDF CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n' << app.help();
        return 2;
    }
    log_level() = quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warning;

    try {
        if (*gen) {
            const SystemConfig cfg = load(common);
            GenerationStats stats;
            const Dataset d = generate_dataset(cfg, samples, parse_scheme(common.scheme), &stats);
            write_dataset(fs::path(out_path), d);
            std::cout << "requested " << stats.requested << " converged " << stats.converged << " solver_failures "
                      << stats.solver_failures << " audit_failures " << stats.audit_failures << '\n';
        } else if (*split) {
            const auto parts = split_dataset(read_dataset(fs::path(in_path)), test_count, val_fraction, split_seed);
            fs::create_directories(out_path);
            write_dataset(fs::path(out_path) / "train.csv", parts.train);
            write_dataset(fs::path(out_path) / "val.csv", parts.val);
            write_dataset(fs::path(out_path) / "test.csv", parts.test);
            std::cout << "train " << parts.train.records.size() << " val " << parts.val.records.size() << " test "
                      << parts.test.records.size() << '\n';
        } else if (*solve) {
            const SystemConfig cfg = load(common);
            MaxMinSolution sol;
            const DatasetRecord rec = label_sample(cfg, parse_scheme(common.scheme), sample_id, &sol);
            std::cout << "status " << to_string(rec.status) << '\n';
            std::cout << "s_star " << format_double(sol.s_star) << '\n';
            print_vector("sinr", sol.per_ue_sinr);
            print_vector("se", compute_se(sol.per_ue_sinr, cfg));
            print_vector("ap_power", sol.gamma_star.ap_power());
            std::cout << "iterations " << sol.iterations << '\n';
        } else if (*tc || *tl) {
            train_cfg.loss = parse_loss(loss);
            SystemConfig cfg;
            if (!common.config_path.empty()) cfg = load(common);
            p_max = cfg.P_dl_max;
            const Dataset train = read_dataset(fs::path(train_path));
            const Dataset val = read_optional(val_path);
            if (*tc) {
                const TrainedModel m = train_centralized(train, val, train_cfg, p_max);
                save_model(fs::path(out_path), m.model);
                write_loss_curve(fs::path(out_path + ".loss.csv"), m.history);
            } else {
                const auto models = train_decentralized(train, val, train_cfg, p_max);
                fs::create_directories(out_path);
                for (std::size_t l = 0; l < models.size(); ++l) {
                    const fs::path p = local_model_path(out_path, static_cast<int>(l));
                    save_model(p, models[l].model);
                    write_loss_curve(fs::path(p.string() + ".loss.csv"), models[l].history);
                }
            }
        } else if (*eval) {
            const SystemConfig cfg = load(common);
            const Dataset test = read_dataset(fs::path(in_path));
            std::optional<Model> central;
            std::optional<std::vector<Model>> local;
            if (!central_path.empty()) central = load_model(fs::path(central_path));
            if (!local_dir.empty()) {
                local.emplace();
                for (int l = 0; l < test.L; ++l) local->push_back(load_model(local_model_path(local_dir, l)));
            }
            PolicyModels models{central ? &*central : nullptr, local ? &*local : nullptr};
            const EvaluationReport r = evaluate_policies(test, models, cfg);
            write_se_samples(fs::path(out_path), r);
            if (!cdf_path.empty()) emit_cdf(fs::path(cdf_path), r);
            write_summary(std::cout, r);
        } else if (*report) {
            const EvaluationReport r = read_se_samples(fs::path(in_path));
            emit_cdf(fs::path(out_path), r);
            write_summary(std::cout, r);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << e.message << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
