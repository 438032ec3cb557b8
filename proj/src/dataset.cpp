#include "cfmimo/dataset.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/format.hpp"
#include "cfmimo/log.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/rng.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <system_error>

namespace cfmimo {

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t sample_id) {
    return derive_seed(master_seed, sample_id, StreamTag::Sample);
}

std::uint64_t ue_drop_seed(std::uint64_t seed) { return derive_seed(seed, 0, StreamTag::UeDrop); }

std::uint64_t coefficient_seed(std::uint64_t seed) { return derive_seed(seed, 0, StreamTag::Coefficients); }

SampleInstance rebuild_instance(const SystemConfig& config, PrecodingScheme scheme, std::uint64_t seed) {
    SampleInstance inst{make_realization(config, ue_drop_seed(seed)), {}};
    inst.coeffs = estimate_coefficients(inst.realization, scheme, config, coefficient_seed(seed));
    return inst;
}

DatasetRecord label_sample(const SystemConfig& config, PrecodingScheme scheme, std::uint64_t sample_id,
                           MaxMinSolution* solution) {
    DatasetRecord rec;
    rec.sample_id = sample_id;
    rec.seed = sample_seed(config.master_seed, sample_id);
    const SampleInstance inst = rebuild_instance(config, scheme, rec.seed);
    rec.beta_db = inst.realization.beta.unaryExpr([](double b) { return 10.0 * std::log10(b); });
    MaxMinSolution sol = bisection_maxmin(inst.coeffs, config, inst.realization.dcc);
    rec.status = sol.status;
    rec.s_star = sol.s_star;
    rec.gamma_star = sol.gamma_star.gamma;
    rec.iterations = sol.iterations;
    rec.max_residual = sol.max_residual;
    if (rec.status == MaxMinStatus::Converged &&
        !is_feasible(sol.gamma_star, inst.realization.dcc, config.P_dl_max, 1e-9))
        rec.status = MaxMinStatus::Infeasible;
    if (solution) *solution = std::move(sol);
    return rec;
}

Dataset generate_dataset(const SystemConfig& config, std::size_t n_samples, PrecodingScheme scheme,
                         GenerationStats* stats) {
    config.validate();
    if (n_samples < 1) throw ConfigError("at least one sample is required");
    std::vector<DatasetRecord> all(n_samples);
    std::atomic<std::size_t> done{0};
    parallel_for(n_samples, config.threads, [&](std::size_t i) {
        all[i] = label_sample(config, scheme, i);
        const std::size_t d = ++done;
        if (d % 100 == 0 || d == n_samples)
            log_info("labeled " + std::to_string(d) + "/" + std::to_string(n_samples) + " samples");
    });

    Dataset out;
    out.K = config.K;
    out.L = config.L;
    out.scheme = scheme;
    out.master_seed = config.master_seed;
    out.mc_realizations = config.mc_realizations;
    GenerationStats st;
    st.requested = n_samples;
    for (auto& rec : all) {
        if (rec.status == MaxMinStatus::Converged) {
            out.records.push_back(std::move(rec));
            ++st.converged;
        } else if (rec.status == MaxMinStatus::Infeasible) {
            ++st.audit_failures;
        } else {
            ++st.solver_failures;
        }
    }
    const std::size_t excluded = st.solver_failures + st.audit_failures;
    if (excluded > 0)
        log_warning("excluded " + std::to_string(excluded) + " of " + std::to_string(n_samples) + " samples (" +
                    std::to_string(st.solver_failures) + " solver failures, " +
                    std::to_string(st.audit_failures) + " failed the feasibility audit)");
    if (static_cast<double>(st.solver_failures) > 0.01 * static_cast<double>(n_samples))
        log_warning("solver failure rate exceeds 1%");
    if (stats) *stats = st;
    return out;
}

namespace {

constexpr const char* kDatasetMagic = "cfmimo-dataset";

MaxMinStatus parse_status(const std::string& s) {
    if (s == "converged") return MaxMinStatus::Converged;
    if (s == "infeasible") return MaxMinStatus::Infeasible;
    if (s == "solver_failure") return MaxMinStatus::SolverFailure;
    throw IoError("unknown solver status '" + s + "'");
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw IoError(std::string("malformed ") + what + " '" + s + "'");
    return v;
}

double parse_number(const std::string& s, const char* what) {
    double v = 0.0;
    if (!parse_double(s, v)) throw IoError(std::string("malformed ") + what + " '" + s + "'");
    return v;
}

std::string header_line(int K, int L) {
    std::string h = "sample_id,seed,s_star,status";
    for (int i = 0; i < K * L; ++i) h += ",beta_db_" + std::to_string(i);
    for (int i = 0; i < K * L; ++i) h += ",gamma_star_" + std::to_string(i);
    h += ",iterations,max_residual";
    return h;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
    out << "# " << kDatasetMagic << " v1 K=" << data.K << " L=" << data.L << " scheme=" << to_string(data.scheme)
        << " master_seed=" << data.master_seed << " mc_realizations=" << data.mc_realizations << '\n';
    out << header_line(data.K, data.L) << '\n';
    for (const auto& r : data.records) {
        if (r.beta_db.rows() != data.K || r.beta_db.cols() != data.L || r.gamma_star.rows() != data.K ||
            r.gamma_star.cols() != data.L)
            throw DimensionError("record " + std::to_string(r.sample_id) + " has the wrong shape");
        out << r.sample_id << ',' << r.seed << ',' << format_double(r.s_star) << ',' << to_string(r.status);
        for (int k = 0; k < data.K; ++k)
            for (int l = 0; l < data.L; ++l) out << ',' << format_double(r.beta_db(k, l));
        for (int k = 0; k < data.K; ++k)
            for (int l = 0; l < data.L; ++l) out << ',' << format_double(r.gamma_star(k, l));
        out << ',' << r.iterations << ',' << format_double(r.max_residual) << '\n';
    }
    if (!out) throw IoError("failed to write dataset");
}

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(std::string("# ") + kDatasetMagic + " v1", 0) != 0)
        throw IoError("not a dataset file (missing metadata line)");
    Dataset d;
    std::optional<int> K, L;
    {
        std::istringstream meta(line.substr(2));
        std::string tok;
        while (meta >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = tok.substr(0, eq);
            const std::string val = tok.substr(eq + 1);
            if (key == "K") K = static_cast<int>(parse_u64(val, "K"));
            else if (key == "L") L = static_cast<int>(parse_u64(val, "L"));
            else if (key == "scheme") {
                try {
                    d.scheme = parse_scheme(val);
                } catch (const ConfigError& e) {
                    throw IoError(e.what());
                }
            } else if (key == "master_seed") d.master_seed = parse_u64(val, "master_seed");
            else if (key == "mc_realizations") d.mc_realizations = static_cast<int>(parse_u64(val, "mc_realizations"));
        }
    }
    if (!K || !L || *K < 1 || *L < 1) throw IoError("dataset metadata lacks K or L");
    d.K = *K;
    d.L = *L;
    if (!std::getline(in, line) || line != header_line(d.K, d.L)) throw IoError("dataset header does not match K and L");
    const std::size_t kl = static_cast<std::size_t>(d.K) * d.L;
    const std::size_t fields = 4 + 2 * kl + 2;
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_commas(line);
        if (f.size() != fields)
            throw IoError("dataset line " + std::to_string(lineno) + ": expected " + std::to_string(fields) +
                          " fields, found " + std::to_string(f.size()));
        DatasetRecord r;
        r.sample_id = parse_u64(f[0], "sample_id");
        r.seed = parse_u64(f[1], "seed");
        r.s_star = parse_number(f[2], "s_star");
        r.status = parse_status(f[3]);
        r.beta_db.resize(d.K, d.L);
        r.gamma_star.resize(d.K, d.L);
        for (std::size_t i = 0; i < kl; ++i) {
            r.beta_db(static_cast<Eigen::Index>(i) / d.L, static_cast<Eigen::Index>(i) % d.L) =
                parse_number(f[4 + i], "beta_db");
            r.gamma_star(static_cast<Eigen::Index>(i) / d.L, static_cast<Eigen::Index>(i) % d.L) =
                parse_number(f[4 + kl + i], "gamma_star");
        }
        r.iterations = static_cast<int>(parse_u64(f[4 + 2 * kl], "iterations"));
        r.max_residual = parse_number(f[5 + 2 * kl], "max_residual");
        d.records.push_back(std::move(r));
    }
    return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_dataset(out, data);
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
    return read_dataset(in);
}

DatasetSplit split_dataset(const Dataset& data, std::size_t test_count, double val_fraction, std::uint64_t seed) {
    const std::size_t n = data.records.size();
    if (test_count + 1 > n)
        throw ConfigError("test_count must leave at least one sample (" + std::to_string(n) + " available)");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0, StreamTag::Split));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    const std::size_t rest = n - test_count;
    const auto val_count = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rest)));
    // 0 = train, 1 = val, 2 = test
    std::vector<int> part(n, 0);
    for (std::size_t i = 0; i < test_count; ++i) part[perm[i]] = 2;
    for (std::size_t i = 0; i < val_count; ++i) part[perm[test_count + i]] = 1;

    DatasetSplit out;
    for (Dataset* d : {&out.train, &out.val, &out.test}) {
        d->K = data.K;
        d->L = data.L;
        d->scheme = data.scheme;
        d->master_seed = data.master_seed;
        d->mc_realizations = data.mc_realizations;
    }
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& target = part[i] == 0 ? out.train : part[i] == 1 ? out.val : out.test;
        target.records.push_back(data.records[i]);
    }
    return out;
}

}  // namespace cfmimo
