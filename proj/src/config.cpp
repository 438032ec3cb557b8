#include "cfmimo/config.hpp"

#include "cfmimo/errors.hpp"
#include "cfmimo/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cfmimo {

const char* to_string(PrecodingScheme scheme) {
    return scheme == PrecodingScheme::MR ? "mr" : "rzf";
}

PrecodingScheme parse_scheme(const std::string& text) {
    if (text == "mr" || text == "MR") return PrecodingScheme::MR;
    if (text == "rzf" || text == "RZF") return PrecodingScheme::RZF;
    throw ConfigError("unknown precoding scheme '" + text + "' (expected mr or rzf)");
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

void SystemConfig::validate() const {
    if (L < 1 || K < 1 || N < 1) throw ConfigError("L, K and N must be at least 1");
    if (area_side <= 0.0) throw ConfigError("area_side must be positive");
    if (ap_height < 0.0) throw ConfigError("ap_height must be nonnegative");
    if (tau_c < 1 || tau_p < 1 || tau_d < 0) throw ConfigError("invalid coherence block split");
    if (tau_p + tau_d > tau_c) throw ConfigError("tau_p + tau_d exceeds tau_c");
    if (require_orthogonal_pilots && tau_p < K)
        throw ConfigError("orthogonal pilots requested but tau_p < K");
    if (!(p_ul > 0.0) || !(P_dl_max > 0.0) || !(noise_power > 0.0))
        throw ConfigError("powers and noise power must be strictly positive");
    if (mc_realizations < 1) throw ConfigError("mc_realizations must be positive");
    if (correlation_coeff < 0.0 || correlation_coeff >= 1.0)
        throw ConfigError("correlation_coeff must lie in [0, 1)");
    if (dcc_policy == DccPolicy::TopQ && (dcc_top_q < 1 || dcc_top_q > L))
        throw ConfigError("dcc_top_q must lie in [1, L]");
    if (!ap_positions.empty() && static_cast<int>(ap_positions.size()) != L)
        throw ConfigError("ap_positions lists a different number of APs than L");
    if (threads < 1) throw ConfigError("threads must be positive");
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("invalid value for '" + key + "': '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("invalid boolean for '" + key + "': '" + value + "'");
}

// "x y; x y; ..."
std::vector<Point3> parse_positions(const std::string& key, const std::string& value) {
    std::vector<Point3> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        std::istringstream is(item);
        Point3 p;
        if (!(is >> p.x >> p.y)) throw ConfigError("invalid position in '" + key + "': '" + item + "'");
        out.push_back(p);
    }
    return out;
}

}  // namespace

SystemConfig parse_config(std::istream& in) {
    SystemConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"L", [&](auto& k, auto& v) { c.L = parse_number<int>(k, v); }},
        {"K", [&](auto& k, auto& v) { c.K = parse_number<int>(k, v); }},
        {"N", [&](auto& k, auto& v) { c.N = parse_number<int>(k, v); }},
        {"area_side", [&](auto& k, auto& v) { c.area_side = parse_number<double>(k, v); }},
        {"ap_height", [&](auto& k, auto& v) { c.ap_height = parse_number<double>(k, v); }},
        {"tau_c", [&](auto& k, auto& v) { c.tau_c = parse_number<int>(k, v); }},
        {"tau_p", [&](auto& k, auto& v) { c.tau_p = parse_number<int>(k, v); }},
        {"tau_d", [&](auto& k, auto& v) { c.tau_d = parse_number<int>(k, v); }},
        {"p_ul", [&](auto& k, auto& v) { c.p_ul = parse_number<double>(k, v); }},
        {"P_dl_max", [&](auto& k, auto& v) { c.P_dl_max = parse_number<double>(k, v); }},
        {"noise_power", [&](auto& k, auto& v) { c.noise_power = parse_number<double>(k, v); }},
        {"noise_power_dbm",
         [&](auto& k, auto& v) { c.noise_power = dbm_to_watts(parse_number<double>(k, v)); }},
        {"pathloss_intercept",
         [&](auto& k, auto& v) { c.pathloss_intercept = parse_number<double>(k, v); }},
        {"pathloss_exponent_coeff",
         [&](auto& k, auto& v) { c.pathloss_exponent_coeff = parse_number<double>(k, v); }},
        {"mc_realizations", [&](auto& k, auto& v) { c.mc_realizations = parse_number<int>(k, v); }},
        {"master_seed", [&](auto& k, auto& v) { c.master_seed = parse_number<std::uint64_t>(k, v); }},
        {"require_orthogonal_pilots",
         [&](auto& k, auto& v) { c.require_orthogonal_pilots = parse_bool(k, v); }},
        {"correlation_model",
         [&](auto& k, auto& v) {
             if (v == "diagonal") c.correlation = CorrelationKind::Diagonal;
             else if (v == "exponential") c.correlation = CorrelationKind::Exponential;
             else throw ConfigError("invalid value for '" + k + "': '" + v + "'");
         }},
        {"correlation_coeff",
         [&](auto& k, auto& v) { c.correlation_coeff = parse_number<double>(k, v); }},
        {"dcc_policy",
         [&](auto& k, auto& v) {
             if (v == "all") c.dcc_policy = DccPolicy::All;
             else if (v == "top_q") c.dcc_policy = DccPolicy::TopQ;
             else throw ConfigError("invalid value for '" + k + "': '" + v + "'");
         }},
        {"dcc_top_q", [&](auto& k, auto& v) { c.dcc_top_q = parse_number<int>(k, v); }},
        {"ap_positions", [&](auto& k, auto& v) { c.ap_positions = parse_positions(k, v); }},
        {"threads", [&](auto& k, auto& v) { c.threads = parse_number<int>(k, v); }},
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(key, value);
    }
    c.validate();
    return c;
}

SystemConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_config(in);
}

void write_config(std::ostream& out, const SystemConfig& c) {
    out << "L = " << c.L << '\n'
        << "K = " << c.K << '\n'
        << "N = " << c.N << '\n'
        << "area_side = " << format_double(c.area_side) << '\n'
        << "ap_height = " << format_double(c.ap_height) << '\n'
        << "tau_c = " << c.tau_c << '\n'
        << "tau_p = " << c.tau_p << '\n'
        << "tau_d = " << c.tau_d << '\n'
        << "p_ul = " << format_double(c.p_ul) << '\n'
        << "P_dl_max = " << format_double(c.P_dl_max) << '\n'
        << "noise_power = " << format_double(c.noise_power) << '\n'
        << "pathloss_intercept = " << format_double(c.pathloss_intercept) << '\n'
        << "pathloss_exponent_coeff = " << format_double(c.pathloss_exponent_coeff) << '\n'
        << "mc_realizations = " << c.mc_realizations << '\n'
        << "master_seed = " << c.master_seed << '\n'
        << "require_orthogonal_pilots = " << (c.require_orthogonal_pilots ? "true" : "false") << '\n'
        << "correlation_model = "
        << (c.correlation == CorrelationKind::Diagonal ? "diagonal" : "exponential") << '\n'
        << "correlation_coeff = " << format_double(c.correlation_coeff) << '\n'
        << "dcc_policy = " << (c.dcc_policy == DccPolicy::All ? "all" : "top_q") << '\n'
        << "dcc_top_q = " << c.dcc_top_q << '\n'
        << "threads = " << c.threads << '\n';
    if (!c.ap_positions.empty()) {
        out << "ap_positions = ";
        for (std::size_t i = 0; i < c.ap_positions.size(); ++i) {
            if (i) out << "; ";
            out << format_double(c.ap_positions[i].x) << ' ' << format_double(c.ap_positions[i].y);
        }
        out << '\n';
    }
}

}  // namespace cfmimo
