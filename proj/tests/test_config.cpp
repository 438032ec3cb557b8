#include "doctest.h"

#include "cfmimo/config.hpp"
#include "cfmimo/errors.hpp"

#include <cmath>
#include <sstream>

using namespace cfmimo;

TEST_CASE("defaults are the reference deployment") {
    const SystemConfig c;
    CHECK(c.L == 9);
    CHECK(c.K == 5);
    CHECK(c.N == 2);
    CHECK(c.area_side == 150.0);
    CHECK(c.ap_height == 10.0);
    CHECK(c.tau_c == 200);
    CHECK(c.tau_p == 5);
    CHECK(c.tau_d == 195);
    CHECK(c.p_ul == 0.1);
    CHECK(c.P_dl_max == 1.0);
    CHECK(c.noise_power == doctest::Approx(dbm_to_watts(-94.0)).epsilon(1e-12));
    CHECK(c.pathloss_intercept == -30.5);
    CHECK(c.pathloss_exponent_coeff == 36.7);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("parse key-value file with comments") {
    std::istringstream in(
        "# a comment\n"
        "K = 3   # trailing comment\n"
        "tau_p = 3\n"
        "tau_d = 190\n"
        "noise_power_dbm = -90\n"
        "\n"
        "correlation_model = exponential\n"
        "dcc_policy = top_q\n"
        "dcc_top_q = 2\n");
    const SystemConfig c = parse_config(in);
    CHECK(c.K == 3);
    CHECK(c.tau_p == 3);
    CHECK(c.tau_d == 190);
    CHECK(c.noise_power == doctest::Approx(1e-12).epsilon(1e-12));
    CHECK(c.correlation == CorrelationKind::Exponential);
    CHECK(c.dcc_policy == DccPolicy::TopQ);
    CHECK(c.dcc_top_q == 2);
}

TEST_CASE("configuration errors") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
    };
    CHECK_THROWS_AS(parse("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("K = five\n"), ConfigError);
    CHECK_THROWS_AS(parse("K\n"), ConfigError);
    CHECK_THROWS_AS(parse("tau_d = 196\n"), ConfigError);  // 5 + 196 > 200
    CHECK_THROWS_AS(parse("K = 6\n"), ConfigError);        // tau_p < K with orthogonal pilots
    CHECK_NOTHROW(parse("K = 6\nrequire_orthogonal_pilots = false\n"));
    CHECK_THROWS_AS(parse("noise_power = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("L = 0\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("write then parse reproduces every field") {
    SystemConfig c;
    c.K = 4;
    c.tau_p = 4;
    c.tau_d = 196;
    c.master_seed = 123456789012345ULL;
    c.noise_power = 1.234567890123e-13;
    c.L = 2;
    c.ap_positions = {{10.5, 20.25, 0.0}, {100.0, 7.0, 0.0}};
    std::stringstream ss;
    write_config(ss, c);
    const SystemConfig back = parse_config(ss);
    CHECK(back.K == c.K);
    CHECK(back.master_seed == c.master_seed);
    CHECK(back.noise_power == c.noise_power);
    REQUIRE(back.ap_positions.size() == 2);
    CHECK(back.ap_positions[0].y == 20.25);
    CHECK(back.ap_positions[1].x == 100.0);
}
