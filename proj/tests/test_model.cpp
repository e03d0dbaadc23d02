#include <catch2/catch_amalgamated.hpp>

#include "noisediff/model.hpp"

using namespace noisediff;

TEST_CASE("build_scheme derives the block design", "[model]") {
    const SamplingScheme s = build_scheme(10000, 0.01, 2.0);
    CHECK(s.p == 10);  // 0.01^{-1/2}
    CHECK(s.k == 1000);
    CHECK(s.delta == Catch::Approx(0.1));

    const SamplingScheme s2 = build_scheme(100, 0.25, 2.0);
    CHECK(s2.p == 2);  // 0.25^{-1/2}
    CHECK(s2.k == 50);
    CHECK(s2.delta == Catch::Approx(0.5));
}

TEST_CASE("build_scheme rejects bad inputs", "[model]") {
    CHECK_THROWS_AS(build_scheme(10, 0.5, 1.0), std::domain_error);   // tau must exceed 1
    CHECK_THROWS_AS(build_scheme(10, 0.5, 2.5), std::domain_error);
    CHECK_THROWS_AS(build_scheme(10, -0.1, 2.0), std::domain_error);
    CHECK_THROWS_AS(build_scheme(4, 0.25, 2.0), std::domain_error);   // k_n = 2 < 3
}

TEST_CASE("build_scheme is exact for h = m^{-2} at tau = 2 and pure", "[model]") {
    for (long m = 2; m <= 40; ++m) {
        const double h = 1.0 / static_cast<double>(m * m);
        const SamplingScheme s = build_scheme(100 * m, h, 2.0);
        CHECK(s.p == m);
        CHECK(s.k * s.p <= s.n);
        const SamplingScheme again = build_scheme(100 * m, h, 2.0);
        CHECK(s.consistent_with(again));
        CHECK(s.delta == again.delta);
    }
}

TEST_CASE("builtin OU model evaluates drift, diffusion and invariant law", "[model]") {
    const DiffusionModel ou = builtin_ou_model();
    ou.validate();

    const double x = 1.0;
    const double beta[2] = {2.0, 0.0};
    double out = 0.0;
    ou.drift({&x, 1}, beta, {&out, 1});
    CHECK(out == Catch::Approx(-2.0));  // -beta1 (x - beta2)

    const double x5 = 5.0, alpha = 0.3;
    ou.diffusion({&x5, 1}, {&alpha, 1}, {&out, 1});
    CHECK(out == Catch::Approx(0.3));

    const double a1 = 1.0, b1[2] = {0.5, 0.0};
    const auto [mean, var] = (*ou.invariant_gaussian)({&a1, 1}, b1);
    CHECK(mean == Catch::Approx(0.0));
    CHECK(var == Catch::Approx(1.0));  // alpha^2 / (2 beta1)
}

TEST_CASE("validate_assumptions spot-checks non-degeneracy and block balance", "[model]") {
    const DiffusionModel ou = builtin_ou_model();

    std::vector<Vec> grid;
    for (int i = -5; i <= 5; ++i) grid.push_back(Vec::Constant(1, static_cast<double>(i)));

    SECTION("OU over alpha in [0.1, 2]") {
        const auto rep = validate_assumptions(ou, build_scheme(10000, 0.01, 2.0), grid);
        CHECK(rep.min_det_A == Catch::Approx(0.01));  // min alpha^2
        CHECK(rep.det_positive);
        CHECK(rep.p_at_least_2);
    }

    SECTION("k_n Delta_n^2 diagnostic warns when >= 1") {
        const auto rep = validate_assumptions(ou, build_scheme(10000, 0.01, 2.0), grid);
        CHECK(rep.block_balance == Catch::Approx(10.0));  // 1000 * 0.01
        CHECK_FALSE(rep.warnings.empty());
    }

    SECTION("large design: exact arithmetic from the rounded block size") {
        const SamplingScheme s = build_scheme(1000000, 1e-3, 2.0);
        CHECK(s.p == 32);  // round(10^{1.5})
        CHECK(s.k == 31250);
        CHECK(s.delta == Catch::Approx(0.032));
        const auto rep = validate_assumptions(ou, s, grid);
        CHECK(rep.block_balance == Catch::Approx(31250 * 0.032 * 0.032));  // 32.0
        CHECK_FALSE(rep.warnings.empty());
    }
}

TEST_CASE("model registry resolves builtins and rejects unknowns", "[model]") {
    CHECK(make_model("ou1d").name == "ou1d");
    CHECK(make_model("const1d").name == "const1d");
    CHECK_THROWS_AS(make_model("nope"), std::invalid_argument);

    register_model("ou_copy", [] { return builtin_ou_model(); });
    CHECK(make_model("ou_copy").dim_beta == 2);
}

TEST_CASE("true parameters must be interior", "[model]") {
    const DiffusionModel ou = builtin_ou_model();
    TrueParameters p;
    p.alpha = Vec::Constant(1, 1.0);
    p.beta = Vec::Zero(2);
    p.beta << 1.0, 0.0;
    p.noise.lambda = Mat::Constant(1, 1, 0.1);
    p.x0 = Vec::Zero(1);
    CHECK_NOTHROW(p.validate(ou));

    p.alpha(0) = 0.1;  // on the boundary
    CHECK_THROWS_AS(p.validate(ou), std::invalid_argument);
}
