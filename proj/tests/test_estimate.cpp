#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "noisediff/estimate.hpp"
#include "test_support.hpp"

using namespace noisediff;

TEST_CASE("zero-residual data recovers beta exactly with objective 0", "[estimate]") {
    // Blocks are constant, and consecutive block means satisfy
    // m_{j+1} = m_j + Delta * b(m_{j-1}, beta0), so H2(beta0) = 0 exactly.
    const SamplingScheme scheme = build_scheme(60, 0.25, 2.0);  // p = 2, k = 30, Delta = 0.5
    const double beta0[2] = {0.5, 0.0};
    std::vector<double> means(static_cast<std::size_t>(scheme.k));
    means[0] = 1.0;
    means[1] = 1.0;
    for (long j = 1; j + 1 < scheme.k; ++j)
        means[static_cast<std::size_t>(j + 1)] =
            means[static_cast<std::size_t>(j)] +
            scheme.delta * (-beta0[0] * (means[static_cast<std::size_t>(j - 1)] - beta0[1]));

    ObservationSeries series;
    series.scheme = scheme;
    series.dim = 1;
    for (long j = 0; j < scheme.k; ++j) {
        series.values.push_back(means[static_cast<std::size_t>(j)]);
        series.values.push_back(means[static_cast<std::size_t>(j)]);
    }
    series.values.push_back(0.0);  // one trailing observation beyond k*p

    const EstimationReport rep = adaptive_ml(series, builtin_ou_model(), scheme);
    CHECK(rep.beta(0) == Catch::Approx(0.5).margin(2e-5));
    CHECK(rep.beta(1) == Catch::Approx(0.0).margin(2e-5));
    CHECK(rep.h2_value == Catch::Approx(0.0).margin(1e-8));
}

TEST_CASE("adaptive ML matches a dense grid search", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(20000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(0.9, 1.4, 0.3, 0.05);
    const auto series = testsupport::ou_series(scheme, truth, 2718);
    const EstimationReport rep = adaptive_ml(series, ou, scheme);

    const QuasiLikContext ctx = make_context(local_means(series), ou, rep.lambda_hat);

    // alpha: full 2001-point scan of h1
    {
        const Interval box = ou.alpha_box[0];
        double best = -std::numeric_limits<double>::infinity(), arg = box.lo;
        const double spacing = box.width() / 2000.0;
        for (int i = 0; i <= 2000; ++i) {
            const double a = box.lo + spacing * i;
            const double v = h1(ctx, {&a, 1});
            if (v > best) {
                best = v;
                arg = a;
            }
        }
        CHECK(std::abs(rep.alpha(0) - arg) <= spacing);
    }

    // beta: per-coordinate scans through the optimizer's point (H2 is
    // quadratic in beta, so conditional argmaxes match the joint one)
    for (int coord = 0; coord < 2; ++coord) {
        const Interval box = ou.beta_box[static_cast<std::size_t>(coord)];
        const double spacing = box.width() / 2000.0;
        double best = -std::numeric_limits<double>::infinity(), arg = box.lo;
        double beta[2] = {rep.beta(0), rep.beta(1)};
        for (int i = 0; i <= 2000; ++i) {
            beta[coord] = box.lo + spacing * i;
            const double v = h2(ctx, beta, {rep.alpha.data(), 1});
            if (v > best) {
                best = v;
                arg = beta[coord];
            }
        }
        CHECK(std::abs(rep.beta(coord) - arg) <= spacing);
    }
}

TEST_CASE("stage-2 objective equals an independent h2 recomputation", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(5000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(1.1, 0.8, -0.2, 0.04);
    const auto series = testsupport::ou_series(scheme, truth, 1618);
    const EstimationReport rep = adaptive_ml(series, ou, scheme);

    const QuasiLikContext ctx = make_context(local_means(series), ou, noise_variance_estimate(series));
    const double again = h2(ctx, {rep.beta.data(), 2}, {rep.alpha.data(), 1});
    CHECK(rep.h2_value == Catch::Approx(again).epsilon(1e-12));
    CHECK(box_contains(ou.alpha_box, {rep.alpha.data(), 1}));
    CHECK(box_contains(ou.beta_box, {rep.beta.data(), 2}));
    CHECK(std::isfinite(rep.alpha_grad_norm));
}

TEST_CASE("gradient is stationary at the optimizer's point", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(20000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(1.0, 1.0, 0.0, 0.05);
    const auto series = testsupport::ou_series(scheme, truth, 334);
    const EstimationReport rep = adaptive_ml(series, ou, scheme);
    const QuasiLikContext ctx = make_context(local_means(series), ou, rep.lambda_hat);
    const ObjectiveFn f = bind_h1(ctx);
    // Normalized-gradient stationarity: |grad(H1/k)| is bounded by the
    // curvature scale times the optimizer's parameter tolerance, with
    // headroom for the objective-spread stopping rule.
    const Mat curv = fd_curvature(f, {rep.alpha.data(), 1});
    const Vec g = fd_gradient(f, {rep.alpha.data(), 1});
    CHECK(std::abs(g(0)) / f.normalization <= 10.0 * (curv(0, 0) * 1e-4 + 1e-8));
}

TEST_CASE("uniform prior with a flat objective gives the box midpoint", "[estimate]") {
    ObjectiveFn flat;
    flat.box = {{0.2, 1.8}, {-3.0, 5.0}};
    flat.normalization = flat.rate = 1.0;
    flat.value = [](std::span<const double>) { return 0.0; };

    const auto q = posterior_mean_quadrature(flat, PriorSpec::uniform(), 64);
    CHECK(q.mean(0) == Catch::Approx(1.0).margin(1e-10));
    CHECK(q.mean(1) == Catch::Approx(1.0).margin(1e-10));

    BayesConfig bc;
    bc.method = BayesConfig::Method::metropolis;
    bc.mcmc_draws = 20000;
    bc.burn_in = 2000;
    bc.proposal_scale = 0.8;
    const auto m = posterior_mean_metropolis(flat, PriorSpec::uniform(), bc, 0);
    CHECK(m.mean(0) == Catch::Approx(1.0).margin(0.05));
    CHECK(m.mean(1) == Catch::Approx(1.0).margin(0.25));
}

TEST_CASE("gaussian log-posterior hook recovers the mode", "[estimate]") {
    // sd well below the box width but wide enough for the rule's polynomial
    // degree; mu placed so both truncated tails are negligible.
    const double mu = 0.55, sd = 0.08;
    ObjectiveFn f;
    f.box = {{0.0, 1.0}};
    f.normalization = f.rate = 1.0;
    f.value = [=](std::span<const double> t) {
        const double z = (t[0] - mu) / sd;
        return -0.5 * z * z;
    };

    SECTION("quadrature") {
        const auto r = posterior_mean_quadrature(f, PriorSpec::uniform(), 128);
        CHECK(r.mean(0) == Catch::Approx(mu).margin(1e-6));
        // node doubling moves the answer by less than 1e-6
        const auto r2 = posterior_mean_quadrature(f, PriorSpec::uniform(), 256);
        CHECK(std::abs(r.mean(0) - r2.mean(0)) < 1e-6);
    }

    SECTION("metropolis within Monte Carlo error") {
        BayesConfig bc;
        bc.method = BayesConfig::Method::metropolis;
        bc.mcmc_draws = 40000;
        bc.burn_in = 4000;
        bc.proposal_scale = 2.0 * sd;
        const auto r = posterior_mean_metropolis(f, PriorSpec::uniform(), bc, 0);
        // ~3 standard errors with a conservative ESS of draws/20
        const double se = sd / std::sqrt((bc.mcmc_draws - bc.burn_in) / 20.0);
        CHECK(r.mean(0) == Catch::Approx(mu).margin(3.0 * se));
        CHECK(r.acceptance_rate > 0.1);
        CHECK(r.acceptance_rate < 0.9);
    }
}

TEST_CASE("bayes chain agrees with the ML chain on a well-sized problem", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(20000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(1.0, 1.0, 0.0, 0.05);
    const auto series = testsupport::ou_series(scheme, truth, 42);

    const EstimationReport ml = adaptive_ml(series, ou, scheme);

    // At this k the posterior is a narrow spike; the random-walk sampler is
    // the right tool (box-wide quadrature cannot resolve it).
    BayesConfig bc;
    bc.method = BayesConfig::Method::metropolis;
    bc.mcmc_draws = 8000;
    bc.burn_in = 2000;
    bc.mcmc_master_seed = 42;
    const EstimationReport bay =
        adaptive_bayes(series, ou, scheme, {PriorSpec::uniform(), PriorSpec::uniform()}, bc);

    const double sq_k = std::sqrt(static_cast<double>(scheme.k));
    const double sq_t = std::sqrt(scheme.time_horizon());
    CHECK(sq_k * std::abs(bay.alpha(0) - ml.alpha(0)) <= 0.5);
    CHECK(sq_t * (bay.beta - ml.beta).cwiseAbs().maxCoeff() <= 0.5);
}

TEST_CASE("quadrature node doubling is stable when the rule resolves the posterior", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(600, 0.01, 2.0);  // k = 60: posterior sd ~ box/15
    const auto truth = testsupport::ou_truth(1.0, 1.0, 0.0, 0.05);
    const auto series = testsupport::ou_series(scheme, truth, 7);

    BayesConfig bc;
    bc.nodes_per_dim = 128;  // gauss_legendre is the default for m <= 2
    const EstimationReport bay =
        adaptive_bayes(series, ou, scheme, {PriorSpec::uniform(), PriorSpec::uniform()}, bc);
    BayesConfig twice = bc;
    twice.nodes_per_dim = 256;
    const EstimationReport bay2 =
        adaptive_bayes(series, ou, scheme, {PriorSpec::uniform(), PriorSpec::uniform()}, twice);
    CHECK(std::abs(bay2.alpha(0) - bay.alpha(0)) < 1e-6);
    CHECK((bay2.beta - bay.beta).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("estimators are deterministic given the configuration", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(4000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(1.0, 1.2, 0.1, 0.03);
    const auto series = testsupport::ou_series(scheme, truth, 10101);

    const EstimationReport a = adaptive_ml(series, ou, scheme);
    const EstimationReport b = adaptive_ml(series, ou, scheme);
    REQUIRE(a.alpha == b.alpha);
    REQUIRE(a.beta == b.beta);

    BayesConfig bc;
    bc.method = BayesConfig::Method::metropolis;
    bc.mcmc_draws = 3000;
    bc.burn_in = 300;
    bc.mcmc_master_seed = 5;
    const EstimationReport c =
        adaptive_bayes(series, ou, scheme, {PriorSpec::uniform(), PriorSpec::uniform()}, bc);
    const EstimationReport d =
        adaptive_bayes(series, ou, scheme, {PriorSpec::uniform(), PriorSpec::uniform()}, bc);
    REQUIRE(c.alpha == d.alpha);
    REQUIRE(c.beta == d.beta);
}

TEST_CASE("estimation report serializes to JSON and CSV", "[estimate]") {
    const DiffusionModel ou = builtin_ou_model();
    const auto scheme = build_scheme(2000, 0.01, 2.0);
    const auto truth = testsupport::ou_truth(1.0, 1.0, 0.0, 0.02);
    const auto series = testsupport::ou_series(scheme, truth, 2);
    const EstimationReport rep = adaptive_ml(series, ou, scheme);

    const nlohmann::json j = rep.to_json();
    CHECK(j.at("method") == "ml");
    CHECK(j.at("alpha").size() == 1);
    CHECK(j.at("beta").size() == 2);
    CHECK(j.at("lambda_hat")[0][0].get<double>() == rep.lambda_hat(0, 0));
    CHECK(j.at("objective").contains("h1"));

    const std::string header = EstimationReport::csv_header(1, 1, 2);
    CHECK(header == "method,lambda1,alpha1,beta1,beta2,h1,h2,alpha_on_boundary,beta_on_boundary");
    const std::string row = rep.csv_row();
    CHECK(row.substr(0, 3) == "ml,");
    // full-precision round trip of the first numeric cell
    const std::string cell = row.substr(3, row.find(',', 3) - 3);
    CHECK(std::stod(cell) == rep.lambda_hat(0, 0));
}

TEST_CASE("dispersion of alpha-hat contracts at the k^{-1/2} rate", "[estimate][scaling]") {
    // Median absolute deviation about the replication median at n and 10n
    // (fixed h and tau, so k scales linearly with n).
    const DiffusionModel ou = builtin_ou_model();
    const auto truth = testsupport::ou_truth(1.0, 1.0, 0.0, 0.05);
    const int reps = 64;

    auto mad_at = [&](long n) {
        const auto scheme = build_scheme(n, 0.01, 2.0);
        std::vector<double> alphas(reps);
        for (int r = 0; r < reps; ++r) {
            const auto series =
                testsupport::ou_series(scheme, truth, 606, static_cast<std::uint32_t>(r), 3);
            alphas[static_cast<std::size_t>(r)] = adaptive_ml(series, ou, scheme).alpha(0);
        }
        const double med = testsupport::median(alphas);
        std::vector<double> dev(alphas.size());
        for (std::size_t i = 0; i < alphas.size(); ++i) dev[i] = std::abs(alphas[i] - med);
        return testsupport::median(dev);
    };

    const double ratio = mad_at(100000) / mad_at(1000000);
    CHECK(ratio >= 2.2);
    CHECK(ratio <= 4.5);
}
