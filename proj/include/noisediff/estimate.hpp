#pragma once

// Staged estimators. ML-type: Lambda-hat, then alpha-hat maximizing H1 with
// Lambda-hat plugged in, then beta-hat maximizing H2 with alpha-hat plugged
// in. Bayes-type: same Lambda-hat, then posterior means alpha-tilde under
// exp(H1)pi1 and beta-tilde under exp(H2(.; alpha-tilde))pi2. The two chains
// never mix plug-ins.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "noisediff/optimize.hpp"
#include "noisediff/quadrature.hpp"
#include "noisediff/quasilik.hpp"
#include "noisediff/rng.hpp"

namespace noisediff {

/// Prior density on a parameter box; must be continuous and bounded away
/// from 0 and infinity on the box. Unnormalized densities are fine.
struct PriorSpec {
    std::function<double(std::span<const double>)> density;

    static PriorSpec uniform() {
        return {[](std::span<const double>) { return 1.0; }};
    }

    double log_density(std::span<const double> theta) const {
        const double v = density(theta);
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error("PriorSpec: density must be positive and finite on the box");
        return std::log(v);
    }
};

struct BayesConfig {
    enum class Method { gauss_legendre, metropolis };
    std::optional<Method> method;  // default: quadrature for dim <= 2, else metropolis
    int nodes_per_dim = 64;
    int mcmc_draws = 20000;
    int burn_in = 2000;
    std::optional<double> proposal_scale;  // default: box width x rate^{-1}, per coordinate
    // Seed for the Metropolis stream; set by the harness per replication.
    std::uint64_t mcmc_master_seed = 0;
    std::uint32_t mcmc_replication = 0;

    void validate() const {
        if (nodes_per_dim < 8) throw std::invalid_argument("BayesConfig: nodes_per_dim >= 8");
        if (mcmc_draws <= burn_in) throw std::invalid_argument("BayesConfig: draws must exceed burn_in");
        if (burn_in < 0) throw std::invalid_argument("BayesConfig: burn_in >= 0");
    }

    Method resolve(int dim) const {
        if (method) return *method;
        return dim <= 2 ? Method::gauss_legendre : Method::metropolis;
    }
};

struct EstimationReport {
    Mat lambda_hat;
    Vec alpha;
    Vec beta;
    double h1_value = 0.0;
    double h2_value = 0.0;
    std::string method;  // "ml" or "bayes"

    // diagnostics
    int alpha_iterations = 0;
    int beta_iterations = 0;
    int alpha_restarts_agreeing = 0;
    int beta_restarts_agreeing = 0;
    double alpha_grad_norm = std::numeric_limits<double>::quiet_NaN();
    double beta_grad_norm = std::numeric_limits<double>::quiet_NaN();
    bool alpha_on_boundary = false;
    bool beta_on_boundary = false;
    double mcmc_acceptance_alpha = std::numeric_limits<double>::quiet_NaN();
    double mcmc_acceptance_beta = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json diag;
        diag["alpha_iterations"] = alpha_iterations;
        diag["beta_iterations"] = beta_iterations;
        diag["alpha_restarts_agreeing"] = alpha_restarts_agreeing;
        diag["beta_restarts_agreeing"] = beta_restarts_agreeing;
        if (std::isfinite(alpha_grad_norm)) diag["alpha_grad_norm"] = alpha_grad_norm;
        if (std::isfinite(beta_grad_norm)) diag["beta_grad_norm"] = beta_grad_norm;
        diag["alpha_on_boundary"] = alpha_on_boundary;
        diag["beta_on_boundary"] = beta_on_boundary;
        if (std::isfinite(mcmc_acceptance_alpha)) diag["mcmc_acceptance_alpha"] = mcmc_acceptance_alpha;
        if (std::isfinite(mcmc_acceptance_beta)) diag["mcmc_acceptance_beta"] = mcmc_acceptance_beta;
        diag["warnings"] = warnings;

        nlohmann::json j;
        std::vector<std::vector<double>> lam(lambda_hat.rows());
        for (int r = 0; r < lambda_hat.rows(); ++r)
            for (int c = 0; c < lambda_hat.cols(); ++c) lam[r].push_back(lambda_hat(r, c));
        j["lambda_hat"] = lam;
        j["alpha"] = std::vector<double>(alpha.data(), alpha.data() + alpha.size());
        j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
        j["method"] = method;
        j["objective"] = {{"h1", h1_value}, {"h2", h2_value}};
        j["diagnostics"] = diag;
        return j;
    }

    static std::string csv_header(int d, int m1, int m2) {
        std::string h = "method";
        const VechIndexer idx{d};
        for (int s = 1; s <= idx.size(); ++s) h += ",lambda" + std::to_string(s);
        for (int i = 1; i <= m1; ++i) h += ",alpha" + std::to_string(i);
        for (int i = 1; i <= m2; ++i) h += ",beta" + std::to_string(i);
        h += ",h1,h2,alpha_on_boundary,beta_on_boundary";
        return h;
    }

    std::string csv_row() const {
        char buf[32];
        std::string row = method;
        auto push = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            row += ',';
            row += buf;
        };
        const VechIndexer idx{static_cast<int>(lambda_hat.rows())};
        const Vec vl = idx.vech(lambda_hat);
        for (int i = 0; i < vl.size(); ++i) push(vl(i));
        for (int i = 0; i < alpha.size(); ++i) push(alpha(i));
        for (int i = 0; i < beta.size(); ++i) push(beta(i));
        push(h1_value);
        push(h2_value);
        row += alpha_on_boundary ? ",1" : ",0";
        row += beta_on_boundary ? ",1" : ",0";
        return row;
    }
};

namespace detail {

inline double safe_grad_norm(const ObjectiveFn& f, const Vec& point) {
    try {
        return fd_gradient(f, {point.data(), static_cast<std::size_t>(point.size())}).norm();
    } catch (const std::exception&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace detail

inline EstimationReport adaptive_ml(const ObservationSeries& series, const DiffusionModel& model,
                                    const SamplingScheme& scheme, const OptimizerConfig& opt = {}) {
    if (!scheme.consistent_with(series.scheme))
        throw std::invalid_argument("adaptive_ml: scheme inconsistent with series");
    model.validate();
    opt.validate();

    EstimationReport rep;
    rep.method = "ml";
    rep.lambda_hat = noise_variance_estimate(series);

    QuasiLikContext ctx = make_context(local_means(series), model, rep.lambda_hat);

    const ObjectiveFn o1 = bind_h1(ctx);
    const OptResult r1 = maximize_box(o1, opt);
    rep.alpha = r1.point;
    rep.h1_value = r1.value;
    rep.alpha_iterations = r1.iterations;
    rep.alpha_restarts_agreeing = r1.restarts_agreeing;
    rep.alpha_on_boundary = r1.on_boundary;
    rep.alpha_grad_norm = detail::safe_grad_norm(o1, r1.point);
    if (r1.on_boundary) rep.warnings.push_back("alpha maximizer on box boundary");

    const ObjectiveFn o2 = bind_h2(ctx, rep.alpha);
    const OptResult r2 = maximize_box(o2, opt);
    rep.beta = r2.point;
    rep.h2_value = r2.value;
    rep.beta_iterations = r2.iterations;
    rep.beta_restarts_agreeing = r2.restarts_agreeing;
    rep.beta_on_boundary = r2.on_boundary;
    rep.beta_grad_norm = detail::safe_grad_norm(o2, r2.point);
    if (r2.on_boundary) rep.warnings.push_back("beta maximizer on box boundary");
    return rep;
}

struct PosteriorMeanResult {
    Vec mean;
    double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
};

/// Posterior mean of theta under density ~ exp(H(theta)) pi(theta) on the box,
/// by tensor Gauss-Legendre with log-sum-exp stabilization.
inline PosteriorMeanResult posterior_mean_quadrature(const ObjectiveFn& f, const PriorSpec& prior,
                                                     int nodes_per_dim) {
    const int m = f.dim();
    std::vector<QuadratureRule> rules;
    for (int i = 0; i < m; ++i) rules.push_back(gauss_legendre(nodes_per_dim, f.box[i].lo, f.box[i].hi));

    long total = 1;
    for (int i = 0; i < m; ++i) total *= nodes_per_dim;

    std::vector<double> logf(total);
    std::vector<double> wprod(total);
    std::vector<long> index(m, 0);
    std::vector<double> theta(m);
    for (long t = 0; t < total; ++t) {
        double w = 1.0;
        for (int i = 0; i < m; ++i) {
            theta[i] = rules[i].nodes[index[i]];
            w *= rules[i].weights[index[i]];
        }
        logf[t] = f(std::span<const double>(theta)) + prior.log_density(theta);
        wprod[t] = w;
        for (int i = m - 1; i >= 0; --i) {
            if (++index[i] < nodes_per_dim) break;
            index[i] = 0;
        }
    }
    const double peak = *std::max_element(logf.begin(), logf.end());
    double denom = 0.0;
    Vec numer = Vec::Zero(m);
    std::fill(index.begin(), index.end(), 0);
    for (long t = 0; t < total; ++t) {
        const double mass = wprod[t] * std::exp(logf[t] - peak);
        denom += mass;
        for (int i = 0; i < m; ++i) numer(i) += mass * rules[i].nodes[index[i]];
        for (int i = m - 1; i >= 0; --i) {
            if (++index[i] < nodes_per_dim) break;
            index[i] = 0;
        }
    }
    if (!(denom > 0.0)) throw std::runtime_error("posterior mass underflow");
    return {numer / denom, std::numeric_limits<double>::quiet_NaN()};
}

/// Posterior mean by random-walk Metropolis with reflection at the box walls.
inline PosteriorMeanResult posterior_mean_metropolis(const ObjectiveFn& f, const PriorSpec& prior,
                                                     const BayesConfig& cfg, std::uint32_t stage_offset) {
    const int m = f.dim();
    CounterRng rng(cfg.mcmc_master_seed, cfg.mcmc_replication,
                   static_cast<std::uint32_t>(RngStream::mcmc) + stage_offset);

    std::vector<double> scale(m);
    for (int i = 0; i < m; ++i)
        scale[i] = cfg.proposal_scale ? *cfg.proposal_scale : f.box[i].width() / f.rate;

    Vec x = box_center(f.box);
    std::vector<double> xs(x.data(), x.data() + m), ys(m);
    double logpost = f(std::span<const double>(xs)) + prior.log_density(xs);

    std::vector<KahanSum> mean_acc(m);
    long accepted = 0;
    for (int it = 0; it < cfg.mcmc_draws; ++it) {
        for (int i = 0; i < m; ++i) {
            double y = xs[i] + scale[i] * rng.next_normal();
            for (int guard = 0; guard < 100 && (y < f.box[i].lo || y > f.box[i].hi); ++guard) {
                if (y < f.box[i].lo) y = 2.0 * f.box[i].lo - y;
                if (y > f.box[i].hi) y = 2.0 * f.box[i].hi - y;
            }
            ys[i] = std::clamp(y, f.box[i].lo, f.box[i].hi);
        }
        const double cand = f(std::span<const double>(ys)) + prior.log_density(ys);
        if (std::isfinite(cand) && std::log(rng.next_uniform()) < cand - logpost) {
            xs = ys;
            logpost = cand;
            ++accepted;
        }
        if (it >= cfg.burn_in)
            for (int i = 0; i < m; ++i) mean_acc[i].add(xs[i]);
    }
    Vec mean(m);
    const double count = static_cast<double>(cfg.mcmc_draws - cfg.burn_in);
    for (int i = 0; i < m; ++i) mean(i) = mean_acc[i].value() / count;
    return {mean, static_cast<double>(accepted) / cfg.mcmc_draws};
}

inline PosteriorMeanResult posterior_mean(const ObjectiveFn& f, const PriorSpec& prior,
                                          const BayesConfig& cfg, std::uint32_t stage_offset) {
    cfg.validate();
    switch (cfg.resolve(f.dim())) {
        case BayesConfig::Method::gauss_legendre:
            return posterior_mean_quadrature(f, prior, cfg.nodes_per_dim);
        case BayesConfig::Method::metropolis:
            return posterior_mean_metropolis(f, prior, cfg, stage_offset);
    }
    throw std::logic_error("posterior_mean: unknown method");
}

inline EstimationReport adaptive_bayes(const ObservationSeries& series, const DiffusionModel& model,
                                       const SamplingScheme& scheme,
                                       const std::pair<PriorSpec, PriorSpec>& priors,
                                       const BayesConfig& bcfg, const OptimizerConfig& opt = {}) {
    if (!scheme.consistent_with(series.scheme))
        throw std::invalid_argument("adaptive_bayes: scheme inconsistent with series");
    model.validate();
    opt.validate();
    bcfg.validate();

    EstimationReport rep;
    rep.method = "bayes";
    rep.lambda_hat = noise_variance_estimate(series);

    QuasiLikContext ctx = make_context(local_means(series), model, rep.lambda_hat);

    const ObjectiveFn o1 = bind_h1(ctx);
    const PosteriorMeanResult a = posterior_mean(o1, priors.first, bcfg, 0);
    rep.alpha = a.mean;
    rep.mcmc_acceptance_alpha = a.acceptance_rate;
    rep.h1_value = o1(rep.alpha);

    const ObjectiveFn o2 = bind_h2(ctx, rep.alpha);
    const PosteriorMeanResult b = posterior_mean(o2, priors.second, bcfg, 1);
    rep.beta = b.mean;
    rep.mcmc_acceptance_beta = b.acceptance_rate;
    rep.h2_value = o2(rep.beta);

    for (double rate : {a.acceptance_rate, b.acceptance_rate})
        if (std::isfinite(rate) && (rate < 0.1 || rate > 0.6))
            rep.warnings.push_back("mcmc acceptance rate " + std::to_string(rate) +
                                   " outside [0.1, 0.6]");
    return rep;
}

}  // namespace noisediff
