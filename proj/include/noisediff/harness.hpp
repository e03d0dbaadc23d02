#pragma once

// Monte Carlo replication engine. Each replication simulates a noisy path,
// runs the configured estimators, and normalizes the errors at the rates
// sqrt(n) (noise variance), sqrt(k_n) (diffusion) and sqrt(T_n) (drift).
// Replications run on independent counter-RNG streams keyed by the
// replication index, so reports are byte-identical for any worker count.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

#include "noisediff/asymptotics.hpp"
#include "noisediff/estimate.hpp"

namespace noisediff {

struct AllReplicationsFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string model_name = "ou1d";
    DiffusionModel model;
    TrueParameters truth;
    std::vector<SamplingScheme> schemes;
    bool run_ml = true;
    bool run_bayes = false;
    int replications = 100;  // M
    std::uint64_t master_seed = 1;
    int substeps = 10;
    int threads = 0;  // 0 = hardware concurrency
    bool x0_stationary = false;
    OptimizerConfig opt;
    BayesConfig bayes;
    std::pair<PriorSpec, PriorSpec> priors{PriorSpec::uniform(), PriorSpec::uniform()};
    std::vector<double> tail_r_grid;  // empty = no tail table
    int tail_directions = 8;          // per dimension-pair
    int tail_radii = 16;              // log-spaced radii up to the box boundary
    std::string out_dir = "out";

    void validate() const;
};

inline void ExperimentConfig::validate() const {
    model.validate();
    truth.validate(model);
    if (schemes.empty()) throw std::invalid_argument("ExperimentConfig: need at least one scheme");
    if (replications < 1) throw std::invalid_argument("ExperimentConfig: replications >= 1");
    if (substeps < 1) throw std::invalid_argument("ExperimentConfig: substeps >= 1");
    if (!tail_r_grid.empty()) {
        if (!run_ml)
            throw std::invalid_argument("ExperimentConfig: tail table needs the ML chain plug-ins");
        for (std::size_t i = 0; i < tail_r_grid.size(); ++i) {
            if (tail_r_grid[i] < 0.0)
                throw std::invalid_argument("ExperimentConfig: tail radii must be >= 0");
            if (i > 0 && tail_r_grid[i] <= tail_r_grid[i - 1])
                throw std::invalid_argument("ExperimentConfig: tail radii must be increasing");
        }
    }
    if (x0_stationary && !model.invariant_gaussian)
        throw std::invalid_argument("ExperimentConfig: stationary x0 needs a closed-form invariant law");
    opt.validate();
    bayes.validate();
}

namespace detail {

// Direction x radius grid approximating sup over V(r) = {|u| >= r} inter U_n.
struct TailGrid {
    std::vector<Vec> directions;
    std::vector<double> radii;  // ascending, global for all directions
};

inline std::vector<Vec> tail_directions(int m, int per_pair) {
    std::vector<Vec> dirs;
    if (m == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
        dirs.push_back(Vec::Constant(1, -1.0));
        return dirs;
    }
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            for (int t = 0; t < per_pair; ++t) {
                const double angle = 2.0 * std::numbers::pi * t / per_pair;
                Vec v = Vec::Zero(m);
                v(i) = std::cos(angle);
                v(j) = std::sin(angle);
                dirs.push_back(v);
            }
    return dirs;
}

inline double max_radius(const Box& box, const Vec& center, const Vec& dir, double rate) {
    double rho = std::numeric_limits<double>::infinity();
    for (int c = 0; c < dir.size(); ++c) {
        if (dir(c) > 0.0)
            rho = std::min(rho, (box[c].hi - center(c)) * rate / dir(c));
        else if (dir(c) < 0.0)
            rho = std::min(rho, (box[c].lo - center(c)) * rate / dir(c));
    }
    return rho * (1.0 - 1e-9);
}

inline TailGrid build_tail_grid(const Box& box, const Vec& center, double rate,
                                const std::vector<double>& r_grid, int per_pair, int n_radii) {
    TailGrid grid;
    grid.directions = tail_directions(static_cast<int>(box.size()), per_pair);
    double rho_hi = 0.0;
    for (const Vec& v : grid.directions) rho_hi = std::max(rho_hi, max_radius(box, center, v, rate));
    double r_lo = rho_hi;
    for (double r : r_grid)
        if (r > 0.0) r_lo = std::min(r_lo, r);
    if (!(r_lo > 0.0) || !(rho_hi > r_lo)) r_lo = rho_hi / 64.0;

    std::vector<double> radii(r_grid.begin(), r_grid.end());
    for (int i = 0; i < n_radii; ++i)
        radii.push_back(r_lo * std::pow(rho_hi / r_lo, static_cast<double>(i) / (n_radii - 1)));
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    while (!radii.empty() && radii.front() <= 0.0) radii.erase(radii.begin());
    grid.radii = std::move(radii);
    return grid;
}

// Largest field value over {rho * v : rho >= r} on the grid; -inf when the
// admissible set is exhausted. u = 0 belongs to V(0) only.
struct TailSample {
    std::vector<double> sup_z1;  // per r in r_grid
    std::vector<double> sup_z2;
    bool valid = false;
};

inline std::vector<double> tail_sups(const ObjectiveFn& f, const Vec& center, const TailGrid& grid,
                                     const std::vector<double>& r_grid) {
    // Evaluate the whole grid once, then take suffix maxima per requested r.
    std::vector<std::vector<double>> values(grid.directions.size());
    for (std::size_t vi = 0; vi < grid.directions.size(); ++vi) {
        const Vec& dir = grid.directions[vi];
        const double rho_max = max_radius(f.box, center, dir, f.rate);
        values[vi].assign(grid.radii.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t ri = 0; ri < grid.radii.size(); ++ri) {
            if (grid.radii[ri] > rho_max) break;
            const Vec u = grid.radii[ri] * dir;
            values[vi][ri] = random_field(f, {center.data(), static_cast<std::size_t>(center.size())},
                                          {u.data(), static_cast<std::size_t>(u.size())});
        }
    }
    std::vector<double> sups;
    sups.reserve(r_grid.size());
    for (double r : r_grid) {
        double s = -std::numeric_limits<double>::infinity();
        if (r == 0.0) s = 1.0;  // u = 0 is admissible at r = 0 and Z(0) = 1
        for (std::size_t vi = 0; vi < grid.directions.size(); ++vi)
            for (std::size_t ri = 0; ri < grid.radii.size(); ++ri)
                if (grid.radii[ri] >= r) s = std::max(s, values[vi][ri]);
        sups.push_back(s);
    }
    return sups;
}

}  // namespace detail

struct NormalizedErrors {
    int rep = 0;
    std::string method;
    Vec noise_err;  // sqrt(n)   (vech Lambda-hat - vech Lambda*)
    Vec alpha_err;  // sqrt(k_n) (alpha-hat - alpha*)
    Vec beta_err;   // sqrt(T_n) (beta-hat  - beta*)
    bool failed = false;
    std::string failure;

    Vec joint() const {
        Vec v(noise_err.size() + alpha_err.size() + beta_err.size());
        v << noise_err, alpha_err, beta_err;
        return v;
    }
};

struct ReplicationResult {
    std::vector<NormalizedErrors> errors;
    detail::TailSample tail;
};

inline ReplicationResult run_replication(const ExperimentConfig& cfg, int scheme_index, int rep) {
    if (rep < 0 || rep >= cfg.replications)
        throw std::invalid_argument("run_replication: rep_index outside [0, M)");
    const SamplingScheme& scheme = cfg.schemes.at(static_cast<std::size_t>(scheme_index));
    const std::uint32_t rep32 = static_cast<std::uint32_t>(rep);

    ReplicationResult out;
    const VechIndexer vidx{cfg.model.dim_state};
    const Vec vech_true = vidx.vech(cfg.truth.noise.lambda);
    const double sq_n = std::sqrt(static_cast<double>(scheme.n));
    const double sq_k = std::sqrt(static_cast<double>(scheme.k));
    const double sq_t = std::sqrt(scheme.time_horizon());

    auto failure_row = [&](const std::string& method, const std::string& what) {
        NormalizedErrors e;
        e.rep = rep;
        e.method = method;
        e.failed = true;
        e.failure = what;
        return e;
    };

    TrueParameters truth = cfg.truth;
    ObservationSeries series;
    try {
        if (cfg.x0_stationary) {
            const auto [mean, var] = (*cfg.model.invariant_gaussian)(
                {truth.alpha.data(), static_cast<std::size_t>(truth.alpha.size())},
                {truth.beta.data(), static_cast<std::size_t>(truth.beta.size())});
            CounterRng rng(cfg.master_seed, rep32, RngStream::initial_state);
            truth.x0 = Vec::Constant(1, mean + std::sqrt(var) * rng.next_normal());
        }
        const LatentPath path =
            simulate_path(cfg.model, truth, scheme, cfg.substeps, {cfg.master_seed, rep32});
        series = contaminate(path, truth.noise, SimSeed{cfg.master_seed, rep32});
    } catch (const std::exception& ex) {
        if (cfg.run_ml || cfg.run_bayes) {
            if (cfg.run_ml) out.errors.push_back(failure_row("ml", ex.what()));
            if (cfg.run_bayes) out.errors.push_back(failure_row("bayes", ex.what()));
        } else {
            out.errors.push_back(failure_row("none", ex.what()));
        }
        return out;
    }

    const Mat lambda_hat = noise_variance_estimate(series);
    const Vec noise_err = sq_n * (vidx.vech(lambda_hat) - vech_true);

    if (!cfg.run_ml && !cfg.run_bayes) {
        NormalizedErrors e;
        e.rep = rep;
        e.method = "none";
        e.noise_err = noise_err;
        e.alpha_err = Vec(0);
        e.beta_err = Vec(0);
        out.errors.push_back(std::move(e));
        return out;
    }

    std::optional<EstimationReport> ml;
    if (cfg.run_ml) {
        try {
            ml = adaptive_ml(series, cfg.model, scheme, cfg.opt);
            NormalizedErrors e;
            e.rep = rep;
            e.method = "ml";
            e.noise_err = noise_err;
            e.alpha_err = sq_k * (ml->alpha - cfg.truth.alpha);
            e.beta_err = sq_t * (ml->beta - cfg.truth.beta);
            out.errors.push_back(std::move(e));
        } catch (const std::exception& ex) {
            out.errors.push_back(failure_row("ml", ex.what()));
        }
    }
    if (cfg.run_bayes) {
        try {
            BayesConfig bc = cfg.bayes;
            bc.mcmc_master_seed = cfg.master_seed;
            bc.mcmc_replication = rep32;
            const EstimationReport bayes = adaptive_bayes(series, cfg.model, scheme, cfg.priors, bc, cfg.opt);
            NormalizedErrors e;
            e.rep = rep;
            e.method = "bayes";
            e.noise_err = noise_err;
            e.alpha_err = sq_k * (bayes.alpha - cfg.truth.alpha);
            e.beta_err = sq_t * (bayes.beta - cfg.truth.beta);
            out.errors.push_back(std::move(e));
        } catch (const std::exception& ex) {
            out.errors.push_back(failure_row("bayes", ex.what()));
        }
    }

    if (!cfg.tail_r_grid.empty() && ml && !ml->alpha_on_boundary) {
        try {
            QuasiLikContext ctx = make_context(local_means(series), cfg.model, lambda_hat);
            const ObjectiveFn o1 = bind_h1(ctx);
            const detail::TailGrid g1 = detail::build_tail_grid(
                cfg.model.alpha_box, cfg.truth.alpha, o1.rate, cfg.tail_r_grid, cfg.tail_directions,
                cfg.tail_radii);
            out.tail.sup_z1 = detail::tail_sups(o1, cfg.truth.alpha, g1, cfg.tail_r_grid);
            const ObjectiveFn o2 = bind_h2(ctx, ml->alpha);
            const detail::TailGrid g2 = detail::build_tail_grid(
                cfg.model.beta_box, cfg.truth.beta, o2.rate, cfg.tail_r_grid, cfg.tail_directions,
                cfg.tail_radii);
            out.tail.sup_z2 = detail::tail_sups(o2, cfg.truth.beta, g2, cfg.tail_r_grid);
            out.tail.valid = true;
        } catch (const std::exception&) {
            out.tail.valid = false;
        }
    }
    return out;
}

struct MethodStats {
    std::string method;
    long successes = 0;
    std::vector<std::string> coord_names;
    Vec mean;
    Mat covariance;  // 0x0 when successes < 2
    Vec moment2, moment4;          // raw moments of the normalized errors
    Vec central2, central4;        // diagnostics: moments about the sample mean
    Vec mean_z;                    // mean / (sd / sqrt(successes))
    Vec theoretical_var;           // sandwich diagonal (when available)
    Vec var_rel_err;               // (cov_ii - theo_ii)/theo_ii
};

struct TailTable {
    std::vector<double> r;
    std::vector<double> freq_z1;
    std::vector<double> freq_z2;
    long samples = 0;
    long exhausted = 0;
};

struct McReport {
    std::string model_name;
    SamplingScheme scheme;
    int replications = 0;
    std::uint64_t master_seed = 0;
    long failure_count = 0;
    double failure_rate = 0.0;
    std::vector<std::pair<int, std::string>> failures;  // (rep, method: message)
    std::vector<MethodStats> stats;
    std::optional<AsymptoticCovariance> theory;
    TailTable tail;
    std::vector<NormalizedErrors> errors;  // successful rows, rep-major order

    // Wall-clock numbers live outside report.json so that reruns with the
    // same config and seed serialize byte-identically.
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

namespace detail {

inline nlohmann::json vec_json(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline nlohmann::json mat_json(const Mat& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
    return rows;
}

inline std::vector<std::string> coord_names(int d, int m1, int m2) {
    std::vector<std::string> names;
    const VechIndexer idx{d};
    for (int s = 1; s <= idx.size(); ++s) names.push_back("lambda" + std::to_string(s));
    for (int i = 1; i <= m1; ++i) names.push_back("alpha" + std::to_string(i));
    for (int i = 1; i <= m2; ++i) names.push_back("beta" + std::to_string(i));
    return names;
}

}  // namespace detail

inline nlohmann::json McReport::to_json() const {
    nlohmann::json j;
    j["model"] = model_name;
    j["scheme"] = {{"n", scheme.n},       {"h", scheme.h},         {"tau", scheme.tau},
                   {"p", scheme.p},       {"k", scheme.k},         {"delta", scheme.delta},
                   {"T", scheme.time_horizon()}, {"block_balance", scheme.block_balance()}};
    j["replications"] = replications;
    j["master_seed"] = master_seed;
    j["failure_count"] = failure_count;
    j["failure_rate"] = failure_rate;
    nlohmann::json fl = nlohmann::json::array();
    for (const auto& [rep, what] : failures) fl.push_back({{"rep", rep}, {"what", what}});
    j["failures"] = fl;

    nlohmann::json st = nlohmann::json::array();
    for (const MethodStats& s : stats) {
        nlohmann::json m;
        m["method"] = s.method;
        m["successes"] = s.successes;
        m["coordinates"] = s.coord_names;
        m["mean"] = detail::vec_json(s.mean);
        if (s.covariance.size() > 0)
            m["covariance"] = detail::mat_json(s.covariance);
        else
            m["covariance"] = nullptr;  // undefined below two successes
        m["moment2"] = detail::vec_json(s.moment2);
        m["moment4"] = detail::vec_json(s.moment4);
        m["central2"] = detail::vec_json(s.central2);
        m["central4"] = detail::vec_json(s.central4);
        m["mean_z"] = detail::vec_json(s.mean_z);
        m["theoretical_var"] = detail::vec_json(s.theoretical_var);
        m["var_rel_err"] = detail::vec_json(s.var_rel_err);
        st.push_back(m);
    }
    j["stats"] = st;

    if (theory) {
        j["theory"] = {{"i_matrix", detail::mat_json(theory->i_matrix)},
                       {"j_matrix", detail::mat_json(theory->j_matrix)},
                       {"sandwich", detail::mat_json(theory->sandwich)},
                       {"blocks", {{"noise", theory->noise_size()}, {"alpha", theory->m1},
                                   {"beta", theory->m2}}}};
    }
    nlohmann::json tl;
    tl["r"] = tail.r;
    tl["z1_freq"] = tail.freq_z1;
    tl["z2_freq"] = tail.freq_z2;
    tl["samples"] = tail.samples;
    tl["exhausted"] = tail.exhausted;
    j["tail"] = tl;
    return j;
}

inline McReport run_monte_carlo(const ExperimentConfig& cfg, int scheme_index = 0) {
    cfg.validate();
    const SamplingScheme& scheme = cfg.schemes.at(static_cast<std::size_t>(scheme_index));
    const auto t0 = std::chrono::steady_clock::now();

    McReport report;
    report.model_name = cfg.model.name;
    report.scheme = scheme;
    report.replications = cfg.replications;
    report.master_seed = cfg.master_seed;

    const bool has_estimators = cfg.run_ml || cfg.run_bayes;
    if (has_estimators)
        report.theory.emplace(
            information_matrices(cfg.model, cfg.truth, scheme.tau,
                                 invariant_measure_for(cfg.model, cfg.truth)));

    // Replications on independent streams; results land in rep order.
    std::vector<ReplicationResult> results(static_cast<std::size_t>(cfg.replications));
    {
        const unsigned hw = std::thread::hardware_concurrency();
        const int workers =
            std::max(1, cfg.threads > 0 ? cfg.threads : static_cast<int>(hw ? hw : 1));
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        auto work = [&] {
            for (;;) {
                const int rep = next.fetch_add(1);
                if (rep >= cfg.replications) return;
                results[static_cast<std::size_t>(rep)] = run_replication(cfg, scheme_index, rep);
            }
        };
        for (int w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
        for (auto& t : pool) t.join();
    }

    long attempted = 0;
    for (const auto& rr : results)
        for (const auto& e : rr.errors) {
            ++attempted;
            if (e.failed) {
                ++report.failure_count;
                report.failures.emplace_back(e.rep, e.method + ": " + e.failure);
            } else {
                report.errors.push_back(e);
            }
        }
    report.failure_rate =
        attempted > 0 ? static_cast<double>(report.failure_count) / static_cast<double>(attempted) : 0.0;
    if (report.errors.empty() && report.failure_count > 0)
        throw AllReplicationsFailed("run_monte_carlo: all replications failed");

    // Theoretical variances per coordinate (sandwich diagonal).
    const VechIndexer vidx{cfg.model.dim_state};
    Vec theo_var;
    std::vector<std::string> names;
    if (has_estimators) {
        theo_var = report.theory->sandwich.diagonal();
        names = detail::coord_names(cfg.model.dim_state, cfg.model.dim_alpha, cfg.model.dim_beta);
    } else {
        theo_var = w1_matrix(cfg.truth.noise).diagonal();
        names = detail::coord_names(cfg.model.dim_state, 0, 0);
    }

    std::vector<std::string> methods;
    if (cfg.run_ml) methods.push_back("ml");
    if (cfg.run_bayes) methods.push_back("bayes");
    if (!has_estimators) methods.push_back("none");

    for (const std::string& method : methods) {
        MethodStats st;
        st.method = method;
        st.coord_names = names;
        std::vector<const NormalizedErrors*> rows;
        for (const auto& e : report.errors)
            if (e.method == method) rows.push_back(&e);
        st.successes = static_cast<long>(rows.size());
        const int dim = static_cast<int>(names.size());
        st.mean = Vec::Zero(dim);
        st.moment2 = Vec::Zero(dim);
        st.moment4 = Vec::Zero(dim);
        st.central2 = Vec::Zero(dim);
        st.central4 = Vec::Zero(dim);
        st.mean_z = Vec::Zero(dim);
        st.theoretical_var = theo_var;
        st.var_rel_err = Vec::Constant(dim, std::numeric_limits<double>::quiet_NaN());
        if (!rows.empty()) {
            std::vector<KahanSum> m1(dim), m2(dim), m4(dim);
            for (const auto* e : rows) {
                const Vec v = e->joint();
                for (int c = 0; c < dim; ++c) {
                    m1[c].add(v(c));
                    m2[c].add(v(c) * v(c));
                    m4[c].add(v(c) * v(c) * v(c) * v(c));
                }
            }
            const double inv = 1.0 / static_cast<double>(rows.size());
            for (int c = 0; c < dim; ++c) {
                st.mean(c) = m1[c].value() * inv;
                st.moment2(c) = m2[c].value() * inv;
                st.moment4(c) = m4[c].value() * inv;
            }
            if (rows.size() >= 2) {
                // Two-pass covariance about the sample mean.
                Mat cov = Mat::Zero(dim, dim);
                std::vector<KahanSum> c4(dim);
                for (const auto* e : rows) {
                    const Vec v = e->joint() - st.mean;
                    cov.noalias() += v * v.transpose();
                    for (int c = 0; c < dim; ++c) c4[c].add(v(c) * v(c) * v(c) * v(c));
                }
                cov /= static_cast<double>(rows.size() - 1);
                st.covariance = cov;
                for (int c = 0; c < dim; ++c) {
                    st.central2(c) = cov(c, c);
                    st.central4(c) = c4[c].value() * inv;
                    const double sd = std::sqrt(cov(c, c));
                    st.mean_z(c) =
                        sd > 0.0 ? st.mean(c) / (sd / std::sqrt(static_cast<double>(rows.size())))
                                 : std::numeric_limits<double>::quiet_NaN();
                    if (theo_var(c) > 0.0)
                        st.var_rel_err(c) = (cov(c, c) - theo_var(c)) / theo_var(c);
                }
            }
        }
        report.stats.push_back(std::move(st));
    }

    if (!cfg.tail_r_grid.empty()) {
        report.tail.r = cfg.tail_r_grid;
        report.tail.freq_z1.assign(cfg.tail_r_grid.size(), 0.0);
        report.tail.freq_z2.assign(cfg.tail_r_grid.size(), 0.0);
        long samples = 0;
        for (const auto& rr : results) {
            if (!rr.tail.valid) continue;
            ++samples;
            for (std::size_t i = 0; i < cfg.tail_r_grid.size(); ++i) {
                const double thresh = std::exp(-cfg.tail_r_grid[i]);
                if (rr.tail.sup_z1[i] >= thresh) report.tail.freq_z1[i] += 1.0;
                if (rr.tail.sup_z2[i] >= thresh) report.tail.freq_z2[i] += 1.0;
                if (!std::isfinite(rr.tail.sup_z1[i]) || !std::isfinite(rr.tail.sup_z2[i]))
                    ++report.tail.exhausted;
            }
        }
        report.tail.samples = samples;
        if (samples > 0)
            for (std::size_t i = 0; i < cfg.tail_r_grid.size(); ++i) {
                report.tail.freq_z1[i] /= static_cast<double>(samples);
                report.tail.freq_z2[i] /= static_cast<double>(samples);
            }
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// The PLDI tail table alone (Theorem-1 large-deviation events measured on
/// the ML-chain random fields centered at the truth).
inline TailTable pldi_tail_table(ExperimentConfig cfg, const std::vector<double>& r_grid,
                                 int scheme_index = 0) {
    cfg.tail_r_grid = r_grid;
    cfg.run_ml = true;
    return run_monte_carlo(cfg, scheme_index).tail;
}

/// Writes report.json, errors.csv and tail.csv under `dir`.
inline void emit_report(const McReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("emit_report: cannot create " + dir.string() + ": " + ec.message());

    auto open = [&](const char* name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw std::runtime_error("emit_report: cannot write " + (dir / name).string());
        return os;
    };

    {
        std::ofstream os = open("report.json");
        os << report.to_json().dump(2) << '\n';
    }

    {
        std::ofstream os = open("errors.csv");
        os << "rep,method";
        const std::vector<std::string> names = report.stats.empty()
                                                   ? std::vector<std::string>{}
                                                   : report.stats.front().coord_names;
        for (const auto& n : names) os << ',' << n;
        os << '\n';
        char buf[32];
        for (const auto& e : report.errors) {
            os << e.rep << ',' << e.method;
            const Vec v = e.joint();
            for (int c = 0; c < v.size(); ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", v(c));
                os << ',' << buf;
            }
            os << '\n';
        }
    }

    {
        std::ofstream os = open("tail.csv");
        os << "r,z1_freq,z2_freq\n";
        char buf[32];
        for (std::size_t i = 0; i < report.tail.r.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", report.tail.r[i]);
            os << buf;
            std::snprintf(buf, sizeof(buf), "%.17g", report.tail.freq_z1[i]);
            os << ',' << buf;
            std::snprintf(buf, sizeof(buf), "%.17g", report.tail.freq_z2[i]);
            os << ',' << buf << '\n';
        }
    }
}

}  // namespace noisediff
