// Command-line front end: simulate | estimate | asymptotics | surface | mc | tail.
// One declarative config file drives everything; --seed/--reps/--out/--threads
// override the corresponding config entries.
//
// Exit codes: 0 success, 2 config error, 3 all replications failed.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "noisediff/config.hpp"

namespace nd = noisediff;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::optional<std::string> out;
    std::optional<int> threads;
};

void apply(const Overrides& o, nd::ExperimentConfig& cfg) {
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.reps) cfg.replications = *o.reps;
    if (o.out) cfg.out_dir = *o.out;
    if (o.threads) cfg.threads = *o.threads;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_option("--reps", o.reps, "replication count override");
    cmd->add_option("--out", o.out, "output path override");
    cmd->add_option("--threads", o.threads, "worker thread count override");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw nd::ConfigError("cannot write output file: " + path);
    return os;
}

int cmd_simulate(const nd::ExperimentConfig& cfg, const std::string& out, bool latent) {
    const nd::SamplingScheme& scheme = cfg.schemes.front();
    const nd::LatentPath path = nd::simulate_path(cfg.model, cfg.truth, scheme, cfg.substeps,
                                                  {cfg.master_seed, 0});
    const nd::ObservationSeries series =
        nd::contaminate(path, cfg.truth.noise, nd::SimSeed{cfg.master_seed, 0});
    if (latent) {
        auto os = open_out(out + ".latent.csv");
        nd::write_csv(path, os);
    }
    auto os = open_out(out);
    nd::write_csv(series, os);
    std::cerr << "wrote " << out << " (n = " << scheme.n << ", p = " << scheme.p
              << ", k = " << scheme.k << ")\n";
    return 0;
}

int cmd_estimate(const nd::ExperimentConfig& cfg, const std::string& data,
                 const std::string& out) {
    const nd::SamplingScheme& scheme = cfg.schemes.front();
    nd::ObservationSeries series;
    if (!data.empty()) {
        series = nd::read_series_csv(data, scheme, cfg.model.dim_state);
    } else {
        const nd::LatentPath path = nd::simulate_path(cfg.model, cfg.truth, scheme, cfg.substeps,
                                                      {cfg.master_seed, 0});
        series = nd::contaminate(path, cfg.truth.noise, nd::SimSeed{cfg.master_seed, 0});
    }
    nlohmann::json j = nlohmann::json::array();
    if (cfg.run_ml) j.push_back(nd::adaptive_ml(series, cfg.model, scheme, cfg.opt).to_json());
    if (cfg.run_bayes) {
        nd::BayesConfig bc = cfg.bayes;
        bc.mcmc_master_seed = cfg.master_seed;
        j.push_back(nd::adaptive_bayes(series, cfg.model, scheme, cfg.priors, bc, cfg.opt).to_json());
    }
    if (!out.empty()) {
        auto os = open_out(out);
        os << j.dump(2) << '\n';
    } else {
        std::cout << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_asymptotics(const nd::ExperimentConfig& cfg, const std::string& out) {
    const nd::AsymptoticCovariance ac = nd::information_matrices(
        cfg.model, cfg.truth, cfg.schemes.front().tau, nd::invariant_measure_for(cfg.model, cfg.truth));
    nlohmann::json j;
    j["blocks"] = {{"noise", ac.noise_size()}, {"alpha", ac.m1}, {"beta", ac.m2}};
    auto mat = [](const nd::Mat& m) {
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
        return rows;
    };
    j["i_matrix"] = mat(ac.i_matrix);
    j["j_matrix"] = mat(ac.j_matrix);
    j["sandwich"] = mat(ac.sandwich);
    if (!out.empty()) {
        auto os = open_out(out);
        os << j.dump(2) << '\n';
    } else {
        std::cout << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_surface(const nd::ExperimentConfig& cfg, const nlohmann::json& root, const std::string& out) {
    if (!root.contains("surface")) throw nd::ConfigError("surface subcommand needs a [surface] table");
    const auto& sj = root.at("surface");
    const std::string objective = sj.value("objective", "h1");
    if (!sj.contains("grid")) throw nd::ConfigError("[surface] needs grid = [[lo, hi, count], ...]");

    const nd::SamplingScheme& scheme = cfg.schemes.front();
    const nd::LatentPath path =
        nd::simulate_path(cfg.model, cfg.truth, scheme, cfg.substeps, {cfg.master_seed, 0});
    const nd::ObservationSeries series =
        nd::contaminate(path, cfg.truth.noise, nd::SimSeed{cfg.master_seed, 0});
    const nd::QuasiLikContext ctx = nd::make_context(nd::local_means(series), cfg.model,
                                                     nd::noise_variance_estimate(series));

    nd::ObjectiveFn f;
    if (objective == "h1") {
        f = nd::bind_h1(ctx);
    } else if (objective == "h2") {
        nd::Vec plug = cfg.truth.alpha;
        if (sj.contains("alpha")) {
            const auto& a = sj.at("alpha");
            plug.resize(static_cast<int>(a.size()));
            for (std::size_t i = 0; i < a.size(); ++i) plug(static_cast<int>(i)) = a[i].get<double>();
        }
        f = nd::bind_h2(ctx, plug);
    } else {
        throw nd::ConfigError("surface objective must be h1 or h2");
    }

    const auto& grid = sj.at("grid");
    if (static_cast<int>(grid.size()) != f.dim())
        throw nd::ConfigError("[surface] grid rank must match the objective dimension");
    std::vector<std::vector<double>> axes;
    for (const auto& g : grid) {
        const double lo = g.at(0).get<double>(), hi = g.at(1).get<double>();
        const int count = g.at(2).get<int>();
        if (count < 2 || !(hi > lo)) throw nd::ConfigError("[surface] grid rows are [lo, hi, count>=2]");
        std::vector<double> axis(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            axis[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
        axes.push_back(std::move(axis));
    }

    auto os = open_out(out.empty() ? "surface.csv" : out);
    for (int i = 0; i < f.dim(); ++i) os << "param" << i + 1 << ',';
    os << "value\n";
    std::vector<std::size_t> idx(axes.size(), 0);
    std::vector<double> point(axes.size());
    char buf[32];
    for (;;) {
        for (std::size_t i = 0; i < axes.size(); ++i) point[i] = axes[i][idx[i]];
        double v;
        try {
            v = f(std::span<const double>(point));
        } catch (const std::exception&) {
            v = std::numeric_limits<double>::quiet_NaN();
        }
        for (double p : point) {
            std::snprintf(buf, sizeof(buf), "%.17g", p);
            os << buf << ',';
        }
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf << '\n';
        std::size_t i = axes.size();
        for (; i-- > 0;) {
            if (++idx[i] < axes[i].size()) break;
            idx[i] = 0;
            if (i == 0) return 0;
        }
        if (i == static_cast<std::size_t>(-1)) break;
    }
    return 0;
}

int cmd_mc(const nd::ExperimentConfig& cfg) {
    for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
        const nd::McReport report = nd::run_monte_carlo(cfg, static_cast<int>(s));
        const std::filesystem::path dir = cfg.schemes.size() == 1
                                              ? std::filesystem::path(cfg.out_dir)
                                              : std::filesystem::path(cfg.out_dir) /
                                                    ("scheme_" + std::to_string(s));
        nd::emit_report(report, dir);
        std::cerr << "scheme " << s << ": n = " << report.scheme.n << ", M = " << report.replications
                  << ", failures = " << report.failure_count << ", wall = " << report.wall_seconds
                  << " s -> " << dir.string() << '\n';
    }
    return 0;
}

int cmd_tail(const nd::ExperimentConfig& cfg) {
    if (cfg.tail_r_grid.empty()) throw nd::ConfigError("tail subcommand needs [tail] r_grid");
    const nd::McReport report = nd::run_monte_carlo(cfg, 0);
    nd::emit_report(report, cfg.out_dir);
    std::cout << "r,z1_freq,z2_freq\n";
    for (std::size_t i = 0; i < report.tail.r.size(); ++i)
        std::cout << report.tail.r[i] << ',' << report.tail.freq_z1[i] << ','
                  << report.tail.freq_z2[i] << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive estimation for ergodic diffusions under observation noise"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path;
    bool latent = false;
    Overrides ov;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config file")->required();
        add_overrides(cmd, ov);
    };

    CLI::App* c_sim = app.add_subcommand("simulate", "simulate one noisy observation series (CSV)");
    add_config(c_sim);
    c_sim->add_flag("--latent", latent, "also dump the latent path");

    CLI::App* c_est = app.add_subcommand("estimate", "run the configured estimators on one dataset");
    add_config(c_est);
    c_est->add_option("--data", data_path, "series CSV (simulate format); default: simulate");

    CLI::App* c_asy = app.add_subcommand("asymptotics", "theoretical information matrices (JSON)");
    add_config(c_asy);

    CLI::App* c_sur = app.add_subcommand("surface", "objective-surface dump over a grid (CSV)");
    add_config(c_sur);

    CLI::App* c_mc = app.add_subcommand("mc", "Monte Carlo replication run");
    add_config(c_mc);

    CLI::App* c_tail = app.add_subcommand("tail", "PLDI tail-frequency table");
    add_config(c_tail);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const nlohmann::json root = nd::load_config_file(config_path);
        nd::ExperimentConfig cfg = nd::load_experiment(root);
        apply(ov, cfg);

        if (c_sim->parsed())
            return cmd_simulate(cfg, ov.out.value_or(cfg.out_dir + ".series.csv"), latent);
        if (c_est->parsed()) return cmd_estimate(cfg, data_path, ov.out.value_or(""));
        if (c_asy->parsed()) return cmd_asymptotics(cfg, ov.out.value_or(""));
        if (c_sur->parsed()) return cmd_surface(cfg, root, ov.out.value_or(""));
        if (c_mc->parsed()) return cmd_mc(cfg);
        if (c_tail->parsed()) return cmd_tail(cfg);
        return 2;
    } catch (const nd::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 2;
    } catch (const nd::AllReplicationsFailed& ex) {
        std::cerr << ex.what() << '\n';
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
}
