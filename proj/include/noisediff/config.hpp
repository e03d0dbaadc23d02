#pragma once

// Declarative experiment configuration: a key-value file with nested tables
// ([section], [section.sub], repeated [[section]] for lists of tables),
// strings, numbers, booleans and (nested) single-line arrays. Files ending
// in .json are parsed as JSON with the same schema.

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "noisediff/harness.hpp"

namespace noisediff {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline nlohmann::json parse_value(const std::string& s, std::size_t& i, int line);

inline nlohmann::json parse_array(const std::string& s, std::size_t& i, int line) {
    nlohmann::json arr = nlohmann::json::array();
    ++i;  // consume '['
    skip_ws(s, i);
    if (i < s.size() && s[i] == ']') {
        ++i;
        return arr;
    }
    for (;;) {
        arr.push_back(parse_value(s, i, line));
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            skip_ws(s, i);
            continue;
        }
        if (i < s.size() && s[i] == ']') {
            ++i;
            return arr;
        }
        throw ConfigError("config line " + std::to_string(line) + ": expected ',' or ']' in array");
    }
}

inline nlohmann::json parse_value(const std::string& s, std::size_t& i, int line) {
    skip_ws(s, i);
    if (i >= s.size()) throw ConfigError("config line " + std::to_string(line) + ": missing value");
    if (s[i] == '[') return parse_array(s, i, line);
    if (s[i] == '"') {
        std::string out;
        for (++i; i < s.size() && s[i] != '"'; ++i) out += s[i];
        if (i >= s.size()) throw ConfigError("config line " + std::to_string(line) + ": unterminated string");
        ++i;
        return out;
    }
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != ' ' && s[i] != '\t') ++i;
    const std::string tok = s.substr(start, i - start);
    if (tok == "true") return true;
    if (tok == "false") return false;
    {
        long long v = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec == std::errc() && p == tok.data() + tok.size()) return v;
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used == tok.size()) return v;
    } catch (...) {
    }
    throw ConfigError("config line " + std::to_string(line) + ": cannot parse value '" + tok + "'");
}

inline nlohmann::json* descend(nlohmann::json& root, const std::string& dotted, int line) {
    nlohmann::json* cur = &root;
    std::size_t pos = 0;
    while (pos <= dotted.size()) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string part = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (part.empty()) throw ConfigError("config line " + std::to_string(line) + ": bad table name");
        nlohmann::json& next = (*cur)[part];
        if (next.is_array()) {
            if (next.empty()) next.push_back(nlohmann::json::object());
            cur = &next.back();
        } else {
            if (next.is_null()) next = nlohmann::json::object();
            cur = &next;
        }
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    return cur;
}

}  // namespace detail

inline nlohmann::json parse_config_text(std::istream& in) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        // strip comments outside of strings
        std::string s;
        bool quoted = false;
        for (char c : raw) {
            if (c == '"') quoted = !quoted;
            if (c == '#' && !quoted) break;
            s += c;
        }
        std::size_t i = 0;
        detail::skip_ws(s, i);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        if (i >= s.size()) continue;

        if (s[i] == '[') {
            const bool repeated = i + 1 < s.size() && s[i + 1] == '[';
            const std::size_t open = i + (repeated ? 2 : 1);
            const std::size_t close = s.find(repeated ? "]]" : "]", open);
            if (close == std::string::npos)
                throw ConfigError("config line " + std::to_string(line) + ": unterminated table header");
            const std::string name = s.substr(open, close - open);
            if (repeated) {
                // [[name]] appends a new element to the array at `name`
                const std::size_t dot = name.rfind('.');
                nlohmann::json* parent =
                    dot == std::string::npos ? &root : detail::descend(root, name.substr(0, dot), line);
                const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
                nlohmann::json& arr = (*parent)[leaf];
                if (arr.is_null()) arr = nlohmann::json::array();
                if (!arr.is_array())
                    throw ConfigError("config line " + std::to_string(line) + ": [[" + name +
                                      "]] conflicts with an existing key");
                arr.push_back(nlohmann::json::object());
                table = &arr.back();
            } else {
                table = detail::descend(root, name, line);
            }
            continue;
        }

        const std::size_t eq = s.find('=', i);
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line) + ": expected 'key = value'");
        std::string key = s.substr(i, eq - i);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        if (key.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty key");
        std::size_t vi = eq + 1;
        (*table)[key] = detail::parse_value(s, vi, line);
        detail::skip_ws(s, vi);
        if (vi < s.size())
            throw ConfigError("config line " + std::to_string(line) + ": trailing characters");
    }
    return root;
}

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& ex) {
            throw ConfigError("config '" + path + "': " + ex.what());
        }
        return j;
    }
    return parse_config_text(in);
}

namespace detail {

inline Vec json_vec(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + ": expected an array");
    Vec v(static_cast<int>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(what + ": expected numbers");
        v(static_cast<int>(i)) = j[i].get<double>();
    }
    return v;
}

inline Mat json_mat(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ConfigError(what + ": expected a matrix (array of rows)");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols) throw ConfigError(what + ": ragged matrix");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

inline Box json_box(const nlohmann::json& j, const std::string& what) {
    Box box;
    if (!j.is_array()) throw ConfigError(what + ": expected [[lo, hi], ...]");
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2) throw ConfigError(what + ": expected [lo, hi] pairs");
        box.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    return box;
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& ex) {
        throw ConfigError("config key '" + key + "': " + ex.what());
    }
}

}  // namespace detail

inline ExperimentConfig load_experiment(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        const auto model_j = j.value("model", nlohmann::json::object());
        cfg.model_name = detail::get_or<std::string>(model_j, "name", "ou1d");
        cfg.model = make_model(cfg.model_name);
        if (model_j.contains("boxes")) {
            const auto& b = model_j.at("boxes");
            if (b.contains("alpha")) cfg.model.alpha_box = detail::json_box(b.at("alpha"), "model.boxes.alpha");
            if (b.contains("beta")) cfg.model.beta_box = detail::json_box(b.at("beta"), "model.boxes.beta");
            cfg.model.validate();
        }

        if (!j.contains("truth")) throw ConfigError("missing [truth] table");
        const auto& t = j.at("truth");
        cfg.truth.alpha = detail::json_vec(t.at("alpha"), "truth.alpha");
        cfg.truth.beta = detail::json_vec(t.at("beta"), "truth.beta");
        cfg.truth.noise.lambda = detail::json_mat(t.at("lambda"), "truth.lambda");
        cfg.truth.x0 = t.contains("x0") ? detail::json_vec(t.at("x0"), "truth.x0")
                                        : Vec::Zero(cfg.model.dim_state);
        cfg.x0_stationary = detail::get_or<bool>(t, "x0_stationary", false);
        cfg.truth.noise.family = noise_family_from_string(
            detail::get_or<std::string>(j.value("noise", nlohmann::json::object()), "family", "gaussian"));

        if (!j.contains("scheme")) throw ConfigError("missing [[scheme]] table(s)");
        const auto& schemes = j.at("scheme");
        const auto load_scheme = [](const nlohmann::json& s) {
            return build_scheme(s.at("n").get<long>(), s.at("h").get<double>(),
                                s.at("tau").get<double>());
        };
        if (schemes.is_array())
            for (const auto& s : schemes) cfg.schemes.push_back(load_scheme(s));
        else
            cfg.schemes.push_back(load_scheme(schemes));

        const auto sim = j.value("sim", nlohmann::json::object());
        cfg.substeps = detail::get_or<int>(sim, "substeps", 10);

        const auto est = j.value("estimators", nlohmann::json::object());
        cfg.run_ml = detail::get_or<bool>(est, "ml", true);
        cfg.run_bayes = detail::get_or<bool>(est, "bayes", false);

        const auto opt = j.value("optimizer", nlohmann::json::object());
        cfg.opt.multistarts = detail::get_or<int>(opt, "multistarts", cfg.opt.multistarts);
        cfg.opt.max_iterations = detail::get_or<int>(opt, "max_iterations", cfg.opt.max_iterations);
        cfg.opt.param_tol = detail::get_or<double>(opt, "param_tol", cfg.opt.param_tol);
        cfg.opt.objective_tol = detail::get_or<double>(opt, "objective_tol", cfg.opt.objective_tol);

        const auto bay = j.value("bayes", nlohmann::json::object());
        if (bay.contains("method")) {
            const std::string m = bay.at("method").get<std::string>();
            if (m == "gauss_legendre")
                cfg.bayes.method = BayesConfig::Method::gauss_legendre;
            else if (m == "metropolis")
                cfg.bayes.method = BayesConfig::Method::metropolis;
            else
                throw ConfigError("bayes.method must be gauss_legendre or metropolis");
        }
        cfg.bayes.nodes_per_dim = detail::get_or<int>(bay, "nodes_per_dim", cfg.bayes.nodes_per_dim);
        cfg.bayes.mcmc_draws = detail::get_or<int>(bay, "mcmc_draws", cfg.bayes.mcmc_draws);
        cfg.bayes.burn_in = detail::get_or<int>(bay, "burn_in", cfg.bayes.burn_in);
        if (bay.contains("proposal_scale")) cfg.bayes.proposal_scale = bay.at("proposal_scale").get<double>();

        const auto mc = j.value("mc", nlohmann::json::object());
        cfg.replications = detail::get_or<int>(mc, "replications", cfg.replications);
        cfg.master_seed = detail::get_or<std::uint64_t>(mc, "master_seed", cfg.master_seed);
        cfg.threads = detail::get_or<int>(mc, "threads", cfg.threads);

        const auto tail = j.value("tail", nlohmann::json::object());
        if (tail.contains("r_grid"))
            for (const auto& r : tail.at("r_grid")) cfg.tail_r_grid.push_back(r.get<double>());
        cfg.tail_directions = detail::get_or<int>(tail, "directions_per_pair", cfg.tail_directions);
        cfg.tail_radii = detail::get_or<int>(tail, "radii", cfg.tail_radii);

        cfg.out_dir = detail::get_or<std::string>(j.value("output", nlohmann::json::object()), "dir", "out");

        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("invalid experiment config: ") + ex.what());
    }
    return cfg;
}

/// Reads a series CSV in the simulate dump format ("t,y1..yd").
inline ObservationSeries read_series_csv(const std::string& path, const SamplingScheme& scheme,
                                         int dim) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file: " + path);
    ObservationSeries series;
    series.scheme = scheme;
    series.dim = dim;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty data file: " + path);
    long rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) throw ConfigError(path + ": bad row");
        for (int c = 0; c < dim; ++c) {
            if (!std::getline(ss, cell, ',')) throw ConfigError(path + ": too few columns");
            series.values.push_back(std::stod(cell));
        }
        ++rows;
    }
    if (rows != scheme.n + 1)
        throw ConfigError(path + ": expected " + std::to_string(scheme.n + 1) + " rows, got " +
                          std::to_string(rows));
    return series;
}

}  // namespace noisediff
