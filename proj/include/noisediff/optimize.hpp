#pragma once

// Derivative-free maximization over a closed box: Nelder-Mead with projection
// onto the box and a deterministic multistart lattice (center first, then the
// 2^m corners shrunk 10% toward the center).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "noisediff/quasilik.hpp"

namespace noisediff {

struct OptimizerConfig {
    int multistarts = 8;
    int max_iterations = 500;
    double param_tol = 1e-8;
    double objective_tol = 1e-10;
    enum class StartRule { lattice_corners_plus_center, user_list };
    StartRule start_rule = StartRule::lattice_corners_plus_center;
    std::vector<Vec> user_starts;

    void validate() const {
        if (multistarts < 1) throw std::invalid_argument("OptimizerConfig: multistarts >= 1");
        if (param_tol <= 0.0 || objective_tol <= 0.0)
            throw std::invalid_argument("OptimizerConfig: tolerances must be > 0");
    }
};

struct OptResult {
    Vec point;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    int restarts_agreeing = 0;
    bool converged = false;
    bool on_boundary = false;
};

namespace detail {

inline Vec project_to_box(const Box& box, Vec x) {
    for (int i = 0; i < x.size(); ++i) x(i) = std::clamp(x(i), box[i].lo, box[i].hi);
    return x;
}

inline bool lex_less(const Vec& a, const Vec& b) {
    for (int i = 0; i < a.size(); ++i) {
        if (a(i) < b(i)) return true;
        if (a(i) > b(i)) return false;
    }
    return false;
}

struct NmResult {
    Vec point;
    double value;
    int iterations;
    bool converged;
};

// Nelder-Mead on -f (minimization form), candidates projected into the box.
// NaN evaluations are treated as -inf and never accepted.
inline NmResult nelder_mead_box(const ObjectiveFn& f, const Vec& start, const OptimizerConfig& cfg) {
    const int m = f.dim();
    auto safe_eval = [&](const Vec& x) {
        const double v = f(x);
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };

    std::vector<Vec> simplex;
    std::vector<double> vals;
    simplex.push_back(project_to_box(f.box, start));
    for (int i = 0; i < m; ++i) {
        Vec v = simplex[0];
        double step = 0.05 * f.box[i].width();
        if (v(i) + step > f.box[i].hi) step = -step;
        v(i) += step;
        simplex.push_back(project_to_box(f.box, v));
    }
    for (const Vec& v : simplex) vals.push_back(safe_eval(v));

    auto order = [&] {
        std::vector<int> idx(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[a] > vals[b]; });
        std::vector<Vec> s2;
        std::vector<double> v2;
        for (int i : idx) {
            s2.push_back(simplex[i]);
            v2.push_back(vals[i]);
        }
        simplex.swap(s2);
        vals.swap(v2);
    };
    order();

    int iter = 0;
    bool converged = false;
    for (; iter < cfg.max_iterations; ++iter) {
        double diam = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i)
            diam = std::max(diam, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
        const double spread = std::abs(vals.front() - vals.back());
        if (diam <= cfg.param_tol * (1.0 + simplex[0].cwiseAbs().maxCoeff()) &&
            spread <= cfg.objective_tol * (1.0 + std::abs(vals.front()))) {
            converged = true;
            break;
        }

        Vec centroid = Vec::Zero(m);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
        centroid /= static_cast<double>(m);

        const Vec& worst = simplex.back();
        Vec reflected = project_to_box(f.box, centroid + (centroid - worst));
        const double fr = safe_eval(reflected);

        if (fr > vals[0]) {
            Vec expanded = project_to_box(f.box, centroid + 2.0 * (centroid - worst));
            const double fe = safe_eval(expanded);
            if (fe > fr) {
                simplex.back() = expanded;
                vals.back() = fe;
            } else {
                simplex.back() = reflected;
                vals.back() = fr;
            }
        } else if (fr > vals[vals.size() - 2]) {
            simplex.back() = reflected;
            vals.back() = fr;
        } else {
            Vec contracted = project_to_box(f.box, centroid + 0.5 * (worst - centroid));
            const double fc = safe_eval(contracted);
            if (fc > vals.back()) {
                simplex.back() = contracted;
                vals.back() = fc;
            } else {
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = project_to_box(f.box, simplex[0] + 0.5 * (simplex[i] - simplex[0]));
                    vals[i] = safe_eval(simplex[i]);
                }
            }
        }
        order();
    }
    return {simplex[0], vals[0], iter, converged};
}

}  // namespace detail

inline std::vector<Vec> multistart_points(const Box& box, const OptimizerConfig& cfg) {
    std::vector<Vec> starts;
    if (cfg.start_rule == OptimizerConfig::StartRule::user_list) {
        starts = cfg.user_starts;
        if (starts.empty()) throw std::invalid_argument("multistart_points: empty user start list");
    } else {
        const Vec center = box_center(box);
        starts.push_back(center);
        std::vector<Vec> corners;
        detail::enumerate_corners(box, corners);
        for (Vec& c : corners) starts.push_back(c + 0.1 * (center - c));
    }
    if (static_cast<int>(starts.size()) > cfg.multistarts)
        starts.resize(static_cast<std::size_t>(cfg.multistarts));
    return starts;
}

/// Multistart Nelder-Mead maximization. Ties across restarts break toward the
/// lexicographically smallest parameter vector.
inline OptResult maximize_box(const ObjectiveFn& f, const OptimizerConfig& cfg) {
    cfg.validate();
    const auto starts = multistart_points(f.box, cfg);

    OptResult best;
    std::vector<detail::NmResult> runs;
    bool any_converged = false;
    for (const Vec& s : starts) {
        runs.push_back(detail::nelder_mead_box(f, s, cfg));
        any_converged = any_converged || runs.back().converged;
    }
    if (!any_converged) throw std::runtime_error("optimizer stalled: no restart converged");

    int best_idx = -1;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!std::isfinite(runs[i].value)) continue;
        if (best_idx < 0 || runs[i].value > runs[best_idx].value ||
            (runs[i].value == runs[best_idx].value &&
             detail::lex_less(runs[i].point, runs[best_idx].point)))
            best_idx = static_cast<int>(i);
    }
    if (best_idx < 0) throw std::runtime_error("optimizer stalled: all restarts non-finite");

    best.point = runs[best_idx].point;
    best.value = runs[best_idx].value;
    best.iterations = runs[best_idx].iterations;
    best.converged = runs[best_idx].converged;
    for (const auto& r : runs)
        if (std::abs(r.value - best.value) <= 1e2 * cfg.objective_tol * (1.0 + std::abs(best.value)))
            ++best.restarts_agreeing;
    for (int i = 0; i < best.point.size(); ++i)
        if (best.point(i) <= f.box[i].lo || best.point(i) >= f.box[i].hi) best.on_boundary = true;
    return best;
}

}  // namespace noisediff
