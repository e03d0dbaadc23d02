#pragma once

// Parametric diffusion models dX = b(X,beta)dt + a(X,alpha)dw observed as
// Y_i = X_i + Lambda^{1/2} eps_i on the grid {i*h}, together with the block
// sampling design used by the preaveraged quasi-likelihoods.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noisediff/linalg.hpp"

namespace noisediff {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool interior(double x) const { return x > lo && x < hi; }
};

using Box = std::vector<Interval>;

inline bool box_contains(const Box& box, std::span<const double> x) {
    if (x.size() != box.size()) return false;
    for (std::size_t i = 0; i < box.size(); ++i)
        if (!box[i].contains(x[i])) return false;
    return true;
}

inline bool box_interior(const Box& box, std::span<const double> x) {
    if (x.size() != box.size()) return false;
    for (std::size_t i = 0; i < box.size(); ++i)
        if (!box[i].interior(x[i])) return false;
    return true;
}

inline Vec box_center(const Box& box) {
    Vec c(static_cast<int>(box.size()));
    for (std::size_t i = 0; i < box.size(); ++i) c(static_cast<int>(i)) = box[i].mid();
    return c;
}

/// Drift callback: fills out[0..d) with b(x, beta).
using DriftFn =
    std::function<void(std::span<const double> x, std::span<const double> beta, std::span<double> out)>;
/// Diffusion callback: fills out[0..d*r) row-major with a(x, alpha).
using DiffusionFn =
    std::function<void(std::span<const double> x, std::span<const double> alpha, std::span<double> out)>;

struct DiffusionModel {
    int dim_state = 1;  // d
    int dim_noise = 1;  // r
    int dim_alpha = 1;  // m1
    int dim_beta = 1;   // m2
    DriftFn drift;
    DiffusionFn diffusion;
    Box alpha_box;
    Box beta_box;
    std::string name;

    // Closed-form invariant law N(mean, variance), if the model has one
    // (scalar models only; used by the asymptotics quadrature).
    std::optional<std::function<std::pair<double, double>(std::span<const double> alpha,
                                                          std::span<const double> beta)>>
        invariant_gaussian;

    void validate() const {
        if (dim_state < 1 || dim_noise < 1 || dim_alpha < 1 || dim_beta < 1)
            throw std::invalid_argument("DiffusionModel: dimensions must be positive");
        if (static_cast<int>(alpha_box.size()) != dim_alpha ||
            static_cast<int>(beta_box.size()) != dim_beta)
            throw std::invalid_argument("DiffusionModel: box sizes must match parameter dimensions");
        for (const auto& iv : alpha_box)
            if (!(iv.width() > 0.0) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
                throw std::invalid_argument("DiffusionModel: alpha_box must have positive finite width");
        for (const auto& iv : beta_box)
            if (!(iv.width() > 0.0) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
                throw std::invalid_argument("DiffusionModel: beta_box must have positive finite width");
        if (!drift || !diffusion)
            throw std::invalid_argument("DiffusionModel: drift and diffusion callbacks required");
    }

    /// A(x, alpha) = a a^T.
    Mat diffusion_matrix(std::span<const double> x, std::span<const double> alpha) const {
        Mat a(dim_state, dim_noise);
        std::vector<double> buf(static_cast<std::size_t>(dim_state) * dim_noise);
        diffusion(x, alpha, buf);
        for (int i = 0; i < dim_state; ++i)
            for (int j = 0; j < dim_noise; ++j) a(i, j) = buf[static_cast<std::size_t>(i) * dim_noise + j];
        return a * a.transpose();
    }

    Vec drift_vec(std::span<const double> x, std::span<const double> beta) const {
        Vec b(dim_state);
        drift(x, beta, {b.data(), static_cast<std::size_t>(dim_state)});
        return b;
    }
};

enum class NoiseFamily { gaussian, uniform_symmetric, rademacher_product };

inline const char* to_string(NoiseFamily f) {
    switch (f) {
        case NoiseFamily::gaussian: return "gaussian";
        case NoiseFamily::uniform_symmetric: return "uniform_symmetric";
        case NoiseFamily::rademacher_product: return "rademacher_product";
    }
    return "?";
}

inline NoiseFamily noise_family_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseFamily::gaussian;
    if (s == "uniform_symmetric") return NoiseFamily::uniform_symmetric;
    if (s == "rademacher_product") return NoiseFamily::rademacher_product;
    throw std::invalid_argument("unknown noise family: " + s);
}

/// Additive observation noise Lambda^{1/2} eps with eps i.i.d., mean zero,
/// unit variance and vanishing odd moments per coordinate.
struct NoiseSpec {
    Mat lambda = Mat::Zero(1, 1);
    NoiseFamily family = NoiseFamily::gaussian;

    void validate() const {
        if (lambda.rows() != lambda.cols() || lambda.rows() < 1)
            throw std::invalid_argument("NoiseSpec: lambda must be square");
        if (!is_symmetric(lambda)) throw std::invalid_argument("NoiseSpec: lambda must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(lambda);
        if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + lambda.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("NoiseSpec: lambda must be positive semi-definite");
    }

    int dim() const { return static_cast<int>(lambda.rows()); }

    /// E[eps^4] - 3 for one coordinate of the standardized noise.
    double excess_kurtosis() const {
        switch (family) {
            case NoiseFamily::gaussian: return 0.0;
            case NoiseFamily::uniform_symmetric: return -1.2;  // E x^4 = 9/5 on U(-sqrt3, sqrt3)
            case NoiseFamily::rademacher_product: return -2.0;  // E x^4 = 1
        }
        return 0.0;
    }

    Vec excess_kurtosis_per_coord() const { return Vec::Constant(dim(), excess_kurtosis()); }

    Mat sqrt() const { return psd_sqrt(lambda); }
};

/// Observation/block design: n increments of step h, blocks of p = round(h^{-1/tau})
/// observations spanning delta = p*h, k = floor(n/p) blocks.
struct SamplingScheme {
    long n = 0;
    double h = 0.0;
    double tau = 2.0;
    long p = 0;
    long k = 0;
    double delta = 0.0;

    double time_horizon() const { return static_cast<double>(n) * h; }  // T_n
    double block_balance() const { return static_cast<double>(k) * delta * delta; }  // k_n Delta_n^2

    bool consistent_with(const SamplingScheme& other) const {
        return n == other.n && h == other.h && tau == other.tau && p == other.p && k == other.k;
    }
};

inline SamplingScheme build_scheme(long n, double h, double tau) {
    if (n < 1) throw std::domain_error("build_scheme: n must be >= 1");
    if (!(h > 0.0)) throw std::domain_error("build_scheme: h must be > 0");
    if (!(tau > 1.0) || !(tau <= 2.0)) throw std::domain_error("build_scheme: tau must lie in (1, 2]");
    SamplingScheme s;
    s.n = n;
    s.h = h;
    s.tau = tau;
    s.p = std::max(2L, std::lround(std::pow(h, -1.0 / tau)));
    s.k = n / s.p;
    s.delta = static_cast<double>(s.p) * h;
    if (s.k < 3) throw std::domain_error("build_scheme: insufficient blocks (k_n < 3)");
    return s;
}

struct TrueParameters {
    Vec alpha;
    Vec beta;
    NoiseSpec noise;
    Vec x0;

    void validate(const DiffusionModel& model) const {
        if (alpha.size() != model.dim_alpha || beta.size() != model.dim_beta)
            throw std::invalid_argument("TrueParameters: dimension mismatch with model");
        if (!box_interior(model.alpha_box, {alpha.data(), static_cast<std::size_t>(alpha.size())}))
            throw std::invalid_argument("TrueParameters: alpha_star must be interior to alpha_box");
        if (!box_interior(model.beta_box, {beta.data(), static_cast<std::size_t>(beta.size())}))
            throw std::invalid_argument("TrueParameters: beta_star must be interior to beta_box");
        if (x0.size() != model.dim_state)
            throw std::invalid_argument("TrueParameters: x0 dimension mismatch");
        noise.validate();
        if (noise.dim() != model.dim_state)
            throw std::invalid_argument("TrueParameters: noise dimension mismatch");
    }
};

struct ValidationReport {
    double min_det_A = 0.0;       // over probe grid x alpha box corners and center
    bool det_positive = false;
    double block_balance = 0.0;   // k_n Delta_n^2
    double time_horizon = 0.0;    // T_n
    bool p_at_least_2 = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline void enumerate_corners(const Box& box, std::vector<Vec>& out) {
    const int m = static_cast<int>(box.size());
    const long count = 1L << m;
    for (long mask = 0; mask < count; ++mask) {
        Vec v(m);
        for (int i = 0; i < m; ++i) v(i) = (mask >> i) & 1 ? box[i].hi : box[i].lo;
        out.push_back(std::move(v));
    }
}

}  // namespace detail

/// Report-only check of the machine-decidable parts of the standing
/// assumptions: non-degeneracy of A over a probe grid, block balance,
/// horizon growth. Limit conditions are documented prerequisites.
inline ValidationReport validate_assumptions(const DiffusionModel& model, const SamplingScheme& scheme,
                                             const std::vector<Vec>& probe_grid) {
    if (probe_grid.empty()) throw std::invalid_argument("validate_assumptions: probe grid is empty");
    ValidationReport rep;
    std::vector<Vec> alphas;
    detail::enumerate_corners(model.alpha_box, alphas);
    alphas.push_back(box_center(model.alpha_box));
    double min_det = std::numeric_limits<double>::infinity();
    for (const Vec& x : probe_grid) {
        for (const Vec& a : alphas) {
            const Mat A = model.diffusion_matrix({x.data(), static_cast<std::size_t>(x.size())},
                                                 {a.data(), static_cast<std::size_t>(a.size())});
            min_det = std::min(min_det, A.determinant());
        }
    }
    rep.min_det_A = min_det;
    rep.det_positive = min_det > 0.0;
    rep.block_balance = scheme.block_balance();
    rep.time_horizon = scheme.time_horizon();
    rep.p_at_least_2 = scheme.p >= 2;
    if (!rep.det_positive) rep.warnings.push_back("min det A(x, alpha) <= 0 on probe grid");
    if (rep.block_balance >= 1.0)
        rep.warnings.push_back("k_n * Delta_n^2 = " + std::to_string(rep.block_balance) +
                               " >= 1: block-balance condition is far from its limit");
    if (!rep.p_at_least_2) rep.warnings.push_back("p_n < 2");
    return rep;
}

/// 1-D Ornstein-Uhlenbeck reference model: dX = -beta1 (X - beta2) dt + alpha dW.
inline DiffusionModel builtin_ou_model() {
    DiffusionModel m;
    m.name = "ou1d";
    m.dim_state = 1;
    m.dim_noise = 1;
    m.dim_alpha = 1;
    m.dim_beta = 2;
    m.alpha_box = {{0.1, 2.0}};
    m.beta_box = {{0.1, 5.0}, {-5.0, 5.0}};
    m.drift = [](std::span<const double> x, std::span<const double> beta, std::span<double> out) {
        out[0] = -beta[0] * (x[0] - beta[1]);
    };
    m.diffusion = [](std::span<const double>, std::span<const double> alpha, std::span<double> out) {
        out[0] = alpha[0];
    };
    m.invariant_gaussian = [](std::span<const double> alpha, std::span<const double> beta) {
        return std::pair<double, double>{beta[1], alpha[0] * alpha[0] / (2.0 * beta[0])};
    };
    return m;
}

/// Degenerate constant model (b = a = 0): pure-noise designs. Exempt from the
/// non-degeneracy assumption; only the noise estimator is meaningful on it.
inline DiffusionModel builtin_const_model() {
    DiffusionModel m;
    m.name = "const1d";
    m.dim_state = 1;
    m.dim_noise = 1;
    m.dim_alpha = 1;
    m.dim_beta = 1;
    m.alpha_box = {{-1.0, 1.0}};
    m.beta_box = {{-1.0, 1.0}};
    m.drift = [](std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    m.diffusion = [](std::span<const double>, std::span<const double>, std::span<double> out) {
        out[0] = 0.0;
    };
    return m;
}

namespace detail {

inline std::map<std::string, std::function<DiffusionModel()>>& model_registry() {
    static std::map<std::string, std::function<DiffusionModel()>> reg = {
        {"ou1d", builtin_ou_model},
        {"const1d", builtin_const_model},
    };
    return reg;
}

inline std::mutex& model_registry_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

inline void register_model(const std::string& name, std::function<DiffusionModel()> factory) {
    std::lock_guard<std::mutex> lock(detail::model_registry_mutex());
    detail::model_registry()[name] = std::move(factory);
}

inline DiffusionModel make_model(const std::string& name) {
    std::lock_guard<std::mutex> lock(detail::model_registry_mutex());
    const auto& reg = detail::model_registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw std::invalid_argument("unknown model: " + name);
    DiffusionModel m = it->second();
    m.validate();
    return m;
}

}  // namespace noisediff
