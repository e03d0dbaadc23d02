#pragma once

// Quasi-likelihoods built from local means:
//   H1(alpha; Lambda) = -1/2 sum_{j=1}^{k-2} { ((2/3) Delta An(x_j, alpha, Lambda))^{-1}
//                         [(inc_j)^{x2}] + log det An(x_j, alpha, Lambda) }
//   H2(beta; alpha)   = -1/2 sum_{j=1}^{k-2} (Delta A(x_j, alpha))^{-1}
//                         [(inc_j - Delta b(x_j, beta))^{x2}]
// with x_j = Ybar_{j-1}, inc_j = Ybar_{j+1} - Ybar_j and
// An(x, alpha, Lambda) = A(x, alpha) + 3 Delta^{(2-tau)/(tau-1)} Lambda.
// The modified matrix keeps the residual noise term alive at tau = 2 (factor
// exactly 3 Lambda) and lets it vanish for tau < 2.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noisediff/linalg.hpp"
#include "noisediff/preaverage.hpp"

namespace noisediff {

/// Lambda-hat = (1/2n) sum_{i=0}^{n-1} (Y_{i+1} - Y_i)^{x2}; symmetric PSD by
/// construction, uses all n increments regardless of block truncation.
inline Mat noise_variance_estimate(const ObservationSeries& series) {
    const int d = series.dim;
    const long count = series.count();
    if (count < 2) throw std::invalid_argument("noise_variance_estimate: need at least 2 observations");
    std::vector<KahanSum> acc(static_cast<std::size_t>(d) * d);
    for (long i = 0; i + 1 < count; ++i) {
        const double* y0 = series.values.data() + static_cast<std::size_t>(i) * d;
        const double* y1 = y0 + d;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                acc[static_cast<std::size_t>(a) * d + b].add((y1[a] - y0[a]) * (y1[b] - y0[b]));
    }
    Mat out(d, d);
    const double scale = 0.5 / static_cast<double>(count - 1);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) out(a, b) = scale * acc[static_cast<std::size_t>(a) * d + b].value();
    return 0.5 * (out + out.transpose());
}

/// Delta^{(2-tau)/(tau-1)}; exactly 1 at tau = 2 so the noise term is 3*Lambda.
inline double delta_power_factor(const SamplingScheme& scheme) {
    if (scheme.tau == 2.0) return 1.0;
    return std::pow(scheme.delta, (2.0 - scheme.tau) / (scheme.tau - 1.0));
}

/// An(x, alpha, Lambda) = A(x, alpha) + 3 Delta^{(2-tau)/(tau-1)} Lambda.
inline Mat modified_diffusion_matrix(const DiffusionModel& model, std::span<const double> x,
                                     std::span<const double> alpha, const Mat& lambda,
                                     const SamplingScheme& scheme) {
    return model.diffusion_matrix(x, alpha) + 3.0 * delta_power_factor(scheme) * lambda;
}

struct QuasiLikContext {
    LocalMeanSeries lm;
    SamplingScheme scheme;
    DiffusionModel model;
    Mat lambda_hat;        // PSD-clipped plug-in
    double jitter = 1e-10;
};

inline QuasiLikContext make_context(LocalMeanSeries lm, DiffusionModel model, Mat lambda_hat,
                                    double jitter = 1e-10) {
    if (jitter < 0.0) throw std::invalid_argument("make_context: jitter must be >= 0");
    QuasiLikContext ctx;
    ctx.scheme = lm.scheme;
    ctx.lm = std::move(lm);
    ctx.model = std::move(model);
    ctx.lambda_hat = psd_clip(lambda_hat);
    ctx.jitter = jitter;
    return ctx;
}

namespace detail {

[[noreturn]] inline void throw_non_pd() {
    throw std::runtime_error("non-PD weight matrix (Cholesky failed at maximal jitter)");
}

// Scalar weight with escalating jitter: returns v + j with the smallest
// escalation j in {jitter, 10*jitter, ..., <= 1e-6} making it positive.
inline double jittered_positive(double v, double jitter) {
    double j = jitter;
    for (;;) {
        if (v + j > 0.0) return v + j;
        if (j == 0.0)
            j = 1e-10;
        else
            j *= 10.0;
        if (j > 1e-6) throw_non_pd();
    }
}

inline Eigen::LLT<Mat> jittered_llt(const Mat& m, double jitter) {
    const int d = static_cast<int>(m.rows());
    double j = jitter;
    for (;;) {
        Eigen::LLT<Mat> llt(m + j * Mat::Identity(d, d));
        if (llt.info() == Eigen::Success) {
            // Guard against semidefinite inputs that LLT "succeeds" on.
            if (llt.matrixLLT().diagonal().minCoeff() > 0.0) return llt;
        }
        if (j == 0.0)
            j = 1e-10;
        else
            j *= 10.0;
        if (j > 1e-6) throw_non_pd();
    }
}

inline double log_det_from_llt(const Eigen::LLT<Mat>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline void require_in_box(const Box& box, std::span<const double> theta, const char* what) {
    if (theta.size() != box.size())
        throw std::invalid_argument(std::string(what) + ": parameter dimension mismatch");
    if (!box_contains(box, theta))
        throw std::domain_error(std::string(what) + ": parameter outside its box");
}

}  // namespace detail

inline double h1(const QuasiLikContext& ctx, std::span<const double> alpha) {
    detail::require_in_box(ctx.model.alpha_box, alpha, "h1");
    const long k = ctx.scheme.k;
    if (k < 3) throw std::invalid_argument("h1: need k_n >= 3");
    const int d = ctx.lm.dim;
    const double delta = ctx.scheme.delta;
    const double noise_term = 3.0 * delta_power_factor(ctx.scheme);
    KahanSum acc;

    if (d == 1) {
        const double lam = ctx.lambda_hat(0, 0);
        const double* m = ctx.lm.means.data();
        double a = 0.0;
        for (long j = 1; j <= k - 2; ++j) {
            const double x = m[j - 1];
            ctx.model.diffusion({&x, 1}, alpha, {&a, 1});
            const double an = detail::jittered_positive(a * a + noise_term * lam, ctx.jitter);
            const double inc = m[j + 1] - m[j];
            acc.add(inc * inc * 1.5 / (delta * an) + std::log(an));
        }
        return -0.5 * acc.value();
    }

    std::vector<double> abuf(static_cast<std::size_t>(d) * ctx.model.dim_noise);
    Mat a(d, ctx.model.dim_noise), an(d, d);
    Vec inc(d), solved(d);
    for (long j = 1; j <= k - 2; ++j) {
        const auto x = ctx.lm.mean_at(j - 1);
        ctx.model.diffusion(x, alpha, abuf);
        for (int i = 0; i < d; ++i)
            for (int q = 0; q < ctx.model.dim_noise; ++q)
                a(i, q) = abuf[static_cast<std::size_t>(i) * ctx.model.dim_noise + q];
        an.noalias() = a * a.transpose();
        an += noise_term * ctx.lambda_hat;
        const auto llt = detail::jittered_llt(an, ctx.jitter);
        const auto prev = ctx.lm.mean_at(j);
        const auto next = ctx.lm.mean_at(j + 1);
        for (int i = 0; i < d; ++i) inc(i) = next[i] - prev[i];
        solved = llt.solve(inc);
        acc.add(inc.dot(solved) * 1.5 / delta + detail::log_det_from_llt(llt));
    }
    return -0.5 * acc.value();
}

inline double h2(const QuasiLikContext& ctx, std::span<const double> beta,
                 std::span<const double> alpha_plugin) {
    detail::require_in_box(ctx.model.beta_box, beta, "h2");
    detail::require_in_box(ctx.model.alpha_box, alpha_plugin, "h2 (alpha plug-in)");
    const long k = ctx.scheme.k;
    if (k < 3) throw std::invalid_argument("h2: need k_n >= 3");
    const int d = ctx.lm.dim;
    const double delta = ctx.scheme.delta;
    KahanSum acc;

    if (d == 1) {
        const double* m = ctx.lm.means.data();
        double a = 0.0, b = 0.0;
        for (long j = 1; j <= k - 2; ++j) {
            const double x = m[j - 1];
            ctx.model.diffusion({&x, 1}, alpha_plugin, {&a, 1});
            ctx.model.drift({&x, 1}, beta, {&b, 1});
            const double w = detail::jittered_positive(delta * a * a, ctx.jitter);
            const double r = m[j + 1] - m[j] - delta * b;
            acc.add(r * r / w);
        }
        return -0.5 * acc.value();
    }

    std::vector<double> abuf(static_cast<std::size_t>(d) * ctx.model.dim_noise), bbuf(d);
    Mat a(d, ctx.model.dim_noise), A(d, d);
    Vec resid(d);
    for (long j = 1; j <= k - 2; ++j) {
        const auto x = ctx.lm.mean_at(j - 1);
        ctx.model.diffusion(x, alpha_plugin, abuf);
        ctx.model.drift(x, beta, bbuf);
        for (int i = 0; i < d; ++i)
            for (int q = 0; q < ctx.model.dim_noise; ++q)
                a(i, q) = abuf[static_cast<std::size_t>(i) * ctx.model.dim_noise + q];
        A.noalias() = a * a.transpose();
        A *= delta;
        const auto llt = detail::jittered_llt(A, ctx.jitter);
        const auto prev = ctx.lm.mean_at(j);
        const auto next = ctx.lm.mean_at(j + 1);
        for (int i = 0; i < d; ++i) resid(i) = next[i] - prev[i] - delta * bbuf[i];
        acc.add(resid.dot(llt.solve(resid)));
    }
    return -0.5 * acc.value();
}

/// A bound objective over one parameter block (h1 in alpha, or h2 in beta
/// with a fixed alpha plug-in). `normalization` divides the objective for
/// curvature purposes; `rate` is the local scaling of the random field.
/// The referenced context must outlive the bound objective.
struct ObjectiveFn {
    std::function<double(std::span<const double>)> value;
    Box box;
    double normalization = 1.0;
    double rate = 1.0;

    int dim() const { return static_cast<int>(box.size()); }
    double operator()(std::span<const double> theta) const { return value(theta); }
    double operator()(const Vec& theta) const {
        return value({theta.data(), static_cast<std::size_t>(theta.size())});
    }
};

inline ObjectiveFn bind_h1(const QuasiLikContext& ctx) {
    ObjectiveFn f;
    f.value = [&ctx](std::span<const double> alpha) { return h1(ctx, alpha); };
    f.box = ctx.model.alpha_box;
    f.normalization = static_cast<double>(ctx.scheme.k);
    f.rate = std::sqrt(static_cast<double>(ctx.scheme.k));
    return f;
}

inline ObjectiveFn bind_h2(const QuasiLikContext& ctx, Vec alpha_plugin) {
    ObjectiveFn f;
    f.value = [&ctx, alpha = std::move(alpha_plugin)](std::span<const double> beta) {
        return h2(ctx, beta, {alpha.data(), static_cast<std::size_t>(alpha.size())});
    };
    f.box = ctx.model.beta_box;
    f.normalization = ctx.scheme.time_horizon();
    f.rate = std::sqrt(ctx.scheme.time_horizon());
    return f;
}

/// Central finite differences with per-coordinate step max(1e-6, 1e-7 |coord|);
/// falls back to a one-sided difference when the step would leave the box.
inline Vec fd_gradient(const ObjectiveFn& f, std::span<const double> theta) {
    const int m = f.dim();
    detail::require_in_box(f.box, theta, "fd_gradient");
    Vec g(m);
    std::vector<double> point(theta.begin(), theta.end());
    for (int i = 0; i < m; ++i) {
        const double step = std::max(1e-6, 1e-7 * std::abs(theta[i]));
        const double orig = point[i];
        const bool up_ok = orig + step <= f.box[i].hi;
        const bool down_ok = orig - step >= f.box[i].lo;
        double deriv;
        if (up_ok && down_ok) {
            point[i] = orig + step;
            const double fp = f(point);
            point[i] = orig - step;
            const double fm = f(point);
            deriv = (fp - fm) / (2.0 * step);
        } else if (up_ok) {
            const double f0 = f(std::span<const double>(point));
            point[i] = orig + step;
            deriv = (f(point) - f0) / step;
        } else if (down_ok) {
            const double f0 = f(std::span<const double>(point));
            point[i] = orig - step;
            deriv = (f0 - f(point)) / step;
        } else {
            throw std::domain_error("fd_gradient: box narrower than the difference step");
        }
        point[i] = orig;
        g(i) = deriv;
    }
    return g;
}

/// Scaled score: rate^{-1} grad(H) (the LAQ linear coefficient at `theta`).
inline Vec scaled_score(const ObjectiveFn& f, std::span<const double> theta) {
    return fd_gradient(f, theta) / f.rate;
}

/// Negated finite-difference Hessian of the normalized objective, symmetrized.
/// Positive semi-definite near a maximum. Step max(1e-4, 1e-5 |coord|)
/// (second differences need a wider stencil than first ones).
inline Mat fd_curvature(const ObjectiveFn& f, std::span<const double> theta) {
    const int m = f.dim();
    detail::require_in_box(f.box, theta, "fd_curvature");
    std::vector<double> point(theta.begin(), theta.end());
    std::vector<double> step(m), base(m);
    for (int i = 0; i < m; ++i) {
        step[i] = std::max(1e-4, 1e-5 * std::abs(theta[i]));
        // Shift the stencil center inward if the box is tight on one side.
        base[i] = theta[i];
        if (base[i] + step[i] > f.box[i].hi) base[i] = f.box[i].hi - step[i];
        if (base[i] - step[i] < f.box[i].lo) base[i] = f.box[i].lo + step[i];
        if (base[i] + step[i] > f.box[i].hi || base[i] - step[i] < f.box[i].lo)
            throw std::domain_error("fd_curvature: box narrower than the difference stencil");
        point[i] = base[i];
    }
    auto eval = [&](int i, double di, int j, double dj) {
        point[i] = base[i] + di;
        if (j >= 0) point[j] = base[j] + dj;
        const double v = f(std::span<const double>(point));
        point[i] = base[i];
        if (j >= 0) point[j] = base[j];
        return v;
    };
    Mat hess(m, m);
    const double f0 = f(std::span<const double>(point));
    for (int i = 0; i < m; ++i) {
        const double fp = eval(i, step[i], -1, 0.0);
        const double fm = eval(i, -step[i], -1, 0.0);
        hess(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for (int j = i + 1; j < m; ++j) {
            const double fpp = eval(i, step[i], j, step[j]);
            const double fpm = eval(i, step[i], j, -step[j]);
            const double fmp = eval(i, -step[i], j, step[j]);
            const double fmm = eval(i, -step[i], j, -step[j]);
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * step[i] * step[j]);
        }
    }
    Mat curv = -hess / f.normalization;
    return 0.5 * (curv + curv.transpose());
}

/// Z(u) = exp(H(center + u/rate) - H(center)); requires the shifted point to
/// stay strictly inside the (open) parameter box.
inline double random_field(const ObjectiveFn& f, std::span<const double> center,
                           std::span<const double> u) {
    const int m = f.dim();
    if (static_cast<int>(center.size()) != m || static_cast<int>(u.size()) != m)
        throw std::invalid_argument("random_field: dimension mismatch");
    std::vector<double> shifted(m);
    for (int i = 0; i < m; ++i) shifted[i] = center[i] + u[i] / f.rate;
    if (!box_interior(f.box, shifted))
        throw std::domain_error("random_field: outside admissible set");
    return std::exp(f(std::span<const double>(shifted)) - f(center));
}

/// The random field evaluated on a grid of local coordinates.
struct LocalField {
    Vec center;
    double rate = 1.0;
    std::vector<Vec> u_grid;
    std::vector<double> values;
};

inline LocalField eval_local_field(const ObjectiveFn& f, const Vec& center,
                                   std::vector<Vec> u_grid) {
    LocalField field;
    field.center = center;
    field.rate = f.rate;
    field.values.reserve(u_grid.size());
    for (const Vec& u : u_grid)
        field.values.push_back(random_field(f, {center.data(), static_cast<std::size_t>(center.size())},
                                            {u.data(), static_cast<std::size_t>(u.size())}));
    field.u_grid = std::move(u_grid);
    return field;
}

}  // namespace noisediff
