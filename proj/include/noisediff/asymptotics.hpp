#pragma once

// Theoretical information matrices and the sandwich covariance of the jointly
// normalized estimator vector (vech Lambda, alpha, beta):
//   I^tau = diag{W1, I22^tau, I33},  J^tau = diag{Id, J22^tau, I33},
//   limit covariance (J^tau)^{-1} I^tau (J^tau)^{-1}.
// Integrals against the invariant law are evaluated in closed form
// (Gauss-Hermite) when the model registers a Gaussian invariant law, and by
// long-run path averaging otherwise.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "noisediff/linalg.hpp"
#include "noisediff/quadrature.hpp"
#include "noisediff/simulate.hpp"

namespace noisediff {

class InvariantMeasure {
public:
    /// Closed-form N(mean, variance) invariant law (scalar state).
    static InvariantMeasure gaussian(double mean, double variance, int nodes = 256) {
        InvariantMeasure nu;
        nu.dim_ = 1;
        nu.rule_ = gauss_hermite_normal(nodes, mean, variance);
        nu.closed_form_ = true;
        return nu;
    }

    /// Time-average approximation along a simulated path after burn-in.
    static InvariantMeasure ergodic(const DiffusionModel& model, const TrueParameters& params,
                                    double t_burn = 100.0, double t_avg = 1e4, int substeps = 10,
                                    double h = 0.01, SimSeed seed = {424243u, 0u}) {
        if (!(t_avg > 0.0) || t_burn < 0.0)
            throw std::invalid_argument("InvariantMeasure::ergodic: bad averaging window");
        InvariantMeasure nu;
        nu.dim_ = model.dim_state;
        nu.closed_form_ = false;
        nu.effective_length_ = t_avg;

        const int d = model.dim_state;
        const int r = model.dim_noise;
        const double dt = h / substeps;
        const double sq_dt = std::sqrt(dt);
        const long n_burn = static_cast<long>(std::ceil(t_burn / h));
        const long n_avg = static_cast<long>(std::ceil(t_avg / h));
        CounterRng rng(seed.master_seed, seed.replication_index, RngStream::path_noise);

        std::vector<double> x(params.x0.data(), params.x0.data() + d);
        std::vector<double> b(d), a(static_cast<std::size_t>(d) * r), xi(r);
        const std::span<const double> beta{params.beta.data(),
                                           static_cast<std::size_t>(params.beta.size())};
        const std::span<const double> alpha{params.alpha.data(),
                                            static_cast<std::size_t>(params.alpha.size())};
        nu.states_.reserve(static_cast<std::size_t>(n_avg) * d);
        for (long i = 0; i < n_burn + n_avg; ++i) {
            for (int s = 0; s < substeps; ++s) {
                model.drift(x, beta, b);
                model.diffusion(x, alpha, a);
                for (int q = 0; q < r; ++q) xi[q] = rng.next_normal();
                for (int c = 0; c < d; ++c) {
                    double diff = 0.0;
                    for (int q = 0; q < r; ++q) diff += a[static_cast<std::size_t>(c) * r + q] * xi[q];
                    x[c] += b[c] * dt + diff * sq_dt;
                }
            }
            if (i >= n_burn)
                for (int c = 0; c < d; ++c) nu.states_.push_back(x[c]);
        }
        return nu;
    }

    int dim() const { return dim_; }
    bool closed_form() const { return closed_form_; }
    double effective_length() const { return effective_length_; }

    /// Visits (weight, x) pairs with weights summing to 1 (up to rounding).
    void integrate(const std::function<void(double w, std::span<const double> x)>& visit) const {
        if (closed_form_) {
            for (std::size_t i = 0; i < rule_.nodes.size(); ++i) {
                const double x = rule_.nodes[i];
                visit(rule_.weights[i], {&x, 1});
            }
            return;
        }
        const long count = static_cast<long>(states_.size()) / dim_;
        const double w = 1.0 / static_cast<double>(count);
        for (long i = 0; i < count; ++i)
            visit(w, {states_.data() + static_cast<std::size_t>(i) * dim_,
                      static_cast<std::size_t>(dim_)});
    }

    double expect(const std::function<double(std::span<const double>)>& f) const {
        KahanSum acc;
        integrate([&](double w, std::span<const double> x) { acc.add(w * f(x)); });
        if (!std::isfinite(acc.value()))
            throw std::runtime_error("invariant_expectation: non-finite average");
        return acc.value();
    }

private:
    int dim_ = 1;
    bool closed_form_ = true;
    double effective_length_ = 0.0;
    QuadratureRule rule_;
    std::vector<double> states_;
};

inline double invariant_expectation(const InvariantMeasure& nu,
                                    const std::function<double(std::span<const double>)>& f) {
    return nu.expect(f);
}

/// Builds the invariant measure for a model: closed form when registered.
inline InvariantMeasure invariant_measure_for(const DiffusionModel& model,
                                              const TrueParameters& params) {
    if (model.invariant_gaussian) {
        const auto [mean, var] = (*model.invariant_gaussian)(
            {params.alpha.data(), static_cast<std::size_t>(params.alpha.size())},
            {params.beta.data(), static_cast<std::size_t>(params.beta.size())});
        return InvariantMeasure::gaussian(mean, var);
    }
    return InvariantMeasure::ergodic(model, params);
}

/// Fourth-moment functional of the noise law driving sqrt(n)(vech Lambda-hat):
/// V((l1,l2),(l3,l4)) = sum_k S^(l1,k)S^(l2,k)S^(l3,k)S^(l4,k) (E eps^4 - 3)
///                      + (3/2)(L^(l1,l3)L^(l2,l4) + L^(l1,l4)L^(l2,l3)),
/// W1^(i1,i2) = V(sigma^{-1}(i1), sigma^{-1}(i2)).
inline Mat w1_matrix(const NoiseSpec& noise) {
    noise.validate();
    const int d = noise.dim();
    const Mat S = noise.sqrt();
    const Mat& L = noise.lambda;
    const double kurt = noise.excess_kurtosis();
    const VechIndexer idx{d};
    const int M0 = idx.size();
    Mat w1(M0, M0);
    for (int i1 = 1; i1 <= M0; ++i1) {
        const auto [l1, l2] = idx.inverse(i1);
        for (int i2 = 1; i2 <= M0; ++i2) {
            const auto [l3, l4] = idx.inverse(i2);
            double quartic = 0.0;
            for (int k = 0; k < d; ++k)
                quartic += S(l1 - 1, k) * S(l2 - 1, k) * S(l3 - 1, k) * S(l4 - 1, k);
            w1(i1 - 1, i2 - 1) = quartic * kurt +
                                 1.5 * (L(l1 - 1, l3 - 1) * L(l2 - 1, l4 - 1) +
                                        L(l1 - 1, l4 - 1) * L(l2 - 1, l3 - 1));
        }
    }
    return w1;
}

struct AsymptoticCovariance {
    int d = 1;
    int m1 = 1;
    int m2 = 1;
    Mat i_matrix;
    Mat j_matrix;
    Mat sandwich;

    int noise_size() const { return d * (d + 1) / 2; }
    int size() const { return noise_size() + m1 + m2; }

    Eigen::Block<const Mat> noise_block(const Mat& m) const {
        return m.block(0, 0, noise_size(), noise_size());
    }
    Eigen::Block<const Mat> alpha_block(const Mat& m) const {
        return m.block(noise_size(), noise_size(), m1, m1);
    }
    Eigen::Block<const Mat> beta_block(const Mat& m) const {
        return m.block(noise_size() + m1, noise_size() + m1, m2, m2);
    }
};

/// (J)^{-1} I (J)^{-1}, symmetrized. Throws "J singular" if J fails Cholesky.
inline Mat sandwich_covariance(const Mat& i_matrix, const Mat& j_matrix) {
    Eigen::LLT<Mat> llt(j_matrix);
    if (llt.info() != Eigen::Success) throw std::runtime_error("sandwich_covariance: J singular");
    const Mat ji = llt.solve(i_matrix);           // J^{-1} I
    const Mat s = llt.solve(ji.transpose());      // J^{-1} (J^{-1} I)^T = J^{-1} I J^{-1}
    return 0.5 * (s + s.transpose());
}

inline Mat sandwich_covariance(const AsymptoticCovariance& ac) {
    return sandwich_covariance(ac.i_matrix, ac.j_matrix);
}

/// A^tau(x, alpha, Lambda) = A + 3 Lambda 1{tau = 2} (the limit matrix).
inline Mat limit_diffusion_matrix(const DiffusionModel& model, std::span<const double> x,
                                  std::span<const double> alpha, const Mat& lambda, double tau) {
    Mat a = model.diffusion_matrix(x, alpha);
    if (tau == 2.0) a += 3.0 * lambda;
    return a;
}

inline AsymptoticCovariance information_matrices(const DiffusionModel& model,
                                                 const TrueParameters& params, double tau,
                                                 const InvariantMeasure& nu) {
    model.validate();
    params.validate(model);
    if (!(tau > 1.0) || !(tau <= 2.0))
        throw std::invalid_argument("information_matrices: tau must lie in (1, 2]");

    const int d = model.dim_state;
    const int m1 = model.dim_alpha;
    const int m2 = model.dim_beta;
    const Mat& lambda = params.noise.lambda;
    constexpr double fd_step = 1e-6;

    const std::span<const double> alpha{params.alpha.data(),
                                        static_cast<std::size_t>(params.alpha.size())};
    const std::span<const double> beta{params.beta.data(),
                                       static_cast<std::size_t>(params.beta.size())};

    // Pointwise integrands for all (i1, i2) entries at once.
    struct Point {
        Mat i22, j22, i33;
    };
    auto at_x = [&](std::span<const double> x) {
        Point pt;
        const Mat A = model.diffusion_matrix(x, alpha);
        Mat Atau = A;
        if (tau == 2.0) Atau += 3.0 * lambda;
        Eigen::LLT<Mat> llt_tau(Atau);
        Eigen::LLT<Mat> llt_a(A);
        if (llt_tau.info() != Eigen::Success || llt_a.info() != Eigen::Success)
            throw std::runtime_error("information_matrices: A (or A^tau) not PD at a probe point");

        std::vector<double> shifted(params.alpha.data(), params.alpha.data() + m1);
        std::vector<Mat> dA(m1), bbar(m1);
        for (int kk = 0; kk < m1; ++kk) {
            const double orig = shifted[kk];
            shifted[kk] = orig + fd_step;
            const Mat up = model.diffusion_matrix(x, shifted);
            shifted[kk] = orig - fd_step;
            const Mat dn = model.diffusion_matrix(x, shifted);
            shifted[kk] = orig;
            dA[kk] = (up - dn) / (2.0 * fd_step);
            const Mat b = 0.75 * llt_tau.solve(llt_tau.solve(dA[kk]).transpose()).transpose();
            bbar[kk] = 0.5 * (b + b.transpose());
        }
        pt.i22.resize(m1, m1);
        pt.j22.resize(m1, m1);
        for (int k1 = 0; k1 < m1; ++k1)
            for (int k2 = 0; k2 < m1; ++k2) {
                double v = (bbar[k1] * A * bbar[k2] * A).trace();
                if (tau == 2.0)
                    v += 4.0 * (bbar[k1] * A * bbar[k2] * lambda).trace() +
                         12.0 * (bbar[k1] * lambda * bbar[k2] * lambda).trace();
                pt.i22(k1, k2) = v;
                pt.j22(k1, k2) =
                    0.5 * (llt_tau.solve(dA[k1]) * llt_tau.solve(dA[k2])).trace();
            }

        std::vector<double> bshift(params.beta.data(), params.beta.data() + m2);
        std::vector<Vec> db(m2);
        for (int ll = 0; ll < m2; ++ll) {
            const double orig = bshift[ll];
            bshift[ll] = orig + fd_step;
            const Vec up = model.drift_vec(x, bshift);
            bshift[ll] = orig - fd_step;
            const Vec dn = model.drift_vec(x, bshift);
            bshift[ll] = orig;
            db[ll] = (up - dn) / (2.0 * fd_step);
        }
        pt.i33.resize(m2, m2);
        for (int l1 = 0; l1 < m2; ++l1)
            for (int l2 = 0; l2 < m2; ++l2) pt.i33(l1, l2) = db[l2].dot(llt_a.solve(db[l1]));
        return pt;
    };

    Mat i22 = Mat::Zero(m1, m1), j22 = Mat::Zero(m1, m1), i33 = Mat::Zero(m2, m2);
    nu.integrate([&](double w, std::span<const double> x) {
        const Point pt = at_x(x);
        i22 += w * pt.i22;
        j22 += w * pt.j22;
        i33 += w * pt.i33;
    });
    if (!i22.allFinite() || !j22.allFinite() || !i33.allFinite())
        throw std::runtime_error("information_matrices: non-finite integral");
    i22 = 0.5 * (i22 + i22.transpose()).eval();
    j22 = 0.5 * (j22 + j22.transpose()).eval();
    i33 = 0.5 * (i33 + i33.transpose()).eval();

    AsymptoticCovariance ac;
    ac.d = d;
    ac.m1 = m1;
    ac.m2 = m2;
    const int M0 = ac.noise_size();
    const int M = ac.size();
    ac.i_matrix = Mat::Zero(M, M);
    ac.j_matrix = Mat::Zero(M, M);
    ac.i_matrix.block(0, 0, M0, M0) = w1_matrix(params.noise);
    ac.i_matrix.block(M0, M0, m1, m1) = i22;
    ac.i_matrix.block(M0 + m1, M0 + m1, m2, m2) = i33;
    ac.j_matrix.block(0, 0, M0, M0) = Mat::Identity(M0, M0);
    ac.j_matrix.block(M0, M0, m1, m1) = j22;
    ac.j_matrix.block(M0 + m1, M0 + m1, m2, m2) = i33;  // J33 = I33
    ac.sandwich = sandwich_covariance(ac.i_matrix, ac.j_matrix);
    return ac;
}

}  // namespace noisediff
