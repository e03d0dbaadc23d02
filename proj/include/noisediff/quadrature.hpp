#pragma once

// Gauss-Legendre and Gauss-Hermite rules plus a log-sum-exp helper.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "noisediff/linalg.hpp"

namespace noisediff {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre nodes/weights on [a, b] by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int half = (n + 1) / 2;
    const double xm = 0.5 * (b + a);
    const double xl = 0.5 * (b - a);
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-15) break;
        }
        rule.nodes[i] = xm - xl * z;
        rule.nodes[n - 1 - i] = xm + xl * z;
        rule.weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return rule;
}

/// Gauss-Hermite rule adapted to N(mean, variance): integrates
/// int f(x) dN(x) = sum w_i f(x_i). Golub-Welsch on the Hermite Jacobi matrix.
inline QuadratureRule gauss_hermite_normal(int n, double mean, double variance) {
    if (n < 1) throw std::invalid_argument("gauss_hermite_normal: n >= 1");
    if (!(variance > 0.0)) throw std::invalid_argument("gauss_hermite_normal: variance > 0");
    Mat jacobi = Mat::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double off = std::sqrt(i / 2.0);
        jacobi(i - 1, i) = off;
        jacobi(i, i - 1) = off;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double sd = std::sqrt(variance);
    for (int i = 0; i < n; ++i) {
        const double t = es.eigenvalues()(i);  // physicists' node
        const double w0 = es.eigenvectors()(0, i);
        rule.nodes[i] = mean + sd * std::numbers::sqrt2 * t;
        rule.weights[i] = w0 * w0;  // sqrt(pi) normalization cancels against the density
    }
    return rule;
}

/// log(sum_i exp(x_i)) with max subtraction.
inline double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace noisediff
