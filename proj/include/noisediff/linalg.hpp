#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace noisediff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Compensated (Kahan) accumulator.
class KahanSum {
public:
    void add(double x) {
        const double y = x - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// Half-vectorisation indexing: (i,j) with 1 <= i <= j <= d mapped onto
/// 1..d(d+1)/2 row by row along the upper triangle.
struct VechIndexer {
    int d = 1;

    int size() const { return d * (d + 1) / 2; }

    int index(int i, int j) const {
        if (i < 1 || j < i || j > d) throw std::out_of_range("vech_index: need 1 <= i <= j <= d");
        if (i == 1) return j;
        // sum_{l=1}^{i-1} (d - l + 1) + j - i + 1
        const int skipped = (i - 1) * d - (i - 1) * (i - 2) / 2;
        return skipped + j - i + 1;
    }

    std::pair<int, int> inverse(int s) const {
        if (s < 1 || s > size()) throw std::out_of_range("vech_index inverse: out of range");
        int i = 1;
        int remaining = s;
        while (remaining > d - i + 1) {
            remaining -= d - i + 1;
            ++i;
        }
        return {i, i + remaining - 1};
    }

    Vec vech(const Mat& m) const {
        Vec out(size());
        for (int i = 1; i <= d; ++i)
            for (int j = i; j <= d; ++j) out(index(i, j) - 1) = m(i - 1, j - 1);
        return out;
    }
};

inline int vech_index(int i, int j, int d) { return VechIndexer{d}.index(i, j); }

inline bool is_symmetric(const Mat& m, double tol = 1e-12) {
    return ((m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff()));
}

/// Symmetric PSD square root; eigenvalues below zero are clipped.
inline Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Clip negative eigenvalues to zero (PSD repair for plug-in matrices).
inline Mat psd_clip(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    if (es.eigenvalues().minCoeff() >= 0.0) return 0.5 * (m + m.transpose());
    Vec ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace noisediff
