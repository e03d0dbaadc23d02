#pragma once

// Local means: non-overlapping blocks of p consecutive observations averaged
// to attenuate the observation noise while keeping the diffusion signal.

#include <span>
#include <stdexcept>
#include <vector>

#include "noisediff/linalg.hpp"
#include "noisediff/simulate.hpp"

namespace noisediff {

struct LocalMeanSeries {
    SamplingScheme scheme;
    int dim = 1;
    std::vector<double> means;  // k x d, row-major

    std::span<const double> mean_at(long j) const {
        return {means.data() + static_cast<std::size_t>(j) * dim, static_cast<std::size_t>(dim)};
    }
};

/// Block means Ybar_j = (1/p) sum_{i=0}^{p-1} Y_{j p + i}, j = 0..k-1.
/// Observations beyond k*p are ignored. Compensated summation per block.
inline LocalMeanSeries local_means(const ObservationSeries& series) {
    const SamplingScheme& s = series.scheme;
    const int d = series.dim;
    if (series.count() < s.k * s.p)
        throw std::invalid_argument("local_means: insufficient data (need k_n * p_n values)");

    LocalMeanSeries lm;
    lm.scheme = s;
    lm.dim = d;
    lm.means.resize(static_cast<std::size_t>(s.k) * d);
    const double inv_p = 1.0 / static_cast<double>(s.p);
    for (long j = 0; j < s.k; ++j) {
        for (int c = 0; c < d; ++c) {
            KahanSum acc;
            const double* base = series.values.data() + (static_cast<std::size_t>(j) * s.p) * d + c;
            for (long i = 0; i < s.p; ++i) acc.add(base[static_cast<std::size_t>(i) * d]);
            lm.means[static_cast<std::size_t>(j) * d + c] = acc.value() * inv_p;
        }
    }
    return lm;
}

/// Row j = mean_{j+1} - mean_j, j = 0..k-2.
inline std::vector<double> block_increments(const LocalMeanSeries& lm) {
    if (lm.scheme.k < 2) throw std::invalid_argument("block_increments: need k_n >= 2");
    const int d = lm.dim;
    std::vector<double> inc(static_cast<std::size_t>(lm.scheme.k - 1) * d);
    for (long j = 0; j + 1 < lm.scheme.k; ++j)
        for (int c = 0; c < d; ++c)
            inc[static_cast<std::size_t>(j) * d + c] = lm.means[static_cast<std::size_t>(j + 1) * d + c] -
                                                       lm.means[static_cast<std::size_t>(j) * d + c];
    return inc;
}

/// Second-moment constants of the block-weighted Wiener functionals:
/// E[zeta zeta^T] = m Delta I, E[zeta' zeta'^T] = m' Delta I,
/// E[zeta zeta'^T] = chi Delta I.
struct ZetaMomentConstants {
    double m = 0.0;
    double m_prime = 0.0;
    double chi = 0.0;
};

inline ZetaMomentConstants zeta_moment_constants(long p) {
    if (p < 1) throw std::invalid_argument("zeta_moment_constants: p must be >= 1");
    const double pd = static_cast<double>(p);
    ZetaMomentConstants z;
    z.m = 1.0 / 3.0 + 1.0 / (2.0 * pd) + 1.0 / (6.0 * pd * pd);
    z.m_prime = 1.0 / 3.0 - 1.0 / (2.0 * pd) + 1.0 / (6.0 * pd * pd);
    z.chi = (1.0 - 1.0 / (pd * pd)) / 6.0;
    return z;
}

}  // namespace noisediff
