#pragma once

// Path generation: Euler-Maruyama on a refined grid restricted to the
// observation grid, plus additive-noise contamination of a latent path.

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "noisediff/model.hpp"
#include "noisediff/rng.hpp"

namespace noisediff {

struct SimSeed {
    std::uint64_t master_seed = 0;
    std::uint32_t replication_index = 0;
};

struct LatentPath {
    SamplingScheme scheme;
    int dim = 1;
    std::vector<double> times;   // i * h, i = 0..n
    std::vector<double> states;  // (n+1) x d, row-major

    std::span<const double> state_at(long i) const {
        return {states.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

struct ObservationSeries {
    SamplingScheme scheme;
    int dim = 1;
    std::vector<double> values;  // (n+1) x d, row-major

    long count() const { return static_cast<long>(values.size()) / dim; }
    std::span<const double> value_at(long i) const {
        return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

inline double draw_standardized_noise(CounterRng& rng, NoiseFamily family) {
    switch (family) {
        case NoiseFamily::gaussian: return rng.next_normal();
        case NoiseFamily::uniform_symmetric:
            return (rng.next_uniform() - 0.5) * 3.4641016151377543864;  // 2*sqrt(3)
        case NoiseFamily::rademacher_product: return (rng.next_u64() & 1u) ? 1.0 : -1.0;
    }
    return 0.0;
}

inline LatentPath simulate_path(const DiffusionModel& model, const TrueParameters& params,
                                const SamplingScheme& scheme, int substeps, SimSeed seed,
                                double explode_bound = 1e12) {
    if (substeps < 1) throw std::invalid_argument("simulate_path: substeps must be >= 1");
    params.validate(model);
    const int d = model.dim_state;
    const int r = model.dim_noise;
    const double dt = scheme.h / substeps;
    const double sq_dt = std::sqrt(dt);

    CounterRng rng(seed.master_seed, seed.replication_index, RngStream::path_noise);

    LatentPath path;
    path.scheme = scheme;
    path.dim = d;
    path.times.resize(scheme.n + 1);
    path.states.resize(static_cast<std::size_t>(scheme.n + 1) * d);

    std::vector<double> x(params.x0.data(), params.x0.data() + d);
    std::vector<double> b(d), a(static_cast<std::size_t>(d) * r), xi(r);
    const std::span<const double> beta{params.beta.data(), static_cast<std::size_t>(params.beta.size())};
    const std::span<const double> alpha{params.alpha.data(),
                                        static_cast<std::size_t>(params.alpha.size())};

    auto record = [&](long i) {
        path.times[i] = static_cast<double>(i) * scheme.h;
        for (int c = 0; c < d; ++c) {
            const double v = x[c];
            if (!std::isfinite(v) || std::abs(v) > explode_bound)
                throw std::runtime_error("simulate_path: path exploded at t = " +
                                         std::to_string(static_cast<double>(i) * scheme.h));
            path.states[static_cast<std::size_t>(i) * d + c] = v;
        }
    };

    record(0);
    for (long i = 0; i < scheme.n; ++i) {
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
        record(i + 1);
    }
    return path;
}

/// Test hook: supplies the standardized noise vector for observation index i.
using EpsSource = std::function<void(long i, std::span<double> eps)>;

inline ObservationSeries contaminate(const LatentPath& path, const NoiseSpec& noise,
                                     const EpsSource& eps_source) {
    noise.validate();
    const int d = path.dim;
    if (noise.dim() != d) throw std::invalid_argument("contaminate: noise dimension mismatch");

    ObservationSeries series;
    series.scheme = path.scheme;
    series.dim = d;
    series.values.resize(path.states.size());

    const Mat root = noise.sqrt();
    const long count = static_cast<long>(path.states.size()) / d;
    std::vector<double> eps(d);
    for (long i = 0; i < count; ++i) {
        eps_source(i, eps);
        for (int c = 0; c < d; ++c) {
            double add = 0.0;
            for (int q = 0; q < d; ++q) add += root(c, q) * eps[q];
            series.values[static_cast<std::size_t>(i) * d + c] =
                path.states[static_cast<std::size_t>(i) * d + c] + add;
        }
    }
    return series;
}

inline ObservationSeries contaminate(const LatentPath& path, const NoiseSpec& noise, SimSeed seed) {
    CounterRng rng(seed.master_seed, seed.replication_index, RngStream::observation_noise);
    const NoiseFamily family = noise.family;
    return contaminate(path, noise, [&rng, family](long, std::span<double> eps) {
        for (auto& e : eps) e = draw_standardized_noise(rng, family);
    });
}

namespace detail {

inline void write_csv_grid(std::ostream& os, const SamplingScheme& scheme, int dim,
                           const std::vector<double>& data, const char* prefix) {
    os << "t";
    for (int c = 1; c <= dim; ++c) os << ',' << prefix << c;
    os << '\n';
    char buf[32];
    const long count = static_cast<long>(data.size()) / dim;
    for (long i = 0; i < count; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(i) * scheme.h);
        os << buf;
        for (int c = 0; c < dim; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", data[static_cast<std::size_t>(i) * dim + c]);
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace detail

inline void write_csv(const LatentPath& path, std::ostream& os) {
    detail::write_csv_grid(os, path.scheme, path.dim, path.states, "x");
}

inline void write_csv(const ObservationSeries& series, std::ostream& os) {
    detail::write_csv_grid(os, series.scheme, series.dim, series.values, "y");
}

}  // namespace noisediff
