#pragma once

/// Reproducible point-pattern generation: inhomogeneous Poisson by
/// Lewis-Shedler thinning, the infill superposition Y_n, and the Thomas
/// cluster process. Streams are counter-based: stream i of a given seed
/// produces the same draws regardless of execution order, so replicates
/// can be generated concurrently and still match single-threaded runs.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "intens/csv.hpp"
#include "intens/model.hpp"

namespace intens {

/// SplitMix64 stream selected by (seed, stream index).
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        state_ = mix(mix(seed) ^ mix(stream ^ 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Exact Poisson sampling by inversion; large means are split into
    /// sums of smaller Poisson draws to avoid exp underflow.
    std::uint64_t poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
        std::uint64_t total = 0;
        while (mean > 60.0) {
            total += poisson_inversion(60.0);
            mean -= 60.0;
        }
        return total + poisson_inversion(mean);
    }

    /// Standard normal via Box-Muller; draws two uniforms per value.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t poisson_inversion(double mean) {
        double u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        std::uint64_t k = 0;
        while (u > cdf && k < 100000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }

    std::uint64_t state_;
};

struct PointPattern {
    int d = 1;
    std::vector<std::array<double, kMaxDim>> points;

    std::size_t size() const { return points.size(); }

    std::span<const double> point(std::size_t i) const {
        return {points[i].data(), static_cast<std::size_t>(d)};
    }
};

/// n iid replicates Phi_1, ..., Phi_n; the union Y_n keeps multiplicity.
struct SuperposedSample {
    std::vector<PointPattern> replicates;

    std::size_t n() const { return replicates.size(); }

    std::size_t total_points() const {
        std::size_t c = 0;
        for (const auto& p : replicates) c += p.size();
        return c;
    }
};

/// Inhomogeneous Poisson on W by thinning a homogeneous Poisson with
/// the dominating rate lambda_max.
inline PointPattern sample_poisson(const IntensityModel& model, RngStream& rng) {
    const Window& w = model.window();
    PointPattern pattern;
    pattern.d = w.d;
    const double rate = model.lambda_max() * w.volume();
    const std::uint64_t count = rng.poisson(rate);
    pattern.points.reserve(count);
    std::array<double, kMaxDim> x{};
    for (std::uint64_t k = 0; k < count; ++k) {
        for (int i = 0; i < w.d; ++i) x[i] = rng.uniform(w.lower[i], w.upper[i]);
        double accept = rng.uniform();
        std::span<const double> xs(x.data(), w.d);
        if (accept * model.lambda_max() < model.intensity_at(xs)) pattern.points.push_back(x);
    }
    return pattern;
}

/// n independent replicates; replicate i draws from stream base_stream + i.
inline SuperposedSample sample_superposition(const IntensityModel& model, std::size_t n,
                                             std::uint64_t seed,
                                             std::uint64_t base_stream = 0) {
    if (n < 1) throw std::invalid_argument("sample_superposition: n >= 1 required");
    SuperposedSample sample;
    sample.replicates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(seed, base_stream + i);
        sample.replicates.push_back(sample_poisson(model, rng));
    }
    return sample;
}

/// Thomas cluster process on a 2-d window: Poisson parents on the window
/// dilated by 4 sigma, Poisson(offspring_mean) Gaussian-displaced
/// offspring clipped to W. Intensity = parent_intensity * offspring_mean.
inline PointPattern sample_thomas(double parent_intensity, double offspring_mean,
                                  double sigma, const Window& window, RngStream& rng) {
    if (window.d != 2) throw std::invalid_argument("sample_thomas: d = 2 required");
    if (!(parent_intensity > 0.0) || !(sigma > 0.0) || offspring_mean < 0.0)
        throw std::invalid_argument("sample_thomas: invalid parameters");
    const double margin = 4.0 * sigma;
    const double lo0 = window.lower[0] - margin, hi0 = window.upper[0] + margin;
    const double lo1 = window.lower[1] - margin, hi1 = window.upper[1] + margin;
    const double area = (hi0 - lo0) * (hi1 - lo1);
    PointPattern pattern;
    pattern.d = 2;
    const std::uint64_t parents = rng.poisson(parent_intensity * area);
    for (std::uint64_t p = 0; p < parents; ++p) {
        const double cx = rng.uniform(lo0, hi0);
        const double cy = rng.uniform(lo1, hi1);
        const std::uint64_t kids = rng.poisson(offspring_mean);
        for (std::uint64_t k = 0; k < kids; ++k) {
            std::array<double, kMaxDim> x{};
            x[0] = cx + sigma * rng.normal();
            x[1] = cy + sigma * rng.normal();
            if (window.contains(std::span<const double>(x.data(), 2)))
                pattern.points.push_back(x);
        }
    }
    return pattern;
}

inline SuperposedSample sample_thomas_superposition(double parent_intensity,
                                                    double offspring_mean, double sigma,
                                                    const Window& window, std::size_t n,
                                                    std::uint64_t seed,
                                                    std::uint64_t base_stream = 0) {
    SuperposedSample sample;
    sample.replicates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(seed, base_stream + i);
        sample.replicates.push_back(
            sample_thomas(parent_intensity, offspring_mean, sigma, window, rng));
    }
    return sample;
}

/// CSV export: header x1,...,xd; one point per row.
inline void write_csv(std::ostream& os, const PointPattern& pattern) {
    for (int i = 0; i < pattern.d; ++i) os << (i ? ",x" : "x") << (i + 1);
    os << "\n";
    for (const auto& p : pattern.points) {
        for (int i = 0; i < pattern.d; ++i)
            os << (i ? "," : "") << format_double(p[i]);
        os << "\n";
    }
}

/// CSV export with a leading replicate id column.
inline void write_csv(std::ostream& os, const SuperposedSample& sample) {
    const int d = sample.replicates.empty() ? 1 : sample.replicates.front().d;
    os << "rep";
    for (int i = 0; i < d; ++i) os << ",x" << (i + 1);
    os << "\n";
    for (std::size_t r = 0; r < sample.replicates.size(); ++r)
        for (const auto& p : sample.replicates[r].points) {
            os << format_u64(r);
            for (int i = 0; i < d; ++i) os << "," << format_double(p[i]);
            os << "\n";
        }
}

}  // namespace intens
