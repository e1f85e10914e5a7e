#pragma once

/// Deterministic ground truth: exact finite-sample moments and MSE of
/// both estimators via quadrature, plus Monte Carlo moments with
/// standard errors for cross-checking.
///
/// After the change of variables u = (x - x0)/h, the mean is written in
/// difference form
///     bias = int kappa(u) [lambda(x0 + h u) - lambda(x0)] du       (fixed)
///     bias = lambda(x0) int [g_u(c(x0 + h u)) - g_u(1)] du         (adaptive)
/// which avoids the catastrophic cancellation of mean - lambda(x0) at
/// small bandwidths. The pair-correlation double integral is computed
/// over the product of two balls (d <= 2); POISSON contributes zero.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "intens/estimate.hpp"
#include "intens/kernel.hpp"
#include "intens/model.hpp"
#include "intens/quadrature.hpp"
#include "intens/simulate.hpp"

namespace intens {

struct MomentReport {
    double mean = 0.0;
    double bias = 0.0;  // mean - lambda(x0), computed in difference form
    double second_moment = 0.0;
    double variance = 0.0;
    double mse = 0.0;
    double quadrature_error_estimate = 0.0;
    // Monte Carlo only
    double se_mean = 0.0;
    double se_variance = 0.0;
    std::size_t replicates = 0;
};

struct OracleTolerances {
    double mean_tol = 1e-10;
    double single_tol = 1e-10;
    double double_tol = 1e-7;
};

inline MomentReport exact_moments_fixed(const IntensityModel& model,
                                        const PairCorrelationModel& pcm,
                                        const KernelSpec& kernel,
                                        std::span<const double> x0, double h,
                                        std::size_t n,
                                        const OracleTolerances& tol = {}) {
    const int d = kernel.d;
    if (model.window().d != d)
        throw std::invalid_argument("exact_moments_fixed: window/kernel dimension mismatch");
    const double lam0 = model.intensity_at(x0);
    if (h > model.window().boundary_distance(x0))
        throw std::domain_error("exact_moments_fixed: b(x0, h) not contained in W");

    std::array<double, kMaxDim> x{};
    auto shift = [&](const double* u) {
        for (int i = 0; i < d; ++i) x[i] = x0[i] + h * u[i];
        return std::span<const double>(x.data(), d);
    };

    QuadResult bias_q = integrate_unit_ball(
        [&](const double* u) {
            return kernel_eval(kernel, std::span<const double>(u, d)) *
                   (model.intensity_at(shift(u)) - lam0);
        },
        d, tol.mean_tol);

    QuadResult single_q = integrate_unit_ball(
        [&](const double* u) {
            double k = kernel_eval(kernel, std::span<const double>(u, d));
            return k * k * model.intensity_at(shift(u));
        },
        d, tol.single_tol);

    MomentReport rep;
    rep.bias = bias_q.value;
    rep.mean = lam0 + rep.bias;
    rep.variance = single_q.value / (static_cast<double>(n) * std::pow(h, d));
    rep.quadrature_error_estimate = bias_q.error_estimate + single_q.error_estimate;

    if (pcm.family == PairCorrelationFamily::THOMAS) {
        if (d != 2) throw std::invalid_argument("thomas oracle requires d = 2");
        std::array<double, kMaxDim> xu{}, xv{};
        QuadResult dbl = integrate_ball_pair(
            [&](const double* u, const double* v) {
                for (int i = 0; i < d; ++i) {
                    xu[i] = x0[i] + h * u[i];
                    xv[i] = x0[i] + h * v[i];
                }
                std::span<const double> su(xu.data(), d), sv(xv.data(), d);
                double ku = kernel_eval(kernel, std::span<const double>(u, d));
                double kv = kernel_eval(kernel, std::span<const double>(v, d));
                if (ku == 0.0 || kv == 0.0) return 0.0;
                return ku * kv * (pcm(su, sv) - 1.0) * model.intensity_at(su) *
                       model.intensity_at(sv);
            },
            d, 1.0, 1.0, tol.double_tol);
        rep.variance += dbl.value / static_cast<double>(n);
        rep.quadrature_error_estimate += dbl.error_estimate;
    }

    rep.second_moment = rep.variance + rep.mean * rep.mean;
    rep.mse = rep.bias * rep.bias + rep.variance;
    return rep;
}

inline MomentReport exact_moments_adaptive(const IntensityModel& model,
                                           const PairCorrelationModel& pcm,
                                           const KernelSpec& kernel,
                                           std::span<const double> x0, double h,
                                           std::size_t n, const AbramsonWeight& weight,
                                           const OracleTolerances& tol = {}) {
    const int d = kernel.d;
    const double lam0 = model.intensity_at(x0);
    // support radius in u-coordinates: bandwidths are at most h / c_min
    const double radius = std::sqrt(lam0 / model.lambda_min());
    if (h * radius > model.window().boundary_distance(x0))
        throw std::domain_error(
            "exact_moments_adaptive: b(x0, h sqrt(lambda(x0)/lambda_min)) not in W");

    std::array<double, kMaxDim> x{};
    auto shift = [&](const double* u) {
        for (int i = 0; i < d; ++i) x[i] = x0[i] + h * u[i];
        return std::span<const double>(x.data(), d);
    };
    std::array<double, kMaxDim> cu{};
    auto scaled = [&](const double* u, double c) {
        for (int i = 0; i < d; ++i) cu[i] = u[i] * c;
        return std::span<const double>(cu.data(), d);
    };

    QuadResult bias_q = integrate_ball(
        [&](const double* u) {
            double c = weight(shift(u));
            double gu_c = std::pow(c, d + 2) * kernel_eval(kernel, scaled(u, c));
            double gu_1 = kernel_eval(kernel, std::span<const double>(u, d));
            return lam0 * (gu_c - gu_1);
        },
        d, radius, tol.mean_tol);

    QuadResult single_q = integrate_ball(
        [&](const double* u) {
            double c = weight(shift(u));
            double k = kernel_eval(kernel, scaled(u, c));
            return lam0 * std::pow(c, 2 * d + 2) * k * k;
        },
        d, radius, tol.single_tol);

    MomentReport rep;
    rep.bias = bias_q.value;
    rep.mean = lam0 + rep.bias;
    rep.variance = single_q.value / (static_cast<double>(n) * std::pow(h, d));
    rep.quadrature_error_estimate = bias_q.error_estimate + single_q.error_estimate;

    if (pcm.family == PairCorrelationFamily::THOMAS) {
        if (d != 2) throw std::invalid_argument("thomas oracle requires d = 2");
        std::array<double, kMaxDim> xu{}, xv{}, cuu{}, cvv{};
        QuadResult dbl = integrate_ball_pair(
            [&](const double* u, const double* v) {
                for (int i = 0; i < d; ++i) {
                    xu[i] = x0[i] + h * u[i];
                    xv[i] = x0[i] + h * v[i];
                }
                std::span<const double> su(xu.data(), d), sv(xv.data(), d);
                double a = weight(su), b = weight(sv);
                for (int i = 0; i < d; ++i) {
                    cuu[i] = u[i] * a;
                    cvv[i] = v[i] * b;
                }
                double ku = kernel_eval(kernel, std::span<const double>(cuu.data(), d));
                double kv = kernel_eval(kernel, std::span<const double>(cvv.data(), d));
                if (ku == 0.0 || kv == 0.0) return 0.0;
                return lam0 * lam0 * std::pow(a, d + 2) * std::pow(b, d + 2) * ku * kv *
                       (pcm(su, sv) - 1.0);
            },
            d, radius, radius, tol.double_tol);
        rep.variance += dbl.value / static_cast<double>(n);
        rep.quadrature_error_estimate += dbl.error_estimate;
    }

    rep.second_moment = rep.variance + rep.mean * rep.mean;
    rep.mse = rep.bias * rep.bias + rep.variance;
    return rep;
}

/// Deterministic pairwise reduction of per-replicate values.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

/// Sampler configuration for Monte Carlo moments: Poisson superposition
/// of the model, or Thomas clusters (d = 2) with the same window.
struct McSampler {
    enum class Kind { POISSON_MODEL, THOMAS } kind = Kind::POISSON_MODEL;
    const IntensityModel* model = nullptr;  // POISSON_MODEL
    double parent_intensity = 0.0, offspring_mean = 0.0, sigma = 0.0;  // THOMAS
    const Window* window = nullptr;
    std::size_t n = 1;  // superposition size

    SuperposedSample sample(std::uint64_t seed, std::uint64_t replicate) const {
        const std::uint64_t base = replicate * static_cast<std::uint64_t>(n);
        if (kind == Kind::POISSON_MODEL)
            return sample_superposition(*model, n, seed, base);
        return sample_thomas_superposition(parent_intensity, offspring_mean, sigma,
                                           *window, n, seed, base);
    }
};

/// Empirical moments of the estimator over R independent samples.
/// Per-replicate estimates are stored and reduced pairwise in replicate
/// order, so results are identical for any thread count.
inline MomentReport mc_moments(const McSampler& sampler, const EstimateRequest& req,
                               std::size_t R, std::uint64_t seed, double lambda_x0,
                               int threads = 1) {
    if (R < 2) throw std::invalid_argument("mc_moments: R >= 2 required");
    std::vector<double> est(R);
    auto worker = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            SuperposedSample s = sampler.sample(seed, r);
            est[r] = estimate(s, req);
        }
    };
    if (threads <= 1) {
        worker(0, R);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (R + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            std::size_t lo = t * chunk, hi = std::min(R, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    const double Rd = static_cast<double>(R);
    const double mean = pairwise_sum(est) / Rd;
    std::vector<double> d2(R), d3(R), d4(R);
    for (std::size_t r = 0; r < R; ++r) {
        double dev = est[r] - mean;
        d2[r] = dev * dev;
        d3[r] = dev * dev * dev;
        d4[r] = dev * dev * dev * dev;
    }
    const double m2 = pairwise_sum(d2) / Rd;
    const double m4 = pairwise_sum(d4) / Rd;
    MomentReport rep;
    rep.replicates = R;
    rep.mean = mean;
    rep.bias = mean - lambda_x0;
    rep.variance = m2 * Rd / (Rd - 1.0);
    rep.second_moment = rep.variance + mean * mean;
    rep.mse = rep.bias * rep.bias + rep.variance;
    rep.se_mean = std::sqrt(rep.variance / Rd);
    // standard error of the sample variance from the fourth central moment
    double var_of_var = (m4 - (Rd - 3.0) / (Rd - 1.0) * m2 * m2) / Rd;
    rep.se_variance = std::sqrt(std::max(0.0, var_of_var));
    return rep;
}

/// Golden-section minimiser on [a, b] for unimodal f.
template <typename F>
double golden_section_min(F&& f, double a, double b, double rel_tol = 1e-4) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    while ((b - a) > rel_tol * (std::abs(a) + std::abs(b)) * 0.5) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace intens
