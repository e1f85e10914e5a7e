#pragma once

/// Kernel intensity estimators on superposed samples: the fixed-bandwidth
/// estimator and the Abramson-adaptive estimator with oracle or pilot
/// weights. Summation is replicate-major, point-minor, so results are
/// bit-reproducible; a grid-bucketed candidate search kicks in for large
/// unions but visits points in the same order as the brute-force scan.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "intens/estimate_detail.hpp"
#include "intens/kernel.hpp"
#include "intens/model.hpp"
#include "intens/simulate.hpp"

namespace intens {

enum class EstimatorMode { FIXED, ADAPTIVE_ORACLE, ADAPTIVE_PILOT };

struct EstimateRequest {
    std::array<double, kMaxDim> x0{};
    double h = 0.1;
    KernelSpec kernel{1, 0.0};
    EstimatorMode mode = EstimatorMode::FIXED;
    const IntensityModel* oracle_model = nullptr;  // ADAPTIVE_ORACLE
    double pilot_bandwidth = 0.0;                  // ADAPTIVE_PILOT
    double pilot_floor = 1e-3;  // clamp: max(pilot, floor * pilot(x0))

    std::span<const double> x0_span() const {
        return {x0.data(), static_cast<std::size_t>(kernel.d)};
    }

    void validate() const {
        if (!(h > 0.0)) throw std::invalid_argument("EstimateRequest: h must be positive");
        if (mode == EstimatorMode::ADAPTIVE_ORACLE && oracle_model == nullptr)
            throw std::invalid_argument("adaptive oracle weights require an IntensityModel");
        if (mode == EstimatorMode::ADAPTIVE_PILOT && !(pilot_bandwidth > 0.0))
            throw std::invalid_argument("adaptive pilot weights require pilot_bandwidth > 0");
    }
};

/// Fixed-bandwidth estimator (1 / (n h^d)) sum_{y in Y_n} kappa((x0-y)/h).
inline double estimate_fixed(const SuperposedSample& sample, const EstimateRequest& req) {
    req.validate();
    const int d = req.kernel.d;
    const double inv_h = 1.0 / req.h;
    detail::UnionView view(sample, d);
    double sum = view.accumulate(req.x0_span(), req.h, [&](std::span<const double> y) {
        std::array<double, kMaxDim> u{};
        for (int i = 0; i < d; ++i) u[i] = (req.x0[i] - y[i]) * inv_h;
        return kernel_eval(req.kernel, std::span<const double>(u.data(), d));
    });
    return sum / (static_cast<double>(sample.n()) * std::pow(req.h, d));
}

/// Adaptive estimator (1/n) sum_i sum_{y in Phi_i}
///   (c(y)^d / h^d) kappa(((x0 - y)/h) c(y)),
/// with weights supplied by the callable c(y).
template <typename WeightFn>
double estimate_adaptive_with_weights(const SuperposedSample& sample,
                                      const EstimateRequest& req, double weight_lower_bound,
                                      WeightFn&& weight) {
    const int d = req.kernel.d;
    const double inv_h = 1.0 / req.h;
    // support radius bound: ||x0 - y|| <= h / c(y) <= h / c_min
    const double radius = req.h / std::max(weight_lower_bound, 1e-300);
    detail::UnionView view(sample, d);
    double sum = view.accumulate(req.x0_span(), radius, [&](std::span<const double> y) {
        const double c = weight(y);
        if (!(c > 0.0)) throw std::domain_error("adaptive weights must be positive");
        std::array<double, kMaxDim> u{};
        for (int i = 0; i < d; ++i) u[i] = (req.x0[i] - y[i]) * inv_h * c;
        double cd = 1.0;
        for (int i = 0; i < d; ++i) cd *= c;
        return cd * kernel_eval(req.kernel, std::span<const double>(u.data(), d));
    });
    return sum / (static_cast<double>(sample.n()) * std::pow(req.h, d));
}

inline double estimate_adaptive(const SuperposedSample& sample, const EstimateRequest& req) {
    req.validate();
    if (req.mode == EstimatorMode::ADAPTIVE_ORACLE) {
        const IntensityModel& model = *req.oracle_model;
        const double lam0 = model.intensity_at(req.x0_span());
        const double c_min = std::sqrt(model.lambda_min() / lam0);
        return estimate_adaptive_with_weights(
            sample, req, c_min, [&](std::span<const double> y) {
                return std::sqrt(model.intensity_at(y) / lam0);
            });
    }
    if (req.mode != EstimatorMode::ADAPTIVE_PILOT)
        throw std::invalid_argument("estimate_adaptive: request mode is not adaptive");

    // Pilot route: fixed-bandwidth estimates at x0 and at every data
    // point, clamped below at pilot_floor * pilot(x0).
    EstimateRequest pilot = req;
    pilot.mode = EstimatorMode::FIXED;
    pilot.h = req.pilot_bandwidth;
    const double pilot_x0 = estimate_fixed(sample, pilot);
    if (!(pilot_x0 > 0.0))
        throw std::domain_error("pilot estimate at x0 is zero; adaptive weights undefined");
    const double floor = req.pilot_floor * pilot_x0;
    const double c_min = std::sqrt(floor / pilot_x0);
    return estimate_adaptive_with_weights(
        sample, req, c_min, [&](std::span<const double> y) {
            EstimateRequest at_y = pilot;
            for (int i = 0; i < req.kernel.d; ++i) at_y.x0[i] = y[i];
            double lam = std::max(estimate_fixed(sample, at_y), floor);
            return std::sqrt(lam / pilot_x0);
        });
}

inline double estimate(const SuperposedSample& sample, const EstimateRequest& req) {
    return req.mode == EstimatorMode::FIXED ? estimate_fixed(sample, req)
                                            : estimate_adaptive(sample, req);
}

}  // namespace intens
