#pragma once

/// Leading bias/variance expansions and optimal bandwidths for both
/// estimators, including the adaptive h^4 coefficient A(u; x0), its
/// integral over the unit ball, and the d = 1 / d = 2 closed forms.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>

#include "intens/kernel.hpp"
#include "intens/model.hpp"
#include "intens/quadrature.hpp"

namespace intens {

struct BandwidthResult {
    double h_star = 0.0;
    double rate_exponent = 0.0;  // -1/(d+4) fixed, -1/(d+8) adaptive
    bool degenerate = false;     // zero Laplacian / zero A integral
};

/// Fixed-estimator leading bias  h^2 sum_i lambda_ii(x0) / (2 (d + 2 gamma + 2)).
inline double bias_leading_fixed(const IntensityModel& model, const KernelSpec& kernel,
                                 std::span<const double> x0, double h) {
    return h * h * model.intensity_laplacian(x0) /
           (2.0 * (kernel.d + 2.0 * kernel.gamma + 2.0));
}

/// Leading variance  lambda(x0) Q(d, gamma) / (n h^d), both estimators.
inline double var_leading(const IntensityModel& model, const KernelSpec& kernel,
                          std::span<const double> x0, std::size_t n, double h) {
    return model.intensity_at(x0) * kernel_moments(kernel).Q /
           (static_cast<double>(n) * std::pow(h, kernel.d));
}

/// Fixed-estimator asymptotically optimal bandwidth
///   h* = n^{-1/(d+4)} (d lambda Q / (V^2 (sum lambda_ii)^2))^{1/(d+4)}.
inline BandwidthResult h_star_fixed(const IntensityModel& model, const KernelSpec& kernel,
                                    std::span<const double> x0, std::size_t n) {
    BandwidthResult r;
    r.rate_exponent = -1.0 / (kernel.d + 4.0);
    const double lap = model.intensity_laplacian(x0);
    if (lap == 0.0) {
        r.degenerate = true;
        return r;
    }
    const KernelMoments m = kernel_moments(kernel);
    const double num = kernel.d * model.intensity_at(x0) * m.Q;
    const double den = m.V * m.V * lap * lap;
    r.h_star = std::pow(num / den / static_cast<double>(n), 1.0 / (kernel.d + 4.0));
    return r;
}

/// d = 2 specialised display  n^{-1/6} (8 lambda (g+1)^2 (g+2)^2 /
/// ((2g+1) pi (l11+l22)^2))^{1/6}; equals the general formula.
inline BandwidthResult h_star_fixed_2d(const IntensityModel& model, double gamma,
                                       std::span<const double> x0, std::size_t n) {
    BandwidthResult r;
    r.rate_exponent = -1.0 / 6.0;
    const double lap = model.intensity_laplacian(x0);
    if (lap == 0.0) {
        r.degenerate = true;
        return r;
    }
    const double num = 8.0 * model.intensity_at(x0) * (gamma + 1.0) * (gamma + 1.0) *
                       (gamma + 2.0) * (gamma + 2.0);
    const double den = (2.0 * gamma + 1.0) * std::numbers::pi * lap * lap;
    r.h_star = std::pow(num / den / static_cast<double>(n), 1.0 / 6.0);
    return r;
}

/// Integrand A(u; x0) of the adaptive h^4 bias coefficient, assembled
/// term by term from g_u derivatives at v = 1 and weight derivatives
/// at x0:
///
///   A =  g'(1)/24  D^4 c (u^4)  +  g''''(1)/24 (Dc u)^4
///      + g''(1)/2 [ (Dc u)(D^3 c u^3)/3 + (D^2 c u^2)^2 / 4 ]
///      + g'''(1)/4 (Dc u)^2 (D^2 c u^2).
class AdaptiveBiasCoefficient {
  public:
    AdaptiveBiasCoefficient(const IntensityModel& model, const KernelSpec& kernel,
                            std::span<const double> x0)
        : kernel_(kernel), weight_(model, x0), derivs_(kernel, 4) {
        if (!(kernel.gamma > 5.0))
            throw std::domain_error("adaptive h^4 coefficient requires gamma > 5");
    }

    double integrand(std::span<const double> u) const {
        const double g1 = gu_derivative(derivs_, u, 1, 1.0);
        const double g2 = gu_derivative(derivs_, u, 2, 1.0);
        const double g3 = gu_derivative(derivs_, u, 3, 1.0);
        const double g4 = gu_derivative(derivs_, u, 4, 1.0);
        const double c1 = weight_.directional(1, u);
        const double c2 = weight_.directional(2, u);
        const double c3 = weight_.directional(3, u);
        const double c4 = weight_.directional(4, u);
        return g1 / 24.0 * c4 + g4 / 24.0 * c1 * c1 * c1 * c1 +
               g2 / 2.0 * (c1 * c3 / 3.0 + c2 * c2 / 4.0) + g3 / 4.0 * c1 * c1 * c2;
    }

    /// Only the third-order terms of the bias expansion; vanishes by the
    /// kernel's symmetry and integration by parts.
    double third_order_integrand(std::span<const double> u) const {
        const double g1 = gu_derivative(derivs_, u, 1, 1.0);
        const double g2 = gu_derivative(derivs_, u, 2, 1.0);
        const double g3 = gu_derivative(derivs_, u, 3, 1.0);
        const double c1 = weight_.directional(1, u);
        const double c2 = weight_.directional(2, u);
        const double c3 = weight_.directional(3, u);
        return g1 / 6.0 * c3 + g2 / 2.0 * c1 * c2 + g3 / 6.0 * c1 * c1 * c1;
    }

    /// Integral over the unit ball (all g_u^{(k)}(1) vanish for ||u|| > 1).
    QuadResult integral(double tol = 1e-9) const {
        auto f = [this](const double* u) {
            return integrand(std::span<const double>(u, kernel_.d));
        };
        return integrate_unit_ball(f, kernel_.d, tol);
    }

    QuadResult third_order_integral(double tol = 1e-9) const {
        auto f = [this](const double* u) {
            return third_order_integrand(std::span<const double>(u, kernel_.d));
        };
        return integrate_unit_ball(f, kernel_.d, tol);
    }

  private:
    KernelSpec kernel_;
    AbramsonWeight weight_;
    KernelDerivatives derivs_;
};

inline double A_integral(const IntensityModel& model, const KernelSpec& kernel,
                         std::span<const double> x0, double tol = 1e-9) {
    return AdaptiveBiasCoefficient(model, kernel, x0).integral(tol).value;
}

/// Adaptive leading bias  lambda(x0) h^4 int A(u; x0) du.
inline double bias_leading_adaptive(const IntensityModel& model, const KernelSpec& kernel,
                                    std::span<const double> x0, double h) {
    return model.intensity_at(x0) * std::pow(h, 4) * A_integral(model, kernel, x0);
}

/// d = 1 closed form: V4(1,gamma)/24 * [ -l4/l + 8 l3 l1 / l^2
///   + 6 l2^2 / l^2 - 36 l2 l1^2 / l^3 + 24 l1^4 / l^4 ],
/// the h^4 coefficient divided by the leading lambda(x0).
inline double A_integral_closed_1d(const IntensityModel& model, std::span<const double> x0,
                                   double gamma) {
    if (model.window().d != 1)
        throw std::invalid_argument("A_integral_closed_1d: model must be one-dimensional");
    const double lam = model.intensity_at(x0);
    const double l1 = model.intensity_partial({1, 0, 0}, x0);
    const double l2 = model.intensity_partial({2, 0, 0}, x0);
    const double l3 = model.intensity_partial({3, 0, 0}, x0);
    const double l4 = model.intensity_partial({4, 0, 0}, x0);
    const double v4 = 3.0 / ((3.0 + 2.0 * gamma) * (5.0 + 2.0 * gamma));
    const double bracket = -l4 / lam + 8.0 * l3 * l1 / (lam * lam) +
                           6.0 * l2 * l2 / (lam * lam) -
                           36.0 * l2 * l1 * l1 / (lam * lam * lam) +
                           24.0 * std::pow(l1, 4) / std::pow(lam, 4);
    return v4 / 24.0 * bracket;
}

/// d = 2 closed form V4(2,gamma) C4 + V2(2,gamma) C2 built from the
/// Abramson weight partials at x0.
inline double A_integral_closed_2d(const IntensityModel& model, std::span<const double> x0,
                                   double gamma) {
    if (model.window().d != 2)
        throw std::invalid_argument("A_integral_closed_2d: model must be two-dimensional");
    AbramsonWeight c(model, x0);
    auto D = [&](int i, int j, int k, int l) {
        MultiIndex a{};
        for (int idx : {i, j, k, l})
            if (idx >= 0) a[idx] += 1;
        return c.partial(a, x0);
    };
    const double c1[2] = {D(0, -1, -1, -1), D(1, -1, -1, -1)};
    const double c11 = D(0, 0, -1, -1), c22 = D(1, 1, -1, -1), c12 = D(0, 1, -1, -1);
    double C4 = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double ciii = D(i, i, i, -1);
        const double ciiii = D(i, i, i, i);
        const double cii = i == 0 ? c11 : c22;
        C4 += -ciiii / 12.0 + c1[i] * ciii + 0.75 * cii * cii -
              6.0 * c1[i] * c1[i] * cii + 5.0 * std::pow(c1[i], 4);
    }
    const double c112 = D(0, 0, 1, -1), c122 = D(0, 1, 1, -1);
    const double c1122 = D(0, 0, 1, 1);
    const double C2 = 30.0 * c1[0] * c1[0] * c1[1] * c1[1] -
                      6.0 * c1[0] * c1[0] * c22 - 6.0 * c1[1] * c1[1] * c11 -
                      24.0 * c1[0] * c1[1] * c12 + 3.0 * c1[0] * c122 +
                      3.0 * c1[1] * c112 + 1.5 * c11 * c22 + 3.0 * c12 * c12 -
                      0.5 * c1122;
    const double a = 4.0 + 2.0 * gamma, b = 6.0 + 2.0 * gamma;
    const double v4 = 3.0 / (a * b), v2 = 1.0 / (a * b);
    return v4 * C4 + v2 * C2;
}

/// Adaptive optimal bandwidth
///   h* = n^{-1/(d+8)} (d Q / (8 lambda(x0) (int A)^2))^{1/(d+8)}.
inline BandwidthResult h_star_adaptive(const IntensityModel& model, const KernelSpec& kernel,
                                       std::span<const double> x0, std::size_t n) {
    BandwidthResult r;
    r.rate_exponent = -1.0 / (kernel.d + 8.0);
    const double A = A_integral(model, kernel, x0);
    if (A == 0.0) {
        r.degenerate = true;
        return r;
    }
    const double Q = kernel_moments(kernel).Q;
    const double num = kernel.d * Q;
    const double den = 8.0 * model.intensity_at(x0) * A * A;
    r.h_star = std::pow(num / den / static_cast<double>(n), 1.0 / (kernel.d + 8.0));
    return r;
}

}  // namespace intens
