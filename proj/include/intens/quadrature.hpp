#pragma once

/// Deterministic quadrature over intervals and unit balls in d = 1, 2, 3.
///
/// Ball integrals use product rules in polar / spherical coordinates
/// (Gauss-Legendre in the radial and polar-angle directions, periodic
/// trapezoid in azimuth). For polynomial integrands restricted to the
/// ball, which covers the Beta kernel family with integer smoothness,
/// these rules are exact once the node count exceeds the degree; for
/// smooth non-polynomial integrands they converge spectrally. Node
/// counts are doubled until two successive estimates agree to the
/// requested tolerance.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace intens {

/// Result of an adaptive quadrature computation.
struct QuadResult {
    double value = 0.0;
    double error_estimate = 0.0;  // |last - previous| refinement difference
    std::size_t evaluations = 0;
    bool converged = false;
};

class QuadratureError : public std::runtime_error {
  public:
    QuadratureError(const std::string& what, double achieved_error)
        : std::runtime_error(what), achieved_error(achieved_error) {}
    double achieved_error;
};

/// Gauss-Legendre nodes and weights on [-1, 1], cached per node count.
class GaussLegendre {
  public:
    struct Rule {
        std::vector<double> nodes;
        std::vector<double> weights;
    };

    static const Rule& get(std::size_t n) {
        static std::unordered_map<std::size_t, Rule> cache;
        static std::mutex mutex;
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(n);
        if (it != cache.end()) return it->second;
        return cache.emplace(n, compute(n)).first->second;
    }

  private:
    // Newton iteration on P_n with the Chebyshev-like initial guess.
    static Rule compute(std::size_t n) {
        Rule rule;
        rule.nodes.resize(n);
        rule.weights.resize(n);
        const std::size_t m = (n + 1) / 2;
        for (std::size_t i = 0; i < m; ++i) {
            double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(n) + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (std::size_t k = 2; k <= n; ++k) {
                    double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            rule.nodes[i] = -x;
            rule.nodes[n - 1 - i] = x;
            double w = 2.0 / ((1.0 - x * x) * dp * dp);
            rule.weights[i] = w;
            rule.weights[n - 1 - i] = w;
        }
        return rule;
    }
};

namespace detail {

// Compensated (Kahan) accumulator: ball integrands can be large with a
// small net integral, e.g. the oracle bias at small bandwidths.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        double y = x - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

}  // namespace detail

/// Integrate f over [a, b] with an n-node Gauss-Legendre rule.
template <typename F>
double gauss_legendre_interval(F&& f, double a, double b, std::size_t n) {
    const auto& rule = GaussLegendre::get(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    detail::KahanSum acc;
    for (std::size_t i = 0; i < n; ++i)
        acc.add(rule.weights[i] * f(mid + half * rule.nodes[i]));
    return half * acc.sum;
}

/// One fixed-level evaluation of the d-dimensional unit-ball rule with
/// radial node count n. f takes a const double* of length d.
inline double unit_ball_level(const std::function<double(const double*)>& f, int d,
                              std::size_t n, std::size_t* evals) {
    detail::KahanSum acc;
    if (d == 1) {
        const auto& rule = GaussLegendre::get(2 * n);
        for (std::size_t i = 0; i < 2 * n; ++i) {
            double x = rule.nodes[i];
            acc.add(rule.weights[i] * f(&x));
        }
        if (evals) *evals += 2 * n;
        return acc.sum;
    }
    const auto& rad = GaussLegendre::get(n);
    if (d == 2) {
        const std::size_t m = 2 * n + 1;  // azimuthal points
        const double dtheta = 2.0 * std::numbers::pi / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.5 * (rad.nodes[i] + 1.0);
            double wr = 0.5 * rad.weights[i] * r * dtheta;
            for (std::size_t j = 0; j < m; ++j) {
                double theta = dtheta * static_cast<double>(j);
                double x[2] = {r * std::cos(theta), r * std::sin(theta)};
                acc.add(wr * f(x));
            }
        }
        if (evals) *evals += n * m;
        return acc.sum;
    }
    if (d == 3) {
        const auto& pol = GaussLegendre::get(n);  // t = cos(polar angle)
        const std::size_t m = 2 * n + 1;
        const double dphi = 2.0 * std::numbers::pi / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.5 * (rad.nodes[i] + 1.0);
            double wr = 0.5 * rad.weights[i] * r * r;
            for (std::size_t k = 0; k < n; ++k) {
                double t = pol.nodes[k];
                double s = std::sqrt(std::max(0.0, 1.0 - t * t));
                double w = wr * pol.weights[k] * dphi;
                for (std::size_t j = 0; j < m; ++j) {
                    double phi = dphi * static_cast<double>(j);
                    double x[3] = {r * s * std::cos(phi), r * s * std::sin(phi), r * t};
                    acc.add(w * f(x));
                }
            }
        }
        if (evals) *evals += n * n * m;
        return acc.sum;
    }
    throw std::invalid_argument("unit_ball_level: dimension must be 1, 2 or 3");
}

/// Adaptive integral of f over the unit ball in R^d. Node counts are
/// doubled until successive estimates differ by less than
/// tol * (1 + |I|). Throws QuadratureError on non-convergence.
inline QuadResult integrate_unit_ball(const std::function<double(const double*)>& f, int d,
                                      double tol = 1e-10, std::size_t n0 = 8,
                                      std::size_t max_n = 4096) {
    QuadResult res;
    double prev = unit_ball_level(f, d, n0, &res.evaluations);
    for (std::size_t n = 2 * n0; n <= max_n; n *= 2) {
        double cur = unit_ball_level(f, d, n, &res.evaluations);
        res.value = cur;
        res.error_estimate = std::abs(cur - prev);
        if (res.error_estimate <= tol * (1.0 + std::abs(cur))) {
            res.converged = true;
            return res;
        }
        prev = cur;
    }
    throw QuadratureError("unit ball quadrature did not converge to tol=" +
                              std::to_string(tol) +
                              " (achieved " + std::to_string(res.error_estimate) + ")",
                          res.error_estimate);
}

/// Ball of radius R centred at the origin: scale the unit-ball rule.
inline QuadResult integrate_ball(const std::function<double(const double*)>& f, int d,
                                 double radius, double tol = 1e-10, std::size_t n0 = 8,
                                 std::size_t max_n = 4096) {
    double jac = std::pow(radius, d);
    auto g = [&](const double* u) {
        double x[3];
        for (int i = 0; i < d; ++i) x[i] = radius * u[i];
        return jac * f(x);
    };
    return integrate_unit_ball(g, d, tol, n0, max_n);
}

/// Adaptive integral of f(u, v) over the product of two balls of the
/// given radii in R^d (2d-dimensional integral), d <= 2.
inline QuadResult integrate_ball_pair(const std::function<double(const double*, const double*)>& f,
                                      int d, double radius_u, double radius_v,
                                      double tol = 1e-7, std::size_t n0 = 8,
                                      std::size_t max_n = 64) {
    if (d > 2) throw std::invalid_argument("integrate_ball_pair: d must be 1 or 2");
    double jac = std::pow(radius_u * radius_v, d);
    auto level = [&](std::size_t n, std::size_t* evals) {
        detail::KahanSum acc;
        auto outer = [&](const double* u) {
            double su[2];
            for (int i = 0; i < d; ++i) su[i] = radius_u * u[i];
            auto inner = [&](const double* v) {
                double sv[2];
                for (int i = 0; i < d; ++i) sv[i] = radius_v * v[i];
                return f(su, sv);
            };
            return unit_ball_level(inner, d, n, evals);
        };
        acc.add(unit_ball_level(outer, d, n, evals));
        return jac * acc.sum;
    };
    QuadResult res;
    double prev = level(n0, &res.evaluations);
    for (std::size_t n = 2 * n0; n <= max_n; n *= 2) {
        double cur = level(n, &res.evaluations);
        res.value = cur;
        res.error_estimate = std::abs(cur - prev);
        if (res.error_estimate <= tol * (1.0 + std::abs(cur))) {
            res.converged = true;
            return res;
        }
        prev = cur;
    }
    throw QuadratureError("ball-pair quadrature did not converge", res.error_estimate);
}

/// Richardson extrapolation of y(h) = C + b h^q + o(h^q) sampled at
/// h0, h0/2, h0/4; two elimination steps assuming the next term is h^{q+step}.
inline double richardson(double y_h, double y_h2, double y_h4, double q = 2.0,
                         double step = 2.0) {
    double f1 = std::pow(2.0, q);
    double a = (f1 * y_h2 - y_h) / (f1 - 1.0);
    double b = (f1 * y_h4 - y_h2) / (f1 - 1.0);
    double f2 = std::pow(2.0, q + step);
    return (f2 * b - a) / (f2 - 1.0);
}

}  // namespace intens
