#pragma once

/// Beta kernel family on the unit ball of R^d:
///
///   kappa_gamma(x) = (1 - x.x)^gamma / c(d, gamma),  ||x|| <= 1,
///
/// with evaluation, exact partial derivatives up to order 5, closed-form
/// moment constants and the integration-by-parts identity helpers.
/// kappa_gamma is k times continuously differentiable iff gamma > k, so
/// every derivative query checks gamma against the requested order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "intens/quadrature.hpp"

namespace intens {

constexpr int kMaxDim = 3;

struct KernelSpec {
    int d = 1;          // dimension
    double gamma = 0.0; // smoothness parameter, >= 0

    KernelSpec(int d_, double gamma_) : d(d_), gamma(gamma_) {
        if (d < 1 || d > kMaxDim)
            throw std::invalid_argument("KernelSpec: dimension must be in {1,2,3}");
        if (gamma < 0.0)
            throw std::invalid_argument("KernelSpec: gamma must be nonnegative");
    }

    void require_smoothness(int order) const {
        if (order > 0 && !(gamma > order))
            throw std::domain_error(
                "Beta kernel derivative of order " + std::to_string(order) +
                " requires gamma > " + std::to_string(order) +
                " (gamma = " + std::to_string(gamma) + ")");
    }
};

/// Normalising constant c(d, gamma) = pi^{d/2} Gamma(gamma+1) / Gamma(d/2+gamma+1).
inline double beta_norm_constant(int d, double gamma) {
    return std::exp(0.5 * d * std::log(std::numbers::pi) + std::lgamma(gamma + 1.0) -
                    std::lgamma(0.5 * d + gamma + 1.0));
}

/// Closed-form moment constants of the Beta kernel.
struct KernelMoments {
    int d;
    double c;    // normalising constant
    double Q;    // integral of kappa^2
    double V;    // second moment of one coordinate
    double V4;   // fourth moment of one coordinate
    double v2_ = 0.0;

    /// Mixed moment int x_i^2 x_j^2 kappa, defined for d >= 2 only.
    double V2() const {
        if (d < 2) throw std::domain_error("V2(d,gamma) requires d >= 2");
        return v2_;
    }
};

inline KernelMoments kernel_moments(const KernelSpec& spec) {
    KernelMoments m;
    m.d = spec.d;
    m.c = beta_norm_constant(spec.d, spec.gamma);
    m.Q = beta_norm_constant(spec.d, 2.0 * spec.gamma) / (m.c * m.c);
    const double a = spec.d + 2.0 * spec.gamma + 2.0;
    const double b = spec.d + 2.0 * spec.gamma + 4.0;
    m.V = 1.0 / a;
    m.V4 = 3.0 / (a * b);
    if (spec.d >= 2) m.v2_ = 1.0 / (a * b);
    return m;
}

/// Specialised d=2 form Q(2,gamma) = (gamma+1)^2 / ((2 gamma + 1) pi).
inline double kernel_Q_2d(double gamma) {
    return (gamma + 1.0) * (gamma + 1.0) / ((2.0 * gamma + 1.0) * std::numbers::pi);
}

inline double kernel_eval(const KernelSpec& spec, std::span<const double> x) {
    double s = 1.0;
    for (int i = 0; i < spec.d; ++i) s -= x[i] * x[i];
    if (s < 0.0) return 0.0;
    // pow(0, 0) = 1 gives the closed-ball indicator for the box kernel
    return std::pow(s, spec.gamma) / beta_norm_constant(spec.d, spec.gamma);
}

namespace detail {

// A partial derivative of the Beta kernel is a sum of terms
//   coef * prod_i x_i^{pow_i} * (1 - ||x||^2)^{gamma - m},  m <= order,
// obtained by repeated application of
//   D_i [x^p s^{g-m}] = p_i x^{p-e_i} s^{g-m} - 2 (g-m) x_i x^{p+e_i'} s^{g-m-1}.
struct KernelTerm {
    double coef;
    std::array<int, kMaxDim> pow;
    int m;
};

inline std::vector<KernelTerm> differentiate_terms(const std::vector<KernelTerm>& terms,
                                                   int i, double gamma) {
    std::vector<KernelTerm> out;
    out.reserve(2 * terms.size());
    for (const auto& t : terms) {
        if (t.pow[i] > 0) {
            KernelTerm a = t;
            a.coef *= t.pow[i];
            a.pow[i] -= 1;
            out.push_back(a);
        }
        KernelTerm b = t;
        b.coef *= -2.0 * (gamma - t.m);
        b.pow[i] += 1;
        b.m += 1;
        out.push_back(b);
    }
    // merge like terms
    std::vector<KernelTerm> merged;
    for (const auto& t : out) {
        bool found = false;
        for (auto& u : merged) {
            if (u.m == t.m && u.pow == t.pow) {
                u.coef += t.coef;
                found = true;
                break;
            }
        }
        if (!found) merged.push_back(t);
    }
    return merged;
}

/// Term list for D^alpha kappa (alpha given as per-coordinate counts).
inline std::vector<KernelTerm> kernel_partial_terms(const KernelSpec& spec,
                                                    std::span<const int> counts) {
    std::vector<KernelTerm> terms{
        {1.0 / beta_norm_constant(spec.d, spec.gamma), {0, 0, 0}, 0}};
    for (int i = 0; i < spec.d; ++i)
        for (int k = 0; k < counts[i]; ++k)
            terms = differentiate_terms(terms, i, spec.gamma);
    return terms;
}

inline double eval_terms(const std::vector<KernelTerm>& terms, const KernelSpec& spec,
                         std::span<const double> x) {
    double s = 1.0;
    for (int i = 0; i < spec.d; ++i) s -= x[i] * x[i];
    if (s <= 0.0) return 0.0;  // boundary zeros hold whenever gamma > order
    double val = 0.0;
    for (const auto& t : terms) {
        double v = t.coef * std::pow(s, spec.gamma - t.m);
        for (int i = 0; i < spec.d; ++i)
            for (int k = 0; k < t.pow[i]; ++k) v *= x[i];
        val += v;
    }
    return val;
}

}  // namespace detail

/// Exact partial derivative of the kernel; multi_index holds the
/// derivative order per coordinate (sum = total order k <= 5).
/// Requires gamma > k.
inline double kernel_partial(const KernelSpec& spec, std::span<const int> multi_index,
                             std::span<const double> x) {
    if (static_cast<int>(multi_index.size()) != spec.d)
        throw std::invalid_argument("kernel_partial: multi-index size != d");
    int order = 0;
    for (int i = 0; i < spec.d; ++i) {
        if (multi_index[i] < 0) throw std::invalid_argument("kernel_partial: negative order");
        order += multi_index[i];
    }
    if (order > 5) throw std::invalid_argument("kernel_partial: order > 5 not supported");
    spec.require_smoothness(order);
    if (order == 0) return kernel_eval(spec, x);
    return detail::eval_terms(detail::kernel_partial_terms(spec, multi_index), spec, x);
}

/// Pre-expanded derivative tables for the directional contractions
/// D^j kappa(x)(u, ..., u) used by g_u derivatives and A(u; x0).
class KernelDerivatives {
  public:
    explicit KernelDerivatives(const KernelSpec& spec, int max_order = 4) : spec_(spec) {
        spec.require_smoothness(max_order);
        std::array<int, kMaxDim> counts{0, 0, 0};
        build(counts, 0, max_order);
    }

    /// D^j kappa(x)(u^{(j)}) = sum over count vectors alpha, |alpha| = j,
    /// of multinomial(j; alpha) u^alpha D^alpha kappa(x).
    double directional(int j, std::span<const double> x, std::span<const double> u) const {
        double total = 0.0;
        for (const auto& e : entries_) {
            if (e.order != j) continue;
            double ufac = e.multinomial;
            for (int i = 0; i < spec_.d; ++i)
                for (int k = 0; k < e.counts[i]; ++k) ufac *= u[i];
            if (ufac == 0.0) continue;
            total += ufac * detail::eval_terms(e.terms, spec_, x);
        }
        return total;
    }

    const KernelSpec& spec() const { return spec_; }

  private:
    struct Entry {
        std::array<int, kMaxDim> counts;
        int order;
        double multinomial;
        std::vector<detail::KernelTerm> terms;
    };

    void build(std::array<int, kMaxDim>& counts, int dim, int max_order) {
        if (dim == spec_.d) {
            int order = 0;
            double fact = 1.0;
            for (int i = 0; i < spec_.d; ++i) order += counts[i];
            for (int k = 2; k <= order; ++k) fact *= k;
            double denom = 1.0;
            for (int i = 0; i < spec_.d; ++i)
                for (int k = 2; k <= counts[i]; ++k) denom *= k;
            Entry e;
            e.counts = counts;
            e.order = order;
            e.multinomial = fact / denom;
            e.terms = detail::kernel_partial_terms(
                spec_, std::span<const int>(counts.data(), spec_.d));
            entries_.push_back(std::move(e));
            return;
        }
        for (int k = 0; k <= max_order; ++k) {
            int used = 0;
            for (int i = 0; i < dim; ++i) used += counts[i];
            if (used + k > max_order) break;
            counts[dim] = k;
            build(counts, dim + 1, max_order);
        }
        counts[dim] = 0;
    }

    KernelSpec spec_;
    std::vector<Entry> entries_;
};

/// k-th derivative of g_u(v) = v^{d+2} kappa(v u) at v, for k in 0..4:
///
///   g_u^{(k)}(v) = sum_{j=0}^{k} C(k,j) (d+2)(d+1)...(d+3-(k-j))
///                  v^{d+2-(k-j)} D^j kappa(vu)(u^{(j)}).
///
/// Requires gamma > k; identically zero once ||v u|| > 1.
inline double gu_derivative(const KernelDerivatives& kd, std::span<const double> u,
                            int order, double v) {
    if (order < 0 || order > 4)
        throw std::invalid_argument("gu_derivative: order must be in 0..4");
    if (!(v > 0.0)) throw std::invalid_argument("gu_derivative: v must be positive");
    const KernelSpec& spec = kd.spec();
    spec.require_smoothness(order);
    std::array<double, kMaxDim> vu{};
    for (int i = 0; i < spec.d; ++i) vu[i] = v * u[i];
    std::span<const double> vus(vu.data(), spec.d);
    double total = 0.0;
    for (int j = 0; j <= order; ++j) {
        double binom = 1.0;
        for (int k = 1; k <= j; ++k) binom = binom * (order - j + k) / k;
        double falling = 1.0;
        for (int k = 0; k < order - j; ++k) falling *= (spec.d + 2 - k);
        double vpow = std::pow(v, spec.d + 2 - (order - j));
        total += binom * falling * vpow * kd.directional(j, vus, u);
    }
    return total;
}

inline double gu_derivative(const KernelSpec& spec, std::span<const double> u, int order,
                            double v) {
    return gu_derivative(KernelDerivatives(spec, order), u, order, v);
}

/// Deterministic quadrature of  monomial(x) * D^beta kappa(x)  over the
/// unit ball; used to verify the integration-by-parts identities.
inline QuadResult quad_monomial_vs_derivative(const KernelSpec& spec,
                                              std::span<const int> monomial_exponents,
                                              std::span<const int> derivative_multi_index,
                                              double tol = 1e-8) {
    if (static_cast<int>(monomial_exponents.size()) != spec.d ||
        static_cast<int>(derivative_multi_index.size()) != spec.d)
        throw std::invalid_argument("quad_monomial_vs_derivative: exponent size != d");
    int order = 0;
    for (int i = 0; i < spec.d; ++i) order += derivative_multi_index[i];
    spec.require_smoothness(order);
    auto terms = detail::kernel_partial_terms(spec, derivative_multi_index);
    auto f = [&](const double* x) {
        std::span<const double> xs(x, spec.d);
        double val = order == 0 ? kernel_eval(spec, xs) : detail::eval_terms(terms, spec, xs);
        for (int i = 0; i < spec.d; ++i)
            for (int k = 0; k < monomial_exponents[i]; ++k) val *= x[i];
        return val;
    };
    return integrate_unit_ball(f, spec.d, tol);
}

}  // namespace intens
