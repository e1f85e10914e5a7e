#pragma once

/// Intensity-function and pair-correlation models on a box window,
/// with exact partial derivatives up to total order 5 and the Abramson
/// weight c(x) = sqrt(lambda(x) / lambda(x0)) with derivatives up to
/// order 4. Supported intensity families:
///
///   CONSTANT         lambda(x) = a
///   LOG_POLYNOMIAL   lambda(x) = exp(P(x)), P a polynomial of total degree <= 4
///   GAUSSIAN_BUMP    lambda(x) = a + b exp(-||x - m||^2 / (2 s^2))
///
/// All models are immutable after construction.

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intens/kernel.hpp"

namespace intens {

using MultiIndex = std::array<int, kMaxDim>;

inline int multi_order(const MultiIndex& a) { return a[0] + a[1] + a[2]; }

/// Axis-aligned open box window in R^d.
struct Window {
    int d = 1;
    std::array<double, kMaxDim> lower{};
    std::array<double, kMaxDim> upper{};

    Window(int d_, std::span<const double> lo, std::span<const double> hi) : d(d_) {
        if (d < 1 || d > kMaxDim) throw std::invalid_argument("Window: d must be in {1,2,3}");
        for (int i = 0; i < d; ++i) {
            lower[i] = lo[i];
            upper[i] = hi[i];
            if (!(lower[i] < upper[i]))
                throw std::invalid_argument("Window: lower must be < upper componentwise");
        }
    }

    static Window unit_box(int d) {
        std::array<double, kMaxDim> lo{0, 0, 0}, hi{1, 1, 1};
        return Window(d, std::span<const double>(lo.data(), d),
                      std::span<const double>(hi.data(), d));
    }

    bool contains(std::span<const double> x) const {
        for (int i = 0; i < d; ++i)
            if (!(x[i] > lower[i] && x[i] < upper[i])) return false;
        return true;
    }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < d; ++i) v *= upper[i] - lower[i];
        return v;
    }

    double boundary_distance(std::span<const double> x) const {
        double dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i < d; ++i) {
            dist = std::min(dist, x[i] - lower[i]);
            dist = std::min(dist, upper[i] - x[i]);
        }
        return dist;
    }
};

/// Sparse polynomial in up to kMaxDim variables.
struct Polynomial {
    struct Term {
        double coef;
        MultiIndex exps;
    };
    std::vector<Term> terms;

    void add_term(double coef, const MultiIndex& exps) {
        for (auto& t : terms) {
            if (t.exps == exps) {
                t.coef += coef;
                return;
            }
        }
        terms.push_back({coef, exps});
    }

    int total_degree() const {
        int deg = 0;
        for (const auto& t : terms) deg = std::max(deg, multi_order(t.exps));
        return deg;
    }

    double eval(std::span<const double> x) const {
        double val = 0.0;
        for (const auto& t : terms) {
            double v = t.coef;
            for (std::size_t i = 0; i < x.size(); ++i)
                for (int k = 0; k < t.exps[i]; ++k) v *= x[i];
            val += v;
        }
        return val;
    }

    Polynomial derivative(int i) const {
        Polynomial out;
        for (const auto& t : terms) {
            if (t.exps[i] == 0) continue;
            MultiIndex e = t.exps;
            e[i] -= 1;
            out.add_term(t.coef * t.exps[i], e);
        }
        return out;
    }

    Polynomial operator*(const Polynomial& o) const {
        Polynomial out;
        for (const auto& a : terms)
            for (const auto& b : o.terms) {
                MultiIndex e;
                for (int i = 0; i < kMaxDim; ++i) e[i] = a.exps[i] + b.exps[i];
                out.add_term(a.coef * b.coef, e);
            }
        return out;
    }

    Polynomial operator+(const Polynomial& o) const {
        Polynomial out = *this;
        for (const auto& b : o.terms) out.add_term(b.coef, b.exps);
        return out;
    }

    Polynomial scaled(double s) const {
        Polynomial out = *this;
        for (auto& t : out.terms) t.coef *= s;
        return out;
    }
};

namespace detail {

/// Derivative engine for exp(P): D^alpha exp(P) = Q_alpha * exp(P) with
/// Q_{alpha + e_i} = D_i Q_alpha + Q_alpha D_i P. All Q up to the given
/// order are precomputed so evaluation is read-only.
class ExpPolyDerivs {
  public:
    ExpPolyDerivs() = default;

    ExpPolyDerivs(const Polynomial& p, int d, int max_order) {
        Polynomial one;
        one.add_term(1.0, {0, 0, 0});
        q_[{0, 0, 0}] = one;
        std::array<Polynomial, kMaxDim> dp;
        for (int i = 0; i < d; ++i) dp[i] = p.derivative(i);
        // breadth-first over multi-indices by total order
        std::vector<MultiIndex> frontier{{0, 0, 0}};
        for (int level = 0; level < max_order; ++level) {
            std::vector<MultiIndex> next;
            for (const auto& a : frontier) {
                for (int i = 0; i < d; ++i) {
                    MultiIndex b = a;
                    b[i] += 1;
                    if (q_.count(b)) continue;
                    const Polynomial& qa = q_.at(a);
                    q_[b] = qa.derivative(i) + qa * dp[i];
                    next.push_back(b);
                }
            }
            frontier = std::move(next);
        }
    }

    /// Q_alpha(x); multiply by exp(P(x)) externally.
    double factor(const MultiIndex& alpha, std::span<const double> x) const {
        auto it = q_.find(alpha);
        if (it == q_.end()) throw std::invalid_argument("derivative order not precomputed");
        return it->second.eval(x);
    }

  private:
    std::map<MultiIndex, Polynomial> q_;
};

}  // namespace detail

enum class IntensityFamily { CONSTANT, LOG_POLYNOMIAL, GAUSSIAN_BUMP };

class IntensityModel {
  public:
    static constexpr int kMaxOrder = 5;

    static IntensityModel constant(double a, Window window) {
        if (!(a > 0.0)) throw std::invalid_argument("constant intensity must be positive");
        IntensityModel m(IntensityFamily::CONSTANT, std::move(window));
        m.a_ = a;
        m.lambda_min_ = m.lambda_max_ = a;
        return m;
    }

    static IntensityModel log_polynomial(Polynomial p, Window window) {
        if (p.total_degree() > 4)
            throw std::invalid_argument("log-polynomial degree must be <= 4");
        IntensityModel m(IntensityFamily::LOG_POLYNOMIAL, std::move(window));
        m.poly_ = std::move(p);
        m.exp_derivs_ = detail::ExpPolyDerivs(m.poly_, m.window_.d, kMaxOrder);
        m.weight_derivs_ =
            detail::ExpPolyDerivs(m.poly_.scaled(0.5), m.window_.d, kMaxOrder);
        m.compute_bounds();
        return m;
    }

    static IntensityModel gaussian_bump(double a, double b, std::span<const double> mean,
                                        double s, Window window) {
        if (!(a > 0.0) || b < 0.0 || !(s > 0.0))
            throw std::invalid_argument("gaussian bump requires a > 0, b >= 0, s > 0");
        IntensityModel m(IntensityFamily::GAUSSIAN_BUMP, std::move(window));
        m.a_ = a;
        m.b_ = b;
        m.s_ = s;
        for (int i = 0; i < m.window_.d; ++i) m.mean_[i] = mean[i];
        Polynomial p;  // -||x - m||^2 / (2 s^2)
        for (int i = 0; i < m.window_.d; ++i) {
            MultiIndex e2{}, e1{};
            e2[i] = 2;
            e1[i] = 1;
            p.add_term(-0.5 / (s * s), e2);
            p.add_term(m.mean_[i] / (s * s), e1);
            p.add_term(-0.5 * m.mean_[i] * m.mean_[i] / (s * s), {0, 0, 0});
        }
        m.poly_ = std::move(p);
        m.exp_derivs_ = detail::ExpPolyDerivs(m.poly_, m.window_.d, kMaxOrder);
        m.compute_bounds();
        return m;
    }

    IntensityFamily family() const { return family_; }
    const Window& window() const { return window_; }
    double lambda_min() const { return lambda_min_; }
    double lambda_max() const { return lambda_max_; }

    double operator()(std::span<const double> x) const { return intensity_at(x); }

    double intensity_at(std::span<const double> x) const {
        require_inside(x);
        return value_unchecked(x);
    }

    double intensity_partial(const MultiIndex& alpha, std::span<const double> x) const {
        require_inside(x);
        int order = multi_order(alpha);
        if (order > kMaxOrder)
            throw std::invalid_argument("intensity_partial: order > 5 not supported");
        if (order == 0) return value_unchecked(x);
        switch (family_) {
            case IntensityFamily::CONSTANT:
                return 0.0;
            case IntensityFamily::LOG_POLYNOMIAL:
                return exp_derivs_.factor(alpha, x) * value_unchecked(x);
            case IntensityFamily::GAUSSIAN_BUMP:
                return b_ * exp_derivs_.factor(alpha, x) * std::exp(poly_.eval(x));
        }
        throw std::logic_error("unreachable");
    }

    /// Laplacian sum_i lambda_ii(x).
    double intensity_laplacian(std::span<const double> x) const {
        double sum = 0.0;
        for (int i = 0; i < window_.d; ++i) {
            MultiIndex a{};
            a[i] = 2;
            sum += intensity_partial(a, x);
        }
        return sum;
    }

    // used by the Abramson weight's exp route
    double log_poly_half_factor(const MultiIndex& alpha, std::span<const double> x) const {
        return weight_derivs_.factor(alpha, x);
    }

  private:
    IntensityModel(IntensityFamily f, Window w) : family_(f), window_(std::move(w)) {}

    void require_inside(std::span<const double> x) const {
        if (!window_.contains(x))
            throw std::domain_error("intensity model evaluated outside its window");
    }

    double value_unchecked(std::span<const double> x) const {
        switch (family_) {
            case IntensityFamily::CONSTANT:
                return a_;
            case IntensityFamily::LOG_POLYNOMIAL:
                return std::exp(poly_.eval(x));
            case IntensityFamily::GAUSSIAN_BUMP:
                return a_ + b_ * std::exp(poly_.eval(x));
        }
        throw std::logic_error("unreachable");
    }

    // Bounds by corner-inclusive grid search; never trusted from input.
    void compute_bounds() {
        const int d = window_.d;
        const int n = d == 1 ? 4096 : (d == 2 ? 256 : 48);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        std::array<int, kMaxDim> idx{};
        std::array<double, kMaxDim> x{};
        std::size_t total = 1;
        for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n + 1);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (int i = 0; i < d; ++i) {
                idx[i] = static_cast<int>(rem % (n + 1));
                rem /= (n + 1);
                x[i] = window_.lower[i] +
                       (window_.upper[i] - window_.lower[i]) * idx[i] / static_cast<double>(n);
            }
            double v = value_unchecked(std::span<const double>(x.data(), d));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        lambda_min_ = lo;
        lambda_max_ = hi;
        if (!(lambda_min_ > 0.0))
            throw std::invalid_argument("intensity must be bounded away from zero on W");
    }

    IntensityFamily family_;
    Window window_;
    double a_ = 0.0, b_ = 0.0, s_ = 1.0;
    std::array<double, kMaxDim> mean_{};
    Polynomial poly_;
    detail::ExpPolyDerivs exp_derivs_;
    detail::ExpPolyDerivs weight_derivs_;  // for exp(P/2), LOG_POLYNOMIAL only
    double lambda_min_ = 0.0, lambda_max_ = 0.0;
};

/// Abramson weight c(x) = sqrt(lambda(x) / lambda(x0)), with partial
/// derivatives up to order 4. LOG_POLYNOMIAL models use the exact
/// exp((P(x) - P(x0))/2) route; other families the sqrt chain rule
///   D^a f = [D^a lambda - sum_{0<b<a} C(a,b) D^b f D^{a-b} f] / (2 f),
/// f = sqrt(lambda), applied in increasing order.
class AbramsonWeight {
  public:
    static constexpr int kMaxOrder = 4;

    AbramsonWeight(const IntensityModel& model, std::span<const double> x0)
        : model_(&model) {
        if (!model.window().contains(x0))
            throw std::invalid_argument("AbramsonWeight: x0 must lie in W");
        for (std::size_t i = 0; i < x0.size() && i < x0_.size(); ++i) x0_[i] = x0[i];
        sqrt_lambda_x0_ = std::sqrt(model.intensity_at(x0));
    }

    const IntensityModel& model() const { return *model_; }
    std::span<const double> x0() const { return {x0_.data(), static_cast<std::size_t>(model_->window().d)}; }

    double operator()(std::span<const double> x) const {
        return std::sqrt(model_->intensity_at(x)) / sqrt_lambda_x0_;
    }

    double partial(const MultiIndex& alpha, std::span<const double> x) const {
        int order = multi_order(alpha);
        if (order > kMaxOrder)
            throw std::invalid_argument("AbramsonWeight: order > 4 not supported");
        if (order == 0) return (*this)(x);
        if (model_->family() == IntensityFamily::CONSTANT) return 0.0;
        if (model_->family() == IntensityFamily::LOG_POLYNOMIAL)
            return model_->log_poly_half_factor(alpha, x) * (*this)(x);
        std::map<MultiIndex, double> memo;
        return sqrt_lambda_partial(alpha, x, memo) / sqrt_lambda_x0_;
    }

    /// Directional contraction D^k c(x0)(u, ..., u).
    double directional(int k, std::span<const double> u) const {
        const int d = model_->window().d;
        double total = 0.0;
        // sum over index tuples via count vectors with multinomial weights
        std::vector<MultiIndex> counts;
        enumerate_counts(d, k, MultiIndex{}, 0, counts);
        for (const auto& a : counts) {
            double fact = 1.0;
            for (int j = 2; j <= k; ++j) fact *= j;
            for (int i = 0; i < d; ++i)
                for (int j = 2; j <= a[i]; ++j) fact /= j;
            double ufac = 1.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < a[i]; ++j) ufac *= u[i];
            if (ufac == 0.0) continue;
            total += fact * ufac * partial(a, x0());
        }
        return total;
    }

  private:
    static void enumerate_counts(int d, int remaining, MultiIndex cur, int dim,
                                 std::vector<MultiIndex>& out) {
        if (dim == d) {
            if (remaining == 0) out.push_back(cur);
            return;
        }
        for (int k = 0; k <= remaining; ++k) {
            cur[dim] = k;
            enumerate_counts(d, remaining - k, cur, dim + 1, out);
        }
    }

    double sqrt_lambda_partial(const MultiIndex& alpha, std::span<const double> x,
                               std::map<MultiIndex, double>& memo) const {
        if (multi_order(alpha) == 0) return std::sqrt(model_->intensity_at(x));
        auto it = memo.find(alpha);
        if (it != memo.end()) return it->second;
        const int d = model_->window().d;
        double acc = model_->intensity_partial(alpha, x);
        // subtract sum over strict intermediate splits beta of C(alpha,beta) f_b f_{a-b}
        std::vector<MultiIndex> subs;
        enumerate_below(alpha, d, MultiIndex{}, 0, subs);
        for (const auto& beta : subs) {
            int ob = multi_order(beta);
            if (ob == 0 || ob == multi_order(alpha)) continue;
            double binom = 1.0;
            for (int i = 0; i < d; ++i) binom *= choose(alpha[i], beta[i]);
            MultiIndex rest;
            for (int i = 0; i < kMaxDim; ++i) rest[i] = alpha[i] - beta[i];
            acc -= binom * sqrt_lambda_partial(beta, x, memo) *
                   sqrt_lambda_partial(rest, x, memo);
        }
        double val = acc / (2.0 * std::sqrt(model_->intensity_at(x)));
        memo[alpha] = val;
        return val;
    }

    static void enumerate_below(const MultiIndex& alpha, int d, MultiIndex cur, int dim,
                                std::vector<MultiIndex>& out) {
        if (dim == d) {
            out.push_back(cur);
            return;
        }
        for (int k = 0; k <= alpha[dim]; ++k) {
            cur[dim] = k;
            enumerate_below(alpha, d, cur, dim + 1, out);
        }
    }

    static double choose(int n, int k) {
        double c = 1.0;
        for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
        return c;
    }

    const IntensityModel* model_;
    std::array<double, kMaxDim> x0_{};
    double sqrt_lambda_x0_ = 1.0;
};

enum class PairCorrelationFamily { POISSON, THOMAS };

/// Pair correlation model; POISSON has g == 1, THOMAS (d = 2) the
/// stationary closed form with Gaussian dispersal.
struct PairCorrelationModel {
    PairCorrelationFamily family = PairCorrelationFamily::POISSON;
    double parent_intensity = 0.0;
    double offspring_mean = 0.0;
    double sigma = 0.0;

    static PairCorrelationModel poisson() { return {}; }

    static PairCorrelationModel thomas(double parent_intensity, double offspring_mean,
                                       double sigma) {
        if (!(parent_intensity > 0.0) || !(sigma > 0.0) || offspring_mean < 0.0)
            throw std::invalid_argument("thomas: parent_intensity, sigma > 0 required");
        PairCorrelationModel m;
        m.family = PairCorrelationFamily::THOMAS;
        m.parent_intensity = parent_intensity;
        m.offspring_mean = offspring_mean;
        m.sigma = sigma;
        return m;
    }

    double g_max() const {
        if (family == PairCorrelationFamily::POISSON) return 1.0;
        return 1.0 + 1.0 / (4.0 * std::numbers::pi * sigma * sigma * parent_intensity);
    }

    double operator()(std::span<const double> u, std::span<const double> v) const {
        if (family == PairCorrelationFamily::POISSON) return 1.0;
        if (u.size() != 2)
            throw std::invalid_argument("thomas pair correlation requires d = 2");
        double r2 = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) r2 += (u[i] - v[i]) * (u[i] - v[i]);
        return 1.0 + std::exp(-r2 / (4.0 * sigma * sigma)) /
                         (4.0 * std::numbers::pi * sigma * sigma * parent_intensity);
    }
};

}  // namespace intens
