#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "intens/model.hpp"

using namespace intens;

namespace {

Window window1(double lo = -1.0, double hi = 1.0) {
    return Window(1, {&lo, 1}, {&hi, 1});
}

Window window2() {
    double lo[2] = {-1.0, -1.0}, hi[2] = {1.0, 1.0};
    return Window(2, {lo, 2}, {hi, 2});
}

template <typename F>
double fd(const F& f, std::vector<double> x, int i, double eps = 1e-5) {
    std::vector<double> xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    return (f(xp) - f(xm)) / (2.0 * eps);
}

}  // namespace

TEST_CASE("window invariants", "[model]") {
    CHECK_THROWS_AS(window1(1.0, -1.0), std::invalid_argument);
    Window w = window2();
    double in[2] = {0.3, -0.9}, out[2] = {1.0, 0.0};
    CHECK(w.contains({in, 2}));
    CHECK_FALSE(w.contains({out, 2}));  // boundary is outside (open box)
    CHECK(w.volume() == Catch::Approx(4.0));
    CHECK(w.boundary_distance({in, 2}) == Catch::Approx(0.1));
}

TEST_CASE("polynomial arithmetic and derivatives", "[model]") {
    Polynomial p;
    p.add_term(2.0, {2, 1, 0});
    p.add_term(-1.0, {0, 0, 0});
    double x[3] = {0.5, 3.0, 0.0};
    CHECK(p.eval({x, 3}) == Catch::Approx(2.0 * 0.25 * 3.0 - 1.0));
    Polynomial dp = p.derivative(0);  // 4 x1 x2
    CHECK(dp.eval({x, 3}) == Catch::Approx(4.0 * 0.5 * 3.0));
    Polynomial sq = p * p;
    CHECK(sq.eval({x, 3}) == Catch::Approx(p.eval({x, 3}) * p.eval({x, 3})));
}

TEST_CASE("constant model", "[model]") {
    IntensityModel m = IntensityModel::constant(7.5, window1());
    double x = 0.3;
    CHECK(m.intensity_at({&x, 1}) == 7.5);
    CHECK(m.intensity_partial({2, 0, 0}, {&x, 1}) == 0.0);
    CHECK(m.lambda_min() == 7.5);
    CHECK(m.lambda_max() == 7.5);
    CHECK_THROWS_AS(IntensityModel::constant(0.0, window1()), std::invalid_argument);
    double outside = 1.5;
    CHECK_THROWS_AS(m.intensity_at({&outside, 1}), std::domain_error);
}

TEST_CASE("log-polynomial partials agree with finite differences", "[model]") {
    Polynomial p;
    p.add_term(2.0, {0, 0, 0});
    p.add_term(0.7, {1, 0, 0});
    p.add_term(-0.5, {2, 0, 0});
    p.add_term(0.3, {1, 1, 0});
    p.add_term(0.1, {0, 3, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window2());
    auto f = [&](const std::vector<double>& x) {
        return m.intensity_at({x.data(), x.size()});
    };
    std::vector<double> x0 = {0.2, -0.3};
    for (int i = 0; i < 2; ++i) {
        MultiIndex a{};
        a[i] = 1;
        CHECK(m.intensity_partial(a, {x0.data(), 2}) ==
              Catch::Approx(fd(f, x0, i)).epsilon(1e-7));
    }
    MultiIndex mixed{1, 1, 0};
    auto d1 = [&](const std::vector<double>& x) {
        MultiIndex a{1, 0, 0};
        return m.intensity_partial(a, {x.data(), x.size()});
    };
    CHECK(m.intensity_partial(mixed, {x0.data(), 2}) ==
          Catch::Approx(fd(d1, x0, 1)).epsilon(1e-6));
    CHECK_THROWS_AS(
        m.intensity_partial({3, 3, 0}, {x0.data(), 2}),  // order 6 > 5
        std::invalid_argument);
}

TEST_CASE("log-polynomial degree cap", "[model]") {
    Polynomial p;
    p.add_term(1.0, {5, 0, 0});
    CHECK_THROWS_AS(IntensityModel::log_polynomial(p, window1()), std::invalid_argument);
}

TEST_CASE("gaussian bump values, partials and bounds", "[model]") {
    double mean[2] = {0.2, -0.1};
    IntensityModel m = IntensityModel::gaussian_bump(2.0, 5.0, {mean, 2}, 0.4, window2());
    std::vector<double> x0 = {0.1, 0.3};
    double r2 = 0.0;
    for (int i = 0; i < 2; ++i) r2 += (x0[i] - mean[i]) * (x0[i] - mean[i]);
    CHECK(m.intensity_at({x0.data(), 2}) ==
          Catch::Approx(2.0 + 5.0 * std::exp(-r2 / (2.0 * 0.16))).epsilon(1e-13));
    auto f = [&](const std::vector<double>& x) {
        return m.intensity_at({x.data(), x.size()});
    };
    for (int i = 0; i < 2; ++i) {
        MultiIndex a{};
        a[i] = 1;
        CHECK(m.intensity_partial(a, {x0.data(), 2}) ==
              Catch::Approx(fd(f, x0, i)).epsilon(1e-7));
    }
    CHECK(m.lambda_min() >= 2.0);
    CHECK(m.lambda_max() <= 7.0);
    CHECK(m.lambda_max() == Catch::Approx(7.0).epsilon(1e-3));
}

TEST_CASE("laplacian equals the sum of pure second partials", "[model]") {
    Polynomial p;
    p.add_term(1.5, {0, 0, 0});
    p.add_term(-0.4, {2, 0, 0});
    p.add_term(0.2, {0, 2, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window2());
    std::vector<double> x0 = {0.25, -0.15};
    double sum = m.intensity_partial({2, 0, 0}, {x0.data(), 2}) +
                 m.intensity_partial({0, 2, 0}, {x0.data(), 2});
    CHECK(m.intensity_laplacian({x0.data(), 2}) == Catch::Approx(sum).epsilon(1e-13));
}

TEST_CASE("Abramson weight basic identities", "[model]") {
    Polynomial p;
    p.add_term(3.0, {0, 0, 0});
    p.add_term(0.8, {1, 0, 0});
    p.add_term(-0.3, {2, 0, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window1());
    double x0 = 0.2;
    AbramsonWeight c(m, {&x0, 1});
    CHECK(c({&x0, 1}) == Catch::Approx(1.0).epsilon(1e-14));  // c(x0) = 1
    double y = -0.3;
    CHECK(c({&y, 1}) == Catch::Approx(std::sqrt(m.intensity_at({&y, 1}) /
                                                m.intensity_at({&x0, 1})))
                            .epsilon(1e-14));
}

TEST_CASE("Abramson weight derivatives: closed forms in one dimension", "[model]") {
    Polynomial p;
    p.add_term(3.0, {0, 0, 0});
    p.add_term(0.8, {1, 0, 0});
    p.add_term(-0.3, {2, 0, 0});
    p.add_term(0.15, {3, 0, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window1());
    double x0 = 0.2;
    AbramsonWeight c(m, {&x0, 1});
    const double lam = m.intensity_at({&x0, 1});
    const double l1 = m.intensity_partial({1, 0, 0}, {&x0, 1});
    const double l2 = m.intensity_partial({2, 0, 0}, {&x0, 1});
    // c'(x0) = lambda' / (2 lambda), c''(x0) = lambda''/(2 lambda) - (lambda')^2/(4 lambda^2)
    CHECK(c.partial({1, 0, 0}, {&x0, 1}) ==
          Catch::Approx(l1 / (2.0 * lam)).epsilon(1e-12));
    CHECK(c.partial({2, 0, 0}, {&x0, 1}) ==
          Catch::Approx(l2 / (2.0 * lam) - l1 * l1 / (4.0 * lam * lam)).epsilon(1e-12));
}

TEST_CASE("Abramson weight: exp route equals sqrt chain-rule route", "[model]") {
    // the same intensity function expressed as LOG_POLYNOMIAL (exact exp
    // route) and as GAUSSIAN_BUMP with a = tiny offset (sqrt recursion)
    double mean[1] = {0.1};
    double s = 0.6;
    Polynomial p;  // log of exp(-(x-m)^2/(2 s^2)) + log b with b = 2
    p.add_term(std::log(2.0) - mean[0] * mean[0] / (2.0 * s * s), {0, 0, 0});
    p.add_term(mean[0] / (s * s), {1, 0, 0});
    p.add_term(-0.5 / (s * s), {2, 0, 0});
    IntensityModel lp = IntensityModel::log_polynomial(p, window1());
    IntensityModel gb = IntensityModel::gaussian_bump(1e-12, 2.0, {mean, 1}, s, window1());
    double x0 = 0.25, x = -0.2;
    AbramsonWeight clp(lp, {&x0, 1}), cgb(gb, {&x0, 1});
    for (int order = 1; order <= 4; ++order) {
        MultiIndex a{order, 0, 0};
        CHECK(clp.partial(a, {&x, 1}) ==
              Catch::Approx(cgb.partial(a, {&x, 1})).epsilon(1e-6));
    }
}

TEST_CASE("Abramson directional contraction matches partials", "[model]") {
    Polynomial p;
    p.add_term(2.0, {0, 0, 0});
    p.add_term(0.5, {1, 0, 0});
    p.add_term(-0.2, {0, 1, 0});
    p.add_term(0.3, {1, 1, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window2());
    double x0[2] = {0.1, 0.2};
    AbramsonWeight c(m, {x0, 2});
    double u[2] = {0.6, -0.8};
    double expected = u[0] * c.partial({1, 0, 0}, {x0, 2}) +
                      u[1] * c.partial({0, 1, 0}, {x0, 2});
    CHECK(c.directional(1, {u, 2}) == Catch::Approx(expected).epsilon(1e-12));
    double expected2 = u[0] * u[0] * c.partial({2, 0, 0}, {x0, 2}) +
                       2.0 * u[0] * u[1] * c.partial({1, 1, 0}, {x0, 2}) +
                       u[1] * u[1] * c.partial({0, 2, 0}, {x0, 2});
    CHECK(c.directional(2, {u, 2}) == Catch::Approx(expected2).epsilon(1e-12));
}

TEST_CASE("pair correlation models", "[model]") {
    PairCorrelationModel poisson = PairCorrelationModel::poisson();
    double u[2] = {0.1, 0.2}, v[2] = {0.3, -0.1};
    CHECK(poisson({u, 2}, {v, 2}) == 1.0);
    CHECK(poisson.g_max() == 1.0);
    PairCorrelationModel thomas = PairCorrelationModel::thomas(25.0, 2.0, 0.05);
    CHECK(thomas({u, 2}, {u, 2}) == Catch::Approx(thomas.g_max()).epsilon(1e-14));
    CHECK(thomas({u, 2}, {v, 2}) > 1.0);       // clustering: g > 1
    CHECK(thomas({u, 2}, {v, 2}) < thomas.g_max());
    double far[2] = {0.9, 0.9};
    CHECK(thomas({u, 2}, {far, 2}) == Catch::Approx(1.0).margin(1e-10));
    CHECK_THROWS_AS(PairCorrelationModel::thomas(-1.0, 2.0, 0.05), std::invalid_argument);
}
