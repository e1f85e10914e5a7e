#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "intens/kernel.hpp"

using namespace intens;

TEST_CASE("normalising constant and closed-form moments match quadrature",
          "[kernel]") {
    for (int d : {1, 2, 3}) {
        for (double gamma : {0.0, 1.0, 3.0, 6.0}) {
            KernelSpec spec(d, gamma);
            KernelMoments m = kernel_moments(spec);
            std::vector<int> zero(d, 0), two(d, 0), four(d, 0);
            two[0] = 2;
            four[0] = 4;
            auto mass = quad_monomial_vs_derivative(spec, {zero.data(), zero.size()},
                                                    {zero.data(), zero.size()});
            CHECK(mass.value == Catch::Approx(1.0).epsilon(1e-10));
            auto v = quad_monomial_vs_derivative(spec, {two.data(), two.size()},
                                                 {zero.data(), zero.size()});
            CHECK(v.value == Catch::Approx(m.V).epsilon(1e-10));
            auto v4 = quad_monomial_vs_derivative(spec, {four.data(), four.size()},
                                                  {zero.data(), zero.size()});
            CHECK(v4.value == Catch::Approx(m.V4).epsilon(1e-10));
            auto q = integrate_unit_ball(
                [&](const double* x) {
                    double k = kernel_eval(spec, {x, static_cast<std::size_t>(d)});
                    return k * k;
                },
                d, 1e-12);
            CHECK(q.value == Catch::Approx(m.Q).epsilon(1e-10));
        }
    }
}

TEST_CASE("specialised 2-d Q formula equals the general one", "[kernel]") {
    for (double gamma : {0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 6.0})
        CHECK(kernel_Q_2d(gamma) ==
              Catch::Approx(kernel_moments(KernelSpec(2, gamma)).Q).epsilon(1e-13));
}

TEST_CASE("V2 is rejected in one dimension", "[kernel]") {
    CHECK_THROWS_AS(kernel_moments(KernelSpec(1, 2.0)).V2(), std::domain_error);
    CHECK_NOTHROW(kernel_moments(KernelSpec(2, 2.0)).V2());
}

TEST_CASE("kernel evaluation outside the unit ball is zero", "[kernel]") {
    KernelSpec spec(2, 2.0);
    double inside[2] = {0.3, 0.4};
    double outside[2] = {0.8, 0.7};
    CHECK(kernel_eval(spec, {inside, 2}) > 0.0);
    CHECK(kernel_eval(spec, {outside, 2}) == 0.0);
    // gamma = 0: indicator of the closed ball over its volume
    KernelSpec box(2, 0.0);
    double boundary[2] = {1.0, 0.0};
    CHECK(kernel_eval(box, {boundary, 2}) ==
          Catch::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
}

TEST_CASE("smoothness gating: derivatives require gamma > order", "[kernel]") {
    double x[1] = {0.2};
    int first[1] = {1};
    CHECK_THROWS_AS(kernel_partial(KernelSpec(1, 1.0), {first, 1}, {x, 1}),
                    std::domain_error);
    CHECK_NOTHROW(kernel_partial(KernelSpec(1, 1.5), {first, 1}, {x, 1}));
    CHECK_THROWS_AS(KernelDerivatives(KernelSpec(1, 3.0), 4), std::domain_error);
    CHECK_NOTHROW(KernelDerivatives(KernelSpec(1, 4.5), 4));
}

namespace {

double fd_partial(const KernelSpec& spec, std::vector<int> idx, std::vector<double> x,
                  double eps) {
    // recursively apply central differences coordinate by coordinate
    for (int i = 0; i < spec.d; ++i) {
        if (idx[i] == 0) continue;
        std::vector<int> lower = idx;
        lower[i] -= 1;
        std::vector<double> xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        return (fd_partial(spec, lower, xp, eps) - fd_partial(spec, lower, xm, eps)) /
               (2.0 * eps);
    }
    return kernel_eval(spec, {x.data(), x.size()});
}

}  // namespace

TEST_CASE("exact kernel partials agree with finite differences", "[kernel]") {
    struct Case {
        int d;
        double gamma;
        std::vector<int> idx;
        std::vector<double> x;
    };
    const Case cases[] = {
        {1, 5.0, {1}, {0.3}},
        {1, 5.0, {2}, {-0.4}},
        {1, 6.0, {3}, {0.25}},
        {2, 5.0, {1, 1}, {0.2, -0.3}},
        {2, 6.0, {2, 1}, {-0.1, 0.35}},
        {2, 6.0, {0, 4}, {0.15, 0.2}},
        {3, 6.0, {1, 1, 1}, {0.2, -0.1, 0.3}},
        {3, 6.0, {2, 0, 2}, {0.1, 0.25, -0.2}},
    };
    for (const auto& c : cases) {
        KernelSpec spec(c.d, c.gamma);
        double exact = kernel_partial(spec, {c.idx.data(), c.idx.size()},
                                      {c.x.data(), c.x.size()});
        // balance truncation against roundoff: the compound central
        // difference of total order k loses ~eps_machine / eps^k
        int order = 0;
        for (int v : c.idx) order += v;
        double eps = std::pow(2.2e-16, 1.0 / (order + 2));
        double approx = fd_partial(spec, c.idx, c.x, eps);
        CHECK(exact == Catch::Approx(approx).margin(5e-3).epsilon(5e-3));
    }
}

TEST_CASE("directional contraction matches explicit multi-index sums", "[kernel]") {
    KernelSpec spec(2, 6.0);
    KernelDerivatives kd(spec, 2);
    double x[2] = {0.2, -0.3};
    double u[2] = {0.7, -0.4};
    // D^2 kappa(x)(u, u) = u1^2 D11 + 2 u1 u2 D12 + u2^2 D22
    int d11[2] = {2, 0}, d12[2] = {1, 1}, d22[2] = {0, 2};
    double expected = u[0] * u[0] * kernel_partial(spec, {d11, 2}, {x, 2}) +
                      2.0 * u[0] * u[1] * kernel_partial(spec, {d12, 2}, {x, 2}) +
                      u[1] * u[1] * kernel_partial(spec, {d22, 2}, {x, 2});
    CHECK(kd.directional(2, {x, 2}, {u, 2}) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("g_u derivatives agree with finite differences in v", "[kernel]") {
    KernelSpec spec(2, 6.0);
    KernelDerivatives kd(spec, 4);
    double u[2] = {0.5, -0.3};
    std::span<const double> us(u, 2);
    auto g = [&](double v) { return gu_derivative(kd, us, 0, v); };
    const double v0 = 0.9, eps = 1e-4;
    double g1 = (g(v0 + eps) - g(v0 - eps)) / (2.0 * eps);
    double g2 = (g(v0 + eps) - 2.0 * g(v0) + g(v0 - eps)) / (eps * eps);
    CHECK(gu_derivative(kd, us, 1, v0) == Catch::Approx(g1).margin(1e-5));
    CHECK(gu_derivative(kd, us, 2, v0) == Catch::Approx(g2).margin(1e-3));
    // exact value at order 0: v^{d+2} kappa(v u)
    double vu[2] = {v0 * u[0], v0 * u[1]};
    CHECK(g(v0) ==
          Catch::Approx(std::pow(v0, 4) * kernel_eval(spec, {vu, 2})).epsilon(1e-13));
}

TEST_CASE("first-order partial integration identity via quadrature", "[kernel]") {
    // int u_1 D_1 kappa = -1 for every dimension
    for (int d : {1, 2, 3}) {
        KernelSpec spec(d, 3.0);
        std::vector<int> mono(d, 0), deriv(d, 0);
        mono[0] = 1;
        deriv[0] = 1;
        auto r = quad_monomial_vs_derivative(spec, {mono.data(), mono.size()},
                                             {deriv.data(), deriv.size()});
        CHECK(r.value == Catch::Approx(-1.0).margin(1e-8));
    }
}
