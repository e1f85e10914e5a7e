#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "intens/asymptotics.hpp"

using namespace intens;

namespace {

Window window1() {
    double lo = -1.0, hi = 1.0;
    return Window(1, {&lo, 1}, {&hi, 1});
}

Window window2() {
    double lo[2] = {-1.0, -1.0}, hi[2] = {1.0, 1.0};
    return Window(2, {lo, 2}, {hi, 2});
}

IntensityModel model1() {
    Polynomial p;
    p.add_term(5.0, {0, 0, 0});
    p.add_term(0.6, {1, 0, 0});
    p.add_term(-0.4, {2, 0, 0});
    p.add_term(0.1, {3, 0, 0});
    return IntensityModel::log_polynomial(p, window1());
}

IntensityModel model2() {
    Polynomial p;
    p.add_term(5.0, {0, 0, 0});
    p.add_term(0.4, {1, 0, 0});
    p.add_term(-0.3, {0, 1, 0});
    p.add_term(0.15, {1, 1, 0});
    p.add_term(-0.2, {2, 0, 0});
    p.add_term(0.05, {0, 3, 0});
    return IntensityModel::log_polynomial(p, window2());
}

}  // namespace

TEST_CASE("leading bias and variance formulas", "[asymptotics]") {
    IntensityModel m = model1();
    KernelSpec k(1, 3.0);
    double x0 = 0.1;
    std::span<const double> xs(&x0, 1);
    double lap = m.intensity_laplacian(xs);
    CHECK(bias_leading_fixed(m, k, xs, 0.2) ==
          Catch::Approx(0.04 * lap / (2.0 * (1.0 + 6.0 + 2.0))).epsilon(1e-14));
    KernelMoments mom = kernel_moments(k);
    CHECK(var_leading(m, k, xs, 100, 0.2) ==
          Catch::Approx(m.intensity_at(xs) * mom.Q / (100.0 * 0.2)).epsilon(1e-14));
}

TEST_CASE("optimal bandwidth obeys its power law in n", "[asymptotics]") {
    IntensityModel m = model1();
    KernelSpec k(1, 3.0);
    double x0 = 0.1;
    std::span<const double> xs(&x0, 1);
    BandwidthResult a = h_star_fixed(m, k, xs, 100);
    BandwidthResult b = h_star_fixed(m, k, xs, 1600);
    REQUIRE_FALSE(a.degenerate);
    CHECK(a.rate_exponent == Catch::Approx(-0.2));
    CHECK(a.h_star / b.h_star == Catch::Approx(std::pow(16.0, 0.2)).epsilon(1e-12));
}

TEST_CASE("2-d specialised bandwidth display equals the general formula",
          "[asymptotics]") {
    IntensityModel m = model2();
    double x0[2] = {0.1, -0.05};
    std::span<const double> xs(x0, 2);
    for (double gamma : {1.0, 2.0, 5.0}) {
        KernelSpec k(2, gamma);
        BandwidthResult gen = h_star_fixed(m, k, xs, 5000);
        BandwidthResult spec = h_star_fixed_2d(m, gamma, xs, 5000);
        REQUIRE_FALSE(gen.degenerate);
        CHECK(spec.h_star == Catch::Approx(gen.h_star).epsilon(1e-12));
    }
}

TEST_CASE("constant intensity gives a degenerate optimal bandwidth",
          "[asymptotics]") {
    IntensityModel m = IntensityModel::constant(10.0, window1());
    double x0 = 0.0;
    std::span<const double> xs(&x0, 1);
    BandwidthResult r = h_star_fixed(m, KernelSpec(1, 2.0), xs, 100);
    CHECK(r.degenerate);
    BandwidthResult ra = h_star_adaptive(m, KernelSpec(1, 6.0), xs, 100);
    CHECK(ra.degenerate);
}

TEST_CASE("adaptive coefficient requires gamma > 5", "[asymptotics]") {
    IntensityModel m = model1();
    double x0 = 0.1;
    CHECK_THROWS_AS(AdaptiveBiasCoefficient(m, KernelSpec(1, 5.0), {&x0, 1}),
                    std::domain_error);
    CHECK_NOTHROW(AdaptiveBiasCoefficient(m, KernelSpec(1, 6.0), {&x0, 1}));
}

TEST_CASE("third-order adaptive bias terms integrate to zero", "[asymptotics]") {
    IntensityModel m = model1();
    double x0 = 0.1;
    AdaptiveBiasCoefficient abc(m, KernelSpec(1, 6.0), {&x0, 1});
    CHECK(abc.third_order_integral().value == Catch::Approx(0.0).margin(1e-12));
    IntensityModel m2 = model2();
    double y0[2] = {0.1, -0.05};
    AdaptiveBiasCoefficient abc2(m2, KernelSpec(2, 6.0), {y0, 2});
    CHECK(abc2.third_order_integral().value == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("closed-form A integrals match quadrature", "[asymptotics]") {
    IntensityModel m = model1();
    double x0 = 0.1;
    std::span<const double> xs(&x0, 1);
    CHECK(A_integral(m, KernelSpec(1, 6.0), xs) ==
          Catch::Approx(A_integral_closed_1d(m, xs, 6.0)).epsilon(1e-10));
    IntensityModel m2 = model2();
    double y0[2] = {0.1, -0.05};
    std::span<const double> ys(y0, 2);
    CHECK(A_integral(m2, KernelSpec(2, 6.0), ys) ==
          Catch::Approx(A_integral_closed_2d(m2, ys, 6.0)).epsilon(1e-10));
}

TEST_CASE("exponential slope model: A equals V4 beta^4 / 24", "[asymptotics]") {
    // lambda(x) = exp(a + beta x): the 1-d bracket collapses to beta^4
    const double beta = 1.3;
    Polynomial p;
    p.add_term(4.0, {0, 0, 0});
    p.add_term(beta, {1, 0, 0});
    IntensityModel m = IntensityModel::log_polynomial(p, window1());
    double x0 = 0.2;
    std::span<const double> xs(&x0, 1);
    const double gamma = 6.0;
    const double v4 = kernel_moments(KernelSpec(1, gamma)).V4;
    CHECK(A_integral_closed_1d(m, xs, gamma) ==
          Catch::Approx(v4 * std::pow(beta, 4) / 24.0).epsilon(1e-12));
    CHECK(A_integral(m, KernelSpec(1, gamma), xs) ==
          Catch::Approx(v4 * std::pow(beta, 4) / 24.0).epsilon(1e-9));
}

TEST_CASE("adaptive bandwidth power law", "[asymptotics]") {
    IntensityModel m = model1();
    KernelSpec k(1, 6.0);
    double x0 = 0.1;
    std::span<const double> xs(&x0, 1);
    BandwidthResult a = h_star_adaptive(m, k, xs, 100);
    BandwidthResult b = h_star_adaptive(m, k, xs, 100 * 512);
    REQUIRE_FALSE(a.degenerate);
    CHECK(a.rate_exponent == Catch::Approx(-1.0 / 9.0));
    CHECK(a.h_star / b.h_star == Catch::Approx(std::pow(512.0, 1.0 / 9.0)).epsilon(1e-12));
}
