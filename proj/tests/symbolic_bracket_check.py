#!/usr/bin/env python3
"""Symbolic check of the one-dimensional fourth-order bias bracket.

The adaptive estimator rescales distances by the weight
c(y) = sqrt(lambda(y) / lambda(x0)).  Combining the kernel integral table

    int u^4 g'(1)    = -2  V4
    int u^4 g''(1)   =  6  V4
    int u^4 g'''(1)  = -24 V4
    int u^4 g''''(1) = 120 V4

with the integrand

    A = g'/24 c4 + g''''/24 c1^4 + g''/2 (c1 c3 / 3 + c2^2 / 4) + g'''/4 c1^2 c2

gives the per-axis coefficient

    int A du = V4 * [ -c''''/12 + c' c''' + 3/4 c''^2 - 6 c'^2 c'' + 5 c'^4 ].

This script verifies, with exact symbolic algebra, that substituting the
derivatives of c = sqrt(lambda / lambda0) turns that bracket into the
intensity-only closed form

    (1/24) [ -l4/l + 8 l3 l1 / l^2 + 6 l2^2 / l^2 - 36 l2 l1^2 / l^3
             + 24 l1^4 / l^4 ]

and that for lambda(x) = exp(a + beta x) the bracket collapses to
beta^4 / 24 (the integer coefficients satisfy -1 + 8 + 6 - 36 + 24 = 1).
"""

import sys

import sympy as sp


def main() -> int:
    x, x0, a, beta = sp.symbols("x x0 a beta", real=True)
    lam = sp.Function("lam", positive=True)

    lam0 = lam(x0)
    c = sp.sqrt(lam(x) / lam0)

    def at_x0(expr):
        return expr.subs(x, x0)

    c1 = at_x0(sp.diff(c, x, 1))
    c2 = at_x0(sp.diff(c, x, 2))
    c3 = at_x0(sp.diff(c, x, 3))
    c4 = at_x0(sp.diff(c, x, 4))

    bracket_c = -c4 / 12 + c1 * c3 + sp.Rational(3, 4) * c2**2 - 6 * c1**2 * c2 + 5 * c1**4

    l1, l2, l3, l4 = (sp.Derivative(lam(x), (x, k)).subs(x, x0) for k in (1, 2, 3, 4))
    bracket_lambda = (
        -l4 / lam0
        + 8 * l3 * l1 / lam0**2
        + 6 * l2**2 / lam0**2
        - 36 * l2 * l1**2 / lam0**3
        + 24 * l1**4 / lam0**4
    ) / 24

    diff = sp.simplify(bracket_c - bracket_lambda)
    if diff != 0:
        print("FAIL: weight-derivative bracket != intensity bracket:", diff)
        return 1
    print("OK: c-derivative bracket equals the intensity-only closed form")

    # exponential-slope model: the bracket is exactly beta^4 / 24
    exp_bracket = bracket_lambda
    for k, deriv in ((1, l1), (2, l2), (3, l3), (4, l4)):
        exp_bracket = exp_bracket.subs(deriv, beta**k * sp.exp(a + beta * x0))
    exp_bracket = exp_bracket.subs(lam0, sp.exp(a + beta * x0))
    residual = sp.simplify(exp_bracket - beta**4 / 24)
    if residual != 0:
        print("FAIL: exponential model bracket != beta^4 / 24:", residual)
        return 1
    print("OK: exponential-slope model collapses to beta^4 / 24")

    coeffs = [-1, 8, 6, -36, 24]
    if sum(coeffs) != 1:
        print("FAIL: integer coefficients do not sum to 1:", coeffs)
        return 1
    print("OK: integer coefficients -1 + 8 + 6 - 36 + 24 = 1")
    return 0


if __name__ == "__main__":
    sys.exit(main())
