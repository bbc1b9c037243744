import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvgrid.poly import Polynomial, simplex_monomial_integral
from curvgrid.quad import (
    MAX_GAUSS_POINTS,
    ConvergenceError,
    IntegratorConfig,
    duffy_map,
    duffy_map_many,
    gauss_legendre,
    integrate_recursive,
    integrate_rule,
    simplex_rule,
)
from curvgrid.lagrange import simplex_grid_enumerate

VOLUME = {1: 1.0, 2: 0.5, 3: 1 / 6}


@pytest.mark.parametrize("n", [1, 2, 5, 17, 40, 64, 100])
def test_gauss_legendre_matches_numpy(n):
    pts, wts = gauss_legendre(n)
    ref_p, ref_w = np.polynomial.legendre.leggauss(n)
    assert np.allclose(pts, (ref_p + 1) / 2, atol=1e-14)
    assert np.allclose(wts, ref_w / 2, atol=1e-14)


def test_duffy_examples():
    p, g = duffy_map(2, [0.5, 0.5])
    assert np.allclose(p, [0.5, 0.25]) and g == 0.5
    p, g = duffy_map(3, [0, 0, 0])
    assert np.allclose(p, 0) and g == 1
    for t in (0.0, 0.3, 1.0):
        p, g = duffy_map(2, [1.0, t])
        assert np.allclose(p, [1, 0]) and g == 0
    p, g = duffy_map(1, [0.3])
    assert np.allclose(p, [0.3]) and g == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_duffy_lands_in_simplex(dim, cube):
    p, g = duffy_map(dim, cube[:dim])
    assert np.all(p >= -1e-15) and p.sum() <= 1 + 1e-12 and g >= 0
    pm, gm = duffy_map_many(dim, np.array([cube[:dim]]))
    assert np.allclose(pm[0], p) and np.isclose(gm[0], g)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("order", [1, 2, 5, 8, 13])
def test_rule_exactness(dim, order):
    rule = simplex_rule(dim, order)
    assert rule.order >= order
    assert rule.weights.sum() == pytest.approx(VOLUME[dim], rel=1e-12)
    assert np.all(rule.points >= 0) and np.all(rule.points.sum(axis=1) <= 1 + 1e-12)
    for powers in (p for deg in range(order + 1) for p in simplex_grid_enumerate(dim, deg) if sum(p) == deg):
        vals = np.prod(rule.points ** np.array(powers), axis=1)
        assert rule.integrate(vals) == pytest.approx(simplex_monomial_integral(powers), rel=1e-12)


def test_rule_examples():
    assert integrate_rule(2, lambda p: np.ones(len(p)), 2, vectorized=True) == pytest.approx(0.5, rel=1e-14)
    assert integrate_rule(3, lambda p: p.prod(axis=1), 3, vectorized=True) == pytest.approx(1 / 720, rel=1e-13)
    assert integrate_rule(1, lambda p: p[:, 0] ** 5, 5, vectorized=True) == pytest.approx(1 / 6, rel=1e-13)


def test_rule_too_large():
    with pytest.raises(ValueError):
        simplex_rule(1, 2 * MAX_GAUSS_POINTS + 5)


@pytest.mark.parametrize("dim,fn,exact", [
    (1, lambda p: math.sqrt(p[0]), 2 / 3),
    (2, lambda p: math.sqrt(p[0] * p[1]), math.pi / 24),
    (3, lambda p: math.sqrt(p @ p), 0.087713599024791887),
])
def test_recursive_library_examples(dim, fn, exact):
    res = integrate_recursive(dim, fn)
    assert res.value == pytest.approx(exact, rel=1e-5)
    assert 1 <= res.order <= IntegratorConfig().max_order


def test_scalar_call_and_vectorized_agree():
    f = lambda p: np.exp(p[..., 0] - p[..., 1])  # noqa: E731
    a = integrate_recursive(2, lambda p: f(p))
    b = integrate_recursive(2, f, vectorized=True)
    assert a.value == b.value and a.order == b.order


def test_matrix_integrand_matches_exact():
    rng = np.random.default_rng(4)
    mats = [[Polynomial(3, {p: rng.normal() for p in simplex_grid_enumerate(3, 4)}) for _ in range(3)]
            for _ in range(2)]

    def f(pts):
        return np.stack([np.stack([m.evaluate_many(pts) for m in row], axis=1) for row in mats], axis=1)

    res = integrate_recursive(3, f, IntegratorConfig(rel_tol=1e-10), vectorized=True)
    want = np.array([[m.integrate_ref_simplex() for m in row] for row in mats])
    assert res.value.shape == (2, 3)
    assert np.allclose(res.value, want, rtol=1e-8, atol=1e-12)


def test_polynomial_estimates_stop_changing():
    p = Polynomial(2, {(3, 2): 1.5, (0, 4): -2.0, (1, 1): 0.5})
    exact = p.integrate_ref_simplex()
    for order in range(p.order(), p.order() + 6):
        got = integrate_rule(2, p.evaluate_many, order, vectorized=True)
        assert got == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("norm", ["L1", "L2", "Linf"])
def test_norms(norm):
    res = integrate_recursive(2, lambda p: np.stack([p[:, 0], np.sqrt(p[:, 1])], axis=1),
                              IntegratorConfig(norm=norm), vectorized=True)
    assert np.allclose(res.value, [1 / 6, 4 / 15], rtol=1e-4)


def test_zero_integral_uses_absolute_tolerance():
    res = integrate_recursive(2, lambda p: p[:, 0] - p[:, 1], vectorized=True)
    assert abs(res.value) < 1e-12


def test_non_convergence_carries_best_estimate():
    cfg = IntegratorConfig(rel_tol=1e-14, abs_tol=1e-20, max_order=9)
    with pytest.raises(ConvergenceError) as info:
        integrate_recursive(1, lambda p: np.sqrt(p[:, 0]), cfg, vectorized=True)
    err = info.value
    assert err.best_estimate == pytest.approx(2 / 3, rel=1e-2)
    assert err.order <= 9


def test_geometry_target_uses_integration_element():
    class Stretched:
        mydim = 2

        def integration_element_many(self, pts):
            return np.full(len(pts), 3.0)

    assert integrate_recursive(Stretched(), lambda p: np.ones(len(p)), vectorized=True).value == pytest.approx(1.5)
    with pytest.raises(TypeError):
        integrate_recursive("nope", lambda p: 1.0)
