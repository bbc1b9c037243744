"""Gauss rules on the reference simplex and an adaptive, order-raising integrator.

Simplex rules are tensor Gauss-Legendre rules on the unit cube pulled back
through the Duffy collapse.  The adaptive integrator walks through rules of
increasing order until two consecutive estimates agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

MAX_GAUSS_POINTS = 128


class ConvergenceError(RuntimeError):
    """Raised when the adaptive integrator exhausts its order budget."""

    def __init__(self, message: str, best_estimate, order: int):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.order = order


@lru_cache(maxsize=None)
def _gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError("a Gauss rule needs at least one point")
    if n > MAX_GAUSS_POINTS:
        raise ValueError(f"{n}-point Gauss rule exceeds the supported maximum of {MAX_GAUSS_POINTS}")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for m in range(2, n + 1):
            p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
        dp = n * (x * p1 - p0) / (x * x - 1) if n > 1 else np.ones_like(x)
        step = p1 / dp
        x = x - step
        if np.max(np.abs(step)) < 1e-16:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(2, n + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    dp = n * (x * p1 - p0) / (x * x - 1) if n > 1 else np.ones_like(x)
    w = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = _gauss_legendre_unit(n)
    return 0.5 * (x + 1.0), 0.5 * w


def duffy_map(dim: int, cube_point) -> tuple[np.ndarray, float]:
    """Map a unit-cube point to the reference simplex; return (point, Jacobian factor)."""
    pts, g = duffy_map_many(dim, np.atleast_2d(np.asarray(cube_point, dtype=float)))
    return pts[0], float(g[0])


def duffy_map_many(dim: int, cube_points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(cube_points, dtype=float)
    if c.shape[-1] != dim:
        raise ValueError(f"expected {dim} coordinates")
    if dim == 1:
        return c.copy(), np.ones(c.shape[0])
    x, t = c[:, 0], c[:, 1]
    if dim == 2:
        return np.stack([x, (1 - x) * t], axis=1), 1 - x
    if dim == 3:
        s = c[:, 2]
        pts = np.stack([x, (1 - x) * t, (1 - x) * (1 - t) * s], axis=1)
        return pts, (1 - x) ** 2 * (1 - t)
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    order: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> np.ndarray:
        vals = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, vals, axes=(0, 0))


@lru_cache(maxsize=None)
def _uniform_rule(dim: int, n: int) -> QuadratureRule:
    x, w = gauss_legendre(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    cube = np.stack([g.ravel() for g in grids], axis=1)
    wc = w
    for _ in range(dim - 1):
        wc = np.multiply.outer(wc, w)
    pts, g = duffy_map_many(dim, cube)
    weights = wc.ravel() * g
    pts.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(dim, 2 * n - dim, pts, weights)


def points_per_direction(dim: int, order: int) -> int:
    # the collapsed direction carries dim - 1 extra powers of (1 - x)
    return max(1, math.ceil((order + dim) / 2))


def simplex_rule(dim: int, order: int) -> QuadratureRule:
    """A rule exact for polynomials of total degree <= order on the reference simplex."""
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if order < 0:
        raise ValueError("negative quadrature order")
    return _uniform_rule(dim, points_per_direction(dim, order))


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-5
    abs_tol: float = 1e-10
    norm: str = "L2"
    max_order: int = 128
    min_order: int = 1


@dataclass
class StatInfo:
    value: np.ndarray | float
    order: int
    error_estimate: float
    evaluations: int


def _norm(value: np.ndarray, kind: str) -> float:
    v = np.abs(np.asarray(value, dtype=float)).ravel()
    if kind == "L1":
        return float(v.sum())
    if kind == "L2":
        return float(np.sqrt(np.sum(v * v)))
    if kind == "Linf":
        return float(v.max()) if v.size else 0.0
    raise ValueError(f"unknown norm {kind!r}")


def _sample(integrand: Callable, points: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        vals = np.asarray(integrand(points), dtype=float)
        if vals.shape[:1] != (points.shape[0],):
            raise ValueError("vectorised integrand must return one value per point along axis 0")
        return vals
    return np.asarray([integrand(p) for p in points], dtype=float)


def integrate_rule(target, integrand: Callable, order: int, vectorized: bool = False):
    """Integrate with a single rule; ``target`` is a dimension or a geometry."""
    dim, weight = _integration_target(target)
    rule = simplex_rule(dim, order)
    vals = _sample(integrand, rule.points, vectorized)
    w = rule.weights if weight is None else rule.weights * weight(rule.points)
    return np.tensordot(w, vals, axes=(0, 0))


def _integration_target(target):
    if isinstance(target, (int, np.integer)):
        return int(target), None
    if hasattr(target, "integration_element_many") and hasattr(target, "mydim"):
        return target.mydim, target.integration_element_many
    raise TypeError("integration target must be a dimension or a geometry")


def integrate_recursive(target, integrand: Callable, config: IntegratorConfig | None = None,
                        vectorized: bool = False) -> StatInfo:
    """Raise the rule order until consecutive estimates agree.

    ``target`` is either a reference dimension (1-3) or a geometry, in which
    case integrand values are weighted by the integration element.  The
    integrand receives local coordinates: one point at a time, or the full
    (N, dim) array when ``vectorized`` is set.  Scalar, vector and matrix
    valued integrands are accepted.

    Stopping uses an error estimate no smaller than the last difference
    between consecutive estimates, extrapolated by the observed contraction
    rate so that slowly convergent integrands are not stopped early.
    """
    cfg = config or IntegratorConfig()
    dim, weight = _integration_target(target)
    n = points_per_direction(dim, max(cfg.min_order, 0))
    prev = None
    prev_diff = None
    evaluations = 0
    while True:
        rule = _uniform_rule(dim, n)
        if rule.order > cfg.max_order or n > MAX_GAUSS_POINTS:
            raise ConvergenceError(
                f"integral did not converge up to order {cfg.max_order}",
                prev, -1 if prev is None else _uniform_rule(dim, n - 1).order)
        vals = _sample(integrand, rule.points, vectorized)
        w = rule.weights if weight is None else rule.weights * weight(rule.points)
        current = np.tensordot(w, vals, axes=(0, 0))
        evaluations += len(rule)
        if prev is not None:
            size = _norm(current, cfg.norm)
            diff = _norm(current - prev, cfg.norm)
            roundoff = 1e-14 * size
            if diff <= roundoff:
                estimate = diff
            elif prev_diff is None or prev_diff == 0.0:
                estimate = math.inf
            else:
                rate = min(diff / prev_diff, 0.95)
                estimate = diff * max(1.0, 2.0 * rate / (1.0 - rate))
            if estimate <= max(cfg.rel_tol * size, cfg.abs_tol):
                value = float(current) if np.ndim(current) == 0 else current
                return StatInfo(value, rule.order, estimate, evaluations)
            prev_diff = diff
        prev = current
        n += 1
