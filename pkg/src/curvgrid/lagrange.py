"""Regular simplex grids and Lagrange interpolation on the reference simplex."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .poly import Polynomial, PolynomialVector

MAX_ORDER = 5


def n_points(dim: int, order: int) -> int:
    return comb(order + dim, dim)


def simplex_grid_enumerate(dim: int, order: int) -> list[tuple[int, ...]]:
    """Integer nodes of the order-``order`` grid, x fastest, then y, then z."""
    if order < 0:
        raise ValueError("negative grid order")
    if dim == 1:
        return [(i,) for i in range(order + 1)]
    if dim == 2:
        return [(i, j) for j in range(order + 1) for i in range(order + 1 - j)]
    if dim == 3:
        return [(i, j, k) for k in range(order + 1) for j in range(order + 1 - k) for i in range(order + 1 - k - j)]
    raise ValueError(f"unsupported dimension {dim}")


def simplex_grid_points(dim: int, order: int) -> np.ndarray:
    nodes = np.array(simplex_grid_enumerate(dim, order), dtype=float)
    if order == 0:
        return nodes
    return nodes / order


def monomial_basis(dim: int, order: int) -> list[Polynomial]:
    """Monomials whose powers are the grid nodes, in grid order."""
    return [Polynomial(dim, {p: 1.0}) for p in simplex_grid_enumerate(dim, order)]


def reference_corners(dim: int) -> np.ndarray:
    return np.vstack([np.zeros(dim), np.eye(dim)])


def subentity_corners(dim: int, codim: int) -> list[tuple[int, ...]]:
    """Reference corner tuples of all subentities of a codimension, lexicographic."""
    if not 0 <= codim <= dim:
        raise ValueError(f"codim {codim} out of range for dimension {dim}")
    return list(combinations(range(dim + 1), dim + 1 - codim))


def corner_indices(dim: int, order: int) -> list[int]:
    """Positions of the reference corners within the grid enumeration."""
    nodes = simplex_grid_enumerate(dim, order)
    lookup = {p: i for i, p in enumerate(nodes)}
    out = [lookup[(0,) * dim]]
    for a in range(dim):
        p = [0] * dim
        p[a] = order
        out.append(lookup[tuple(p)])
    return out


def subentity_internal_coordinate_set(dim: int, order: int, codim: int, index: int) -> list[int]:
    """Grid-node indices lying on a subentity, listed in the subentity's own grid order.

    The subentity with corners (c0, c1, ..) is parametrised by
    c0 + sum_i s_i (c_i - c0), so its local grid order follows the corner tuple.
    """
    corners = subentity_corners(dim, codim)[index]
    sub_dim = dim - codim
    base = reference_corners(dim).astype(int) * order
    lookup = {p: i for i, p in enumerate(simplex_grid_enumerate(dim, order))}
    c0 = base[corners[0]]
    axes = [base[c] - c0 for c in corners[1:]]
    out = []
    for eta in simplex_grid_enumerate(sub_dim, order) if sub_dim else [()]:
        pt = c0.copy()
        for s, ax in zip(eta, axes):
            pt = pt + (s * ax) // order if order else pt
        out.append(lookup[tuple(int(v) for v in pt)])
    return out


@dataclass
class LagrangeBasis:
    """Lagrange polynomials interpolating on the regular simplex grid.

    ``coefficients[j, i]`` is the weight of monomial i in basis function j.
    """

    dim: int
    order: int
    nodes: np.ndarray
    vandermonde: np.ndarray
    coefficients: np.ndarray
    functions: list[Polynomial]
    _derivatives: list[np.ndarray] = field(default_factory=list, repr=False)
    _monomials: list[Polynomial] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.functions)

    def monomial_values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([m.evaluate_many(pts) for m in self._monomials])

    def evaluate_all(self, points) -> np.ndarray:
        """All basis values at points, shape (N_basis, N_points); monomials evaluated once."""
        return self.coefficients @ self.monomial_values(points)

    def derivative_all(self, points) -> np.ndarray:
        """Basis derivatives, shape (dim, N_basis, N_points)."""
        z = self.monomial_values(points)
        return np.stack([d @ z for d in self._derivatives])


def _build_basis(dim: int, order: int) -> LagrangeBasis:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"interpolation order {order} outside 1..{MAX_ORDER}")
    nodes = simplex_grid_points(dim, order)
    monos = [m.cached() for m in monomial_basis(dim, order)]
    vand = np.stack([m.evaluate_many(nodes) for m in monos])  # V[i, j] = z_i(r_j)
    # z = V^T-free form: z_i(r) = sum_j V[i, j] L_j(r)  =>  L = V^{-1} z
    coefs = np.linalg.solve(vand, np.eye(len(monos)))
    powers = [next(iter(m.terms)) for m in monos]
    functions = [Polynomial(dim, dict(zip(powers, row))).cached() for row in coefs]
    index = {p: i for i, p in enumerate(powers)}
    derivs = []
    for axis in range(dim):
        dz = np.zeros((len(monos), len(monos)))
        for i, p in enumerate(powers):
            if p[axis]:
                q = list(p)
                q[axis] -= 1
                dz[i, index[tuple(q)]] = p[axis]
        derivs.append(coefs @ dz)
    return LagrangeBasis(dim, order, nodes, vand, coefs, functions, derivs, monos)


_CACHE: dict[tuple[int, int], LagrangeBasis] = {}
_LOCK = threading.Lock()


def lagrange_basis(dim: int, order: int) -> LagrangeBasis:
    """Memoised basis; concurrent first calls build it exactly once."""
    key = (dim, order)
    basis = _CACHE.get(key)
    if basis is None:
        with _LOCK:
            basis = _CACHE.get(key)
            if basis is None:
                basis = _build_basis(dim, order)
                _CACHE[key] = basis
    return basis


def interpolate(basis: LagrangeBasis, values) -> PolynomialVector:
    """Polynomial map p(r) = sum_j L_j(r) values_j."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != len(basis):
        raise ValueError(f"expected {len(basis)} interpolation values, got {vals.shape[0]}")
    powers = [next(iter(m.terms)) for m in basis._monomials]
    comps = []
    for k in range(vals.shape[1]):
        coefs = basis.coefficients.T @ vals[:, k]
        comps.append(Polynomial(basis.dim, dict(zip(powers, coefs))))
    return PolynomialVector(comps)
