"""Symbolic polynomials in up to three variables.

A polynomial is stored as a canonical mapping from power tuples to
coefficients: no zero coefficients, no duplicate power tuples, and
monomials kept in a fixed sorted order.  Only the operations needed by
the geometry kernel are provided.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

VARIABLE_NAMES = ("u", "v", "w")


@dataclass(frozen=True)
class Monomial:
    prefactor: float
    powers: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.powers)

    @property
    def degree(self) -> int:
        return sum(self.powers)


def simplex_monomial_integral(powers: Sequence[int]) -> float:
    """Integral of prod x_i**a_i over the reference simplex of ``len(powers)`` dims.

    The closed form is prod(a_i!) / (sum(a_i) + dim)!.  It is evaluated as
    a running product of ratios, each at most one, so nothing overflows.
    """
    dim = len(powers)
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if any(a < 0 for a in powers):
        raise ValueError("negative power")
    numer = sorted(k for a in powers for k in range(1, a + 1))
    total = sum(powers) + dim
    value = 1.0
    for i, k in enumerate(numer):
        value *= k / (i + 1)
    # the numerator list consumed denominators 1..len(numer); the rest remain
    for m in range(len(numer) + 1, total + 1):
        value /= m
    return value


class Polynomial:
    """Polynomial over ``dim`` variables with float coefficients."""

    __slots__ = ("dim", "_terms", "_tables")

    def __init__(self, dim: int, terms: Mapping[tuple[int, ...], float] | Iterable[Monomial] = ()):
        if dim not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {dim}")
        self.dim = dim
        acc: dict[tuple[int, ...], float] = {}
        items = terms.items() if isinstance(terms, Mapping) else ((m.powers, m.prefactor) for m in terms)
        for powers, coef in items:
            powers = tuple(int(p) for p in powers)
            if len(powers) != dim:
                raise ValueError(f"monomial {powers} does not have {dim} powers")
            if any(p < 0 for p in powers):
                raise ValueError(f"negative power in {powers}")
            acc[powers] = acc.get(powers, 0.0) + float(coef)
        self._terms = {p: acc[p] for p in sorted(acc, key=_order_key) if acc[p] != 0.0}
        self._tables = None

    # construction helpers
    @classmethod
    def constant(cls, dim: int, value: float) -> Polynomial:
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def variable(cls, dim: int, index: int, coef: float = 1.0) -> Polynomial:
        powers = [0] * dim
        powers[index] = 1
        return cls(dim, {tuple(powers): coef})

    @classmethod
    def monomial(cls, prefactor: float, *powers: int) -> Polynomial:
        return cls(len(powers), {tuple(powers): prefactor})

    @property
    def monomials(self) -> list[Monomial]:
        return [Monomial(c, p) for p, c in self._terms.items()]

    @property
    def terms(self) -> dict[tuple[int, ...], float]:
        return dict(self._terms)

    def coefficient(self, *powers: int) -> float:
        return self._terms.get(tuple(powers), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    # arithmetic
    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.dim, float(other))
        return NotImplemented

    def __add__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for p, c in other._terms.items():
            terms[p] = terms.get(p, 0.0) + c
        return Polynomial(self.dim, terms)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return self.scale(-1.0)

    def __sub__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[tuple[int, ...], float] = {}
        for p1, c1 in self._terms.items():
            for p2, c2 in other._terms.items():
                p = tuple(a + b for a, b in zip(p1, p2))
                terms[p] = terms.get(p, 0.0) + c1 * c2
        return Polynomial(self.dim, terms)

    __rmul__ = __mul__

    def scale(self, factor: float) -> Polynomial:
        return Polynomial(self.dim, {p: c * factor for p, c in self._terms.items()})

    def axpy(self, other: Polynomial, factor: float) -> Polynomial:
        """Return ``self + factor * other``."""
        return self + other.scale(factor)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        return hash((self.dim, tuple(self._terms.items())))

    def allclose(self, other: Polynomial, atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(*k) - other.coefficient(*k)) <= atol for k in keys)

    def derivative(self, index: int) -> Polynomial:
        if not 0 <= index < self.dim:
            raise ValueError(f"cannot differentiate along axis {index} in dimension {self.dim}")
        terms = {}
        for p, c in self._terms.items():
            a = p[index]
            if a == 0:
                continue
            q = list(p)
            q[index] = a - 1
            terms[tuple(q)] = c * a
        return Polynomial(self.dim, terms)

    def gradient(self) -> PolynomialVector:
        return PolynomialVector([self.derivative(i) for i in range(self.dim)])

    # evaluation
    def _table(self):
        if self._tables is not None:
            return self._tables
        if self._terms:
            powers = np.array(list(self._terms), dtype=np.int64)
            coefs = np.array(list(self._terms.values()))
        else:
            powers = np.zeros((0, self.dim), dtype=np.int64)
            coefs = np.zeros(0)
        maxpow = int(powers.max()) if powers.size else 0
        return powers, coefs, maxpow

    def cached(self) -> Polynomial:
        """Return a copy with precomputed evaluation tables.

        Both copies share the evaluation routine, so results agree bit for bit.
        """
        out = Polynomial.__new__(Polynomial)
        out.dim = self.dim
        out._terms = self._terms
        out._tables = self._table()
        return out

    @property
    def is_cached(self) -> bool:
        return self._tables is not None

    def evaluate_many(self, points) -> np.ndarray:
        """Evaluate at an (N, dim) array of points."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dim) if self.dim == 1 else pts[None, :]
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got shape {pts.shape}")
        powers, coefs, maxpow = self._table()
        n = pts.shape[0]
        if not coefs.size:
            return np.zeros(n)
        terms = np.repeat(coefs[:, None], n, axis=1)
        for axis in range(self.dim):
            table = _power_table(pts[:, axis], maxpow)
            terms = terms * table[powers[:, axis]]
        return _sequential_sum(terms)

    def evaluate(self, point) -> float:
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        if pt.shape != (self.dim,):
            raise ValueError(f"expected a point with {self.dim} coordinates, got {pt.shape}")
        return float(self.evaluate_many(pt[None, :])[0])

    __call__ = evaluate

    # integration and measures
    def integrate_ref_simplex(self) -> float:
        return sum(c * simplex_monomial_integral(p) for p, c in self._terms.items())

    def order(self) -> int:
        return max((sum(p) for p in self._terms), default=0)

    def magnitude(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for p, c in self._terms.items():
            factors = [f"{VARIABLE_NAMES[i]}^{a}" for i, a in enumerate(p)]
            parts.append(f"{c!r} * " + " ".join(factors))
        return " + ".join(parts)

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"Polynomial(dim={self.dim}, {self.to_string()})"


def _order_key(powers: tuple[int, ...]):
    return (sum(powers), tuple(reversed(powers)))


def _power_table(values: np.ndarray, maxpow: int) -> np.ndarray:
    table = np.empty((maxpow + 1, values.shape[0]))
    table[0] = 1.0
    for k in range(1, maxpow + 1):
        table[k] = table[k - 1] * values
    return table


def _sequential_sum(terms: np.ndarray) -> np.ndarray:
    # explicit left-to-right accumulation keeps results independent of N
    out = terms[0].copy()
    for row in terms[1:]:
        out += row
    return out


class PolynomialVector:
    """Fixed-length sequence of polynomials sharing a dimension."""

    def __init__(self, components: Sequence[Polynomial]):
        comps = list(components)
        if not comps:
            raise ValueError("empty polynomial vector")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError("components have different dimensions")
        self.components = comps
        self.dim = comps[0].dim

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> Polynomial:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def evaluate(self, point) -> np.ndarray:
        return np.array([c.evaluate(point) for c in self.components])

    def evaluate_many(self, points) -> np.ndarray:
        return np.stack([c.evaluate_many(points) for c in self.components], axis=-1)

    def jacobian(self) -> PolynomialMatrix:
        """Matrix with entry (i, j) equal to d component_j / d r_i."""
        return PolynomialMatrix([[c.derivative(i) for c in self.components] for i in range(self.dim)])

    def dot(self, other: PolynomialVector) -> Polynomial:
        if len(other) != len(self):
            raise ValueError("length mismatch")
        out = Polynomial(self.dim)
        for a, b in zip(self.components, other.components):
            out = out + a * b
        return out

    def cross(self, other: PolynomialVector) -> PolynomialVector:
        if len(self) != 3 or len(other) != 3:
            raise ValueError("cross product needs 3-component vectors")
        a, b = self.components, other.components
        return PolynomialVector([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])

    def cached(self) -> PolynomialVector:
        return PolynomialVector([c.cached() for c in self.components])

    def __eq__(self, other) -> bool:
        return isinstance(other, PolynomialVector) and self.components == other.components

    def __repr__(self) -> str:
        return "PolynomialVector([" + ", ".join(c.to_string() for c in self.components) + "])"


class PolynomialMatrix:
    def __init__(self, rows: Sequence[Sequence[Polynomial]]):
        self.rows = [list(r) for r in rows]
        if not self.rows or len({len(r) for r in self.rows}) != 1:
            raise ValueError("ragged or empty polynomial matrix")
        self.shape = (len(self.rows), len(self.rows[0]))

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def evaluate(self, point) -> np.ndarray:
        return np.array([[p.evaluate(point) for p in r] for r in self.rows])

    def evaluate_many(self, points) -> np.ndarray:
        return np.stack([np.stack([p.evaluate_many(points) for p in r], axis=-1) for r in self.rows], axis=-2)

    def cached(self) -> PolynomialMatrix:
        return PolynomialMatrix([[p.cached() for p in r] for r in self.rows])
