"""Curvilinear simplex geometries defined by Lagrange interpolation of vertices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lagrange import (
    corner_indices,
    interpolate,
    lagrange_basis,
    n_points,
    reference_corners,
    subentity_corners,
    subentity_internal_coordinate_set,
)
from .poly import PolynomialMatrix, PolynomialVector
from .quad import IntegratorConfig, integrate_recursive


class GeometryError(ValueError):
    pass


class GlobalToLocalError(RuntimeError):
    """The global-to-local iteration hit its cap without a decision."""


@dataclass
class LocalResult:
    found: bool
    local: np.ndarray
    iterations: int
    residual: float


def reference_outer_normal(dim: int, face: int) -> np.ndarray:
    """Outer normal (not normalised) of a reference-simplex face, in local coordinates."""
    corners = subentity_corners(dim, 1)[face]
    missing = next(c for c in range(dim + 1) if c not in corners)
    if missing == 0:
        return np.ones(dim)
    n = np.zeros(dim)
    n[missing - 1] = -1.0
    return n


def inside_reference(local, tol: float = 1e-10) -> bool:
    r = np.asarray(local, dtype=float)
    return bool(np.all(r >= -tol) and r.sum() <= 1.0 + tol)


class CurvilinearGeometry:
    """Polynomial map from the reference simplex of ``mydim`` into R^cdim.

    ``vertices`` are the interpolation points in grid order.  Evaluation goes
    through the shared Lagrange basis; ``cached=True`` additionally builds the
    symbolic map and Jacobian up front.
    """

    def __init__(self, vertices, order: int, mydim: int, cached: bool = False):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2:
            raise GeometryError("vertices must be a 2-d array")
        if not 0 <= mydim <= verts.shape[1]:
            raise GeometryError(f"entity dimension {mydim} exceeds coordinate dimension {verts.shape[1]}")
        expected = 1 if mydim == 0 else n_points(mydim, order)
        if verts.shape[0] != expected:
            raise GeometryError(
                f"order {order} {mydim}-simplex needs {expected} vertices, got {verts.shape[0]}")
        self.vertices = verts
        self.order = order
        self.mydim = mydim
        self.cdim = verts.shape[1]
        self._basis = lagrange_basis(mydim, order) if mydim > 0 else None
        self._map: PolynomialVector | None = None
        self._jac: PolynomialMatrix | None = None
        self.cached = cached
        if cached and mydim > 0:
            self.map_polynomial()
            self.jacobian_polynomial()

    @property
    def dim(self) -> int:
        return self.mydim

    # symbolic views
    def map_polynomial(self) -> PolynomialVector:
        if self._map is None:
            self._map = interpolate(self._basis, self.vertices)
        return self._map

    def jacobian_polynomial(self) -> PolynomialMatrix:
        if self._jac is None:
            self._jac = self.map_polynomial().jacobian()
        return self._jac

    # evaluation
    def _local(self, local) -> np.ndarray:
        r = np.atleast_1d(np.asarray(local, dtype=float))
        if r.shape != (self.mydim,):
            raise GeometryError(f"expected a {self.mydim}-d local coordinate, got shape {r.shape}")
        return r

    def to_global_many(self, locals_) -> np.ndarray:
        if self.mydim == 0:
            return np.repeat(self.vertices, len(np.atleast_2d(locals_)), axis=0)
        pts = np.asarray(locals_, dtype=float).reshape(-1, self.mydim)
        return self._basis.evaluate_all(pts).T @ self.vertices

    def to_global(self, local) -> np.ndarray:
        if self.mydim == 0:
            return self.vertices[0].copy()
        return self.to_global_many(self._local(local)[None, :])[0]

    def jacobian_many(self, locals_) -> np.ndarray:
        """Jacobians with entry (i, j) = d p_j / d r_i; shape (N, mydim, cdim)."""
        pts = np.asarray(locals_, dtype=float).reshape(-1, self.mydim)
        d = self._basis.derivative_all(pts)  # (mydim, nbasis, N)
        return np.einsum("abn,bc->nac", d, self.vertices)

    def jacobian(self, local) -> np.ndarray:
        return self.jacobian_many(self._local(local)[None, :])[0]

    def integration_element_many(self, locals_) -> np.ndarray:
        if self.mydim == 0:
            return np.ones(len(np.atleast_2d(locals_)))
        jac = self.jacobian_many(locals_)
        if self.mydim == self.cdim:
            return np.abs(np.linalg.det(jac))
        gram = np.einsum("nac,nbc->nab", jac, jac)
        return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))

    def integration_element(self, local) -> float:
        return float(self.integration_element_many(self._local(local)[None, :])[0])

    # corners and centres
    def corners(self) -> np.ndarray:
        if self.mydim == 0:
            return self.vertices.copy()
        return self.vertices[corner_indices(self.mydim, self.order)]

    def reference_center(self) -> np.ndarray:
        return np.full(self.mydim, 1.0 / (self.mydim + 1))

    def center(self) -> np.ndarray:
        if self.mydim == 0:
            return self.vertices[0].copy()
        return self.to_global(self.reference_center())

    def corner_radius(self) -> float:
        c = self.center()
        return float(np.max(np.linalg.norm(self.corners() - c, axis=1)))

    def volume(self, rel_tol: float = 1e-10, abs_tol: float = 1e-14) -> float:
        if self.mydim == 0:
            return 1.0
        cfg = IntegratorConfig(rel_tol=rel_tol, abs_tol=abs_tol)
        return float(integrate_recursive(self, lambda r: np.ones(len(r)), cfg, vectorized=True).value)

    # local coordinates
    def _gauss_newton_step(self, r: np.ndarray, residual: np.ndarray) -> np.ndarray:
        jac = self.jacobian(r)  # (mydim, cdim); p(r + d) ~ p(r) + jac^T d
        step, *_ = np.linalg.lstsq(jac.T, residual, rcond=None)
        return step

    def local_restrictive(self, point, tol: float = 1e-10, max_iter: int = 200,
                          inside_tol: float = 1e-10) -> LocalResult:
        """Local coordinate of a global point, giving up early once it is clearly outside.

        The iteration stops with ``found=False`` when the estimate drifts more
        than four element radii from the centre, or when the residual stalls.
        Exceeding ``max_iter`` raises :class:`GlobalToLocalError`.
        """
        x0 = np.asarray(point, dtype=float)
        if x0.shape != (self.cdim,):
            raise GeometryError(f"expected a {self.cdim}-d point")
        if self.mydim == 0:
            err = float(np.linalg.norm(self.vertices[0] - x0))
            return LocalResult(err <= tol, np.zeros(0), 0, err)
        r = self.reference_center()
        center = self.to_global(r)
        limit = 4.0 * self.corner_radius()
        slow = 0
        prev_err = None
        for it in range(max_iter):
            p = self.to_global(r)
            residual = x0 - p
            err = float(np.linalg.norm(residual))
            if err <= tol:
                return LocalResult(inside_reference(r, inside_tol), r, it, err)
            if np.linalg.norm(p - center) > limit:
                return LocalResult(False, r, it, err)
            if prev_err is not None and it > 10:
                slow = slow + 1 if err > 0.9 * prev_err else 0
                if slow >= 5:
                    return LocalResult(False, r, it, err)
            prev_err = err
            step = self._gauss_newton_step(r, residual)
            r = r + step
            if self.mydim < self.cdim and np.linalg.norm(step) <= tol:
                # distance minimiser of a lower-dimensional entity
                return LocalResult(inside_reference(r, inside_tol), r, it + 1, err)
        raise GlobalToLocalError(f"global-to-local iteration exceeded {max_iter} steps")

    def local_nonrestrictive(self, point, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
        """Local coordinate without any exterior guard; may lie outside the reference simplex."""
        x0 = np.asarray(point, dtype=float)
        if x0.shape != (self.cdim,):
            raise GeometryError(f"expected a {self.cdim}-d point")
        r = self.reference_center()
        for _ in range(max_iter):
            residual = x0 - self.to_global(r)
            if np.linalg.norm(residual) <= tol:
                return r
            step = self._gauss_newton_step(r, residual)
            r = r + step
            if self.mydim < self.cdim and np.linalg.norm(step) <= tol:
                return r
        raise GlobalToLocalError(f"global-to-local iteration did not converge in {max_iter} steps")

    # subentities and normals
    def subentity_geometry(self, codim: int, index: int) -> CurvilinearGeometry:
        if codim == 0:
            return self
        idx = subentity_internal_coordinate_set(self.mydim, self.order, codim, index)
        return CurvilinearGeometry(self.vertices[idx], self.order, self.mydim - codim, self.cached)

    def face_to_parent(self, face: int, face_local) -> np.ndarray:
        """Parent local coordinate of a point given in a face's local coordinates."""
        corners = reference_corners(self.mydim)[list(subentity_corners(self.mydim, 1)[face])]
        s = np.atleast_1d(np.asarray(face_local, dtype=float))
        return corners[0] + (corners[1:] - corners[0]).T @ s if len(s) else corners[0].copy()

    def subentity_normal(self, face: int, face_local, unit: bool = True) -> np.ndarray:
        """Outer normal of a face at a face-local coordinate, in global coordinates."""
        r = self.face_to_parent(face, face_local)
        jac = self.jacobian(r)
        # normals transform as covectors: n ~ J^{-1} n_ref, which stays outward
        n = np.linalg.pinv(jac) @ reference_outer_normal(self.mydim, face)
        if unit:
            n = n / np.linalg.norm(n)
        return n

    def codim1_normal(self, local, unit: bool = False) -> np.ndarray:
        """Normal of a hypersurface entity (mydim == cdim - 1) from its own parametrisation.

        Curves in the plane use (dy, -dx); surfaces in space use dv x du.  The
        length equals the integration element when ``unit`` is False.
        """
        if self.mydim != self.cdim - 1:
            raise GeometryError("normal requires a codimension-1 embedding")
        jac = self.jacobian(local)
        if self.cdim == 2:
            n = np.array([jac[0, 1], -jac[0, 0]])
        elif self.cdim == 3:
            n = np.cross(jac[1], jac[0])
        else:
            n = np.array([1.0])
        return n / np.linalg.norm(n) if unit else n

    def codim1_normal_many(self, locals_) -> np.ndarray:
        jac = self.jacobian_many(locals_)
        if self.cdim == 2:
            return np.stack([jac[:, 0, 1], -jac[:, 0, 0]], axis=1)
        if self.cdim == 3:
            return np.cross(jac[:, 1], jac[:, 0])
        raise GeometryError("normal requires a codimension-1 embedding")
