"""Boundary faces held by other ranks, for integrals over a whole closed surface."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..comm import INT, REAL
from ..geom import CurvilinearGeometry
from ..lagrange import n_points
from .core import DIM, SUBENTITY_CORNERS
from .types import BoundaryType, GridConstructionError, PartitionKind


@dataclass
class BoundaryFace:
    global_index: int
    order: int
    vertices: np.ndarray
    element_global_index: int
    physical_tag: int | None
    edge_global_indices: tuple[int, ...]
    corner_global_indices: tuple[int, ...]
    orientation: int
    _geometry: CurvilinearGeometry | None = field(default=None, repr=False)

    @property
    def geometry(self) -> CurvilinearGeometry:
        if self._geometry is None:
            self._geometry = CurvilinearGeometry(self.vertices, self.order, DIM - 1)
        return self._geometry

    def unit_outer_normal(self, local) -> np.ndarray:
        n = self.geometry.codim1_normal(local)
        return self.orientation * n / np.linalg.norm(n)

    def outer_normal_many(self, locals_) -> np.ndarray:
        """Outer normals scaled by the integration element."""
        return self.orientation * self.geometry.codim1_normal_many(locals_)


@dataclass
class BoundaryContainer:
    local: list[BoundaryFace]
    remote: list[BoundaryFace]

    def __iter__(self):
        return iter(self.remote)

    def __len__(self) -> int:
        return len(self.remote)

    def all_faces(self) -> list[BoundaryFace]:
        return sorted(self.local + self.remote, key=lambda f: f.global_index)


def _chosen_side(grid, face: int, domain_boundary: bool, volume_tag, surface_tag):
    """Parent element whose side this rank reports the face from, or None."""
    if domain_boundary:
        if grid.kind[1][face] != PartitionKind.DOMAIN_BOUNDARY:
            return None
        if volume_tag is not None and grid.elem_tag[grid.parent[1][face]] != volume_tag:
            return None
        return grid.parent[1][face]
    if grid.face_btype[face] != BoundaryType.INTERIOR or grid.kind[1][face] == PartitionKind.GHOST:
        return None
    if surface_tag is not None and grid.face_btag[face] != surface_tag:
        return None
    parents = [grid.parent[1][face], grid.face_parent2[face]]
    if volume_tag is None:
        if grid.owner[1].get(face, grid.rank) != grid.rank:
            return None
        return parents[0]
    for p in parents:
        if p >= 0 and grid.elem_kind[p] == PartitionKind.INTERIOR and grid.elem_tag[p] == volume_tag:
            return p
    return None


def _face_record(grid, face: int, elem: int) -> BoundaryFace:
    sub = grid.elem_sub[1][elem].index(face)
    egeo = grid.element_geometry(elem)
    fgeo = egeo.subentity_geometry(1, sub)
    center = fgeo.reference_center()
    outward = egeo.subentity_normal(sub, center)
    own = fgeo.codim1_normal(center)
    sign = 1 if float(np.dot(own, outward)) > 0 else -1
    corners = grid.elem_corners[elem]
    fc = SUBENTITY_CORNERS[1][sub]
    edges = tuple(grid.gid[2][grid.lookup[2][tuple(sorted((corners[a], corners[b])))]]
                  for a, b in combinations(fc, 2))
    cgids = tuple(grid.gid[3][grid.lookup[3][(corners[a],)]] for a in fc)
    return BoundaryFace(grid.gid[1][face], grid.elem_order[elem], fgeo.vertices.copy(), grid.gid[0][elem],
                        grid.face_btag[face], edges, cgids, sign, fgeo)


def build_boundary_container(grid, domain_boundary: bool = True, volume_tag: int | None = None,
                             surface_tag: int | None = None) -> BoundaryContainer:
    comm = grid.comm
    if not domain_boundary and surface_tag is not None:
        tags = {t for t in grid.face_btag if t is not None}
        all_tags = {int(t) for arr in comm.allgather(sorted(tags), INT, "boundary container tags") for t in arr}
        if surface_tag not in all_tags:
            raise GridConstructionError(f"surface tag {surface_tag} does not occur in the mesh")
    local = []
    for f in range(grid.n_entities(1)):
        elem = _chosen_side(grid, f, domain_boundary, volume_tag, surface_tag)
        if elem is not None:
            local.append(_face_record(grid, f, elem))
    ints, reals = [], []
    for bf in local:
        tag = -1 if bf.physical_tag is None else bf.physical_tag
        ints += [bf.global_index, bf.order, len(bf.vertices), bf.element_global_index, tag, bf.orientation]
        ints += list(bf.edge_global_indices) + list(bf.corner_global_indices)
        reals.append(bf.vertices)
    real_arr = np.concatenate(reals) if reals else np.zeros((0, 3))
    all_ints = comm.allgather(np.array(ints, dtype=np.int64), INT, "boundary container faces")
    all_reals = comm.allgather(real_arr, REAL, "boundary container vertices", width=3)
    remote = []
    for src in range(comm.size):
        if src == grid.rank:
            continue
        iv, rv = all_ints[src], all_reals[src]
        ip = rp = 0
        while ip < len(iv):
            gid, order, nv, egid, tag, sign = (int(v) for v in iv[ip:ip + 6])
            ip += 6
            edges = tuple(int(v) for v in iv[ip:ip + 3])
            corners = tuple(int(v) for v in iv[ip + 3:ip + 6])
            ip += 6
            if nv != n_points(DIM - 1, order):
                raise GridConstructionError("corrupt boundary container record")
            verts = np.array(rv[rp:rp + nv])
            rp += nv
            remote.append(BoundaryFace(gid, order, verts, egid, None if tag < 0 else tag, edges, corners, sign))
    remote.sort(key=lambda f: f.global_index)
    local.sort(key=lambda f: f.global_index)
    return BoundaryContainer(local, remote)
