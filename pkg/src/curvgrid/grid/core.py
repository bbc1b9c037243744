"""Per-rank storage of a distributed curvilinear tetrahedral grid."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..comm import Communicator
from ..geom import CurvilinearGeometry
from ..lagrange import corner_indices, subentity_corners, subentity_internal_coordinate_set
from ..timing import TimingLog
from .types import (
    MAP_PAIRS,
    BoundaryType,
    CommClass,
    EntityRef,
    GridConstructionError,
    PartitionKind,
    comm_class,
)

DIM = 3
SUBENTITY_CORNERS = {c: subentity_corners(DIM, c) for c in range(1, DIM + 1)}


class CurvilinearGrid:
    """One rank's part of the grid.

    Entities of codimension 0 (elements), 1 (faces), 2 (edges) and 3
    (corners) have contiguous local indices per codimension.  Entities are
    identified across ranks by the sorted tuple of their corner vertex ids
    during construction and by their global index afterwards.
    """

    def __init__(self, comm: Communicator, with_ghosts: bool = True, with_gmsh_index: bool = True,
                 ownership: str = "lowest", timing: TimingLog | None = None):
        self.comm = comm
        self.rank = comm.rank
        self.size = comm.size
        self.with_ghosts = with_ghosts
        self.with_gmsh_index = with_gmsh_index
        if ownership not in ("lowest", "xor"):
            raise ValueError(f"unknown ownership rule {ownership!r}")
        self.ownership = ownership
        self.timing = timing or TimingLog()
        # interpolation vertices
        self.vertex_coords: list[np.ndarray] = []
        self.vertex_gid: list[int] = []
        self.vertex_local: dict[int, int] = {}
        # elements
        self.elem_vertices: list[list[int]] = []
        self.elem_order: list[int] = []
        self.elem_tag: list[int] = []
        self.elem_kind: list[PartitionKind] = []
        self.elem_gmsh: list[int | None] = []
        self.elem_corners: list[tuple[int, ...]] = []
        self.elem_origin: list[int] = []
        self.elem_sub: dict[int, list[list[int]]] = {c: [] for c in range(1, DIM + 1)}
        # subentities, codim 1..3
        self.key: dict[int, list[tuple[int, ...]]] = {c: [] for c in range(1, DIM + 1)}
        self.kind: dict[int, list[PartitionKind]] = {c: [] for c in range(1, DIM + 1)}
        self.parent: dict[int, list[int]] = {c: [] for c in range(1, DIM + 1)}
        self.sub_index: dict[int, list[int]] = {c: [] for c in range(1, DIM + 1)}
        self.lookup: dict[int, dict[tuple[int, ...], int]] = {c: {} for c in range(1, DIM + 1)}
        self.face_parent2: list[int] = []
        self.face_sub2: list[int] = []
        self.face_btype: list[BoundaryType] = []
        self.face_btag: list[int | None] = []
        # global indices, codim 0..3
        self.gid: dict[int, list[int]] = {c: [] for c in range(DIM + 1)}
        self.global_lookup: dict[int, dict[int, int]] = {c: {} for c in range(DIM + 1)}
        self.sharers: dict[int, dict[int, tuple[int, ...]]] = {c: {} for c in range(1, DIM + 1)}
        self.owner: dict[int, dict[int, int]] = {c: {} for c in range(1, DIM + 1)}
        self.maps: dict[int, dict[tuple[CommClass, CommClass], dict[int, tuple[int, ...]]]] = {
            c: {p: {} for p in MAP_PAIRS} for c in range(DIM + 1)}
        self.index_sets: dict[int, dict[str, list[int]]] = {}
        self.ghost_sent: dict[int, set[int]] = {}
        self.volume_tags: list[int] = []
        self.domain_boundary_tags: list[int] = []
        self.interior_boundary_tags: list[int] = []
        self._geometry_cache: dict[tuple[int, int], CurvilinearGeometry] = {}

    # sizes and basic access -------------------------------------------------
    def n_entities(self, codim: int) -> int:
        return len(self.elem_kind) if codim == 0 else len(self.kind[codim])

    def entity_kind(self, codim: int, local: int) -> PartitionKind:
        return self.elem_kind[local] if codim == 0 else self.kind[codim][local]

    def entity_key(self, codim: int, local: int) -> tuple[int, ...]:
        if codim == 0:
            return tuple(sorted(self.elem_corners[local]))
        return self.key[codim][local]

    def global_index(self, codim: int, local: int) -> int:
        return self.gid[codim][local]

    def local_index(self, codim: int, global_index: int) -> int:
        try:
            return self.global_lookup[codim][global_index]
        except KeyError:
            raise KeyError(f"no codim-{codim} entity with global index {global_index} on rank {self.rank}") from None

    def entity(self, codim: int, local: int) -> EntityRef:
        return EntityRef(codim, local, self.gid[codim][local], self.entity_kind(codim, local), self.rank)

    def entities(self, codim: int, kinds=None) -> Iterator[EntityRef]:
        wanted = None if kinds is None else set(kinds)
        for i in range(self.n_entities(codim)):
            if wanted is None or self.entity_kind(codim, i) in wanted:
                yield self.entity(codim, i)

    def physical_tag(self, codim: int, local: int) -> int | None:
        if codim == 0:
            return self.elem_tag[local]
        if codim == 1:
            return self.face_btag[local]
        return None

    def counts(self) -> dict[str, int]:
        sets = self.index_sets
        return {
            "elements": len(sets[0]["interior"]),
            "ghost_elements": len(sets[0]["ghost"]),
            "faces": self.n_entities(1),
            "edges": self.n_entities(2),
            "corners": self.n_entities(3),
            "process_boundary_faces": len(sets[1]["process_boundary"]),
            "domain_boundary_faces": len(sets[1]["domain_boundary"]),
            "interior_boundary_faces": len(sets[1]["interior_boundary"]),
        }

    # topology -------------------------------------------------------------
    def subentity(self, elem: int, codim: int, index: int) -> int:
        return self.elem_sub[codim][elem][index]

    def face_neighbors(self, face: int) -> tuple[int, int]:
        """(primary, secondary) parent elements of a face.

        The primary parent is never a ghost unless the face itself is a ghost
        face.  Domain boundary faces have no secondary parent.
        """
        if self.face_btype[face] == BoundaryType.DOMAIN:
            raise GridConstructionError("a domain boundary face has no secondary parent")
        second = self.face_parent2[face]
        if second < 0:
            raise GridConstructionError(f"face {face} has no secondary parent on rank {self.rank}")
        return self.parent[1][face], second

    def primary_parent(self, face: int) -> tuple[int, int]:
        return self.parent[1][face], self.sub_index[1][face]

    # geometry ---------------------------------------------------------------
    def element_vertices(self, elem: int) -> np.ndarray:
        return np.array([self.vertex_coords[v] for v in self.elem_vertices[elem]])

    def element_geometry(self, elem: int) -> CurvilinearGeometry:
        key = (0, elem)
        geo = self._geometry_cache.get(key)
        if geo is None:
            geo = CurvilinearGeometry(self.element_vertices(elem), self.elem_order[elem], DIM)
            self._geometry_cache[key] = geo
        return geo

    def entity_vertex_indices(self, codim: int, local: int) -> list[int]:
        """Local interpolation-vertex indices of an entity, in its own grid order."""
        if codim == 0:
            return list(self.elem_vertices[local])
        elem, sub = self.parent[codim][local], self.sub_index[codim][local]
        order = self.elem_order[elem]
        idx = subentity_internal_coordinate_set(DIM, order, codim, sub)
        verts = self.elem_vertices[elem]
        return [verts[i] for i in idx]

    def entity_order(self, codim: int, local: int) -> int:
        return self.elem_order[local] if codim == 0 else self.elem_order[self.parent[codim][local]]

    def entity_geometry(self, codim: int, local: int) -> CurvilinearGeometry:
        if codim == 0:
            return self.element_geometry(local)
        key = (codim, local)
        geo = self._geometry_cache.get(key)
        if geo is None:
            elem, sub = self.parent[codim][local], self.sub_index[codim][local]
            geo = self.element_geometry(elem).subentity_geometry(codim, sub)
            self._geometry_cache[key] = geo
        return geo

    def face_outer_normal(self, face: int, face_local, elem: int | None = None) -> np.ndarray:
        """Unit normal of a face pointing out of ``elem`` (default: primary parent)."""
        p, sub = self.primary_parent(face)
        if elem is None or elem == p:
            return self.element_geometry(p).subentity_normal(sub, face_local)
        if elem != self.face_parent2[face]:
            raise GridConstructionError(f"element {elem} is not a parent of face {face}")
        # express the point in the secondary parent's face parametrisation
        x = self.entity_geometry(1, face).to_global(face_local)
        sub2 = self.face_sub2[face]
        other = self.element_geometry(elem).subentity_geometry(1, sub2)
        loc = other.local_nonrestrictive(x)
        return self.element_geometry(elem).subentity_normal(sub2, loc)

    def corner_local_vertices(self, elem: int) -> list[int]:
        order = self.elem_order[elem]
        verts = self.elem_vertices[elem]
        return [verts[i] for i in corner_indices(DIM, order)]

    # communication maps -----------------------------------------------------
    def comm_ranks(self, codim: int, local: int, pair: tuple[CommClass, CommClass]) -> tuple[int, ...]:
        return self.maps[codim][pair].get(local, ())

    def neighbor_ranks(self) -> list[int]:
        ranks = set()
        for c in range(DIM + 1):
            for m in self.maps[c].values():
                for rs in m.values():
                    ranks.update(rs)
        ranks.discard(self.rank)
        return sorted(ranks)

    def communicate(self, handle, interface, direction, codim: int):
        from .datahandle import communicate

        communicate(self, handle, interface, direction, codim)

    def boundary_container(self, domain_boundary: bool = True, volume_tag: int | None = None,
                           surface_tag: int | None = None):
        from .boundary import build_boundary_container

        return build_boundary_container(self, domain_boundary, volume_tag, surface_tag)

    def entity_comm_class(self, codim: int, local: int) -> CommClass:
        return comm_class(self.entity_kind(codim, local))
