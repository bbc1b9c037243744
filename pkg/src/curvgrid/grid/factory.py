from __future__ import annotations

import numpy as np

from ..comm import Communicator
from ..lagrange import corner_indices, n_points
from ..timing import TimingLog
from .construct import construct
from .core import DIM, CurvilinearGrid
from .types import GridConstructionError, PartitionKind


class GridFactory:
    """Collects one rank's vertices, elements and boundary segments, then builds the grid.

    Elements may only reference vertices inserted before them, and only
    elements owned by this rank may be inserted.
    """

    def __init__(self, comm: Communicator, with_ghosts: bool = True, with_gmsh_index: bool = True,
                 ownership: str = "lowest", timing: TimingLog | None = None):
        self.grid = CurvilinearGrid(comm, with_ghosts, with_gmsh_index, ownership, timing)
        self._segments: dict[tuple[int, ...], tuple[int, bool]] = {}
        self._built = False

    def set_tags(self, volume_tags, domain_tags, interior_tags):
        g = self.grid
        g.volume_tags = list(volume_tags)
        g.domain_boundary_tags = list(domain_tags)
        g.interior_boundary_tags = list(interior_tags)

    def insert_vertex(self, pos, global_index: int) -> int:
        g = self.grid
        gi = int(global_index)
        if gi in g.vertex_local:
            raise GridConstructionError(f"vertex {gi} inserted twice")
        x = np.zeros(3)
        p = np.asarray(pos, dtype=float)
        x[: len(p)] = p
        g.vertex_local[gi] = len(g.vertex_coords)
        g.vertex_coords.append(x)
        g.vertex_gid.append(gi)
        return g.vertex_local[gi]

    def _check_vertices(self, vertices, dim: int, order: int) -> list[int]:
        verts = [int(v) for v in vertices]
        if len(verts) != n_points(dim, order):
            raise GridConstructionError(f"order {order} simplex needs {n_points(dim, order)} vertices")
        nv = len(self.grid.vertex_coords)
        if any(v < 0 or v >= nv for v in verts):
            raise GridConstructionError("element references a vertex that was not inserted")
        return verts

    def insert_element(self, dim: int, vertices, order: int, physical_tag: int, gmsh_index: int | None = None):
        if dim != DIM:
            raise GridConstructionError(f"only {DIM}-d simplex elements are supported, got dimension {dim}")
        g = self.grid
        verts = self._check_vertices(vertices, dim, order)
        g.elem_vertices.append(verts)
        g.elem_order.append(int(order))
        g.elem_tag.append(int(physical_tag))
        g.elem_kind.append(PartitionKind.INTERIOR)
        g.elem_gmsh.append(None if gmsh_index is None else int(gmsh_index))
        g.elem_origin.append(g.rank)
        g.elem_corners.append(tuple(g.vertex_gid[verts[i]] for i in corner_indices(dim, order)))

    def insert_boundary_segment(self, dim: int, vertices, order: int, physical_tag: int,
                                is_domain_boundary: bool):
        if dim != DIM - 1:
            raise GridConstructionError(f"boundary segments must be {DIM - 1}-d")
        g = self.grid
        verts = self._check_vertices(vertices, dim, order)
        key = tuple(sorted(g.vertex_gid[verts[i]] for i in corner_indices(dim, order)))
        if key in self._segments:
            raise GridConstructionError(f"boundary segment {key} inserted twice")
        self._segments[key] = (int(physical_tag), bool(is_domain_boundary))

    def create_grid(self) -> CurvilinearGrid:
        if self._built:
            raise GridConstructionError("create_grid called twice")
        self._built = True
        construct(self.grid, self._segments)
        return self.grid


def load_grid(comm: Communicator, path, with_ghosts: bool = True, with_gmsh_index: bool = True,
              partition: bool = True, ownership: str = "lowest",
              timing: TimingLog | None = None) -> CurvilinearGrid:
    """Read a mesh on every rank of ``comm`` and build the grid (collective)."""
    from ..meshio import read_gmsh

    timing = timing or TimingLog()
    factory = GridFactory(comm, with_ghosts, with_gmsh_index, ownership, timing)
    read_gmsh(path, factory, comm, partition=partition, timing=timing)
    return factory.create_grid()
