"""Whole-grid computations used by the command line driver and the tests.

All functions here are collective: every rank of the grid's communicator
must call them with the same arguments.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .comm import INT, REAL
from .grid.types import MAP_PAIRS, PROTOCOL, Direction, Interface, PartitionKind
from .quad import IntegratorConfig, integrate_recursive

GAUSS_CONFIG = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-12)


# surface integrals --------------------------------------------------------

def _faces(grid, domain_boundary: bool, volume_tag, surface_tag):
    bc = grid.boundary_container(domain_boundary, volume_tag, surface_tag)
    return bc.local


def surface_integral(grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], domain_boundary: bool = True,
                     volume_tag: int | None = None, surface_tag: int | None = None,
                     config: IntegratorConfig | None = None) -> np.ndarray:
    """Sum over the selected closed surface of the integral of ``fn(x, N)``.

    ``x`` holds global points and ``N`` outward normals scaled by the
    integration element, both of shape (n, 3).  Each face is integrated
    adaptively and the per-rank sums are reduced over all ranks.
    """
    total = None
    for face in _faces(grid, domain_boundary, volume_tag, surface_tag):
        geo = face.geometry

        def integrand(u, face=face, geo=geo):
            return fn(geo.to_global_many(u), face.outer_normal_many(u))

        val = np.atleast_1d(integrate_recursive(2, integrand, config or GAUSS_CONFIG, vectorized=True).value)
        total = val if total is None else total + val
    local = np.zeros(1) if total is None else np.asarray(total, dtype=float)
    width = int(grid.comm.allreduce_max(np.array([local.size], dtype=float))[0])
    if local.size != width:
        local = np.zeros(width)
    return grid.comm.allreduce_sum(local, REAL)


def coulomb_field(charge) -> Callable[[np.ndarray], np.ndarray]:
    q = np.asarray(charge, dtype=float)

    def field(x):
        d = x - q
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / r**3

    return field


def gauss_flux(grid, charge, domain_boundary: bool = True, volume_tag: int | None = None,
               surface_tag: int | None = None, config: IntegratorConfig | None = None) -> float:
    """Flux of a unit point charge's field through a closed surface (4 pi inside, 0 outside)."""
    field = coulomb_field(charge)
    return float(surface_integral(grid, lambda x, n: np.sum(field(x) * n, axis=1),
                                  domain_boundary, volume_tag, surface_tag, config)[0])


def normal_integral(grid, domain_boundary: bool = True, volume_tag: int | None = None,
                    surface_tag: int | None = None) -> tuple[np.ndarray, float]:
    """Integral of the outer normal and the total area of a closed surface."""
    vals = surface_integral(grid, lambda x, n: np.concatenate([n, np.linalg.norm(n, axis=1)[:, None]], axis=1),
                            domain_boundary, volume_tag, surface_tag)
    return vals[:3], float(vals[3])


# statistics ---------------------------------------------------------------

@dataclass
class RankStats:
    rank: int
    elements: int
    ghost_elements: int
    process_boundary_faces: int
    domain_boundary_faces: int
    interior_boundary_faces: int
    volume: float
    min_volume: float
    max_volume: float
    mean_curvature: float


def rank_statistics(grid) -> RankStats:
    """Counts, element volumes and a curvature measure on this rank.

    The curvature measure of an element is the relative difference between
    its volume and the volume of the straight tetrahedron on its corners.
    """
    interior = grid.index_sets[0]["interior"]
    vols, curv = [], []
    for e in interior:
        geo = grid.element_geometry(e)
        v = geo.volume()
        c = geo.corners()
        lin = abs(np.linalg.det(c[1:] - c[0])) / 6.0
        vols.append(v)
        curv.append(abs(v - lin) / v if v else 0.0)
    c = grid.counts()
    return RankStats(grid.rank, c["elements"], c["ghost_elements"], c["process_boundary_faces"],
                     c["domain_boundary_faces"], c["interior_boundary_faces"], float(np.sum(vols)),
                     float(min(vols)) if vols else 0.0, float(max(vols)) if vols else 0.0,
                     float(np.mean(curv)) if curv else 0.0)


# sorted parallel output ---------------------------------------------------

def sorted_parallel_rows(grid, data: Callable[[int], Sequence[float]]) -> list[str] | None:
    """Gather one text row per interior element on rank 0, sorted by global index.

    ``data(local_element)`` returns the entries of that element; their
    number may differ between elements.  Other ranks get ``None``.
    """
    ints, reals = [], []
    for e in grid.index_sets[0]["interior"]:
        vals = np.asarray(data(e), dtype=float).ravel()
        ints.append((grid.global_index(0, e), len(vals)))
        reals.append(vals)
    comm = grid.comm
    all_ints = comm.allgather(np.array(ints, dtype=np.int64).reshape(-1, 2), INT, "sorted output index", width=2)
    all_reals = comm.allgather(np.concatenate(reals) if reals else np.zeros(0), REAL, "sorted output data")
    if comm.rank != 0:
        return None
    rows = []
    for iv, rv in zip(all_ints, all_reals):
        pos = 0
        for gid, n in iv:
            vals = rv[pos:pos + int(n)]
            pos += int(n)
            rows.append((int(gid), " ".join([str(int(gid)), str(int(n))] + [format(float(v), ".17g") for v in vals])))
    rows.sort()
    return [r for _, r in rows]


def write_sorted_parallel_data(grid, data: Callable[[int], Sequence[float]], path) -> Path | None:
    """Write ``globalIndex nDof values...`` rows to one file from rank 0."""
    rows = sorted_parallel_rows(grid, data)
    if rows is None:
        return None
    path = Path(path)
    path.write_text("".join(r + "\n" for r in rows))
    return path


# communication checks -----------------------------------------------------

class _EchoHandle:
    """Sends each entity's global index and records what arrives."""

    dtype = np.int64

    def __init__(self, codim: int):
        self.codim = codim
        self.received: dict[int, list[int]] = {}
        self.mismatches = 0

    def contains(self, codim):
        return codim == self.codim

    def size(self, entity):
        return 1

    def gather(self, entity):
        return [entity.global_index]

    def scatter(self, entity, data, source):
        if int(data[0]) != entity.global_index:
            self.mismatches += 1
        self.received.setdefault(entity.local, []).append(source)


def expected_sources(grid, codim: int, local: int, interface, direction) -> list[int]:
    """Ranks that should send to this entity, straight from the comm maps."""
    pairs = PROTOCOL[(Interface(interface), Direction(direction))]
    mine = grid.entity_comm_class(codim, local)
    out = set()
    for a, b in MAP_PAIRS:
        # the map on this rank lists (my class -> their class); a message from
        # them to me travels along (their class -> my class)
        if a == mine and (b, a) in pairs:
            out.update(grid.maps[codim][(a, b)].get(local, ()))
    return sorted(out)


def echo_test(grid) -> dict[tuple[int, str, str], tuple[int, int]]:
    """Send global indices over every interface, direction and codim.

    Returns (deliveries, failures) per case.  A failure is a wrong index or
    a set of senders that differs from the one implied by the comm maps.
    """
    results = {}
    for codim in range(4):
        for iface in Interface:
            for direction in Direction:
                h = _EchoHandle(codim)
                grid.communicate(h, iface, direction, codim)
                bad = h.mismatches
                for i in range(grid.n_entities(codim)):
                    if sorted(h.received.get(i, [])) != expected_sources(grid, codim, i, iface, direction):
                        bad += 1
                    elif h.received.get(i, []) != sorted(h.received.get(i, [])):
                        bad += 1
                n = sum(len(v) for v in h.received.values())
                tot = grid.comm.allreduce_sum(np.array([n, bad], dtype=np.int64))
                results[(codim, iface.value, direction.value)] = (int(tot[0]), int(tot[1]))
    return results


def boundary_complementarity(grid, domain_boundary: bool = True, volume_tag=None, surface_tag=None) -> tuple[int, int]:
    """(local + container faces on this rank, total faces over all ranks)."""
    bc = grid.boundary_container(domain_boundary, volume_tag, surface_tag)
    total = int(grid.comm.allreduce_sum(np.array([len(bc.local)], dtype=np.int64))[0])
    ids = {f.global_index for f in bc.local} | {f.global_index for f in bc.remote}
    if len(ids) != len(bc.local) + len(bc.remote):
        return -1, total
    return len(bc.local) + len(bc.remote), total


def interior_element_total(grid) -> int:
    n = sum(1 for k in grid.elem_kind if k != PartitionKind.GHOST)
    return int(grid.comm.allreduce_sum(np.array([n], dtype=np.int64))[0])
