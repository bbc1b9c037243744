"""Small hand-built meshes used by the tests and the command line demo.

Every mesh starts from linear tetrahedra given by corner ids.  Higher-order
nodes are placed on the barycentric lattice of each tetrahedron and keyed
by their integer barycentric weights on global corner ids, so neighbouring
elements share them exactly.  An optional point map then moves all nodes,
which is how the ball meshes get curved faces.

Run ``python -m curvgrid.fixtures DIR`` to regenerate the shipped files.
"""
from __future__ import annotations

import sys
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable

import numpy as np

from .lagrange import simplex_grid_enumerate
from .meshio import write_msh

DOMAIN_TAG = 101
INTERFACE_TAG = 102


@dataclass
class LinearTetMesh:
    points: np.ndarray
    tets: list[tuple[int, int, int, int]]
    tags: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.tags:
            self.tags = [1] * len(self.tets)
        fixed = []
        for t in self.tets:
            a, b, c, d = (self.points[i] for i in t)
            if np.linalg.det(np.array([b - a, c - a, d - a])) < 0:
                t = (t[0], t[2], t[1], t[3])
            fixed.append(tuple(int(v) for v in t))
        self.tets = fixed


def _lattice_key(corners, weights):
    return tuple(sorted((c, w) for c, w in zip(corners, weights) if w))


def to_high_order(mesh: LinearTetMesh, order: int, point_map: Callable | None = None,
                  interface: Callable[[int, int], bool] | None = None):
    """Node table and element list for :func:`write_msh`.

    Domain boundary triangles get ``DOMAIN_TAG``.  Interior faces between
    elements whose tags differ (or for which ``interface`` says so) get
    ``INTERFACE_TAG``.
    """
    keys: dict[tuple, int] = {}
    nodes: dict[int, np.ndarray] = {}

    def node(corners, weights):
        key = _lattice_key(corners, weights)
        vid = keys.get(key)
        if vid is None:
            vid = len(keys) + 1
            keys[key] = vid
            x = sum(w * mesh.points[c] for c, w in key) / order
            nodes[vid] = np.asarray(point_map(x) if point_map else x, dtype=float)
        return vid

    # corners first so that linear meshes keep the corner numbering
    for c in range(len(mesh.points)):
        if any(c in t for t in mesh.tets):
            node([c], [order])
    elements = []
    faces = defaultdict(list)
    for e, tet in enumerate(mesh.tets):
        ids = []
        for i, j, k in simplex_grid_enumerate(3, order):
            ids.append(node(tet, (order - i - j - k, i, j, k)))
        elements.append((3, order, mesh.tags[e], ids))
        for f in combinations(range(4), 3):
            faces[tuple(sorted(tet[a] for a in f))].append((e, tuple(tet[a] for a in f)))
    for key in sorted(faces):
        owners = faces[key]
        if len(owners) == 1:
            tag = DOMAIN_TAG
        else:
            (e1, _), (e2, _) = owners
            split = interface(e1, e2) if interface else mesh.tags[e1] != mesh.tags[e2]
            if not split:
                continue
            tag = INTERFACE_TAG
        _, tri = owners[0]
        ids = [node(tri, (order - i - j, i, j)) for i, j in simplex_grid_enumerate(2, order)]
        elements.append((2, order, tag, ids))
    # boundary triangles go first, as GMSH writes them
    elements.sort(key=lambda el: el[0])
    return nodes, elements


def write_mesh(path, mesh: LinearTetMesh, order: int = 1, point_map=None, interface=None):
    nodes, elements = to_high_order(mesh, order, point_map, interface)
    write_msh(path, nodes, elements)
    return path


# meshes -------------------------------------------------------------------

def two_tet() -> LinearTetMesh:
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
    return LinearTetMesh(pts, [(0, 1, 2, 3), (1, 2, 3, 4)])


def single_tet() -> LinearTetMesh:
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return LinearTetMesh(pts, [(0, 1, 2, 3)])


def tet_ring(n: int = 3) -> LinearTetMesh:
    """n tetrahedra around a common vertical edge; every one touches the axis."""
    ang = 2 * np.pi * np.arange(n) / n
    ring = np.stack([np.cos(ang), np.sin(ang), np.full(n, 0.5)], axis=1)
    pts = np.vstack([[[0, 0, 0], [0, 0, 1]], ring])
    tets = [(0, 1, 2 + i, 2 + (i + 1) % n) for i in range(n)]
    return LinearTetMesh(pts, tets)


def phantom_edge() -> LinearTetMesh:
    """Four tetrahedra in which edge (u, w) is absent from the last two.

    With a contiguous 1/1/2 split over three ranks the last rank touches
    both end points u and w of that edge while not holding it.
    """
    u, w, a, b, c, d = range(6)
    pts = np.array([[-1, 0, 0], [1, 0, 0], [0, 0, 1], [0, 1, 0], [0, 0.5, -1], [0, 1, 1]], dtype=float)
    return LinearTetMesh(pts, [(u, w, a, b), (u, w, b, c), (u, a, b, d), (w, a, b, d)])


def _refine(points: list, tets: list):
    mids: dict[tuple[int, int], int] = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in mids:
            mids[key] = len(points)
            points.append(0.5 * (points[i] + points[j]))
        return mids[key]

    out = []
    for x0, x1, x2, x3 in tets:
        m01, m02, m03 = mid(x0, x1), mid(x0, x2), mid(x0, x3)
        m12, m13, m23 = mid(x1, x2), mid(x1, x3), mid(x2, x3)
        out += [(x0, m01, m02, m03), (m01, x1, m12, m13), (m02, m12, x2, m23), (m03, m13, m23, x3),
                (m01, m02, m03, m13), (m01, m02, m12, m13), (m02, m03, m13, m23), (m02, m12, m13, m23)]
    return out


def octahedron_ball(refinements: int = 1) -> LinearTetMesh:
    """Octahedron |x|_1 <= 1 cut into octant tetrahedra and refined.

    Elements inside |x|_1 < 1/2 carry tag 2, the rest tag 1.
    """
    points = [np.zeros(3)]
    axes = {}
    for a in range(3):
        for s in (1, -1):
            v = np.zeros(3)
            v[a] = s
            axes[(a, s)] = len(points)
            points.append(v)
    tets = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                tets.append((0, axes[(0, sx)], axes[(1, sy)], axes[(2, sz)]))
    for _ in range(refinements):
        tets = _refine(points, tets)
    pts = np.array(points)
    tags = [2 if np.abs(pts[list(t)].mean(axis=0)).sum() < 0.5 else 1 for t in tets]
    return LinearTetMesh(pts, tets, tags)


def ball_map(x):
    """Send the octahedron |x|_1 <= r onto the ball |x|_2 <= r."""
    x = np.asarray(x, dtype=float)
    n2 = np.linalg.norm(x)
    return x if n2 == 0 else x * (np.abs(x).sum() / n2)


FIXTURES = {
    "two_tet.msh": lambda p: write_mesh(p, two_tet(), 1),
    "single_tet.msh": lambda p: write_mesh(p, single_tet(), 1),
    "tet_ring3.msh": lambda p: write_mesh(p, tet_ring(3), 1),
    "tet_ring6.msh": lambda p: write_mesh(p, tet_ring(6), 2),
    "phantom_edge.msh": lambda p: write_mesh(p, phantom_edge(), 1),
    "ball_order3.msh": lambda p: write_mesh(p, octahedron_ball(1), 3, ball_map),
    "ball_order2_fine.msh": lambda p: write_mesh(p, octahedron_ball(2), 2, ball_map),
}


def single_triangle_order2(path):
    """A lone curved order-2 triangle, nodes listed in GMSH order."""
    nodes = {1: [0, 0, 0], 2: [1, 0, 0], 3: [0, 1, 0], 4: [0.5, -0.1, 0], 5: [0.55, 0.55, 0], 6: [-0.1, 0.5, 0]}
    write_msh(path, {k: np.array(v, dtype=float) for k, v in nodes.items()},
              [(2, 2, 1, [1, 2, 3, 4, 5, 6])], sorted_order=False)
    return path


def write_all(directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, make in FIXTURES.items():
        out.append(Path(make(d / name)))
    out.append(Path(single_triangle_order2(d / "triangle_order2.msh")))
    return out


def data_path(name: str) -> Path:
    return Path(__file__).with_name("data") / name


if __name__ == "__main__":
    for p in write_all(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).with_name("data")):
        print(p)
