"""Mapping between GMSH node order and the sorted grid order used internally.

``RENUMBER[(dim, order)][k]`` is the GMSH-local node index of the k-th node
in grid order, so ``sorted_nodes[k] = gmsh_nodes[RENUMBER[...][k]]``.
"""
from __future__ import annotations

import numpy as np

from .lagrange import simplex_grid_enumerate

RENUMBER: dict[tuple[int, int], tuple[int, ...]] = {
    (1, 1): (0, 1),
    (1, 2): (0, 2, 1),
    (1, 3): (0, 2, 3, 1),
    (1, 4): (0, 2, 3, 4, 1),
    (1, 5): (0, 2, 3, 4, 5, 1),
    (2, 1): (0, 1, 2),
    (2, 2): (0, 3, 1, 5, 4, 2),
    (2, 3): (0, 3, 4, 1, 8, 9, 5, 7, 6, 2),
    (2, 4): (0, 3, 4, 5, 1, 11, 12, 13, 6, 10, 14, 7, 9, 8, 2),
    (2, 5): (0, 3, 4, 5, 6, 1, 14, 15, 18, 16, 7, 13, 20, 19, 8, 12, 17, 9, 11, 10, 2),
    (3, 1): (0, 3, 1, 2),
    (3, 2): (0, 7, 3, 4, 9, 1, 6, 8, 5, 2),
    (3, 3): (0, 11, 10, 3, 4, 17, 14, 5, 15, 1, 9, 18, 12, 16, 19, 6, 8, 13, 7, 2),
    (3, 4): (0, 15, 14, 13, 3, 4, 25, 27, 19, 5, 26, 20, 6, 21, 1, 12, 28, 29, 16, 22, 34, 31, 24, 32,
             7, 11, 30, 17, 23, 33, 8, 10, 18, 9, 2),
    (3, 5): (0, 19, 18, 17, 16, 3, 4, 34, 39, 36, 24, 5, 37, 38, 25, 6, 35, 26, 7, 27, 1, 15, 40, 43,
             41, 20, 28, 52, 55, 46, 33, 53, 49, 30, 47, 8, 14, 45, 44, 21, 31, 54, 51, 32, 50, 9, 13,
             42, 22, 29, 48, 10, 12, 23, 11, 2),
}

# element type codes: (dim, order) -> GMSH type id
GMSH_TYPES = {
    (0, 1): 15,
    (1, 1): 1, (1, 2): 8, (1, 3): 26, (1, 4): 27, (1, 5): 28,
    (2, 1): 2, (2, 2): 9, (2, 3): 21, (2, 4): 23, (2, 5): 25,
    (3, 1): 4, (3, 2): 11, (3, 3): 29, (3, 4): 30, (3, 5): 31,
}
TYPE_INFO = {code: key for key, code in GMSH_TYPES.items()}

TRIANGLE_EDGES = ((0, 1), (1, 2), (2, 0))
TET_EDGES = ((0, 1), (1, 2), (2, 0), (3, 0), (3, 2), (3, 1))
TET_FACES = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (3, 1, 2))


def inverse(perm) -> tuple[int, ...]:
    out = [0] * len(perm)
    for k, g in enumerate(perm):
        out[g] = k
    return tuple(out)


def to_sorted(gmsh_nodes, dim: int, order: int) -> list:
    perm = RENUMBER[(dim, order)]
    if len(gmsh_nodes) != len(perm):
        raise ValueError(f"expected {len(perm)} nodes, got {len(gmsh_nodes)}")
    return [gmsh_nodes[g] for g in perm]


def to_gmsh(sorted_nodes, dim: int, order: int) -> list:
    inv = inverse(RENUMBER[(dim, order)])
    return [sorted_nodes[k] for k in inv]


# recursive construction of the GMSH order, used to cross-check the table

def _line_nodes(a, b, order):
    a, b = np.asarray(a), np.asarray(b)
    step = (b - a) // order
    return [tuple(a + i * step) for i in range(1, order)]


def _triangle_nodes(c, order):
    """All nodes of a triangle with integer corners c, GMSH recursive order."""
    c = [np.asarray(p) for p in c]
    if order == 0:
        return [tuple(c[0])]
    out = [tuple(p) for p in c]
    for i, j in TRIANGLE_EDGES:
        out += _line_nodes(c[i], c[j], order)
    if order >= 3:
        e1 = (c[1] - c[0]) // order
        e2 = (c[2] - c[0]) // order
        inner = [c[0] + e1 + e2, c[0] + (order - 2) * e1 + e2, c[0] + e1 + (order - 2) * e2]
        out += _triangle_nodes(inner, order - 3)
    return out


def _tet_nodes(c, order):
    c = [np.asarray(p) for p in c]
    if order == 0:
        return [tuple(c[0])]
    out = [tuple(p) for p in c]
    for i, j in TET_EDGES:
        out += _line_nodes(c[i], c[j], order)
    if order >= 3:
        for f in TET_FACES:
            a, b, d = (c[k] for k in f)
            e1 = (b - a) // order
            e2 = (d - a) // order
            inner = [a + e1 + e2, a + (order - 2) * e1 + e2, a + e1 + (order - 2) * e2]
            out += _triangle_nodes(inner, order - 3)
    if order >= 4:
        e = [(c[k] - c[0]) // order for k in (1, 2, 3)]
        base = c[0] + e[0] + e[1] + e[2]
        inner = [base] + [base + (order - 4) * e[k] for k in range(3)]
        out += _tet_nodes(inner, order - 4)
    return out


# placement of the GMSH reference corners in the internal reference simplex
_CORNER_PLACEMENT = {
    1: ((0,), (1,)),
    2: ((0, 0), (1, 0), (0, 1)),
    3: ((0, 0, 0), (0, 1, 0), (0, 0, 1), (1, 0, 0)),
}


def generate_renumbering(dim: int, order: int) -> tuple[int, ...]:
    """Rebuild a renumbering list from the recursive GMSH ordering rules."""
    corners = [np.array(p) * order for p in _CORNER_PLACEMENT[dim]]
    if dim == 1:
        gmsh = [tuple(corners[0]), tuple(corners[1])] + _line_nodes(corners[0], corners[1], order)
    elif dim == 2:
        gmsh = _triangle_nodes(corners, order)
    else:
        gmsh = _tet_nodes(corners, order)
    where = {p: i for i, p in enumerate(gmsh)}
    return tuple(where[p] for p in simplex_grid_enumerate(dim, order))
