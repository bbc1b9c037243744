"""Deterministic recursive coordinate bisection of element centres."""
from __future__ import annotations

from dataclasses import dataclass, field
from collections import defaultdict
from itertools import combinations

import numpy as np


@dataclass
class ElementGraph:
    global_ids: np.ndarray
    corners: np.ndarray          # (N, ncorners) corner vertex ids
    centers: np.ndarray          # (N, 3) mass centres
    adjacency: list[list[int]] = field(default_factory=list)

    @classmethod
    def build(cls, global_ids, corners, centers) -> ElementGraph:
        corners = np.asarray(corners, dtype=np.int64)
        faces = defaultdict(list)
        k = corners.shape[1] - 1
        for e, row in enumerate(corners):
            for f in combinations(sorted(row.tolist()), k):
                faces[f].append(e)
        adj = [[] for _ in range(len(corners))]
        for elems in faces.values():
            for a in elems:
                adj[a].extend(b for b in elems if b != a)
        return cls(np.asarray(global_ids, dtype=np.int64), corners, np.asarray(centers, dtype=float),
                   [sorted(set(a)) for a in adj])


def partition_sizes(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if p < extra else 0) for p in range(parts)]


def recursive_bisection(centers, global_ids, n_parts: int) -> np.ndarray:
    """Part index per element.

    Each split cuts along the axis of largest extent at the rank that gives
    the two halves element counts proportional to their part counts.  Ties in
    the coordinate are broken by global id, so the result depends only on the
    input, never on its order.
    """
    centers = np.asarray(centers, dtype=float)
    ids = np.asarray(global_ids, dtype=np.int64)
    if n_parts < 1:
        raise ValueError("need at least one part")
    n = len(ids)
    out = np.zeros(n, dtype=np.int64)
    if n == 0:
        return out
    if len(np.unique(ids)) != n:
        raise ValueError("duplicate global ids")
    order = np.lexsort((ids,))
    _bisect(centers, ids, order, 0, n_parts, out)
    return out


def _bisect(centers, ids, members, first_part, n_parts, out):
    if n_parts == 1 or len(members) == 0:
        out[members] = first_part
        return
    left_parts = n_parts // 2
    n = len(members)
    n_left = (n * left_parts) // n_parts
    pts = centers[members]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0))) if n else 0
    order = np.lexsort((ids[members], pts[:, axis]))
    ranked = members[order]
    _bisect(centers, ids, ranked[:n_left], first_part, left_parts, out)
    _bisect(centers, ids, ranked[n_left:], first_part + left_parts, n_parts - left_parts, out)
