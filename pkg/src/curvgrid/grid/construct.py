"""Collective construction of the distributed grid.

Stages, each collective over all ranks:

1. entities      faces, edges and corners of local elements keyed by sorted corner ids
2. global ids    process-boundary sharing, ownership and per-codim numbering
3. ghosts        copies of the elements across every process-boundary face
4. index sets    per-codim lists of local indices by partition kind
5. comm maps     for every entity, the ranks holding a counterpart of each kind
"""
from __future__ import annotations

from collections import defaultdict
from functools import reduce

import numpy as np

from ..comm import INT, REAL
from ..lagrange import corner_indices
from .core import DIM, SUBENTITY_CORNERS, CurvilinearGrid
from .types import (
    MAP_PAIRS,
    BoundaryType,
    CommClass,
    GridConstructionError,
    PartitionKind,
    comm_class,
)

KEY_WIDTH = DIM + 1
STAGE_ENTITIES = "GridConstructor: Entity generation"
STAGE_GLOBAL = "GridConstructor: Global index generation"
STAGE_GHOSTS = "GridConstructor: Ghost element generation"
STAGE_INDEXSETS = "GridConstructor: Index set generation"
STAGE_COMMMAPS = "GridConstructor: Communication map generation"

PB = PartitionKind.PROCESS_BOUNDARY


def _padded(key) -> list[int]:
    return list(key) + [-1] * (KEY_WIDTH - len(key))


def _unpad(row) -> tuple[int, ...]:
    return tuple(int(v) for v in row if v >= 0)


def construct(grid: CurvilinearGrid, segments: dict[tuple[int, ...], tuple[int, bool]]):
    t = grid.timing
    with t.stage(STAGE_ENTITIES):
        generate_entities(grid, segments)
    with t.stage(STAGE_GLOBAL):
        build_global_indices(grid)
    with t.stage(STAGE_GHOSTS):
        if grid.with_ghosts:
            build_ghosts(grid)
    with t.stage(STAGE_INDEXSETS):
        build_index_sets(grid)
    with t.stage(STAGE_COMMMAPS):
        build_comm_maps(grid)
        verify_comm_maps(grid)


# stage 1 -------------------------------------------------------------------

def _add_entity(grid: CurvilinearGrid, codim: int, key, elem: int, sub: int, kind) -> int:
    idx = len(grid.key[codim])
    grid.key[codim].append(key)
    grid.kind[codim].append(kind)
    grid.parent[codim].append(elem)
    grid.sub_index[codim].append(sub)
    grid.lookup[codim][key] = idx
    grid.gid[codim].append(-1)
    if codim == 1:
        grid.face_parent2.append(-1)
        grid.face_sub2.append(-1)
        grid.face_btype.append(BoundaryType.NONE)
        grid.face_btag.append(None)
    return idx


def _link_element(grid: CurvilinearGrid, elem: int, kind_new) -> list[tuple[int, int, bool]]:
    """Attach an element to its subentities, creating missing ones with ``kind_new``.

    Returns (codim, local, created) for every subentity in reference order.
    """
    corners = grid.elem_corners[elem]
    out = []
    for codim in range(1, DIM + 1):
        subs = []
        for j, cs in enumerate(SUBENTITY_CORNERS[codim]):
            key = tuple(sorted(corners[c] for c in cs))
            idx = grid.lookup[codim].get(key)
            created = idx is None
            if created:
                idx = _add_entity(grid, codim, key, elem, j, kind_new)
            elif codim == 1 and grid.parent[1][idx] != elem:
                if grid.face_parent2[idx] >= 0:
                    raise GridConstructionError(f"face {key} has more than two parent elements")
                grid.face_parent2[idx] = elem
                grid.face_sub2[idx] = j
            subs.append(idx)
            out.append((codim, idx, created))
        grid.elem_sub[codim].append(subs)
    return out


def generate_entities(grid: CurvilinearGrid, segments):
    for e in range(len(grid.elem_kind)):
        _link_element(grid, e, PartitionKind.INTERIOR)
    seen_segments = set()
    for f, key in enumerate(grid.key[1]):
        seg = segments.get(key)
        two = grid.face_parent2[f] >= 0
        if seg is not None:
            seen_segments.add(key)
            tag, is_db = seg
            grid.face_btag[f] = tag
            if is_db:
                if two:
                    raise GridConstructionError(f"domain boundary segment {key} has two parent elements")
                grid.kind[1][f] = PartitionKind.DOMAIN_BOUNDARY
                grid.face_btype[f] = BoundaryType.DOMAIN
            else:
                grid.face_btype[f] = BoundaryType.INTERIOR
                grid.kind[1][f] = PartitionKind.INTERIOR_BOUNDARY if two else PB
        elif not two:
            grid.kind[1][f] = PB
    unknown = set(segments) - seen_segments
    if unknown:
        raise GridConstructionError(f"boundary segments without a local parent element: {sorted(unknown)[:5]}")
    for f, k in enumerate(grid.kind[1]):
        if k != PB:
            continue
        e, j = grid.parent[1][f], grid.sub_index[1][f]
        corners = grid.elem_corners[e]
        fc = SUBENTITY_CORNERS[1][j]
        for codim in (2, 3):
            for cs in SUBENTITY_CORNERS[codim]:
                if set(cs) <= set(fc):
                    key = tuple(sorted(corners[c] for c in cs))
                    grid.kind[codim][grid.lookup[codim][key]] = PB
    for e in range(len(grid.elem_kind)):
        grid.gid[0].append(-1)


# stage 2 -------------------------------------------------------------------

def _owner(grid: CurvilinearGrid, key, ranks) -> int:
    if grid.ownership == "lowest":
        return min(ranks)
    # spread ownership: rank whose id XOR the corner ids is smallest
    x = reduce(lambda a, b: a ^ b, key, 0)
    return min(ranks, key=lambda r: (x ^ r, r))


def build_global_indices(grid: CurvilinearGrid):
    comm = grid.comm
    rank, size = grid.rank, grid.size
    pb = {c: [i for i, k in enumerate(grid.kind[c]) if k == PB] for c in range(1, DIM + 1)}
    # which ranks carry each process-boundary corner
    mine = np.array(sorted(grid.key[3][i][0] for i in pb[3]), dtype=np.int64)
    corner_ranks: dict[int, set[int]] = defaultdict(set)
    for r, arr in enumerate(comm.allgather(mine, INT, "pb corners")):
        if r == rank:
            continue
        for v in arr:
            corner_ranks[int(v)].add(r)
    provisional: dict[int, dict[int, set[int]]] = {c: {} for c in range(1, DIM + 1)}
    for c in range(1, DIM + 1):
        for i in pb[c]:
            key = grid.key[c][i]
            ranks = set.intersection(*(corner_ranks.get(v, set()) for v in key))
            if not ranks:
                raise GridConstructionError(
                    f"process-boundary codim-{c} entity {key} on rank {rank} has no neighbour rank "
                    "(is a boundary segment missing from the mesh?)")
            provisional[c][i] = ranks
    # confirm entities with more than one candidate; a single candidate must be genuine
    queries = [[] for _ in range(size)]
    pending = []
    for c in (1, 2):
        for i, ranks in provisional[c].items():
            if len(ranks) > 1:
                for r in sorted(ranks):
                    queries[r].append([c] + _padded(grid.key[c][i]))
                    pending.append((c, i, r))
    recv = comm.all_to_all([np.array(q, dtype=np.int64).reshape(-1, KEY_WIDTH + 1) for q in queries],
                           INT, "entity confirmation", width=KEY_WIDTH + 1)
    answers = []
    for arr in recv:
        ans = []
        for row in arr:
            c = int(row[0])
            idx = grid.lookup[c].get(_unpad(row[1:]))
            ans.append(1 if idx is not None and grid.kind[c][idx] == PB else 0)
        answers.append(np.array(ans, dtype=np.int64))
    back = comm.all_to_all(answers, INT, "entity confirmation reply")
    cursor = [0] * size
    for c, i, r in pending:
        ok = back[r][cursor[r]]
        cursor[r] += 1
        if not ok:
            provisional[c][i].discard(r)
    for c in range(1, DIM + 1):
        for i, ranks in provisional[c].items():
            if not ranks:
                raise GridConstructionError(f"codim-{c} entity {grid.key[c][i]} lost all neighbours")
            if c == 1 and len(ranks) != 1:
                raise GridConstructionError(f"face {grid.key[1][i]} is shared by ranks {sorted(ranks)}")
            grid.sharers[c][i] = tuple(sorted(ranks))
            grid.owner[c][i] = _owner(grid, grid.key[c][i], ranks | {rank})
    # count owned entities per codimension and number them
    owned: dict[int, list[int]] = {}
    for c in range(1, DIM + 1):
        ids = [i for i in range(len(grid.kind[c])) if grid.kind[c][i] != PB or grid.owner[c][i] == rank]
        owned[c] = sorted(ids, key=lambda i: grid.key[c][i])
    counts = np.array([len(grid.elem_kind)] + [len(owned[c]) for c in range(1, DIM + 1)], dtype=np.int64)
    offsets = comm.exscan_sum(counts)
    grid.n_global = comm.allreduce_sum(counts).tolist()
    if grid.with_gmsh_index:
        for e, g in enumerate(grid.elem_gmsh):
            if g is None:
                raise GridConstructionError("element inserted without a file index")
            grid.gid[0][e] = int(g)
    else:
        for e in range(len(grid.elem_kind)):
            grid.gid[0][e] = int(offsets[0]) + e
    for c in range(1, DIM + 1):
        for n, i in enumerate(owned[c]):
            grid.gid[c][i] = int(offsets[c]) + n
    # owners tell sharers the index
    out = [[] for _ in range(size)]
    for c in range(1, DIM + 1):
        for i, ranks in grid.sharers[c].items():
            if grid.owner[c][i] == rank:
                for r in ranks:
                    out[r].append([c] + _padded(grid.key[c][i]) + [grid.gid[c][i]])
    recv = comm.all_to_all([np.array(o, dtype=np.int64).reshape(-1, KEY_WIDTH + 2) for o in out],
                           INT, "global index", width=KEY_WIDTH + 2)
    for arr in recv:
        for row in arr:
            c = int(row[0])
            idx = grid.lookup[c].get(_unpad(row[1:-1]))
            if idx is None:
                raise GridConstructionError(f"received index for unknown codim-{c} entity {_unpad(row[1:-1])}")
            grid.gid[c][idx] = int(row[-1])
    for c in range(DIM + 1):
        for i, g in enumerate(grid.gid[c]):
            if g < 0:
                raise GridConstructionError(f"codim-{c} entity {i} on rank {rank} has no global index")
            grid.global_lookup[c][g] = i


# stage 3 -------------------------------------------------------------------

def build_ghosts(grid: CurvilinearGrid):
    comm = grid.comm
    rank, size = grid.rank, grid.size
    sends: dict[int, dict[int, list[int]]] = defaultdict(dict)  # dest -> elem -> faces
    for f, k in enumerate(grid.kind[1]):
        if k == PB:
            (q,) = grid.sharers[1][f]
            e, j = grid.parent[1][f], grid.sub_index[1][f]
            sends[q].setdefault(e, []).append(j)
    for q, elems in sends.items():
        for e in elems:
            grid.ghost_sent.setdefault(e, set()).add(q)
    payloads = [[] for _ in range(size)]
    for q in range(size):
        for e in sorted(sends.get(q, {})):
            rec = [grid.gid[0][e], grid.elem_gmsh[e] if grid.elem_gmsh[e] is not None else -1,
                   grid.elem_order[e], grid.elem_tag[e], len(grid.elem_vertices[e])]
            rec += [grid.vertex_gid[v] for v in grid.elem_vertices[e]]
            for c in range(1, DIM + 1):
                rec += [grid.gid[c][i] for i in grid.elem_sub[c][e]]
            payloads[q].append(rec)
    # structure sizes first, then the element data
    sizes = [np.array([len(p), sum(len(r) for r in p)], dtype=np.int64) for p in payloads]
    expect = comm.all_to_all(sizes, INT, "ghost sizes")
    flat = [np.array([v for r in p for v in r], dtype=np.int64) for p in payloads]
    recv = comm.all_to_all(flat, INT, "ghost elements")
    missing: dict[int, list[int]] = defaultdict(list)
    pending_vertices: list[tuple[int, int, int]] = []  # (elem, slot, vertex gid)
    n_sub = sum(len(SUBENTITY_CORNERS[c]) for c in range(1, DIM + 1))
    for q in range(size):
        arr = recv[q]
        n_elem, n_vals = (int(v) for v in expect[q])
        if len(arr) != n_vals:
            raise GridConstructionError(f"ghost payload from rank {q} has {len(arr)} values, expected {n_vals}")
        pos = 0
        for _ in range(n_elem):
            gid, gmsh, order, tag, nv = (int(v) for v in arr[pos:pos + 5])
            pos += 5
            vgids = [int(v) for v in arr[pos:pos + nv]]
            pos += nv
            subs = [int(v) for v in arr[pos:pos + n_sub]]
            pos += n_sub
            if gid in grid.global_lookup[0]:
                continue
            e = len(grid.elem_kind)
            verts = []
            for slot, vg in enumerate(vgids):
                lv = grid.vertex_local.get(vg)
                if lv is None:
                    if not any(vg == m for m in missing[q]):
                        missing[q].append(vg)
                    pending_vertices.append((e, slot, vg))
                    lv = -1
                verts.append(lv)
            grid.elem_vertices.append(verts)
            grid.elem_order.append(order)
            grid.elem_tag.append(tag)
            grid.elem_kind.append(PartitionKind.GHOST)
            grid.elem_gmsh.append(gmsh if gmsh >= 0 else None)
            grid.elem_origin.append(q)
            grid.elem_corners.append(tuple(vgids[i] for i in corner_indices(DIM, order)))
            grid.gid[0].append(gid)
            grid.global_lookup[0][gid] = e
            linked = _link_element(grid, e, PartitionKind.GHOST)
            across = False
            for (c, idx, created), g in zip(linked, subs):
                if created:
                    grid.gid[c][idx] = g
                    grid.global_lookup[c][g] = idx
                elif grid.gid[c][idx] != g:
                    raise GridConstructionError(
                        f"ghost element {gid} disagrees on the global index of codim-{c} entity {grid.key[c][idx]}")
                if c == 1 and not created and grid.kind[1][idx] == PB and grid.sharers[1][idx] == (q,):
                    across = True
            if not across:
                raise GridConstructionError(f"ghost element {gid} from rank {q} does not touch a known face")
    # fetch coordinates of vertices that only ghosts use
    requests = [np.array(missing.get(q, []), dtype=np.int64) for q in range(size)]
    asked = comm.all_to_all(requests, INT, "ghost vertex request")
    replies = []
    for q in range(size):
        rows = []
        for vg in asked[q]:
            lv = grid.vertex_local.get(int(vg))
            if lv is None:
                raise GridConstructionError(f"rank {q} asked rank {rank} for unknown vertex {int(vg)}")
            rows.append(grid.vertex_coords[lv])
        replies.append(np.array(rows, dtype=float).reshape(-1, 3))
    coords = comm.all_to_all(replies, REAL, "ghost vertex coordinates", width=3)
    for q in range(size):
        for vg, x in zip(requests[q], coords[q]):
            lv = len(grid.vertex_coords)
            grid.vertex_coords.append(np.array(x))
            grid.vertex_gid.append(int(vg))
            grid.vertex_local[int(vg)] = lv
    for e, slot, vg in pending_vertices:
        grid.elem_vertices[e][slot] = grid.vertex_local[vg]


# stage 4 -------------------------------------------------------------------

INDEX_SET_KINDS = {
    "interior": {PartitionKind.INTERIOR, PartitionKind.DOMAIN_BOUNDARY, PartitionKind.INTERIOR_BOUNDARY},
    "domain_boundary": {PartitionKind.DOMAIN_BOUNDARY},
    "interior_boundary": {PartitionKind.INTERIOR_BOUNDARY},
    "process_boundary": {PB},
    "ghost": {PartitionKind.GHOST},
    "interior_border": {PartitionKind.INTERIOR, PartitionKind.DOMAIN_BOUNDARY,
                        PartitionKind.INTERIOR_BOUNDARY, PB},
}


def build_index_sets(grid: CurvilinearGrid):
    for c in range(DIM + 1):
        n = grid.n_entities(c)
        sets = {"all": list(range(n))}
        for name, kinds in INDEX_SET_KINDS.items():
            sets[name] = [i for i in range(n) if grid.entity_kind(c, i) in kinds]
        if c == 1:
            # interior boundary segments split across processes are process boundaries too
            sets["interior_boundary_segments"] = [
                i for i in range(n) if grid.face_btype[i] == BoundaryType.INTERIOR]
        grid.index_sets[c] = sets


# stage 5 -------------------------------------------------------------------

def _element_closure(grid: CurvilinearGrid, e: int):
    yield 0, e
    for c in range(1, DIM + 1):
        for i in grid.elem_sub[c][e]:
            yield c, i


def build_comm_maps(grid: CurvilinearGrid):
    comm = grid.comm
    rank, size = grid.rank, grid.size
    cls = {c: [comm_class(grid.entity_kind(c, i)) for i in range(grid.n_entities(c))] for c in range(DIM + 1)}
    maps = grid.maps
    for c in range(1, DIM + 1):
        for i, ranks in grid.sharers[c].items():
            maps[c][(CommClass.PB, CommClass.PB)][i] = ranks
    # ranks that hold each local entity as part of a ghost sent from here
    ghosted: dict[tuple[int, int], set[int]] = defaultdict(set)
    for e, dests in grid.ghost_sent.items():
        for c, i in _element_closure(grid, e):
            pbs = grid.sharers[c].get(i, ()) if c else ()
            for q in dests:
                if q not in pbs:
                    ghosted[(c, i)].add(q)
    # process-boundary copies pool what each of them sent
    out = [[] for _ in range(size)]
    for (c, i), qs in ghosted.items():
        if cls[c][i] == CommClass.PB:
            for r in grid.sharers[c][i]:
                out[r] += [[c, grid.gid[c][i], q] for q in sorted(qs)]
    for arr in comm.all_to_all([np.array(o, dtype=np.int64).reshape(-1, 3) for o in out], INT,
                               "comm maps: pool ghost ranks", width=3):
        for c, g, q in arr:
            c = int(c)
            i = grid.global_lookup[c].get(int(g))
            if i is None or cls[c][i] != CommClass.PB:
                raise GridConstructionError(f"pooled ghost ranks for unknown process-boundary entity {int(g)}")
            ghosted[(c, i)].add(int(q))
    for (c, i), qs in ghosted.items():
        qs = qs - {rank} - set(grid.sharers[c].get(i, ()) if c else ())
        if not qs:
            continue
        pair = (CommClass.PB, CommClass.G) if cls[c][i] == CommClass.PB else (CommClass.I, CommClass.G)
        maps[c][pair][i] = tuple(sorted(qs))
    # tell every ghost copy who holds the entity and where its other ghost copies live
    out = [[] for _ in range(size)]
    for c in range(DIM + 1):
        for pair in ((CommClass.I, CommClass.G), (CommClass.PB, CommClass.G)):
            kind_code = 0 if pair[0] == CommClass.I else 1
            for i, qs in maps[c][pair].items():
                for q in qs:
                    out[q].append([c, grid.gid[c][i], kind_code, -1])
                    out[q] += [[c, grid.gid[c][i], kind_code, o] for o in qs if o != q]
    gi = defaultdict(set)
    gpb = defaultdict(set)
    gg = defaultdict(set)
    recv = comm.all_to_all([np.array(o, dtype=np.int64).reshape(-1, 4) for o in out], INT,
                           "comm maps: notify ghosts", width=4)
    for src, arr in enumerate(recv):
        for c, g, kind_code, other in arr:
            c = int(c)
            i = grid.global_lookup[c].get(int(g))
            if i is None or cls[c][i] != CommClass.G:
                raise GridConstructionError(
                    f"rank {src} addressed codim-{c} entity {int(g)} which is not a ghost on rank {rank}")
            (gi if kind_code == 0 else gpb)[(c, i)].add(src)
            if other >= 0:
                gg[(c, i)].add(int(other))
    for (c, i), rs in gi.items():
        maps[c][(CommClass.G, CommClass.I)][i] = tuple(sorted(rs))
    for (c, i), rs in gpb.items():
        maps[c][(CommClass.G, CommClass.PB)][i] = tuple(sorted(rs))
    for (c, i), rs in gg.items():
        rs = rs - {rank}
        if rs:
            maps[c][(CommClass.G, CommClass.G)][i] = tuple(sorted(rs))


_REVERSE = {
    (CommClass.PB, CommClass.PB): (CommClass.PB, CommClass.PB),
    (CommClass.PB, CommClass.G): (CommClass.G, CommClass.PB),
    (CommClass.G, CommClass.PB): (CommClass.PB, CommClass.G),
    (CommClass.I, CommClass.G): (CommClass.G, CommClass.I),
    (CommClass.G, CommClass.I): (CommClass.I, CommClass.G),
    (CommClass.G, CommClass.G): (CommClass.G, CommClass.G),
}


def verify_comm_maps(grid: CurvilinearGrid):
    """Every relation must be mirrored by the counterpart rank."""
    comm = grid.comm
    size = grid.size
    pair_code = {p: n for n, p in enumerate(MAP_PAIRS)}
    out = [[] for _ in range(size)]
    for c in range(DIM + 1):
        for pair, m in grid.maps[c].items():
            for i, rs in m.items():
                for r in rs:
                    out[r].append([c, grid.gid[c][i], pair_code[_REVERSE[pair]]])
    recv = comm.all_to_all([np.array(o, dtype=np.int64).reshape(-1, 3) for o in out], INT,
                           "comm maps: verify", width=3)
    for src, arr in enumerate(recv):
        for c, g, code in arr:
            c = int(c)
            i = grid.global_lookup[c].get(int(g))
            pair = MAP_PAIRS[int(code)]
            if i is None or src not in grid.maps[c][pair].get(i, ()):
                raise GridConstructionError(
                    f"asymmetric communication map: rank {src} lists codim-{c} entity {int(g)} "
                    f"as {pair[1].value}->{pair[0].value} but rank {grid.rank} does not")
