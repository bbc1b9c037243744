"""GMSH ASCII v2 reading and writing.

:func:`read_gmsh` is the rank-local reader.  It makes several passes over
the file, keeps only the elements owned by its rank and feeds a grid
factory.  :func:`parse_msh` and :func:`write_msh` are plain whole-file
helpers used for fixtures and debugging.
"""
from __future__ import annotations

import io
import os
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Protocol

import numpy as np

from .comm import INT, REAL, Communicator, Fabric
from .gmshnumbering import GMSH_TYPES, TYPE_INFO, to_gmsh, to_sorted
from .lagrange import n_points
from .part import recursive_bisection
from .timing import TimingLog

IN_MEMORY_LIMIT = 64 * 1024 * 1024

STAGE_SKIP = "GmshReader: Skipping vertices"
STAGE_COUNT = "GmshReader: Counting elements"
STAGE_PARTITION = "GmshReader: Reading and partitioning linear elements"
STAGE_ELEMENTS = "GmshReader: Reading complete element data"
STAGE_BOUNDARY = "GmshReader: Reading boundary segment data"
STAGE_VERTICES = "GmshReader: Reading vertex coordinates"
STAGE_INSERT = "GmshReader: Inserting entities into the factory"


class MeshFormatError(ValueError):
    """Malformed or unsupported mesh file; the message carries the line number."""


class GridSink(Protocol):
    def insert_vertex(self, pos, global_index: int) -> int: ...
    def insert_element(self, dim: int, vertices, order: int, physical_tag: int, gmsh_index: int | None = None): ...
    def insert_boundary_segment(self, dim: int, vertices, order: int, physical_tag: int,
                                is_domain_boundary: bool): ...


def node_count(gmsh_type: int) -> int:
    dim, order = TYPE_INFO[gmsh_type]
    return 1 if dim == 0 else n_points(dim, order)


@dataclass
class RawElement:
    gmsh_index: int
    gmsh_type: int
    physical_tag: int
    nodes: tuple[int, ...]          # GMSH order
    line: int = 0

    @property
    def dim(self) -> int:
        return TYPE_INFO[self.gmsh_type][0]

    @property
    def order(self) -> int:
        return TYPE_INFO[self.gmsh_type][1]

    @property
    def corners(self) -> tuple[int, ...]:
        return self.nodes[: self.dim + 1]

    def sorted_nodes(self) -> list[int]:
        if self.dim == 0:
            return list(self.nodes)
        return to_sorted(list(self.nodes), self.dim, self.order)


@dataclass
class ReadSummary:
    rank: int
    n_elements_file: int
    n_boundary_file: int
    element_dim: int
    n_elements: int = 0
    n_boundary_segments: int = 0
    n_vertices: int = 0
    volume_tags: list[int] = field(default_factory=list)
    domain_boundary_tags: list[int] = field(default_factory=list)
    interior_boundary_tags: list[int] = field(default_factory=list)


# file access ---------------------------------------------------------------

class _Source:
    """Line access to a mesh file; in memory when small, re-opened per pass when large."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        try:
            size = os.path.getsize(self.path)
        except OSError as exc:
            raise OSError(f"cannot open mesh file {self.path}: {exc}") from exc
        self._data = None
        if size <= IN_MEMORY_LIMIT:
            with open(self.path, "rb") as fh:
                self._data = fh.read()
        self.sections: dict[str, tuple[int, int, int]] = {}  # name -> (offset, line, count)
        self._index()

    def _open(self):
        if self._data is not None:
            return io.BytesIO(self._data)
        return open(self.path, "rb")

    def lines(self, offset: int = 0, first_line: int = 1) -> Iterator[tuple[int, str]]:
        with self._open() as fh:
            fh.seek(offset)
            lineno = first_line
            for raw in fh:
                yield lineno, raw.decode("ascii", errors="replace").strip()
                lineno += 1

    def _index(self):
        with self._open() as fh:
            lineno = 0
            current = None
            while True:
                pos = fh.tell()
                raw = fh.readline()
                if not raw:
                    break
                lineno += 1
                text = raw.decode("ascii", errors="replace").strip()
                if text.startswith("$"):
                    name = text[1:]
                    if name.startswith("End"):
                        if current is None or name[3:] != current[0]:
                            raise MeshFormatError(f"{self.path}:{lineno}: unexpected section end {text}")
                        current = None
                        continue
                    if current is not None:
                        raise MeshFormatError(
                            f"{self.path}:{lineno}: section {text} opened inside ${current[0]}")
                    current = (name, lineno)
                    self.sections[name] = (fh.tell(), lineno + 1, 0)
        if current is not None:
            raise MeshFormatError(f"{self.path}: section ${current[0]} is not closed")
        for req in ("MeshFormat", "Nodes", "Elements"):
            if req not in self.sections:
                raise MeshFormatError(f"{self.path}: missing ${req} section")
        off, line, _ = self.sections["MeshFormat"]
        _, text = next(self.lines(off, line))
        parts = text.split()
        if len(parts) < 3 or not parts[0].startswith("2"):
            raise MeshFormatError(f"{self.path}:{line}: only ASCII format 2.x is supported, got '{text}'")
        if parts[1] != "0":
            raise MeshFormatError(f"{self.path}:{line}: binary mesh files are not supported")

    def section(self, name: str) -> Iterator[tuple[int, str]]:
        """Record lines of a counted section (count line consumed, end marker excluded)."""
        off, line, _ = self.sections[name]
        it = self.lines(off, line)
        lineno, text = next(it)
        try:
            count = int(text)
        except ValueError:
            raise MeshFormatError(f"{self.path}:{lineno}: expected a record count, got '{text}'") from None
        seen = 0
        for lineno, text in it:
            if text.startswith("$End"):
                if seen != count:
                    raise MeshFormatError(
                        f"{self.path}:{lineno}: ${name} declares {count} records but has {seen}")
                return
            if not text:
                continue
            seen += 1
            yield lineno, text
        raise MeshFormatError(f"{self.path}: ${name} is not closed")


def _parse_element(path: str, lineno: int, text: str) -> RawElement | None:
    try:
        vals = [int(v) for v in text.split()]
        idx, etype, ntags = vals[0], vals[1], vals[2]
    except (ValueError, IndexError):
        raise MeshFormatError(f"{path}:{lineno}: malformed element record '{text}'") from None
    if etype not in TYPE_INFO:
        raise MeshFormatError(f"{path}:{lineno}: unknown or unsupported element type {etype}")
    nodes = vals[3 + ntags:]
    want = node_count(etype)
    if len(nodes) != want or ntags < 0:
        raise MeshFormatError(
            f"{path}:{lineno}: element {idx} of type {etype} needs {want} vertices, got {len(nodes)}")
    tag = vals[3] if ntags > 0 else 0
    return RawElement(idx, etype, tag, tuple(nodes), lineno)


def _element_records(src: _Source) -> Iterator[RawElement]:
    for lineno, text in src.section("Elements"):
        yield _parse_element(src.path, lineno, text)


def _element_kind(src: _Source) -> Iterator[tuple[int, int, str]]:
    """Cheap pass yielding (line, dim, text) without building records."""
    for lineno, text in src.section("Elements"):
        head = text.split(maxsplit=2)
        try:
            etype = int(head[1])
        except (ValueError, IndexError):
            raise MeshFormatError(f"{src.path}:{lineno}: malformed element record '{text}'") from None
        if etype not in TYPE_INFO:
            raise MeshFormatError(f"{src.path}:{lineno}: unknown or unsupported element type {etype}")
        yield lineno, TYPE_INFO[etype][0], text


def _read_vertices(src: _Source, wanted: set[int], users=()) -> dict[int, np.ndarray]:
    out = {}
    for lineno, text in src.section("Nodes"):
        head = text.split(maxsplit=1)
        try:
            vid = int(head[0])
        except ValueError:
            raise MeshFormatError(f"{src.path}:{lineno}: malformed node record '{text}'") from None
        if vid in wanted:
            try:
                xyz = [float(v) for v in head[1].split()]
            except (ValueError, IndexError):
                raise MeshFormatError(f"{src.path}:{lineno}: malformed node record '{text}'") from None
            if len(xyz) != 3:
                raise MeshFormatError(f"{src.path}:{lineno}: node {vid} needs 3 coordinates")
            out[vid] = np.array(xyz)
    missing = wanted - set(out)
    if missing:
        _dangling(src.path, missing, users)
    return out


def _dangling(path, missing, users):
    for e in users:
        bad = [v for v in e.nodes if v in missing]
        if bad:
            raise MeshFormatError(f"{path}:{e.line}: element {e.gmsh_index} references undefined vertex {bad[0]}")
    raise MeshFormatError(f"{path}: undefined vertex ids {sorted(missing)[:10]}")


def _serial_comm() -> Communicator:
    return Communicator(Fabric(1), 0)


def read_gmsh(path, sink: GridSink, comm: Communicator | None = None, partition: bool = True,
              timing: TimingLog | None = None) -> ReadSummary:
    """Read this rank's share of a mesh and insert it into ``sink``.

    Ranks first read contiguous element blocks, optionally repartition them
    by coordinate bisection, then each keeps its own elements, the boundary
    segments bounding them and exactly the vertices they use.
    """
    comm = comm or _serial_comm()
    timing = timing or TimingLog()
    rank, size = comm.rank, comm.size

    with timing.stage(STAGE_SKIP):
        src = _Source(path)

    with timing.stage(STAGE_COUNT):
        dims = [d for _, d, _ in _element_kind(src)]
        elem_dim = max([d for d in dims if d >= 2], default=max(dims, default=0))
        n_elem = sum(1 for d in dims if d == elem_dim)
        n_bnd = sum(1 for d in dims if d == elem_dim - 1)
    summary = ReadSummary(rank, n_elem, n_bnd, elem_dim)

    with timing.stage(STAGE_PARTITION):
        lo, hi = (rank * n_elem) // size, ((rank + 1) * n_elem) // size
        if partition and size > 1:
            block: list[tuple[int, RawElement]] = []
            pos = 0
            for lineno, d, text in _element_kind(src):
                if d != elem_dim:
                    continue
                if lo <= pos < hi:
                    block.append((pos, _parse_element(src.path, lineno, text)))
                pos += 1
            coords = _read_vertices(src, {v for _, e in block for v in e.corners}, [e for _, e in block])
            ids = np.array([p for p, _ in block], dtype=np.int64)
            centers = np.array([np.mean([coords[v] for v in e.corners], axis=0) for _, e in block]).reshape(-1, 3)
            all_ids = np.concatenate(comm.allgather(ids, INT, "partition ids"))
            all_centers = np.concatenate(comm.allgather(centers, REAL, "partition centers", width=3))
            parts = recursive_bisection(all_centers, all_ids, size)
            owned = set(all_ids[parts == rank].tolist())
        else:
            owned = set(range(lo, hi))

    with timing.stage(STAGE_ELEMENTS):
        elements: list[RawElement] = []
        pos = 0
        for lineno, d, text in _element_kind(src):
            if d != elem_dim:
                continue
            if pos in owned:
                elements.append(_parse_element(src.path, lineno, text))
            pos += 1
        face_parents: dict[tuple[int, ...], int] = defaultdict(int)
        for e in elements:
            for f in combinations(sorted(e.corners), elem_dim):
                face_parents[f] += 1

    with timing.stage(STAGE_BOUNDARY):
        segments: list[RawElement] = []
        for lineno, d, text in _element_kind(src):
            if d != elem_dim - 1 or elem_dim < 2:
                continue
            rec = _parse_element(src.path, lineno, text)
            if tuple(sorted(rec.corners)) in face_parents:
                segments.append(rec)
        domain_tags, interior_tags, volume_tags = _classify_tags(comm, elem_dim, elements, segments,
                                                                 face_parents)

    with timing.stage(STAGE_VERTICES):
        needed = {v for e in elements for v in e.nodes} | {v for s in segments for v in s.nodes}
        coords = _read_vertices(src, needed, elements + segments)

    with timing.stage(STAGE_INSERT):
        local = {}
        if hasattr(sink, "set_tags"):
            sink.set_tags(volume_tags, domain_tags, interior_tags)
        for vid in sorted(needed):
            local[vid] = sink.insert_vertex(coords[vid], vid)
        for e in elements:
            sink.insert_element(elem_dim, [local[v] for v in e.sorted_nodes()], e.order, e.physical_tag,
                                gmsh_index=e.gmsh_index)
        dset = set(domain_tags)
        for s in segments:
            sink.insert_boundary_segment(elem_dim - 1, [local[v] for v in s.sorted_nodes()], s.order,
                                         s.physical_tag, s.physical_tag in dset)

    summary.n_elements = len(elements)
    summary.n_boundary_segments = len(segments)
    summary.n_vertices = len(needed)
    summary.volume_tags = volume_tags
    summary.domain_boundary_tags = domain_tags
    summary.interior_boundary_tags = interior_tags
    return summary


def _classify_tags(comm: Communicator, elem_dim: int, elements, segments, face_parents):
    """Split boundary tags into domain and interior ones by global parent counts."""
    size = comm.size
    outgoing = [[] for _ in range(size)]
    for s in segments:
        key = tuple(sorted(s.corners))
        rec = list(key) + [s.physical_tag, face_parents[key]]
        outgoing[min(key) % size].append(rec)
    width = elem_dim + 2
    bufs = [np.array(o, dtype=np.int64).reshape(-1, width) for o in outgoing]
    recv = comm.all_to_all(bufs, INT, "boundary classification", width=width)
    totals: dict[tuple[int, ...], list[int]] = {}
    for arr in recv:
        for row in arr:
            key = tuple(int(v) for v in row[:-2])
            entry = totals.setdefault(key, [int(row[-2]), 0])
            entry[1] += int(row[-1])
    flags = defaultdict(lambda: [0, 0])
    for tag, count in totals.values():
        flags[tag][0 if count == 1 else 1] = 1
    table = np.array([[t, a, b] for t, (a, b) in sorted(flags.items())], dtype=np.int64).reshape(-1, 3)
    merged = defaultdict(lambda: [0, 0])
    for arr in comm.allgather(table, INT, "boundary tags", width=3):
        for t, a, b in arr:
            merged[int(t)][0] |= int(a)
            merged[int(t)][1] |= int(b)
    domain, interior = [], []
    for tag, (single, double) in sorted(merged.items()):
        if single and double:
            raise MeshFormatError(f"boundary tag {tag} mixes domain and interior faces")
        (domain if single else interior).append(tag)
    vtags = sorted({e.physical_tag for e in elements})
    all_vtags = sorted({int(t) for arr in comm.allgather(vtags, INT, "volume tags") for t in arr})
    return domain, interior, all_vtags


# whole-file helpers ---------------------------------------------------------

@dataclass
class MeshData:
    nodes: dict[int, np.ndarray]
    elements: list[RawElement]

    def of_dim(self, dim: int) -> list[RawElement]:
        return [e for e in self.elements if e.dim == dim]


def parse_msh(path) -> MeshData:
    src = _Source(path)
    elements = list(_element_records(src))
    wanted = set()
    for lineno, text in src.section("Nodes"):
        try:
            wanted.add(int(text.split(maxsplit=1)[0]))
        except ValueError:
            raise MeshFormatError(f"{src.path}:{lineno}: malformed node record '{text}'") from None
    nodes = _read_vertices(src, wanted)
    missing = {v for e in elements for v in e.nodes} - set(nodes)
    if missing:
        _dangling(src.path, missing, elements)
    return MeshData(nodes, elements)


def write_msh(path, nodes: dict[int, np.ndarray], elements: list[tuple[int, int, int, list[int]]],
              sorted_order: bool = True):
    """Write an ASCII v2 file.

    ``elements`` holds (dim, order, physical tag, node ids); node ids are in
    internal grid order when ``sorted_order`` is set and are converted to GMSH
    order on output.
    """
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(nodes))]
    for vid in sorted(nodes):
        x = nodes[vid]
        lines.append(f"{vid} " + " ".join(repr(float(c)) for c in x))
    lines += ["$EndNodes", "$Elements", str(len(elements))]
    for i, (dim, order, tag, ids) in enumerate(elements, start=1):
        gm = to_gmsh(list(ids), dim, order) if sorted_order and dim > 0 else list(ids)
        etype = GMSH_TYPES[(dim, order)]
        lines.append(f"{i} {etype} 2 {tag} {tag} " + " ".join(str(v) for v in gm))
    lines += ["$EndElements", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
