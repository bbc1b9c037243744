"""VTK XML output of curvilinear grids through virtual refinement.

Each entity is cut into ``n**dim`` linear sub-simplices of its local
lattice and the lattice points are sent through the curvilinear map.
Files are plain ``.vtu`` pieces, one per rank, plus a ``.pvtu`` master.
"""
from __future__ import annotations

import base64
import copy
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .geom import CurvilinearGeometry
from .grid.types import BoundaryType, EntityRef, PartitionKind
from .lagrange import simplex_grid_enumerate

VTK_CELL_TYPE = {0: 1, 1: 3, 2: 5, 3: 10}  # vertex, line, triangle, tetra
MAX_EXPLODE = 0.99


class WriterError(ValueError):
    pass


@dataclass
class WriterOptions:
    """Output settings.

    With ``interpolate`` the refinement follows the entity's own order and
    ``n_discretization`` is ignored; otherwise an entity is sampled with
    ``n_discretization`` points per edge.  ``fixed_refinement`` overrides
    both.  ``magnify`` scales boundary faces about the origin by
    ``1 + magnify``, so 0 leaves them in place.
    """

    n_discretization: int = 2
    interpolate: bool = True
    explode: float = 0.0
    magnify: float = 0.0
    write_codim: tuple[bool, bool, bool, bool] = (True, False, False, False)
    fixed_refinement: int | None = None
    encoding: str = "ascii"

    def __post_init__(self):
        if self.n_discretization < 2:
            raise WriterError("n_discretization must be at least 2")
        if not 0.0 <= self.explode <= MAX_EXPLODE:
            raise WriterError(f"explode must lie in [0, {MAX_EXPLODE}]")
        if self.magnify < 0:
            raise WriterError("magnify must be non-negative")
        if len(self.write_codim) != 4:
            raise WriterError("write_codim needs one flag per codimension 0..3")
        if self.fixed_refinement is not None and self.fixed_refinement < 1:
            raise WriterError("fixed_refinement must be at least 1")
        if self.encoding not in ("ascii", "base64"):
            raise WriterError(f"unknown encoding {self.encoding!r}")

    def refinement(self, order: int) -> int:
        if self.fixed_refinement is not None:
            return self.fixed_refinement
        if self.interpolate:
            return max(order, 1)
        return self.n_discretization - 1


class FieldFunctor(Protocol):
    """A point field sampled on the refinement vertices of each entity."""

    name: str
    n_components: int

    def init(self, entity: EntityRef, geometry: CurvilinearGeometry) -> None: ...
    def evaluate(self, local: np.ndarray) -> float | Sequence[float]: ...


class GlobalField:
    """Field given by a function of the global coordinate."""

    def __init__(self, name: str, fn: Callable[[np.ndarray], float | Sequence[float]], n_components: int = 1):
        self.name = name
        self.fn = fn
        self.n_components = n_components
        self._geo: CurvilinearGeometry | None = None

    def init(self, entity, geometry):
        self._geo = geometry

    def evaluate(self, local):
        return self.fn(self._geo.to_global(local))


class EntityIndexField:
    """Piecewise constant field holding the local index of the entity."""

    n_components = 1

    def __init__(self, name: str = "entityIndex"):
        self.name = name
        self._value = 0

    def init(self, entity, geometry):
        self._value = entity.local

    def evaluate(self, local):
        return float(self._value)


def refinement_lattice(dim: int, n: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Points (in local coordinates) and linear sub-simplices of an n-fold subdivision.

    There are ``n**dim`` sub-simplices, each positively oriented in local
    coordinates.  The cells come from cutting the cube lattice of the
    sheared coordinates ``(x + y + z, y + z, z)`` along its main diagonals.
    """
    if dim == 0:
        return np.zeros((1, 0)), [(0,)]
    ijk = [tuple(p) for p in simplex_grid_enumerate(dim, n)]
    index = {p: i for i, p in enumerate(ijk)}
    cells = []
    for base in itertools.product(range(n), repeat=dim):
        for perm in itertools.permutations(range(dim)):
            s = list(base)
            verts = [tuple(s)]
            for ax in perm:
                s[ax] += 1
                verts.append(tuple(s))
            # sheared coordinates must satisfy n >= s_0 >= s_1 >= ... >= 0
            if not all(all(v[a] >= v[a + 1] for a in range(dim - 1)) and v[0] <= n for v in verts):
                continue
            lat = [_unshear(v) for v in verts]
            ids = [index[p] for p in lat]
            if dim >= 2:
                m = np.array([np.subtract(lat[a], lat[0]) for a in range(1, dim + 1)], dtype=float)
                if np.linalg.det(m) < 0:
                    ids[1], ids[2] = ids[2], ids[1]
            cells.append(tuple(ids))
    return np.array(ijk, dtype=float) / n, cells


def _unshear(v):
    # inverse of (x, y, z) -> (x + y + z, y + z, z)
    out = [v[a] - v[a + 1] for a in range(len(v) - 1)] + [v[-1]]
    return tuple(out)


_LATTICE_CACHE: dict[tuple[int, int], tuple[np.ndarray, list[tuple[int, ...]]]] = {}


def _lattice(dim, n):
    key = (dim, n)
    if key not in _LATTICE_CACHE:
        _LATTICE_CACHE[key] = refinement_lattice(dim, n)
    return _LATTICE_CACHE[key]


def _check_fields(fields: Iterable[FieldFunctor]) -> list[FieldFunctor]:
    fields = list(fields)
    names = [f.name for f in fields]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise WriterError(f"duplicate field names: {', '.join(dup)}")
    reserved = {"physicalTag", "partitionType", "rank"} & set(names)
    if reserved:
        raise WriterError(f"field names clash with cell arrays: {', '.join(sorted(reserved))}")
    return fields


class VtuWriter:
    """Accumulates refined entities for one ``.vtu`` piece.

    Functors carry per-entity state between ``init`` and ``evaluate``, so
    each writer works on its own shallow copies; one set of functors can be
    handed to the writers of several ranks at once.
    """

    def __init__(self, options: WriterOptions | None = None, fields: dict[int, list[FieldFunctor]] | None = None):
        self.options = options or WriterOptions()
        self.fields = {c: [copy.copy(f) for f in v] for c, v in (fields or {}).items()}
        self.field_list = _check_fields(f for v in self.fields.values() for f in v)
        self._points: list[np.ndarray] = []
        self._conn: list[np.ndarray] = []
        self._sizes: list[int] = []
        self._types: list[int] = []
        self._tags: list[tuple[int, int, int]] = []
        self._point_data = {f.name: [] for f in self.field_list}
        self._n_points = 0

    @property
    def n_points(self) -> int:
        return self._n_points

    @property
    def n_cells(self) -> int:
        return len(self._types)

    def add_entity(self, geometry: CurvilinearGeometry, tag_set: tuple[int, int, int], order: int | None = None,
                   entity: EntityRef | None = None, boundary: bool = False) -> None:
        """Refine one entity; ``tag_set`` is (physical tag, partition type, rank)."""
        dim = geometry.mydim
        n = self.options.refinement(order if order is not None else geometry.order)
        local, cells = _lattice(dim, n)
        x = geometry.to_global_many(local)
        e = self.options.explode
        if e != 0.0:
            c = geometry.center()
            x = c + (1.0 - e) * (x - c)
        if boundary and self.options.magnify != 0.0:
            x = x * (1.0 + self.options.magnify)
        offset = self._n_points
        self._points.append(x)
        self._n_points += len(x)
        for cell in cells:
            self._conn.append(np.asarray(cell, dtype=np.int64) + offset)
            self._sizes.append(len(cell))
            self._types.append(VTK_CELL_TYPE[dim])
            self._tags.append(tuple(int(t) for t in tag_set))
        codim = 3 - dim if entity is None else entity.codim
        mine = {f.name for f in self.fields.get(codim, [])}
        for f in self.field_list:
            vals = np.full((len(local), f.n_components), np.nan)
            if f.name in mine:
                f.init(entity, geometry)
                for i, p in enumerate(local):
                    vals[i] = np.asarray(f.evaluate(p), dtype=float).reshape(f.n_components)
            self._point_data[f.name].append(vals)

    # output -----------------------------------------------------------------
    def _array(self, name: str | None, vtk_type: str, data: np.ndarray, ncomp: int = 1) -> str:
        attrs = f'type="{vtk_type}"'
        if name is not None:
            attrs += f' Name="{name}"'
        if ncomp != 1:
            attrs += f' NumberOfComponents="{ncomp}"'
        flat = np.asarray(data).ravel()
        if self.options.encoding == "base64":
            raw = flat.astype(_NUMPY_TYPE[vtk_type]).tobytes()
            text = base64.b64encode(struct.pack("<I", len(raw)) + raw).decode("ascii")
            return f'<DataArray {attrs} format="binary">{text}</DataArray>\n'
        if vtk_type.startswith("Float"):
            text = " ".join(format(float(v), ".17g") for v in flat)
        else:
            text = " ".join(str(int(v)) for v in flat)
        return f'<DataArray {attrs} format="ascii">{text}</DataArray>\n'

    def to_xml(self) -> str:
        pts = np.concatenate(self._points) if self._points else np.zeros((0, 3))
        conn = np.concatenate(self._conn) if self._conn else np.zeros(0, np.int64)
        offsets = np.cumsum(self._sizes, dtype=np.int64)
        tags = np.array(self._tags, dtype=np.int64).reshape(-1, 3)
        out = ['<?xml version="1.0"?>\n',
               '<VTKFile type="UnstructuredGrid" version="1.0" byte_order="LittleEndian" header_type="UInt32">\n',
               '<UnstructuredGrid>\n',
               f'<Piece NumberOfPoints="{len(pts)}" NumberOfCells="{len(self._types)}">\n',
               '<PointData>\n']
        for f in self.field_list:
            chunks = self._point_data[f.name]
            vals = np.concatenate(chunks) if chunks else np.zeros((0, f.n_components))
            out.append(self._array(f.name, "Float64", vals, f.n_components))
        out.append('</PointData>\n<CellData>\n')
        for col, name in enumerate(CELL_ARRAYS):
            out.append(self._array(name, "Int32", tags[:, col]))
        out.append('</CellData>\n<Points>\n')
        out.append(self._array(None, "Float64", pts, 3))
        out.append('</Points>\n<Cells>\n')
        out.append(self._array("connectivity", "Int64", conn))
        out.append(self._array("offsets", "Int64", offsets))
        out.append(self._array("types", "UInt8", np.array(self._types, dtype=np.uint8)))
        out.append('</Cells>\n</Piece>\n</UnstructuredGrid>\n</VTKFile>\n')
        return "".join(out)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_xml())
        return path


CELL_ARRAYS = ("physicalTag", "partitionType", "rank")
_NUMPY_TYPE = {"Float64": "<f8", "Int32": "<i4", "Int64": "<i8", "UInt8": "u1"}


def pvtu_xml(piece_names: Sequence[str], fields: Sequence[FieldFunctor]) -> str:
    out = ['<?xml version="1.0"?>\n',
           '<VTKFile type="PUnstructuredGrid" version="1.0" byte_order="LittleEndian" header_type="UInt32">\n',
           '<PUnstructuredGrid GhostLevel="0">\n<PPointData>\n']
    for f in fields:
        out.append(f'<PDataArray type="Float64" Name="{f.name}" NumberOfComponents="{f.n_components}"/>\n')
    out.append('</PPointData>\n<PCellData>\n')
    for name in CELL_ARRAYS:
        out.append(f'<PDataArray type="Int32" Name="{name}"/>\n')
    out.append('</PCellData>\n<PPoints>\n<PDataArray type="Float64" NumberOfComponents="3"/>\n</PPoints>\n')
    for name in piece_names:
        out.append(f'<Piece Source="{name}"/>\n')
    out.append('</PUnstructuredGrid>\n</VTKFile>\n')
    return "".join(out)


def piece_name(base_name: str, rank: int) -> str:
    return f"{base_name}_rank{rank}.vtu"


def grid_writer(grid, options: WriterOptions | None = None,
                fields: dict[int, list[FieldFunctor]] | None = None) -> VtuWriter:
    """Fill a writer with every local entity of the selected codimensions."""
    options = options or WriterOptions()
    writer = VtuWriter(options, fields)
    for codim in range(4):
        if not options.write_codim[codim]:
            continue
        for i in range(grid.n_entities(codim)):
            ent = grid.entity(codim, i)
            tag = grid.physical_tag(codim, i)
            boundary = codim == 1 and grid.face_btype[i] != BoundaryType.NONE
            writer.add_entity(grid.entity_geometry(codim, i),
                              (-1 if tag is None else tag, int(ent.kind), grid.rank),
                              grid.entity_order(codim, i), ent, boundary)
    return writer


def write_grid(grid, directory, base_name: str, options: WriterOptions | None = None,
               fields: dict[int, list[FieldFunctor]] | None = None) -> list[Path]:
    """Collective: every rank writes its piece, then rank 0 writes the master file."""
    directory = Path(directory)
    comm = grid.comm
    writer = grid_writer(grid, options, fields)
    if comm.rank == 0:
        directory.mkdir(parents=True, exist_ok=True)
    comm.barrier()
    paths = [writer.write(directory / piece_name(base_name, comm.rank))]
    comm.barrier()
    if comm.rank == 0:
        master = directory / f"{base_name}.pvtu"
        master.write_text(pvtu_xml([piece_name(base_name, r) for r in range(comm.size)], writer.field_list))
        paths.append(master)
    return paths


def partition_kind_name(code: int) -> str:
    return PartitionKind(code).name
