import base64
import struct
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvgrid.comm import SimulatedCluster
from curvgrid.fixtures import data_path
from curvgrid.geom import CurvilinearGeometry
from curvgrid.grid import load_grid
from curvgrid.lagrange import simplex_grid_points
from curvgrid.vtkout import (
    EntityIndexField,
    GlobalField,
    VtuWriter,
    WriterError,
    WriterOptions,
    grid_writer,
    refinement_lattice,
    write_grid,
)

DTYPES = {"Float64": "<f8", "Int32": "<i4", "Int64": "<i8", "UInt8": "u1"}


def read_vtu(text):
    """Parse a piece into {array name: values} plus the points array under 'Points'."""
    root = ET.fromstring(text)
    piece = root.find("UnstructuredGrid/Piece")
    out = {"_n_points": int(piece.get("NumberOfPoints")), "_n_cells": int(piece.get("NumberOfCells"))}
    for arr in piece.iter("DataArray"):
        ncomp = int(arr.get("NumberOfComponents", 1))
        if arr.get("format") == "binary":
            raw = base64.b64decode(arr.text)
            (n,) = struct.unpack("<I", raw[:4])
            vals = np.frombuffer(raw[4:4 + n], dtype=DTYPES[arr.get("type")])
        else:
            vals = np.array((arr.text or "").split(), dtype=float if arr.get("type").startswith("Float") else int)
        out[arr.get("Name", "Points")] = vals.reshape(-1, ncomp) if ncomp > 1 else vals
    return out


def curved_triangle():
    nodes = simplex_grid_points(2, 2)
    x = np.column_stack([nodes, 0.2 * nodes[:, 0] * nodes[:, 1]])
    return CurvilinearGeometry(x, 2, 2)


def test_linear_triangle_single_cell():
    w = VtuWriter(WriterOptions(fixed_refinement=1))
    w.add_entity(CurvilinearGeometry(simplex_grid_points(2, 1), 1, 2), (5, 0, 0))
    assert (w.n_points, w.n_cells) == (3, 1)


def test_order2_triangle_four_cells():
    w = VtuWriter(WriterOptions())
    w.add_entity(curved_triangle(), (1, 0, 0))
    assert w.n_cells == 4 and w.n_points == 6


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_lattice_counts_and_volume(dim, n):
    pts, cells = refinement_lattice(dim, n)
    assert len(cells) == n ** dim
    assert len(pts) == len(simplex_grid_points(dim, n))
    vols = []
    for c in cells:
        m = pts[list(c[1:])] - pts[c[0]]
        vols.append(np.linalg.det(m) if dim > 1 else m[0, 0])
    assert np.all(np.array(vols) > 0)
    # determinants are d! times the cell volumes, which add up to 1/d!
    assert sum(vols) == pytest.approx(1.0, rel=1e-12)


def test_refinement_rules():
    assert WriterOptions().refinement(3) == 3
    assert WriterOptions(interpolate=False, n_discretization=5).refinement(3) == 4
    assert WriterOptions(fixed_refinement=2, n_discretization=7).refinement(5) == 2
    assert WriterOptions(interpolate=True, n_discretization=9).refinement(2) == 2


@pytest.mark.parametrize("kw", [dict(explode=1.0), dict(explode=-0.1), dict(magnify=-1), dict(n_discretization=1),
                                dict(write_codim=(True,)), dict(fixed_refinement=0), dict(encoding="zip")])
def test_bad_options(kw):
    with pytest.raises(WriterError):
        WriterOptions(**kw)


def test_duplicate_and_reserved_field_names():
    f = lambda x: 0.0  # noqa: E731
    with pytest.raises(WriterError):
        VtuWriter(fields={0: [GlobalField("a", f)], 1: [GlobalField("a", f)]})
    with pytest.raises(WriterError):
        VtuWriter(fields={0: [GlobalField("rank", f)]})


def test_explode_zero_is_bit_exact():
    geo = curved_triangle()
    plain, zero = VtuWriter(WriterOptions(fixed_refinement=3)), VtuWriter(WriterOptions(fixed_refinement=3, explode=0.0))
    plain.add_entity(geo, (1, 0, 0))
    zero.add_entity(geo, (1, 0, 0))
    assert plain.to_xml() == zero.to_xml()


def test_explode_shrinks_toward_center():
    geo = curved_triangle()
    a, b = VtuWriter(WriterOptions()), VtuWriter(WriterOptions(explode=0.5))
    a.add_entity(geo, (1, 0, 0))
    b.add_entity(geo, (1, 0, 0))
    pa, pb = read_vtu(a.to_xml())["Points"], read_vtu(b.to_xml())["Points"]
    assert np.allclose(pb - geo.center(), 0.5 * (pa - geo.center()))


def test_magnify_scales_boundary_only():
    geo = curved_triangle()
    w = VtuWriter(WriterOptions(magnify=0.5))
    w.add_entity(geo, (1, 0, 0), boundary=True)
    w.add_entity(geo, (1, 0, 0), boundary=False)
    pts = read_vtu(w.to_xml())["Points"]
    assert np.allclose(pts[:6], 1.5 * pts[6:])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.sampled_from([1, 2, 3]), st.booleans())
def test_xml_well_formed_and_counts(n, dim, b64):
    nodes = simplex_grid_points(dim, 2)
    geo = CurvilinearGeometry(np.column_stack([nodes, np.zeros((len(nodes), 3 - dim))]), 2, dim)
    w = VtuWriter(WriterOptions(fixed_refinement=n, encoding="base64" if b64 else "ascii"),
                  {3 - dim: [GlobalField("s", lambda x: float(x[0]))]})
    w.add_entity(geo, (4, 1, 2))
    d = read_vtu(w.to_xml())
    assert d["_n_cells"] == n ** dim and d["_n_points"] == len(simplex_grid_points(dim, n))
    assert d["Points"].shape == (d["_n_points"], 3)
    assert len(d["offsets"]) == d["_n_cells"] and d["offsets"][-1] == len(d["connectivity"])
    assert d["connectivity"].max() < d["_n_points"]
    assert np.all(d["physicalTag"] == 4) and np.all(d["partitionType"] == 1) and np.all(d["rank"] == 2)
    assert np.allclose(d["s"], d["Points"][:, 0])


def test_ascii_uses_full_precision():
    w = VtuWriter(WriterOptions(fixed_refinement=1))
    w.add_entity(CurvilinearGeometry(np.array([[0.1, 1 / 3, 0], [1, 0, 0]]), 1, 1), (0, 0, 0))
    assert "0.33333333333333331" in w.to_xml()


def test_field_absent_for_codim_is_nan():
    w = VtuWriter(WriterOptions(fixed_refinement=1), {1: [GlobalField("onfaces", lambda x: 1.0)]})
    w.add_entity(CurvilinearGeometry(simplex_grid_points(3, 1), 1, 3), (1, 0, 0))
    assert np.all(np.isnan(read_vtu(w.to_xml())["onfaces"]))


def _write_job(comm, directory, options, fields):
    g = load_grid(comm, data_path("ball_order3.msh"))
    paths = write_grid(g, directory, "ball", options, fields)
    counts = [g.n_entities(cd) for cd in range(4)]
    return [str(p) for p in paths], counts


@pytest.mark.parametrize("n_ranks", [1, 3])
def test_write_grid_pieces_and_master(tmp_path, n_ranks):
    opts = WriterOptions(write_codim=(True, True, False, False), fixed_refinement=2)
    res = SimulatedCluster(n_ranks).run(_write_job, tmp_path, opts, {0: [EntityIndexField()]})
    master = ET.parse(tmp_path / "ball.pvtu").getroot()
    pieces = [p.get("Source") for p in master.iter("Piece")]
    assert pieces == [f"ball_rank{r}.vtu" for r in range(n_ranks)]
    for r, (_, counts) in enumerate(res):
        d = read_vtu((tmp_path / pieces[r]).read_text())
        assert d["_n_cells"] == counts[0] * 8 + counts[1] * 4


def test_element_index_field_is_piecewise_constant(tmp_path):
    def job(comm):
        g = load_grid(comm, data_path("ball_order3.msh"))
        return g.n_entities(0), grid_writer(g, WriterOptions(), {0: [EntityIndexField("idx")]}).to_xml()
    (n, text), = SimulatedCluster(1).run(job)
    d = read_vtu(text)
    per_elem = len(simplex_grid_points(3, 3))
    idx = d["idx"].reshape(n, per_elem)
    assert np.all(idx == np.arange(n)[:, None])


def test_sinusoid_continuous_across_elements():
    field = GlobalField("wave", lambda x: np.sin(3 * np.asarray(x)), 3)

    def job(comm):
        g = load_grid(comm, data_path("ball_order3.msh"))
        return grid_writer(g, WriterOptions(fixed_refinement=4), {0: [field]}).to_xml()
    values = {}
    for text in SimulatedCluster(2).run(job):
        d = read_vtu(text)
        for x, v in zip(d["Points"], d["wave"]):
            key = tuple(np.round(x, 9))
            if key in values:
                assert np.abs(values[key] - v).max() <= 1e-9
            values[key] = v
            assert np.allclose(v, np.sin(3 * x), atol=1e-12)
