from itertools import combinations

import numpy as np
import pytest

from curvgrid.comm import SimulatedCluster
from curvgrid.fixtures import data_path, single_triangle_order2
from curvgrid.lagrange import corner_indices
from curvgrid.gmshnumbering import RENUMBER, generate_renumbering, inverse, to_gmsh, to_sorted
from curvgrid.meshio import MeshFormatError, parse_msh, read_gmsh, write_msh

from tables import PRINTED_RENUMBERING


class RecordingSink:
    def __init__(self):
        self.vertices = []
        self.global_ids = []
        self.elements = []
        self.segments = []
        self.tags = None

    def set_tags(self, volume, domain, interior):
        self.tags = (volume, domain, interior)

    def insert_vertex(self, pos, global_index):
        self.vertices.append(np.asarray(pos))
        self.global_ids.append(global_index)
        return len(self.vertices) - 1

    def insert_element(self, dim, vertices, order, physical_tag, gmsh_index=None):
        assert all(0 <= v < len(self.vertices) for v in vertices)
        self.elements.append((dim, [self.global_ids[v] for v in vertices], order, physical_tag, gmsh_index))

    def insert_boundary_segment(self, dim, vertices, order, physical_tag, is_domain_boundary):
        assert all(0 <= v < len(self.vertices) for v in vertices)
        self.segments.append((dim, [self.global_ids[v] for v in vertices], order, physical_tag, is_domain_boundary))


def read_on(n_ranks, path, partition=True):
    def job(comm):
        sink = RecordingSink()
        summary = read_gmsh(path, sink, comm, partition=partition)
        return sink, summary
    return SimulatedCluster(n_ranks).run(job)


def corners_of(record):
    dim, ids = record[0], record[1]
    return frozenset(ids[i] for i in corner_indices(dim, record[2]))


def test_two_tet_counts():
    (sink, summary), = read_on(1, data_path("two_tet.msh"))
    assert len(sink.elements) == 2
    assert len(sink.vertices) == 5
    assert len(sink.segments) == 6 and all(s[4] for s in sink.segments)
    faces = [frozenset(f) for e in sink.elements for f in combinations(e[1], 3)]
    shared = {f for f in faces if faces.count(f) == 2}
    assert len(shared) == 1
    assert summary.domain_boundary_tags == [101] and summary.interior_boundary_tags == []
    assert summary.volume_tags == [1]


def test_triangle_order2_arrives_sorted(tmp_path):
    path = single_triangle_order2(tmp_path / "tri.msh")
    (sink, _), = read_on(1, path)
    (dim, ids, order, tag, gidx), = sink.elements
    assert (dim, order, tag, gidx) == (2, 2, 1, 1)
    gmsh_ids = [1, 2, 3, 4, 5, 6]
    assert ids == [gmsh_ids[k] for k in (0, 3, 1, 5, 4, 2)]
    assert np.allclose(sink.vertices[sink.global_ids.index(ids[1])], [0.5, -0.1, 0])


def test_shipped_triangle_fixture_matches_generator(tmp_path):
    path = single_triangle_order2(tmp_path / "tri.msh")
    assert path.read_text() == data_path("triangle_order2.msh").read_text()


@pytest.mark.parametrize("key", sorted(PRINTED_RENUMBERING))
def test_renumbering_matches_published_lists(key):
    assert list(RENUMBER[key]) == PRINTED_RENUMBERING[key]


@pytest.mark.parametrize("key", sorted(RENUMBER))
def test_renumbering_is_bijection_and_generated(key):
    perm = RENUMBER[key]
    assert sorted(perm) == list(range(len(perm)))
    assert tuple(generate_renumbering(*key)) == perm
    inv = inverse(perm)
    assert [perm[inv[g]] for g in range(len(perm))] == list(range(len(perm)))
    nodes = list(range(100, 100 + len(perm)))
    assert to_gmsh(to_sorted(nodes, *key), *key) == nodes


def test_renumbering_examples():
    assert RENUMBER[(3, 1)] == (0, 3, 1, 2)
    assert RENUMBER[(3, 2)] == (0, 7, 3, 4, 9, 1, 6, 8, 5, 2)
    assert len(RENUMBER[(2, 5)]) == 21


MESHES = ["two_tet.msh", "tet_ring3.msh", "tet_ring6.msh", "phantom_edge.msh", "ball_order3.msh"]


@pytest.mark.parametrize("name", MESHES)
@pytest.mark.parametrize("n_ranks", [1, 2, 3, 4])
def test_elements_distributed_exactly_once(name, n_ranks):
    path = data_path(name)
    data = parse_msh(path)
    elem_dim = max(e.dim for e in data.elements)
    want = sorted(e.gmsh_index for e in data.of_dim(elem_dim))
    results = read_on(n_ranks, path)
    got = sorted(e[4] for sink, _ in results for e in sink.elements)
    assert got == want
    for sink, summary in results:
        # vertices are exactly those used, segments only next to local elements
        used = {v for e in sink.elements for v in e[1]} | {v for s in sink.segments for v in s[1]}
        assert used == set(sink.global_ids)
        faces = {frozenset(f) for e in sink.elements for f in combinations(corners_of(e), elem_dim)}
        assert all(corners_of(s) in faces for s in sink.segments)
        assert summary.n_elements == len(sink.elements)


@pytest.mark.parametrize("n_ranks", [1, 3])
def test_tag_classification_by_global_parent_count(n_ranks):
    path = data_path("ball_order3.msh")
    data = parse_msh(path)
    parents = {}
    for e in data.of_dim(3):
        for f in combinations(sorted(e.corners), 3):
            parents[f] = parents.get(f, 0) + 1
    counts = {}
    for s in data.of_dim(2):
        counts.setdefault(s.physical_tag, set()).add(parents[tuple(sorted(s.corners))])
    want_domain = sorted(t for t, c in counts.items() if c == {1})
    want_interior = sorted(t for t, c in counts.items() if c == {2})
    assert want_domain and want_interior
    for sink, summary in read_on(n_ranks, path):
        assert summary.domain_boundary_tags == want_domain
        assert summary.interior_boundary_tags == want_interior
        for s in sink.segments:
            assert s[4] == (s[3] in want_domain)


def test_more_ranks_than_elements():
    results = read_on(4, data_path("two_tet.msh"), partition=False)
    sizes = [len(sink.elements) for sink, _ in results]
    assert sorted(sizes) == [0, 0, 1, 1]
    for sink, _ in results:
        if not sink.elements:
            assert sink.vertices == [] and sink.segments == []


def test_partition_off_reads_contiguous_blocks():
    results = read_on(2, data_path("tet_ring6.msh"), partition=False)
    first = [e[4] for e in results[0][0].elements]
    second = [e[4] for e in results[1][0].elements]
    assert max(first) < min(second)


def _write(tmp_path, text):
    p = tmp_path / "bad.msh"
    p.write_text(text)
    return p


HEADER = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n"


@pytest.mark.parametrize("elements,line,needle", [
    ("$Elements\n1\n1 99 2 1 1 1 2 3 4\n$EndElements\n", 13, "unknown"),
    ("$Elements\n1\n1 4 2 1 1 1 2 3\n$EndElements\n", 13, "needs 4 vertices"),
    ("$Elements\n1\n1 4 2 1 1 1 2 3 9\n$EndElements\n", 13, "undefined vertex 9"),
    ("$Elements\n1\n1 4 two 1 1 1 2 3 4\n$EndElements\n", 13, "malformed"),
])
def test_parse_errors_carry_line_numbers(tmp_path, elements, line, needle):
    path = _write(tmp_path, HEADER + elements)
    with pytest.raises(MeshFormatError, match=f"bad.msh:{line}:.*{needle}"):
        read_gmsh(path, RecordingSink())


def test_missing_section_is_an_error(tmp_path):
    with pytest.raises(MeshFormatError):
        read_gmsh(_write(tmp_path, HEADER), RecordingSink())
    with pytest.raises(MeshFormatError):
        read_gmsh(_write(tmp_path, HEADER + "$Elements\n1\n1 4 2 1 1 1 2 3 4\n"), RecordingSink())


def test_malformed_node_line(tmp_path):
    text = HEADER.replace("3 0 1 0", "3 0 one 0") + "$Elements\n1\n1 4 2 1 1 1 2 3 4\n$EndElements\n"
    with pytest.raises(MeshFormatError, match="bad.msh:8:"):
        read_gmsh(_write(tmp_path, text), RecordingSink())


def test_gaps_in_element_indices_are_kept(tmp_path):
    path = _write(tmp_path, HEADER + "$Elements\n1\n17 4 2 3 3 1 2 3 4\n$EndElements\n")
    (sink, _), = read_on(1, path)
    assert sink.elements[0][4] == 17 and sink.elements[0][3] == 3


def test_write_then_parse_round_trip(tmp_path):
    nodes = {i + 1: np.array(p, dtype=float) for i, p in enumerate(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.5, 0, 0], [0.5, 0.5, 0.1], [0, 0.5, 0]])}
    sorted_ids = [1, 4, 2, 6, 5, 3]
    write_msh(tmp_path / "rt.msh", nodes, [(2, 2, 7, sorted_ids)])
    data = parse_msh(tmp_path / "rt.msh")
    (e,), = [data.elements]
    assert e.sorted_nodes() == sorted_ids and e.physical_tag == 7
    assert list(e.nodes) == [1, 2, 3, 4, 5, 6]
