import re
import subprocess
import sys

import numpy as np
import pytest

from curvgrid import cli
from curvgrid.comm import SimulatedCluster
from curvgrid.diagnostics import sorted_parallel_rows
from curvgrid.fixtures import data_path
from curvgrid.geom import CurvilinearGeometry
from curvgrid.grid import GridConstructionError, load_grid
from curvgrid.grid import construct
from curvgrid.meshio import STAGE_BOUNDARY, STAGE_COUNT, STAGE_ELEMENTS, STAGE_INSERT, STAGE_PARTITION, \
    STAGE_SKIP, STAGE_VERTICES
from curvgrid.quad import ConvergenceError, IntegratorConfig, integrate_recursive

CONSTRUCTION_STAGES = [STAGE_SKIP, STAGE_COUNT, STAGE_PARTITION, STAGE_ELEMENTS, STAGE_BOUNDARY, STAGE_VERTICES,
                       STAGE_INSERT, construct.STAGE_ENTITIES, construct.STAGE_GLOBAL, construct.STAGE_GHOSTS,
                       construct.STAGE_INDEXSETS, construct.STAGE_COMMMAPS]


def run_cli(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def stats_rows(text):
    return [line.split() for line in text.splitlines() if re.match(r"^\s+\d+\s+\d+", line)]


def test_two_tet_on_two_ranks(capsys):
    code, out, _ = run_cli(capsys, "--mesh", "two_tet.msh", "--ranks", "2")
    assert code == 0
    rows = stats_rows(out)
    assert [(r[1], r[3]) for r in rows] == [("1", "1"), ("1", "1")]
    assert "total elements 2, total volume 0.5" in out


def test_reference_tet_volume(capsys):
    code, out, _ = run_cli(capsys, "--mesh", str(data_path("single_tet.msh")))
    assert code == 0
    total = float(re.search(r"total volume (\S+)", out).group(1))
    assert total == pytest.approx(1 / 6, rel=1e-10)


@pytest.mark.parametrize("test", cli.TESTS)
def test_timing_table_lists_each_stage_once(capsys, test, tmp_path):
    code, out, _ = run_cli(capsys, "--ranks", "2", "--test", test, "--sorted-out", str(tmp_path / "s.txt"),
                           "--vtu-out", str(tmp_path / "vtu"))
    assert code == 0
    table = out[out.index("Min time [s]"):].splitlines()[1:]
    names = [re.split(r"\s{2,}", line.strip(), maxsplit=2)[-1] for line in table if line.strip()]
    for stage in CONSTRUCTION_STAGES + ["VtkWriter: writing output"]:
        assert names.count(stage) == 1
    assert len(names) == len(set(names))
    for line in table:
        if line.strip():
            lo, hi = map(float, line.split()[:2])
            assert lo <= hi


def test_memory_table(capsys):
    code, out, _ = run_cli(capsys, "--mesh", "two_tet.msh", "--memory")
    assert code == 0 and "Min mem [kB]" in out


def test_gauss_default_charges(capsys):
    code, out, _ = run_cli(capsys, "--ranks", "3", "--test", "gauss")
    assert code == 0
    fluxes = [float(v) for v in re.findall(r"flux (\S+)", out)]
    assert fluxes[0] == pytest.approx(4 * np.pi, rel=1e-4)
    assert abs(fluxes[1]) < 1e-6


def test_gauss_interior_surface(capsys):
    code, out, _ = run_cli(capsys, "--ranks", "2", "--test", "gauss", "--volume-tag", "2", "--surface-tag", "102",
                           "--charge", "0.05,0.1,0", "--charge", "0.8,0,0")
    assert code == 0
    inside, outside = [float(v) for v in re.findall(r"flux (\S+)", out)]
    assert inside == pytest.approx(4 * np.pi, rel=1e-4) and abs(outside) < 1e-6


@pytest.mark.parametrize("mesh", ["single_tet.msh", "ball_order3.msh"])
def test_normal_integral_closed_surfaces(capsys, mesh):
    code, out, _ = run_cli(capsys, "--mesh", mesh, "--ranks", "2", "--test", "normal")
    assert code == 0
    assert float(re.search(r"relative (\S+)", out).group(1)) <= 1e-8


def test_open_face_normal_integral_is_not_zero():
    face = CurvilinearGeometry(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float), 1, 2)
    vec = integrate_recursive(2, face.codim1_normal_many, IntegratorConfig(), vectorized=True).value
    assert np.allclose(vec, [0, 0, -0.5])


def test_boundary_and_datahandle_tests_pass(capsys):
    code, out, _ = run_cli(capsys, "--ranks", "3", "--test", "boundary")
    assert code == 0 and out.count("local + container faces 32, surface faces 32") == 3
    code, out, _ = run_cli(capsys, "--ranks", "3", "--test", "datahandle", "--ghosts", "off")
    assert code == 0 and "echo test passed" in out


def test_sorted_output_independent_of_rank_count(capsys, tmp_path):
    texts = []
    for n in (1, 2, 4):
        path = tmp_path / f"s{n}.txt"
        assert run_cli(capsys, "--ranks", str(n), "--test", "sorted", "--sorted-out", str(path))[0] == 0
        texts.append(path.read_bytes())
    assert texts[0] == texts[1] == texts[2]
    rows = texts[0].decode().splitlines()
    gids = [int(r.split()[0]) for r in rows]
    assert gids == sorted(gids) and len(rows) == 64
    assert all(r.split()[1] == "1" for r in rows)


def test_sorted_rows_variable_length():
    def job(comm):
        g = load_grid(comm, data_path("tet_ring6.msh"), with_gmsh_index=False)
        empty = sorted_parallel_rows(g, lambda e: [])
        multi = sorted_parallel_rows(g, lambda e: [g.global_index(0, e)] * (g.global_index(0, e) % 3))
        return empty, multi
    empty, multi = SimulatedCluster(3).run(job)[0]
    assert empty == [f"{i} 0" for i in range(6)]
    assert multi[2] == "2 2 2 2" and multi[3] == "3 0"


def test_vtu_output(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "--mesh", "two_tet.msh", "--ranks", "2", "--vtu-out", str(tmp_path),
                           "--codim", "1100", "--explode", "0.2", "--refine", "2", "--base64")
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["two_tet.pvtu", "two_tet_rank0.vtu", "two_tet_rank1.vtu"]


def test_exit_codes(capsys, tmp_path):
    assert run_cli(capsys, "--mesh", str(tmp_path / "missing.msh"))[0] == cli.EXIT_IO
    bad = tmp_path / "bad.msh"
    bad.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n"
                   "$Elements\n1\n1 4 2 1 1 1 2 3\n$EndElements\n")
    code, _, err = run_cli(capsys, "--mesh", str(bad))
    assert code == cli.EXIT_PARSE and "bad.msh:10:" in err
    assert run_cli(capsys, "--vtu-out", str(tmp_path), "--explode", "2")[0] == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        cli.run(["--ranks", "0"])
    assert info.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        cli.run(["--codim", "12"])
    assert info.value.code == cli.EXIT_USAGE


def test_error_classes_map_to_distinct_codes():
    codes = {cli._exit_code(e) for e in (ConvergenceError("x", 0.0, 3), GridConstructionError("x"),
                                         OSError("x"), cli.MeshFormatError("x"))}
    assert codes == {cli.EXIT_CONVERGENCE, cli.EXIT_CONSTRUCTION, cli.EXIT_IO, cli.EXIT_PARSE}
    assert cli.EXIT_OK not in codes


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "curvgrid", "--mesh", "two_tet.msh", "--backend", "sequential"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "total elements 2" in res.stdout
