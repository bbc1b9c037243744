"""Command line driver: read a mesh on simulated ranks and run checks on it."""
from __future__ import annotations

import argparse
import sys
import tracemalloc
from pathlib import Path

import numpy as np

from .comm import CommError, RankFailure, SimulatedCluster
from .fixtures import data_path
from .grid import GridConstructionError, load_grid
from .meshio import MeshFormatError
from .quad import ConvergenceError
from .timing import TimingLog, format_memory_table, format_timing_table
from . import diagnostics
from .vtkout import EntityIndexField, WriterError, WriterOptions, write_grid

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_CONSTRUCTION = 4
EXIT_CONVERGENCE = 5
EXIT_IO = 6

TESTS = ("diagnostics", "gauss", "normal", "datahandle", "sorted", "boundary")


def _on_off(text: str) -> bool:
    t = text.lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


def _codim_mask(text: str) -> tuple[bool, bool, bool, bool]:
    if len(text) != 4 or set(text) - {"0", "1"}:
        raise argparse.ArgumentTypeError("codim mask is four 0/1 digits for codim 0..3, e.g. 1100")
    return tuple(c == "1" for c in text)


def _point(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("a point needs three comma separated coordinates")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvgrid", description=__doc__)
    p.add_argument("--mesh", default="ball_order3.msh",
                   help="GMSH 2 ASCII file; bare names of shipped meshes also work (default: %(default)s)")
    p.add_argument("--ranks", type=int, default=1, help="number of simulated ranks")
    p.add_argument("--ghosts", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--use-gmsh-index", type=_on_off, default=True, metavar="on|off",
                   help="reuse element numbers from the file as global indices")
    p.add_argument("--vtu-out", type=Path, metavar="DIR", help="write VTU/PVTU output here")
    p.add_argument("--refine", type=int, metavar="N", help="fixed virtual refinement for output")
    p.add_argument("--explode", type=float, default=0.0, metavar="F")
    p.add_argument("--magnify", type=float, default=0.0, metavar="F")
    p.add_argument("--codim", type=_codim_mask, default=(True, False, False, False), metavar="MASK",
                   help="codimensions written to VTU, e.g. 1100 for elements and faces")
    p.add_argument("--base64", action="store_true", help="base64 instead of ASCII VTU arrays")
    p.add_argument("--test", choices=TESTS, default="diagnostics")
    p.add_argument("--charge", type=_point, action="append", metavar="X,Y,Z",
                   help="charge position for the gauss test (repeatable)")
    p.add_argument("--volume-tag", type=int, help="gauss/normal/boundary: use the interior surface around this tag")
    p.add_argument("--surface-tag", type=int, help="gauss/normal/boundary: restrict to this interior surface tag")
    p.add_argument("--sorted-out", type=Path, default=Path("sorted_data.txt"), help="file for the sorted test")
    p.add_argument("--backend", choices=("threads", "sequential"), default="threads")
    p.add_argument("--memory", action="store_true", help="also report traced memory per stage")
    return p


def _resolve_mesh(name: str) -> Path:
    path = Path(name)
    if not path.exists() and data_path(path.name).exists() and path.parent == Path("."):
        return data_path(path.name)
    return path


def _rank_job(comm, args, mesh: Path):
    timing = TimingLog(track_memory=args.memory)
    grid = load_grid(comm, mesh, args.ghosts, args.use_gmsh_index, timing=timing)
    out: dict = {"timing": timing}
    interior = args.volume_tag is not None or args.surface_tag is not None
    db = not interior
    if args.test == "diagnostics":
        with timing.stage("Diagnostics: statistics"):
            out["stats"] = diagnostics.rank_statistics(grid)
    elif args.test == "gauss":
        charges = args.charge or [(0.0, 0.0, 0.0), (5.0, 5.0, 5.0)]
        with timing.stage("Diagnostics: gauss law"):
            out["flux"] = [diagnostics.gauss_flux(grid, q, db, args.volume_tag, args.surface_tag) for q in charges]
        out["charges"] = charges
    elif args.test == "normal":
        with timing.stage("Diagnostics: normal integral"):
            out["normal"] = diagnostics.normal_integral(grid, db, args.volume_tag, args.surface_tag)
    elif args.test == "datahandle":
        with timing.stage("Diagnostics: datahandle echo"):
            out["echo"] = diagnostics.echo_test(grid)
    elif args.test == "sorted":
        with timing.stage("Diagnostics: sorted output"):
            out["sorted"] = diagnostics.write_sorted_parallel_data(
                grid, lambda e: [grid.element_geometry(e).volume()], args.sorted_out)
    elif args.test == "boundary":
        with timing.stage("Diagnostics: boundary container"):
            out["boundary"] = diagnostics.boundary_complementarity(grid, db, args.volume_tag, args.surface_tag)
            out["normal"] = diagnostics.normal_integral(grid, db, args.volume_tag, args.surface_tag)
    if args.vtu_out is not None:
        opts = WriterOptions(explode=args.explode, magnify=args.magnify, write_codim=args.codim,
                             fixed_refinement=args.refine, encoding="base64" if args.base64 else "ascii")
        with timing.stage("VtkWriter: writing output"):
            out["vtu"] = write_grid(grid, args.vtu_out, mesh.stem, opts, {0: [EntityIndexField("elementIndex")]})
    return out


def _report(args, results) -> int:
    first = results[0]
    status = EXIT_OK
    if args.test == "diagnostics":
        print(f"{'rank':>4} {'elements':>9} {'ghosts':>7} {'PB faces':>9} {'DB faces':>9} {'IB faces':>9} "
              f"{'volume':>12} {'min vol':>11} {'max vol':>11} {'curvature':>10}")
        for r in results:
            s = r["stats"]
            print(f"{s.rank:>4} {s.elements:>9} {s.ghost_elements:>7} {s.process_boundary_faces:>9} "
                  f"{s.domain_boundary_faces:>9} {s.interior_boundary_faces:>9} {s.volume:12.6g} "
                  f"{s.min_volume:11.4g} {s.max_volume:11.4g} {s.mean_curvature:10.3g}")
        total = sum(r["stats"].volume for r in results)
        print(f"total elements {sum(r['stats'].elements for r in results)}, total volume {total:.12g}")
    elif args.test == "gauss":
        for q, f in zip(first["charges"], first["flux"]):
            print(f"charge at ({q[0]:g}, {q[1]:g}, {q[2]:g}): flux {f:.12g}  flux/(4 pi) {f / (4 * np.pi):.10f}")
    elif args.test in ("normal", "boundary"):
        vec, area = first["normal"]
        rel = float(np.linalg.norm(vec)) / area if area else float("nan")
        print(f"normal integral ({vec[0]:.3e}, {vec[1]:.3e}, {vec[2]:.3e}), area {area:.12g}, relative {rel:.3e}")
        if args.test == "boundary":
            for rank, r in enumerate(results):
                seen, total = r["boundary"]
                print(f"rank {rank}: local + container faces {seen}, surface faces {total}")
                if seen != total:
                    status = EXIT_CONSTRUCTION
    elif args.test == "datahandle":
        bad = 0
        for (codim, iface, direction), (n, fails) in sorted(first["echo"].items()):
            print(f"codim {codim} {iface:<29} {direction:<8} messages {n:>6} failures {fails}")
            bad += fails
        print("echo test", "passed" if bad == 0 else "FAILED")
        if bad:
            status = EXIT_CONSTRUCTION
    elif args.test == "sorted":
        print(f"sorted data written to {first['sorted']}")
    if args.vtu_out is not None:
        print(f"VTU output in {args.vtu_out}")
    print()
    logs = [r["timing"] for r in results]
    print(format_timing_table(logs))
    if args.memory:
        print()
        print(format_memory_table(logs))
    return status


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.ranks < 1:
        parser.error("--ranks must be at least 1")
    mesh = _resolve_mesh(args.mesh)
    if args.memory:
        tracemalloc.start()
    try:
        results = SimulatedCluster(args.ranks, args.backend).run(_rank_job, args, mesh)
    except RankFailure as exc:
        err = exc.error
        print(f"error on rank {exc.rank}: {err}", file=sys.stderr)
        return _exit_code(err)
    finally:
        if args.memory:
            tracemalloc.stop()
    return _report(args, results)


def _exit_code(err: BaseException) -> int:
    if isinstance(err, MeshFormatError):
        return EXIT_PARSE
    if isinstance(err, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(err, (GridConstructionError, CommError)):
        return EXIT_CONSTRUCTION
    if isinstance(err, WriterError):
        return EXIT_USAGE
    if isinstance(err, OSError):
        return EXIT_IO
    raise err


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
