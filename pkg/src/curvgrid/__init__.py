"""Parallel unstructured grids of curvilinear tetrahedra.

The submodules build on each other: ``poly`` (polynomial algebra),
``lagrange`` (interpolation on the reference simplex), ``quad``
(quadrature), ``geom`` (curvilinear entity geometry), ``meshio`` (GMSH
reading), ``part`` and ``comm`` (partitioning and simulated ranks),
``grid`` (distributed grid construction) and ``vtkout`` (output).
"""
from .comm import Communicator, SimulatedCluster, run_ranks
from .geom import CurvilinearGeometry
from .grid import CurvilinearGrid, GridFactory, load_grid
from .lagrange import interpolate, lagrange_basis
from .meshio import read_gmsh
from .poly import Polynomial, PolynomialVector
from .quad import ConvergenceError, IntegratorConfig, integrate_recursive, simplex_rule
from .vtkout import WriterOptions, write_grid

__all__ = [
    "Communicator", "ConvergenceError", "CurvilinearGeometry", "CurvilinearGrid", "GridFactory",
    "IntegratorConfig", "Polynomial", "PolynomialVector", "SimulatedCluster", "integrate_recursive",
    "interpolate", "lagrange_basis", "load_grid", "read_gmsh", "run_ranks", "simplex_rule",
    "WriterOptions", "write_grid",
]
