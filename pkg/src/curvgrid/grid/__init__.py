"""Distributed curvilinear tetrahedral grid."""
from .boundary import BoundaryContainer, BoundaryFace, build_boundary_container
from .core import CurvilinearGrid
from .datahandle import DataHandle, communicate
from .factory import GridFactory, load_grid
from .types import (
    PROTOCOL,
    BoundaryType,
    CommClass,
    Direction,
    EntityRef,
    GridConstructionError,
    Interface,
    PartitionKind,
    comm_class,
)

__all__ = [
    "PROTOCOL", "BoundaryContainer", "BoundaryFace", "BoundaryType", "CommClass", "CurvilinearGrid",
    "DataHandle", "Direction", "EntityRef", "GridConstructionError", "GridFactory", "Interface",
    "PartitionKind", "build_boundary_container", "load_grid", "comm_class", "communicate",
]
