from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum


class PartitionKind(IntEnum):
    INTERIOR = 0
    DOMAIN_BOUNDARY = 1
    INTERIOR_BOUNDARY = 2
    PROCESS_BOUNDARY = 3
    GHOST = 4


class CommClass(str, Enum):
    """Coarse class used for communication: interior-like, process boundary, ghost."""

    I = "I"  # noqa: E741
    PB = "PB"
    G = "G"


def comm_class(kind: PartitionKind) -> CommClass:
    if kind == PartitionKind.PROCESS_BOUNDARY:
        return CommClass.PB
    if kind == PartitionKind.GHOST:
        return CommClass.G
    return CommClass.I


class BoundaryType(IntEnum):
    NONE = 0
    DOMAIN = 1
    INTERIOR = 2


class Interface(str, Enum):
    INTERIOR_BORDER_INTERIOR_BORDER = "InteriorBorder_InteriorBorder"
    INTERIOR_BORDER_ALL = "InteriorBorder_All"
    ALL_ALL = "All_All"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


_PB, _I, _G = CommClass.PB, CommClass.I, CommClass.G

# (source class, destination class) pairs that carry data
PROTOCOL: dict[tuple[Interface, Direction], frozenset[tuple[CommClass, CommClass]]] = {
    (Interface.INTERIOR_BORDER_INTERIOR_BORDER, Direction.FORWARD): frozenset({(_PB, _PB)}),
    (Interface.INTERIOR_BORDER_INTERIOR_BORDER, Direction.BACKWARD): frozenset({(_PB, _PB)}),
    (Interface.INTERIOR_BORDER_ALL, Direction.FORWARD): frozenset({(_PB, _PB), (_PB, _G), (_I, _G)}),
    (Interface.INTERIOR_BORDER_ALL, Direction.BACKWARD): frozenset({(_PB, _PB), (_G, _I), (_G, _PB)}),
    (Interface.ALL_ALL, Direction.FORWARD): frozenset(
        {(_PB, _PB), (_PB, _G), (_I, _G), (_G, _I), (_G, _PB), (_G, _G)}),
    (Interface.ALL_ALL, Direction.BACKWARD): frozenset(
        {(_PB, _PB), (_PB, _G), (_I, _G), (_G, _I), (_G, _PB), (_G, _G)}),
}

MAP_PAIRS = ((_PB, _PB), (_PB, _G), (_I, _G), (_G, _I), (_G, _PB), (_G, _G))


class GridConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EntityRef:
    """Lightweight view of a local entity handed to data handles and iterators."""

    codim: int
    local: int
    global_index: int
    kind: PartitionKind
    rank: int

    @property
    def comm_class(self) -> CommClass:
        return comm_class(self.kind)
