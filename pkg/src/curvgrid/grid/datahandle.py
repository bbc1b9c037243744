"""Data exchange between counterpart copies of entities on different ranks."""
from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from ..comm import INT
from .types import PROTOCOL, CommClass, Direction, EntityRef, GridConstructionError, Interface


class DataHandle(Protocol):
    """What :func:`communicate` needs from user code.

    ``gather`` must return exactly ``size(entity)`` values of ``dtype``;
    ``scatter`` receives the values sent by one counterpart at a time, in
    ascending order of the sending rank.
    """

    dtype: np.dtype

    def contains(self, codim: int) -> bool: ...
    def size(self, entity: EntityRef) -> int: ...
    def gather(self, entity: EntityRef) -> Sequence: ...
    def scatter(self, entity: EntityRef, data: np.ndarray, source: int) -> None: ...


def _targets(grid, codim: int, local: int, pairs) -> list[int]:
    src_cls = grid.entity_comm_class(codim, local)
    ranks = set()
    for a, b in pairs:
        if a == src_cls:
            ranks.update(grid.maps[codim][(a, b)].get(local, ()))
    return sorted(ranks)


def communicate(grid, handle: DataHandle, interface, direction, codim: int):
    """Send gathered entity data along the pairs the interface and direction allow."""
    interface = Interface(interface)
    direction = Direction(direction)
    pairs = PROTOCOL[(interface, direction)]
    comm = grid.comm
    dtype = np.dtype(getattr(handle, "dtype", np.float64))
    headers = [[] for _ in range(comm.size)]
    data = [[] for _ in range(comm.size)]
    if handle.contains(codim):
        for i in range(grid.n_entities(codim)):
            dests = _targets(grid, codim, i, pairs)
            if not dests:
                continue
            ent = grid.entity(codim, i)
            n = int(handle.size(ent))
            values = np.asarray(handle.gather(ent), dtype=dtype).ravel()
            if len(values) != n:
                raise GridConstructionError(
                    f"data handle gathered {len(values)} values for codim-{codim} entity "
                    f"{ent.global_index} but declared size {n}")
            src_cls = ent.comm_class.value
            for q in dests:
                headers[q].append([ent.global_index, n, _CLASS_CODE[src_cls]])
                data[q].append(values)
    hdr = comm.all_to_all([np.array(h, dtype=np.int64).reshape(-1, 3) for h in headers], INT,
                          f"communicate codim {codim} headers", width=3)
    payload = comm.all_to_all([np.concatenate(d) if d else np.zeros(0, dtype) for d in data], dtype,
                              f"communicate codim {codim} data")
    for src in range(comm.size):
        pos = 0
        for gid, n, code in hdr[src]:
            local = grid.global_lookup[codim].get(int(gid))
            if local is None:
                raise GridConstructionError(
                    f"rank {src} sent data for codim-{codim} entity {int(gid)} unknown on rank {grid.rank}")
            dst_cls = grid.entity_comm_class(codim, local)
            if (_CLASS_FROM_CODE[int(code)], dst_cls) not in pairs:
                raise GridConstructionError(
                    f"unexpected {_CLASS_FROM_CODE[int(code)].value}->{dst_cls.value} message from rank {src}")
            chunk = payload[src][pos:pos + int(n)]
            pos += int(n)
            handle.scatter(grid.entity(codim, local), chunk, src)


_CLASS_CODE = {"I": 0, "PB": 1, "G": 2}
_CLASS_FROM_CODE = {0: CommClass.I, 1: CommClass.PB, 2: CommClass.G}
