"""Simulated message passing between ranks of one process.

Each rank runs a function in its own thread and talks to the others only
through collectives on a shared fabric.  A collective completes once every
rank has deposited its contribution, so results do not depend on thread
scheduling.  In ``sequential`` mode ranks additionally take turns in rank
order, one at a time; in ``threads`` mode they run freely.

All payloads are numpy arrays of a fixed record dtype and travel as
little-endian bytes.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

INT = np.dtype("<i8")
REAL = np.dtype("<f8")


class CommError(RuntimeError):
    pass


class CollectiveMismatchError(CommError):
    pass


class FabricAborted(CommError):
    pass


class RankFailure(RuntimeError):
    def __init__(self, rank: int, error: BaseException):
        super().__init__(f"rank {rank} failed: {error!r}")
        self.rank = rank
        self.error = error


def _encode(arr, dtype: np.dtype) -> bytes:
    a = np.ascontiguousarray(arr, dtype=dtype.newbyteorder("<"))
    return a.tobytes()


def _decode(buf: bytes, dtype: np.dtype, shape_tail: tuple[int, ...]) -> np.ndarray:
    a = np.frombuffer(buf, dtype=dtype.newbyteorder("<")).astype(dtype.newbyteorder("="))
    if shape_tail:
        a = a.reshape((-1,) + shape_tail)
    return a


@dataclass
class _Deposit:
    op: str
    signature: Any
    payload: Any


class Fabric:
    def __init__(self, size: int, mode: str = "threads", trace: bool = False):
        if size < 1:
            raise ValueError("need at least one rank")
        if mode not in ("threads", "sequential"):
            raise ValueError(f"unknown backend {mode!r}")
        self.size = size
        self.mode = mode
        self.trace_enabled = trace
        self.trace: list[str] = []
        self._cv = threading.Condition()
        self.reset()

    def reset(self):
        with self._cv:
            self._deposits: dict[int, _Deposit] = {}
            self._results: dict[int, Any] = {}
            self._generation = 0
            self._round = 0
            self._aborted: BaseException | None = None
            self._finished: set[int] = set()
            self._turn = 0

    # sequential turn handling
    def _next_turn(self, after: int) -> int:
        for k in range(1, self.size + 1):
            r = (after + k) % self.size
            if r not in self._finished and r not in self._deposits:
                return r
        return min((r for r in range(self.size) if r not in self._finished), default=0)

    def _wait_turn(self, rank: int):
        if self.mode != "sequential":
            return
        while self._turn != rank and self._aborted is None:
            self._cv.wait()
        self._check_abort()

    def _check_abort(self):
        if self._aborted is not None:
            raise FabricAborted(f"fabric aborted: {self._aborted!r}")

    def start(self, rank: int):
        with self._cv:
            self._wait_turn(rank)

    def finish(self, rank: int):
        with self._cv:
            self._finished.add(rank)
            if self._deposits and self._aborted is None:
                pending = sorted(self._deposits)
                self._abort(CommError(
                    f"rank {rank} returned while ranks {pending} wait in collective "
                    f"{self._deposits[pending[0]].op!r}"))
            if self.mode == "sequential":
                self._turn = self._next_turn(rank)
            self._cv.notify_all()

    def abort(self, error: BaseException):
        with self._cv:
            self._abort(error)

    def _abort(self, error: BaseException):
        if self._aborted is None:
            self._aborted = error
        self._cv.notify_all()

    def collective(self, rank: int, op: str, signature, payload, combine: Callable[[dict], dict]):
        with self._cv:
            self._check_abort()
            if self._finished:
                raise CommError(f"collective {op!r} entered after ranks {sorted(self._finished)} returned")
            self._deposits[rank] = _Deposit(op, signature, payload)
            gen = self._generation
            if len(self._deposits) == self.size:
                deps = self._deposits
                ops = {(d.op, repr(d.signature)) for d in deps.values()}
                if len(ops) != 1:
                    detail = ", ".join(f"rank {r}: {deps[r].op} {deps[r].signature}" for r in sorted(deps))
                    err = CollectiveMismatchError(f"collective mismatch in round {self._round}: {detail}")
                    self._abort(err)
                    raise err
                try:
                    self._results = combine({r: d.payload for r, d in deps.items()})
                except BaseException as exc:  # noqa: BLE001 - propagated to every rank
                    self._abort(exc)
                    raise
                self._deposits = {}
                self._round += 1
                self._generation += 1
                if self.mode == "sequential":
                    self._turn = min(r for r in range(self.size) if r not in self._finished)
                self._cv.notify_all()
            else:
                if self.mode == "sequential":
                    self._turn = self._next_turn(rank)
                    self._cv.notify_all()
                while self._generation == gen and self._aborted is None:
                    self._cv.wait()
                self._check_abort()
            self._wait_turn(rank)
            return self._results[rank]


class Communicator:
    """Per-rank handle onto a :class:`Fabric`."""

    def __init__(self, fabric: Fabric, rank: int):
        self.fabric = fabric
        self.rank = rank
        self.size = fabric.size

    def all_to_all(self, send: Sequence[np.ndarray], dtype=INT, tag: str = "",
                   width: int | None = None) -> list[np.ndarray]:
        """Exchange one array of ``dtype`` records with every rank (self included).

        With ``width`` set, every buffer is a (n, width) table and arrives as one.
        """
        dtype = np.dtype(dtype)
        if len(send) != self.size:
            raise CommError(f"all_to_all needs {self.size} buffers, got {len(send)}")
        tails = set()
        blobs = []
        for buf in send:
            a = np.asarray(buf)
            if a.size and not np.can_cast(a.dtype, dtype, casting="same_kind"):
                raise CommError(f"payload dtype {a.dtype} does not match declared {dtype}")
            a = np.asarray(a, dtype=dtype)
            if width is not None:
                a = a.reshape(-1, width)
            if a.ndim == 1 or a.size == 0:
                tail = ()
            else:
                tail = a.shape[1:]
            tails.add(tail)
            blobs.append(_encode(a, dtype))
        tails.discard(())
        if len(tails) > 1:
            raise CommError("all_to_all buffers must share a record shape")
        tail = tails.pop() if tails else ()
        fab = self.fabric
        src = self.rank

        def combine(pay):
            out = {}
            for dst in range(fab.size):
                recv = []
                for s in range(fab.size):
                    blob = pay[s][dst]
                    recv.append(blob)
                    if fab.trace_enabled and blob[1]:
                        fab.trace.append(f"{s} {dst} {len(blob[1])} {tag}")
                out[dst] = recv
            return out

        got = fab.collective(src, "all_to_all", (str(dtype), tag), [(tail, b) for b in blobs], combine)
        if width is not None:
            return [_decode(b, dtype, (width,)) for _, b in got]
        return [_decode(b, dtype, t) for t, b in got]

    def alltoallv(self, flat: np.ndarray, lengths: Sequence[int], dtype=INT, tag: str = ""):
        """Flat-buffer form: ``lengths[d]`` consecutive records go to rank d."""
        flat = np.asarray(flat, dtype=dtype)
        lengths = [int(n) for n in lengths]
        if sum(lengths) != len(flat):
            raise CommError("lengths do not add up to the buffer size")
        bounds = np.cumsum([0] + lengths)
        parts = [flat[bounds[d]:bounds[d + 1]] for d in range(self.size)]
        recv = self.all_to_all(parts, dtype, tag)
        lens = [len(r) for r in recv]
        out = np.concatenate(recv) if recv else np.zeros(0, dtype)
        return out, lens

    def neighbor_all_to_all(self, send: dict[int, np.ndarray], neighbors: Sequence[int], dtype=INT,
                            tag: str = "", width: int | None = None) -> dict[int, np.ndarray]:
        """Exchange with a declared neighbour set; the relation must be symmetric."""
        neighbors = sorted(set(int(n) for n in neighbors))
        extra = set(send) - set(neighbors)
        if extra:
            raise CommError(f"data addressed to non-neighbours {sorted(extra)}")
        nbr_lists = self.allgather_object(neighbors, tag=f"neighbors {tag}")
        for r, nl in enumerate(nbr_lists):
            for q in nl:
                if r not in nbr_lists[q]:
                    raise CommError(f"asymmetric neighbourhood: {r} lists {q} but not vice versa")
        bufs = [send.get(d, np.zeros(0, dtype)) if d in neighbors else np.zeros(0, dtype)
                for d in range(self.size)]
        recv = self.all_to_all(bufs, dtype, tag, width)
        return {q: recv[q] for q in neighbors}

    # small helpers built on all_to_all
    def allgather(self, arr, dtype=INT, tag: str = "allgather", width: int | None = None) -> list[np.ndarray]:
        a = np.asarray(arr, dtype=dtype)
        return self.all_to_all([a] * self.size, dtype, tag, width)

    def allgather_object(self, values: Sequence[int], tag: str = "allgather") -> list[list[int]]:
        return [list(map(int, r)) for r in self.allgather(np.asarray(list(values), dtype=INT), INT, tag)]

    def allreduce_sum(self, values, dtype=INT) -> np.ndarray:
        parts = self.allgather(np.atleast_1d(values), dtype)
        return np.sum(np.stack(parts), axis=0)

    def allreduce_max(self, values, dtype=REAL) -> np.ndarray:
        return np.max(np.stack(self.allgather(np.atleast_1d(values), dtype)), axis=0)

    def allreduce_min(self, values, dtype=REAL) -> np.ndarray:
        return np.min(np.stack(self.allgather(np.atleast_1d(values), dtype)), axis=0)

    def exscan_sum(self, values) -> np.ndarray:
        parts = np.stack(self.allgather(np.atleast_1d(values), INT))
        return parts[: self.rank].sum(axis=0) if self.rank else np.zeros(parts.shape[1], dtype=np.int64)

    def barrier(self):
        self.allgather(np.zeros(0, INT), INT, "barrier")


class SimulatedCluster:
    """A fixed set of ranks that can run several collective sessions in turn."""

    def __init__(self, size: int, mode: str = "threads", trace: bool = False):
        self.fabric = Fabric(size, mode, trace)
        self.comms = [Communicator(self.fabric, r) for r in range(size)]

    @property
    def size(self) -> int:
        return self.fabric.size

    @property
    def trace(self) -> list[str]:
        return self.fabric.trace

    def run(self, fn: Callable[..., Any], *args, **kwargs) -> list[Any]:
        """Call ``fn(comm, *args)`` on every rank; return per-rank results."""
        fab = self.fabric
        fab.reset()
        results: list[Any] = [None] * self.size
        errors: dict[int, BaseException] = {}

        def body(rank: int):
            try:
                fab.start(rank)
                results[rank] = fn(self.comms[rank], *args, **kwargs)
            except BaseException as exc:  # noqa: BLE001
                errors[rank] = exc
                fab.abort(exc)
            finally:
                fab.finish(rank)

        if self.size == 1:
            body(0)
        else:
            threads = [threading.Thread(target=body, args=(r,), daemon=True) for r in range(self.size)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if errors:
            primary = [r for r, e in errors.items() if not isinstance(e, FabricAborted)]
            rank = min(primary) if primary else min(errors)
            raise RankFailure(rank, errors[rank]) from errors[rank]
        return results


def run_ranks(size: int, fn: Callable[..., Any], *args, mode: str = "threads", **kwargs) -> list[Any]:
    return SimulatedCluster(size, mode).run(fn, *args, **kwargs)
