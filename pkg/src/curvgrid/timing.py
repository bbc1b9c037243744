"""Named wall-clock intervals and a process-local allocation probe."""
from __future__ import annotations

import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass, field


@dataclass
class TimingLog:
    durations: dict[str, float] = field(default_factory=dict)
    memory: dict[str, int] = field(default_factory=dict)
    track_memory: bool = False

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.durations[name] = self.durations.get(name, 0.0) + time.perf_counter() - start
            if self.track_memory and tracemalloc.is_tracing():
                self.memory[name] = tracemalloc.get_traced_memory()[0]

    def names(self) -> list[str]:
        return list(self.durations)


def format_timing_table(logs: list[TimingLog]) -> str:
    """Min and max of every stage across ranks, one line per stage, in first-seen order."""
    names: list[str] = []
    for log in logs:
        for n in log.durations:
            if n not in names:
                names.append(n)
    rows = [f"{'Min time [s]':>14} {'Max time [s]':>14}  Action"]
    for n in names:
        vals = [log.durations.get(n, 0.0) for log in logs]
        rows.append(f"{min(vals):14.6f} {max(vals):14.6f}  {n}")
    return "\n".join(rows)


def format_memory_table(logs: list[TimingLog]) -> str:
    names: list[str] = []
    for log in logs:
        for n in log.memory:
            if n not in names:
                names.append(n)
    rows = [f"{'Min mem [kB]':>14} {'Max mem [kB]':>14}  Action"]
    for n in names:
        vals = [log.memory.get(n, 0) / 1024 for log in logs]
        rows.append(f"{min(vals):14.1f} {max(vals):14.1f}  {n}")
    return "\n".join(rows)
