"""Clock abstraction so replay runs are bit-deterministic.

Live mode stamps events with wall-clock time. Replay mode swaps in a
logical counter clock: the Nth tick of any run is identical, which is what
makes event logs and persisted student models byte-comparable across runs.
"""

import itertools
import time


class SystemClock:
    def now(self) -> float:
        return time.time()


class LogicalClock:
    """Counter clock: ticks 0.0, 1.0, 2.0, ... regardless of wall time."""

    def __init__(self, start: float = 0.0, step: float = 1.0):
        self._counter = itertools.count()
        self._start = start
        self._step = step

    def now(self) -> float:
        return self._start + next(self._counter) * self._step


def clock_for_mode(mode: str):
    return LogicalClock() if mode == "replay" else SystemClock()
