"""Discrete-event clock. Time is an integer count of simulated milliseconds."""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable

# Events at the same instant run by priority, then in scheduling order.
PRIO_CLIENT = 0
PRIO_LEDGER = 1
PRIO_DRIVER = 2


class EventLoop:
    def __init__(self, start: int = 0):
        self.now = start
        self._queue: list[tuple[int, int, int, Callable, tuple]] = []
        self._seq = itertools.count()
        self.processed = 0

    def schedule_at(self, when: int, fn: Callable, *args: Any, priority: int = PRIO_LEDGER) -> None:
        if when < self.now:
            raise ValueError(f"cannot schedule in the past ({when} < {self.now})")
        heapq.heappush(self._queue, (when, priority, next(self._seq), fn, args))

    def schedule(self, delay: int, fn: Callable, *args: Any, priority: int = PRIO_LEDGER) -> None:
        self.schedule_at(self.now + delay, fn, *args, priority=priority)

    def __len__(self) -> int:
        return len(self._queue)

    def step(self) -> bool:
        if not self._queue:
            return False
        when, _, _, fn, args = heapq.heappop(self._queue)
        self.now = when
        fn(*args)
        self.processed += 1
        return True

    def run(self, until: int | None = None) -> None:
        """Process events up to and including time ``until`` (or until empty)."""
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                self.now = max(self.now, until)
                return
            self.step()
        if until is not None:
            self.now = max(self.now, until)

    def run_while(self, condition: Callable[[], bool]) -> None:
        while condition() and self.step():
            pass
