"""A small dependency-tracked task graph for tile algorithms.

Tasks are inserted in sequential program order, each declaring the tiles it
reads and writes. A task depends on the last writer of every tile it
touches and, for tiles it writes, on every reader since that write. Any
execution honoring these edges computes the same values as the sequential
order, so results do not depend on the number of workers.
"""

import os
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Optional

from threadpoolctl import threadpool_limits


def default_workers() -> int:
    """Worker count from ``GEOSTAT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GEOSTAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class Task:
    tid: int
    fn: Callable
    args: tuple
    name: str
    deps: set = field(default_factory=set)
    dependents: list = field(default_factory=list)


class TaskGraph:
    def __init__(self):
        self.tasks: list = []
        self._last_writer: dict = {}
        self._readers: dict = {}

    def submit(
        self,
        fn: Callable,
        *args: Any,
        reads: Iterable[Hashable] = (),
        writes: Iterable[Hashable] = (),
        name: str = "",
    ) -> int:
        reads = tuple(reads)
        writes = tuple(writes)
        tid = len(self.tasks)
        deps = set()
        for key in reads + writes:
            if key in self._last_writer:
                deps.add(self._last_writer[key])
        for key in writes:
            deps.update(self._readers.get(key, ()))
        deps.discard(tid)
        task = Task(tid, fn, args, name or getattr(fn, "__name__", "task"), deps)
        for dep in deps:
            self.tasks[dep].dependents.append(tid)
        self.tasks.append(task)
        for key in reads:
            self._readers.setdefault(key, set()).add(tid)
        for key in writes:
            self._last_writer[key] = tid
            self._readers[key] = set()
        return tid

    def __len__(self) -> int:
        return len(self.tasks)

    def counts(self) -> dict:
        out: dict = {}
        for t in self.tasks:
            out[t.name] = out.get(t.name, 0) + 1
        return out

    def run(self, workers: Optional[int] = None) -> None:
        workers = default_workers() if workers is None else max(1, int(workers))
        if workers == 1:
            # insertion order is a topological order
            for t in self.tasks:
                t.fn(*t.args)
            return
        remaining = {t.tid: len(t.deps) for t in self.tasks}
        ready = [t.tid for t in self.tasks if not t.deps]
        # tile kernels already saturate a core; keep BLAS single-threaded per task
        with threadpool_limits(limits=1, user_api="blas"), ThreadPoolExecutor(max_workers=workers) as pool:
            running = {}
            while ready or running:
                while ready:
                    tid = ready.pop(0)
                    t = self.tasks[tid]
                    running[pool.submit(t.fn, *t.args)] = tid
                done, _ = wait(running, return_when=FIRST_COMPLETED)
                for fut in done:
                    tid = running.pop(fut)
                    exc = fut.exception()
                    if exc is not None:
                        for other in running:
                            other.cancel()
                        raise exc
                    for dep in self.tasks[tid].dependents:
                        remaining[dep] -= 1
                        if remaining[dep] == 0:
                            ready.append(dep)
