"""Process-pool map-reduce with deterministic ordered reduction.

All parallelism in the package flows through :class:`Executor`.  Tasks are
pure functions over read-only inputs; results are buffered and folded in
task-index order regardless of completion order, so a reduction over
floating-point values is bitwise identical for any worker count.

BLAS thread pools are pinned to a single thread in the parent and in every
worker the first time an executor is created: the executor owns the
parallelism, and per-operation BLAS threading would otherwise make results
depend on the machine and oversubscribe the cores.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .errors import ConfigError, TaskError

__all__ = ["ExecutorConfig", "Executor", "assign_groups", "WORKERS_ENV_VAR"]

# Environment variable mirrored by the CLI's --workers flag (flag wins).
WORKERS_ENV_VAR = "HGP_WORKERS"

_BLAS_CONTROLLER = None


def _pin_blas_threads():
    """Limit BLAS pools to one thread; keeps results worker-count invariant."""
    global _BLAS_CONTROLLER
    if _BLAS_CONTROLLER is None:
        from threadpoolctl import threadpool_limits

        _BLAS_CONTROLLER = threadpool_limits(limits=1)


def _worker_init():
    _pin_blas_threads()


def _run_chunk(chunk):
    """Run a chunk of (index, fn, args) triples; never raises.

    Returns a list of (index, ok, payload) where payload is the result or
    the exception.  Exceptions are contained so the parent can attribute
    them to a task index.
    """
    out = []
    for index, fn, args in chunk:
        try:
            out.append((index, True, fn(*args)))
        except BaseException as exc:  # noqa: BLE001 - reported with task index
            out.append((index, False, exc))
    return out


def default_workers() -> int:
    """Worker count from the environment variable, else the CPU count."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


@dataclass
class ExecutorConfig:
    """workers: pool size (default: hardware parallelism); chunking: tasks
    per dispatch unit."""

    workers: int | None = None  # None means "use default_workers()"
    chunking: int = 1

    def __post_init__(self):
        if self.workers is None:
            self.workers = default_workers()
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.chunking < 1:
            raise ConfigError(f"chunking must be >= 1, got {self.chunking}")


class Executor:
    """A reusable fixed pool of worker processes.

    ``workers=1`` runs every task in the calling process through the same
    code path as the pool workers, so serial and parallel execution are
    interchangeable bit for bit.
    """

    def __init__(self, workers: int | None = None, chunking: int = 1):
        cfg = ExecutorConfig(workers=workers, chunking=chunking)
        self.workers = cfg.workers
        self.chunking = cfg.chunking
        self._pool = None
        _pin_blas_threads()

    def _ensure_pool(self) -> ProcessPoolExecutor:
        if self._pool is None:
            ctx_name = "fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn"
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers,
                mp_context=multiprocessing.get_context(ctx_name),
                initializer=_worker_init,
            )
        return self._pool

    def map(self, fn, items, chunking: int | None = None) -> list:
        """Apply ``fn`` to every item; results in input order.

        The first failing task (in task order) cancels any not-yet-started
        dispatch and is raised as :class:`TaskError` carrying its index.
        """
        triples = [(i, fn, (item,)) for i, item in enumerate(items)]
        return self._execute(triples, chunking)

    def map_reduce(self, tasks, reduce, chunking: int | None = None):
        """Run zero-argument ``tasks`` and fold the ordered result list.

        ``reduce`` receives the full list of results in task order
        (buffered reduction), e.g. ``sum`` for a deterministic total.
        """
        triples = [(i, task, ()) for i, task in enumerate(tasks)]
        return reduce(self._execute(triples, chunking))

    def starmap(self, fn, argtuples, chunking: int | None = None) -> list:
        triples = [(i, fn, tuple(args)) for i, args in enumerate(argtuples)]
        return self._execute(triples, chunking)

    def _execute(self, triples, chunking: int | None) -> list:
        if not triples:
            return []
        size = self.chunking if chunking is None else max(1, chunking)
        chunks = [triples[i : i + size] for i in range(0, len(triples), size)]
        if self.workers == 1 or len(triples) == 1:
            collected = [_run_chunk(chunk) for chunk in chunks]
        else:
            pool = self._ensure_pool()
            futures = [pool.submit(_run_chunk, chunk) for chunk in chunks]
            collected = []
            failed = False
            for fut in futures:
                if failed:
                    fut.cancel()
                    continue
                collected.append(fut.result())
                failed = any(not ok for _, ok, _ in collected[-1])
        results: dict = {}
        for chunk_result in collected:
            for index, ok, payload in chunk_result:
                if not ok:
                    raise TaskError(index, payload) from payload
                results[index] = payload
        return [results[i] for i in sorted(results)]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def assign_groups(num_workers: int, branching) -> list:
    """Recursively split the worker pool over the tree, one group per child.

    Returns, for each leaf in canonical order, the tuple of worker ids
    responsible for it.  Groups are nearly equal; once a subtree is down
    to a single worker, all its leaves run serially on that worker.  With
    fewer workers than children at a level, children share workers
    round-robin.  The mapping is a scheduling hint (it can seed the
    executor's chunking); correctness never depends on it.
    """
    if num_workers < 1:
        raise ConfigError(f"num_workers must be >= 1, got {num_workers}")
    branching = list(branching)

    def leaves_below(levels):
        count = 1
        for b in levels:
            count *= b
        return count

    def recurse(workers, levels):
        if not levels or len(workers) == 1:
            return [tuple(workers)] * leaves_below(levels)
        b = levels[0]
        if len(workers) >= b:
            base, extra = divmod(len(workers), b)
            parts, start = [], 0
            for i in range(b):
                stop = start + base + (1 if i < extra else 0)
                parts.append(workers[start:stop])
                start = stop
        else:
            parts = [(workers[i % len(workers)],) for i in range(b)]
        out = []
        for part in parts:
            out.extend(recurse(tuple(part), levels[1:]))
        return out

    return recurse(tuple(range(num_workers)), branching)
