"""Typed task DAG for the multi-level factorization, an asynchronous
executor, and a simulated multi-process distribution with communication
accounting.

Per level there is one diagonal-product and one partial-factor task per
node and one merge per parent; a single root task closes the graph.  The
only cross-task edges are produced by the merge step, so a merge can fire
as soon as its two children finish, independent of the rest of its level.

Execution is shared memory on a worker pool.  The simulated "process"
distribution is pure accounting: block rows are owned round-robin at the
leaf level, every merged parent inherits its left child's owner, and a
transfer event is recorded for every dependency edge whose endpoints
resolve to different owners.
"""

from __future__ import annotations

import heapq
import json
import random
import threading
import time
from dataclasses import dataclass, field

from .construct import HssMatrix
from .factor import (UlvFactors, assemble_factors, run_diag_product,
                     run_merge, run_partial_factor, run_root_factor)

__all__ = [
    "TaskKind",
    "Task",
    "TaskGraph",
    "OwnerMap",
    "CommTrace",
    "TaskRecord",
    "ExecutionStats",
    "TaskFailure",
    "build_dag",
    "assign_owners",
    "execute",
    "simulate_comm",
    "export_schedule_jsonl",
    "export_comm_csv",
]


class TaskKind:
    DIAG_PRODUCT = "DiagProduct"
    PARTIAL_FACTOR = "PartialFactor"
    MERGE = "Merge"
    ROOT_FACTOR = "RootFactor"


_KIND_ORDER = {
    TaskKind.DIAG_PRODUCT: 0,
    TaskKind.PARTIAL_FACTOR: 1,
    TaskKind.MERGE: 2,
    TaskKind.ROOT_FACTOR: 3,
}


@dataclass(frozen=True)
class Task:
    """One factorization step; ``deps`` are ids that must finish first."""

    id: str
    kind: str
    level: int
    node: int
    deps: frozenset
    owner: int = 0

    def priority(self) -> tuple:
        # Merges feed the level above; rank them with it so the path
        # toward the root drains first on ties.
        level = self.level - 1 if self.kind == TaskKind.MERGE else self.level
        return (level, _KIND_ORDER[self.kind], self.node)


@dataclass
class TaskGraph:
    max_level: int
    tasks: dict

    def __len__(self) -> int:
        return len(self.tasks)

    def dependents(self) -> dict:
        out = {tid: [] for tid in self.tasks}
        for task in self.tasks.values():
            for dep in task.deps:
                out[dep].append(task.id)
        return out

    def kind_counts(self) -> dict:
        counts: dict = {}
        for task in self.tasks.values():
            counts[task.kind] = counts.get(task.kind, 0) + 1
        return counts


def _dp_id(level, node):
    return f"dp:{level}:{node}"


def _pf_id(level, node):
    return f"pf:{level}:{node}"


def _mg_id(level, parent):
    return f"mg:{level}:{parent}"


ROOT_ID = "root"


def build_dag(h: HssMatrix) -> TaskGraph:
    """Task graph of the multi-level factorization of ``h``.

    Total task count is ``2*(2**(L+1) - 2) + (2**L - 1) + 1`` for
    ``L = max_level``: a diagonal product and a partial factor per node
    per level, a merge per parent, and one root factorization.
    """
    L = h.max_level
    tasks = {}
    for level in range(L, 0, -1):
        for node in range(1 << level):
            deps = frozenset() if level == L else frozenset({_mg_id(level + 1, node)})
            tid = _dp_id(level, node)
            tasks[tid] = Task(tid, TaskKind.DIAG_PRODUCT, level, node, deps)
            pid = _pf_id(level, node)
            tasks[pid] = Task(pid, TaskKind.PARTIAL_FACTOR, level, node,
                              frozenset({tid}))
        for parent in range(1 << (level - 1)):
            mid = _mg_id(level, parent)
            tasks[mid] = Task(mid, TaskKind.MERGE, level, parent,
                              frozenset({_pf_id(level, 2 * parent),
                                         _pf_id(level, 2 * parent + 1)}))
    tasks[ROOT_ID] = Task(ROOT_ID, TaskKind.ROOT_FACTOR, 0, 0,
                          frozenset({_mg_id(1, 0)}))
    return TaskGraph(L, tasks)


@dataclass(frozen=True)
class OwnerMap:
    """Simulated process ownership: (level, node) -> rank.

    Leaf nodes go round-robin by node index; every merged parent is owned
    by its left child's owner, so ancestors collapse onto the leftmost
    descendant leaf's rank.
    """

    nprocs: int
    max_level: int
    assignment: dict

    def owner_of(self, level: int, node: int) -> int:
        return self.assignment[(level, node)]

    def task_owner(self, task: Task) -> int:
        return self.assignment[(task.level, task.node)]


def assign_owners(g: TaskGraph, nprocs: int) -> OwnerMap:
    if nprocs < 1:
        raise ValueError("nprocs must be >= 1")
    L = g.max_level
    assignment = {}
    for node in range(1 << L):
        assignment[(L, node)] = node % nprocs
    for level in range(L - 1, -1, -1):
        for node in range(1 << level):
            assignment[(level, node)] = assignment[(level + 1, 2 * node)]
    return OwnerMap(nprocs, L, assignment)


@dataclass
class TaskRecord:
    task_id: str
    kind: str
    level: int
    node: int
    owner: int
    worker: int
    start_ns: int
    end_ns: int


@dataclass
class ExecutionStats:
    """Timings recovered from the recorded schedule."""

    workers: int
    records: list
    makespan_seconds: float
    per_kind_seconds: dict
    per_worker_busy_seconds: list
    max_concurrent: int

    @property
    def total_task_seconds(self) -> float:
        return sum(self.per_kind_seconds.values())


def _stats_from_records(records: list, workers: int) -> ExecutionStats:
    if not records:
        return ExecutionStats(workers, [], 0.0, {}, [0.0] * workers, 0)
    t0 = min(r.start_ns for r in records)
    t1 = max(r.end_ns for r in records)
    per_kind: dict = {}
    busy = [0.0] * workers
    events = []
    for r in records:
        dt = (r.end_ns - r.start_ns) / 1e9
        per_kind[r.kind] = per_kind.get(r.kind, 0.0) + dt
        busy[r.worker] += dt
        events.append((r.start_ns, 1))
        events.append((r.end_ns, -1))
    events.sort()
    live = peak = 0
    for _, step in events:
        live += step
        peak = max(peak, live)
    return ExecutionStats(workers, records, (t1 - t0) / 1e9, per_kind, busy, peak)


class TaskFailure(RuntimeError):
    """A task failed; transitively dependent tasks were cancelled."""

    def __init__(self, task: Task, cancelled: list, cause: BaseException):
        self.task = task
        self.cancelled = sorted(cancelled)
        self.cause = cause
        super().__init__(
            f"task {task.id} ({task.kind}, level {task.level}, node {task.node}) "
            f"failed: {cause}; cancelled {len(self.cancelled)} dependent task(s)"
        )


_TASK_BODY = {
    TaskKind.DIAG_PRODUCT: lambda h, res, t: run_diag_product(h, res, t.level, t.node),
    TaskKind.PARTIAL_FACTOR: lambda h, res, t: run_partial_factor(h, res, t.level, t.node),
    TaskKind.MERGE: lambda h, res, t: run_merge(h, res, t.level, t.node),
    TaskKind.ROOT_FACTOR: lambda h, res, t: run_root_factor(h, res),
}

_RESULT_KEY = {
    TaskKind.DIAG_PRODUCT: lambda t: ("dp", t.level, t.node),
    TaskKind.PARTIAL_FACTOR: lambda t: ("pf", t.level, t.node),
    TaskKind.MERGE: lambda t: ("mg", t.level, t.node),
    TaskKind.ROOT_FACTOR: lambda t: ("root",),
}


def execute(g: TaskGraph, h: HssMatrix, workers: int, owners: OwnerMap | None = None,
            shuffle_seed: int | None = None) -> tuple[UlvFactors, ExecutionStats]:
    """Run the task graph on a worker pool.

    Tasks start when and only when their dependencies completed; each
    writes a distinct result slot, so the assembled factors are bitwise
    identical for any worker count.  ``shuffle_seed`` randomizes ready-
    queue pops (scheduling stress for tests) without affecting results.
    A failing task cancels its transitive dependents and surfaces the
    originating error as :class:`TaskFailure`.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    dependents = g.dependents()
    remaining = {tid: len(t.deps) for tid, t in g.tasks.items()}
    results: dict = {}
    records: list = []
    ready: list = []
    rng = random.Random(shuffle_seed) if shuffle_seed is not None else None
    lock = threading.Lock()
    cond = threading.Condition(lock)
    state = {"pending": len(g.tasks), "failure": None}
    cancelled: set = set()

    for tid, count in remaining.items():
        if count == 0:
            heapq.heappush(ready, (g.tasks[tid].priority(), tid))

    def cancel_downstream(tid):
        stack = [tid]
        while stack:
            for nxt in dependents[stack.pop()]:
                if nxt not in cancelled:
                    cancelled.add(nxt)
                    state["pending"] -= 1
                    stack.append(nxt)

    def pop_ready():
        if rng is None:
            return heapq.heappop(ready)[1]
        idx = rng.randrange(len(ready))
        item = ready[idx]
        last = ready.pop()
        if idx < len(ready):
            ready[idx] = last
            heapq.heapify(ready)
        return item[1]

    def worker_loop(worker_id: int):
        while True:
            with cond:
                while not ready and state["pending"] > 0 and state["failure"] is None:
                    cond.wait()
                if state["failure"] is not None or (not ready and state["pending"] == 0):
                    cond.notify_all()
                    return
                tid = pop_ready()
            task = g.tasks[tid]
            start = time.perf_counter_ns()
            try:
                out = _TASK_BODY[task.kind](h, results, task)
            except Exception as exc:
                with cond:
                    state["pending"] -= 1
                    cancel_downstream(tid)
                    if state["failure"] is None:
                        state["failure"] = TaskFailure(task, list(cancelled), exc)
                    cond.notify_all()
                return
            end = time.perf_counter_ns()
            owner = owners.task_owner(task) if owners is not None else 0
            with cond:
                results[_RESULT_KEY[task.kind](task)] = out
                records.append(TaskRecord(task.id, task.kind, task.level, task.node,
                                          owner, worker_id, start, end))
                state["pending"] -= 1
                for nxt in dependents[tid]:
                    remaining[nxt] -= 1
                    if remaining[nxt] == 0 and nxt not in cancelled:
                        heapq.heappush(ready, (g.tasks[nxt].priority(), nxt))
                cond.notify_all()

    threads = [threading.Thread(target=worker_loop, args=(w,), daemon=True)
               for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if state["failure"] is not None:
        raise state["failure"] from state["failure"].cause
    factors = assemble_factors(h, results)
    return factors, _stats_from_records(records, workers)


@dataclass
class CommTrace:
    """Simulated inter-owner transfers, one event per cross-owner edge."""

    nprocs: int
    events: list  # (task_id, block_label, src, dst, entries)

    @property
    def total_entries(self) -> int:
        return sum(e[4] for e in self.events)

    def totals_by_pair(self) -> dict:
        out: dict = {}
        for _, _, src, dst, entries in self.events:
            ev, en = out.get((src, dst), (0, 0))
            out[(src, dst)] = (ev + 1, en + entries)
        return out

    def events_by_dst_level(self, g: TaskGraph) -> dict:
        out: dict = {}
        for task_id, _, _, _, _ in self.events:
            level = g.tasks[task_id].level
            out[level] = out.get(level, 0) + 1
        return out


def _edge_payload(h: HssMatrix, dep: Task) -> tuple[str, int]:
    """Label and entry count of the block a dependency edge transfers."""
    if dep.kind == TaskKind.DIAG_PRODUCT:
        w = h.node_width(dep.level, dep.node)
        return f"rotated_diag[{dep.level},{dep.node}]", w * w
    if dep.kind == TaskKind.PARTIAL_FACTOR:
        sk = h.skeleton_dim(dep.level, dep.node)
        return f"ss_remainder[{dep.level},{dep.node}]", sk * sk
    if dep.kind == TaskKind.MERGE:
        sk = h.skeleton_dim(dep.level, 2 * dep.node) + \
            h.skeleton_dim(dep.level, 2 * dep.node + 1)
        return f"merged_block[{dep.level - 1},{dep.node}]", sk * sk
    raise ValueError(f"unexpected dependency kind {dep.kind}")


def simulate_comm(g: TaskGraph, owners: OwnerMap, h: HssMatrix) -> CommTrace:
    """Record one transfer per dependency edge crossing an owner boundary.

    The payload is the block that flows along the edge, sized in matrix
    entries; with the left-child-owner rule the dominant transfers are the
    right children's skeleton remainders feeding each merge.
    """
    events = []
    for task in g.tasks.values():
        dst = owners.task_owner(task)
        for dep_id in sorted(task.deps):
            dep = g.tasks[dep_id]
            src = owners.task_owner(dep)
            if src != dst:
                label, entries = _edge_payload(h, dep)
                events.append((task.id, label, src, dst, entries))
    return CommTrace(owners.nprocs, events)


def export_schedule_jsonl(stats: ExecutionStats, path):
    """One JSON record per executed task."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(stats.records, key=lambda r: r.start_ns):
            fh.write(json.dumps({
                "id": r.task_id, "kind": r.kind, "level": r.level, "node": r.node,
                "owner": r.owner, "start_ns": r.start_ns, "end_ns": r.end_ns,
                "worker": r.worker,
            }) + "\n")


def export_comm_csv(trace: CommTrace, path):
    """Aggregated transfers per (src, dst) rank pair."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("src,dst,entries,events\n")
        for (src, dst), (events, entries) in sorted(trace.totals_by_pair().items()):
            fh.write(f"{src},{dst},{entries},{events}\n")
