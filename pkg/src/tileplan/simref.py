"""Discrete-event reference simulator for schedule candidates.

Serves as the profiling proxy: it executes a candidate on the modeled
machine and reports per-core timelines, resource busy intervals, buffer
occupancy, byte counters, and the makespan.

Execution discipline, per core and per loop level with I iterations:
loads for iterations 0 and 1 are enqueued up front, iteration i's body
starts once its own inputs have arrived, and finishing body i enqueues the
store for i and the loads for i+2 (the freed double-buffer slot). Each core
owns one transfer engine that issues its queued transfers strictly in
order; bandwidth on shared links and DRAM channels is processor-shared,
with rates rebalanced at every start and finish event. Multicasts run as
chained stage transfers (barrier between stages) fed by a producer-core
fetch; they complete for every consumer when the last stage finishes.

Time is exact rational arithmetic and all ties break on creation order, so
runs are reproducible bit for bit.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .hwmodel import HardwareModel, dram_channel_of, multicast_route
from .kernelir import TileOp
from .perfmodel import CostEstimate, body_compute_time, op_compute_time
from .reuse import BroadcastPattern, MemOpPlan, ScheduleCandidate, broadcast_producers, usable_capacity


class SimError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Event kernel
# ---------------------------------------------------------------------------


class _Event:
    __slots__ = ("fired", "waiters")

    def __init__(self):
        self.fired = False
        self.waiters: list = []


class _Transfer:
    __slots__ = ("seq", "nbytes", "remaining", "resources", "rate", "done",
                 "label", "tag", "start_time")

    def __init__(self, seq: int, nbytes, resources: frozenset, label: str, tag: str):
        self.seq = seq
        self.nbytes = Fraction(nbytes)
        self.remaining = Fraction(nbytes)
        self.resources = resources
        self.rate = Fraction(0)
        self.done = _Event()
        self.label = label
        self.tag = tag
        self.start_time: Fraction = Fraction(0)


@dataclass(frozen=True)
class Interval:
    label: str
    start: Fraction
    end: Fraction
    tag: str
    nbytes: int = 0


class _Sim:
    """Minimal deterministic process/transfer kernel with processor-shared
    bandwidth: every active transfer runs at min over its resources of
    (nominal bandwidth / current sharers), rebalanced on each event."""

    def __init__(self, bandwidth: dict):
        self.bandwidth = {r: Fraction(bw) for r, bw in bandwidth.items()}
        self.now = Fraction(0)
        self.seq = itertools.count()
        self.ready: deque = deque()
        self.timers: list = []
        self.active: list[_Transfer] = []
        self.intervals: list[Interval] = []
        self.waiting = 0

    def spawn(self, gen):
        self.ready.append((next(self.seq), gen))

    def timer(self, duration) -> _Event:
        ev = _Event()
        if duration <= 0:
            ev.fired = True
        else:
            heapq.heappush(self.timers, (self.now + Fraction(duration), next(self.seq), ev))
        return ev

    def new_transfer(self, nbytes, resources: frozenset, label: str, tag: str) -> _Transfer:
        return _Transfer(next(self.seq), nbytes, resources, label, tag)

    def start_transfer(self, t: _Transfer):
        for r in t.resources:
            if r not in self.bandwidth:
                raise SimError(f"transfer on undeclared resource {r}")
        t.start_time = self.now
        if t.remaining == 0:
            self._complete(t)
            return
        self.active.append(t)
        self._rebalance()

    def fire(self, ev: _Event):
        ev.fired = True
        for gen in ev.waiters:
            self.waiting -= 1
            self.ready.append((next(self.seq), gen))
        ev.waiters.clear()

    def run(self):
        while True:
            while self.ready:
                _, gen = self.ready.popleft()
                self._step(gen)
            if not self.timers and not self.active:
                if self.waiting:
                    raise SimError(f"deadlock: {self.waiting} process(es) blocked with no pending work")
                return
            self._advance()

    def _step(self, gen):
        while True:
            try:
                ev = next(gen)
            except StopIteration:
                return
            if ev is None or ev.fired:
                continue
            ev.waiters.append(gen)
            self.waiting += 1
            return

    def _advance(self):
        candidates: list[tuple[Fraction, int]] = []
        if self.timers:
            candidates.append(self.timers[0][:2])
        for t in self.active:
            candidates.append((self.now + t.remaining / t.rate, t.seq))
        when = min(candidates)[0]
        dt = when - self.now
        self.now = when
        for t in self.active:
            t.remaining -= t.rate * dt
        finished = sorted((t for t in self.active if t.remaining == 0), key=lambda t: t.seq)
        for t in finished:
            self.active.remove(t)
            self._complete(t)
        if finished:
            self._rebalance()
        while self.timers and self.timers[0][0] == self.now:
            _, _, ev = heapq.heappop(self.timers)
            self.fire(ev)

    def _complete(self, t: _Transfer):
        self.intervals.append(Interval(t.label, t.start_time, self.now, t.tag, int(t.nbytes)))
        self.fire(t.done)

    def _rebalance(self):
        load: dict = {}
        for t in self.active:
            for r in t.resources:
                load[r] = load.get(r, 0) + 1
        for t in self.active:
            t.rate = min(self.bandwidth[r] / load[r] for r in t.resources)


def _wait_all(events: Iterable[_Event]):
    for ev in events:
        if not ev.fired:
            yield ev


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimTrace:
    makespan: Fraction
    intervals: tuple[Interval, ...]
    dram_bytes: int
    noc_bytes: tuple[tuple[str, int], ...]
    peak_l1_bytes: int
    compute_cycles: Fraction          # summed over all cores
    binding: str

    def to_csv(self) -> str:
        lines = ["resource,start_cycle,end_cycle,tag"]
        for iv in sorted(self.intervals, key=lambda i: (i.start, i.label, i.tag)):
            lines.append(f"{iv.label},{_fmt(iv.start)},{_fmt(iv.end)},{iv.tag}")
        return "\n".join(lines) + "\n"


def _fmt(x: Fraction) -> str:
    return str(int(x)) if x.denominator == 1 else f"{float(x):.4f}"


# ---------------------------------------------------------------------------
# Candidate simulation
# ---------------------------------------------------------------------------


class _CoreState:
    __slots__ = ("index", "tail", "loads")

    def __init__(self, index):
        self.index = index
        self.tail: Optional[_Event] = None      # engine serialization chain
        self.loads: dict = {}                   # (level, path) -> input events


class _BroadcastRun:
    __slots__ = ("done", "fetch", "submitted")

    def __init__(self):
        self.done = _Event()
        self.fetch: Optional[_Transfer] = None
        self.submitted = False


def simulate(candidate: ScheduleCandidate, hw: HardwareModel, *,
             reserved_fraction: float = 0.1) -> SimTrace:
    """Execute one capacity-valid candidate and return its trace."""
    nest = candidate.nest
    units = hw.cores.units if hw.cores else ()
    if not units:
        raise SimError("intra-core compute layer required")
    body_cycles, _ = body_compute_time(nest.kernel.ops, units)

    usable = usable_capacity(hw, reserved_fraction)
    peak = sum(p.alloc_bytes for p in candidate.plans)
    if peak > usable:
        worst = max(candidate.plans, key=lambda p: p.alloc_bytes)
        raise SimError(f"buffer overflow: {peak}B reserved exceeds usable {usable}B "
                       f"(largest allocation: {worst.access_id} = {worst.alloc_bytes}B)")

    dram = hw.dram_memory()
    if dram is None:
        raise SimError("memory layer with DRAM channels required")

    bandwidth: dict = {}
    for ch in range(hw.dram_channel_count()):
        bandwidth[("dram", ch)] = dram.port_bandwidth
    for net in hw.interconnects:
        for link in hw.links_of(net):
            bandwidth[("link", net.name, link)] = net.link_bandwidth

    sim = _Sim(bandwidth)
    active = nest.active_cores(hw)
    cores = {c: _CoreState(c) for c in active}
    noc_counter: dict[str, int] = {}

    temporal = nest.temporal_loops()
    T = len(temporal)
    # Levels outer to inner; a leading virtual level holds fully hoisted
    # transfers. Loads at hoist position p issue at level depth T - p.
    levels: list[tuple[int, list[MemOpPlan], list[MemOpPlan]]] = []
    for depth in range(T + 1):
        pos = T - depth
        plans = [p for p in candidate.plans if p.hoist == pos]
        extent = 1 if depth == 0 else temporal[depth - 1][1]
        levels.append((extent,
                       [p for p in plans if p.direction == "load"],
                       [p for p in plans if p.direction == "store"]))
    innermost = len(levels) - 1

    core_dims = list(hw.cores.dims)
    bcast_runs: dict = {}

    def slab_of(pattern: BroadcastPattern, core) -> tuple:
        bdims = {core_dims.index(d) for d in pattern.dims()}
        return tuple(v for i, v in enumerate(core) if i not in bdims)

    def get_run(plan: MemOpPlan, path: tuple, core) -> _BroadcastRun:
        key = (plan.access_id, path, slab_of(plan.realization, core))
        if key not in bcast_runs:
            bcast_runs[key] = _BroadcastRun()
        return bcast_runs[key]

    def submit_engine(state: _CoreState, transfer: _Transfer):
        prev, state.tail = state.tail, transfer.done

        def job():
            if prev is not None and not prev.fired:
                yield prev
            sim.start_transfer(transfer)
            if not transfer.done.fired:
                yield transfer.done

        sim.spawn(job())

    def broadcast_proc(plan: MemOpPlan, run: _BroadcastRun, slab: tuple):
        pattern = plan.realization
        chains = _stage_chains(pattern, active, hw, slab)
        if not run.fetch.done.fired:
            yield run.fetch.done
        for (net_name, _), routes in chains:
            stage = []
            for route in routes:
                ids = frozenset(("link", net_name, l) for l in route)
                t = sim.new_transfer(plan.footprint_bytes, ids, f"net:{net_name}",
                                     f"bcast:{plan.access_id}:p{plan.hoist}")
                sim.start_transfer(t)
                stage.append(t)
                noc_counter[net_name] = noc_counter.get(net_name, 0) + plan.footprint_bytes * len(route)
            yield from _wait_all(t.done for t in stage)
        sim.fire(run.done)

    def enqueue_loads(state: _CoreState, depth: int, path: tuple):
        _, loads, _ = levels[depth]
        events: list[_Event] = []
        for plan in loads:
            if plan.realization == "global":
                ch = dram_channel_of(hw, state.index)
                t = sim.new_transfer(plan.footprint_bytes, frozenset({("dram", ch)}),
                                     f"core{state.index}", f"load:{plan.access_id}:p{plan.hoist}")
                submit_engine(state, t)
                events.append(t.done)
            else:
                run = get_run(plan, path, state.index)
                if not run.submitted and _is_producer(plan.realization, state.index, core_dims):
                    run.submitted = True
                    ch = dram_channel_of(hw, state.index)
                    fetch = sim.new_transfer(plan.footprint_bytes, frozenset({("dram", ch)}),
                                             f"core{state.index}", f"fetch:{plan.access_id}:p{plan.hoist}")
                    run.fetch = fetch
                    submit_engine(state, fetch)
                    sim.spawn(broadcast_proc(plan, run, slab_of(plan.realization, state.index)))
                events.append(run.done)
        state.loads[(depth, path)] = events

    def enqueue_stores(state: _CoreState, depth: int, path: tuple) -> list[_Event]:
        _, _, stores = levels[depth]
        events = []
        for plan in stores:
            ch = dram_channel_of(hw, state.index)
            t = sim.new_transfer(plan.footprint_bytes, frozenset({("dram", ch)}),
                                 f"core{state.index}", f"store:{plan.access_id}:p{plan.hoist}")
            submit_engine(state, t)
            events.append(t.done)
        return events

    def run_level(state: _CoreState, depth: int, path: tuple):
        extent, _, _ = levels[depth]
        enqueue_loads(state, depth, path + (0,))
        if extent > 1:
            enqueue_loads(state, depth, path + (1,))
        pending_stores: list[_Event] = []
        for i in range(extent):
            yield from _wait_all(state.loads.pop((depth, path + (i,)), []))
            if depth == innermost:
                if body_cycles > 0:
                    start = sim.now
                    ev = sim.timer(body_cycles)
                    if not ev.fired:
                        yield ev
                    sim.intervals.append(Interval(f"core{state.index}", start, sim.now, "compute"))
            else:
                yield from run_level(state, depth + 1, path + (i,))
            pending_stores.extend(enqueue_stores(state, depth, path + (i,)))
            if i + 2 < extent:
                enqueue_loads(state, depth, path + (i + 2,))
        yield from _wait_all(pending_stores)

    for core in active:
        sim.spawn(run_level(cores[core], 0, ()))
    sim.run()

    return _build_trace(sim, noc_counter, peak)


def _is_producer(pattern: BroadcastPattern, core, core_dims: list) -> bool:
    return all(core[core_dims.index(d)] == 0 for d in pattern.dims())


def _stage_chains(pattern: BroadcastPattern, active: Sequence[tuple[int, ...]],
                  hw: HardwareModel, slab: tuple):
    """Per-stage multicast routes for one slab of cores: stage k fans out
    along its dim once per value combination of the earlier stages' dims,
    with later-stage dims still pinned at the producer index."""
    core_dims = list(hw.cores.dims)
    bdims = [core_dims.index(d) for d in pattern.dims()]
    non_b = [i for i in range(len(core_dims)) if i not in bdims]
    slab_env = dict(zip(non_b, slab))
    out = []
    for k, (dim, net_name) in enumerate(pattern.stages):
        net = next(n for n in hw.interconnects if n.name == net_name)
        pos = core_dims.index(dim)
        later = set(bdims[k + 1:])
        combos = sorted({
            tuple(v for i, v in enumerate(c) if i != pos)
            for c in active
            if all(c[i] == 0 for i in later)
            and all(c[i] == slab_env[i] for i in non_b)
        })
        routes = [multicast_route(hw, net, pos, other) for other in combos]
        out.append(((net_name, net.link_bandwidth), routes))
    return out


def _build_trace(sim: _Sim, noc_counter: dict, peak: int) -> SimTrace:
    dram_bytes = 0
    compute_total = Fraction(0)
    compute_by_core: dict[str, Fraction] = {}
    inner_spans: list[tuple[Fraction, Fraction]] = []
    for iv in sim.intervals:
        kind = iv.tag.split(":", 1)[0]
        if kind in ("load", "store", "fetch"):
            dram_bytes += iv.nbytes
        if kind == "compute":
            compute_total += iv.end - iv.start
            compute_by_core[iv.label] = compute_by_core.get(iv.label, Fraction(0)) + (iv.end - iv.start)
        if iv.tag.endswith(":p0") and kind in ("load", "store", "fetch", "bcast"):
            inner_spans.append((iv.start, iv.end))
    inner_busy = _union_length(inner_spans)
    core_compute = max(compute_by_core.values(), default=Fraction(0))
    binding = "compute-bound" if core_compute >= inner_busy else "memory-bound"
    return SimTrace(
        makespan=sim.now,
        intervals=tuple(sim.intervals),
        dram_bytes=dram_bytes,
        noc_bytes=tuple(sorted(noc_counter.items())),
        peak_l1_bytes=peak,
        compute_cycles=compute_total,
        binding=binding,
    )


def _union_length(spans: list[tuple[Fraction, Fraction]]) -> Fraction:
    total = Fraction(0)
    end: Optional[Fraction] = None
    for s, e in sorted(spans):
        if end is None or s > end:
            total += e - s
            end = e
        elif e > end:
            total += e - end
            end = e
    return total


# ---------------------------------------------------------------------------
# Abstract pipeline (oracle for the loop overlap formula)
# ---------------------------------------------------------------------------


def simulate_pipeline(iterations: int, t_load: int, t_compute: int, t_store: int) -> int:
    """Event-simulate one double-buffered loop level on a single core with
    one transfer engine; the resulting makespan is what the analytical
    overlap formula is meant to reproduce."""
    if min(iterations, t_load, t_compute, t_store) < 0:
        raise ValueError("simulate_pipeline arguments must be non-negative")
    if iterations == 0:
        return 0
    sim = _Sim({("dma", 0): 1})
    tail: list[Optional[_Event]] = [None]

    def submit(nbytes: int, tag: str) -> _Transfer:
        t = sim.new_transfer(nbytes, frozenset({("dma", 0)}), "core0", tag)
        prev, tail[0] = tail[0], t.done

        def job():
            if prev is not None and not prev.fired:
                yield prev
            sim.start_transfer(t)
            if not t.done.fired:
                yield t.done

        sim.spawn(job())
        return t

    def program():
        loads = {0: submit(t_load, "load")}
        if iterations > 1:
            loads[1] = submit(t_load, "load")
        stores = []
        for i in range(iterations):
            ev = loads.pop(i).done
            if not ev.fired:
                yield ev
            ct = sim.timer(t_compute)
            if not ct.fired:
                yield ct
            stores.append(submit(t_store, "store").done)
            if i + 2 < iterations:
                loads[i + 2] = submit(t_load, "load")
        yield from _wait_all(stores)

    sim.spawn(program())
    sim.run()
    assert sim.now.denominator == 1
    return int(sim.now)


# ---------------------------------------------------------------------------
# Body scheduling oracle
# ---------------------------------------------------------------------------


def list_schedule_body(ops: Sequence[TileOp], units) -> int:
    """Greedy list schedule of the body DAG with one serialized queue per
    unit kind; independent kinds overlap. Cross-checks the segment formula
    on concrete bodies."""
    finish: dict[str, int] = {}
    kind_free: dict[str, int] = {}
    for op in ops:
        dur = op_compute_time(op, units)
        ready = max((finish.get(o, 0) for o in op.operands), default=0)
        start = max(ready, kind_free.get(op.kind, 0))
        finish[op.id] = start + dur
        kind_free[op.kind] = start + dur
    return max(finish.values(), default=0)


# ---------------------------------------------------------------------------
# Comparison and final selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompareReport:
    estimated: int
    simulated: Fraction
    rel_error: float
    est_binding: str
    sim_binding: str
    dram_match: bool
    noc_match: bool


def compare(est: CostEstimate, trace: SimTrace) -> CompareReport:
    """Relative model error against the simulated makespan, with the
    byte-count and binding-flag agreement alongside."""
    sim_total = trace.makespan
    err = abs(Fraction(est.total) - sim_total) / sim_total if sim_total else Fraction(0)
    return CompareReport(
        estimated=est.total,
        simulated=sim_total,
        rel_error=float(err),
        est_binding=est.binding,
        sim_binding=trace.binding,
        dram_match=est.traffic.dram_bytes == trace.dram_bytes,
        noc_match=dict(est.traffic.noc_bytes) == dict(trace.noc_bytes),
    )


def select_final(topk: Sequence[tuple[ScheduleCandidate, CostEstimate]], hw: HardwareModel,
                 *, reserved_fraction: float = 0.1):
    """Simulate the top k and pick the simulated-fastest (ties on id).

    Returns (winner candidate, rows of (id, estimated, simulated)).
    """
    if not topk:
        raise ValueError("select_final needs at least one candidate")
    rows = []
    for cand, est in topk:
        trace = simulate(cand, hw, reserved_fraction=reserved_fraction)
        rows.append((cand.id, est.total, trace.makespan))
    best_id = min(rows, key=lambda r: (r[2], r[0]))[0]
    winner = next(c for c, _ in topk if c.id == best_id)
    return winner, rows
