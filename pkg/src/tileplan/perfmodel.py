"""Analytical time and traffic estimation for schedule candidates.

The model works from the innermost loop outward. The loop body is costed
per functional-unit kind (independent ops on different unit kinds overlap,
ops competing for one kind serialize). Each loop level then overlaps its
transfers with its body under double buffering:

    T(I) = (I-2) * max(T_load + T_store, T_compute)
         + max(T_load, T_compute) + max(T_store, T_compute)
         + T_load + T_store            for I >= 3,

with the pipeline-fill forms T(2) = max(T_l,T_c) + max(T_s,T_c) + T_l + T_s
and T(1) = T_l + T_c + T_s. Outer levels treat the whole inner aggregate as
their compute term. Transfers on disjoint resources run in parallel;
transfers sharing any link or DRAM channel time-share it, which the model
charges as the sum of their full-bandwidth times within each contention
group. Global accesses are charged to their DRAM channel only. Hop latency
is not modeled; everything is bandwidth-limited, and totals are clamped to
the compute and DRAM roofline lower bounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, prod
from typing import Iterable, Optional, Sequence

from .hwmodel import ComputeUnit, HardwareModel, dram_channel_of
from .kernelir import TileOp
from .mapper import MappedNest
from .reuse import BroadcastPattern, MemOpPlan, ScheduleCandidate, broadcast_producers, stage_link_sets


class ModelError(ValueError):
    """Raised when the hardware model lacks a layer the estimate needs."""


@dataclass(frozen=True)
class UnitTime:
    """Cycles each unit kind spends in one loop-body execution."""

    matrix: int = 0
    vector: int = 0
    scalar: int = 0

    def total_of(self, kind: str) -> int:
        return getattr(self, {"matmul": "matrix", "elementwise_vector": "vector", "scalar_op": "scalar"}[kind])


def _unit(units: Sequence[ComputeUnit], kind: str) -> ComputeUnit:
    for u in units:
        if u.kind == kind:
            return u
    raise ModelError(f"no {kind} unit declared for this core")


def op_compute_time(op: TileOp, units: Sequence[ComputeUnit]) -> int:
    """ceil(N / (U*r)) where N counts intrinsic invocations of the op's
    unit kind (matrix intrinsics, vector strips, or latency-weighted
    scalar ops)."""
    if op.kind == "matmul":
        unit = _unit(units, "matrix")
        m, k, n = unit.shape
        M, K, N = op.space
        intrinsics = ceil(M / m) * ceil(K / k) * ceil(N / n)
        return _ceil_div_rate(intrinsics, unit.count, unit.throughput)
    if op.kind == "elementwise_vector":
        unit = _unit(units, "vector")
        intrinsics = ceil(op.element_count() / unit.shape[0])
        return _ceil_div_rate(intrinsics, unit.count, unit.throughput)
    if op.kind == "scalar_op":
        unit = _unit(units, "scalar")
        weighted = op.element_count() * (unit.latency or 1)
        return _ceil_div_rate(weighted, unit.count, Fraction(1))
    raise ModelError(f"unknown op kind {op.kind}")


def _ceil_div_rate(n: int, count: int, rate: Optional[Fraction]) -> int:
    if n == 0:
        return 0
    return ceil(Fraction(n) / (count * (rate or Fraction(1))))


def body_compute_time(ops: Sequence[TileOp], units: Sequence[ComputeUnit]) -> tuple[int, UnitTime]:
    """Sum over dependency segments of the max across unit kinds, with
    same-kind ops inside a segment executing in sequence."""
    depth: dict[str, int] = {}
    for op in ops:  # ops arrive in definition order, so operands resolve
        ds = [depth[o] + 1 for o in op.operands if o in depth]
        depth[op.id] = max(ds, default=0)
    segments: dict[int, list[TileOp]] = {}
    for op in ops:
        segments.setdefault(depth[op.id], []).append(op)
    total = 0
    kind_totals = {"matmul": 0, "elementwise_vector": 0, "scalar_op": 0}
    for level in sorted(segments):
        per_kind: dict[str, int] = {}
        for op in segments[level]:
            t = op_compute_time(op, units)
            per_kind[op.kind] = per_kind.get(op.kind, 0) + t
            kind_totals[op.kind] += t
        total += max(per_kind.values(), default=0)
    return total, UnitTime(matrix=kind_totals["matmul"], vector=kind_totals["elementwise_vector"],
                           scalar=kind_totals["scalar_op"])


# ---------------------------------------------------------------------------
# Transfers and contention
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    """One serial phase of a transfer on one resource class."""

    resources: frozenset
    cycles: int
    label: str


@dataclass(frozen=True)
class TransferSpec:
    access_id: str
    direction: str
    nbytes: int
    components: tuple[Component, ...]

    def chain_cycles(self) -> int:
        """Serial completion of this transfer alone: the slowest DRAM phase
        plus every multicast stage in order."""
        dram = [c.cycles for c in self.components if c.label == "dram"]
        stages = [c.cycles for c in self.components if c.label != "dram"]
        return max(dram, default=0) + sum(stages)


@dataclass(frozen=True)
class ContentionGroup:
    transfers: tuple[str, ...]            # access ids
    resources: frozenset
    cycles: int                           # time-shared completion of the group
    effective_share: Fraction             # nominal fraction each transfer sees


def transfer_time(nbytes: int, effective_bw: Fraction | int) -> int:
    """Cycles to move nbytes at the given effective bandwidth."""
    if nbytes == 0:
        return 0
    return ceil(Fraction(nbytes) / Fraction(effective_bw))


def build_transfers(candidate: ScheduleCandidate, hw: HardwareModel,
                    plans: Iterable[MemOpPlan]) -> list[TransferSpec]:
    """Expand plans into per-issue transfer specs with concrete resources.

    Global accesses serialize all concurrently issuing cores on each DRAM
    channel; multicasts charge the producers' channels plus one component
    per stage over the stage's link set.
    """
    active = candidate.nest.active_cores(hw)
    dram = hw.dram_memory()
    if dram is None:
        raise ModelError("memory layer with DRAM channels required")
    ch_bw = dram.port_bandwidth
    out: list[TransferSpec] = []
    for plan in plans:
        comps: list[Component] = []
        F = plan.footprint_bytes
        if plan.realization == "global":
            per_channel: dict[int, int] = {}
            for core in active:
                ch = dram_channel_of(hw, core)
                per_channel[ch] = per_channel.get(ch, 0) + 1
            for ch in sorted(per_channel):
                comps.append(Component(frozenset({("dram", ch)}),
                                       per_channel[ch] * transfer_time(F, ch_bw), "dram"))
        else:
            pattern = plan.realization
            assert isinstance(pattern, BroadcastPattern)
            producers = broadcast_producers(pattern, active, hw)
            per_channel = {}
            for core in producers:
                ch = dram_channel_of(hw, core)
                per_channel[ch] = per_channel.get(ch, 0) + 1
            for ch in sorted(per_channel):
                comps.append(Component(frozenset({("dram", ch)}),
                                       per_channel[ch] * transfer_time(F, ch_bw), "dram"))
            for links, (dim, net_name) in zip(stage_link_sets(pattern, active, hw), pattern.stages):
                net = next(n for n in hw.interconnects if n.name == net_name)
                ids = frozenset(("link", net_name, l) for l in links)
                comps.append(Component(ids, transfer_time(F, net.link_bandwidth), f"stage:{dim}@{net_name}"))
        out.append(TransferSpec(plan.access_id, plan.direction, F, tuple(comps)))
    return out


def contention_groups(transfers: Sequence[TransferSpec], hw: HardwareModel) -> list[ContentionGroup]:
    """Connected components of the resource-overlap graph over transfers."""
    n = len(transfers)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict = {}
    for i, t in enumerate(transfers):
        for comp in t.components:
            for r in comp.resources:
                if r in owner:
                    parent[find(i)] = find(owner[r])
                else:
                    owner[r] = i
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    sharers: dict = {}
    for t in transfers:
        for comp in t.components:
            for r in comp.resources:
                sharers[r] = sharers.get(r, 0) + 1

    out = []
    for members in groups.values():
        ids = tuple(transfers[i].access_id for i in members)
        res = frozenset(r for i in members for c in transfers[i].components for r in c.resources)
        cycles = sum(sum(c.cycles for c in transfers[i].components) for i in members)
        most = max((sharers[r] for i in members for c in transfers[i].components for r in c.resources),
                   default=1)
        out.append(ContentionGroup(ids, res, cycles, Fraction(1, most)))
    out.sort(key=lambda g: g.transfers)
    return out


def direction_time(transfers: Sequence[TransferSpec], hw: HardwareModel) -> int:
    """Aggregate transfer time for one direction at one level: groups on
    overlapping resources time-share (sum), disjoint groups overlap (max),
    and no multi-stage chain finishes before its stages run in order."""
    if not transfers:
        return 0
    comp_groups = _component_groups(transfers)
    group_max = max((sum(c.cycles for c in grp) for grp in comp_groups), default=0)
    chain_max = max(t.chain_cycles() for t in transfers)
    return max(group_max, chain_max)


def _component_groups(transfers: Sequence[TransferSpec]) -> list[list[Component]]:
    comps = [c for t in transfers for c in t.components]
    parent = list(range(len(comps)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict = {}
    for i, comp in enumerate(comps):
        for r in comp.resources:
            if r in owner:
                parent[find(i)] = find(owner[r])
            else:
                owner[r] = i
    groups: dict[int, list[Component]] = {}
    for i, comp in enumerate(comps):
        groups.setdefault(find(i), []).append(comp)
    return list(groups.values())


# ---------------------------------------------------------------------------
# Pipelined loop overlap
# ---------------------------------------------------------------------------


def loop_time(iterations: int, t_load: int, t_compute: int, t_store: int) -> int:
    """Double-buffered load/compute/store pipeline time for one loop level."""
    if min(iterations, t_load, t_compute, t_store) < 0:
        raise ValueError("loop_time arguments must be non-negative")
    if iterations == 0:
        return 0
    if iterations == 1:
        return t_load + t_compute + t_store
    fill = max(t_load, t_compute) + max(t_store, t_compute) + t_load + t_store
    if iterations == 2:
        return fill
    return (iterations - 2) * max(t_load + t_store, t_compute) + fill


# ---------------------------------------------------------------------------
# Traffic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccessTraffic:
    access_id: str
    direction: str
    dram_bytes: int
    dram_tiles: int
    noc_bytes: tuple[tuple[str, int], ...]  # per interconnect


@dataclass(frozen=True)
class TrafficSummary:
    per_access: tuple[AccessTraffic, ...]
    dram_bytes: int
    noc_bytes: tuple[tuple[str, int], ...]

    def input_dram_tiles(self) -> int:
        return sum(a.dram_tiles for a in self.per_access if a.direction == "load")

    def output_dram_tiles(self) -> int:
        return sum(a.dram_tiles for a in self.per_access if a.direction == "store")


def traffic(candidate: ScheduleCandidate, hw: HardwareModel) -> TrafficSummary:
    """Closed-form byte counts: per access, issues x producers x bytes for
    DRAM; per multicast stage, bytes x links traversed for the NoC."""
    active = candidate.nest.active_cores(hw)
    rows: list[AccessTraffic] = []
    net_totals: dict[str, int] = {}
    for plan in candidate.plans:
        F = plan.footprint_bytes
        tile_bytes = candidate.nest.access(plan.access_id).access.tile_bytes
        noc: dict[str, int] = {}
        if plan.realization == "global":
            producers = len(active)
        else:
            pattern = plan.realization
            assert isinstance(pattern, BroadcastPattern)
            producers = len(broadcast_producers(pattern, active, hw))
            for links, (_, net_name) in zip(stage_link_sets(pattern, active, hw), pattern.stages):
                bytes_stage = plan.issues * F * len(links)
                noc[net_name] = noc.get(net_name, 0) + bytes_stage
                net_totals[net_name] = net_totals.get(net_name, 0) + bytes_stage
        dram_bytes = plan.issues * producers * F
        rows.append(AccessTraffic(plan.access_id, plan.direction, dram_bytes,
                                  plan.issues * producers * (F // tile_bytes),
                                  tuple(sorted(noc.items()))))
    return TrafficSummary(tuple(rows), sum(r.dram_bytes for r in rows), tuple(sorted(net_totals.items())))


# ---------------------------------------------------------------------------
# Candidate estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelCost:
    var: str
    extent: int
    t_load: int
    t_store: int
    t_inner: int
    time: int


@dataclass(frozen=True)
class CostEstimate:
    candidate_id: str
    body_compute: int
    levels: tuple[LevelCost, ...]
    total: int
    binding: str  # "compute-bound" | "memory-bound"
    traffic: TrafficSummary
    compute_bound_cycles: int
    dram_bound_cycles: int


def estimate(candidate: ScheduleCandidate, hw: HardwareModel) -> CostEstimate:
    """Hierarchical cost of one candidate, innermost loop outward."""
    if hw.cores is None or not hw.cores.units:
        raise ModelError("intra-core compute layer required")
    nest = candidate.nest
    units = hw.cores.units
    body_total, _ = body_compute_time(nest.kernel.ops, units)

    temporal = nest.temporal_loops()
    T = len(temporal)
    by_pos: dict[int, list[MemOpPlan]] = {}
    for plan in candidate.plans:
        by_pos.setdefault(plan.hoist, []).append(plan)

    def dir_time(pos: int, direction: str) -> int:
        plans = [p for p in by_pos.get(pos, []) if p.direction == direction]
        if not plans:
            return 0
        return direction_time(build_transfers(candidate, hw, plans), hw)

    levels: list[LevelCost] = []
    current = body_total
    binding = "compute-bound"
    for j in range(T - 1, -1, -1):
        pos = T - 1 - j
        var, extent = temporal[j]
        t_l, t_s = dir_time(pos, "load"), dir_time(pos, "store")
        if j == T - 1:
            binding = "compute-bound" if current >= t_l + t_s else "memory-bound"
        t = loop_time(extent, t_l, current, t_s)
        levels.append(LevelCost(var, extent, t_l, t_s, current, t))
        current = t
    t_l, t_s = dir_time(T, "load"), dir_time(T, "store")
    if t_l or t_s or T == 0:
        if T == 0:
            binding = "compute-bound" if current >= t_l + t_s else "memory-bound"
        t = loop_time(1, t_l, current, t_s)
        levels.append(LevelCost("@spatial", 1, t_l, t_s, current, t))
        current = t

    tr = traffic(candidate, hw)
    iters_per_core = prod(extent for _, extent in temporal) if temporal else 1
    compute_lb = _compute_lower_bound(nest, units, iters_per_core)
    dram_lb = _dram_lower_bound(tr, hw)
    total = max(current, compute_lb, dram_lb)
    return CostEstimate(candidate.id, body_total, tuple(levels), total, binding, tr,
                        compute_lb, dram_lb)


def _compute_lower_bound(nest: MappedNest, units: Sequence[ComputeUnit], iters: int) -> int:
    per_kind: dict[str, Fraction] = {}
    for op in nest.kernel.ops:
        if op.kind == "matmul":
            unit = _unit(units, "matrix")
            m, k, n = unit.shape
            M, K, N = op.space
            raw = Fraction(ceil(M / m) * ceil(K / k) * ceil(N / n)) / (unit.count * unit.throughput)
        elif op.kind == "elementwise_vector":
            unit = _unit(units, "vector")
            raw = Fraction(ceil(op.element_count() / unit.shape[0])) / (unit.count * unit.throughput)
        else:
            unit = _unit(units, "scalar")
            raw = Fraction(op.element_count() * (unit.latency or 1), unit.count)
        per_kind[op.kind] = per_kind.get(op.kind, Fraction(0)) + raw
    if not per_kind:
        return 0
    return ceil(max(per_kind.values()) * iters)


def _dram_lower_bound(tr: TrafficSummary, hw: HardwareModel) -> int:
    dram = hw.dram_memory()
    if dram is None or tr.dram_bytes == 0:
        return 0
    aggregate = hw.dram_channel_count() * dram.port_bandwidth
    return ceil(Fraction(tr.dram_bytes, aggregate))


def rank(estimates: Sequence[tuple[ScheduleCandidate, CostEstimate]],
         k: int = 5) -> list[tuple[ScheduleCandidate, CostEstimate]]:
    """Ascending estimated total, ties broken by candidate id; top k."""
    ordered = sorted(estimates, key=lambda ce: (ce[1].total, ce[0].id))
    return ordered[: max(k, 0)]
