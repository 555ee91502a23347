"""Reuse analysis and memory-operation planning over mapped nests.

For every load the planner enumerates realizations (direct per-core global
access, or multicast over eligible interconnect dimensions, including
ordered multi-stage compositions) crossed with hoist positions in the
temporal nest. Hoisting across a loop the access depends on grows the
buffered footprint by that loop's extent; crossing an independent loop
keeps the footprint and divides the issue count instead. Candidates whose
per-level live footprints exceed the usable scratchpad are pruned.

Positions count loops from the inside: position 0 issues inside every
temporal loop, position T sits just inside the spatial loops. Stores keep
their natural position and always go directly to global memory.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
from dataclasses import dataclass
from math import prod
from typing import Iterable, Optional, Sequence, Union

from .hwmodel import HardwareModel, LinkSet, broadcast_eligible_dims, dram_channel_of, multicast_route
from .kernelir import Access, TileKernel
from .mapper import MappedAccess, MappedNest, Mapping, apply_mapping

logger = logging.getLogger(__name__)


class PlanError(ValueError):
    """A kernel/mapping combination the planner refuses to schedule."""


@dataclass(frozen=True)
class BroadcastPattern:
    """Ordered multicast stages; producers are the index-0 cores of every
    broadcast dim and they load the tile from global memory themselves."""

    stages: tuple[tuple[str, str], ...]  # (spatial dim, interconnect name)

    def dims(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self.stages)

    def encode(self) -> str:
        return "bcast(" + ">".join(f"{d}@{n}" for d, n in self.stages) + ")"


Realization = Union[str, BroadcastPattern]  # "global" or a pattern


@dataclass(frozen=True)
class MemOpPlan:
    access_id: str
    direction: str
    realization: Realization
    hoist: int                 # temporal position, 0 = innermost
    target_buffer: str
    footprint_bytes: int
    issues: int
    buffer_factor: int         # doubled while the transfer re-issues
    resources: tuple[LinkSet, ...]

    def encode(self) -> str:
        real = self.realization if isinstance(self.realization, str) else self.realization.encode()
        return f"{self.access_id}:{real}@h{self.hoist}"

    @property
    def alloc_bytes(self) -> int:
        return self.buffer_factor * self.footprint_bytes


@dataclass(frozen=True)
class ScheduleCandidate:
    mapping: Mapping
    nest: MappedNest
    plans: tuple[MemOpPlan, ...]
    live_table: tuple[tuple[int, int], ...]  # (position, live bytes incl. factors)
    id: str

    def plan(self, access_id: str) -> MemOpPlan:
        for p in self.plans:
            if p.access_id == access_id:
                return p
        raise KeyError(access_id)

    def peak_bytes(self) -> int:
        return max((b for _, b in self.live_table), default=0)

    def encode(self) -> str:
        return self.mapping.encode() + " | " + " ".join(p.encode() for p in self.plans)


# ---------------------------------------------------------------------------
# Reuse queries
# ---------------------------------------------------------------------------


def spatial_reuse_dims(ma: MappedAccess, nest: MappedNest) -> frozenset[str]:
    """Spatial dims whose loop var never appears in the access coordinates:
    all cores along such a dim touch the same tile within a wave."""
    used = set()
    for c in ma.coords:
        used |= c.vars()
    return frozenset(d for d, _ in nest.spatial if d not in used)


def temporal_deps(ma: MappedAccess, nest: MappedNest) -> frozenset[str]:
    """Temporal loop vars (waves and sequential) the coordinates depend on."""
    used = set()
    for c in ma.coords:
        used |= c.vars()
    temporal = {v for v, _ in nest.temporal_loops()}
    return frozenset(used & temporal)


def enumerate_realizations(ma: MappedAccess, nest: MappedNest, hw: HardwareModel) -> list[Realization]:
    """Always global, plus every 1D multicast over a spatially reusable and
    eligible dim, plus every ordered multi-stage composition of two or more
    such dims. Deterministic canonical order."""
    reuse = spatial_reuse_dims(ma, nest)
    eligible = broadcast_eligible_dims(hw)
    nets_by_dim: dict[str, list[str]] = {}
    for d, net in eligible:
        if d in reuse and any(d == sd for sd, _ in nest.spatial):
            nets_by_dim.setdefault(d, []).append(net)
    dims = sorted(nets_by_dim, key=lambda d: [sd for sd, _ in nest.spatial].index(d))
    options: list[Realization] = ["global"]
    patterns: list[BroadcastPattern] = []
    for size in range(1, len(dims) + 1):
        for subset in itertools.combinations(dims, size):
            for order in itertools.permutations(subset):
                for nets in itertools.product(*(nets_by_dim[d] for d in order)):
                    patterns.append(BroadcastPattern(tuple(zip(order, nets))))
    patterns.sort(key=lambda p: (len(p.stages), p.encode()))
    options.extend(patterns)
    return options


def legal_hoist_levels(ma: MappedAccess, nest: MappedNest) -> list[tuple[int, int]]:
    """(position, footprint bytes) from the natural innermost position out
    to just inside the spatial loops. Positions whose crossing loop has a
    single iteration are folded onto their inner equivalent."""
    temporal = nest.temporal_loops()
    deps = temporal_deps(ma, nest)
    T = len(temporal)
    levels = [(0, _footprint(ma, temporal, deps, 0))]
    for pos in range(1, T + 1):
        _, crossed_extent = temporal[T - pos]
        if crossed_extent <= 1:
            continue
        levels.append((pos, _footprint(ma, temporal, deps, pos)))
    return levels


def _footprint(ma: MappedAccess, temporal: Sequence[tuple[str, int]],
               deps: frozenset[str], pos: int) -> int:
    blowup = 1
    T = len(temporal)
    for var, extent in temporal[T - pos:]:
        if var in deps:
            blowup *= extent
    return ma.access.tile_bytes * blowup


def issue_count(nest: MappedNest, pos: int) -> int:
    temporal = nest.temporal_loops()
    T = len(temporal)
    return prod(extent for _, extent in temporal[: T - pos]) if T - pos > 0 else 1


def natural_store_position(ma: MappedAccess, nest: MappedNest) -> int:
    """Stores issue just outside the innermost run of loops their
    coordinates do not depend on (the reduction band, typically)."""
    temporal = nest.temporal_loops()
    deps = temporal_deps(ma, nest)
    pos = 0
    for var, _ in reversed(temporal):
        if var in deps:
            break
        pos += 1
    return pos


# ---------------------------------------------------------------------------
# Plan construction
# ---------------------------------------------------------------------------


def broadcast_producers(pattern: BroadcastPattern, active: Sequence[tuple[int, ...]],
                        hw: HardwareModel) -> list[tuple[int, ...]]:
    assert hw.cores is not None
    spots = [hw.cores.dims.index(d) for d in pattern.dims()]
    return [c for c in active if all(c[i] == 0 for i in spots)]


def plan_resources(realization: Realization, active: Sequence[tuple[int, ...]],
                   hw: HardwareModel) -> tuple[LinkSet, ...]:
    """Concrete resource claims: DRAM channels feeding the transfer plus,
    for multicasts, the link sets of every stage."""
    assert hw.cores is not None
    if realization == "global":
        channels = sorted({dram_channel_of(hw, c) for c in active})
        return tuple(LinkSet("dram", channel=ch) for ch in channels)
    assert isinstance(realization, BroadcastPattern)
    producers = broadcast_producers(realization, active, hw)
    channels = sorted({dram_channel_of(hw, c) for c in producers})
    claims: list[LinkSet] = [LinkSet("dram", channel=ch) for ch in channels]
    for stage_links, (dim, net_name) in zip(stage_link_sets(realization, active, hw), realization.stages):
        claims.append(LinkSet("links", net=net_name, links=stage_links))
    return tuple(claims)


def stage_link_sets(pattern: BroadcastPattern, active: Sequence[tuple[int, ...]],
                    hw: HardwareModel) -> list[frozenset]:
    """Links traversed by each stage: stage k runs one chain along its dim
    per combination of (earlier-stage dims x non-broadcast coordinates),
    with later-stage dims still pinned at 0."""
    assert hw.cores is not None
    core_dims = list(hw.cores.dims)
    bdims = pattern.dims()
    out: list[frozenset] = []
    for k, (dim, net_name) in enumerate(pattern.stages):
        net = next(n for n in hw.interconnects if n.name == net_name)
        pos = core_dims.index(dim)
        later = {core_dims.index(d) for d in bdims[k + 1:]}
        combos = sorted({
            tuple(v for i, v in enumerate(c) if i != pos)
            for c in active
            if all(c[i] == 0 for i in later)
        })
        links: set = set()
        for other in combos:
            links.update(multicast_route(hw, net, pos, other))
        out.append(frozenset(links))
    return out


def _plan_load(ma: MappedAccess, nest: MappedNest, hw: HardwareModel,
               realization: Realization, pos: int, footprint: int,
               active: Sequence[tuple[int, ...]], buffer_name: str) -> MemOpPlan:
    issues = issue_count(nest, pos)
    return MemOpPlan(
        access_id=ma.access.id,
        direction="load",
        realization=realization,
        hoist=pos,
        target_buffer=buffer_name,
        footprint_bytes=footprint,
        issues=issues,
        buffer_factor=2 if issues > 1 else 1,
        resources=plan_resources(realization, active, hw),
    )


def _plan_store(ma: MappedAccess, nest: MappedNest, hw: HardwareModel,
                active: Sequence[tuple[int, ...]], buffer_name: str) -> MemOpPlan:
    if spatial_reuse_dims(ma, nest):
        raise PlanError(
            f"store {ma.access.id} is spatially shared under mapping "
            f"{nest.mapping.encode()}; output tiles must be unique per core")
    pos = natural_store_position(ma, nest)
    temporal = nest.temporal_loops()
    deps = temporal_deps(ma, nest)
    footprint = _footprint(ma, temporal, deps, pos)
    issues = issue_count(nest, pos)
    return MemOpPlan(
        access_id=ma.access.id,
        direction="store",
        realization="global",
        hoist=pos,
        target_buffer=buffer_name,
        footprint_bytes=footprint,
        issues=issues,
        buffer_factor=2 if issues > 1 else 1,
        resources=plan_resources("global", active, hw),
    )


def _live_table(plans: Iterable[MemOpPlan], n_positions: int) -> tuple[tuple[int, int], ...]:
    rows = []
    for pos in range(n_positions + 1):
        live = sum(p.alloc_bytes for p in plans if p.hoist >= pos)
        rows.append((pos, live))
    return tuple(rows)


def usable_capacity(hw: HardwareModel, reserved_fraction: float = 0.1) -> int:
    local = hw.local_memory()
    if local is None:
        raise PlanError("memory layer required: no core-local scratchpad declared")
    return int(local.capacity * (1.0 - reserved_fraction))


def _candidate_id(encoding: str) -> str:
    return hashlib.sha256(encoding.encode()).hexdigest()[:12]


def build_candidate(nest: MappedNest, hw: HardwareModel,
                    load_choices: dict[str, tuple[Realization, int]]) -> ScheduleCandidate:
    """Assemble a candidate from explicit per-load (realization, position)
    choices; stores are planned automatically."""
    active = nest.active_cores(hw)
    local = hw.local_memory()
    assert local is not None
    plans: list[MemOpPlan] = []
    temporal = nest.temporal_loops()
    for ma in nest.accesses:
        if ma.access.direction == "store":
            plans.append(_plan_store(ma, nest, hw, active, local.name))
            continue
        realization, pos = load_choices[ma.access.id]
        deps = temporal_deps(ma, nest)
        footprint = _footprint(ma, temporal, deps, pos)
        plans.append(_plan_load(ma, nest, hw, realization, pos, footprint, active, local.name))
    table = _live_table(plans, len(temporal))
    encoding = nest.mapping.encode() + " | " + " ".join(p.encode() for p in plans)
    return ScheduleCandidate(nest.mapping, nest, tuple(plans), table, _candidate_id(encoding))


# ---------------------------------------------------------------------------
# Candidate enumeration and pruning
# ---------------------------------------------------------------------------


def enumerate_candidates(mappings: Sequence[Mapping], kernel: TileKernel, hw: HardwareModel,
                         *,
                         spatial_reuse: bool = True,
                         temporal_reuse: bool = True,
                         max_options_per_access: int = 8,
                         max_per_mapping: int = 64,
                         max_total: int = 4096,
                         reserved_fraction: float = 0.1) -> list[ScheduleCandidate]:
    """Cross product of per-load realization and hoist choices under every
    mapping, capacity pruned, in deterministic order. Ablation switches:
    ``spatial_reuse=False`` restricts realizations to global loads and
    ``temporal_reuse=False`` pins every load to its innermost position."""
    out: list[ScheduleCandidate] = []
    for mapping in mappings:
        nest = apply_mapping(kernel, mapping, hw)
        try:
            per_access: list[list[tuple[Realization, int]]] = []
            load_ids: list[str] = []
            for ma in nest.accesses:
                if ma.access.direction != "load":
                    continue
                realizations = enumerate_realizations(ma, nest, hw) if spatial_reuse else ["global"]
                levels = legal_hoist_levels(ma, nest)
                if not temporal_reuse:
                    levels = levels[:1]
                options = [(r, pos) for r in realizations for pos, _ in levels]
                per_access.append(options[:max_options_per_access])
                load_ids.append(ma.access.id)
            combos = itertools.islice(itertools.product(*per_access), max_per_mapping)
            produced = 0
            for combo in combos:
                choices = dict(zip(load_ids, combo))
                out.append(build_candidate(nest, hw, choices))
                produced += 1
                if len(out) >= max_total:
                    break
        except PlanError as exc:
            logger.warning("skipping mapping %s: %s", mapping.encode(), exc)
            continue
        if len(out) >= max_total:
            break
    kept = prune_by_capacity(out, hw, reserved_fraction=reserved_fraction)
    if out and not kept:
        logger.warning("all %d candidates exceed usable scratchpad capacity", len(out))
    return kept


def prune_by_capacity(cands: Sequence[ScheduleCandidate], hw: HardwareModel,
                      *, reserved_fraction: float = 0.1) -> list[ScheduleCandidate]:
    """Keep exactly the candidates whose live-footprint table fits within
    the usable (capacity minus reserved fraction) local memory."""
    usable = usable_capacity(hw, reserved_fraction)
    return [c for c in cands if c.peak_bytes() <= usable]
