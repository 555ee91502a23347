"""Spatiotemporal mapping: assign grid dims to core-array dims plus waves.

A mapping makes three coupled choices: which hardware dims each grid var
tiles onto (zero or more), the tiling order when one var receives several
dims, and the order of the leftover temporal wave loops. Applying a mapping
rewrites every access coordinate with the substitution

    g = ((t * S1 + s1) * S2 + s2) ... * Sn + sn

following the tiling order (outermost assigned dim first), leaving a nest
of parallel spatial loops, then wave loops, then the original sequential
loops innermost. Sequential loops are never reordered with waves.

Non-divisible grid/spatial ratios take ceiling wave counts with an edge
mask recorded on the nest; cores idle on out-of-range coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import ceil, prod
from typing import Iterable, Optional

from .affine import AffineExpr
from .hwmodel import HardwareModel
from .kernelir import Access, TileKernel


WAVE_PREFIX = "t_"


@dataclass(frozen=True)
class SpatialAssignment:
    """Ordered spatial dims per grid var; dims not listed anywhere are unused."""

    per_var: tuple[tuple[str, tuple[str, ...]], ...]  # (grid var, dims outer->inner)

    def dims_of(self, var: str) -> tuple[str, ...]:
        for name, dims in self.per_var:
            if name == var:
                return dims
        return ()

    def used_dims(self) -> tuple[str, ...]:
        out: list[str] = []
        for _, dims in self.per_var:
            out.extend(dims)
        return tuple(out)

    def var_of(self, dim: str) -> Optional[tuple[str, int]]:
        """Grid var and tiling position a hardware dim serves, if any."""
        for name, dims in self.per_var:
            if dim in dims:
                return name, dims.index(dim)
        return None


@dataclass(frozen=True)
class Mapping:
    assignment: SpatialAssignment
    wave_order: tuple[str, ...]  # grid vars, outermost wave first

    def encode(self) -> str:
        parts = []
        for var, dims in self.assignment.per_var:
            parts.append(f"{var}:[{','.join(dims)}]")
        return f"s({' '.join(parts)}) w({','.join(self.wave_order)})"


@dataclass(frozen=True)
class WaveLoop:
    var: str         # wave loop variable, e.g. "t_gm"
    source: str      # originating grid var
    extent: int


@dataclass(frozen=True)
class SeqLoop:
    var: str
    extent: int


@dataclass(frozen=True)
class MappedAccess:
    access: Access
    coords: tuple[AffineExpr, ...]


@dataclass(frozen=True)
class MappedNest:
    """Loop structure after mapping: spatial, then waves, then sequential."""

    kernel: TileKernel
    mapping: Mapping
    spatial: tuple[tuple[str, int], ...]          # used hardware dims (name, size)
    waves: tuple[WaveLoop, ...]
    seqs: tuple[SeqLoop, ...]
    accesses: tuple[MappedAccess, ...]
    masks: tuple[tuple[AffineExpr, int], ...]     # expr < bound, for ragged edges

    def temporal_loops(self) -> tuple[tuple[str, int], ...]:
        """All temporal loops outer to inner: waves then sequential."""
        return tuple((w.var, w.extent) for w in self.waves) + tuple((s.var, s.extent) for s in self.seqs)

    def spatial_sizes(self) -> dict[str, int]:
        return dict(self.spatial)

    def access(self, access_id: str) -> MappedAccess:
        for ma in self.accesses:
            if ma.access.id == access_id:
                return ma
        raise KeyError(access_id)

    def grid_expr(self, var: str) -> AffineExpr:
        return _grid_substitution(self.kernel, self.mapping, {d: s for d, s in self.spatial})[var]

    def active_cores(self, hw: HardwareModel) -> list[tuple[int, ...]]:
        """Core index tuples that execute at least one tile instance.

        Unused hardware dims pin to index 0; used dims are active up to the
        grid extent still available for them.
        """
        assert hw.cores is not None
        ranges = []
        for dim in hw.cores.dims:
            size = hw.dim(dim).size
            served = self.mapping.assignment.var_of(dim)
            if served is None:
                ranges.append(range(1))
            else:
                var, _ = served
                ranges.append(range(min(size, _active_extent(self, dim, var, size))))
        return [idx for idx in itertools.product(*ranges)]


def _active_extent(nest: MappedNest, dim: str, var: str, size: int) -> int:
    """How many indices of a used dim ever receive work."""
    extent = nest.kernel.var(var).extent
    dims = nest.mapping.assignment.dims_of(var)
    inner = 1
    for d in dims[dims.index(dim) + 1:]:
        inner *= nest.spatial_sizes()[d]
    return max(1, min(size, ceil(extent / inner)))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_mappings(kernel: TileKernel, hw: HardwareModel, limit: int = 512) -> list[Mapping]:
    """Every mapping expressible by the three choices, deduplicated and in a
    deterministic (lexicographic on the canonical encoding) order.

    Assignments that spatialize an extent-1 grid var or use a size-1 dim are
    normalized to unused during canonicalization, which is what collapses
    the degenerate duplicates. Wave loops of extent 1 do not contribute
    order significance. ``limit`` truncates after dedup.
    """
    assert hw.cores is not None and len(hw.cores.dims) >= 1
    grid = kernel.grid_vars()
    if not grid:
        return [Mapping(SpatialAssignment(()), ())]
    dims = list(hw.cores.dims)
    sizes = {d: hw.dim(d).size for d in dims}
    extents = {v.name: v.extent for v in grid}

    seen: dict[str, Mapping] = {}
    var_names = [v.name for v in grid]
    for choice in itertools.product(range(len(grid) + 1), repeat=len(dims)):
        grouped: dict[str, list[str]] = {v: [] for v in var_names}
        for dim, who in zip(dims, choice):
            if who > 0:
                grouped[var_names[who - 1]].append(dim)
        order_spaces = [
            list(itertools.permutations(grouped[v])) if len(grouped[v]) > 1 else [tuple(grouped[v])]
            for v in var_names
        ]
        for per_var in itertools.product(*order_spaces):
            assignment = _canonical_assignment(var_names, per_var, extents, sizes)
            for wave_perm in itertools.permutations(var_names):
                mapping = Mapping(assignment, _canonical_wave_order(
                    wave_perm, assignment, extents, sizes, var_names))
                key = mapping.encode()
                if key not in seen:
                    seen[key] = mapping
    ordered = [seen[k] for k in sorted(seen)]
    return ordered[:limit]


def _canonical_assignment(var_names: list[str], per_var: tuple[tuple[str, ...], ...],
                          extents: dict[str, int], sizes: dict[str, int]) -> SpatialAssignment:
    entries = []
    for var, dims in zip(var_names, per_var):
        if extents[var] == 1:
            dims = ()
        dims = tuple(d for d in dims if sizes[d] > 1)
        entries.append((var, dims))
    return SpatialAssignment(tuple(entries))


def _canonical_wave_order(perm: tuple[str, ...], assignment: SpatialAssignment,
                          extents: dict[str, int], sizes: dict[str, int],
                          var_names: list[str]) -> tuple[str, ...]:
    def wave_extent(var: str) -> int:
        spatial = prod(sizes[d] for d in assignment.dims_of(var)) or 1
        return ceil(extents[var] / spatial)

    significant = [v for v in perm if wave_extent(v) > 1]
    trivial = [v for v in var_names if wave_extent(v) <= 1]
    return tuple(trivial) + tuple(significant)


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _grid_substitution(kernel: TileKernel, mapping: Mapping,
                       sizes: dict[str, int]) -> dict[str, AffineExpr]:
    subst: dict[str, AffineExpr] = {}
    for var, dims in mapping.assignment.per_var:
        expr = AffineExpr.var(WAVE_PREFIX + var)
        for d in dims:
            expr = expr.scale(sizes[d]) + AffineExpr.var(d)
        subst[var] = expr
    return subst


def apply_mapping(kernel: TileKernel, mapping: Mapping, hw: HardwareModel) -> MappedNest:
    """Rewrite the kernel under a mapping into the spatial/wave/seq nest."""
    assert hw.cores is not None
    sizes = {d: hw.dim(d).size for d in hw.cores.dims}
    used = mapping.assignment.used_dims()
    spatial = tuple((d, sizes[d]) for d in hw.cores.dims if d in used)

    subst = _grid_substitution(kernel, mapping, sizes)
    waves = []
    masks: list[tuple[AffineExpr, int]] = []
    for var in mapping.wave_order:
        extent = kernel.var(var).extent
        spatial_product = prod(sizes[d] for d in mapping.assignment.dims_of(var)) or 1
        wave_extent = ceil(extent / spatial_product)
        waves.append(WaveLoop(WAVE_PREFIX + var, var, wave_extent))
        if wave_extent * spatial_product != extent:
            masks.append((subst[var], extent))
    seqs = tuple(SeqLoop(v.name, v.extent) for v in kernel.seq_vars())

    rewritten = tuple(
        MappedAccess(a, tuple(c.substitute(subst) for c in a.coords)) for a in kernel.accesses
    )
    return MappedNest(kernel, mapping, spatial, tuple(waves), seqs, rewritten, tuple(masks))


def occupancy(mapping: Mapping, kernel: TileKernel, hw: HardwareModel) -> float:
    """Fraction of cores that receive work: product over used dims of
    min(dim size, grid extent remaining for it), over the total core count."""
    assert hw.cores is not None
    sizes = {d: hw.dim(d).size for d in hw.cores.dims}
    active = 1
    for var, dims in mapping.assignment.per_var:
        remaining = kernel.var(var).extent
        for d in dims:
            inner = prod(sizes[dd] for dd in dims[dims.index(d) + 1:]) or 1
            active *= min(sizes[d], max(1, ceil(remaining / inner)))
        # nothing extra when the var stays purely temporal
    return active / hw.num_cores()


# ---------------------------------------------------------------------------
# Semantic schedule key (shared by dedup verification and the tests' oracle)
# ---------------------------------------------------------------------------


def schedule_key(nest: MappedNest, hw: HardwareModel) -> tuple:
    """Canonical semantics of a nest: for every core, the time-ordered tuple
    of original grid points it executes (None when masked idle). Two
    mappings are duplicates exactly when these keys match. Only usable on
    small extents; intended for verification."""
    assert hw.cores is not None
    kernel = nest.kernel
    subst = {v.name: nest.grid_expr(v.name) for v in kernel.grid_vars()}
    sizes = dict(nest.spatial)
    extents = {v.name: v.extent for v in kernel.grid_vars()}

    core_dims = [d for d in hw.cores.dims]
    core_ranges = [range(hw.dim(d).size) for d in core_dims]
    wave_ranges = [range(w.extent) for w in nest.waves]
    rows = []
    for core in itertools.product(*core_ranges):
        env_core = dict(zip(core_dims, core))
        if any(d not in sizes and v != 0 for d, v in env_core.items()):
            rows.append((core, ("idle",)))
            continue
        timeline = []
        for wave in itertools.product(*wave_ranges):
            env = dict(env_core)
            env.update({w.var: i for w, i in zip(nest.waves, wave)})
            point = tuple(subst[v.name].evaluate(env) for v in kernel.grid_vars())
            inside = all(0 <= p < extents[v.name] for p, v in zip(point, kernel.grid_vars()))
            timeline.append(point if inside else None)
        rows.append((core, tuple(timeline)))
    return tuple(rows)
