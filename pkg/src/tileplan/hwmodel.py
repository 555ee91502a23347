"""Layered hardware description: core grids, memories, muxes, interconnects.

A machine is declared in a small line-oriented text format (``.hw`` files):

    dim x = 8
    cores tensix(x, y) { mat shape=(8,16,16) tput=1/4 count=1; scalar latency=1 }
    mem L1(x, y) size=1536KiB bw=384
    mem dram(d) size=1536MiB bw=36
    mux tensix(x, y) -> L1(x, y) bw=384
    mux tensix(x, y) -> dram(y/2 + 4*(x/4)) bw=36
    net h_ring links L1(x, y) -> L1((x+1)%8, y) bw=32

Comments start with ``#``. All bandwidths are bytes per cycle at the declared
clock; capacities take B/KiB/MiB/GiB suffixes. The model is immutable after
parsing and safe to share across concurrent evaluations.

Three abstraction levels are derived from which sections are present:
``scaleout`` (dims + cores), ``memory`` (adds memories and muxes), and
``intracore`` (adds compute units inside cores). Passes that need a lower
layer than the model provides are rejected by :func:`validate`.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .affine import AffineExpr, AffineParseError, parse_affine


class HwParseError(ValueError):
    """Syntax or semantic error in a hardware description, with location."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        prefix = f"line {line}" + (f", col {column}" if column else "") if line else ""
        super().__init__(f"{prefix}: {message}" if prefix else message)


class AbstractionLevel(enum.IntEnum):
    SCALEOUT = 1
    MEMORY = 2
    INTRACORE = 3

    def label(self) -> str:
        return {1: "scaleout", 2: "+memory", 3: "+intracore"}[self.value]


@dataclass(frozen=True)
class SpatialDim:
    name: str
    size: int


@dataclass(frozen=True)
class ComputeUnit:
    """One class of identical functional units inside every core.

    kind       matrix | vector | scalar
    shape      matrix: (m, k, n) intrinsic shape; vector: (width,); scalar: ()
    throughput intrinsics issued per cycle per unit (matrix/vector)
    latency    cycles per scalar op (scalar only)
    count      identical units of this kind per core
    """

    kind: str
    shape: tuple[int, ...]
    throughput: Optional[Fraction]
    latency: Optional[int]
    count: int


@dataclass(frozen=True)
class CoreGrid:
    name: str
    dims: tuple[str, ...]
    units: tuple[ComputeUnit, ...]


@dataclass(frozen=True)
class MemoryArray:
    name: str
    dims: tuple[str, ...]
    capacity: int
    port_bandwidth: int


@dataclass(frozen=True)
class Mux:
    """1-to-N connectivity: each dst index selects one src index affinely."""

    dst: str
    dst_vars: tuple[str, ...]
    src: str
    map: tuple[AffineExpr, ...]
    bandwidth: int


Link = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True)
class Interconnect:
    """A set of directed links between instances of one memory array.

    Either derived from an affine neighbor map over the endpoint index
    domain, or given as an explicit link list (programmatic construction
    only; the text grammar is map based).
    """

    name: str
    endpoints: str
    map: Optional[tuple[AffineExpr, ...]]
    link_bandwidth: int
    explicit_links: Optional[frozenset[Link]] = None


@dataclass(frozen=True)
class LinkSet:
    """A concrete resource claim: net links, a DRAM channel, or an L1 port."""

    kind: str  # "links" | "dram" | "port"
    net: Optional[str] = None
    links: frozenset[Link] = frozenset()
    channel: Optional[int] = None
    memory: Optional[str] = None

    def resource_ids(self) -> frozenset[tuple]:
        if self.kind == "links":
            return frozenset(("link", self.net, link) for link in self.links)
        if self.kind == "dram":
            return frozenset({("dram", self.channel)})
        return frozenset({("port", self.memory)})


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    subject: str


@dataclass(frozen=True)
class HardwareModel:
    dims: tuple[SpatialDim, ...]
    cores: Optional[CoreGrid]
    memories: tuple[MemoryArray, ...]
    muxes: tuple[Mux, ...]
    interconnects: tuple[Interconnect, ...]

    # -- lookups ------------------------------------------------------------

    def dim(self, name: str) -> SpatialDim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def memory(self, name: str) -> MemoryArray:
        for m in self.memories:
            if m.name == name:
                return m
        raise KeyError(name)

    def core_dim_sizes(self) -> tuple[int, ...]:
        assert self.cores is not None
        return tuple(self.dim(d).size for d in self.cores.dims)

    def core_indices(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(s) for s in self.core_dim_sizes()))

    def num_cores(self) -> int:
        total = 1
        for s in self.core_dim_sizes():
            total *= s
        return total

    @property
    def abstraction_level(self) -> AbstractionLevel:
        level = AbstractionLevel.SCALEOUT
        if self.memories and self.muxes:
            level = AbstractionLevel.MEMORY
        if level >= AbstractionLevel.MEMORY and self.cores and self.cores.units:
            level = AbstractionLevel.INTRACORE
        return level

    # -- memory layer structure ----------------------------------------------

    def local_memory_mux(self) -> Optional[Mux]:
        """The core-to-scratchpad mux: injective over the core index domain."""
        if self.cores is None:
            return None
        for mux in self.muxes:
            if mux.dst != self.cores.name:
                continue
            if self._mux_injective(mux):
                return mux
        return None

    def dram_mux(self) -> Optional[Mux]:
        if self.cores is None:
            return None
        for mux in self.muxes:
            if mux.dst == self.cores.name and not self._mux_injective(mux):
                return mux
        return None

    def _mux_injective(self, mux: Mux) -> bool:
        seen = set()
        for idx in self.core_indices():
            env = dict(zip(mux.dst_vars, idx))
            out = tuple(e.evaluate(env) for e in mux.map)
            if out in seen:
                return False
            seen.add(out)
        return True

    def local_memory(self) -> Optional[MemoryArray]:
        mux = self.local_memory_mux()
        return self.memory(mux.src) if mux else None

    def dram_memory(self) -> Optional[MemoryArray]:
        mux = self.dram_mux()
        return self.memory(mux.src) if mux else None

    def dram_channel_count(self) -> int:
        mem = self.dram_memory()
        if mem is None:
            return 0
        total = 1
        for d in mem.dims:
            total *= self.dim(d).size
        return max(total, 1)

    # -- link structure -------------------------------------------------------

    def links_of(self, net: Interconnect) -> frozenset[Link]:
        """All in-range directed links of an interconnect.

        Map destinations that fall outside the endpoint domain produce no
        link, which is how open chains are expressed with the same grammar
        as wrap-around rings.
        """
        if net.explicit_links is not None:
            return net.explicit_links
        mem = self.memory(net.endpoints)
        sizes = [self.dim(d).size for d in mem.dims]
        links = set()
        for idx in itertools.product(*(range(s) for s in sizes)):
            env = dict(zip(mem.dims, idx))
            dst = tuple(e.evaluate(env) for e in net.map)
            if all(0 <= v < s for v, s in zip(dst, sizes)):
                if dst != idx:
                    links.add((idx, dst))
        return frozenset(links)


# ---------------------------------------------------------------------------
# Queries used by the planning passes
# ---------------------------------------------------------------------------


def broadcast_eligible_dims(hw: HardwareModel) -> list[tuple[str, str]]:
    """(dim, interconnect) pairs along which a multicast can traverse.

    A pair qualifies when every link of the net varies exactly that core
    dimension and, for every fixed setting of the other dimensions, the
    links reach all indices of the dimension starting from index 0 (the
    designated producer position). Diagonal or irregular nets parse fine
    but never qualify.
    """
    if hw.cores is None:
        return []
    local = hw.local_memory()
    if local is None:
        return []
    out: list[tuple[str, str]] = []
    for net in hw.interconnects:
        if net.endpoints != local.name:
            continue
        mem_dims = list(local.dims)
        links = hw.links_of(net)
        if not links:
            continue
        varying: set[int] = set()
        for src, dst in links:
            for pos, (a, b) in enumerate(zip(src, dst)):
                if a != b:
                    varying.add(pos)
        if len(varying) != 1:
            continue
        pos = varying.pop()
        dim_name = mem_dims[pos]
        if dim_name not in hw.cores.dims:
            continue
        if _net_covers_dim(hw, net, links, pos, mem_dims):
            out.append((dim_name, net.name))
    out.sort(key=lambda p: (hw.cores.dims.index(p[0]), p[1]))
    return out


def _net_covers_dim(hw: HardwareModel, net: Interconnect, links: frozenset[Link],
                    pos: int, mem_dims: list[str]) -> bool:
    sizes = [hw.dim(d).size for d in mem_dims]
    other_ranges = [range(s) for i, s in enumerate(sizes) if i != pos]
    for other in itertools.product(*other_ranges):
        try:
            multicast_route(hw, net, pos, other, links=links)
        except ValueError:
            return False
    return True


def multicast_route(hw: HardwareModel, net: Interconnect, pos: int,
                    other: tuple[int, ...], links: Optional[frozenset[Link]] = None) -> list[Link]:
    """Construct the forwarding route along one dimension from index 0.

    Walks successor links starting at index 0 of the varying dimension with
    the remaining coordinates fixed to ``other``; raises ValueError if the
    walk cannot reach every index or would reuse a link.
    """
    mem = hw.memory(net.endpoints)
    sizes = [hw.dim(d).size for d in mem.dims]
    if links is None:
        links = hw.links_of(net)
    succ: dict[tuple[int, ...], tuple[int, ...]] = {}
    for src, dst in links:
        fixed = tuple(v for i, v in enumerate(src) if i != pos)
        if fixed == other:
            if src in succ:
                raise ValueError(f"net {net.name}: multiple outgoing links at {src}")
            succ[src] = dst
    start = list(other)
    start.insert(pos, 0)
    node = tuple(start)
    route: list[Link] = []
    visited = {node}
    while node in succ and len(visited) < sizes[pos]:
        nxt = succ[node]
        if nxt in visited:
            raise ValueError(f"net {net.name}: route revisits {nxt}")
        route.append((node, nxt))
        visited.add(nxt)
        node = nxt
    if len(visited) != sizes[pos]:
        raise ValueError(f"net {net.name}: links do not cover the dimension from index 0")
    return route


def dram_channel_of(hw: HardwareModel, core: tuple[int, ...]) -> int:
    """Evaluate the DRAM mux map on a core index tuple."""
    mux = hw.dram_mux()
    if mux is None:
        raise ValueError("no DRAM mux declared")
    sizes = hw.core_dim_sizes()
    if len(core) != len(sizes) or any(not (0 <= v < s) for v, s in zip(core, sizes)):
        raise ValueError(f"core index {core} outside the {sizes} grid")
    env = dict(zip(mux.dst_vars, core))
    out = tuple(e.evaluate(env) for e in mux.map)
    mem = hw.memory(mux.src)
    msizes = [hw.dim(d).size for d in mem.dims]
    channel = 0
    for v, s in zip(out, msizes):
        channel = channel * s + v
    return channel


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(hw: HardwareModel, require: Optional[AbstractionLevel] = None) -> list[Diagnostic]:
    """Check model invariants; empty list means the model is sound.

    ``require`` asks for a minimum abstraction level (what the caller's
    pass needs); a model below that level yields an error diagnostic
    instead of an exception.
    """
    diags: list[Diagnostic] = []
    names = [d.name for d in hw.dims]
    if len(set(names)) != len(names):
        diags.append(Diagnostic("error", "duplicate spatial dim names", "dims"))
    for d in hw.dims:
        if d.size < 1:
            diags.append(Diagnostic("error", f"dim {d.name} has size {d.size} < 1", d.name))
    if hw.cores is None:
        diags.append(Diagnostic("error", "no core grid declared", "cores"))
        return diags
    for m in hw.memories:
        if m.capacity <= 0:
            diags.append(Diagnostic("error", f"memory {m.name} capacity must be > 0", m.name))
        if m.port_bandwidth <= 0:
            diags.append(Diagnostic("error", f"memory {m.name} bandwidth must be > 0", m.name))
    for net in hw.interconnects:
        if net.link_bandwidth <= 0:
            diags.append(Diagnostic("error", f"net {net.name} link bandwidth must be > 0", net.name))
    for unit in hw.cores.units:
        if unit.kind == "matrix" and (len(unit.shape) != 3 or any(s < 1 for s in unit.shape)):
            diags.append(Diagnostic("error", "matrix unit needs a positive (m,k,n) shape", hw.cores.name))
        if unit.kind == "vector" and (len(unit.shape) != 1 or unit.shape[0] < 1):
            diags.append(Diagnostic("error", "vector unit needs a positive width", hw.cores.name))
        if unit.kind == "scalar" and (unit.latency is None or unit.latency < 1):
            diags.append(Diagnostic("error", "scalar unit needs latency >= 1", hw.cores.name))
        if unit.count < 1:
            diags.append(Diagnostic("error", f"{unit.kind} unit count must be >= 1", hw.cores.name))

    diags.extend(_validate_muxes(hw))

    if hw.memories and hw.muxes and hw.local_memory_mux() is None:
        diags.append(Diagnostic("error", "no core-local memory mux (each core must reach exactly one scratchpad)", "muxes"))

    if require is not None and hw.abstraction_level < require:
        missing = {AbstractionLevel.MEMORY: "memory layer required",
                   AbstractionLevel.INTRACORE: "intra-core compute layer required"}
        diags.append(Diagnostic("error", missing.get(require, "abstraction level too coarse"),
                                hw.abstraction_level.label()))
    return diags


def _validate_muxes(hw: HardwareModel) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for mux in hw.muxes:
        if hw.cores is None or mux.dst != hw.cores.name:
            diags.append(Diagnostic("error", f"mux dst {mux.dst} is not the core grid", mux.dst))
            continue
        try:
            mem = hw.memory(mux.src)
        except KeyError:
            diags.append(Diagnostic("error", f"mux src {mux.src} is not a declared memory", mux.src))
            continue
        msizes = [hw.dim(d).size for d in mem.dims]
        if len(mux.map) != len(msizes):
            diags.append(Diagnostic("error", f"mux to {mux.src} maps {len(mux.map)} indices, memory has {len(msizes)}", mux.src))
            continue
        for idx in hw.core_indices():
            env = dict(zip(mux.dst_vars, idx))
            out = [e.evaluate(env) for e in mux.map]
            if any(not (0 <= v < s) for v, s in zip(out, msizes)):
                diags.append(Diagnostic("error", f"mux to {mux.src} maps core {idx} to out-of-range index {tuple(out)}", mux.src))
                break
    return diags


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_SIZE_SUFFIX = {"B": 1, "KiB": 1024, "MiB": 1024 ** 2, "GiB": 1024 ** 3}

_DIM_RE = re.compile(r"^dim\s+(\w+)\s*=\s*(\d+)\s*$")
_CORES_RE = re.compile(r"^cores\s+(\w+)\s*\(([^)]*)\)\s*\{(.*)\}\s*$", re.S)
_MEM_RE = re.compile(r"^mem\s+(\w+)\s*\(([^)]*)\)\s+size\s*=\s*(\S+)\s+bw\s*=\s*(\d+)\s*$")
_MUX_RE = re.compile(r"^mux\s+(\w+)\s*\(([^)]*)\)\s*->\s*(\w+)\s*\((.*)\)\s+bw\s*=\s*(\d+)\s*$")
_NET_RE = re.compile(r"^net\s+(\w+)\s+links\s+(\w+)\s*\(([^)]*)\)\s*->\s*(\w+)\s*\((.*)\)\s+bw\s*=\s*(\d+)\s*$")


def _parse_size(text: str, line: int) -> int:
    m = re.match(r"^(\d+(?:\.\d+)?)([A-Za-z]*)$", text)
    if not m:
        raise HwParseError(f"bad size {text!r}", line)
    value, suffix = m.groups()
    if suffix == "":
        suffix = "B"
    if suffix not in _SIZE_SUFFIX:
        raise HwParseError(f"unknown size suffix {suffix!r} (use B/KiB/MiB/GiB)", line)
    total = float(value) * _SIZE_SUFFIX[suffix]
    return int(total)


def _split_names(text: str) -> tuple[str, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(p.strip() for p in text.split(","))


def _split_top_level(text: str) -> list[str]:
    """Split on commas that are not nested inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur or parts:
        parts.append("".join(cur))
    return parts


def _parse_exprs(text: str, allowed_vars: set[str], line: int) -> tuple[AffineExpr, ...]:
    exprs = []
    for part in _split_top_level(text):
        try:
            expr = parse_affine(part)
        except AffineParseError as exc:
            raise HwParseError(str(exc), line) from exc
        unknown = expr.vars() - allowed_vars
        if unknown:
            raise HwParseError(f"undeclared index variable(s) {sorted(unknown)}", line)
        exprs.append(expr)
    return tuple(exprs)


_UNIT_RE = {
    "mat": re.compile(r"^mat\s+shape\s*=\s*\((\d+)\s*,\s*(\d+)\s*,\s*(\d+)\)\s+tput\s*=\s*(\S+)\s+count\s*=\s*(\d+)$"),
    "vec": re.compile(r"^vec\s+width\s*=\s*(\d+)\s+tput\s*=\s*(\S+)\s+count\s*=\s*(\d+)$"),
    "scalar": re.compile(r"^scalar\s+latency\s*=\s*(\d+)(?:\s+count\s*=\s*(\d+))?$"),
}


def _parse_units(body: str, line: int) -> tuple[ComputeUnit, ...]:
    units = []
    for stmt in body.split(";"):
        stmt = stmt.strip()
        if not stmt:
            continue
        if stmt.startswith("mat"):
            m = _UNIT_RE["mat"].match(stmt)
            if not m:
                raise HwParseError(f"bad matrix unit declaration {stmt!r}", line)
            a, b, c, tput, count = m.groups()
            units.append(ComputeUnit("matrix", (int(a), int(b), int(c)), Fraction(tput), None, int(count)))
        elif stmt.startswith("vec"):
            m = _UNIT_RE["vec"].match(stmt)
            if not m:
                raise HwParseError(f"bad vector unit declaration {stmt!r}", line)
            w, tput, count = m.groups()
            units.append(ComputeUnit("vector", (int(w),), Fraction(tput), None, int(count)))
        elif stmt.startswith("scalar"):
            m = _UNIT_RE["scalar"].match(stmt)
            if not m:
                raise HwParseError(f"bad scalar unit declaration {stmt!r}", line)
            lat, count = m.groups()
            units.append(ComputeUnit("scalar", (), None, int(lat), int(count or 1)))
        else:
            raise HwParseError(f"unknown unit declaration {stmt!r}", line)
    return tuple(units)


def parse_hardware(text: str) -> HardwareModel:
    """Parse a hardware description document into a resolved model.

    Raises HwParseError with a line number on syntax errors, undeclared
    dims, non-affine map expressions, or out-of-range indices; structural
    invariants beyond that are reported by :func:`validate`.
    """
    dims: list[SpatialDim] = []
    cores: Optional[CoreGrid] = None
    memories: list[MemoryArray] = []
    muxes: list[Mux] = []
    nets: list[Interconnect] = []

    # Join continuation lines of brace blocks so declarations are one logical line.
    logical: list[tuple[int, str]] = []
    pending: Optional[tuple[int, str]] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        if pending is not None:
            pending = (pending[0], pending[1] + " " + stripped.strip())
            if "}" in stripped:
                logical.append(pending)
                pending = None
            continue
        if "{" in stripped and "}" not in stripped:
            pending = (lineno, stripped.strip())
        else:
            logical.append((lineno, stripped.strip()))
    if pending is not None:
        raise HwParseError("unterminated '{' block", pending[0])

    dim_names: set[str] = set()
    mem_names: set[str] = set()

    for lineno, stmt in logical:
        if stmt.startswith("dim"):
            m = _DIM_RE.match(stmt)
            if not m:
                raise HwParseError(f"bad dim declaration {stmt!r}", lineno)
            name, size = m.group(1), int(m.group(2))
            if name in dim_names:
                raise HwParseError(f"duplicate dim {name}", lineno)
            dim_names.add(name)
            dims.append(SpatialDim(name, size))
        elif stmt.startswith("cores"):
            m = _CORES_RE.match(stmt)
            if not m:
                raise HwParseError(f"bad cores declaration {stmt!r}", lineno)
            if cores is not None:
                raise HwParseError("multiple core grids are not supported", lineno)
            name, dim_list, body = m.groups()
            cdims = _split_names(dim_list)
            if not cdims:
                raise HwParseError("core grid needs at least one dim", lineno)
            for d in cdims:
                if d not in dim_names:
                    raise HwParseError(f"undeclared dim {d}", lineno)
            cores = CoreGrid(name, cdims, _parse_units(body, lineno))
        elif stmt.startswith("mem"):
            m = _MEM_RE.match(stmt)
            if not m:
                raise HwParseError(f"bad mem declaration {stmt!r}", lineno)
            name, dim_list, size, bw = m.groups()
            mdims = _split_names(dim_list)
            for d in mdims:
                if d not in dim_names:
                    raise HwParseError(f"undeclared dim {d}", lineno)
            if name in mem_names:
                raise HwParseError(f"duplicate memory {name}", lineno)
            mem_names.add(name)
            memories.append(MemoryArray(name, mdims, _parse_size(size, lineno), int(bw)))
        elif stmt.startswith("mux"):
            m = _MUX_RE.match(stmt)
            if not m:
                raise HwParseError(f"bad mux declaration {stmt!r}", lineno)
            dst, dst_vars, src, exprs, bw = m.groups()
            if cores is None or dst != cores.name:
                raise HwParseError(f"mux dst {dst} is not the declared core grid", lineno)
            if src not in mem_names:
                raise HwParseError(f"mux src {src} is not a declared memory", lineno)
            dvars = _split_names(dst_vars)
            if dvars != cores.dims:
                raise HwParseError(f"mux dst indices {dvars} must match core dims {cores.dims}", lineno)
            parsed = _parse_exprs(exprs, set(dvars), lineno)
            muxes.append(Mux(dst, dvars, src, parsed, int(bw)))
        elif stmt.startswith("net"):
            m = _NET_RE.match(stmt)
            if not m:
                raise HwParseError(f"bad net declaration {stmt!r}", lineno)
            name, src_mem, src_vars, dst_mem, exprs, bw = m.groups()
            if src_mem != dst_mem:
                raise HwParseError("net endpoints must be one memory array", lineno)
            if src_mem not in mem_names:
                raise HwParseError(f"net endpoint {src_mem} is not a declared memory", lineno)
            svars = _split_names(src_vars)
            mem = next(mm for mm in memories if mm.name == src_mem)
            if svars != mem.dims:
                raise HwParseError(f"net source indices {svars} must match memory dims {mem.dims}", lineno)
            parsed = _parse_exprs(exprs, set(svars), lineno)
            if len(parsed) != len(mem.dims):
                raise HwParseError(f"net map arity {len(parsed)} != memory rank {len(mem.dims)}", lineno)
            nets.append(Interconnect(name, src_mem, parsed, int(bw)))
        else:
            raise HwParseError(f"unknown declaration {stmt!r}", lineno)

    if cores is None:
        raise HwParseError("no core grid declared")

    model = HardwareModel(tuple(dims), cores, tuple(memories), tuple(muxes), tuple(nets))
    hard = [d for d in _validate_muxes(model) if d.severity == "error"]
    if hard:
        raise HwParseError(hard[0].message)
    return model


# ---------------------------------------------------------------------------
# Pretty printing (canonical text; reparses to an equal model)
# ---------------------------------------------------------------------------


def pretty_print(hw: HardwareModel) -> str:
    lines = [f"dim {d.name} = {d.size}" for d in hw.dims]
    if hw.cores is not None:
        stmts = []
        for u in hw.cores.units:
            if u.kind == "matrix":
                stmts.append(f"mat shape=({u.shape[0]},{u.shape[1]},{u.shape[2]}) tput={u.throughput} count={u.count}")
            elif u.kind == "vector":
                stmts.append(f"vec width={u.shape[0]} tput={u.throughput} count={u.count}")
            else:
                stmts.append(f"scalar latency={u.latency} count={u.count}")
        body = "; ".join(stmts)
        lines.append(f"cores {hw.cores.name}({', '.join(hw.cores.dims)}) {{ {body} }}")
    for m in hw.memories:
        lines.append(f"mem {m.name}({', '.join(m.dims)}) size={m.capacity}B bw={m.port_bandwidth}")
    for mux in hw.muxes:
        exprs = ", ".join(str(e) for e in mux.map)
        lines.append(f"mux {mux.dst}({', '.join(mux.dst_vars)}) -> {mux.src}({exprs}) bw={mux.bandwidth}")
    for net in hw.interconnects:
        if net.map is None:
            continue
        mem = hw.memory(net.endpoints)
        exprs = ", ".join(str(e) for e in net.map)
        lines.append(f"net {net.name} links {net.endpoints}({', '.join(mem.dims)}) -> {net.endpoints}({exprs}) bw={net.link_bandwidth}")
    return "\n".join(lines) + "\n"
