"""Dataflow-agnostic tile kernels with affine tile-coordinate accesses.

A kernel is a launch grid of parallel tile instances plus an optional
sequential (reduction) band; every memory access names a tensor tile by
affine expressions over the index variables. Tile coordinates, not element
addresses, are the unit here: all downstream analysis is tile granular, so
strides and base pointers never appear.

Kernels are immutable values; the parser and the workload builders are pure.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Optional

from .affine import AffineExpr, AffineParseError, parse_affine


class KernelError(ValueError):
    """Syntax or shape error in a kernel description."""


@dataclass(frozen=True)
class IndexVar:
    """A launch-space variable: grid vars parallelize, sequential vars never do."""

    name: str
    extent: int
    kind: str  # "grid" | "sequential"


@dataclass(frozen=True)
class TensorRef:
    name: str
    extents: tuple[int, ...]  # tile-grid extents per dimension
    elem_bytes: int

    @property
    def rank(self) -> int:
        return len(self.extents)


@dataclass(frozen=True)
class Access:
    """One tile-granular load or store of a tensor."""

    id: str
    tensor: TensorRef
    coords: tuple[AffineExpr, ...]
    tile_shape: tuple[int, ...]
    direction: str  # "load" | "store"

    @property
    def tile_bytes(self) -> int:
        total = self.tensor.elem_bytes
        for s in self.tile_shape:
            total *= s
        return total


@dataclass(frozen=True)
class TileOp:
    """One tile-level operator in the loop body.

    matmul             operands (a, b) with tile shapes (M,K) and (K,N);
                       space is the (M,K,N) intrinsic iteration space
    elementwise_vector operand of any tile shape; space is the tile shape
    scalar_op          operand of any tile shape; space is the tile shape
    """

    id: str
    kind: str
    operands: tuple[str, ...]  # access ids or prior op ids
    space: tuple[int, ...]

    def result_tile(self) -> tuple[int, ...]:
        if self.kind == "matmul":
            return (self.space[0], self.space[2])
        return self.space

    def element_count(self) -> int:
        total = 1
        for s in self.space:
            total *= s
        return total


@dataclass(frozen=True)
class TileKernel:
    name: str
    index_vars: tuple[IndexVar, ...]
    tensors: tuple[TensorRef, ...]
    accesses: tuple[Access, ...]
    ops: tuple[TileOp, ...]

    # -- views ---------------------------------------------------------------

    def grid_vars(self) -> tuple[IndexVar, ...]:
        return tuple(v for v in self.index_vars if v.kind == "grid")

    def seq_vars(self) -> tuple[IndexVar, ...]:
        return tuple(v for v in self.index_vars if v.kind == "sequential")

    def var(self, name: str) -> IndexVar:
        for v in self.index_vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def loads(self) -> tuple[Access, ...]:
        return tuple(a for a in self.accesses if a.direction == "load")

    def stores(self) -> tuple[Access, ...]:
        return tuple(a for a in self.accesses if a.direction == "store")

    def op(self, op_id: str) -> TileOp:
        for o in self.ops:
            if o.id == op_id:
                return o
        raise KeyError(op_id)

    def grid_points(self):
        return itertools.product(*(range(v.extent) for v in self.grid_vars()))

    def total_tile_instances(self) -> int:
        total = 1
        for v in self.index_vars:
            total *= v.extent
        return total

    def matmul_macs_per_body(self) -> int:
        """Multiply-accumulate count of one loop-body execution."""
        total = 0
        for op in self.ops:
            if op.kind == "matmul":
                m, k, n = op.space
                total += m * k * n
        return total

    def total_flops(self) -> int:
        return 2 * self.matmul_macs_per_body() * self.total_tile_instances()


def index_dependence(access: Access) -> frozenset[str]:
    """Exactly the index variables that influence any coordinate."""
    deps: set[str] = set()
    for c in access.coords:
        deps |= c.vars()
    return frozenset(deps)


# ---------------------------------------------------------------------------
# Structural checks shared by the parser and the builders
# ---------------------------------------------------------------------------


def _check_kernel(kernel: TileKernel) -> TileKernel:
    declared = {v.name for v in kernel.index_vars}
    for v in kernel.index_vars:
        if v.extent < 1:
            raise KernelError(f"index var {v.name} extent must be >= 1")
    tensor_names = [t.name for t in kernel.tensors]
    if len(set(tensor_names)) != len(tensor_names):
        raise KernelError("duplicate tensor names")
    shapes: dict[str, tuple[int, ...]] = {}
    for a in kernel.accesses:
        if len(a.coords) != a.tensor.rank:
            raise KernelError(f"access {a.id}: {len(a.coords)} coords for rank-{a.tensor.rank} tensor")
        for c in a.coords:
            unknown = c.vars() - declared
            if unknown:
                raise KernelError(f"access {a.id}: undeclared variable(s) {sorted(unknown)}")
        _check_bounds(kernel, a)
        if a.direction == "load":
            shapes[a.id] = a.tile_shape
    seen_ops: set[str] = set()
    for op in kernel.ops:
        for operand in op.operands:
            if operand not in shapes:
                raise KernelError(f"op {op.id}: operand {operand} not defined before use")
        if op.kind == "matmul":
            a_shape, b_shape = shapes[op.operands[0]], shapes[op.operands[1]]
            if len(a_shape) != 2 or len(b_shape) != 2 or a_shape[1] != b_shape[0]:
                raise KernelError(f"op {op.id}: matmul shapes {a_shape} x {b_shape} do not conform")
        if op.id in seen_ops or op.id in shapes:
            raise KernelError(f"duplicate id {op.id}")
        seen_ops.add(op.id)
        shapes[op.id] = op.result_tile()
    return kernel


def _check_bounds(kernel: TileKernel, access: Access) -> None:
    """Tile coordinates must stay inside the tensor's tile grid for all
    in-range index values (checked by interval arithmetic on each coord)."""
    extents = {v.name: v.extent for v in kernel.index_vars}
    for coord, bound in zip(access.coords, access.tensor.extents):
        lo, hi = _expr_range(coord, extents)
        if lo < 0 or hi >= bound:
            raise KernelError(
                f"access {access.id}: coordinate {coord} ranges [{lo}, {hi}] outside tile grid 0..{bound - 1}")


def _expr_range(expr: AffineExpr, extents: dict[str, int]) -> tuple[int, int]:
    lo = hi = expr.const
    for coeff, atom in expr.terms:
        if isinstance(atom, str):
            a, b = 0, extents[atom] - 1
        else:
            inner = _expr_range(atom.expr, extents)
            if type(atom).__name__ == "FloorDiv":
                a, b = inner[0] // atom.divisor, inner[1] // atom.divisor
            else:
                a, b = 0, atom.divisor - 1
        lo += coeff * (a if coeff > 0 else b)
        hi += coeff * (b if coeff > 0 else a)
    return lo, hi


# ---------------------------------------------------------------------------
# Workload builders
# ---------------------------------------------------------------------------


def build_gemm(M: int, N: int, K: int, BM: int, BN: int, BK: int, dtype_bytes: int = 2) -> TileKernel:
    """Output-stationary GEMM over an (M/BM, N/BN) grid with a K/BK reduction."""
    for total, block, label in ((M, BM, "M"), (N, BN, "N"), (K, BK, "K")):
        if block < 1 or total % block != 0:
            raise KernelError(f"block size must divide {label}: {total} % {block} != 0")
    gm, gn, kk = M // BM, N // BN, K // BK
    A = TensorRef("A", (gm, kk), dtype_bytes)
    B = TensorRef("B", (kk, gn), dtype_bytes)
    C = TensorRef("C", (gm, gn), dtype_bytes)
    v_gm, v_gn, v_k = AffineExpr.var("gm"), AffineExpr.var("gn"), AffineExpr.var("k")
    kernel = TileKernel(
        name=f"gemm_{M}x{N}x{K}_b{BM}x{BN}x{BK}",
        index_vars=(IndexVar("gm", gm, "grid"), IndexVar("gn", gn, "grid"), IndexVar("k", kk, "sequential")),
        tensors=(A, B, C),
        accesses=(
            Access("a", A, (v_gm, v_k), (BM, BK), "load"),
            Access("b", B, (v_k, v_gn), (BK, BN), "load"),
            Access("c", C, (v_gm, v_gn), (BM, BN), "store"),
        ),
        ops=(TileOp("mm", "matmul", ("a", "b"), (BM, BK, BN)),),
    )
    return _check_kernel(kernel)


def build_flashattention(batch_heads: int, seqlen: int, d: int, Bq: int, Bkv: int,
                         dtype_bytes: int = 2) -> TileKernel:
    """Non-causal attention: per (head, query-block) grid, reduce over kv blocks.

    Key and value tile coordinates depend only on (head, kv block), never on
    the query-block var, so they are the operands a mapping can share across
    cores and reuse across query iterations. The softmax phase is modeled as
    a fixed chain of four elementwise vector ops per score tile.
    """
    for total, block, label in ((seqlen, Bq, "seqlen/Bq"), (seqlen, Bkv, "seqlen/Bkv")):
        if block < 1 or total % block != 0:
            raise KernelError(f"block size must divide {label}: {total} % {block} != 0")
    qb, kvb = seqlen // Bq, seqlen // Bkv
    Q = TensorRef("Q", (batch_heads, qb), dtype_bytes)
    Kt = TensorRef("K", (batch_heads, kvb), dtype_bytes)
    V = TensorRef("V", (batch_heads, kvb), dtype_bytes)
    O = TensorRef("O", (batch_heads, qb), dtype_bytes)
    v_h, v_q, v_kv = AffineExpr.var("h"), AffineExpr.var("q"), AffineExpr.var("kv")
    kernel = TileKernel(
        name=f"flashattention_h{batch_heads}_s{seqlen}_d{d}_b{Bq}x{Bkv}",
        index_vars=(IndexVar("h", batch_heads, "grid"), IndexVar("q", qb, "grid"),
                    IndexVar("kv", kvb, "sequential")),
        tensors=(Q, Kt, V, O),
        accesses=(
            Access("q", Q, (v_h, v_q), (Bq, d), "load"),
            # K tiles are kept transposed so scores come from a plain matmul.
            Access("k", Kt, (v_h, v_kv), (d, Bkv), "load"),
            Access("v", V, (v_h, v_kv), (Bkv, d), "load"),
            Access("o", O, (v_h, v_q), (Bq, d), "store"),
        ),
        ops=(
            TileOp("qk", "matmul", ("q", "k"), (Bq, d, Bkv)),
            TileOp("scale", "elementwise_vector", ("qk",), (Bq, Bkv)),
            TileOp("rowmax", "elementwise_vector", ("scale",), (Bq, Bkv)),
            TileOp("expsub", "elementwise_vector", ("rowmax",), (Bq, Bkv)),
            TileOp("accum", "elementwise_vector", ("expsub",), (Bq, Bkv)),
            TileOp("pv", "matmul", ("accum", "v"), (Bq, Bkv, d)),
        ),
    )
    return _check_kernel(kernel)


# ---------------------------------------------------------------------------
# Parsing (.tk files)
# ---------------------------------------------------------------------------

_KERNEL_RE = re.compile(r"^\s*kernel\s+(\w+)\s*\{(.*)\}\s*$", re.S)
_GRID_RE = re.compile(r"^(grid|seq)\s+(\w+)\s*=\s*(\d+)$")
_TENSOR_RE = re.compile(r"^tensor\s+(\w+)\s*\[([^\]]*)\]\s+elem\s*=\s*(\d+)$")
_LOAD_RE = re.compile(r"^load\s+(\w+)\s*=\s*(\w+)\s*\[([^\]]*)\]\s+tile\s*\(([^)]*)\)$")
_OP_RE = re.compile(r"^op\s+(\w+)\s*=\s*(matmul|vec|scalar)\s*\(([^)]*)\)$")
_STORE_RE = re.compile(r"^store\s+(\w+)\s*\[([^\]]*)\]\s*=\s*(\w+)$")


def parse_kernel(text: str) -> TileKernel:
    """Parse a kernel document; the result is normalized (canonical affine
    coordinate forms, constants folded) and fully shape checked."""
    m = _KERNEL_RE.match(text.strip())
    if not m:
        raise KernelError("expected 'kernel <name> { ... }'")
    name, body = m.groups()

    index_vars: list[IndexVar] = []
    tensors: dict[str, TensorRef] = {}
    accesses: list[Access] = []
    ops: list[TileOp] = []
    result_shapes: dict[str, tuple[int, ...]] = {}
    n_stores = 0

    for raw in body.split(";"):
        stmt = raw.split("#", 1)[0].strip()
        if not stmt:
            continue
        if gm := _GRID_RE.match(stmt):
            kind = "grid" if gm.group(1) == "grid" else "sequential"
            index_vars.append(IndexVar(gm.group(2), int(gm.group(3)), kind))
        elif tm := _TENSOR_RE.match(stmt):
            tname, extents, elem = tm.group(1), tm.group(2), int(tm.group(3))
            shape = tuple(int(p.strip()) for p in extents.split(","))
            if elem not in (1, 2, 4, 8):
                raise KernelError(f"tensor {tname}: element size must be 1/2/4/8 bytes")
            tensors[tname] = TensorRef(tname, shape, elem)
        elif lm := _LOAD_RE.match(stmt):
            aid, tname, coords, tile = lm.groups()
            if tname not in tensors:
                raise KernelError(f"load {aid}: tensor {tname} not declared")
            exprs = _parse_coords(coords)
            tile_shape = tuple(int(p.strip()) for p in tile.split(","))
            accesses.append(Access(aid, tensors[tname], exprs, tile_shape, "load"))
            result_shapes[aid] = tile_shape
        elif om := _OP_RE.match(stmt):
            oid, kind, args = om.groups()
            operands = tuple(p.strip() for p in args.split(","))
            for operand in operands:
                if operand not in result_shapes:
                    raise KernelError(f"op {oid}: operand {operand} not defined")
            if kind == "matmul":
                if len(operands) != 2:
                    raise KernelError(f"op {oid}: matmul takes two operands")
                a, b = result_shapes[operands[0]], result_shapes[operands[1]]
                if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
                    raise KernelError(f"op {oid}: matmul shapes {a} x {b} do not conform")
                shape = (a[0], a[1], b[1])
                ops.append(TileOp(oid, "matmul", operands, shape))
                result_shapes[oid] = (a[0], b[1])
            else:
                opkind = "elementwise_vector" if kind == "vec" else "scalar_op"
                shape = result_shapes[operands[0]]
                ops.append(TileOp(oid, opkind, operands, shape))
                result_shapes[oid] = shape
        elif sm := _STORE_RE.match(stmt):
            tname, coords, src = sm.groups()
            if tname not in tensors:
                raise KernelError(f"store: tensor {tname} not declared")
            if src not in result_shapes:
                raise KernelError(f"store to {tname}: source {src} not defined")
            exprs = _parse_coords(coords)
            shape = result_shapes[src]
            n_stores += 1
            accesses.append(Access(f"st{n_stores}_{tname}", tensors[tname], exprs, shape, "store"))
        else:
            raise KernelError(f"bad statement {stmt!r}")

    kernel = TileKernel(name, tuple(index_vars), tuple(tensors.values()), tuple(accesses), tuple(ops))
    return _check_kernel(kernel)


def _parse_coords(text: str) -> tuple[AffineExpr, ...]:
    try:
        return tuple(parse_affine(p) for p in text.split(","))
    except AffineParseError as exc:
        raise KernelError(str(exc)) from exc
