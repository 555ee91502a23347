"""Affine index expressions over named integer variables.

Expressions are sums of integer-scaled atoms plus a constant, where an atom
is either a variable or a floor-division / modulo of a nested expression by
a positive integer constant. This covers every index map the toolkit needs:
plain linear tile accesses, wrap-around ring links ((x+1) mod 8), and
block-grouping maps (x floordiv 4).

Expressions are immutable and kept in a normal form (terms sorted by atom,
like atoms merged, zero coefficients dropped) so that structural equality
and hashing behave like semantic equality for linear expressions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Union


class AffineParseError(ValueError):
    """Raised on malformed or non-affine expression text."""


Atom = Union[str, "FloorDiv", "Mod"]


@dataclass(frozen=True)
class FloorDiv:
    expr: "AffineExpr"
    divisor: int

    def __str__(self) -> str:
        return f"({self.expr} / {self.divisor})"


@dataclass(frozen=True)
class Mod:
    expr: "AffineExpr"
    divisor: int

    def __str__(self) -> str:
        return f"({self.expr} % {self.divisor})"


@dataclass(frozen=True)
class AffineExpr:
    """Normal-form affine expression: sum(coeff * atom) + const."""

    terms: tuple[tuple[int, Atom], ...]
    const: int

    # -- construction -----------------------------------------------------

    @staticmethod
    def constant(value: int) -> "AffineExpr":
        return AffineExpr((), int(value))

    @staticmethod
    def var(name: str) -> "AffineExpr":
        return AffineExpr(((1, name),), 0)

    @staticmethod
    def _make(terms: list[tuple[int, Atom]], const: int) -> "AffineExpr":
        merged: dict[Atom, int] = {}
        for coeff, atom in terms:
            merged[atom] = merged.get(atom, 0) + coeff
        kept = [(c, a) for a, c in merged.items() if c != 0]
        kept.sort(key=lambda t: _atom_key(t[1]))
        return AffineExpr(tuple(kept), const)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            other = AffineExpr.constant(other)
        return AffineExpr._make(list(self.terms) + list(other.terms), self.const + other.const)

    def __sub__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            other = AffineExpr.constant(other)
        return self + other.scale(-1)

    def scale(self, k: int) -> "AffineExpr":
        return AffineExpr._make([(c * k, a) for c, a in self.terms], self.const * k)

    def floordiv(self, k: int) -> "AffineExpr":
        if k <= 0:
            raise AffineParseError("floor division requires a positive constant")
        if not self.terms:
            return AffineExpr.constant(self.const // k)
        if k == 1:
            return self
        return AffineExpr(((1, FloorDiv(self, k)),), 0)

    def mod(self, k: int) -> "AffineExpr":
        if k <= 0:
            raise AffineParseError("modulo requires a positive constant")
        if not self.terms:
            return AffineExpr.constant(self.const % k)
        if k == 1:
            return AffineExpr.constant(0)
        return AffineExpr(((1, Mod(self, k)),), 0)

    # -- queries -----------------------------------------------------------

    def vars(self) -> frozenset[str]:
        found: set[str] = set()
        for _, atom in self.terms:
            if isinstance(atom, str):
                found.add(atom)
            else:
                found |= atom.expr.vars()
        return frozenset(found)

    def is_linear(self) -> bool:
        return all(isinstance(a, str) for _, a in self.terms)

    def coeff(self, name: str) -> int:
        """Coefficient of a variable in the linear part (0 if absent)."""
        for c, a in self.terms:
            if a == name:
                return c
        return 0

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.const
        for coeff, atom in self.terms:
            if isinstance(atom, str):
                total += coeff * env[atom]
            elif isinstance(atom, FloorDiv):
                total += coeff * (atom.expr.evaluate(env) // atom.divisor)
            else:
                total += coeff * (atom.expr.evaluate(env) % atom.divisor)
        return total

    def substitute(self, bindings: Mapping[str, "AffineExpr"]) -> "AffineExpr":
        """Replace variables by expressions, renormalizing the result."""
        result = AffineExpr.constant(self.const)
        for coeff, atom in self.terms:
            if isinstance(atom, str):
                repl = bindings.get(atom)
                result = result + (repl.scale(coeff) if repl is not None else AffineExpr(((coeff, atom),), 0))
            else:
                inner = atom.expr.substitute(bindings)
                wrapped = inner.floordiv(atom.divisor) if isinstance(atom, FloorDiv) else inner.mod(atom.divisor)
                result = result + wrapped.scale(coeff)
        return result

    # -- text --------------------------------------------------------------

    def __str__(self) -> str:
        parts: list[str] = []
        for coeff, atom in self.terms:
            text = str(atom)
            if coeff == 1:
                parts.append(text)
            elif coeff == -1:
                parts.append(f"-{text}")
            else:
                parts.append(f"{coeff}*{text}")
        if self.const != 0 or not parts:
            parts.append(str(self.const))
        out = parts[0]
        for p in parts[1:]:
            out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
        return out


def _atom_key(atom: Atom) -> tuple:
    if isinstance(atom, str):
        return (0, atom)
    kind = 1 if isinstance(atom, FloorDiv) else 2
    return (kind, str(atom.expr), atom.divisor)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_CHARS = set("+-*/%()")


def _tokenize(text: str) -> Iterator[tuple[str, str]]:
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in _TOKEN_CHARS:
            yield ("op", ch)
            i += 1
        elif ch.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            yield ("int", text[i:j])
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            yield ("ident", text[i:j])
            i = j
        else:
            raise AffineParseError(f"unexpected character {ch!r} in affine expression")
    yield ("end", "")


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0
        self.text = text

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.pos]

    def next(self) -> tuple[str, str]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_int(self, context: str) -> int:
        kind, value = self.next()
        if kind != "int":
            raise AffineParseError(f"{context} must be an integer constant in {self.text!r}")
        return int(value)

    def parse(self) -> AffineExpr:
        expr = self.parse_sum()
        if self.peek()[0] != "end":
            raise AffineParseError(f"trailing input in affine expression {self.text!r}")
        return expr

    def parse_sum(self) -> AffineExpr:
        expr = self.parse_term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.next()[1]
            rhs = self.parse_term()
            expr = expr + rhs if op == "+" else expr - rhs
        return expr

    def parse_term(self) -> AffineExpr:
        expr = self.parse_factor()
        while self.peek()[1] in ("*", "/", "%") and self.peek()[0] == "op":
            op = self.next()[1]
            if op == "*":
                rhs = self.parse_factor()
                if expr.terms and rhs.terms:
                    raise AffineParseError(f"non-affine product in {self.text!r}")
                expr = expr.scale(rhs.const) if rhs.terms == () else rhs.scale(expr.const)
            elif op == "/":
                expr = expr.floordiv(self.expect_int("divisor"))
            else:
                expr = expr.mod(self.expect_int("modulus"))
        return expr

    def parse_factor(self) -> AffineExpr:
        kind, value = self.next()
        if kind == "int":
            return AffineExpr.constant(int(value))
        if kind == "ident":
            return AffineExpr.var(value)
        if (kind, value) == ("op", "-"):
            return self.parse_factor().scale(-1)
        if (kind, value) == ("op", "("):
            inner = self.parse_sum()
            if self.next() != ("op", ")"):
                raise AffineParseError(f"unbalanced parentheses in {self.text!r}")
            return inner
        raise AffineParseError(f"unexpected token {value!r} in affine expression {self.text!r}")


def parse_affine(text: str) -> AffineExpr:
    """Parse an affine expression with +, -, *const, /const (floor), %const."""
    return _Parser(text).parse()
