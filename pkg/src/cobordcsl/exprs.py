"""Arithmetic and boolean expression ASTs shared by the machine and the logic.

Expressions evaluate over a finite value range; evaluation is undefined (None)
when a free variable is unbound or the final result leaves the range.
Metavariables only occur inside predicates, bound by quantifiers; evaluating
one outside a binding environment is a programming error, not undefinedness.
"""

from __future__ import annotations

from dataclasses import dataclass


class Expr:
    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def metavars(self) -> frozenset[str]:
        return frozenset()

    def key(self) -> tuple:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: int

    def free_vars(self):
        return frozenset()

    def key(self):
        return ("const", self.value)

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def free_vars(self):
        return frozenset({self.name})

    def key(self):
        return ("var", self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class MVar(Expr):
    """Metavariable bound by a predicate quantifier."""

    name: str

    def free_vars(self):
        return frozenset()

    def metavars(self):
        return frozenset({self.name})

    def key(self):
        return ("mvar", self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # "+" or "*"
    left: Expr
    right: Expr

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def metavars(self):
        return self.left.metavars() | self.right.metavars()

    def key(self):
        return ("bin", self.op, self.left.key(), self.right.key())

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


def eval_expr_raw(e: Expr, stack, env=None) -> int | None:
    """Integer value of e, or None if a free variable is unbound.

    `stack` maps variable names to values; `env` maps metavariable names.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return stack.get(e.name)
    if isinstance(e, MVar):
        if env is None or e.name not in env:
            raise ValueError(f"unbound metavariable {e.name}")
        return env[e.name]
    if isinstance(e, BinOp):
        l = eval_expr_raw(e.left, stack, env)
        r = eval_expr_raw(e.right, stack, env)
        if l is None or r is None:
            return None
        return l + r if e.op == "+" else l * r
    raise TypeError(f"not an expression: {e!r}")


class BoolExpr:
    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def key(self) -> tuple:
        raise NotImplementedError


@dataclass(frozen=True)
class BConst(BoolExpr):
    value: bool

    def free_vars(self):
        return frozenset()

    def key(self):
        return ("bconst", self.value)

    def __str__(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class BCompare(BoolExpr):
    left: Expr
    right: Expr

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def key(self):
        return ("beq", self.left.key(), self.right.key())

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class BBin(BoolExpr):
    op: str  # "and" / "or"
    left: BoolExpr
    right: BoolExpr

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()

    def key(self):
        return ("bbin", self.op, self.left.key(), self.right.key())

    def __str__(self):
        sym = "/\\" if self.op == "and" else "\\/"
        return f"({self.left} {sym} {self.right})"


@dataclass(frozen=True)
class BNot(BoolExpr):
    """Negation; internal only (guards of the two test() branches)."""

    body: BoolExpr

    def free_vars(self):
        return self.body.free_vars()

    def key(self):
        return ("bnot", self.body.key())

    def __str__(self):
        return f"~({self.body})"


def eval_bool(b: BoolExpr, stack, env=None) -> bool | None:
    """Truth value of b, or None when any free variable is unbound (strict)."""
    if isinstance(b, BConst):
        return b.value
    if isinstance(b, BCompare):
        l = eval_expr_raw(b.left, stack, env)
        r = eval_expr_raw(b.right, stack, env)
        if l is None or r is None:
            return None
        return l == r
    if isinstance(b, BBin):
        l = eval_bool(b.left, stack, env)
        r = eval_bool(b.right, stack, env)
        if l is None or r is None:
            return None
        return (l and r) if b.op == "and" else (l or r)
    if isinstance(b, BNot):
        v = eval_bool(b.body, stack, env)
        return None if v is None else not v
    raise TypeError(f"not a boolean expression: {b!r}")
