"""Concrete syntax: programs, predicates and proof trees.

Programs:  skip, x := E, x := [E], [E] := E, x := malloc(E), dispose(E),
           C ; C, C || C, if B then C else C, while B do C,
           resource r do C, with r do C.
Predicates: emp, true, false, P * Q, P /\\ Q, P \\/ Q, ~P, own(x, p),
           E |->p E', E |-> -, E = E', exists a. P, forall a. P,
           permissions written 1, 1/2, 1/4, 3/4.
Proofs:    parenthesized rule trees (RULE {pre} {post} [key: value]... subproofs...)
           optionally preceded by `context r: {J}, ...`.

All parse errors carry line/column positions.  Pretty-printed ASTs reparse to
equal ASTs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .exprs import (BBin, BCompare, BConst, BNot, BinOp, BoolExpr, Const, Expr,
                    MVar, Var)
from .seplogic import (Emp, PAnd, PBin, PEq, PFalse, PNot, POr, PTrue,
                       PointsTo, Own, Predicate, Quant, Star)


# -- command AST -----------------------------------------------------------------


class Command:
    pass


@dataclass(frozen=True)
class Skip(Command):
    def __str__(self):
        return "skip"


@dataclass(frozen=True)
class AssignC(Command):
    var: str
    expr: Expr

    def __str__(self):
        return f"{self.var} := {self.expr}"


@dataclass(frozen=True)
class LoadC(Command):
    var: str
    expr: Expr

    def __str__(self):
        return f"{self.var} := [{self.expr}]"


@dataclass(frozen=True)
class StoreC(Command):
    loc_expr: Expr
    val_expr: Expr

    def __str__(self):
        return f"[{self.loc_expr}] := {self.val_expr}"


@dataclass(frozen=True)
class MallocC(Command):
    var: str
    expr: Expr

    def __str__(self):
        return f"{self.var} := malloc({self.expr})"


@dataclass(frozen=True)
class DisposeC(Command):
    expr: Expr

    def __str__(self):
        return f"dispose({self.expr})"


@dataclass(frozen=True)
class SeqC(Command):
    first: Command
    second: Command

    def __str__(self):
        return f"{self.first} ; {self.second}"


@dataclass(frozen=True)
class ParC(Command):
    left: Command
    right: Command

    def __str__(self):
        return f"({self.left} || {self.right})"


@dataclass(frozen=True)
class IfC(Command):
    guard: BoolExpr
    then_branch: Command
    else_branch: Command

    def __str__(self):
        return f"if {self.guard} then ({self.then_branch}) else ({self.else_branch})"


@dataclass(frozen=True)
class WhileC(Command):
    guard: BoolExpr
    body: Command

    def __str__(self):
        return f"while {self.guard} do ({self.body})"


@dataclass(frozen=True)
class ResourceC(Command):
    lock: str
    body: Command

    def __str__(self):
        return f"resource {self.lock} do ({self.body})"


@dataclass(frozen=True)
class WithC(Command):
    lock: str
    body: Command

    def __str__(self):
        return f"with {self.lock} do ({self.body})"


# -- proof AST -------------------------------------------------------------------


RULES = ("AFF", "STORE", "LOAD", "IF", "SEQ", "DISJ", "RES", "WHEN", "PAR", "FRAME")


@dataclass(frozen=True)
class ProofNode:
    rule: str
    pre: Predicate
    post: Predicate
    params: tuple  # of (name, value) pairs; values: Predicate | int | Fraction
    children: tuple

    def param(self, name, default=None):
        for k, v in self.params:
            if k == name:
                return v
        return default


@dataclass(frozen=True)
class ProofFile:
    context: tuple  # of (lock, Predicate)
    root: ProofNode


# -- tokenizer -------------------------------------------------------------------


class SyntaxErrorAt(Exception):
    def __init__(self, msg, line, col):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


SYMBOLS = ("|->", ":=", "||", "/\\", "\\/", "(", ")", "{", "}", "[", "]", ";",
           "~", "*", "+", "=", ".", ",", ":", "/", "-")

KEYWORDS = {"skip", "malloc", "dispose", "if", "then", "else", "while", "do",
            "resource", "with", "true", "false", "emp", "own", "exists",
            "forall", "context"}


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "ident" | "sym" | "kw" | "rule" | "eof"
    value: object
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":  # comment to end of line
            while i < n and text[i] != "\n":
                i += 1
            continue
        matched = None
        for s in SYMBOLS:
            if text.startswith(s, i):
                matched = s
                break
        if matched:
            toks.append(Token("sym", matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", int(text[i:j]), line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word in KEYWORDS:
                kind = "kw"
            elif word in RULES:
                kind = "rule"
            else:
                kind = "ident"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        raise SyntaxErrorAt(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", None, line, col))
    return toks


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg):
        t = self.peek()
        raise SyntaxErrorAt(msg, t.line, t.col)

    def expect(self, kind, value=None) -> Token:
        t = self.peek()
        if t.kind != kind or (value is not None and t.value != value):
            want = value if value is not None else kind
            raise SyntaxErrorAt(f"expected {want!r}, found {t.value!r}",
                                t.line, t.col)
        return self.next()

    def accept(self, kind, value=None) -> bool:
        t = self.peek()
        if t.kind == kind and (value is None or t.value == value):
            self.next()
            return True
        return False

    # -- expressions ------------------------------------------------------

    def parse_expr(self, bound=frozenset()) -> Expr:
        e = self.parse_term(bound)
        while self.accept("sym", "+"):
            e = BinOp("+", e, self.parse_term(bound))
        return e

    def parse_term(self, bound) -> Expr:
        e = self.parse_factor(bound)
        while self.peek().kind == "sym" and self.peek().value == "*":
            # '*' only multiplies inside expressions; predicate contexts
            # call parse_expr on sub-positions where this is unambiguous
            self.next()
            e = BinOp("*", e, self.parse_factor(bound))
        return e

    def parse_factor(self, bound) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Const(t.value)
        if t.kind == "ident":
            self.next()
            return MVar(t.value) if t.value in bound else Var(t.value)
        if t.kind == "sym" and t.value == "(":
            self.next()
            e = self.parse_expr(bound)
            self.expect("sym", ")")
            return e
        self.error("expected an expression")

    # -- booleans ---------------------------------------------------------

    def parse_bool(self) -> BoolExpr:
        b = self.parse_band()
        while self.accept("sym", "\\/"):
            b = BBin("or", b, self.parse_band())
        return b

    def parse_band(self) -> BoolExpr:
        b = self.parse_batom()
        while self.accept("sym", "/\\"):
            b = BBin("and", b, self.parse_batom())
        return b

    def parse_batom(self) -> BoolExpr:
        t = self.peek()
        if t.kind == "kw" and t.value == "true":
            self.next()
            return BConst(True)
        if t.kind == "kw" and t.value == "false":
            self.next()
            return BConst(False)
        if t.kind == "sym" and t.value == "(":
            self.next()
            b = self.parse_bool()
            self.expect("sym", ")")
            return b
        e = self.parse_expr()
        self.expect("sym", "=")
        return BCompare(e, self.parse_expr())

    # -- commands -----------------------------------------------------------

    def parse_command(self) -> Command:
        c = self.parse_seq()
        while self.accept("sym", "||"):
            c = ParC(c, self.parse_seq())
        return c

    def parse_seq(self) -> Command:
        c = self.parse_atom()
        while self.accept("sym", ";"):
            c = SeqC(c, self.parse_atom())
        return c

    def parse_atom(self) -> Command:
        t = self.peek()
        if t.kind == "sym" and t.value in ("(", "{"):
            close = ")" if t.value == "(" else "}"
            self.next()
            c = self.parse_command()
            self.expect("sym", close)
            return c
        if t.kind == "kw" and t.value == "skip":
            self.next()
            return Skip()
        if t.kind == "kw" and t.value == "dispose":
            self.next()
            self.expect("sym", "(")
            e = self.parse_expr()
            self.expect("sym", ")")
            return DisposeC(e)
        if t.kind == "kw" and t.value == "if":
            self.next()
            b = self.parse_bool()
            self.expect("kw", "then")
            c1 = self.parse_atom()
            self.expect("kw", "else")
            c2 = self.parse_atom()
            return IfC(b, c1, c2)
        if t.kind == "kw" and t.value == "while":
            self.next()
            b = self.parse_bool()
            self.expect("kw", "do")
            return WhileC(b, self.parse_atom())
        if t.kind == "kw" and t.value in ("resource", "with"):
            self.next()
            r = self.expect("ident").value
            self.expect("kw", "do")
            body = self.parse_atom()
            return ResourceC(r, body) if t.value == "resource" else WithC(r, body)
        if t.kind == "sym" and t.value == "[":
            self.next()
            loc = self.parse_expr()
            self.expect("sym", "]")
            self.expect("sym", ":=")
            return StoreC(loc, self.parse_expr())
        if t.kind == "ident":
            x = self.next().value
            self.expect("sym", ":=")
            u = self.peek()
            if u.kind == "sym" and u.value == "[":
                self.next()
                e = self.parse_expr()
                self.expect("sym", "]")
                return LoadC(x, e)
            if u.kind == "kw" and u.value == "malloc":
                self.next()
                self.expect("sym", "(")
                e = self.parse_expr()
                self.expect("sym", ")")
                return MallocC(x, e)
            return AssignC(x, self.parse_expr())
        self.error("expected a command")

    # -- predicates -----------------------------------------------------------

    def parse_predicate(self, bound=frozenset()) -> Predicate:
        t = self.peek()
        if t.kind == "kw" and t.value in ("exists", "forall"):
            self.next()
            name = self.expect("ident").value
            self.expect("sym", ".")
            body = self.parse_predicate(bound | {name})
            return Quant(t.value, name, body)
        return self.parse_por(bound)

    def parse_por(self, bound) -> Predicate:
        p = self.parse_pand(bound)
        while self.accept("sym", "\\/"):
            p = POr(p, self.parse_pand(bound))
        return p

    def parse_pand(self, bound) -> Predicate:
        p = self.parse_pstar(bound)
        while self.accept("sym", "/\\"):
            p = PAnd(p, self.parse_pstar(bound))
        return p

    def parse_pstar(self, bound) -> Predicate:
        p = self.parse_punary(bound)
        while self.accept("sym", "*"):
            p = Star(p, self.parse_punary(bound))
        return p

    _fresh = 0

    def parse_punary(self, bound) -> Predicate:
        t = self.peek()
        if t.kind == "sym" and t.value == "~":
            self.next()
            return PNot(self.parse_punary(bound))
        if t.kind == "kw" and t.value == "emp":
            self.next()
            return Emp()
        if t.kind == "kw" and t.value == "true":
            self.next()
            return PTrue()
        if t.kind == "kw" and t.value == "false":
            self.next()
            return PFalse()
        if t.kind == "kw" and t.value in ("exists", "forall"):
            return self.parse_predicate(bound)
        if t.kind == "kw" and t.value == "own":
            self.next()
            self.expect("sym", "(")
            x = self.expect("ident").value
            self.expect("sym", ",")
            perm = self.parse_perm()
            self.expect("sym", ")")
            return Own(x, perm)
        if t.kind == "sym" and t.value == "(":
            # could be a parenthesized predicate or expression; try predicate
            save = self.pos
            self.next()
            try:
                p = self.parse_predicate(bound)
                self.expect("sym", ")")
                return p
            except SyntaxErrorAt:
                self.pos = save
        e = self.parse_atomic_expr_for_pred(bound)
        u = self.peek()
        if u.kind == "sym" and u.value == "|->":
            self.next()
            perm = self.parse_opt_perm()
            if self.accept("sym", "-"):
                Parser._fresh += 1
                name = f"_w{Parser._fresh}"
                return Quant("exists", name, PointsTo(e, perm, MVar(name)))
            return PointsTo(e, perm, self.parse_pred_expr(bound))
        if u.kind == "sym" and u.value == "=":
            self.next()
            return PEq(e, self.parse_pred_expr(bound))
        self.error("expected |-> or = after expression in predicate")

    def parse_atomic_expr_for_pred(self, bound) -> Expr:
        # additive expressions only: '*' belongs to the separating conjunction
        e = self.parse_factor(bound)
        while self.accept("sym", "+"):
            e = BinOp("+", e, self.parse_factor(bound))
        return e

    def parse_pred_expr(self, bound) -> Expr:
        return self.parse_atomic_expr_for_pred(bound)

    def parse_opt_perm(self) -> Fraction:
        # a permission after |-> must be a fraction (int/int); a bare int is
        # the pointed-to value at the default full permission
        if (self.peek().kind == "int" and self.toks[self.pos + 1].kind == "sym"
                and self.toks[self.pos + 1].value == "/"):
            return self.parse_perm()
        return Fraction(1)

    def parse_perm(self) -> Fraction:
        num = self.expect("int").value
        if self.accept("sym", "/"):
            den = self.expect("int").value
            return Fraction(num, den)
        return Fraction(num)

    # -- proofs -----------------------------------------------------------------

    def parse_proof_file(self) -> ProofFile:
        ctx = []
        if self.accept("kw", "context"):
            while True:
                r = self.expect("ident").value
                self.expect("sym", ":")
                self.expect("sym", "{")
                p = self.parse_predicate()
                self.expect("sym", "}")
                ctx.append((r, p))
                if not self.accept("sym", ","):
                    break
        root = self.parse_proof_node()
        return ProofFile(tuple(ctx), root)

    def parse_proof_node(self) -> ProofNode:
        self.expect("sym", "(")
        t = self.peek()
        if t.kind != "rule":
            self.error(f"unknown rule tag {t.value!r}")
        rule = self.next().value
        self.expect("sym", "{")
        pre = self.parse_predicate()
        self.expect("sym", "}")
        self.expect("sym", "{")
        post = self.parse_predicate()
        self.expect("sym", "}")
        params = []
        while self.peek().kind == "sym" and self.peek().value == "[":
            self.next()
            key = self.expect("ident").value
            self.expect("sym", ":")
            u = self.peek()
            if u.kind == "sym" and u.value == "{":
                self.next()
                val = self.parse_predicate()
                self.expect("sym", "}")
            else:
                val = self.parse_perm()
                if val.denominator == 1:
                    val = val if key == "perm" else int(val)
            params.append((key, val))
            self.expect("sym", "]")
        children = []
        while self.peek().kind == "sym" and self.peek().value == "(":
            children.append(self.parse_proof_node())
        self.expect("sym", ")")
        return ProofNode(rule, pre, post, tuple(params), tuple(children))


def parse_program(text: str) -> Command:
    p = Parser(text)
    c = p.parse_command()
    p.expect("eof")
    return c


def parse_predicate(text: str) -> Predicate:
    p = Parser(text)
    pred = p.parse_predicate()
    p.expect("eof")
    return pred


def parse_proof(text: str) -> ProofFile:
    p = Parser(text)
    pf = p.parse_proof_file()
    p.expect("eof")
    return pf
