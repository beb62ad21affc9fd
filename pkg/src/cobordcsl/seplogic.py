"""Permissions, logical states, CSL predicates, and separated-state models.

Logical states refine memory states with a fractional permission on every
stack variable and heap cell.  Permissions form a partial cancellative
commutative monoid: dyadic fractions in (0, 1] with addition, undefined above
1; the top element 1 admits no multiples.  A separated state partitions the
logical memory between the Code, each unheld lock, and the Frame, with unheld
locks satisfying their invariants.  The separated machine models (two- and
three-player) are asynchronous graphs over these states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .agraph import AsyncGraph, CapacityError
from .exprs import Expr, eval_expr_raw
from .machine import (ERROR, Acquire, Alloc, Assign, Dispose, Footprint, Instruction,
                      Load, MachineState, MemoryState, ModelConfig, Nop, Release,
                      Store, TestB, _build_tiles, eval_expr, footprint, step)

TOP = Fraction(1)


def perm_valid(p: Fraction, denom_exp: int) -> bool:
    return 0 < p <= 1 and (p.denominator & (p.denominator - 1)) == 0 \
        and p.denominator <= 2 ** denom_exp


def perm_add(p: Fraction, q: Fraction) -> Fraction | None:
    """Partial addition of permissions: undefined above full ownership."""
    r = p + q
    return r if r <= 1 else None


# -- logical states ----------------------------------------------------------


@dataclass(frozen=True)
class LogicalState:
    """Stack and heap with a permission attached to every entry."""

    stack: tuple[tuple[str, tuple[int, Fraction]], ...]
    heap: tuple[tuple[int, tuple[int, Fraction]], ...]

    def __post_init__(self):
        object.__setattr__(self, "stack", tuple(sorted(self.stack)))
        object.__setattr__(self, "heap", tuple(sorted(self.heap)))

    @property
    def stack_map(self) -> dict:
        return dict(self.stack)

    @property
    def heap_map(self) -> dict:
        return dict(self.heap)

    def values_stack(self) -> dict:
        return {x: vp[0] for x, vp in self.stack}

    def is_empty(self) -> bool:
        return not self.stack and not self.heap

    def entries(self):
        for x, vp in self.stack:
            yield ("v", x), vp
        for l, vp in self.heap:
            yield ("l", l), vp

    def key(self) -> tuple:
        return (self.stack, self.heap)


EMPTY_LSTATE = LogicalState((), ())


def lstate(stack=(), heap=()) -> LogicalState:
    def norm(items):
        out = []
        for k, v, p in items:
            out.append((k, (v, Fraction(p))))
        return tuple(out)

    return LogicalState(norm(stack), norm(heap))


def _from_entries(entries) -> LogicalState:
    stack = []
    heap = []
    for (tag, name), vp in entries:
        (stack if tag == "v" else heap).append((name, vp))
    return LogicalState(tuple(stack), tuple(heap))


def sep_product(s1: LogicalState, s2: LogicalState) -> LogicalState | None:
    """Separation product: union on disjoint entries; on shared entries the
    values must agree and the permissions add (undefined past full)."""
    stack = dict(s1.stack)
    for x, (v, p) in s2.stack:
        if x in stack:
            v0, p0 = stack[x]
            if v0 != v:
                return None
            psum = perm_add(p0, p)
            if psum is None:
                return None
            stack[x] = (v, psum)
        else:
            stack[x] = (v, p)
    heap = dict(s1.heap)
    for l, (v, p) in s2.heap:
        if l in heap:
            v0, p0 = heap[l]
            if v0 != v:
                return None
            psum = perm_add(p0, p)
            if psum is None:
                return None
            heap[l] = (v, psum)
        else:
            heap[l] = (v, p)
    return LogicalState(tuple(stack.items()), tuple(heap.items()))


def sep_product_many(states) -> LogicalState | None:
    acc = EMPTY_LSTATE
    for s in states:
        acc = sep_product(acc, s)
        if acc is None:
            return None
    return acc


def sep_difference(whole: LogicalState, part: LogicalState) -> LogicalState | None:
    """The unique s with part * s == whole, if any (the monoid is cancellative)."""
    entries = []
    wstack, wheap = whole.stack_map, whole.heap_map
    for x, (v, p) in part.stack:
        if x not in wstack or wstack[x][0] != v or wstack[x][1] < p:
            return None
    for l, (v, p) in part.heap:
        if l not in wheap or wheap[l][0] != v or wheap[l][1] < p:
            return None
    pstack, pheap = part.stack_map, part.heap_map
    stack = []
    for x, (v, p) in whole.stack:
        rem = p - pstack.get(x, (v, Fraction(0)))[1]
        if rem:
            stack.append((x, (v, rem)))
    heap = []
    for l, (v, p) in whole.heap:
        rem = p - pheap.get(l, (v, Fraction(0)))[1]
        if rem:
            heap.append((l, (v, rem)))
    return LogicalState(tuple(stack), tuple(heap))


def splits2(s: LogicalState, denom_exp: int):
    """All ordered splits s = s1 * s2, permission-quantized at 2^-denom_exp."""
    d = 2 ** denom_exp
    items = list(s.entries())
    per_entry = []
    for key, (v, p) in items:
        num = int(p * d)
        opts = [(key, v, k) for k in range(num + 1)]
        per_entry.append(opts)
    out = []
    for choice in itertools.product(*per_entry) if per_entry else [()]:
        left = []
        right = []
        for key, v, k in choice:
            num = int(dict(items)[key][1] * d)
            if k:
                left.append((key, (v, Fraction(k, d))))
            if num - k:
                right.append((key, (v, Fraction(num - k, d))))
        out.append((_from_entries(left), _from_entries(right)))
    return out


def erase_lstate(s: LogicalState) -> MemoryState:
    return MemoryState(tuple((x, v) for x, (v, _) in s.stack),
                       tuple((l, v) for l, (v, _) in s.heap))


# -- predicates --------------------------------------------------------------


class Predicate:
    def key(self) -> tuple:
        raise NotImplementedError

    def metavars_ok(self, bound: frozenset) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Emp(Predicate):
    def key(self):
        return ("emp",)

    def metavars_ok(self, bound):
        return True

    def __str__(self):
        return "emp"


@dataclass(frozen=True)
class PTrue(Predicate):
    def key(self):
        return ("true",)

    def metavars_ok(self, bound):
        return True

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class PFalse(Predicate):
    def key(self):
        return ("false",)

    def metavars_ok(self, bound):
        return True

    def __str__(self):
        return "false"


@dataclass(frozen=True)
class PNot(Predicate):
    body: Predicate

    def key(self):
        return ("not", self.body.key())

    def metavars_ok(self, bound):
        return self.body.metavars_ok(bound)

    def __str__(self):
        return f"~({self.body})"


@dataclass(frozen=True)
class PBin(Predicate):
    op: str  # "and" | "or" | "star"
    left: Predicate
    right: Predicate

    def key(self):
        return (self.op, self.left.key(), self.right.key())

    def metavars_ok(self, bound):
        return self.left.metavars_ok(bound) and self.right.metavars_ok(bound)

    def __str__(self):
        sym = {"and": "/\\", "or": "\\/", "star": "*"}[self.op]
        return f"({self.left} {sym} {self.right})"


def Star(p, q):
    return PBin("star", p, q)


def PAnd(p, q):
    return PBin("and", p, q)


def POr(p, q):
    return PBin("or", p, q)


@dataclass(frozen=True)
class Quant(Predicate):
    kind: str  # "exists" | "forall"
    name: str
    body: Predicate

    def key(self):
        return (self.kind, self.name, self.body.key())

    def metavars_ok(self, bound):
        return self.body.metavars_ok(bound | {self.name})

    def __str__(self):
        return f"{self.kind} {self.name}. {self.body}"


@dataclass(frozen=True)
class PointsTo(Predicate):
    loc: Expr
    perm: Fraction
    val: Expr

    def key(self):
        return ("pt", self.loc.key(), self.perm, self.val.key())

    def metavars_ok(self, bound):
        return (self.loc.metavars() | self.val.metavars()) <= bound

    def __str__(self):
        p = "" if self.perm == 1 else str(self.perm)
        return f"{self.loc} |->{p} {self.val}"


@dataclass(frozen=True)
class Own(Predicate):
    var: str
    perm: Fraction

    def key(self):
        return ("own", self.var, self.perm)

    def metavars_ok(self, bound):
        return True

    def __str__(self):
        return f"own({self.var}, {self.perm})"


@dataclass(frozen=True)
class PEq(Predicate):
    left: Expr
    right: Expr

    def key(self):
        return ("eq", self.left.key(), self.right.key())

    def metavars_ok(self, bound):
        return (self.left.metavars() | self.right.metavars()) <= bound

    def __str__(self):
        return f"{self.left} = {self.right}"


class MalformedPredicate(Exception):
    pass


def bool_to_predicate(b) -> Predicate:
    """Boolean guards reused as predicates (for test()-related colors)."""
    from .exprs import BBin, BCompare, BConst, BNot as XBNot
    if isinstance(b, BConst):
        return PTrue() if b.value else PFalse()
    if isinstance(b, BCompare):
        return PEq(b.left, b.right)
    if isinstance(b, BBin):
        ctor = PAnd if b.op == "and" else POr
        return ctor(bool_to_predicate(b.left), bool_to_predicate(b.right))
    if isinstance(b, XBNot):
        return PNot(bool_to_predicate(b.body))
    raise TypeError(f"not a boolean expression: {b!r}")


class SatContext:
    """Satisfaction judgment over the finite domains of one configuration.

    Caches satisfying sets per predicate; the star clause searches all
    permission-quantized splits.
    """

    def __init__(self, cfg: ModelConfig, denom_exp: int = 2):
        self.cfg = cfg
        self.denom_exp = denom_exp
        self._all_states: list[LogicalState] | None = None
        self._sat_sets: dict = {}
        self._memo: dict = {}

    def all_logical_states(self) -> list[LogicalState]:
        if self._all_states is None:
            d = 2 ** self.denom_exp
            per_entry = []
            for x in self.cfg.variables:
                per_entry.append([None] + [("v", x, v, Fraction(k, d))
                                           for v in self.cfg.values
                                           for k in range(1, d + 1)])
            for l in self.cfg.locations:
                per_entry.append([None] + [("l", l, v, Fraction(k, d))
                                           for v in self.cfg.values
                                           for k in range(1, d + 1)])
            states = []
            for choice in itertools.product(*per_entry) if per_entry else [()]:
                stack = []
                heap = []
                for c in choice:
                    if c is None:
                        continue
                    tag, name, v, p = c
                    (stack if tag == "v" else heap).append((name, (v, p)))
                states.append(LogicalState(tuple(stack), tuple(heap)))
            states.sort(key=lambda s: s.key())
            self._all_states = states
        return self._all_states

    def check_predicate(self, p: Predicate):
        if not p.metavars_ok(frozenset()):
            raise MalformedPredicate(f"unbound metavariable in {p}")
        for sub in _walk(p):
            if isinstance(sub, PointsTo) and not perm_valid(sub.perm, self.denom_exp):
                raise MalformedPredicate(f"invalid permission {sub.perm} in {p}")
            if isinstance(sub, Own) and not perm_valid(sub.perm, self.denom_exp):
                raise MalformedPredicate(f"invalid permission {sub.perm} in {p}")

    def satisfies(self, s: LogicalState, p: Predicate, env: tuple = ()) -> bool:
        self.check_predicate(p) if env == () else None
        return self._sat(s, p, env)

    def _sat(self, s: LogicalState, p: Predicate, env: tuple) -> bool:
        memo_key = (s.key(), p.key(), env)
        hit = self._memo.get(memo_key)
        if hit is not None:
            return hit
        result = self._sat_raw(s, p, dict(env), env)
        self._memo[memo_key] = result
        return result

    def _sat_raw(self, s: LogicalState, p: Predicate, envd: dict, env: tuple) -> bool:
        if isinstance(p, Emp):
            return s.is_empty()
        if isinstance(p, PTrue):
            return True
        if isinstance(p, PFalse):
            return False
        if isinstance(p, PNot):
            return not self._sat(s, p.body, env)
        if isinstance(p, PBin):
            if p.op == "and":
                return self._sat(s, p.left, env) and self._sat(s, p.right, env)
            if p.op == "or":
                return self._sat(s, p.left, env) or self._sat(s, p.right, env)
            for s1, s2 in splits2(s, self.denom_exp):
                if self._sat(s1, p.left, env) and self._sat(s2, p.right, env):
                    return True
            return False
        if isinstance(p, Quant):
            values = self.cfg.values
            results = (self._sat(s, p.body, tuple(sorted(dict(env, **{p.name: v}).items())))
                       for v in values)
            return any(results) if p.kind == "exists" else all(results)
        if isinstance(p, PointsTo):
            v = eval_expr_raw(p.loc, {}, envd)
            w = eval_expr_raw(p.val, {}, envd)
            if v is None or w is None or v not in self.cfg.locations:
                return False
            return s.stack == () and s.heap == ((v, (w, p.perm)),)
        if isinstance(p, Own):
            return (s.heap == () and len(s.stack) == 1
                    and s.stack[0][0] == p.var and s.stack[0][1][1] == p.perm)
        if isinstance(p, PEq):
            fv = p.left.free_vars() | p.right.free_vars()
            stack_vals = s.values_stack()
            if not fv <= set(stack_vals):
                return False
            return (eval_expr_raw(p.left, stack_vals, envd)
                    == eval_expr_raw(p.right, stack_vals, envd))
        raise TypeError(f"unknown predicate {p!r}")

    def sat_set(self, p: Predicate) -> frozenset:
        """Keys of all logical states satisfying p (the predicate's color)."""
        k = p.key()
        if k not in self._sat_sets:
            self.check_predicate(p)
            self._sat_sets[k] = frozenset(
                s.key() for s in self.all_logical_states() if self._sat(s, p, ()))
        return self._sat_sets[k]

    def equivalent(self, p: Predicate, q: Predicate) -> bool:
        return self.sat_set(p) == self.sat_set(q)

    def implies_def(self, p: Predicate, guard) -> bool:
        """P => def(B): every P-state binds all free variables of B."""
        fv = guard.free_vars()
        for s in self.all_logical_states():
            if self._sat(s, p, ()) and not fv <= set(s.values_stack()):
                return False
        return True


def _walk(p: Predicate):
    yield p
    if isinstance(p, PNot):
        yield from _walk(p.body)
    elif isinstance(p, PBin):
        yield from _walk(p.left)
        yield from _walk(p.right)
    elif isinstance(p, Quant):
        yield from _walk(p.body)


# -- separated states ---------------------------------------------------------


HELD_BY_CODE = ("C",)
HELD_BY_FRAME = ("F",)


@dataclass(frozen=True)
class SeparatedState:
    """Partition (code part, lock vector, frame part) of the logical memory.

    The lock vector assigns each lock either a holder tag or, when unheld, the
    logical state the lock protects."""

    code: LogicalState
    vector: tuple  # of (lock, HELD_BY_CODE | HELD_BY_FRAME | ("S", LogicalState))
    frame: LogicalState

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(sorted(self.vector)))

    def slot(self, r: str):
        for name, s in self.vector:
            if name == r:
                return s
        raise KeyError(r)

    def unheld(self):
        return [(name, s[1]) for name, s in self.vector if s[0] == "S"]

    def with_slot(self, r: str, slot) -> "SeparatedState":
        return SeparatedState(self.code,
                              tuple((n, slot if n == r else s) for n, s in self.vector),
                              self.frame)

    def key(self) -> tuple:
        vec = tuple((n, s if s[0] != "S" else ("S", s[1].key()))
                    for n, s in self.vector)
        return ("sep", self.code.key(), vec, self.frame.key())


@dataclass(frozen=True)
class LockContext:
    """Ordered lock context r1: I1, ..., rn: In."""

    entries: tuple  # of (name, Predicate)

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate lock names in context")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    def invariant(self, r: str) -> Predicate:
        for n, p in self.entries:
            if n == r:
                return p
        raise KeyError(r)

    def without(self, r: str) -> "LockContext":
        return LockContext(tuple((n, p) for n, p in self.entries if n != r))

    def extended(self, r: str, inv: Predicate) -> "LockContext":
        return LockContext(self.entries + ((r, inv),))


def big_product(s: SeparatedState) -> LogicalState | None:
    return sep_product_many([s.code] + [ls for _, ls in s.unheld()] + [s.frame])


def sep_state_valid(s: SeparatedState, gamma: LockContext, sat: SatContext
                    ) -> tuple[bool, str | None]:
    """Definedness of the big separation product plus per-lock invariants."""
    if set(n for n, _ in s.vector) != set(gamma.names):
        return False, "lock vector does not match the context"
    if big_product(s) is None:
        return False, "separation product undefined"
    for r, ls in s.unheld():
        if not sat.satisfies(ls, gamma.invariant(r)):
            return False, f"unheld lock {r} violates its invariant"
    return True, None


def erase(s: SeparatedState) -> MachineState:
    """Multiply the components, drop permissions; held locks are the taken ones."""
    total = big_product(s)
    if total is None:
        raise ValueError("cannot erase an invalid separated state")
    held = tuple(n for n, sl in s.vector if sl[0] in ("C", "F"))
    return MachineState(erase_lstate(total), held)


# -- separated machine models --------------------------------------------------

# Internal representation shared by the two- and three-player builders: a state
# is (regions, vector) with regions = (code parts..., frame) and vector slots
# either a holder tag (one of the region names) or ("S", LogicalState).


def _compositions(total_min, total_max, n_parts, denom):
    """All n_parts-vectors of numerators >= 0 with total in [total_min, total_max]."""
    out = []

    def rec(prefix, remaining_parts, acc):
        if remaining_parts == 0:
            if total_min <= acc <= total_max:
                out.append(tuple(prefix))
            return
        for k in range(0, total_max - acc + 1):
            prefix.append(k)
            rec(prefix, remaining_parts - 1, acc + k)
            prefix.pop()

    rec([], n_parts, 0)
    return out


def _enumerate_split_states(gamma: LockContext, cfg: ModelConfig, sat: SatContext,
                            region_tags: tuple[str, ...]):
    """All valid (regions, vector) states: every distribution of every memory
    cell among the regions and the unheld lock slots, invariants enforced."""
    d = 2 ** sat.denom_exp
    cells = [("v", x) for x in cfg.variables] + [("l", l) for l in cfg.locations]
    slot_choices = []
    for r in gamma.names:
        slot_choices.append([(r, tag) for tag in region_tags] + [(r, "S")])
    states = []
    for shape in itertools.product(*slot_choices) if slot_choices else [()]:
        unheld = [r for r, tag in shape if tag == "S"]
        n_parts = len(region_tags) + len(unheld)
        cell_opts = []
        for cell in cells:
            opts = [None]
            for v in cfg.values:
                for comp in _compositions(1, d, n_parts, d):
                    opts.append((cell, v, comp))
            cell_opts.append(opts)
        for choice in itertools.product(*cell_opts) if cell_opts else [()]:
            parts_entries = [[] for _ in range(n_parts)]
            for c in choice:
                if c is None:
                    continue
                cell, v, comp = c
                for i, k in enumerate(comp):
                    if k:
                        parts_entries[i].append((cell, (v, Fraction(k, d))))
            parts = [_from_entries(es) for es in parts_entries]
            regions = tuple(parts[:len(region_tags)])
            slot_states = parts[len(region_tags):]
            ok = True
            vector = []
            si = 0
            for r, tag in shape:
                if tag == "S":
                    ls = slot_states[si]
                    si += 1
                    if not sat.satisfies(ls, gamma.invariant(r)):
                        ok = False
                        break
                    vector.append((r, ("S", ls)))
                else:
                    vector.append((r, (tag,)))
            if ok:
                states.append((regions, tuple(sorted(vector))))
    states.sort(key=lambda s: _split_state_key(s, region_tags))
    return states


def _split_state_key(state, region_tags):
    regions, vector = state
    vec = tuple((n, s if s[0] != "S" else ("S", s[1].key())) for n, s in vector)
    return tuple(r.key() for r in regions) + (vec,)


def _erase_split_state(state, region_tags) -> MachineState:
    regions, vector = state
    total = sep_product_many(list(regions) + [s[1] for _, s in vector if s[0] == "S"])
    if total is None:
        raise ValueError("invalid separated state")
    held = tuple(n for n, s in vector if s[0] != "S")
    return MachineState(erase_lstate(total), held)


def _apply_memory_update(region: LogicalState, m: Instruction,
                         erased: MachineState, cfg: ModelConfig
                         ) -> LogicalState | None:
    """The mover's region after a (non-lock) instruction, or None if it cannot
    act inside this region.  Reads work at any permission; writes (and
    dispose) require full ownership of the touched entry; alloc introduces the
    fresh cell at full permission."""
    fp = footprint(m, erased, cfg)
    entries = dict(region.entries())
    dom = set(entries)
    if not (fp.read | fp.write) <= dom:
        return None
    for key in fp.write:
        if entries[key][1] != TOP:
            return None
    mu = erased.memory
    if isinstance(m, Assign):
        v = eval_expr(m.expr, mu, cfg)
        x = m.var
        return _from_entries([(k, vp if k != ("v", x) else (v, vp[1]))
                              for k, vp in region.entries()])
    if isinstance(m, Load):
        addr = eval_expr(m.expr, mu, cfg)
        val = mu.heap_map[addr]
        x = m.var
        return _from_entries([(k, vp if k != ("v", x) else (val, vp[1]))
                              for k, vp in region.entries()])
    if isinstance(m, Store):
        addr = eval_expr(m.loc_expr, mu, cfg)
        v = eval_expr(m.val_expr, mu, cfg)
        if ("l", addr) not in dom:
            return None
        return _from_entries([(k, vp if k != ("l", addr) else (v, vp[1]))
                              for k, vp in region.entries()])
    if isinstance(m, (TestB, Nop)):
        return region
    if isinstance(m, Alloc):
        v = eval_expr(m.expr, mu, cfg)
        entries = [(k, vp if k != ("v", m.var) else (m.loc, vp[1]))
                   for k, vp in region.entries()]
        entries.append((("l", m.loc), (v, TOP)))
        return _from_entries(entries)
    if isinstance(m, Dispose):
        addr = eval_expr(m.expr, mu, cfg)
        if ("l", addr) not in dom or entries[("l", addr)][1] != TOP:
            return None
        return _from_entries([(k, vp) for k, vp in region.entries()
                              if k != ("l", addr)])
    raise TypeError(f"not a memory instruction: {m!r}")


def _split_state_moves(state, mover: int, m: Instruction, region_tags,
                       gamma: LockContext, cfg: ModelConfig, sat: SatContext):
    """Successor states of instruction m performed by the given region.

    The erased state must step by m to a non-Error machine state; reads and
    writes stay within the mover's region; P(r) transfers the lock's resource
    into it; V(r) splits off any invariant-satisfying part."""
    regions, vector = state
    erased = _erase_split_state(state, region_tags)
    succs = [t for t in step(m, erased, cfg) if not t.error]
    if not succs:
        return []
    tag = region_tags[mover]
    out = []
    if isinstance(m, Acquire):
        slot = dict(vector).get(m.lock)
        if slot is None or slot[0] != "S":
            return []
        merged = sep_product(regions[mover], slot[1])
        if merged is None:
            return []
        new_regions = tuple(merged if i == mover else r for i, r in enumerate(regions))
        new_vector = tuple((n, (tag,) if n == m.lock else s) for n, s in vector)
        out.append((new_regions, new_vector))
    elif isinstance(m, Release):
        slot = dict(vector).get(m.lock)
        if slot != (tag,):
            return []
        inv = gamma.invariant(m.lock)
        for rest, part in splits2(regions[mover], sat.denom_exp):
            if not sat.satisfies(part, inv):
                continue
            new_regions = tuple(rest if i == mover else r for i, r in enumerate(regions))
            new_vector = tuple((n, ("S", part) if n == m.lock else s)
                               for n, s in vector)
            out.append((new_regions, new_vector))
    else:
        new_region = _apply_memory_update(regions[mover], m, erased, cfg)
        if new_region is None:
            return []
        new_regions = tuple(new_region if i == mover else r
                            for i, r in enumerate(regions))
        candidate = (new_regions, vector)
        total = sep_product_many(list(new_regions)
                                 + [s[1] for _, s in vector if s[0] == "S"])
        if total is None:
            return []
        if _erase_split_state(candidate, region_tags).key() != succs[0].key():
            return []
        out.append(candidate)
    out.sort(key=lambda s: _split_state_key(s, region_tags))
    return out


def _state_payload(state, region_tags):
    regions, vector = state
    vec = tuple((n, s if s[0] != "S" else ("S", s[1].key())) for n, s in vector)
    label = "sep" if len(region_tags) == 2 else "sep3"
    return (label,) + tuple(r.key() for r in regions[:-1]) + (vec, regions[-1].key())


def _build_split_model(gamma: LockContext, cfg: ModelConfig, sat: SatContext,
                       region_tags: tuple[str, ...]):
    states = _enumerate_split_states(gamma, cfg, sat, region_tags)
    if len(states) > cfg.node_cap:
        raise CapacityError(f"separated model needs {len(states)} nodes, "
                            f"cap is {cfg.node_cap}")
    payloads = [_state_payload(s, region_tags) for s in states]
    index = {p: i for i, p in enumerate(payloads)}
    edges = []
    fps = []
    for i, st in enumerate(states):
        erased = _erase_split_state(st, region_tags)
        for m in cfg.instructions:
            fp = footprint(m, erased, cfg)
            for mover, tag in enumerate(region_tags):
                for succ in _split_state_moves(st, mover, m, region_tags,
                                               gamma, cfg, sat):
                    j = index[_state_payload(succ, region_tags)]
                    edges.append((i, j, (tag, m.key())))
                    fps.append(fp)
    tiles, partners = _build_tiles(edges, fps)
    graph = AsyncGraph(tuple(payloads), tuple(edges), tiles, partners)
    return graph, states


@dataclass(frozen=True)
class SepModel:
    """A separated-state machine model with its node states."""

    graph: AsyncGraph
    states: tuple
    region_tags: tuple[str, ...]

    def erase_node(self, i: int) -> MachineState:
        return _erase_split_state(self.states[i], self.region_tags)


def build_sep_model(gamma: LockContext, cfg: ModelConfig, sat: SatContext) -> SepModel:
    """Two-player separated model: Code and Frame moves, no Error node."""
    g, states = _build_split_model(gamma, cfg, sat, ("C", "F"))
    return SepModel(g, tuple(states), ("C", "F"))


def build_sep3_model(gamma: LockContext, cfg: ModelConfig, sat: SatContext) -> SepModel:
    """Three-player separated model with polarities C1, C2, F."""
    g, states = _build_split_model(gamma, cfg, sat, ("C1", "C2", "F"))
    return SepModel(g, tuple(states), ("C1", "C2", "F"))


def separated_state_of(state, region_tags) -> SeparatedState:
    """Public two-player view of an internal (regions, vector) state."""
    regions, vector = state
    if len(regions) != 2:
        raise ValueError("not a two-player state")
    vec = tuple((n, HELD_BY_CODE if s == ("C",) else
                 HELD_BY_FRAME if s == ("F",) else s) for n, s in vector)
    return SeparatedState(regions[0], vec, regions[1])
