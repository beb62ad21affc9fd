"""Operational semantics of the machine and the stateful/stateless models.

Machine states pair a memory (stack + heap over finite domains) with the set
of currently held locks; instructions step states, possibly to the absorbing
Error.  Each instruction at a state has a footprint (read/write/lock/alloc
sets); two footprints are independent when neither writes what the other
touches and their lock and allocation sets are disjoint.  The stateful and
stateless models are asynchronous graphs whose tiles are exactly the
independent commuting squares; polarized (two- and three-player) versions are
products with the one-node graphs Omega({C,F}) and Omega({C1,C2,F}).

Edge payload convention: (polarity, instruction_key).  One-player model edges
carry polarity "F" (they are Frame moves once embedded in a two-player model).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .agraph import AsyncGraph, CapacityError, GraphHom, PointedGraph, omega
from .exprs import BoolExpr, Expr, eval_bool, eval_expr_raw

# -- configuration and states ---------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    """Finite domains: values, heap locations, variables, locks, instructions."""

    values: tuple[int, ...]
    locations: tuple[int, ...]
    variables: tuple[str, ...]
    locks: tuple[str, ...]
    instructions: tuple = ()
    node_cap: int = 200_000

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(sorted(self.values)))
        object.__setattr__(self, "locations", tuple(sorted(self.locations)))
        object.__setattr__(self, "variables", tuple(sorted(self.variables)))
        object.__setattr__(self, "locks", tuple(sorted(self.locks)))
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not set(self.locations) <= set(self.values):
            raise ValueError("locations must be a subset of values")

    def with_instructions(self, instructions) -> "ModelConfig":
        return ModelConfig(self.values, self.locations, self.variables, self.locks,
                           tuple(instructions), self.node_cap)


def default_instructions(cfg: ModelConfig):
    """P(r)/V(r) for every lock: the bare-config instruction alphabet."""
    out = []
    for r in cfg.locks:
        out.append(Acquire(r))
        out.append(Release(r))
    return tuple(out)


@dataclass(frozen=True)
class MemoryState:
    """Stack and heap as sorted tuples of (name, value) / (location, value)."""

    stack: tuple[tuple[str, int], ...]
    heap: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "stack", tuple(sorted(self.stack)))
        object.__setattr__(self, "heap", tuple(sorted(self.heap)))

    @property
    def stack_map(self) -> dict:
        return dict(self.stack)

    @property
    def heap_map(self) -> dict:
        return dict(self.heap)

    def set_var(self, x: str, v: int) -> "MemoryState":
        m = self.stack_map
        m[x] = v
        return MemoryState(tuple(m.items()), self.heap)

    def set_cell(self, loc: int, v: int) -> "MemoryState":
        m = self.heap_map
        m[loc] = v
        return MemoryState(self.stack, tuple(m.items()))

    def drop_cell(self, loc: int) -> "MemoryState":
        m = self.heap_map
        del m[loc]
        return MemoryState(self.stack, tuple(m.items()))

    def key(self) -> tuple:
        return (self.stack, self.heap)


@dataclass(frozen=True)
class MachineState:
    """A memory with held locks, or the distinguished Error."""

    memory: MemoryState | None
    locks: tuple[str, ...] | None
    error: bool = False

    def __post_init__(self):
        if not self.error:
            object.__setattr__(self, "locks", tuple(sorted(self.locks)))

    def key(self) -> tuple:
        if self.error:
            return ("err",)
        return ("st", self.memory.stack, self.memory.heap, self.locks)


ERROR = MachineState(None, None, True)
ERROR_KEY = ERROR.key()


def mstate(stack=(), heap=(), locks=()) -> MachineState:
    return MachineState(MemoryState(tuple(stack), tuple(heap)), tuple(locks))


# -- instructions ----------------------------------------------------------


class Instruction:
    def key(self) -> tuple:
        raise NotImplementedError


@dataclass(frozen=True)
class Assign(Instruction):
    var: str
    expr: Expr

    def key(self):
        return ("assign", self.var, self.expr.key())

    def __str__(self):
        return f"{self.var} := {self.expr}"


@dataclass(frozen=True)
class Load(Instruction):
    var: str
    expr: Expr

    def key(self):
        return ("load", self.var, self.expr.key())

    def __str__(self):
        return f"{self.var} := [{self.expr}]"


@dataclass(frozen=True)
class Store(Instruction):
    loc_expr: Expr
    val_expr: Expr

    def key(self):
        return ("store", self.loc_expr.key(), self.val_expr.key())

    def __str__(self):
        return f"[{self.loc_expr}] := {self.val_expr}"


@dataclass(frozen=True)
class TestB(Instruction):
    """Internal guard instruction; behaves like nop when the guard holds."""

    guard: BoolExpr

    def key(self):
        return ("test", self.guard.key())

    def __str__(self):
        return f"test({self.guard})"


@dataclass(frozen=True)
class Nop(Instruction):
    def key(self):
        return ("nop",)

    def __str__(self):
        return "nop"


@dataclass(frozen=True)
class Alloc(Instruction):
    var: str
    expr: Expr
    loc: int

    def key(self):
        return ("alloc", self.var, self.expr.key(), self.loc)

    def __str__(self):
        return f"{self.var} := alloc({self.expr}, {self.loc})"


@dataclass(frozen=True)
class Dispose(Instruction):
    expr: Expr

    def key(self):
        return ("dispose", self.expr.key())

    def __str__(self):
        return f"dispose({self.expr})"


@dataclass(frozen=True)
class Acquire(Instruction):
    lock: str

    def key(self):
        return ("P", self.lock)

    def __str__(self):
        return f"P({self.lock})"


@dataclass(frozen=True)
class Release(Instruction):
    lock: str

    def key(self):
        return ("V", self.lock)

    def __str__(self):
        return f"V({self.lock})"


# -- evaluation and stepping -----------------------------------------------


def eval_expr(e: Expr, mu: MemoryState, cfg: ModelConfig) -> int | None:
    """Value of e in mu, undefined when a variable is unbound or the result
    leaves the configured value range."""
    v = eval_expr_raw(e, mu.stack_map)
    if v is None or v not in cfg.values:
        return None
    return v


def step(m: Instruction, s: MachineState, cfg: ModelConfig) -> list[MachineState]:
    """Successor states of instruction m at state s (possibly Error, maybe none)."""
    if s.error:
        raise ValueError("no transitions out of Error")
    mu, locks = s.memory, s.locks
    heap = mu.heap_map
    if isinstance(m, Assign):
        v = eval_expr(m.expr, mu, cfg)
        if v is None:
            return [ERROR]
        return [MachineState(mu.set_var(m.var, v), locks)]
    if isinstance(m, Load):
        addr = eval_expr(m.expr, mu, cfg)
        if addr is None or addr not in heap:
            return [ERROR]
        return [MachineState(mu.set_var(m.var, heap[addr]), locks)]
    if isinstance(m, Store):
        addr = eval_expr(m.loc_expr, mu, cfg)
        v = eval_expr(m.val_expr, mu, cfg)
        if addr is None or v is None or addr not in heap:
            return [ERROR]
        return [MachineState(mu.set_cell(addr, v), locks)]
    if isinstance(m, TestB):
        holds = eval_bool(m.guard, mu.stack_map)
        return [s] if holds is True else []
    if isinstance(m, Nop):
        return [s]
    if isinstance(m, Alloc):
        if m.loc in heap:
            return []
        v = eval_expr(m.expr, mu, cfg)
        if v is None:
            return [ERROR]
        return [MachineState(mu.set_cell(m.loc, v).set_var(m.var, m.loc), locks)]
    if isinstance(m, Dispose):
        addr = eval_expr(m.expr, mu, cfg)
        if addr is None or addr not in heap:
            return [ERROR]
        return [MachineState(mu.drop_cell(addr), locks)]
    if isinstance(m, Acquire):
        if m.lock in locks:
            return []
        return [MachineState(mu, locks + (m.lock,))]
    if isinstance(m, Release):
        if m.lock not in locks:
            return []
        return [MachineState(mu, tuple(x for x in locks if x != m.lock))]
    raise TypeError(f"unknown instruction {m!r}")


# -- footprints -------------------------------------------------------------


@dataclass(frozen=True)
class Footprint:
    """Read/write (tagged variables and locations), touched locks, (de)allocations."""

    read: frozenset = frozenset()
    write: frozenset = frozenset()
    locks: frozenset = frozenset()
    alloc: frozenset = frozenset()

    def key(self):
        return (tuple(sorted(self.read)), tuple(sorted(self.write)),
                tuple(sorted(self.locks)), tuple(sorted(self.alloc)))


def _vset(names) -> frozenset:
    return frozenset(("v", x) for x in names)


def footprint(m: Instruction, s: MachineState, cfg: ModelConfig) -> Footprint:
    """Footprint of m at s; the dereferenced cell is part of read/write/alloc
    only when the address expression evaluates to a location."""
    mu = s.memory

    def addr_of(e: Expr):
        v = eval_expr(e, mu, cfg)
        return v if v is not None and v in cfg.locations else None

    if isinstance(m, Assign):
        return Footprint(read=_vset(m.expr.free_vars()), write=_vset({m.var}))
    if isinstance(m, Load):
        addr = addr_of(m.expr)
        cells = frozenset({("l", addr)}) if addr is not None else frozenset()
        return Footprint(read=_vset(m.expr.free_vars()) | cells, write=_vset({m.var}))
    if isinstance(m, Store):
        addr = addr_of(m.loc_expr)
        cells = frozenset({("l", addr)}) if addr is not None else frozenset()
        return Footprint(read=_vset(m.loc_expr.free_vars() | m.val_expr.free_vars()),
                         write=cells)
    if isinstance(m, TestB):
        return Footprint(read=_vset(m.guard.free_vars()))
    if isinstance(m, Nop):
        return Footprint()
    if isinstance(m, Alloc):
        return Footprint(read=_vset(m.expr.free_vars()), write=_vset({m.var}),
                         alloc=frozenset({m.loc}))
    if isinstance(m, Dispose):
        addr = addr_of(m.expr)
        allocs = frozenset({addr}) if addr is not None else frozenset()
        return Footprint(read=_vset(m.expr.free_vars()), alloc=allocs)
    if isinstance(m, Acquire) or isinstance(m, Release):
        return Footprint(locks=frozenset({m.lock}))
    raise TypeError(f"unknown instruction {m!r}")


def independent(fp1: Footprint, fp2: Footprint) -> bool:
    return (not (fp1.read | fp1.write) & fp2.write
            and not (fp2.read | fp2.write) & fp1.write
            and not fp1.locks & fp2.locks
            and not fp1.alloc & fp2.alloc)


# -- lock instructions and the stateless model ------------------------------


@dataclass(frozen=True)
class LockInstruction:
    """P(r) | V(r) | alloc(l) | dispose(l) | tau."""

    kind: str  # "P" | "V" | "alloc" | "dispose" | "tau"
    arg: object = None

    def key(self):
        return (self.kind,) if self.arg is None else (self.kind, self.arg)

    def __str__(self):
        return self.kind if self.arg is None else f"{self.kind}({self.arg})"


TAU = LockInstruction("tau")


def lock_footprint(li: LockInstruction) -> Footprint:
    if li.kind in ("P", "V"):
        return Footprint(locks=frozenset({li.arg}))
    if li.kind in ("alloc", "dispose"):
        return Footprint(alloc=frozenset({li.arg}))
    return Footprint()


def lock_instruction_of_edge(m: Instruction, s: MachineState,
                             cfg: ModelConfig) -> LockInstruction:
    """Lock instruction labelling the stateless image of an (m, s) edge.

    dispose(E) maps to dispose(l) for the location E denotes at s, and to tau
    when E is undefined or not a location (a pure memory crash)."""
    if isinstance(m, Acquire):
        return LockInstruction("P", m.lock)
    if isinstance(m, Release):
        return LockInstruction("V", m.lock)
    if isinstance(m, Alloc):
        return LockInstruction("alloc", m.loc)
    if isinstance(m, Dispose):
        v = eval_expr(m.expr, s.memory, cfg)
        if v is not None and v in cfg.locations:
            return LockInstruction("dispose", v)
        return TAU
    return TAU


def lock_instructions(cfg: ModelConfig):
    out = []
    for r in cfg.locks:
        out.append(LockInstruction("P", r))
        out.append(LockInstruction("V", r))
    for l in cfg.locations:
        out.append(LockInstruction("alloc", l))
        out.append(LockInstruction("dispose", l))
    out.append(TAU)
    return tuple(out)


# -- model construction ------------------------------------------------------


def enumerate_machine_states(cfg: ModelConfig) -> list[MachineState]:
    """All machine states over the config, in canonical key order."""
    var_opts = []
    for x in cfg.variables:
        var_opts.append([None] + [(x, v) for v in cfg.values])
    loc_opts = []
    for l in cfg.locations:
        loc_opts.append([None] + [(l, v) for v in cfg.values])
    lock_subsets = []
    for bits in itertools.product((False, True), repeat=len(cfg.locks)):
        lock_subsets.append(tuple(r for r, b in zip(cfg.locks, bits) if b))
    states = []
    for stack in itertools.product(*var_opts) if var_opts else [()]:
        st = tuple(p for p in stack if p is not None)
        for heap in itertools.product(*loc_opts) if loc_opts else [()]:
            hp = tuple(p for p in heap if p is not None)
            for locks in lock_subsets:
                states.append(MachineState(MemoryState(st, hp), locks))
    states.sort(key=lambda s: s.key())
    return states


def _build_tiles(edges, fps):
    """Tiles (with partners) from labelled, footprinted edges via the kernel.

    edges: list of (src, tgt, payload); fps: one Footprint per edge.
    """
    if not edges:
        return (), ()
    fp_ids: dict = {}
    efp = []
    for fp in fps:
        k = fp.key()
        if k not in fp_ids:
            fp_ids[k] = (len(fp_ids), fp)
        efp.append(fp_ids[k][0])
    n_fp = len(fp_ids)
    indep = np.zeros((n_fp, n_fp), dtype=np.uint8)
    by_id = sorted(fp_ids.values(), key=lambda t: t[0])
    for i, fa in by_id:
        for j, fb in by_id:
            indep[i, j] = independent(fa, fb)
    labels: dict = {}
    elab = []
    for _, _, p in edges:
        elab.append(labels.setdefault(p, len(labels)))
    src = np.fromiter((e[0] for e in edges), dtype=np.int64, count=len(edges))
    tgt = np.fromiter((e[1] for e in edges), dtype=np.int64, count=len(edges))
    quads = _kernels.commuting_squares(src, tgt,
                                       np.asarray(elab, dtype=np.int64),
                                       np.asarray(efp, dtype=np.int64), indep)
    tiles = [tuple(q) for q in quads.tolist()]
    index = {q: i for i, q in enumerate(tiles)}
    partners = tuple(index[(c, d, a, b)] for a, b, c, d in tiles)
    return tuple(tiles), partners


def build_stateful(cfg: ModelConfig) -> PointedGraph:
    """The stateful model: machine states plus Error, instruction transitions,
    and one tile per independent commuting square."""
    states = enumerate_machine_states(cfg)
    if len(states) + 1 > cfg.node_cap:
        raise CapacityError(f"stateful model needs {len(states) + 1} nodes, "
                            f"cap is {cfg.node_cap}")
    nodes = [s.key() for s in states] + [ERROR_KEY]
    index = {k: i for i, k in enumerate(nodes)}
    edges = []
    fps = []
    for s in states:
        si = index[s.key()]
        for m in cfg.instructions:
            fp = footprint(m, s, cfg)
            for succ in sorted(step(m, s, cfg), key=lambda t: t.key()):
                edges.append((si, index[succ.key()], ("F", m.key())))
                fps.append(fp)
    tiles, partners = _build_tiles(edges, fps)
    g = AsyncGraph(tuple(nodes), tuple(edges), tiles, partners)
    return PointedGraph(g, index[ERROR_KEY])


def lock_state_key(locks: tuple[str, ...]) -> tuple:
    return ("lk", tuple(sorted(locks)))


def build_stateless(cfg: ModelConfig) -> PointedGraph:
    """The stateless model: lock subsets plus Error, the six transition schemas
    (every lock instruction may also fail to Error), lock-footprint tiles."""
    subsets = []
    for bits in itertools.product((False, True), repeat=len(cfg.locks)):
        subsets.append(tuple(r for r, b in zip(cfg.locks, bits) if b))
    subsets.sort()
    nodes = [lock_state_key(L) for L in subsets] + [ERROR_KEY]
    if len(nodes) > cfg.node_cap:
        raise CapacityError("stateless model exceeds the node cap")
    index = {k: i for i, k in enumerate(nodes)}
    err = index[ERROR_KEY]
    edges = []
    fps = []
    for L in subsets:
        li_src = index[lock_state_key(L)]
        held = set(L)
        for li in lock_instructions(cfg):
            fp = lock_footprint(li)
            if li.kind == "P" and li.arg not in held:
                tgt = index[lock_state_key(tuple(sorted(L + (li.arg,))))]
                edges.append((li_src, tgt, ("F", li.key())))
                fps.append(fp)
            elif li.kind == "V" and li.arg in held:
                tgt = index[lock_state_key(tuple(x for x in L if x != li.arg))]
                edges.append((li_src, tgt, ("F", li.key())))
                fps.append(fp)
            elif li.kind in ("alloc", "dispose", "tau"):
                edges.append((li_src, li_src, ("F", li.key())))
                fps.append(fp)
            edges.append((li_src, err, ("F", li.key())))
            fps.append(fp)
    tiles, partners = _build_tiles(edges, fps)
    g = AsyncGraph(tuple(nodes), tuple(edges), tiles, partners)
    return PointedGraph(g, err)


# -- polarized (multi-player) models -----------------------------------------


def _polarized(model: PointedGraph, labels: tuple[str, ...]) -> PointedGraph:
    """Product with Omega(labels), payloads normalized to (polarity, instr)."""
    g = model.graph
    om = omega(labels)
    nl = len(labels)
    nodes = g.nodes  # one omega node: node indices unchanged
    edges = []
    for s, t, p in g.edges:
        for lab in labels:
            edges.append((s, t, (lab, p[1])))
    tiles = []
    partners = []
    for ti, (a, b, c, d) in enumerate(g.tiles):
        for i in range(nl):
            for j in range(nl):
                # omega tile (i, j) has boundary (i.j, j.i)
                tiles.append((a * nl + i, b * nl + j, c * nl + j, d * nl + i))
                partners.append(g.partners[ti] * nl * nl + (j * nl + i))
    pg = AsyncGraph(nodes, tuple(edges), tuple(tiles), tuple(partners))
    return PointedGraph(pg, model.point)


def two_player(model: PointedGraph) -> PointedGraph:
    """Each edge doubled with polarity C or F; tiles quadruple (CC, CF, FC, FF)."""
    return _polarized(model, ("C", "F"))


def three_player(model: PointedGraph) -> PointedGraph:
    """Each edge tripled with polarity C1, C2 or F; tiles ninefold."""
    return _polarized(model, ("C1", "C2", "F"))


def _reindex_hom(dom: AsyncGraph, cod: AsyncGraph, nl_dom: int, nl_cod: int,
                 pol_map: dict[int, int]) -> GraphHom:
    """Hom between two polarizations of the same base model."""
    n_base_edges = dom.n_edges // nl_dom
    node_map = tuple(range(dom.n_nodes))
    edge_map = []
    for e in range(n_base_edges):
        for k in range(nl_dom):
            edge_map.append(e * nl_cod + pol_map[k])
    tile_map = []
    n_base_tiles = dom.n_tiles // (nl_dom * nl_dom)
    for t in range(n_base_tiles):
        for i in range(nl_dom):
            for j in range(nl_dom):
                tile_map.append(t * nl_cod * nl_cod + pol_map[i] * nl_cod + pol_map[j])
    return GraphHom(dom, cod, node_map, tuple(edge_map), tuple(tile_map))


def frame_embedding(model: PointedGraph, polarized: PointedGraph) -> GraphHom:
    """eta: the one-player model embedded at polarity F (2-player target)."""
    return _embed_at_f(model, polarized, 2)


def frame_embedding3(model: PointedGraph, polarized: PointedGraph) -> GraphHom:
    """iota_F into the three-player model."""
    return _embed_at_f(model, polarized, 3)


def _embed_at_f(model: PointedGraph, polarized: PointedGraph, nl: int) -> GraphHom:
    g = model.graph
    f_idx = nl - 1  # "F" is last in both label tuples
    node_map = tuple(range(g.n_nodes))
    edge_map = tuple(e * nl + f_idx for e in range(g.n_edges))
    tile_map = tuple(t * nl * nl + f_idx * nl + f_idx for t in range(g.n_tiles))
    return GraphHom(g, polarized.graph, node_map, edge_map, tile_map)


def pince_projection(three: PointedGraph, two: PointedGraph) -> GraphHom:
    """(12)(F): C1, C2 -> C and F -> F."""
    return _reindex_hom(three.graph, two.graph, 3, 2, {0: 0, 1: 0, 2: 1})


def view_projection(three: PointedGraph, two: PointedGraph, player: int) -> GraphHom:
    """Player's view: own moves stay Code, the sibling is absorbed into Frame.

    player=1 is (1)(2F): C1->C, C2->F, F->F; player=2 symmetrically."""
    pol = {0: 0, 1: 1, 2: 1} if player == 1 else {0: 1, 1: 0, 2: 1}
    return _reindex_hom(three.graph, two.graph, 3, 2, pol)


# -- the memory-forgetting map Sigma_S -> Sigma_L ----------------------------


def state_forgetting_hom(stateful: PointedGraph, stateless: PointedGraph,
                         cfg: ModelConfig, states: list[MachineState] | None = None
                         ) -> GraphHom:
    """u on one-player models: drop the memory, map instructions to their lock
    instructions; tiles map to the stateless tile over the image square."""
    gs, gl = stateful.graph, stateless.graph
    if states is None:
        states = enumerate_machine_states(cfg)
    by_key = {s.key(): s for s in states}
    node_map = []
    for k in gs.nodes:
        node_map.append(gl.find_node(ERROR_KEY if k == ERROR_KEY else
                                     lock_state_key(k[3])))
    edge_map = []
    for s, t, p in gs.edges:
        m = instruction_from_key(p[1], cfg)
        li = lock_instruction_of_edge(m, by_key[gs.nodes[s]], cfg)
        edge_map.append(gl.find_edge(node_map[s], node_map[t], ("F", li.key())))
    tile_map = []
    for a, b, c, d in gs.tiles:
        q = (edge_map[a], edge_map[b], edge_map[c], edge_map[d])
        t = gl.tile_index.get(q)
        if t is None:
            raise AssertionError("stateful tile has no stateless image tile")
        tile_map.append(t)
    return GraphHom(gs, gl, tuple(node_map), tuple(edge_map), tuple(tile_map))


def instruction_from_key(key: tuple, cfg: ModelConfig) -> Instruction:
    for m in cfg.instructions:
        if m.key() == key:
            return m
    raise KeyError(f"instruction key {key!r} not in config alphabet")
