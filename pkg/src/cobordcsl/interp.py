"""The three interpretations of programs and proofs, built in lockstep.

A program is interpreted over the stateful and stateless templates, a proof
additionally over the separated-state template; the comparison simulations
between adjacent interpretations are constructed together with them (by the
same structural induction), never searched for after the fact.

The module also hosts proof validation against the rule schemas (triples are
matched up to semantic equivalence over the finite domains, side conditions
are decided by enumeration), the structural and fibration checks behind the
soundness verdicts, and the extraction of final states from maximal Code
paths (used for race reporting and the operational-agreement tests).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .agraph import (CODE_1_FIBRATION, ENV_1_FIBRATION, TWO_FIBRATION,
                     AsyncGraph, CapacityError, GraphHom, LiftCounterexample,
                     PointedGraph, check_hom, check_lifting, compose_homs,
                     factor_through, identity_hom, pointed_coproduct, polarity,
                     subgraph)
from .cobord import (CobMap, Cobordism, ComposeResult, CompositionError,
                     FillResult, Game, ParallelResult, SeqResult, border_game,
                     compose, compose_map, compose_parts, fill, fill_map,
                     fill_parts, identity_cobordism, is_simulation,
                     lifted_border_game, parallel, parallel_map, pull, push,
                     seq, seq_map, seq_parts, tensor_pull, validate_cobordism,
                     check_structural, _copair, _tp_map_into, TensorPull, PT)
from .exprs import BConst, BNot, BoolExpr, Const, Expr
from .machine import (Acquire, Alloc, Assign, Dispose, Footprint, Instruction,
                      Load, MachineState, ModelConfig, Nop, Release, Store,
                      TestB, _build_tiles, enumerate_machine_states, footprint,
                      instruction_from_key, lock_footprint,
                      lock_instruction_of_edge, lock_instructions, step,
                      ERROR_KEY)
from .seplogic import (Emp, LockContext, PAnd, PEq, PNot, POr, Predicate,
                       PTrue, SatContext, Star, bool_to_predicate)
from .syntax import (AssignC, Command, DisposeC, IfC, LoadC, MallocC, ParC,
                     ProofFile, ProofNode, ResourceC, SeqC, Skip, StoreC,
                     WhileC, WithC, parse_predicate, parse_program, parse_proof)
from .template import (AcuteSpan, Color, InternalFunctor, InternalOpcat,
                       SpanMonoidal, UNIT_COLOR, functor_u, functor_u_par,
                       functor_u_sep, functor_u_sep_par, hide_span,
                       make_opcat_L, make_opcat_S, make_opcat_Sep,
                       span_monoidal_L, span_monoidal_S, span_monoidal_Sep,
                       when_push, when_span)


class ProofError(Exception):
    def __init__(self, path, msg):
        super().__init__(f"at {'/'.join(path) or 'root'}: {msg}")
        self.path = path


class InterpError(Exception):
    pass


# -- program analysis ----------------------------------------------------------


def command_variables(c: Command) -> frozenset[str]:
    if isinstance(c, (AssignC, LoadC, MallocC)):
        extra = c.expr.free_vars() if not isinstance(c, MallocC) else c.expr.free_vars()
        return frozenset({c.var}) | extra
    if isinstance(c, StoreC):
        return c.loc_expr.free_vars() | c.val_expr.free_vars()
    if isinstance(c, DisposeC):
        return c.expr.free_vars()
    if isinstance(c, (SeqC,)):
        return command_variables(c.first) | command_variables(c.second)
    if isinstance(c, ParC):
        return command_variables(c.left) | command_variables(c.right)
    if isinstance(c, IfC):
        return (c.guard.free_vars() | command_variables(c.then_branch)
                | command_variables(c.else_branch))
    if isinstance(c, WhileC):
        return c.guard.free_vars() | command_variables(c.body)
    if isinstance(c, (ResourceC, WithC)):
        return command_variables(c.body)
    return frozenset()


def command_locks(c: Command, bound=()) -> tuple[frozenset, frozenset]:
    """(locks introduced by resource, locks required ambient by with)."""
    if isinstance(c, ResourceC):
        intro, req = command_locks(c.body, bound + (c.lock,))
        return intro | {c.lock}, req
    if isinstance(c, WithC):
        intro, req = command_locks(c.body, bound)
        if c.lock in bound:
            return intro, req
        return intro, req | {c.lock}
    if isinstance(c, SeqC):
        i1, r1 = command_locks(c.first, bound)
        i2, r2 = command_locks(c.second, bound)
        return i1 | i2, r1 | r2
    if isinstance(c, ParC):
        i1, r1 = command_locks(c.left, bound)
        i2, r2 = command_locks(c.right, bound)
        return i1 | i2, r1 | r2
    if isinstance(c, IfC):
        i1, r1 = command_locks(c.then_branch, bound)
        i2, r2 = command_locks(c.else_branch, bound)
        return i1 | i2, r1 | r2
    if isinstance(c, WhileC):
        return command_locks(c.body, bound)
    return frozenset(), frozenset()


def uses_heap(c: Command) -> bool:
    if isinstance(c, (LoadC, StoreC, MallocC, DisposeC)):
        return True
    if isinstance(c, SeqC):
        return uses_heap(c.first) or uses_heap(c.second)
    if isinstance(c, ParC):
        return uses_heap(c.left) or uses_heap(c.right)
    if isinstance(c, IfC):
        return uses_heap(c.then_branch) or uses_heap(c.else_branch)
    if isinstance(c, (WhileC, ResourceC, WithC)):
        return uses_heap(c.body)
    return False


def uses_locks(c: Command) -> bool:
    intro, req = command_locks(c)
    return bool(intro or req)


def program_instructions(c: Command, locations) -> list[Instruction]:
    """The instruction alphabet a program needs, in syntax order."""
    out: list[Instruction] = []

    def add(m):
        if m not in out:
            out.append(m)

    def walk(cmd):
        if isinstance(cmd, Skip):
            add(Nop())
        elif isinstance(cmd, AssignC):
            add(Assign(cmd.var, cmd.expr))
        elif isinstance(cmd, LoadC):
            add(Load(cmd.var, cmd.expr))
        elif isinstance(cmd, StoreC):
            add(Store(cmd.loc_expr, cmd.val_expr))
        elif isinstance(cmd, MallocC):
            for l in locations:
                add(Alloc(cmd.var, cmd.expr, l))
        elif isinstance(cmd, DisposeC):
            add(Dispose(cmd.expr))
        elif isinstance(cmd, SeqC):
            walk(cmd.first)
            walk(cmd.second)
        elif isinstance(cmd, ParC):
            walk(cmd.left)
            walk(cmd.right)
        elif isinstance(cmd, IfC):
            add(TestB(cmd.guard))
            add(TestB(BNot(cmd.guard)))
            walk(cmd.then_branch)
            walk(cmd.else_branch)
        elif isinstance(cmd, WhileC):
            add(TestB(cmd.guard))
            add(TestB(BNot(cmd.guard)))
            walk(cmd.body)
        elif isinstance(cmd, ResourceC):
            add(Acquire(cmd.lock))
            add(Release(cmd.lock))
            add(Nop())
            walk(cmd.body)
        elif isinstance(cmd, WithC):
            add(Acquire(cmd.lock))
            add(Release(cmd.lock))
            add(Nop())
            walk(cmd.body)
        else:
            raise TypeError(f"unknown command {cmd!r}")

    walk(c)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Tunable finite-domain bounds for a run."""

    values: tuple[int, ...] = (0, 1, 2, 3)
    location_count: int = 2
    denom_exp: int = 2
    unfold_bound: int = 8
    node_cap: int = 200_000

    def locations_for(self, program: Command) -> tuple[int, ...]:
        if not uses_heap(program):
            return ()
        return tuple(self.values[: self.location_count])


def config_for(program: Command, run: RunConfig,
               extra_locks: tuple[str, ...] = ()) -> ModelConfig:
    """Minimized model configuration for a program."""
    locations = run.locations_for(program)
    intro, req = command_locks(program)
    locks = tuple(sorted(set(extra_locks) | intro | req))
    alphabet = tuple(program_instructions(program, locations))
    for r in locks:
        for m in (Acquire(r), Release(r)):
            if m not in alphabet:
                alphabet = alphabet + (m,)
    return ModelConfig(values=run.values, locations=locations,
                       variables=tuple(sorted(command_variables(program))),
                       locks=locks, instructions=alphabet,
                       node_cap=run.node_cap)


# -- worlds: templates per lock context --------------------------------------------


class World:
    """All templates and comparison functors over one lock context."""

    def __init__(self, itp: "Interpreter", locks: tuple[str, ...],
                 gamma: LockContext | None):
        self.itp = itp
        self.locks = locks
        self.gamma = gamma
        self.cfg = itp.cfg_for_locks(locks)
        self._cache: dict = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def opcat_s(self) -> InternalOpcat:
        return self._get("S", lambda: make_opcat_S(self.cfg))

    @property
    def opcat_l(self) -> InternalOpcat:
        return self._get("L", lambda: make_opcat_L(self.cfg))

    @property
    def opcat_sep(self) -> InternalOpcat:
        if self.gamma is None:
            raise InterpError("no lock context: separated template unavailable")
        return self._get("Sep", lambda: make_opcat_Sep(self.gamma, self.cfg,
                                                       self.itp.sat))

    @property
    def sm_s(self) -> SpanMonoidal:
        return self._get("smS", lambda: span_monoidal_S(self.opcat_s))

    @property
    def sm_l(self) -> SpanMonoidal:
        return self._get("smL", lambda: span_monoidal_L(self.opcat_l))

    @property
    def sm_sep(self) -> SpanMonoidal:
        return self._get("smSep", lambda: span_monoidal_Sep(self.opcat_sep))

    @property
    def u(self) -> InternalFunctor:
        return self._get("u", lambda: functor_u(self.opcat_s, self.opcat_l))

    @property
    def u_par(self) -> GraphHom:
        return self._get("u_par", lambda: functor_u_par(self.sm_s, self.sm_l))

    @property
    def u_sep(self) -> InternalFunctor:
        return self._get("u_sep", lambda: functor_u_sep(self.opcat_sep,
                                                        self.opcat_s))

    @property
    def u_sep_par(self) -> GraphHom:
        return self._get("u_sep_par",
                         lambda: functor_u_sep_par(self.sm_sep, self.sm_s))

    def opcat(self, lane: str) -> InternalOpcat:
        return {"Sep": lambda: self.opcat_sep, "S": lambda: self.opcat_s,
                "L": lambda: self.opcat_l}[lane]()

    def sm(self, lane: str) -> SpanMonoidal:
        return {"Sep": lambda: self.sm_sep, "S": lambda: self.sm_s,
                "L": lambda: self.sm_l}[lane]()

    def lowering(self, hi_lane: str) -> InternalFunctor:
        return self.u_sep if hi_lane == "Sep" else self.u

    def lowering_par(self, hi_lane: str) -> GraphHom:
        return self.u_sep_par if hi_lane == "Sep" else self.u_par


class Interpreter:
    """Shared caches (worlds, satisfaction) for one base configuration."""

    def __init__(self, base_cfg: ModelConfig, run: RunConfig):
        self.base_cfg = base_cfg
        self.run = run
        self.sat = SatContext(base_cfg, run.denom_exp)
        self._worlds: dict = {}

    def cfg_for_locks(self, locks: tuple[str, ...]) -> ModelConfig:
        alphabet = tuple(
            m for m in self.base_cfg.instructions
            if not (isinstance(m, (Acquire, Release)) and m.lock not in locks))
        return ModelConfig(self.base_cfg.values, self.base_cfg.locations,
                           self.base_cfg.variables, locks, alphabet,
                           self.base_cfg.node_cap)

    def world(self, locks, gamma: LockContext | None = None) -> World:
        key = (tuple(sorted(locks)),
               tuple((r, p.key()) for r, p in gamma.entries) if gamma else None)
        if key not in self._worlds:
            self._worlds[key] = World(self, tuple(sorted(locks)), gamma)
        return self._worlds[key]


# -- instruction cobordisms ----------------------------------------------------------


def _instr_transitions_S(opcat: InternalOpcat, m: Instruction):
    cfg = opcat.cfg
    for s in enumerate_machine_states(cfg):
        fp = footprint(m, s, cfg)
        for succ in step(m, s, cfg):
            yield s.key(), (None if succ.error else succ.key()), m.key(), fp


def _instr_transitions_L(opcat: InternalOpcat, m: Instruction):
    cfg = opcat.cfg
    lis = []
    seen = set()
    for s in enumerate_machine_states(cfg):
        li = lock_instruction_of_edge(m, s, cfg)
        if li.key() not in seen:
            seen.add(li.key())
            lis.append(li)
    base = opcat.base_model.graph
    for li in lis:
        fp = lock_footprint(li)
        for e in range(base.n_edges):
            src, tgt, payload = base.edges[e]
            if payload[1] != li.key():
                continue
            src_key = base.nodes[src]
            tgt_key = base.nodes[tgt]
            yield src_key, (None if tgt_key == ERROR_KEY else tgt_key), li.key(), fp


def _footprint_of_border_edge(opcat: InternalOpcat, state_key, mkey) -> Footprint:
    cfg = opcat.cfg
    if opcat.kind == "L":
        for li in lock_instructions(cfg):
            if li.key() == mkey:
                return lock_footprint(li)
        raise KeyError(mkey)
    m = instruction_from_key(mkey, cfg)
    s = _machine_state_from_key(state_key)
    return footprint(m, s, cfg)


def _machine_state_from_key(key) -> MachineState:
    from .machine import MemoryState
    if key == ERROR_KEY:
        from .machine import ERROR
        return ERROR
    return MachineState(MemoryState(key[1], key[2]), key[3])


def _border_injection(border: AsyncGraph, support: AsyncGraph, inj: GraphHom
                      ) -> GraphHom:
    """Border inclusion into a rebuilt support: node/edge maps come from the
    coproduct injection, tile maps are looked up among the rebuilt tiles."""
    tile_map = []
    for q in border.tiles:
        img = tuple(inj.edge_map[e] for e in q)
        t = support.tile_index.get(img)
        if t is None:
            raise AssertionError("border tile missing from the support")
        tile_map.append(t)
    return GraphHom(border, support, inj.node_map, inj.edge_map, tuple(tile_map))


def sem_instr(opcat: InternalOpcat, m: Instruction) -> Cobordism:
    """The instruction cobordism: full borders joined at the error point, one
    Code transition per machine step of the instruction (errors land on the
    point), tiles wherever footprints commute."""
    gin = border_game(opcat, UNIT_COLOR)
    gout = lifted_border_game(opcat, UNIT_COLOR)
    pg, inl, inr = pointed_coproduct(PointedGraph(gin.carrier, gin.point),
                                     PointedGraph(gout.carrier, gout.point))
    base = opcat.base_model.graph
    trans = _instr_transitions_S(opcat, m) if opcat.kind == "S" \
        else _instr_transitions_L(opcat, m)
    edges = list(pg.graph.edges)
    fps = []
    for e in range(len(edges)):
        src, _, payload = edges[e]
        state_key = pg.graph.nodes[src]
        fps.append(_footprint_of_border_edge(opcat, state_key, payload[1]))
    for src_key, tgt_key, mkey, fp in trans:
        si = inl.node_map[gin.carrier.find_node(src_key)]
        if tgt_key is None:
            ti = pg.point
        else:
            ti = inr.node_map[gout.carrier.find_node(tgt_key)]
        edges.append((si, ti, ("C", mkey)))
        fps.append(fp)
    tiles, partners = _build_tiles(edges, fps)
    g2 = AsyncGraph(pg.graph.nodes, tuple(edges), tiles, partners)
    node_map = [None] * g2.n_nodes
    leg = opcat.leg(UNIT_COLOR)
    for i in range(gin.carrier.n_nodes):
        node_map[inl.node_map[i]] = leg.node_map[i]
    for i in range(gout.carrier.n_nodes):
        node_map[inr.node_map[i]] = leg.node_map[gout.labeling.node_map[i]]
    edge_map = []
    for s, t, p in g2.edges:
        e0 = base.find_edge(base.find_node(opcat.support.nodes[node_map[s]]),
                            base.find_node(opcat.support.nodes[node_map[t]]),
                            ("F", p[1]))
        edge_map.append(e0 * 2 + (1 if p[0] == "F" else 0))
    tile_map = []
    for q in g2.tiles:
        img = tuple(edge_map[e] for e in q)
        t = opcat.support.tile_index.get(img)
        if t is None:
            raise AssertionError("instruction tile without a template tile")
        tile_map.append(t)
    lam = GraphHom(g2, opcat.support, tuple(node_map), tuple(edge_map),
                   tuple(tile_map))
    s_map = _border_injection(gin.carrier, g2, inl)
    t_map = _border_injection(gout.carrier, g2, inr)
    return Cobordism(opcat, gin, gout, g2, s_map, t_map, lam,
                     support_point=pg.point)


def sem_instr_sep(opcat: InternalOpcat, m: Instruction, pre: Color, post: Color
                  ) -> Cobordism:
    """Separated instruction cobordism from color pre to color post: the Code
    moves of the instruction between satisfying states (no error node)."""
    from .agraph import coproduct
    gin = border_game(opcat, pre)
    gout = border_game(opcat, post)
    g0, inl, inr = coproduct(gin.carrier, gout.carrier)
    model = opcat.sep_model
    sup = opcat.support
    edges = list(g0.edges)
    # border edge footprints are taken at the erased source state
    fps = []
    for e in range(gin.carrier.n_edges):
        src = gin.carrier.edge_src(e)
        sup_node = opcat.border(pre).leg.node_map[src]
        mkey = gin.carrier.edge_payload(e)[1]
        fps.append(footprint(instruction_from_key(mkey, opcat.cfg),
                             model.erase_node(sup_node), opcat.cfg))
    for e in range(gout.carrier.n_edges):
        src = gout.carrier.edge_src(e)
        sup_node = opcat.border(post).leg.node_map[src]
        mkey = gout.carrier.edge_payload(e)[1]
        fps.append(footprint(instruction_from_key(mkey, opcat.cfg),
                             model.erase_node(sup_node), opcat.cfg))
    in_leg = opcat.border(pre).leg
    out_leg = opcat.border(post).leg
    out_nodes = {out_leg.node_map[i]: i for i in range(gout.carrier.n_nodes)}
    mkey = m.key()
    for i in range(gin.carrier.n_nodes):
        sup_i = in_leg.node_map[i]
        for e in sup.out_edges[sup_i]:
            pol, k = sup.edge_payload(e)
            if pol != "C" or k != mkey:
                continue
            tgt = sup.edge_tgt(e)
            if tgt not in out_nodes:
                raise ProofError((), f"a {m} move from the precondition leaves "
                                     f"the postcondition")
            edges.append((inl.node_map[i], inr.node_map[out_nodes[tgt]],
                          ("C", mkey)))
            fps.append(footprint(m, model.erase_node(sup_i), opcat.cfg))
    tiles, partners = _build_tiles(edges, fps)
    g2 = AsyncGraph(g0.nodes, tuple(edges), tiles, partners)
    node_map = [None] * g2.n_nodes
    for i in range(gin.carrier.n_nodes):
        node_map[inl.node_map[i]] = in_leg.node_map[i]
    for i in range(gout.carrier.n_nodes):
        node_map[inr.node_map[i]] = out_leg.node_map[i]
    edge_map = []
    for s, t, p in g2.edges:
        edge_map.append(sup.find_edge(node_map[s], node_map[t], p))
    tile_map = []
    for q in g2.tiles:
        img = tuple(edge_map[e] for e in q)
        t = sup.tile_index.get(img)
        if t is None:
            raise AssertionError("separated instruction tile without template tile")
        tile_map.append(t)
    lam = GraphHom(g2, sup, tuple(node_map), tuple(edge_map), tuple(tile_map))
    s_map = _border_injection(gin.carrier, g2, inl)
    t_map = _border_injection(gout.carrier, g2, inr)
    return Cobordism(opcat, gin, gout, g2, s_map, t_map, lam)


# -- towers: interpretations with their comparison maps ------------------------------


@dataclass
class Tower:
    """Per-lane cobordisms plus the comparison maps between adjacent lanes."""

    world: World
    lanes: tuple[str, ...]
    cobs: list
    maps: list  # maps[i]: cobs[i] -> cobs[i+1]

    def lane(self, name: str) -> Cobordism:
        return self.cobs[self.lanes.index(name)]

    def map_from(self, name: str) -> CobMap:
        return self.maps[self.lanes.index(name)]


def _leaf_map(hi: Cobordism, lo: Cobordism, bin_map: GraphHom,
              bout_map: GraphHom, trans_payload, functor) -> CobMap:
    """Comparison map between two instruction cobordisms, from border maps
    plus a payload translation for the transverse Code edges."""
    nm = [None] * hi.support.n_nodes
    for i in range(hi.source.carrier.n_nodes):
        nm[hi.s_map.node_map[i]] = lo.s_map.node_map[bin_map.node_map[i]]
    for j in range(hi.target.carrier.n_nodes):
        nm[hi.t_map.node_map[j]] = lo.t_map.node_map[bout_map.node_map[j]]
    em = [None] * hi.support.n_edges
    for i in range(hi.source.carrier.n_edges):
        em[hi.s_map.edge_map[i]] = lo.s_map.edge_map[bin_map.edge_map[i]]
    for j in range(hi.target.carrier.n_edges):
        em[hi.t_map.edge_map[j]] = lo.t_map.edge_map[bout_map.edge_map[j]]
    for e in range(hi.support.n_edges):
        if em[e] is None:
            s, t, p = hi.support.edges[e]
            em[e] = lo.support.find_edge(nm[s], nm[t], trans_payload(e, s, p))
    tm = []
    for q in hi.support.tiles:
        img = tuple(em[x] for x in q)
        t = lo.support.tile_index.get(img)
        if t is None:
            raise AssertionError("leaf tile has no image tile")
        tm.append(t)
    return CobMap(hi, lo, bin_map, bout_map,
                  GraphHom(hi.support, lo.support, tuple(nm), tuple(em),
                           tuple(tm)), functor)


def _leaf_map_s_l(world: World, m: Instruction, hi: Cobordism, lo: Cobordism
                  ) -> CobMap:
    u = world.u
    b0 = u.border_map(UNIT_COLOR)
    lo_out = lo.target.carrier
    bout = GraphHom(hi.target.carrier, lo_out,
                    b0.node_map + (lo.target.point,),
                    b0.edge_map, b0.tile_map)
    cfg = world.cfg

    def trans_payload(e, src_node, payload):
        state_key = hi.support.nodes[src_node]
        li = lock_instruction_of_edge(m, _machine_state_from_key(state_key), cfg)
        return ("C", li.key())

    return _leaf_map(hi, lo, b0, bout, trans_payload, u)


def _leaf_map_sep_s(world: World, hi: Cobordism, lo: Cobordism) -> CobMap:
    usep = world.u_sep
    bin_map = usep.border_map(hi.source.color)
    b0_out = usep.border_map(hi.target.color)
    bout = GraphHom(hi.target.carrier, lo.target.carrier,
                    b0_out.node_map, b0_out.edge_map, b0_out.tile_map)

    def trans_payload(e, src_node, payload):
        return ("C", payload[1])

    return _leaf_map(hi, lo, bin_map, bout, trans_payload, usep)


def t_leaf_code(world: World, m: Instruction, lanes=("S", "L")) -> Tower:
    cobs = [sem_instr(world.opcat(l), m) for l in lanes]
    maps = []
    for i in range(len(lanes) - 1):
        maps.append(_leaf_map_s_l(world, m, cobs[i], cobs[i + 1]))
    return Tower(world, tuple(lanes), cobs, maps)


def t_seq(t1: Tower, t2: Tower) -> Tower:
    parts = [seq_parts(a, b) for a, b in zip(t1.cobs, t2.cobs)]
    maps = [seq_map(m1, m2, parts[i], parts[i + 1])
            for i, (m1, m2) in enumerate(zip(t1.maps, t2.maps))]
    return Tower(t1.world, t1.lanes, [p.cobordism for p in parts], maps)


def t_par(t1: Tower, t2: Tower) -> Tower:
    world = t1.world
    parts = []
    for lane, a, b in zip(t1.lanes, t1.cobs, t2.cobs):
        parts.append(parallel(a, b, world.sm(lane), with_parts=True))
    maps = []
    for i, (m1, m2) in enumerate(zip(t1.maps, t2.maps)):
        hi_lane, lo_lane = t1.lanes[i], t1.lanes[i + 1]
        sm_hi, sm_lo = world.sm(hi_lane), world.sm(lo_lane)
        u_par = world.lowering_par(hi_lane)

        def border_u(hi_pair, lo_pair):
            return factor_through(compose_homs(hi_pair.leg, u_par), lo_pair.leg)

        b_in = border_u(sm_hi.border(t1.cobs[i].source.color,
                                     t2.cobs[i].source.color),
                        sm_lo.border(t1.cobs[i + 1].source.color,
                                     t2.cobs[i + 1].source.color))
        b_out = border_u(sm_hi.border(t1.cobs[i].target.color,
                                      t2.cobs[i].target.color),
                         sm_lo.border(t1.cobs[i + 1].target.color,
                                      t2.cobs[i + 1].target.color))
        maps.append(parallel_map(m1, m2, parts[i], parts[i + 1],
                                 u_par, b_in, b_out))
    return Tower(world, t1.lanes, [p.cobordism for p in parts], maps)


def t_union(t1: Tower, t2: Tower) -> Tower:
    from .cobord import union_parts, union_map
    parts = [union_parts(a, b) for a, b in zip(t1.cobs, t2.cobs)]
    maps = [union_map(m1, m2, parts[i], parts[i + 1])
            for i, (m1, m2) in enumerate(zip(t1.maps, t2.maps))]
    return Tower(t1.world, t1.lanes, [p.cobordism for p in parts], maps)


def t_precompose_border(t: Tower) -> Tower:
    """Glue the (possibly duplicated) input border onto the canonical border
    game of its color: the conditional's input-merging filling."""
    world = t.world
    games = []
    fills = []
    comps = []
    for lane, c in zip(t.lanes, t.cobs):
        g = border_game(world.opcat(lane), c.source.color)
        fl = fill_parts(g, c.source)
        comps.append(compose_parts(fl.cobordism, c))
        games.append(g)
        fills.append(fl)
    maps = []
    for i, m in enumerate(t.maps):
        functor = m.functor
        out_map = functor.border_map(t.cobs[i].source.color)
        fmap = fill_map(out_map, m.f_in, fills[i], fills[i + 1], functor)
        maps.append(compose_map(fmap, m, comps[i], comps[i + 1]))
    return Tower(world, t.lanes, [p.cobordism for p in comps], maps)


def t_identity_frame(t: Tower, color: Color) -> Tower:
    """FRAME: parallel with the identity cobordism of the frame color on the
    separated lane, the lower lanes and maps reused unchanged."""
    from .cobord import tp_project
    world = t.world
    assert t.lanes[0] == "Sep"
    sm = world.sm_sep
    opcat = world.opcat_sep
    ident = identity_cobordism(border_game(opcat, color))
    par = parallel(t.cobs[0], ident, sm, with_parts=True)
    sub_map = t.maps[0]
    proj_sup = tp_project(par.support_tp, 0, t.cobs[0].support)
    proj_in = tp_project(par.in_tp, 0, t.cobs[0].source.carrier)
    proj_out = tp_project(par.out_tp, 0, t.cobs[0].target.carrier)
    new_map = CobMap(par.cobordism, sub_map.dst,
                     compose_homs(proj_in, sub_map.f_in),
                     compose_homs(proj_out, sub_map.f_out),
                     compose_homs(proj_sup, sub_map.f_sup), sub_map.functor)
    return Tower(world, t.lanes, [par.cobordism] + t.cobs[1:],
                 [new_map] + t.maps[1:])


def _apex_lowering(apex_hi: InternalOpcat, apex_lo: InternalOpcat,
                   incl_hi: InternalFunctor, incl_lo: InternalFunctor,
                   u: InternalFunctor) -> InternalFunctor:
    """The comparison functor restricted to the apexes of two matching spans."""
    support = factor_through(
        compose_homs(incl_hi.support_map, u.support_map), incl_lo.support_map)

    def border(c: Color) -> GraphHom:
        return factor_through(
            compose_homs(incl_hi.border_map(c), u.border_map(c)),
            incl_lo.border_map(u.color_map(c)))

    return InternalFunctor(apex_hi, apex_lo, u.color_map, border, support,
                           plain=u.plain, name=f"{u.name}|apex")


def t_resource(t: Tower, r: str, lower_world: World) -> Tower:
    """resource r do C: pull along the inclusion leg of the hiding span, then
    push along hide_C, on every lane, with the comparison maps carried through
    the apex restrictions of the lowering functors."""
    from .cobord import pull_parts, pull_map, push_map
    hi_world = t.world
    spans = []
    for lane in t.lanes:
        spans.append(hide_span(hi_world.opcat(lane), lower_world.opcat(lane), r))
    pulled = [pull_parts(spans[i].left, c) for i, c in enumerate(t.cobs)]
    pushed = [push(spans[i].right, p.cobordism) for i, p in enumerate(pulled)]
    maps = []
    for i, m in enumerate(t.maps):
        u_hi = hi_world.lowering(t.lanes[i])
        apex_u = _apex_lowering(spans[i].apex, spans[i + 1].apex,
                                spans[i].left, spans[i + 1].left, u_hi)
        pm = pull_map(m, pulled[i], pulled[i + 1], apex_u)
        maps.append(push_map(pm, spans[i].right, spans[i + 1].right,
                             lower_world.lowering(t.lanes[i])))
    return Tower(lower_world, t.lanes, pushed, maps)


def t_with(t: Tower, r: str, upper_world: World, pre: Predicate | None,
           post: Predicate | None) -> Tower:
    """with r do C: on the separated lane the body is pushed to the context
    with r held by the Code and wrapped between take/release; on the machine
    lanes the body is pulled along nabla and wrapped between P(r)/V(r)."""
    from .cobord import pull_parts, pull_map, push_map
    lower_world = t.world
    lanes = t.lanes
    has_sep = lanes[0] == "Sep"
    spans = {}
    for lane in ("S", "L"):
        if lane in lanes:
            spans[lane] = when_span(upper_world.opcat(lane),
                                    lower_world.opcat(lane), r)
    mids = []
    pull_results = {}
    for i, lane in enumerate(lanes):
        if lane == "Sep":
            w = when_push(lower_world.opcat_sep, upper_world.opcat_sep, r)
            mids.append(push(w, t.cobs[i]))
        else:
            pr = pull_parts(spans[lane].left, t.cobs[i])
            pull_results[lane] = pr
            mids.append(push(spans[lane].right, pr.cobordism))
    mid_maps = []
    for i, m in enumerate(t.maps):
        hi_lane, lo_lane = lanes[i], lanes[i + 1]
        if hi_lane == "Sep":
            mid_sep = mids[i]
            pr = pull_results[lo_lane]
            u_hi = upper_world.u_sep
            apex = spans[lo_lane].apex
            incl = spans[lo_lane].right  # inclusion into the upper template
            q_sup = factor_through(
                compose_homs(mid_sep.labeling, u_hi.support_map),
                incl.support_map)
            f_sup = pr.pb_sup.mediate(m.f_sup, q_sup)
            q_in = factor_through(
                compose_homs(mid_sep.source.labeling,
                             u_hi.border_map(mid_sep.source.color)),
                incl.border_map(UNIT_COLOR))
            f_in = pr.pb_src.mediate(m.f_in, q_in)
            q_out = factor_through(
                compose_homs(mid_sep.target.labeling,
                             u_hi.border_map(mid_sep.target.color)),
                incl.border_map(UNIT_COLOR))
            f_out = pr.pb_tgt.mediate(m.f_out, q_out)
            mid_maps.append(CobMap(mids[i], mids[i + 1], f_in, f_out, f_sup,
                                   upper_world.u_sep))
        else:
            u_hi = upper_world.lowering(hi_lane)
            apex_u = _apex_lowering(spans[hi_lane].apex, spans[lo_lane].apex,
                                    spans[hi_lane].right, spans[lo_lane].right,
                                    u_hi)
            pm = pull_map(m, pull_results[hi_lane], pull_results[lo_lane],
                          apex_u)
            mid_maps.append(push_map(pm, spans[hi_lane].right,
                                     spans[lo_lane].right,
                                     upper_world.lowering(hi_lane)))
    mid_tower = Tower(upper_world, lanes, mids, mid_maps)
    take = _lock_leaf_tower(upper_world, lanes, Acquire(r), pre, "take")
    release = _lock_leaf_tower(upper_world, lanes, Release(r), post, "release")
    return t_seq(t_seq(take, mid_tower), release)


def _lock_leaf_tower(world: World, lanes, m: Instruction,
                     pred: Predicate | None, which: str) -> Tower:
    """take_r / release_r: the P(r)/V(r) leaves of a critical section."""
    cobs = []
    for lane in lanes:
        if lane == "Sep":
            opcat = world.opcat_sep
            inv = world.gamma.invariant(m.lock)
            if which == "take":
                pre_c = opcat.color_of(pred)
                post_c = opcat.color_of(Star(pred, inv))
            else:
                pre_c = opcat.color_of(Star(pred, inv))
                post_c = opcat.color_of(pred)
            cobs.append(sem_instr_sep(opcat, m, pre_c, post_c))
        else:
            cobs.append(sem_instr(world.opcat(lane), m))
    maps = []
    for i in range(len(lanes) - 1):
        if lanes[i] == "Sep":
            maps.append(_leaf_map_sep_s(world, cobs[i], cobs[i + 1]))
        else:
            maps.append(_leaf_map_s_l(world, m, cobs[i], cobs[i + 1]))
    return Tower(world, tuple(lanes), cobs, maps)

# -- loops -------------------------------------------------------------------------


def _bot_tower(world: World, lanes) -> Tower:
    """The least stage of the loop chain: the initial pointed cobordism."""
    from .agraph import single_node_graph
    cobs = []
    for lane in lanes:
        opcat = world.opcat(lane)
        g = single_node_graph(("•",))
        border = opcat.border(UNIT_COLOR)
        lam = GraphHom(g, border.graph, (border.point,), (), ())
        game = Game(opcat, UNIT_COLOR, g, lam, 0)
        sup_lam = GraphHom(g, opcat.support, (opcat.support_point,), (), ())
        ident = identity_hom(g)
        cobs.append(Cobordism(opcat, game, game, g, ident, ident, sup_lam,
                              support_point=0))
    maps = []
    for i in range(len(lanes) - 1):
        hi, lo = cobs[i], cobs[i + 1]
        h = GraphHom(hi.support, lo.support, (0,), (), ())
        maps.append(CobMap(hi, lo, h, h, h, world.lowering(lanes[i])))
    return Tower(world, tuple(lanes), cobs, maps)


def _reachable_code_nodes(c: Cobordism) -> set[int]:
    """Support nodes reachable from the input border along Code edges."""
    seen = set(c.s_map.node_map)
    frontier = list(seen)
    out = c.support.out_edges
    while frontier:
        n = frontier.pop()
        for e in out[n]:
            if polarity(c.support.edge_payload(e)) == "C":
                t = c.support.edge_tgt(e)
                if t not in seen:
                    seen.add(t)
                    frontier.append(t)
    return seen


@dataclass
class WhileResult:
    depth: int
    stabilized: bool
    truncated: bool
    chain_maps: tuple  # chain inclusions on the first lane


def _id_cobmap(c: Cobordism) -> CobMap:
    return CobMap(c, c, identity_hom(c.source.carrier),
                  identity_hom(c.target.carrier), identity_hom(c.support), None)


def t_while(world: World, guard: BoolExpr, body: Tower, bound: int
            ) -> tuple[Tower, WhileResult]:
    """Bounded unfolding of `while guard do body`.

    Stages follow the loop functional W -> (test(B) ; body ; W) + test(~B);
    a stage is semantically stable once the deepest tail layer is unreachable
    from the input border along Code edges (further unfolding cannot add
    reachable runs).  The chain inclusions between consecutive stages are
    recorded for the first lane."""
    from .cobord import union_parts, union_map
    lanes = body.lanes
    tb = t_leaf_code(world, TestB(guard), lanes)
    tnb = t_leaf_code(world, TestB(BNot(guard)), lanes)
    tbc = t_seq(tb, body)

    stage = _bot_tower(world, lanes)
    chain = []
    prev_seq0 = None
    prev_union0 = None
    prev_chain = None
    depth = 0
    stabilized = False
    while depth < bound and not stabilized:
        seqs = [seq_parts(a, b) for a, b in zip(tbc.cobs, stage.cobs)]
        unions = [union_parts(s.cobordism, d) for s, d in zip(seqs, tnb.cobs)]
        new_maps = []
        for i, (m1, m2) in enumerate(zip(tbc.maps, stage.maps)):
            sm_ = seq_map(m1, m2, seqs[i], seqs[i + 1])
            new_maps.append(union_map(sm_, tnb.maps[i], unions[i], unions[i + 1]))
        new_stage = Tower(world, lanes, [u.cobordism for u in unions], new_maps)
        if depth == 0:
            prev, new = stage.cobs[0], new_stage.cobs[0]
            f_in = GraphHom(prev.source.carrier, new.source.carrier,
                            (new.source.point,), (), ())
            f_out = GraphHom(prev.target.carrier, new.target.carrier,
                             (new.target.point,), (), ())
            f_sup = GraphHom(prev.support, new.support,
                             (new.support_point,), (), ())
            chain_map = CobMap(prev, new, f_in, f_out, f_sup, None)
        else:
            inner = seq_map(_id_cobmap(tbc.cobs[0]), prev_chain,
                            prev_seq0, seqs[0])
            chain_map = union_map(inner, _id_cobmap(tnb.cobs[0]),
                                  prev_union0, unions[0])
        chain.append(chain_map)
        prev_chain, prev_seq0, prev_union0 = chain_map, seqs[0], unions[0]
        # the tail attach layer: image of the filling between the body output
        # and the previous stage's input
        fill0 = seqs[0].fill.cobordism
        layer = {unions[0].sup_inl.node_map[
            seqs[0].right.po.left.node_map[
                seqs[0].left.po.right.node_map[f]]]
            for f in range(fill0.support.n_nodes)}
        stage = new_stage
        depth += 1
        reach = _reachable_code_nodes(stage.cobs[0])
        stabilized = not (reach & layer)
    final = t_precompose_border(stage)
    return final, WhileResult(depth, stabilized, not stabilized, tuple(chain))


# -- code interpretation ---------------------------------------------------------


def sem_code_tower(itp: Interpreter, world: World, cmd: Command,
                   lanes=("S", "L")) -> Tower:
    """Interpret a command over the given lanes, in lockstep."""
    if isinstance(cmd, Skip):
        return t_leaf_code(world, Nop(), lanes)
    if isinstance(cmd, AssignC):
        return t_leaf_code(world, Assign(cmd.var, cmd.expr), lanes)
    if isinstance(cmd, LoadC):
        return t_leaf_code(world, Load(cmd.var, cmd.expr), lanes)
    if isinstance(cmd, StoreC):
        return t_leaf_code(world, Store(cmd.loc_expr, cmd.val_expr), lanes)
    if isinstance(cmd, DisposeC):
        return t_leaf_code(world, Dispose(cmd.expr), lanes)
    if isinstance(cmd, MallocC):
        locs = world.cfg.locations
        if not locs:
            raise InterpError("malloc in a configuration without locations")
        acc = t_leaf_code(world, Alloc(cmd.var, cmd.expr, locs[0]), lanes)
        for l in locs[1:]:
            acc = t_union(acc, t_leaf_code(world, Alloc(cmd.var, cmd.expr, l),
                                           lanes))
        return t_precompose_border(acc)
    if isinstance(cmd, SeqC):
        return t_seq(sem_code_tower(itp, world, cmd.first, lanes),
                     sem_code_tower(itp, world, cmd.second, lanes))
    if isinstance(cmd, ParC):
        return t_par(sem_code_tower(itp, world, cmd.left, lanes),
                     sem_code_tower(itp, world, cmd.right, lanes))
    if isinstance(cmd, IfC):
        br1 = t_seq(t_leaf_code(world, TestB(cmd.guard), lanes),
                    sem_code_tower(itp, world, cmd.then_branch, lanes))
        br2 = t_seq(t_leaf_code(world, TestB(BNot(cmd.guard)), lanes),
                    sem_code_tower(itp, world, cmd.else_branch, lanes))
        return t_precompose_border(t_union(br1, br2))
    if isinstance(cmd, WhileC):
        body = sem_code_tower(itp, world, cmd.body, lanes)
        final, _info = t_while(world, cmd.guard, body, itp.run.unfold_bound)
        return final
    if isinstance(cmd, ResourceC):
        upper = itp.world(world.locks + (cmd.lock,))
        body = sem_code_tower(itp, upper, cmd.body, lanes)
        return t_resource(body, cmd.lock, world)
    if isinstance(cmd, WithC):
        if cmd.lock not in world.locks:
            raise InterpError(f"with {cmd.lock}: lock not in scope")
        lower = itp.world(tuple(x for x in world.locks if x != cmd.lock))
        body = sem_code_tower(itp, lower, cmd.body, lanes)
        return t_with(body, cmd.lock, world, None, None)
    raise TypeError(f"unknown command {cmd!r}")

# -- operational extraction and race checking -----------------------------------------


def entry_nodes(c: Cobordism, state_key) -> list[int]:
    """Support nodes of the input border over a given template state."""
    opcat = c.opcat
    border = opcat.border(c.source.color)
    out = []
    for i in range(c.source.carrier.n_nodes):
        if border.graph.nodes[c.source.labeling.node_map[i]] == state_key:
            out.append(c.s_map.node_map[i])
    return sorted(set(out))


def final_states(c: Cobordism) -> dict:
    """Per initial state, the set of states at the ends of maximal Code paths."""
    sup = c.support
    lam = c.labeling
    opcat = c.opcat
    results: dict = {}
    border = opcat.border(c.source.color)
    maximal_cache: dict[int, frozenset] = {}

    def run(n: int) -> frozenset:
        if n in maximal_cache:
            return maximal_cache[n]
        maximal_cache[n] = frozenset()  # cycle guard; loops are unfolded acyclically
        succ = [sup.edge_tgt(e) for e in sup.out_edges[n]
                if polarity(sup.edge_payload(e)) == "C"]
        if not succ:
            out = frozenset({opcat.support.nodes[lam.node_map[n]]})
        else:
            out = frozenset().union(*(run(t) for t in succ))
        maximal_cache[n] = out
        return out

    for i in range(c.source.carrier.n_nodes):
        key = border.graph.nodes[c.source.labeling.node_map[i]]
        if key == ERROR_KEY:
            continue
        results.setdefault(key, frozenset())
        results[key] |= run(c.s_map.node_map[i])
    return results


@dataclass
class RaceReport:
    race_free: bool
    counterexample: LiftCounterexample | None
    anchor_states: tuple | None  # template states of the unlifted square
    tile_instructions: tuple | None


def race_check(tower: Tower) -> RaceReport:
    """Data-race detection: the stateful-to-stateless comparison must lift
    every tile over a path of two Code transitions; an unliftable one is a
    pair of program instructions the lock discipline permutes but the memory
    semantics does not.  (Tiles anchored at Frame moves are environment
    assumptions, not races of the program with itself: the borders are
    receptive to arbitrary Frame writes, so an unrestricted check would flag
    every writing program.)"""
    m = tower.maps[-1]
    cex = _race_counterexample(m)
    if cex is None:
        return RaceReport(True, None, None, None)
    lo = m.dst
    tile = lo.support.tiles[cex.below[1]]
    instrs = tuple(lo.support.edge_payload(e) for e in tile)
    hi = m.src
    e1, e2 = cex.anchor
    states = (hi.support.nodes[hi.support.edge_src(e1)],
              hi.support.nodes[hi.support.edge_tgt(e1)],
              hi.support.nodes[hi.support.edge_tgt(e2)])
    return RaceReport(False, cex, states, instrs)


def _race_counterexample(m: CobMap) -> LiftCounterexample | None:
    """First unliftable stateless tile anchored at a Code-Code path."""
    from . import _kernels
    import numpy as np
    g, h, f = m.src.support, m.dst.support, m.f_sup
    code_edges = [e for e in range(g.n_edges)
                  if polarity(g.edge_payload(e)) == "C"]
    if not code_edges:
        return None
    lifted_tops: dict = {}
    for t in range(g.n_tiles):
        a, b, _, _ = g.tiles[t]
        lifted_tops.setdefault((a, b), set()).add(f.tile_map[t])
    out = g.out_edges
    for e1 in code_edges:
        for e2 in out[g.edge_tgt(e1)]:
            if polarity(g.edge_payload(e2)) != "C":
                continue
            below_tops = h.tiles_by_top.get((f.edge_map[e1], f.edge_map[e2]))
            if not below_tops:
                continue
            have = lifted_tops.get((e1, e2), set())
            for t_below in below_tops:
                if t_below not in have:
                    return LiftCounterexample("tile-over-top-path",
                                              (e1, e2), ("tile", t_below))
    return None


def error_reaching_code_edges(c: Cobordism) -> list[int]:
    """Code edges of a (pointed) cobordism support that land on the point."""
    out = []
    for e in range(c.support.n_edges):
        if polarity(c.support.edge_payload(e)) == "C" \
                and c.support.edge_tgt(e) == c.support_point:
            out.append(e)
    return out


# -- proof validation ------------------------------------------------------------------


@dataclass(frozen=True)
class DecoratedProof:
    rule: str
    pre: Predicate
    post: Predicate
    params: tuple
    cmd: Command
    gamma: LockContext
    children: tuple

    def param(self, name, default=None):
        for k, v in self.params:
            if k == name:
                return v
        return default


def _own_top(x: str):
    from .seplogic import Own
    return Own(x, Fraction(1))


def _points_to(e, perm, v):
    from .seplogic import PointsTo
    return PointsTo(e, perm, v)


def validate_proof(pf: ProofFile, program: Command, itp: Interpreter
                   ) -> tuple[DecoratedProof | None, list[str]]:
    """Check every node against its rule schema (triples up to semantic
    equivalence, side conditions decided over the finite domains) and pair it
    with its command and lock context."""
    sat = itp.sat
    errors: list[str] = []
    gamma0 = LockContext(tuple(pf.context))

    def eq(p, q) -> bool:
        return sat.equivalent(p, q)

    def fail(path, msg):
        errors.append(f"{'/'.join(path) or 'root'}: {msg}")

    def dec(node: ProofNode, cmd: Command, gamma: LockContext, path
            ) -> DecoratedProof | None:
        try:
            sat.check_predicate(node.pre)
            sat.check_predicate(node.post)
        except Exception as exc:
            fail(path, f"malformed predicate: {exc}")
            return None
        rule = node.rule
        mk = lambda children: DecoratedProof(rule, node.pre, node.post,
                                             node.params, cmd, gamma,
                                             tuple(children))
        if rule == "AFF":
            if not isinstance(cmd, AssignC):
                fail(path, f"AFF applies to assignments, not {cmd}")
                return None
            if node.children:
                fail(path, "AFF takes no subproofs")
                return None
            frame = node.param("frame")
            val = node.param("val")
            if frame is None or val is None:
                fail(path, "AFF needs [frame: {P}] and [val: v]")
                return None
            want_pre = PAnd(Star(_own_top(cmd.var), frame),
                            PEq(cmd.expr, Const(val)))
            want_post = PAnd(Star(_own_top(cmd.var), frame),
                             PEq(_var(cmd.var), Const(val)))
            if not eq(node.pre, want_pre):
                fail(path, "AFF precondition does not match its schema")
            if not eq(node.post, want_post):
                fail(path, "AFF postcondition does not match its schema")
            return mk(())
        if rule == "STORE":
            if not isinstance(cmd, StoreC):
                fail(path, f"STORE applies to heap writes, not {cmd}")
                return None
            if node.children:
                fail(path, "STORE takes no subproofs")
                return None
            from .seplogic import Quant
            from .exprs import MVar
            val = node.param("val")
            if val is None:
                # E |-> - : the overwritten value is arbitrary
                want_pre = Quant("exists", "_w",
                                 _points_to(cmd.loc_expr, Fraction(1),
                                            MVar("_w")))
            else:
                want_pre = _points_to(cmd.loc_expr, Fraction(1), Const(val))
            want_post = _points_to(cmd.loc_expr, Fraction(1), cmd.val_expr)
            if not eq(node.pre, want_pre):
                fail(path, "STORE precondition does not match E |-> - (or E |-> v)")
            if not eq(node.post, want_post):
                fail(path, "STORE postcondition does not match E |-> E'")
            return mk(())
        if rule == "LOAD":
            if not isinstance(cmd, LoadC):
                fail(path, f"LOAD applies to heap reads, not {cmd}")
                return None
            if node.children:
                fail(path, "LOAD takes no subproofs")
                return None
            if cmd.var in cmd.expr.free_vars():
                fail(path, f"LOAD side condition: {cmd.var} occurs in the address")
                return None
            perm = node.param("perm")
            val = node.param("val")
            if perm is None or val is None:
                fail(path, "LOAD needs [perm: p] and [val: v]")
                return None
            cell = _points_to(cmd.expr, Fraction(perm), Const(val))
            want_pre = Star(cell, _own_top(cmd.var))
            want_post = PAnd(Star(cell, _own_top(cmd.var)),
                             PEq(_var(cmd.var), Const(val)))
            if not eq(node.pre, want_pre):
                fail(path, "LOAD precondition does not match its schema")
            if not eq(node.post, want_post):
                fail(path, "LOAD postcondition does not match its schema")
            return mk(())
        if rule == "IF":
            if not isinstance(cmd, IfC):
                fail(path, f"IF applies to conditionals, not {cmd}")
                return None
            if len(node.children) != 2:
                fail(path, "IF takes two subproofs")
                return None
            if not sat.implies_def(node.pre, cmd.guard):
                fail(path, "IF side condition P => def(B) fails")
            c1, c2 = node.children
            if not eq(c1.pre, PAnd(node.pre, bool_to_predicate(cmd.guard))):
                fail(path, "first IF premise precondition mismatch")
            if not eq(c2.pre, PAnd(node.pre,
                                   PNot(bool_to_predicate(cmd.guard)))):
                fail(path, "second IF premise precondition mismatch")
            for ch in (c1, c2):
                if not eq(ch.post, node.post):
                    fail(path, "IF premise postcondition mismatch")
            k1 = dec(c1, cmd.then_branch, gamma, path + ("IF.1",))
            k2 = dec(c2, cmd.else_branch, gamma, path + ("IF.2",))
            return mk((k1, k2)) if k1 and k2 else None
        if rule == "SEQ":
            if not isinstance(cmd, SeqC):
                fail(path, f"SEQ applies to sequences, not {cmd}")
                return None
            if len(node.children) != 2:
                fail(path, "SEQ takes two subproofs")
                return None
            c1, c2 = node.children
            if not eq(c1.pre, node.pre):
                fail(path, "SEQ precondition mismatch")
            if not eq(c2.post, node.post):
                fail(path, "SEQ postcondition mismatch")
            if not eq(c1.post, c2.pre):
                fail(path, "SEQ midpoint mismatch")
            k1 = dec(c1, cmd.first, gamma, path + ("SEQ.1",))
            k2 = dec(c2, cmd.second, gamma, path + ("SEQ.2",))
            return mk((k1, k2)) if k1 and k2 else None
        if rule == "DISJ":
            if len(node.children) != 2:
                fail(path, "DISJ takes two subproofs")
                return None
            c1, c2 = node.children
            if not eq(node.pre, POr(c1.pre, c2.pre)):
                fail(path, "DISJ precondition is not the disjunction")
            if not eq(node.post, POr(c1.post, c2.post)):
                fail(path, "DISJ postcondition is not the disjunction")
            k1 = dec(c1, cmd, gamma, path + ("DISJ.1",))
            k2 = dec(c2, cmd, gamma, path + ("DISJ.2",))
            return mk((k1, k2)) if k1 and k2 else None
        if rule == "RES":
            if not isinstance(cmd, ResourceC):
                fail(path, f"RES applies to resource blocks, not {cmd}")
                return None
            if len(node.children) != 1:
                fail(path, "RES takes one subproof")
                return None
            inv = node.param("inv")
            if inv is None:
                fail(path, "RES needs [inv: {J}]")
                return None
            ch = node.children[0]
            if not eq(node.pre, Star(ch.pre, inv)):
                fail(path, "RES precondition is not P * J")
            if not eq(node.post, Star(ch.post, inv)):
                fail(path, "RES postcondition is not Q * J")
            if cmd.lock in gamma.names:
                fail(path, f"RES shadows lock {cmd.lock}")
                return None
            k = dec(ch, cmd.body, gamma.extended(cmd.lock, inv),
                    path + ("RES",))
            return mk((k,)) if k else None
        if rule == "WHEN":
            if not isinstance(cmd, WithC):
                fail(path, f"WHEN applies to critical sections, not {cmd}")
                return None
            if len(node.children) != 1:
                fail(path, "WHEN takes one subproof")
                return None
            if cmd.lock not in gamma.names:
                fail(path, f"WHEN: lock {cmd.lock} not in the context")
                return None
            inv = gamma.invariant(cmd.lock)
            ch = node.children[0]
            want = Star(node.pre, inv)
            if not (eq(ch.pre, want) or eq(ch.pre, PAnd(want, PTrue()))):
                fail(path, "WHEN premise precondition is not (P * J) /\\ B")
            if not eq(ch.post, Star(node.post, inv)):
                fail(path, "WHEN premise postcondition is not Q * J")
            k = dec(ch, cmd.body, gamma.without(cmd.lock), path + ("WHEN",))
            return mk((k,)) if k else None
        if rule == "PAR":
            if not isinstance(cmd, ParC):
                fail(path, f"PAR applies to parallel compositions, not {cmd}")
                return None
            if len(node.children) != 2:
                fail(path, "PAR takes two subproofs")
                return None
            c1, c2 = node.children
            if not eq(node.pre, Star(c1.pre, c2.pre)):
                fail(path, "PAR precondition is not P1 * P2")
            if not eq(node.post, Star(c1.post, c2.post)):
                fail(path, "PAR postcondition is not Q1 * Q2")
            k1 = dec(c1, cmd.left, gamma, path + ("PAR.1",))
            k2 = dec(c2, cmd.right, gamma, path + ("PAR.2",))
            return mk((k1, k2)) if k1 and k2 else None
        if rule == "FRAME":
            if len(node.children) != 1:
                fail(path, "FRAME takes one subproof")
                return None
            frame = node.param("frame")
            if frame is None:
                fail(path, "FRAME needs [frame: {R}]")
                return None
            ch = node.children[0]
            if not eq(node.pre, Star(ch.pre, frame)):
                fail(path, "FRAME precondition is not P * R")
            if not eq(node.post, Star(ch.post, frame)):
                fail(path, "FRAME postcondition is not Q * R")
            k = dec(ch, cmd, gamma, path + ("FRAME",))
            return mk((k,)) if k else None
        fail(path, f"no rule named {rule}")
        return None

    root = dec(pf.root, program, gamma0, ())
    return (root if not errors else None), errors


def _var(name: str):
    from .exprs import Var as V
    return V(name)


# -- proof interpretation ---------------------------------------------------------------


PROOF_LANES = ("Sep", "S", "L")


def _leaf_instruction(cmd: Command) -> Instruction:
    if isinstance(cmd, AssignC):
        return Assign(cmd.var, cmd.expr)
    if isinstance(cmd, StoreC):
        return Store(cmd.loc_expr, cmd.val_expr)
    if isinstance(cmd, LoadC):
        return Load(cmd.var, cmd.expr)
    raise InterpError(f"not an axiom command: {cmd}")


def _leaf_tower_proof(world: World, m: Instruction, pre: Predicate,
                      post: Predicate) -> Tower:
    opcat = world.opcat_sep
    sep = sem_instr_sep(opcat, m, opcat.color_of(pre), opcat.color_of(post))
    s = sem_instr(world.opcat_s, m)
    l = sem_instr(world.opcat_l, m)
    maps = [_leaf_map_sep_s(world, sep, s), _leaf_map_s_l(world, m, s, l)]
    return Tower(world, PROOF_LANES, [sep, s, l], maps)


def _test_tower_proof(world: World, guard: BoolExpr, pre: Predicate,
                      positive: bool) -> Tower:
    b = guard if positive else BNot(guard)
    m = TestB(b)
    opcat = world.opcat_sep
    post = PAnd(pre, bool_to_predicate(b))
    sep = sem_instr_sep(opcat, m, opcat.color_of(pre), opcat.color_of(post))
    s = sem_instr(world.opcat_s, m)
    l = sem_instr(world.opcat_l, m)
    maps = [_leaf_map_sep_s(world, sep, s), _leaf_map_s_l(world, m, s, l)]
    return Tower(world, PROOF_LANES, [sep, s, l], maps)


def sem_proof_tower(itp: Interpreter, d: DecoratedProof) -> Tower:
    """Interpret a validated proof over all three lanes at once."""
    world = itp.world(d.gamma.names, d.gamma)
    rule = d.rule
    if rule in ("AFF", "STORE", "LOAD"):
        return _leaf_tower_proof(world, _leaf_instruction(d.cmd), d.pre, d.post)
    if rule == "SEQ":
        return t_seq(sem_proof_tower(itp, d.children[0]),
                     sem_proof_tower(itp, d.children[1]))
    if rule == "PAR":
        return t_par(sem_proof_tower(itp, d.children[0]),
                     sem_proof_tower(itp, d.children[1]))
    if rule == "FRAME":
        sub = sem_proof_tower(itp, d.children[0])
        frame_color = world.opcat_sep.color_of(d.param("frame"))
        return t_identity_frame(sub, frame_color)
    if rule == "DISJ":
        from .cobord import union_parts, cocone_map, union_map
        t1 = sem_proof_tower(itp, d.children[0])
        t2 = sem_proof_tower(itp, d.children[1])
        sep_parts = union_parts(t1.cobs[0], t2.cobs[0])
        # the lower lanes interpret the same command; reuse the first copy
        sep_map = cocone_map(t1.maps[0], t2.maps[0], sep_parts)
        return Tower(world, PROOF_LANES,
                     [sep_parts.cobordism, t1.cobs[1], t1.cobs[2]],
                     [sep_map, t1.maps[1]])
    if rule == "IF":
        cmd = d.cmd
        br1 = t_seq(_test_tower_proof(world, cmd.guard, d.pre, True),
                    sem_proof_tower(itp, d.children[0]))
        br2 = t_seq(_test_tower_proof(world, cmd.guard, d.pre, False),
                    sem_proof_tower(itp, d.children[1]))
        return t_precompose_border(t_union(br1, br2))
    if rule == "RES":
        sub = sem_proof_tower(itp, d.children[0])
        return t_resource(sub, d.cmd.lock, world)
    if rule == "WHEN":
        sub = sem_proof_tower(itp, d.children[0])
        return t_with(sub, d.cmd.lock, world, d.pre, d.post)
    raise InterpError(f"cannot interpret rule {rule}")


# -- soundness verdicts -------------------------------------------------------------------


@dataclass
class SoundnessReport:
    proof_errors: list[str]
    validated: bool
    structural: dict | None
    strictness: dict | None
    code1_ok: bool | None
    code1_counterexample: LiftCounterexample | None
    two_fib_ok: bool | None
    two_fib_counterexample: LiftCounterexample | None
    race: RaceReport | None
    error_edges: list[int]

    @property
    def sound(self) -> bool:
        return bool(self.validated and self.code1_ok and self.two_fib_ok)


def check_soundness(itp: Interpreter, program: Command, pf: ProofFile,
                    assume_valid: bool = False) -> tuple[SoundnessReport, Tower | None]:
    """The full pipeline: validate, interpret all three lanes, check the
    Code-1-fibration of the separated comparison and the 2-fibration of its
    composite with the stateless comparison.

    assume_valid interprets a structurally well-shaped proof even when the
    semantic validation failed (diagnostic mode: the fibration checks then
    exhibit the failure instead)."""
    droot, errors = validate_proof(pf, program, itp)
    if droot is None and not assume_valid:
        return SoundnessReport(errors, False, None, None, None, None, None,
                               None, None, []), None
    if droot is None:
        droot = _decorate_unchecked(pf.root, program,
                                    LockContext(tuple(pf.context)))
    tower = sem_proof_tower(itp, droot)
    m_sep = tower.maps[0]
    m_sl = tower.maps[1]
    code1 = check_lifting(CODE_1_FIBRATION, m_sep.f_sup)
    composite = compose_homs(m_sep.f_sup, m_sl.f_sup)
    twofib = check_lifting(TWO_FIBRATION, composite)
    from .cobord import is_strict
    strictness = {"sep-to-stateful": is_strict(m_sep),
                  "stateful-to-stateless": is_strict(m_sl)}
    report = SoundnessReport(
        proof_errors=errors,
        validated=not errors,
        structural=check_structural(tower.cobs[0]),
        strictness=strictness,
        code1_ok=code1 is None,
        code1_counterexample=code1,
        two_fib_ok=twofib is None,
        two_fib_counterexample=twofib,
        race=race_check(tower),
        error_edges=error_reaching_code_edges(tower.cobs[1]),
    )
    return report, tower


def _decorate_unchecked(node: ProofNode, cmd: Command, gamma: LockContext
                        ) -> DecoratedProof:
    """Shape-only decoration for the assume-valid diagnostic mode."""
    kids = []
    if node.rule == "SEQ":
        kids = [_decorate_unchecked(node.children[0], cmd.first, gamma),
                _decorate_unchecked(node.children[1], cmd.second, gamma)]
    elif node.rule == "PAR":
        kids = [_decorate_unchecked(node.children[0], cmd.left, gamma),
                _decorate_unchecked(node.children[1], cmd.right, gamma)]
    elif node.rule == "IF":
        kids = [_decorate_unchecked(node.children[0], cmd.then_branch, gamma),
                _decorate_unchecked(node.children[1], cmd.else_branch, gamma)]
    elif node.rule == "DISJ":
        kids = [_decorate_unchecked(ch, cmd, gamma) for ch in node.children]
    elif node.rule == "FRAME":
        kids = [_decorate_unchecked(node.children[0], cmd, gamma)]
    elif node.rule == "RES":
        kids = [_decorate_unchecked(node.children[0], cmd.body,
                                    gamma.extended(cmd.lock, node.param("inv")))]
    elif node.rule == "WHEN":
        kids = [_decorate_unchecked(node.children[0], cmd.body,
                                    gamma.without(cmd.lock))]
    return DecoratedProof(node.rule, node.pre, node.post, node.params, cmd,
                          gamma, tuple(kids))


def interpret_code(itp: Interpreter, program: Command,
                   lanes=("S", "L")) -> Tower:
    intro, req = command_locks(program)
    world = itp.world(tuple(sorted(req)))
    return sem_code_tower(itp, world, program, lanes)


def comparison_state(itp: Interpreter, program: Command) -> CobMap:
    """The structurally induced simulation from the stateful to the stateless
    interpretation."""
    return interpret_code(itp, program).maps[0]
