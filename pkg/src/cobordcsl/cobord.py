"""Games, cobordisms and simulations over a template, with all composition
operators: identities, pushout composition, filling systems, generalized
sequential composition, pull/push along internal functors, the parallel
product (pull along pick, push along pince), union, conjunction, bounded loop
unfolding, the error-monad lift, and the canonical Hoare-inequality map.

A cobordism is a cospan of asynchronous graphs (two border games mapped into a
support) labelled over a template.  In the pointed (error) lane every carrier
is a pointed graph and all structure maps preserve the point; the "empty
borders intersection" structural condition then reads "exactly the point
pair".
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .agraph import (AsyncGraph, GraphHom, add_point, check_hom, compose_homs,
                     coproduct, factor_through, identity_hom, is_epi, is_mono,
                     pointed_coproduct, pullback, pushout, subgraph, validate,
                     PointedGraph, POINT_PAYLOAD)
from .template import (Color, InternalFunctor, InternalOpcat, ParBorder,
                       SpanMonoidal, UNIT_COLOR)


@dataclass(frozen=True)
class Game:
    """A colored game: a carrier labelled into the template border of its color."""

    opcat: InternalOpcat
    color: Color
    carrier: AsyncGraph
    labeling: GraphHom  # carrier -> opcat.border(color).graph
    point: int | None = None

    def same_game(self, other: "Game") -> bool:
        return (self.color == other.color
                and self.carrier == other.carrier
                and self.labeling.same_maps(other.labeling)
                and self.point == other.point)


@dataclass(frozen=True)
class Cobordism:
    """A cospan source -> support <- target labelled over the template."""

    opcat: InternalOpcat
    source: Game
    target: Game
    support: AsyncGraph
    s_map: GraphHom  # source.carrier -> support
    t_map: GraphHom
    labeling: GraphHom  # support -> opcat.support
    support_point: int | None = None


def validate_cobordism(c: Cobordism) -> list[str]:
    """All broken cobordism invariants (commuting labeling squares included)."""
    errs = []
    for name, g in (("source", c.source.carrier), ("target", c.target.carrier),
                    ("support", c.support)):
        if validate(g):
            errs.append(f"invalid graph: {name}")
    for name, h in (("s_map", c.s_map), ("t_map", c.t_map),
                    ("labeling", c.labeling),
                    ("source labeling", c.source.labeling),
                    ("target labeling", c.target.labeling)):
        if check_hom(h):
            errs.append(f"invalid hom: {name}")
    if errs:
        return errs
    src_leg = c.opcat.leg(c.source.color)
    tgt_leg = c.opcat.leg(c.target.color)
    if not compose_homs(c.s_map, c.labeling).same_maps(
            compose_homs(c.source.labeling, src_leg)):
        errs.append("source square does not commute")
    if not compose_homs(c.t_map, c.labeling).same_maps(
            compose_homs(c.target.labeling, tgt_leg)):
        errs.append("target square does not commute")
    if c.opcat.pointed:
        if c.support_point is None:
            errs.append("missing support point")
        else:
            if c.s_map.node_map[c.source.point] != c.support_point:
                errs.append("s_map does not preserve the point")
            if c.t_map.node_map[c.target.point] != c.support_point:
                errs.append("t_map does not preserve the point")
            if c.labeling.node_map[c.support_point] != c.opcat.support_point:
                errs.append("labeling does not preserve the point")
    return errs


def check_structural(c: Cobordism) -> dict:
    """The four structural conditions required of interpretation cobordisms."""
    from .agraph import ENV_1_FIBRATION, check_lifting
    border = c.opcat.border(c.source.color)
    cond1 = is_epi(c.source.labeling)
    cond2 = check_lifting(ENV_1_FIBRATION, c.labeling) is None
    cond3 = is_mono(c.t_map)
    pb = pullback(c.s_map, c.t_map)
    if c.opcat.pointed:
        cond4 = (pb.graph.n_nodes == 1 and pb.graph.n_edges == 0
                 and pb.graph.nodes[0] == (c.source.carrier.nodes[c.source.point],
                                           c.target.carrier.nodes[c.target.point]))
    else:
        cond4 = pb.graph.n_nodes == 0 and pb.graph.n_edges == 0
    return {"border-epi": cond1, "support-env-1-fibration": cond2,
            "target-mono": cond3, "borders-disjoint": cond4}


# -- identities ------------------------------------------------------------------


def identity_cobordism(g: Game) -> Cobordism:
    lam = compose_homs(g.labeling, g.opcat.leg(g.color))
    ident = identity_hom(g.carrier)
    return Cobordism(g.opcat, g, g, g.carrier, ident, ident, lam,
                     support_point=g.point)


def border_game(opcat: InternalOpcat, color: Color) -> Game:
    """The full border game of a color, identity-labelled."""
    b = opcat.border(color)
    return Game(opcat, color, b.graph, identity_hom(b.graph), b.point)


def lifted_border_game(opcat: InternalOpcat, color: Color) -> Game:
    """T(border): the out-border of a pointed instruction cobordism."""
    b = opcat.border(color)
    pg = add_point(b.graph)
    node_map = tuple(range(b.graph.n_nodes)) + (b.point,)
    lam = GraphHom(pg.graph, b.graph, node_map,
                   tuple(range(b.graph.n_edges)), tuple(range(b.graph.n_tiles)))
    return Game(opcat, color, pg.graph, lam, pg.point)


# -- composition -----------------------------------------------------------------


class CompositionError(Exception):
    pass


@dataclass(frozen=True)
class ComposeResult:
    cobordism: Cobordism
    po: object  # the SpanResult of the support pushout


def compose_parts(c1: Cobordism, c2: Cobordism) -> ComposeResult:
    """Pushout composition along a shared border game, relabelled through mu."""
    if c1.opcat is not c2.opcat and c1.opcat != c2.opcat:
        raise CompositionError("cobordisms live over different templates")
    if not c1.target.same_game(c2.source):
        raise CompositionError("border mismatch: target of left != source of right")
    po = pushout(c1.t_map, c2.s_map)
    mid = c1.target.color
    l2 = c1.opcat.lambda2(mid)
    med = po.mediate(compose_homs(c1.labeling, l2.inl),
                     compose_homs(c2.labeling, l2.inr))
    lam = compose_homs(med, l2.mu)
    point = po.left.node_map[c1.support_point] if c1.opcat.pointed else None
    cob = Cobordism(c1.opcat, c1.source, c2.target, po.graph,
                    compose_homs(c1.s_map, po.left),
                    compose_homs(c2.t_map, po.right),
                    lam, support_point=point)
    return ComposeResult(cob, po)


def compose(c1: Cobordism, c2: Cobordism) -> Cobordism:
    return compose_parts(c1, c2).cobordism


def compose_map(m1: "CobMap", m2: "CobMap", hi: ComposeResult, lo: ComposeResult
                ) -> "CobMap":
    """The induced map between pushout compositions, from maps of the parts."""
    f_sup = hi.po.mediate(compose_homs(m1.f_sup, lo.po.left),
                          compose_homs(m2.f_sup, lo.po.right))
    return CobMap(hi.cobordism, lo.cobordism, m1.f_in, m2.f_out, f_sup,
                  m1.functor)


@dataclass(frozen=True)
class FillResult:
    cobordism: Cobordism
    pb: object
    po: object


def fill_parts(out_game: Game, in_game: Game) -> FillResult:
    """The filling cobordism between an output and an input interface: the
    pushout over the pullback of their underlying template states."""
    opcat = out_game.opcat
    lam_b = compose_homs(out_game.labeling, opcat.leg(out_game.color))
    lam_a = compose_homs(in_game.labeling, opcat.leg(in_game.color))
    pb = pullback(lam_b, lam_a)
    po = pushout(pb.left, pb.right)
    lam = po.mediate(lam_b, lam_a)
    point = po.left.node_map[out_game.point] if opcat.pointed else None
    cob = Cobordism(opcat, out_game, in_game, po.graph, po.left, po.right,
                    lam, support_point=point)
    return FillResult(cob, pb, po)


def fill(out_game: Game, in_game: Game) -> Cobordism:
    return fill_parts(out_game, in_game).cobordism


def fill_map(out_map: GraphHom, in_map: GraphHom, hi: FillResult, lo: FillResult,
             functor: InternalFunctor | None) -> "CobMap":
    """The induced map between two fillings over border carrier maps."""
    f_sup = hi.po.mediate(compose_homs(out_map, lo.po.left),
                          compose_homs(in_map, lo.po.right))
    return CobMap(hi.cobordism, lo.cobordism, out_map, in_map, f_sup, functor)


@dataclass(frozen=True)
class SeqResult:
    cobordism: Cobordism
    fill: FillResult
    left: ComposeResult  # c1 ; fill
    right: ComposeResult  # (c1 ; fill) ; c2


def seq_parts(c1: Cobordism, c2: Cobordism) -> SeqResult:
    f = fill_parts(c1.target, c2.source)
    left = compose_parts(c1, f.cobordism)
    right = compose_parts(left.cobordism, c2)
    return SeqResult(right.cobordism, f, left, right)


def seq(c1: Cobordism, c2: Cobordism) -> Cobordism:
    """Generalized sequential composition through the filling system."""
    return seq_parts(c1, c2).cobordism


def seq_map(m1: "CobMap", m2: "CobMap", hi: SeqResult, lo: SeqResult) -> "CobMap":
    """Lockstep map between sequential composites, built through the fill and
    the two pushouts."""
    fmap = fill_map(m1.f_out, m2.f_in, hi.fill, lo.fill, m1.functor)
    xmap = compose_map(m1, fmap, hi.left, lo.left)
    return compose_map(xmap, m2, hi.right, lo.right)


# -- pull and push ----------------------------------------------------------------


def push(f: InternalFunctor, c: Cobordism) -> Cobordism:
    """Relabel a cobordism along an internal functor (post-composition)."""
    if c.opcat is not f.src and c.opcat != f.src:
        raise CompositionError("cobordism does not live over the functor's domain")

    def push_game(g: Game) -> Game:
        return Game(f.dst, f.color_map(g.color), g.carrier,
                    compose_homs(g.labeling, f.border_map(g.color)), g.point)

    return Cobordism(f.dst, push_game(c.source), push_game(c.target), c.support,
                     c.s_map, c.t_map, compose_homs(c.labeling, f.support_map),
                     support_point=c.support_point)


@dataclass(frozen=True)
class PullResult:
    cobordism: Cobordism
    pb_src: object
    pb_tgt: object
    pb_sup: object


def pull(f: InternalFunctor, c: Cobordism) -> Cobordism:
    return pull_parts(f, c).cobordism


def pull_parts(f: InternalFunctor, c: Cobordism) -> PullResult:
    """Transport a cobordism backwards along a plain internal functor by the
    three pointwise pullbacks."""
    if not f.plain:
        raise CompositionError("pull requires a plain internal functor")
    if c.opcat is not f.dst and c.opcat != f.dst:
        raise CompositionError("cobordism does not live over the functor's codomain")
    opcat = f.src

    def pull_game(g: Game):
        f0 = f.border_map(g.color)
        pb = pullback(g.labeling, f0)
        point = None
        if opcat.pointed:
            bp = opcat.border(g.color).point
            point = pb.graph.node_index[(g.carrier.nodes[g.point],
                                         opcat.border(g.color).graph.nodes[bp])]
        return Game(opcat, g.color, pb.graph, pb.right, point), pb

    src_game, pb_a = pull_game(c.source)
    tgt_game, pb_b = pull_game(c.target)
    pb_s = pullback(c.labeling, f.support_map)
    s_map = pb_s.mediate(compose_homs(pb_a.left, c.s_map),
                         compose_homs(pb_a.right, opcat.leg(c.source.color)))
    t_map = pb_s.mediate(compose_homs(pb_b.left, c.t_map),
                         compose_homs(pb_b.right, opcat.leg(c.target.color)))
    point = None
    if opcat.pointed:
        point = s_map.node_map[src_game.point]
    cob = Cobordism(opcat, src_game, tgt_game, pb_s.graph, s_map, t_map,
                    pb_s.right, support_point=point)
    return PullResult(cob, pb_a, pb_b, pb_s)


def transport(span, c: Cobordism) -> Cobordism:
    """Pull along the left (plain) leg of an acute span, push along the right."""
    return push(span.right, pull(span.left, c))


# -- union, conjunction -------------------------------------------------------------


@dataclass(frozen=True)
class UnionResult:
    cobordism: Cobordism
    s_inl: GraphHom
    s_inr: GraphHom
    t_inl: GraphHom
    t_inr: GraphHom
    sup_inl: GraphHom
    sup_inr: GraphHom


def union(c1: Cobordism, c2: Cobordism) -> Cobordism:
    return union_parts(c1, c2).cobordism


def union_parts(c1: Cobordism, c2: Cobordism) -> UnionResult:
    """Coproduct of cobordisms; borders land in the disjunction color."""
    opcat = c1.opcat
    si = opcat.or_color(c1.source.color, c2.source.color)
    ti = opcat.or_color(c1.target.color, c2.target.color)

    def incl(color: Color, into: Color) -> GraphHom:
        if color == into:
            return identity_hom(opcat.border(color).graph)
        return factor_through(opcat.leg(color), opcat.leg(into))

    def join_games(g1: Game, g2: Game, color: Color):
        l1 = compose_homs(g1.labeling, incl(g1.color, color))
        l2 = compose_homs(g2.labeling, incl(g2.color, color))
        if opcat.pointed:
            pg, inl, inr = pointed_coproduct(PointedGraph(g1.carrier, g1.point),
                                             PointedGraph(g2.carrier, g2.point))
            po = pushout(GraphHom(_single(), g1.carrier, (g1.point,), (), ()),
                         GraphHom(_single(), g2.carrier, (g2.point,), (), ()))
            lam = po.mediate(l1, l2)
            return Game(opcat, color, pg.graph, lam, pg.point), inl, inr
        g, inl, inr = coproduct(g1.carrier, g2.carrier)
        lam = GraphHom(g, opcat.border(color).graph,
                       l1.node_map + l2.node_map,
                       l1.edge_map + l2.edge_map,
                       l1.tile_map + l2.tile_map)
        return Game(opcat, color, g, lam), inl, inr

    res = join_games(c1.source, c2.source, si)
    src_game, s_inl, s_inr = res
    tgt_game, t_inl, t_inr = join_games(c1.target, c2.target, ti)
    if opcat.pointed:
        psup, sup_inl, sup_inr = pointed_coproduct(
            PointedGraph(c1.support, c1.support_point),
            PointedGraph(c2.support, c2.support_point))
        sup, point = psup.graph, psup.point
    else:
        sup, sup_inl, sup_inr = coproduct(c1.support, c2.support)
        point = None
    lam = _copair(sup_inl, sup_inr, c1.labeling, c2.labeling, sup,
                  opcat.support)
    s_map = _copair(s_inl, s_inr, compose_homs(c1.s_map, sup_inl),
                    compose_homs(c2.s_map, sup_inr), src_game.carrier, sup)
    t_map = _copair(t_inl, t_inr, compose_homs(c1.t_map, sup_inl),
                    compose_homs(c2.t_map, sup_inr), tgt_game.carrier, sup)
    cob = Cobordism(opcat, src_game, tgt_game, sup, s_map, t_map, lam,
                    support_point=point)
    return UnionResult(cob, s_inl, s_inr, t_inl, t_inr, sup_inl, sup_inr)


def _single() -> AsyncGraph:
    from .agraph import single_node_graph
    return single_node_graph()


def _copair(inl: GraphHom, inr: GraphHom, h1: GraphHom, h2: GraphHom,
            dom: AsyncGraph, cod: AsyncGraph) -> GraphHom:
    """[h1, h2] out of a (pointed) coproduct given through its injections."""
    nm = [None] * dom.n_nodes
    em = [None] * dom.n_edges
    tm = [None] * dom.n_tiles
    for inj, h in ((inl, h1), (inr, h2)):
        for i, j in enumerate(inj.node_map):
            nm[j] = h.node_map[i]
        for i, j in enumerate(inj.edge_map):
            em[j] = h.edge_map[i]
        for i, j in enumerate(inj.tile_map):
            tm[j] = h.tile_map[i]
    if any(x is None for x in nm + em + tm):
        raise AssertionError("injections are not jointly surjective")
    return GraphHom(dom, cod, tuple(nm), tuple(em), tuple(tm))


def union_map(m1: "CobMap", m2: "CobMap", hi: UnionResult, lo: UnionResult
              ) -> "CobMap":
    """The induced map between unions."""
    f_sup = _copair(hi.sup_inl, hi.sup_inr,
                    compose_homs(m1.f_sup, lo.sup_inl),
                    compose_homs(m2.f_sup, lo.sup_inr),
                    hi.cobordism.support, lo.cobordism.support)
    f_in = _copair(hi.s_inl, hi.s_inr,
                   compose_homs(m1.f_in, lo.s_inl),
                   compose_homs(m2.f_in, lo.s_inr),
                   hi.cobordism.source.carrier, lo.cobordism.source.carrier)
    f_out = _copair(hi.t_inl, hi.t_inr,
                    compose_homs(m1.f_out, lo.t_inl),
                    compose_homs(m2.f_out, lo.t_inr),
                    hi.cobordism.target.carrier, lo.cobordism.target.carrier)
    return CobMap(hi.cobordism, lo.cobordism, f_in, f_out, f_sup, m1.functor)


def cocone_map(m1: "CobMap", m2: "CobMap", hi: UnionResult) -> "CobMap":
    """Map out of a union into a single shared target (for disjunction)."""
    lo = m1.dst
    f_sup = _copair(hi.sup_inl, hi.sup_inr, m1.f_sup, m2.f_sup,
                    hi.cobordism.support, lo.support)
    f_in = _copair(hi.s_inl, hi.s_inr, m1.f_in, m2.f_in,
                   hi.cobordism.source.carrier, lo.source.carrier)
    f_out = _copair(hi.t_inl, hi.t_inr, m1.f_out, m2.f_out,
                    hi.cobordism.target.carrier, lo.target.carrier)
    return CobMap(hi.cobordism, lo, f_in, f_out, f_sup, m1.functor)


def conj(c1: Cobordism, c2: Cobordism) -> Cobordism:
    """Conjunction: the pointwise pullback over the disjunction color."""
    opcat = c1.opcat
    si = opcat.or_color(c1.source.color, c2.source.color)
    ti = opcat.or_color(c1.target.color, c2.target.color)

    def incl(color: Color, into: Color) -> GraphHom:
        if color == into:
            return identity_hom(opcat.border(color).graph)
        return factor_through(opcat.leg(color), opcat.leg(into))

    def meet_games(g1: Game, g2: Game, color: Color):
        pb = pullback(compose_homs(g1.labeling, incl(g1.color, color)),
                      compose_homs(g2.labeling, incl(g2.color, color)))
        lam = compose_homs(pb.left, compose_homs(g1.labeling,
                                                 incl(g1.color, color)))
        point = None
        if opcat.pointed:
            point = pb.graph.node_index[(g1.carrier.nodes[g1.point],
                                         g2.carrier.nodes[g2.point])]
        return Game(opcat, color, pb.graph, lam, point), pb

    src_game, pb_a = meet_games(c1.source, c2.source, si)
    tgt_game, pb_b = meet_games(c1.target, c2.target, ti)
    pb_s = pullback(c1.labeling, c2.labeling)
    s_map = pb_s.mediate(compose_homs(pb_a.left, c1.s_map),
                         compose_homs(pb_a.right, c2.s_map))
    t_map = pb_s.mediate(compose_homs(pb_b.left, c1.t_map),
                         compose_homs(pb_b.right, c2.t_map))
    lam = compose_homs(pb_s.left, c1.labeling)
    point = s_map.node_map[src_game.point] if opcat.pointed else None
    return Cobordism(opcat, src_game, tgt_game, pb_s.graph, s_map, t_map, lam,
                     support_point=point)


# -- error monad lift ----------------------------------------------------------------


def lift_T(c: Cobordism) -> Cobordism:
    """The error-monad lift: add a fresh point everywhere and collapse it onto
    the template's error through the algebra structure maps."""
    opcat = c.opcat
    if not opcat.pointed:
        raise CompositionError("lift_T needs a pointed template")

    def lift_game(g: Game) -> Game:
        pg = add_point(g.carrier)
        bp = opcat.border(g.color).point
        lam = GraphHom(pg.graph, opcat.border(g.color).graph,
                       g.labeling.node_map + (bp,),
                       g.labeling.edge_map, g.labeling.tile_map)
        return Game(opcat, g.color, pg.graph, lam, pg.point)

    src, tgt = lift_game(c.source), lift_game(c.target)
    psup = add_point(c.support)
    lam = GraphHom(psup.graph, opcat.support,
                   c.labeling.node_map + (opcat.support_point,),
                   c.labeling.edge_map, c.labeling.tile_map)
    s_map = GraphHom(src.carrier, psup.graph,
                     c.s_map.node_map + (psup.point,),
                     c.s_map.edge_map, c.s_map.tile_map)
    t_map = GraphHom(tgt.carrier, psup.graph,
                     c.t_map.node_map + (psup.point,),
                     c.t_map.edge_map, c.t_map.tile_map)
    return Cobordism(opcat, src, tgt, psup.graph, s_map, t_map, lam,
                     support_point=psup.point)


# -- the parallel product ---------------------------------------------------------------


@dataclass(frozen=True)
class TensorPull:
    """Pullback of a (smash) product along a pair of view maps, kept fused:
    elements are triples (x1, x2, z) plus one point class in the pointed case."""

    graph: AsyncGraph
    point: int | None
    node_elems: tuple
    edge_elems: tuple
    tile_elems: tuple
    node_idx: dict
    edge_idx: dict
    tile_idx: dict


PT = ("pt",)


def _merged_polarity(apex_payload) -> str | None:
    """Polarity of a pulled-tensor edge: the apex polarity, with the two code
    players collapsed to plain Code."""
    from .agraph import polarity
    pol = polarity(apex_payload)
    return "C" if pol in ("C1", "C2") else pol


def tensor_pull(g1: AsyncGraph, pt1: int | None, lam1: GraphHom,
                g2: AsyncGraph, pt2: int | None, lam2: GraphHom,
                apex: AsyncGraph, apex_pt: int | None,
                v1: GraphHom, v2: GraphHom) -> TensorPull:
    """All (x1, x2, z) with lam1(x1) = v1(z) and lam2(x2) = v2(z); in the
    pointed case pairs involving a point collapse into one point node paired
    with the apex point (the smash product pulled back, computed fused)."""
    pointed = pt1 is not None

    def buckets(lam_map, size, skip=None):
        b: dict = {}
        for x in range(size):
            if skip is not None and x == skip:
                continue
            b.setdefault(lam_map[x], []).append(x)
        return b

    n1 = buckets(lam1.node_map, g1.n_nodes, pt1)
    n2 = buckets(lam2.node_map, g2.n_nodes, pt2)
    node_elems = []
    for z in range(apex.n_nodes):
        for x1 in n1.get(v1.node_map[z], ()):
            for x2 in n2.get(v2.node_map[z], ()):
                node_elems.append((x1, x2, z))
    if pointed:
        node_elems.append(PT)
    node_idx = {e: i for i, e in enumerate(node_elems)}

    def node_of(x1, x2, z):
        if pointed and (x1 == pt1 or x2 == pt2):
            return node_idx[PT]
        return node_idx[(x1, x2, z)]

    e1 = buckets(lam1.edge_map, g1.n_edges)
    e2 = buckets(lam2.edge_map, g2.n_edges)
    edge_elems = []
    for ez in range(apex.n_edges):
        for x1 in e1.get(v1.edge_map[ez], ()):
            for x2 in e2.get(v2.edge_map[ez], ()):
                edge_elems.append((x1, x2, ez))
    edge_idx = {e: i for i, e in enumerate(edge_elems)}
    t1 = buckets(lam1.tile_map, g1.n_tiles)
    t2 = buckets(lam2.tile_map, g2.n_tiles)
    tile_elems = []
    for tz in range(apex.n_tiles):
        for x1 in t1.get(v1.tile_map[tz], ()):
            for x2 in t2.get(v2.tile_map[tz], ()):
                tile_elems.append((x1, x2, tz))
    tile_idx = {e: i for i, e in enumerate(tile_elems)}

    nodes = tuple(PT if e == PT else (g1.nodes[e[0]], g2.nodes[e[1]],
                                      apex.nodes[e[2]])
                  for e in node_elems)
    edges = []
    for x1, x2, ez in edge_elems:
        s = node_of(g1.edge_src(x1), g2.edge_src(x2), apex.edge_src(ez))
        t = node_of(g1.edge_tgt(x1), g2.edge_tgt(x2), apex.edge_tgt(ez))
        pol = _merged_polarity(apex.edge_payload(ez))
        edges.append((s, t, (pol, g1.edge_payload(x1), g2.edge_payload(x2),
                             apex.edge_payload(ez))))
    tiles = []
    partners = []
    for x1, x2, tz in tile_elems:
        q1, q2, qz = g1.tiles[x1], g2.tiles[x2], apex.tiles[tz]
        tiles.append(tuple(edge_idx[(q1[k], q2[k], qz[k])] for k in range(4)))
        partners.append(tile_idx[(g1.partners[x1], g2.partners[x2],
                                  apex.partners[tz])])
    graph = AsyncGraph(nodes, tuple(edges), tuple(tiles), tuple(partners))
    point = node_idx[PT] if pointed else None
    return TensorPull(graph, point, tuple(node_elems), tuple(edge_elems),
                      tuple(tile_elems), node_idx, edge_idx, tile_idx)


def _tp_hom_from_parts(tp: TensorPull, cod: AsyncGraph,
                       node_fn, edge_fn, tile_fn, point_image: int | None
                       ) -> GraphHom:
    node_map = []
    for e in tp.node_elems:
        node_map.append(point_image if e == PT else node_fn(*e))
    edge_map = [edge_fn(*e) for e in tp.edge_elems]
    tile_map = [tile_fn(*e) for e in tp.tile_elems]
    return GraphHom(tp.graph, cod, tuple(node_map), tuple(edge_map), tuple(tile_map))


def _tp_map_into(tp_src: TensorPull, tp_dst: TensorPull, f1: GraphHom,
                 f2: GraphHom, fz: GraphHom, dst_pt1, dst_pt2) -> GraphHom:
    """Elementwise map between two tensor-pulls over component maps."""

    def nf(x1, x2, z):
        y1, y2, w = f1.node_map[x1], f2.node_map[x2], fz.node_map[z]
        if tp_dst.point is not None and (y1 == dst_pt1 or y2 == dst_pt2):
            return tp_dst.point
        return tp_dst.node_idx[(y1, y2, w)]

    node_map = []
    for e in tp_src.node_elems:
        node_map.append(tp_dst.point if e == PT else nf(*e))
    edge_map = [tp_dst.edge_idx[(f1.edge_map[x1], f2.edge_map[x2],
                                 fz.edge_map[z])]
                for x1, x2, z in tp_src.edge_elems]
    tile_map = [tp_dst.tile_idx[(f1.tile_map[x1], f2.tile_map[x2],
                                 fz.tile_map[z])]
                for x1, x2, z in tp_src.tile_elems]
    return GraphHom(tp_src.graph, tp_dst.graph, tuple(node_map),
                    tuple(edge_map), tuple(tile_map))


@dataclass(frozen=True)
class ParallelResult:
    cobordism: Cobordism
    support_tp: TensorPull
    in_tp: TensorPull
    out_tp: TensorPull


def parallel(c1: Cobordism, c2: Cobordism, sm: SpanMonoidal,
             with_parts: bool = False):
    """Parallel product: external (smash) product pulled back along pick and
    relabelled along pince."""
    opcat = sm.base
    sup_tp = tensor_pull(c1.support, c1.support_point, c1.labeling,
                         c2.support, c2.support_point, c2.labeling,
                         sm.apex_support, sm.apex_point, sm.pick1, sm.pick2)
    lam = _tp_hom_from_parts(
        sup_tp, opcat.support,
        lambda x1, x2, z: sm.pince.node_map[z],
        lambda x1, x2, z: sm.pince.edge_map[z],
        lambda x1, x2, z: sm.pince.tile_map[z],
        opcat.support_point)

    def border(side: str):
        g1 = c1.source if side == "in" else c1.target
        g2 = c2.source if side == "in" else c2.target
        pb = sm.border(g1.color, g2.color)
        b1 = opcat.border(g1.color)
        b2 = opcat.border(g2.color)
        tp = tensor_pull(g1.carrier, g1.point, g1.labeling,
                         g2.carrier, g2.point, g2.labeling,
                         pb.graph, pb.point, pb.pick1, pb.pick2)
        color = sm.pince_color(g1.color, g2.color)
        tgt_border = opcat.border(color)
        lam_b = _tp_hom_from_parts(
            tp, tgt_border.graph,
            lambda x1, x2, z: pb.pince.node_map[z],
            lambda x1, x2, z: pb.pince.edge_map[z],
            lambda x1, x2, z: pb.pince.tile_map[z],
            tgt_border.point)
        game = Game(opcat, color, tp.graph, lam_b, tp.point)
        smap = c1.s_map if side == "in" else c1.t_map
        smap2 = c2.s_map if side == "in" else c2.t_map
        struct = _tp_map_into(tp, sup_tp, smap, smap2, pb.leg,
                              c1.support_point, c2.support_point)
        return game, struct, tp

    src_game, s_map, in_tp = border("in")
    tgt_game, t_map, out_tp = border("out")
    cob = Cobordism(opcat, src_game, tgt_game, sup_tp.graph, s_map, t_map, lam,
                    support_point=sup_tp.point)
    if with_parts:
        return ParallelResult(cob, sup_tp, in_tp, out_tp)
    return cob


def parallel_map(m1: "CobMap", m2: "CobMap",
                 hi: ParallelResult, lo: ParallelResult,
                 u_par: GraphHom, u_par_in: GraphHom, u_par_out: GraphHom
                 ) -> "CobMap":
    """The induced map between parallel products over the span-monoidal
    compatibility maps of the lowering functor."""
    lo_c1, lo_c2 = lo.cobordism, None  # placeholder for readability
    f_sup = _tp_map_into(hi.support_tp, lo.support_tp, m1.f_sup, m2.f_sup,
                         u_par,
                         m1.dst.support_point, m2.dst.support_point)
    f_in = _tp_map_into(hi.in_tp, lo.in_tp, m1.f_in, m2.f_in, u_par_in,
                        m1.dst.source.point, m2.dst.source.point)
    f_out = _tp_map_into(hi.out_tp, lo.out_tp, m1.f_out, m2.f_out, u_par_out,
                         m1.dst.target.point, m2.dst.target.point)
    return CobMap(hi.cobordism, lo.cobordism, f_in, f_out, f_sup, m1.functor)


# -- simulations -------------------------------------------------------------------


@dataclass(frozen=True)
class CobMap:
    """A simulation (2-cell) between cobordisms, possibly over a functor."""

    src: Cobordism
    dst: Cobordism
    f_in: GraphHom
    f_out: GraphHom
    f_sup: GraphHom
    functor: InternalFunctor | None = None

    def compose_with(self, other: "CobMap") -> "CobMap":
        functor = None
        if self.functor is not None and other.functor is not None:
            functor = _compose_functors(self.functor, other.functor)
        elif self.functor is not None or other.functor is not None:
            functor = self.functor or other.functor
        return CobMap(self.src, other.dst,
                      compose_homs(self.f_in, other.f_in),
                      compose_homs(self.f_out, other.f_out),
                      compose_homs(self.f_sup, other.f_sup), functor)


def _compose_functors(f: InternalFunctor, g: InternalFunctor) -> InternalFunctor:
    return InternalFunctor(
        f.src, g.dst,
        lambda c: g.color_map(f.color_map(c)),
        lambda c: compose_homs(f.border_map(c), g.border_map(f.color_map(c))),
        compose_homs(f.support_map, g.support_map),
        plain=f.plain and g.plain, name=f"{g.name}.{f.name}")


def identity_functor(opcat: InternalOpcat) -> InternalFunctor:
    return InternalFunctor(opcat, opcat, lambda c: c,
                           lambda c: identity_hom(opcat.border(c).graph),
                           identity_hom(opcat.support), plain=True, name="id")


def is_simulation(m: CobMap) -> list[str]:
    """All broken simulation laws; empty iff m is a valid 2-cell."""
    errs = []
    for name, h in (("f_in", m.f_in), ("f_out", m.f_out), ("f_sup", m.f_sup)):
        if check_hom(h):
            errs.append(f"invalid hom: {name}")
    if errs:
        return errs
    functor = m.functor if m.functor is not None else identity_functor(m.src.opcat)
    if not compose_homs(m.src.s_map, m.f_sup).same_maps(
            compose_homs(m.f_in, m.dst.s_map)):
        errs.append("source square does not commute")
    if not compose_homs(m.src.t_map, m.f_sup).same_maps(
            compose_homs(m.f_out, m.dst.t_map)):
        errs.append("target square does not commute")
    if not compose_homs(m.src.labeling, functor.support_map).same_maps(
            compose_homs(m.f_sup, m.dst.labeling)):
        errs.append("support labels are not compatible")
    for side, game_s, game_d, f in (("source", m.src.source, m.dst.source, m.f_in),
                                    ("target", m.src.target, m.dst.target, m.f_out)):
        if m.dst.opcat.pointed and game_s.point is not None:
            if f.node_map[game_s.point] != game_d.point:
                errs.append(f"{side} map does not preserve the point")
        if game_d.color != functor.color_map(game_s.color):
            errs.append(f"{side} color mismatch")
            continue
        lhs = compose_homs(game_s.labeling, functor.border_map(game_s.color))
        rhs = compose_homs(f, game_d.labeling)
        if not lhs.same_maps(rhs):
            errs.append(f"{side} border labels are not compatible")
    return errs


def is_strict(m: CobMap) -> bool:
    """Strictness: both border squares of the simulation are pullbacks."""
    from .agraph import verify_pullback
    return (verify_pullback(m.dst.s_map, m.f_sup, m.f_in, m.src.s_map)
            and verify_pullback(m.dst.t_map, m.f_sup, m.f_out, m.src.t_map))


# -- loops -------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopResult:
    cobordism: Cobordism
    depth: int
    stabilized: bool
    truncated: bool
    chain_maps: tuple  # CobMap stages F^n(bot) -> F^{n+1}(bot)


# -- the Hoare-inequality map --------------------------------------------------------


def hoare_map(s1: Cobordism, s2: Cobordism, t1: Cobordism, t2: Cobordism,
              sm: SpanMonoidal) -> CobMap:
    """The canonical simulation (s1 || s2) ; (t1 || t2) -> (s1 ; t1) || (s2 ; t2).

    Built elementwise from provenance through the gluing pushouts: an element
    of the left-hand support comes from the parallel of the first parts, the
    filling, or the parallel of the second parts, and each origin projects to
    a pair of elements of the component composites together with a
    three-player decomposition.  All origins of a glued class must agree;
    over templates where a state has several three-player decompositions
    (separated states) the mediator may be undefined, which raises
    CompositionError rather than producing an unsound map.
    """
    par_s = parallel(s1, s2, sm, with_parts=True)
    par_t = parallel(t1, t2, sm, with_parts=True)
    sq = seq_parts(par_s.cobordism, par_t.cobordism)
    f_par, po1, po2 = sq.fill.cobordism, sq.left.po, sq.right.po
    lhs = sq.cobordism

    sq1 = seq_parts(s1, t1)
    f1, po1_1, po2_1, seq1 = sq1.fill.cobordism, sq1.left.po, sq1.right.po, sq1.cobordism
    sq2 = seq_parts(s2, t2)
    f2, po1_2, po2_2, seq2 = sq2.fill.cobordism, sq2.left.po, sq2.right.po, sq2.cobordism
    rhs = parallel(seq1, seq2, sm, with_parts=True)

    level_maps = []
    for level in ("node", "edge", "tile"):
        def maps_of(h: GraphHom):
            return {"node": h.node_map, "edge": h.edge_map, "tile": h.tile_map}[level]

        def elems_of(tp: TensorPull):
            return {"node": tp.node_elems, "edge": tp.edge_elems,
                    "tile": tp.tile_elems}[level]

        def idx_of(tp: TensorPull):
            return {"node": tp.node_idx, "edge": tp.edge_idx,
                    "tile": tp.tile_idx}[level]

        def count(g: AsyncGraph):
            return {"node": g.n_nodes, "edge": g.n_edges, "tile": g.n_tiles}[level]

        in_s = [None, compose_homs(po1_1.left, po2_1.left),
                compose_homs(po1_2.left, po2_2.left)]
        in_f = [None, compose_homs(po1_1.right, po2_1.left),
                compose_homs(po1_2.right, po2_2.left)]
        in_t = [None, po2_1.right, po2_2.right]

        candidates: dict[int, set] = {}

        def add(lhs_idx: int, cand):
            candidates.setdefault(lhs_idx, set()).add(cand)

        lhs_sup_s = compose_homs(po1.left, po2.left)
        lhs_sup_f = compose_homs(po1.right, po2.left)
        for x, e in enumerate(elems_of(par_s.support_tp)):
            li = maps_of(lhs_sup_s)[x]
            if e == PT:
                add(li, "PT")
            else:
                a, b, z = e
                add(li, (maps_of(in_s[1])[a], maps_of(in_s[2])[b], z))
        for x, e in enumerate(elems_of(par_t.support_tp)):
            li = maps_of(po2.right)[x]
            if e == PT:
                add(li, "PT")
            else:
                a, b, z = e
                add(li, (maps_of(in_t[1])[a], maps_of(in_t[2])[b], z))
        border_out = sm.border(s1.target.color, s2.target.color)
        border_in = sm.border(t1.source.color, t2.source.color)
        for x, e in enumerate(elems_of(par_s.out_tp)):
            li = maps_of(lhs_sup_f)[maps_of(f_par.s_map)[x]]
            if e == PT:
                add(li, "PT")
            else:
                a, b, zb = e
                z = maps_of(border_out.leg)[zb]
                add(li, (maps_of(in_f[1])[maps_of(f1.s_map)[a]],
                         maps_of(in_f[2])[maps_of(f2.s_map)[b]], z))
        for x, e in enumerate(elems_of(par_t.in_tp)):
            li = maps_of(lhs_sup_f)[maps_of(f_par.t_map)[x]]
            if e == PT:
                add(li, "PT")
            else:
                a, b, zb = e
                z = maps_of(border_in.leg)[zb]
                add(li, (maps_of(in_f[1])[maps_of(f1.t_map)[a]],
                         maps_of(in_f[2])[maps_of(f2.t_map)[b]], z))

        total = count(lhs.support)
        out = [None] * total
        rhs_idx = idx_of(rhs.support_tp)
        pointed = rhs.support_tp.point is not None
        for li in range(total):
            cands = candidates.get(li)
            if not cands:
                raise AssertionError("support element with no provenance")
            images = set()
            for c in cands:
                if c == "PT":
                    images.add(rhs.support_tp.point)
                    continue
                if (level == "node" and pointed
                        and (c[0] == seq1.support_point
                             or c[1] == seq2.support_point)):
                    images.add(rhs.support_tp.point)
                    continue
                img = rhs_idx.get(c)
                if img is None:
                    raise CompositionError(
                        "fill-compatibility mediator undefined over this template")
                images.add(img)
            if len(images) != 1:
                raise CompositionError(
                    "glued class has inconsistent three-player decompositions")
            out[li] = images.pop()
        level_maps.append(tuple(out))

    f_sup = GraphHom(lhs.support, rhs.cobordism.support, *level_maps)
    f_in = _reindex_tp(lhs.source.carrier, rhs.cobordism.source.carrier,
                       par_s.in_tp, rhs.in_tp)
    f_out = _reindex_tp(lhs.target.carrier, rhs.cobordism.target.carrier,
                        par_t.out_tp, rhs.out_tp)
    return CobMap(lhs, rhs.cobordism, f_in, f_out, f_sup, None)


def _reindex_tp(dom: AsyncGraph, cod: AsyncGraph, tp_src: TensorPull,
                tp_dst: TensorPull) -> GraphHom:
    """Identity-on-elements map between two tensor-pulls of the same data."""
    node_map = tuple(tp_dst.point if e == PT else tp_dst.node_idx[e]
                     for e in tp_src.node_elems)
    edge_map = tuple(tp_dst.edge_idx[e] for e in tp_src.edge_elems)
    tile_map = tuple(tp_dst.tile_idx[e] for e in tp_src.tile_elems)
    return GraphHom(dom, cod, node_map, edge_map, tile_map)


def pull_map(m: "CobMap", hi: PullResult, lo: PullResult,
             apex_functor: InternalFunctor) -> "CobMap":
    """The induced map between two pulled cobordisms, over the apex-level
    functor (whose components must commute with the pulled squares)."""
    f_sup = lo.pb_sup.mediate(compose_homs(hi.pb_sup.left, m.f_sup),
                              compose_homs(hi.pb_sup.right,
                                           apex_functor.support_map))
    ci_hi = hi.cobordism.source.color
    co_hi = hi.cobordism.target.color
    f_in = lo.pb_src.mediate(compose_homs(hi.pb_src.left, m.f_in),
                             compose_homs(hi.pb_src.right,
                                          apex_functor.border_map(ci_hi)))
    f_out = lo.pb_tgt.mediate(compose_homs(hi.pb_tgt.left, m.f_out),
                              compose_homs(hi.pb_tgt.right,
                                           apex_functor.border_map(co_hi)))
    return CobMap(hi.cobordism, lo.cobordism, f_in, f_out, f_sup, apex_functor)


def push_map(m: "CobMap", f_hi: InternalFunctor, f_lo: InternalFunctor,
             functor: InternalFunctor) -> "CobMap":
    """Relabelled cobordisms keep their supports; the map carries over."""
    return CobMap(push(f_hi, m.src), push(f_lo, m.dst), m.f_in, m.f_out,
                  m.f_sup, functor)


def tp_project(tp: TensorPull, which: int, cod: AsyncGraph) -> GraphHom:
    """Projection of a (point-free) tensor-pull onto one component."""
    node_map = []
    for e in tp.node_elems:
        if e == PT:
            raise CompositionError("cannot project a pointed tensor-pull")
        node_map.append(e[which])
    edge_map = [e[which] for e in tp.edge_elems]
    tile_map = [e[which] for e in tp.tile_elems]
    return GraphHom(tp.graph, cod, tuple(node_map), tuple(edge_map),
                    tuple(tile_map))


def loop_unfold(bot: Cobordism, f_step, f_step_map, bound: int,
                is_stable) -> "LoopResult":
    """Bounded unfolding of the loop functional: the bound-th stage of the
    chain F^0(bot) -> F^1(bot) -> ..., with the chain inclusions as CobMaps.

    f_step(stage) -> new stage (a Cobordism plus whatever bookkeeping the
    caller threads through); f_step_map(prev_map, prev_stage, new_stage) ->
    the chain CobMap; is_stable(stage) decides semantic stabilization.  The
    result carries a truncation marker when the bound was reached first."""
    stage = bot
    chain = []
    prev_map = None
    depth = 0
    stabilized = is_stable(stage) if bound >= 0 else False
    while depth < bound and not stabilized:
        new_stage = f_step(stage)
        prev_map = f_step_map(prev_map, stage, new_stage)
        chain.append(prev_map)
        stage = new_stage
        depth += 1
        stabilized = is_stable(stage)
    return LoopResult(stage, depth, stabilized, not stabilized, tuple(chain))
