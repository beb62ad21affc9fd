"""Machine-model templates as internal opcategories, and the maps between them.

A template packages: a family of border graphs indexed by colors, a support
graph, monic legs embedding each border into the support, units, and derived
multiplications (computed from pushouts, never hand-coded, so the polyad laws
are structural).  Three families are built here: the stateful and stateless
templates (single color), and the separated-state template (colored by
predicates, semantically: by their sets of satisfying logical states).

Also provided: internal functors (with validation), the span-monoidal
pick/pince structures used by the parallel product, the hide/when
change-of-lock spans, the memory-forgetting functor u and the
permission-erasing functor u_sep, and the disjunction structure on colors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .agraph import (AsyncGraph, GraphHom, PointedGraph, check_hom, compose_homs,
                     factor_through, identity_hom, pushout, subgraph)
from .machine import (Acquire, ModelConfig, Nop, Release, build_stateful,
                      build_stateless, frame_embedding, frame_embedding3,
                      instruction_from_key, lock_state_key, pince_projection,
                      state_forgetting_hom, three_player, two_player,
                      view_projection, ERROR_KEY)
from .seplogic import (LockContext, Predicate, SatContext, SepModel, Star, POr,
                       build_sep3_model, build_sep_model, sep_product,
                       sep_product_many, _erase_split_state, _state_payload)


class Color:
    """A template color: the unit color (stateful/stateless) or a predicate
    color identified by its set of satisfying code states."""

    __slots__ = ("pred", "states")

    def __init__(self, pred: Predicate | None, states: frozenset | None):
        self.pred = pred
        self.states = states

    @property
    def is_unit(self) -> bool:
        return self.states is None

    def __eq__(self, other):
        return isinstance(other, Color) and self.states == other.states

    def __hash__(self):
        return hash(self.states)

    def __repr__(self):
        return "<color unit>" if self.is_unit else f"<color {self.pred}>"


UNIT_COLOR = Color(None, None)


@dataclass(frozen=True)
class BorderData:
    color: Color
    graph: AsyncGraph
    leg: GraphHom  # border -> support; plays both cospan legs and the unit
    point: int | None


@dataclass(frozen=True)
class Lambda2:
    """Derived two-step support: pushout of the two legs over the middle border."""

    graph: AsyncGraph
    inl: GraphHom
    inr: GraphHom
    mu: GraphHom  # the relabeling Lambda[2] -> Lambda[1]


class InternalOpcat:
    """Internal J-opcategory over asynchronous graphs with a single support.

    All three template families share one support graph across color pairs, so
    one leg per color serves as both s- and t-leg; eta_i = leg_i makes the
    monad 2-cell condition (eta = s = t on the diagonal) structural.
    """

    def __init__(self, kind: str, cfg: ModelConfig, support: AsyncGraph,
                 support_point: int | None,
                 border_builder: Callable[[Color], BorderData],
                 sat: SatContext | None = None,
                 gamma: LockContext | None = None,
                 base_model: PointedGraph | None = None,
                 sep_model: SepModel | None = None):
        self.kind = kind
        self.cfg = cfg
        self.support = support
        self.support_point = support_point
        self.sat = sat
        self.gamma = gamma
        self.base_model = base_model
        self.sep_model = sep_model
        self._border_builder = border_builder
        self._borders: dict[Color, BorderData] = {}
        self._lambda2: dict[Color, Lambda2] = {}

    @property
    def pointed(self) -> bool:
        return self.support_point is not None

    def border(self, color: Color) -> BorderData:
        b = self._borders.get(color)
        if b is None:
            b = self._border_builder(color)
            self._borders[color] = b
        return b

    def leg(self, color: Color) -> GraphHom:
        return self.border(color).leg

    def eta(self, color: Color) -> GraphHom:
        return self.leg(color)

    def lambda2(self, color: Color) -> Lambda2:
        l2 = self._lambda2.get(color)
        if l2 is None:
            leg = self.leg(color)
            po = pushout(leg, leg)
            mu = po.mediate(identity_hom(self.support), identity_hom(self.support))
            l2 = Lambda2(po.graph, po.left, po.right, mu)
            self._lambda2[color] = l2
        return l2

    def color_of(self, pred: Predicate) -> Color:
        if self.sat is None:
            return UNIT_COLOR
        return Color(pred, self.sat.sat_set(pred))

    def star_color(self, c1: Color, c2: Color) -> Color:
        if c1.is_unit and c2.is_unit:
            return UNIT_COLOR
        return self.color_of(Star(c1.pred, c2.pred))

    def or_color(self, c1: Color, c2: Color) -> Color:
        if c1.is_unit and c2.is_unit:
            return UNIT_COLOR
        return self.color_of(POr(c1.pred, c2.pred))


# -- the stateful and stateless templates -----------------------------------


def _single_color_opcat(kind: str, cfg: ModelConfig, base: PointedGraph) -> InternalOpcat:
    two = two_player(base)
    leg = frame_embedding(base, two)

    def border_builder(color: Color) -> BorderData:
        if not color.is_unit:
            raise ValueError(f"{kind} template has only the unit color")
        return BorderData(UNIT_COLOR, base.graph, leg, base.point)

    return InternalOpcat(kind, cfg, two.graph, two.point, border_builder,
                         base_model=base)


def make_opcat_S(cfg: ModelConfig) -> InternalOpcat:
    """Stateful template: border = machine states model, support = its
    two-player polarization, legs = the Frame embedding."""
    return _single_color_opcat("S", cfg, build_stateful(cfg))


def make_opcat_L(cfg: ModelConfig) -> InternalOpcat:
    return _single_color_opcat("L", cfg, build_stateless(cfg))


# -- the separated-state template --------------------------------------------


def make_opcat_Sep(gamma: LockContext, cfg: ModelConfig, sat: SatContext) -> InternalOpcat:
    """Separated template: colors are predicates; the border at P is the full
    subgraph of the separated model on states whose code part satisfies P,
    keeping only Frame moves; legs are the inclusions."""
    model = build_sep_model(gamma, cfg, sat)
    g = model.graph

    def code_key(i: int):
        return model.states[i][0][0].key()

    def border_builder(color: Color) -> BorderData:
        if color.is_unit:
            raise ValueError("Sep template colors are predicates")
        keep = color.states
        sub, incl = subgraph(
            g,
            node_keep=lambda i: code_key(i) in keep,
            edge_keep=lambda e: g.edge_payload(e)[0] == "F",
        )
        return BorderData(color, sub, incl, None)

    return InternalOpcat("Sep", cfg, g, None, border_builder, sat=sat,
                         gamma=gamma, sep_model=model)


# -- internal functors ---------------------------------------------------------


@dataclass
class InternalFunctor:
    """Internal functor between templates: a color map plus component homs."""

    src: InternalOpcat
    dst: InternalOpcat
    color_map: Callable[[Color], Color]
    border_map: Callable[[Color], GraphHom]
    support_map: GraphHom
    plain: bool = False
    name: str = ""

    def validate(self, colors) -> list[str]:
        """Check the functor squares and the mu-compatibility on given colors."""
        errs = []
        if check_hom(self.support_map):
            errs.append("support map is not a homomorphism")
        for c in colors:
            f0 = self.border_map(c)
            if check_hom(f0):
                errs.append(f"border map at {c!r} is not a homomorphism")
                continue
            lhs = compose_homs(self.src.leg(c), self.support_map)
            rhs = compose_homs(f0, self.dst.leg(self.color_map(c)))
            if not lhs.same_maps(rhs):
                errs.append(f"leg square does not commute at {c!r}")
        for c in colors:
            l2s = self.src.lambda2(c)
            l2d = self.dst.lambda2(self.color_map(c))
            f2 = pushout(self.src.leg(c), self.src.leg(c)).mediate(
                compose_homs(self.support_map, l2d.inl),
                compose_homs(self.support_map, l2d.inr))
            lhs = compose_homs(l2s.mu, self.support_map)
            rhs = compose_homs(f2, l2d.mu)
            if not lhs.same_maps(rhs):
                errs.append(f"mu square does not commute at {c!r}")
        return errs


@dataclass
class AcuteSpan:
    """Span of internal functors whose left leg is plain."""

    apex: InternalOpcat
    left: InternalFunctor
    right: InternalFunctor

    def __post_init__(self):
        if not self.left.plain:
            raise ValueError("the left leg of an acute span must be plain")


# -- span-monoidal structures ---------------------------------------------------


@dataclass(frozen=True)
class ParBorder:
    """Border data of the tensor template at a pair color."""

    graph: AsyncGraph
    point: int | None
    leg: GraphHom  # into the apex support
    pick1: GraphHom  # into base border of the first color
    pick2: GraphHom
    pince: GraphHom  # into base border of the merged color


class SpanMonoidal:
    """pick/pince span: the three-player template over a base template.

    pick projects a three-player support to the two player views (the sibling
    absorbed into the frame); pince merges the two code regions.
    """

    def __init__(self, base: InternalOpcat, apex_support: AsyncGraph,
                 apex_point: int | None, pick1: GraphHom, pick2: GraphHom,
                 pince: GraphHom,
                 border_builder: Callable[[Color, Color], ParBorder],
                 unit_graph: AsyncGraph, unit_leg: GraphHom,
                 sep3: SepModel | None = None):
        self.base = base
        self.apex_support = apex_support
        self.apex_point = apex_point
        self.pick1 = pick1
        self.pick2 = pick2
        self.pince = pince
        self._border_builder = border_builder
        self._borders: dict[tuple[Color, Color], ParBorder] = {}
        self.unit_graph = unit_graph
        self.unit_leg = unit_leg
        self.sep3 = sep3

    def pince_color(self, c1: Color, c2: Color) -> Color:
        return self.base.star_color(c1, c2)

    def border(self, c1: Color, c2: Color) -> ParBorder:
        key = (c1, c2)
        b = self._borders.get(key)
        if b is None:
            b = self._border_builder(c1, c2)
            self._borders[key] = b
        return b


def _span_monoidal_single(opcat: InternalOpcat) -> SpanMonoidal:
    base = opcat.base_model
    three = three_player(base)
    two = two_player(base)
    p1 = view_projection(three, two, 1)
    p2 = view_projection(three, two, 2)
    pince = pince_projection(three, two)
    eta3 = frame_embedding3(base, three)
    ident = identity_hom(base.graph)

    def border_builder(c1: Color, c2: Color) -> ParBorder:
        return ParBorder(base.graph, base.point, eta3, ident, ident, ident)

    eta = opcat.leg(UNIT_COLOR)
    return SpanMonoidal(opcat, three.graph, three.point, p1, p2, pince,
                        border_builder, base.graph, eta)


def span_monoidal_S(opcat: InternalOpcat) -> SpanMonoidal:
    return _span_monoidal_single(opcat)


def span_monoidal_L(opcat: InternalOpcat) -> SpanMonoidal:
    return _span_monoidal_single(opcat)


def _sep_state_hom(dom_model, cod_graph, cod_payload_of_state, dom_graph=None,
                   edge_pol=None):
    """Build a hom out of a separated model by mapping states and relabeling
    edge polarities; tiles go to the tile over the image square."""
    g = dom_graph if dom_graph is not None else dom_model.graph
    node_map = []
    for i in range(g.n_nodes):
        node_map.append(cod_graph.find_node(cod_payload_of_state(i)))
    edge_map = []
    for e in range(g.n_edges):
        s, t, (pol, mkey) = g.edges[e]
        pol2 = edge_pol(pol) if edge_pol else pol
        edge_map.append(cod_graph.find_edge(node_map[s], node_map[t], (pol2, mkey)))
    tile_map = []
    for a, b, c, d in g.tiles:
        q = (edge_map[a], edge_map[b], edge_map[c], edge_map[d])
        t = cod_graph.tile_index.get(q)
        if t is None:
            raise AssertionError("image square has no tile in the target model")
        tile_map.append(t)
    return GraphHom(g, cod_graph, tuple(node_map), tuple(edge_map), tuple(tile_map))


def _sep3_views(sep3: SepModel, i: int):
    """The two two-player views and the pince image of a three-player state."""
    (s1, s2, sf), vector = sep3.states[i]

    def remap(keep_tag, to_code):
        out = []
        for name, slot in vector:
            if slot[0] == "S":
                out.append((name, slot))
            elif slot == (keep_tag,):
                out.append((name, ("C",)))
            else:
                out.append((name, ("F",)))
        return tuple(out)

    view1 = ((s1, sep_product(s2, sf)), remap("C1", True))
    view2 = ((s2, sep_product(s1, sf)), remap("C2", True))
    merged_vec = tuple((name, slot if slot[0] == "S" else
                        (("C",) if slot[0] in ("C1", "C2") else ("F",)))
                       for name, slot in vector)
    merged = ((sep_product(s1, s2), sf), merged_vec)
    return view1, view2, merged


def span_monoidal_Sep(opcat: InternalOpcat) -> SpanMonoidal:
    """Three-player separated states with pick (the two views) and pince (merge)."""
    sat, gamma, cfg = opcat.sat, opcat.gamma, opcat.cfg
    sep3 = build_sep3_model(gamma, cfg, sat)
    g3 = sep3.graph
    base_g = opcat.support

    def pay2(state):
        return _state_payload(state, ("C", "F"))

    p1 = _sep_state_hom(sep3, base_g, lambda i: pay2(_sep3_views(sep3, i)[0]),
                        edge_pol=lambda p: {"C1": "C", "C2": "F", "F": "F"}[p])
    p2 = _sep_state_hom(sep3, base_g, lambda i: pay2(_sep3_views(sep3, i)[1]),
                        edge_pol=lambda p: {"C1": "F", "C2": "C", "F": "F"}[p])
    pince = _sep_state_hom(sep3, base_g, lambda i: pay2(_sep3_views(sep3, i)[2]),
                           edge_pol=lambda p: "F" if p == "F" else "C")

    def code_keys(i: int):
        (s1, s2, _), _vec = sep3.states[i]
        return s1.key(), s2.key()

    def border_builder(c1: Color, c2: Color) -> ParBorder:
        sub, incl = subgraph(
            g3,
            node_keep=lambda i: code_keys(i)[0] in c1.states
            and code_keys(i)[1] in c2.states,
            edge_keep=lambda e: g3.edge_payload(e)[0] == "F",
        )
        b1 = opcat.border(c1)
        b2 = opcat.border(c2)
        bp = opcat.border(opcat.star_color(c1, c2))
        pick1_b = factor_through(compose_homs(incl, p1), b1.leg)
        pick2_b = factor_through(compose_homs(incl, p2), b2.leg)
        pince_b = factor_through(compose_homs(incl, pince), bp.leg)
        return ParBorder(sub, None, incl, pick1_b, pick2_b, pince_b)

    unit_graph, unit_leg = subgraph(base_g, lambda i: True,
                                    lambda e: base_g.edge_payload(e)[0] == "F")
    return SpanMonoidal(opcat, g3, None, p1, p2, pince, border_builder,
                        unit_graph, unit_leg, sep3=sep3)


# -- change of locks -------------------------------------------------------------


def _is_pv_edge(payload, r: str, pols) -> bool:
    pol, mkey = payload
    return pol in pols and mkey in ((("P", r)), (("V", r)))


def _restricted_opcat(opcat: InternalOpcat, support_sub: AsyncGraph,
                      support_incl: GraphHom,
                      border_restrict: Callable[[Color, BorderData], tuple]
                      ) -> InternalOpcat:
    """A template with restricted support and restricted borders; legs factor
    through the support inclusion."""

    def border_builder(color: Color) -> BorderData:
        base_b = opcat.border(color)
        sub, incl_b = border_restrict(color, base_b)
        leg = factor_through(compose_homs(incl_b, base_b.leg), support_incl)
        return BorderData(color, sub, leg, base_b.point)

    return InternalOpcat(opcat.kind, opcat.cfg, support_sub,
                         support_incl.node_map.index(opcat.support_point)
                         if opcat.pointed else None,
                         border_builder, sat=opcat.sat, gamma=opcat.gamma,
                         base_model=opcat.base_model, sep_model=opcat.sep_model)


def hide_span(upper: InternalOpcat, lower: InternalOpcat, r: str) -> AcuteSpan:
    """The hiding span: apex deletes the Environment's P(r)/V(r) moves (and,
    for separated states, the states where the Environment holds r); the left
    leg includes back into the template with r, the right leg removes r from
    the states and relabels P(r)/V(r) to nop."""
    g1 = upper.support
    if upper.kind == "Sep":
        if r not in upper.gamma.names:
            raise KeyError(f"lock {r!r} not in the context")
        model = upper.sep_model

        def node_ok(i):
            return dict(model.states[i][1])[r] != ("F",)
    else:
        if r not in upper.cfg.locks:
            raise KeyError(f"lock {r!r} not in the lock set")

        def node_ok(i):
            return True
    sup_sub, sup_incl = subgraph(
        g1, node_ok, lambda e: not _is_pv_edge(g1.edge_payload(e), r, ("F",)))
    old_node = {old: new for new, old in enumerate(sup_incl.node_map)}

    if upper.kind == "Sep":
        def border_restrict(color, base_b):
            # border states: r unheld (the hidden lock's resource is merged
            # into the code region, so held-by-code states cannot be typed)
            def keep(i):
                gi = base_b.leg.node_map[i]
                return gi in old_node and \
                    dict(model.states[gi][1])[r][0] == "S"
            return subgraph(base_b.graph, keep,
                            lambda e: not _is_pv_edge(
                                base_b.graph.edge_payload(e), r, ("F",)))
    else:
        def border_restrict(color, base_b):
            bg = base_b.graph
            return subgraph(bg, lambda i: True,
                            lambda e: not _is_border_pv(bg.edge_payload(e), r))

    apex = _restricted_opcat(upper, sup_sub, sup_incl, border_restrict)

    left = InternalFunctor(apex, upper, lambda c: c,
                           lambda c: factor_through(
                               compose_homs(apex.border(c).leg, sup_incl),
                               upper.leg(c)),
                           sup_incl, plain=True, name=f"incl<{r}>")
    right = _hide_c_functor(apex, upper, lower, r, sup_incl)
    return AcuteSpan(apex, left, right)


def _is_border_pv(payload, r: str) -> bool:
    pol, mkey = payload
    return mkey in (("P", r), ("V", r))


def _nop_key(lower: InternalOpcat):
    return ("tau",) if lower.kind == "L" else Nop().key()


def _hide_c_functor(apex: InternalOpcat, upper: InternalOpcat,
                    lower: InternalOpcat, r: str, sup_incl: GraphHom
                    ) -> InternalFunctor:
    nop_key = _nop_key(lower)

    def relabel(mkey):
        return nop_key if mkey in (("P", r), ("V", r)) else mkey

    if upper.kind == "Sep":
        model = upper.sep_model

        def node_payload(i):
            gi = sup_incl.node_map[i]
            (code, frame), vector = model.states[gi]
            slot = dict(vector)[r]
            rest = tuple((n, s) for n, s in vector if n != r)
            if slot[0] == "S":
                code = sep_product(code, slot[1])
            return _state_payload(((code, frame), rest), ("C", "F"))
    elif upper.kind == "S":
        def node_payload(i):
            k = apex.support.nodes[i]
            if k == ERROR_KEY:
                return k
            return ("st", k[1], k[2], tuple(x for x in k[3] if x != r))
    else:
        def node_payload(i):
            k = apex.support.nodes[i]
            if k == ERROR_KEY:
                return k
            return lock_state_key(tuple(x for x in k[1] if x != r))

    support_map = _relabel_state_hom(apex.support, lower.support, node_payload, relabel)

    def border_map(color: Color) -> GraphHom:
        b = apex.border(color)
        tgt = lower.border(_hide_color(upper, lower, color, r))

        def bpayload(i):
            return node_payload(b.leg.node_map[i])

        return _relabel_state_hom(b.graph, tgt.graph, bpayload, relabel)

    return InternalFunctor(apex, lower,
                           lambda c: _hide_color(upper, lower, c, r),
                           border_map, support_map, plain=False,
                           name=f"hide_C<{r}>")


def _hide_color(upper: InternalOpcat, lower: InternalOpcat, color: Color, r: str) -> Color:
    if color.is_unit:
        return UNIT_COLOR
    inv = upper.gamma.invariant(r)
    return lower.color_of(Star(color.pred, inv))


def _relabel_state_hom(dom: AsyncGraph, cod: AsyncGraph, node_payload, relabel
                       ) -> GraphHom:
    node_map = [cod.find_node(node_payload(i)) for i in range(dom.n_nodes)]
    edge_map = []
    for s, t, (pol, mkey) in dom.edges:
        edge_map.append(cod.find_edge(node_map[s], node_map[t], (pol, relabel(mkey))))
    tile_map = []
    for a, b, c, d in dom.tiles:
        q = (edge_map[a], edge_map[b], edge_map[c], edge_map[d])
        t = cod.tile_index.get(q)
        if t is None:
            raise AssertionError("image square has no tile in the target template")
        tile_map.append(t)
    return GraphHom(dom, cod, tuple(node_map), tuple(edge_map), tuple(tile_map))


def when_span(upper: InternalOpcat, lower: InternalOpcat, r: str) -> AcuteSpan:
    """Critical-section span for the stateful/stateless templates: the apex
    forbids the Code from using r; nabla (left, plain) forgets r and relabels
    its Environment P/V moves to nop; the right leg is the inclusion."""
    if upper.kind == "Sep":
        raise ValueError("separated-state critical sections use when_push")
    g1 = upper.support
    sup_sub, sup_incl = subgraph(
        g1, lambda i: True,
        lambda e: not _is_pv_edge(g1.edge_payload(e), r, ("C",)))

    def border_restrict(color, base_b):
        return base_b.graph, identity_hom(base_b.graph)

    apex = _restricted_opcat(upper, sup_sub, sup_incl, border_restrict)
    nop_key = _nop_key(lower)

    def relabel(mkey):
        return nop_key if mkey in (("P", r), ("V", r)) else mkey

    if upper.kind == "S":
        def node_payload(i):
            k = apex.support.nodes[i]
            if k == ERROR_KEY:
                return k
            return ("st", k[1], k[2], tuple(x for x in k[3] if x != r))
    else:
        def node_payload(i):
            k = apex.support.nodes[i]
            if k == ERROR_KEY:
                return k
            return lock_state_key(tuple(x for x in k[1] if x != r))

    support_map = _relabel_state_hom(apex.support, lower.support, node_payload, relabel)

    def border_map(color: Color) -> GraphHom:
        b = apex.border(color)
        tgt = lower.border(color if color.is_unit else color)

        def bpayload(i):
            return node_payload(b.leg.node_map[i])

        return _relabel_state_hom(b.graph, tgt.graph, bpayload, relabel)

    nabla = InternalFunctor(apex, lower, lambda c: c, border_map, support_map,
                            plain=True, name=f"nabla<{r}>")
    right = InternalFunctor(apex, upper, lambda c: c,
                            lambda c: factor_through(
                                compose_homs(apex.border(c).leg, sup_incl),
                                upper.leg(c)),
                            sup_incl, plain=True, name=f"incl<{r}>")
    return AcuteSpan(apex, nabla, right)


def when_push(lower_sep: InternalOpcat, upper_sep: InternalOpcat, r: str
              ) -> InternalFunctor:
    """Push-forward for separated critical sections: extend every state with
    the lock r held by the Code."""
    model = lower_sep.sep_model

    def node_payload(i):
        (code, frame), vector = model.states[i]
        return _state_payload(((code, frame), vector + ((r, ("C",)),)), ("C", "F"))

    support_map = _relabel_state_hom(lower_sep.support, upper_sep.support,
                                     node_payload, lambda k: k)

    def border_map(color: Color) -> GraphHom:
        b = lower_sep.border(color)
        tgt = upper_sep.border(upper_sep.color_of(color.pred))

        def bpayload(i):
            return node_payload(b.leg.node_map[i])

        return _relabel_state_hom(b.graph, tgt.graph, bpayload, lambda k: k)

    return InternalFunctor(lower_sep, upper_sep,
                           lambda c: upper_sep.color_of(c.pred),
                           border_map, support_map, plain=False,
                           name=f"when_push<{r}>")


# -- the comparison functors u_sep and u ----------------------------------------


def functor_u(opcat_s: InternalOpcat, opcat_l: InternalOpcat) -> InternalFunctor:
    """Memory-forgetting functor: instructions map to their lock instructions."""
    cfg = opcat_s.cfg
    u0 = state_forgetting_hom(opcat_s.base_model, opcat_l.base_model, cfg)
    support_map = _polarize_hom(u0, opcat_s.support, opcat_l.support, 2)
    return InternalFunctor(opcat_s, opcat_l, lambda c: UNIT_COLOR,
                           lambda c: u0, support_map, plain=True, name="u")


def _polarize_hom(u0: GraphHom, dom: AsyncGraph, cod: AsyncGraph, nl: int) -> GraphHom:
    """Lift a one-player model hom to the nl-player polarization (pointwise)."""
    node_map = u0.node_map
    edge_map = []
    for e in range(len(u0.edge_map)):
        for k in range(nl):
            edge_map.append(u0.edge_map[e] * nl + k)
    tile_map = []
    for t in range(len(u0.tile_map)):
        for w in range(nl * nl):
            i, j = divmod(w, nl)
            tile_map.append(u0.tile_map[t] * nl * nl + i * nl + j)
    return GraphHom(dom, cod, node_map, tuple(edge_map), tuple(tile_map))


def functor_u_par(sm_s: SpanMonoidal, sm_l: SpanMonoidal) -> GraphHom:
    """The three-player component of u (the span-monoidal compatibility map)."""
    opcat_s = sm_s.base
    opcat_l = sm_l.base
    u0 = state_forgetting_hom(opcat_s.base_model, opcat_l.base_model, opcat_s.cfg)
    return _polarize_hom(u0, sm_s.apex_support, sm_l.apex_support, 3)


def functor_u_sep(opcat_sep: InternalOpcat, opcat_s: InternalOpcat) -> InternalFunctor:
    """Permission-erasing functor: separated states to machine states, colors
    collapsed to the unit color."""
    model = opcat_sep.sep_model
    base = opcat_s.base_model.graph
    sup = opcat_s.support

    def erased_node(i: int):
        return model.erase_node(i).key()

    # support: Sep two-player graph into the polarized stateful support
    g = opcat_sep.support
    node_map = [base.find_node(erased_node(i)) for i in range(g.n_nodes)]
    edge_map = []
    for s, t, (pol, mkey) in g.edges:
        e0 = base.find_edge(node_map[s], node_map[t], ("F", mkey))
        edge_map.append(e0 * 2 + (0 if pol == "C" else 1))
    tile_map = []
    for a, b, c, d in g.tiles:
        q = (edge_map[a], edge_map[b], edge_map[c], edge_map[d])
        t = sup.tile_index.get(q)
        if t is None:
            raise AssertionError("separated tile has no stateful image tile")
        tile_map.append(t)
    support_map = GraphHom(g, sup, tuple(node_map), tuple(edge_map), tuple(tile_map))

    def border_map(color: Color) -> GraphHom:
        b = opcat_sep.border(color)
        return _relabel_state_hom(
            b.graph, base, lambda i: erased_node(b.leg.node_map[i]), lambda k: k)

    return InternalFunctor(opcat_sep, opcat_s, lambda c: UNIT_COLOR, border_map,
                           support_map, plain=False, name="u_sep")


def functor_u_sep_par(sm_sep: SpanMonoidal, sm_s: SpanMonoidal) -> GraphHom:
    """Three-player component of u_sep."""
    sep3 = sm_sep.sep3
    base = sm_s.base.base_model.graph
    g = sep3.graph
    node_map = [base.find_node(_erase_split_state(sep3.states[i],
                                                  sep3.region_tags).key())
                for i in range(g.n_nodes)]
    pol_idx = {"C1": 0, "C2": 1, "F": 2}
    edge_map = []
    for s, t, (pol, mkey) in g.edges:
        e0 = base.find_edge(node_map[s], node_map[t], ("F", mkey))
        edge_map.append(e0 * 3 + pol_idx[pol])
    tile_map = []
    sup3 = sm_s.apex_support
    for a, b, c, d in g.tiles:
        q = (edge_map[a], edge_map[b], edge_map[c], edge_map[d])
        t = sup3.tile_index.get(q)
        if t is None:
            raise AssertionError("separated 3-player tile has no stateful image")
        tile_map.append(t)
    return GraphHom(g, sup3, tuple(node_map), tuple(edge_map), tuple(tile_map))


# -- disjunction structure --------------------------------------------------------


@dataclass
class VeeStructure:
    """Color-level disjunction with the border inclusion homs."""

    opcat: InternalOpcat

    def color(self, c1: Color, c2: Color) -> Color:
        return self.opcat.or_color(c1, c2)

    def inclusion(self, c: Color, into: Color) -> GraphHom:
        src = self.opcat.border(c)
        dst = self.opcat.border(into)
        return factor_through(src.leg, dst.leg)


def vee_structure_Sep(opcat: InternalOpcat) -> VeeStructure:
    return VeeStructure(opcat)
