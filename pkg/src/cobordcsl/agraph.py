"""Asynchronous graphs: the ambient category of the whole engine.

An asynchronous graph is a directed graph together with two-dimensional
permutation tiles.  A tile relates two length-2 paths with the same endpoints
and declares them interchangeable; a symmetry involution swaps the two sides.
This module provides the objects, the homomorphisms, finite (co)limits
(product, pullback, coproduct, pushout), the one-node graphs Omega(L), the
error-point monad and smash product on pointed graphs, the right-lifting
checkers used for all fibration notions, and a van Kampen cube verifier.

Everything is immutable after construction and all constructions are
deterministic: quotients pick minimal-index representatives and outputs are
indexed in a canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import _kernels

POLARITIES = ("C", "F", "C1", "C2")


def polarity(edge_payload) -> str | None:
    """Edge polarity convention: first slot of a tuple payload, if marked."""
    if isinstance(edge_payload, tuple) and edge_payload and edge_payload[0] in POLARITIES:
        return edge_payload[0]
    return None


class CapacityError(Exception):
    """A construction exceeded the configured node cap."""


def _close_tiles(tiles: Sequence[tuple[int, int, int, int]]):
    """Symmetric closure: pair each square (a,b,c,d) with (c,d,a,b).

    Unmatched squares get a freshly created partner.  Self-symmetric squares
    (a,b) == (c,d) are their own partner.
    """
    quads = [tuple(t) for t in tiles]
    partners: list[int | None] = [None] * len(quads)
    waiting: dict[tuple, list[int]] = {}
    for i, (a, b, c, d) in enumerate(quads):
        if (a, b) == (c, d):
            partners[i] = i
            continue
        bucket = waiting.get((a, b, c, d))
        if bucket:
            j = bucket.pop(0)
            partners[i] = j
            partners[j] = i
        else:
            waiting.setdefault((c, d, a, b), []).append(i)
    for i, (a, b, c, d) in enumerate(list(quads)):
        if partners[i] is None:
            quads.append((c, d, a, b))
            partners.append(i)
            partners[i] = len(quads) - 1
    return tuple(quads), tuple(partners)  # type: ignore[arg-type]


@dataclass(frozen=True)
class AsyncGraph:
    """Finite asynchronous graph with indexed nodes, edges and tiles.

    nodes[i] is an opaque payload; edges are (src, tgt, payload) triples;
    tiles are (a, b, c, d) edge quadruples meaning the square a.b ~ c.d,
    with partners[t] the symmetric tile.  If partners is omitted the
    symmetric closure is applied, so callers may supply one side only.
    """

    nodes: tuple
    edges: tuple  # of (src, tgt, payload)
    tiles: tuple = ()
    partners: tuple = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if self.partners is None:
            tiles, partners = _close_tiles(self.tiles)
        else:
            tiles, partners = tuple(tuple(t) for t in self.tiles), tuple(self.partners)
        object.__setattr__(self, "tiles", tiles)
        object.__setattr__(self, "partners", partners)

    # -- basic accessors -------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)

    def edge_src(self, e: int) -> int:
        return self.edges[e][0]

    def edge_tgt(self, e: int) -> int:
        return self.edges[e][1]

    def edge_payload(self, e: int):
        return self.edges[e][2]

    def square(self, t: int):
        a, b, c, d = self.tiles[t]
        return (a, b), (c, d)

    @cached_property
    def esrc(self) -> np.ndarray:
        return np.fromiter((e[0] for e in self.edges), dtype=np.int64, count=len(self.edges))

    @cached_property
    def etgt(self) -> np.ndarray:
        return np.fromiter((e[1] for e in self.edges), dtype=np.int64, count=len(self.edges))

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, (s, _, _) in enumerate(self.edges):
            out[s].append(i)
        return tuple(tuple(v) for v in out)

    @cached_property
    def in_edges(self) -> tuple[tuple[int, ...], ...]:
        inn: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, (_, t, _) in enumerate(self.edges):
            inn[t].append(i)
        return tuple(tuple(v) for v in inn)

    @cached_property
    def node_index(self) -> dict:
        idx: dict = {}
        for i, p in enumerate(self.nodes):
            if p in idx:
                idx[p] = None  # ambiguous; lookups must not rely on it
            else:
                idx[p] = i
        return idx

    @cached_property
    def edge_index(self) -> dict:
        idx: dict = {}
        for i, e in enumerate(self.edges):
            if e in idx:
                idx[e] = None
            else:
                idx[e] = i
        return idx

    @cached_property
    def tile_index(self) -> dict:
        idx: dict = {}
        for i, q in enumerate(self.tiles):
            idx.setdefault(q, i)
        return idx

    @cached_property
    def tiles_by_top(self) -> dict:
        by_top: dict = {}
        for i, (a, b, _, _) in enumerate(self.tiles):
            by_top.setdefault((a, b), []).append(i)
        return by_top

    def find_node(self, payload) -> int:
        i = self.node_index.get(payload)
        if i is None:
            raise KeyError(f"node payload not found or ambiguous: {payload!r}")
        return i

    def find_edge(self, src: int, tgt: int, payload) -> int:
        i = self.edge_index.get((src, tgt, payload))
        if i is None:
            raise KeyError(f"edge not found or ambiguous: {(src, tgt, payload)!r}")
        return i


@dataclass(frozen=True)
class GraphHom:
    """Homomorphism of asynchronous graphs: node, edge and tile maps."""

    dom: AsyncGraph
    cod: AsyncGraph
    node_map: tuple[int, ...]
    edge_map: tuple[int, ...]
    tile_map: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "node_map", tuple(self.node_map))
        object.__setattr__(self, "edge_map", tuple(self.edge_map))
        object.__setattr__(self, "tile_map", tuple(self.tile_map))

    def node(self, n: int) -> int:
        return self.node_map[n]

    def edge(self, e: int) -> int:
        return self.edge_map[e]

    def tile(self, t: int) -> int:
        return self.tile_map[t]

    def same_maps(self, other: "GraphHom") -> bool:
        return (self.node_map == other.node_map and self.edge_map == other.edge_map
                and self.tile_map == other.tile_map)


def identity_hom(g: AsyncGraph) -> GraphHom:
    return GraphHom(g, g, tuple(range(g.n_nodes)), tuple(range(g.n_edges)),
                    tuple(range(g.n_tiles)))


def compose_homs(f: GraphHom, g: GraphHom) -> GraphHom:
    """g after f (f: A->B, g: B->C)."""
    if f.cod is not g.dom and f.cod != g.dom:
        raise ValueError("homs not composable")
    return GraphHom(
        f.dom, g.cod,
        tuple(g.node_map[n] for n in f.node_map),
        tuple(g.edge_map[e] for e in f.edge_map),
        tuple(g.tile_map[t] for t in f.tile_map),
    )


# -- validation ----------------------------------------------------------


def validate(g: AsyncGraph) -> list[tuple]:
    """All broken graph invariants, as (code, *ids) tuples; empty iff valid."""
    issues: list[tuple] = []
    for i, (s, t, _) in enumerate(g.edges):
        if not (0 <= s < g.n_nodes and 0 <= t < g.n_nodes):
            issues.append(("edge-endpoint", i))
    for i, (a, b, c, d) in enumerate(g.tiles):
        if any(not (0 <= e < g.n_edges) for e in (a, b, c, d)):
            issues.append(("tile-edge-range", i))
            continue
        if g.edge_tgt(a) != g.edge_src(b) or g.edge_tgt(c) != g.edge_src(d):
            issues.append(("tile-paths-not-composable", i))
        if g.edge_src(a) != g.edge_src(c) or g.edge_tgt(b) != g.edge_tgt(d):
            issues.append(("tile-boundary-mismatch", i))
    for i, p in enumerate(g.partners):
        if not (0 <= p < g.n_tiles):
            issues.append(("tile-partner-range", i))
            continue
        if g.partners[p] != i:
            issues.append(("tile-symmetry-not-involutive", i))
        a, b, c, d = g.tiles[i]
        if g.tiles[p] != (c, d, a, b):
            issues.append(("tile-partner-boundary", i))
    return issues


def check_hom(f: GraphHom) -> list[tuple]:
    """All broken homomorphism laws; empty iff valid."""
    issues: list[tuple] = []
    g, h = f.dom, f.cod
    if len(f.node_map) != g.n_nodes or len(f.edge_map) != g.n_edges \
            or len(f.tile_map) != g.n_tiles:
        issues.append(("map-arity",))
        return issues
    for n in f.node_map:
        if not (0 <= n < h.n_nodes):
            issues.append(("node-range", n))
            return issues
    for e in f.edge_map:
        if not (0 <= e < h.n_edges):
            issues.append(("edge-range", e))
            return issues
    for t in f.tile_map:
        if not (0 <= t < h.n_tiles):
            issues.append(("tile-range", t))
            return issues
    for e in range(g.n_edges):
        fe = f.edge_map[e]
        if h.edge_src(fe) != f.node_map[g.edge_src(e)]:
            issues.append(("edge-source", e))
        if h.edge_tgt(fe) != f.node_map[g.edge_tgt(e)]:
            issues.append(("edge-target", e))
    for t in range(g.n_tiles):
        a, b, c, d = g.tiles[t]
        image = (f.edge_map[a], f.edge_map[b], f.edge_map[c], f.edge_map[d])
        if h.tiles[f.tile_map[t]] != image:
            issues.append(("tile-boundary", t))
        if f.tile_map[g.partners[t]] != h.partners[f.tile_map[t]]:
            issues.append(("tile-symmetry", t))
    return issues


# -- limits --------------------------------------------------------------


def product(a: AsyncGraph, b: AsyncGraph):
    """Cartesian product with the two projections (pointwise pairs)."""
    nodes = tuple((x, y) for x in a.nodes for y in b.nodes)

    def npair(i, j):
        return i * b.n_nodes + j

    edges = []
    for i, (s1, t1, p1) in enumerate(a.edges):
        for j, (s2, t2, p2) in enumerate(b.edges):
            edges.append((npair(s1, s2), npair(t1, t2), (p1, p2)))

    def epair(i, j):
        return i * b.n_edges + j

    tiles = []
    partners = []
    for i, (a1, b1, c1, d1) in enumerate(a.tiles):
        for j, (a2, b2, c2, d2) in enumerate(b.tiles):
            tiles.append((epair(a1, a2), epair(b1, b2), epair(c1, c2), epair(d1, d2)))
            partners.append(a.partners[i] * b.n_tiles + b.partners[j])
    g = AsyncGraph(nodes, edges, tiles, tuple(partners))
    pa = GraphHom(g, a,
                  tuple(i // b.n_nodes for i in range(len(nodes))),
                  tuple(i // b.n_edges for i in range(len(edges))),
                  tuple(i // b.n_tiles for i in range(len(tiles))))
    pb = GraphHom(g, b,
                  tuple(i % b.n_nodes for i in range(len(nodes))),
                  tuple(i % b.n_edges for i in range(len(edges))),
                  tuple(i % b.n_tiles for i in range(len(tiles))))
    return g, pa, pb


@dataclass(frozen=True)
class SpanResult:
    """A limit/colimit object with its two structural maps and mediator factory."""

    graph: AsyncGraph
    left: GraphHom
    right: GraphHom
    mediate: Callable[[GraphHom, GraphHom], GraphHom] = field(compare=False)


def _join_level(fa, fb):
    """Matching index pairs of two int sequences, lexicographic order."""
    ia, ib = _kernels.join_pairs(np.asarray(fa, dtype=np.int64),
                                 np.asarray(fb, dtype=np.int64))
    return list(zip(ia.tolist(), ib.tolist()))


def pullback(f: GraphHom, g: GraphHom) -> SpanResult:
    """Pullback of the cospan f: A -> C <- B :g, with projections and mediator."""
    if f.cod != g.cod:
        raise ValueError("pullback legs need a common codomain")
    a, b = f.dom, g.dom
    node_pairs = _join_level(f.node_map, g.node_map)
    edge_pairs = _join_level(f.edge_map, g.edge_map)
    tile_pairs = _join_level(f.tile_map, g.tile_map)
    nidx = {p: i for i, p in enumerate(node_pairs)}
    eidx = {p: i for i, p in enumerate(edge_pairs)}
    tidx = {p: i for i, p in enumerate(tile_pairs)}
    nodes = tuple((a.nodes[i], b.nodes[j]) for i, j in node_pairs)
    edges = tuple((nidx[(a.edge_src(i), b.edge_src(j))],
                   nidx[(a.edge_tgt(i), b.edge_tgt(j))],
                   (a.edge_payload(i), b.edge_payload(j))) for i, j in edge_pairs)
    tiles = []
    partners = []
    for i, j in tile_pairs:
        a1, b1, c1, d1 = a.tiles[i]
        a2, b2, c2, d2 = b.tiles[j]
        tiles.append((eidx[(a1, a2)], eidx[(b1, b2)], eidx[(c1, c2)], eidx[(d1, d2)]))
        partners.append(tidx[(a.partners[i], b.partners[j])])
    pb = AsyncGraph(nodes, edges, tuple(tiles), tuple(partners))
    p1 = GraphHom(pb, a, tuple(i for i, _ in node_pairs), tuple(i for i, _ in edge_pairs),
                  tuple(i for i, _ in tile_pairs))
    p2 = GraphHom(pb, b, tuple(j for _, j in node_pairs), tuple(j for _, j in edge_pairs),
                  tuple(j for _, j in tile_pairs))

    def mediate(q1: GraphHom, q2: GraphHom) -> GraphHom:
        x = q1.dom
        return GraphHom(
            x, pb,
            tuple(nidx[(q1.node_map[n], q2.node_map[n])] for n in range(x.n_nodes)),
            tuple(eidx[(q1.edge_map[e], q2.edge_map[e])] for e in range(x.n_edges)),
            tuple(tidx[(q1.tile_map[t], q2.tile_map[t])] for t in range(x.n_tiles)),
        )

    return SpanResult(pb, p1, p2, mediate)


def coproduct(a: AsyncGraph, b: AsyncGraph):
    """Disjoint union with the two injections."""
    nodes = a.nodes + b.nodes
    edges = a.edges + tuple((s + a.n_nodes, t + a.n_nodes, p) for s, t, p in b.edges)
    tiles = a.tiles + tuple(tuple(e + a.n_edges for e in q) for q in b.tiles)
    partners = a.partners + tuple(p + a.n_tiles for p in b.partners)
    g = AsyncGraph(nodes, edges, tiles, partners)
    inl = GraphHom(a, g, tuple(range(a.n_nodes)), tuple(range(a.n_edges)),
                   tuple(range(a.n_tiles)))
    inr = GraphHom(b, g, tuple(range(a.n_nodes, a.n_nodes + b.n_nodes)),
                   tuple(range(a.n_edges, a.n_edges + b.n_edges)),
                   tuple(range(a.n_tiles, a.n_tiles + b.n_tiles)))
    return g, inl, inr


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, x: int, y: int):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if rx > ry:  # canonical representative: minimal index
            rx, ry = ry, rx
        self.parent[ry] = rx

    def classes(self):
        """(class_of, representatives) with dense class ids in rep order."""
        n = len(self.parent)
        reps = sorted({self.find(x) for x in range(n)})
        rep_id = {r: i for i, r in enumerate(reps)}
        return [rep_id[self.find(x)] for x in range(n)], reps


def _quotient(nodes, edges, tiles, partners, node_uf, edge_uf, tile_uf):
    ncls, nreps = node_uf.classes()
    ecls, ereps = edge_uf.classes()
    tcls, treps = tile_uf.classes()
    q_nodes = tuple(nodes[r] for r in nreps)
    q_edges = tuple((ncls[edges[r][0]], ncls[edges[r][1]], edges[r][2]) for r in ereps)
    q_tiles = tuple(tuple(ecls[e] for e in tiles[r]) for r in treps)
    q_partners = tuple(tcls[partners[r]] for r in treps)
    g = AsyncGraph(q_nodes, q_edges, q_tiles, q_partners)
    return g, ncls, ecls, tcls


def pushout(f: GraphHom, g: GraphHom) -> SpanResult:
    """Pushout of the span f: M -> A, g: M -> B, with injections and mediator.

    Computed as the quotient of A + B by the equivalence generated by
    f(x) ~ g(x), separately on nodes, edges and tiles (colimits are pointwise
    in this presheaf category).
    """
    if f.dom != g.dom:
        raise ValueError("pushout legs need a common domain")
    a, b = f.cod, g.cod
    cop, inl0, inr0 = coproduct(a, b)
    nuf = _UnionFind(cop.n_nodes)
    euf = _UnionFind(cop.n_edges)
    tuf = _UnionFind(cop.n_tiles)
    m = f.dom
    for x in range(m.n_nodes):
        nuf.union(inl0.node_map[f.node_map[x]], inr0.node_map[g.node_map[x]])
    for x in range(m.n_edges):
        euf.union(inl0.edge_map[f.edge_map[x]], inr0.edge_map[g.edge_map[x]])
    for x in range(m.n_tiles):
        tuf.union(inl0.tile_map[f.tile_map[x]], inr0.tile_map[g.tile_map[x]])
    po, ncls, ecls, tcls = _quotient(cop.nodes, cop.edges, cop.tiles, cop.partners,
                                     nuf, euf, tuf)
    inl = GraphHom(a, po, tuple(ncls[i] for i in inl0.node_map),
                   tuple(ecls[i] for i in inl0.edge_map),
                   tuple(tcls[i] for i in inl0.tile_map))
    inr = GraphHom(b, po, tuple(ncls[i] for i in inr0.node_map),
                   tuple(ecls[i] for i in inr0.edge_map),
                   tuple(tcls[i] for i in inr0.tile_map))
    # inverse maps from quotient classes to a representative on either side
    n_from = [None] * po.n_nodes
    e_from = [None] * po.n_edges
    t_from = [None] * po.n_tiles
    for side, inj, src in (("a", inl, a), ("b", inr, b)):
        for i in range(src.n_nodes):
            if n_from[inj.node_map[i]] is None:
                n_from[inj.node_map[i]] = (side, i)
        for i in range(src.n_edges):
            if e_from[inj.edge_map[i]] is None:
                e_from[inj.edge_map[i]] = (side, i)
        for i in range(src.n_tiles):
            if t_from[inj.tile_map[i]] is None:
                t_from[inj.tile_map[i]] = (side, i)

    def mediate(h1: GraphHom, h2: GraphHom) -> GraphHom:
        def pick(table, m1, m2):
            out = []
            for entry in table:
                side, i = entry
                out.append(m1[i] if side == "a" else m2[i])
            return tuple(out)

        return GraphHom(po, h1.cod,
                        pick(n_from, h1.node_map, h2.node_map),
                        pick(e_from, h1.edge_map, h2.edge_map),
                        pick(t_from, h1.tile_map, h2.tile_map))

    return SpanResult(po, inl, inr, mediate)


# -- one-node graphs and pointed graphs ----------------------------------


def omega(labels: Sequence) -> AsyncGraph:
    """One node, one edge per label, one permutation tile per ordered pair.

    The (u, v) tile has boundary (u.v, v.u); its symmetry partner is (v, u).
    """
    labels = tuple(labels)
    eidx = {l: i for i, l in enumerate(labels)}
    edges = tuple((0, 0, l) for l in labels)
    tiles = []
    partners = []
    n = len(labels)
    for i in range(n):
        for j in range(n):
            tiles.append((i, j, j, i))
            partners.append(j * n + i)
    return AsyncGraph((("*",),), edges, tuple(tiles), tuple(partners))


def terminal_graph() -> AsyncGraph:
    """The terminal asynchronous graph: one node, one edge, one tile."""
    return omega(("*",))


@dataclass(frozen=True)
class PointedGraph:
    """Asynchronous graph with a designated absorbing node (the error point).

    The point must have no outgoing edges; this makes error absorption under
    sequential composition automatic.
    """

    graph: AsyncGraph
    point: int

    def __post_init__(self):
        if not (0 <= self.point < self.graph.n_nodes):
            raise ValueError("point must be a node of the graph")
        if self.graph.out_edges[self.point]:
            raise ValueError("point must have no outgoing edges")


POINT_PAYLOAD = ("•",)


def add_point(g: AsyncGraph) -> PointedGraph:
    """The error monad T: adjoin one fresh isolated node, designated point."""
    g2 = AsyncGraph(g.nodes + (POINT_PAYLOAD,), g.edges, g.tiles, g.partners)
    return PointedGraph(g2, g.n_nodes)


def add_point_inclusion(g: AsyncGraph) -> GraphHom:
    """The monad unit component g -> T(g) (identity on all structure)."""
    pg = add_point(g)
    return GraphHom(g, pg.graph, tuple(range(g.n_nodes)), tuple(range(g.n_edges)),
                    tuple(range(g.n_tiles)))


def smash(pa: PointedGraph, pb: PointedGraph) -> tuple[PointedGraph, GraphHom]:
    """Smash product of pointed graphs, with the quotient map from the product.

    All node pairs (x, point), (point, y), (point, point) are identified into
    the new point.  Edges and tiles follow the quotient of their endpoints.
    """
    prod, p1, p2 = product(pa.graph, pb.graph)
    nuf = _UnionFind(prod.n_nodes)
    nb = pb.graph.n_nodes
    cls_members = [pa.point * nb + pb.point]
    for x in range(pa.graph.n_nodes):
        cls_members.append(x * nb + pb.point)
    for y in range(pb.graph.n_nodes):
        cls_members.append(pa.point * nb + y)
    base = min(cls_members)
    for m in cls_members:
        nuf.union(base, m)
    euf = _UnionFind(prod.n_edges)
    tuf = _UnionFind(prod.n_tiles)
    sm, ncls, ecls, tcls = _quotient(prod.nodes, prod.edges, prod.tiles, prod.partners,
                                     nuf, euf, tuf)
    # relabel the point's payload so it does not leak a particular pair
    point = ncls[base]
    nodes = list(sm.nodes)
    nodes[point] = POINT_PAYLOAD
    sm = AsyncGraph(tuple(nodes), sm.edges, sm.tiles, sm.partners)
    q = GraphHom(prod, sm, tuple(ncls), tuple(ecls), tuple(tcls))
    return PointedGraph(sm, point), q


# -- monos, epis, lifting properties --------------------------------------


def is_mono(f: GraphHom) -> bool:
    return (len(set(f.node_map)) == len(f.node_map)
            and len(set(f.edge_map)) == len(f.edge_map)
            and len(set(f.tile_map)) == len(f.tile_map))


def is_epi(f: GraphHom) -> bool:
    return (len(set(f.node_map)) == f.cod.n_nodes
            and len(set(f.edge_map)) == f.cod.n_edges
            and len(set(f.tile_map)) == f.cod.n_tiles)


def _walking_node() -> AsyncGraph:
    return AsyncGraph((("n",),), ())


def _walking_arrow(pol: str) -> AsyncGraph:
    return AsyncGraph((("n", 0), ("n", 1)), ((0, 1, (pol, None)),))


def _walking_path2() -> AsyncGraph:
    return AsyncGraph((("n", 0), ("n", 1), ("n", 2)),
                      ((0, 1, ("p", 0)), (1, 2, ("p", 1))))


def _walking_tile() -> AsyncGraph:
    # four nodes, four edges, the square (top0.top1 ~ bot0.bot1) and partner
    nodes = (("n", 0), ("n", 1), ("n", 2), ("n", 3))
    edges = ((0, 1, ("t", 0)), (1, 3, ("t", 1)), (0, 2, ("b", 0)), (2, 3, ("b", 1)))
    return AsyncGraph(nodes, edges, ((0, 1, 2, 3),))


@dataclass(frozen=True)
class LiftingShape:
    """One of the four walking-shape boundary maps used as lifting problems."""

    tag: str
    source: AsyncGraph
    total: AsyncGraph
    boundary: GraphHom


def _shape(tag: str) -> LiftingShape:
    if tag == "code-arrow-at-source":
        src, tot = _walking_node(), _walking_arrow("C")
        bnd = GraphHom(src, tot, (0,), (), ())
    elif tag == "frame-arrow-at-source":
        src, tot = _walking_node(), _walking_arrow("F")
        bnd = GraphHom(src, tot, (0,), (), ())
    elif tag == "frame-arrow-at-target":
        src, tot = _walking_node(), _walking_arrow("F")
        bnd = GraphHom(src, tot, (1,), (), ())
    elif tag == "tile-over-top-path":
        src, tot = _walking_path2(), _walking_tile()
        bnd = GraphHom(src, tot, (0, 1, 3), (0, 1), ())
    else:
        raise ValueError(f"unknown lifting shape {tag!r}")
    return LiftingShape(tag, src, tot, bnd)


CODE_1_FIBRATION = _shape("code-arrow-at-source")
ENV_1_FIBRATION = _shape("frame-arrow-at-source")
ENV_1_OPFIBRATION = _shape("frame-arrow-at-target")
TWO_FIBRATION = _shape("tile-over-top-path")

LIFTING_SHAPES = {s.tag: s for s in
                  (CODE_1_FIBRATION, ENV_1_FIBRATION, ENV_1_OPFIBRATION, TWO_FIBRATION)}


@dataclass(frozen=True)
class LiftCounterexample:
    """A commuting square from a walking shape into f with no diagonal filler."""

    shape: str
    anchor: tuple  # element(s) of dom(f)
    below: tuple  # the unlifted edge or tile of cod(f)


def check_lifting(shape: LiftingShape, f: GraphHom) -> LiftCounterexample | None:
    """Exhaustive right-lifting check of f against a walking shape.

    Returns None on success, else the first (in index order) commuting square
    with no filler: the anchor in dom(f) and the unlifted edge/tile in cod(f).
    """
    g, h = f.dom, f.cod
    if shape.tag in ("code-arrow-at-source", "frame-arrow-at-source"):
        # a filler edge's polarity is forced by its image, so candidate lifts
        # are not filtered by payload (supports built from pullbacks carry
        # pair payloads without a polarity slot)
        pol = "C" if shape.tag.startswith("code") else "F"
        lifts_by_src: set[tuple[int, int]] = set()
        for e in range(g.n_edges):
            lifts_by_src.add((g.edge_src(e), f.edge_map[e]))
        for x in range(g.n_nodes):
            fx = f.node_map[x]
            for n in h.out_edges[fx]:
                if polarity(h.edge_payload(n)) != pol:
                    continue
                if (x, n) not in lifts_by_src:
                    return LiftCounterexample(shape.tag, (x,), ("edge", n))
        return None
    if shape.tag == "frame-arrow-at-target":
        lifts_by_tgt: set[tuple[int, int]] = set()
        for e in range(g.n_edges):
            lifts_by_tgt.add((g.edge_tgt(e), f.edge_map[e]))
        for x in range(g.n_nodes):
            fx = f.node_map[x]
            for n in h.in_edges[fx]:
                if polarity(h.edge_payload(n)) != "F":
                    continue
                if (x, n) not in lifts_by_tgt:
                    return LiftCounterexample(shape.tag, (x,), ("edge", n))
        return None
    if shape.tag == "tile-over-top-path":
        if g.n_edges:
            e1s, e2s = _kernels.paths2(g.esrc, g.etgt)
        else:
            e1s = e2s = np.zeros(0, dtype=np.int64)
        lifted_tops: dict[tuple[int, int], set[int]] = {}
        for t in range(g.n_tiles):
            a, b, _, _ = g.tiles[t]
            lifted_tops.setdefault((a, b), set()).add(f.tile_map[t])
        for e1, e2 in zip(e1s.tolist(), e2s.tolist()):
            below_tops = h.tiles_by_top.get((f.edge_map[e1], f.edge_map[e2]))
            if not below_tops:
                continue
            have = lifted_tops.get((e1, e2), set())
            for t_below in below_tops:
                if t_below not in have:
                    return LiftCounterexample(shape.tag, (e1, e2), ("tile", t_below))
        return None
    raise ValueError(f"unknown shape {shape.tag!r}")


def passes(shape: LiftingShape, f: GraphHom) -> bool:
    return check_lifting(shape, f) is None


# -- universal-property verification and van Kampen cubes -----------------


def graphs_equal(a: AsyncGraph, b: AsyncGraph) -> bool:
    return (a.nodes == b.nodes and a.edges == b.edges and a.tiles == b.tiles
            and a.partners == b.partners)


def is_iso(f: GraphHom) -> bool:
    return is_mono(f) and is_epi(f) and not check_hom(f)


def verify_pushout(f: GraphHom, g: GraphHom, inl: GraphHom, inr: GraphHom) -> bool:
    """Is (inl, inr) a pushout cocone of the span (f, g)?

    Verified by comparing with the canonical pushout: the induced mediator
    must be an isomorphism.
    """
    if inl.dom != f.cod or inr.dom != g.cod or inl.cod != inr.cod:
        return False
    if not (check_hom(inl) == [] and check_hom(inr) == []):
        return False
    if not compose_homs(f, inl).same_maps(compose_homs(g, inr)):
        return False
    canon = pushout(f, g)
    med = canon.mediate(inl, inr)
    return is_iso(med)


def verify_pullback(f: GraphHom, g: GraphHom, p1: GraphHom, p2: GraphHom) -> bool:
    """Is (p1, p2) a pullback cone of the cospan (f, g)?"""
    if p1.cod != f.dom or p2.cod != g.dom or p1.dom != p2.dom:
        return False
    if not (check_hom(p1) == [] and check_hom(p2) == []):
        return False
    if not compose_homs(p1, f).same_maps(compose_homs(p2, g)):
        return False
    canon = pullback(f, g)
    med = canon.mediate(p1, p2)
    return is_iso(med)


@dataclass(frozen=True)
class Cube:
    """A commuting cube: top/bottom spans with cocones, and four verticals.

    Top face:    ta: M' -> A',  tb: M' -> B',  tia: A' -> P',  tib: B' -> P'
    Bottom face: ba: M  -> A,   bb: M  -> B,   bia: A  -> P,   bib: B  -> P
    Verticals:   vm: M' -> M,   va: A' -> A,   vb: B' -> B,    vp: P' -> P
    """

    ta: GraphHom
    tb: GraphHom
    tia: GraphHom
    tib: GraphHom
    ba: GraphHom
    bb: GraphHom
    bia: GraphHom
    bib: GraphHom
    vm: GraphHom
    va: GraphHom
    vb: GraphHom
    vp: GraphHom


@dataclass(frozen=True)
class VanKampenReport:
    precondition_errors: tuple[str, ...]
    top_is_pushout: bool | None
    fronts_are_pullbacks: bool | None
    ok: bool


def verify_van_kampen(cube: Cube) -> VanKampenReport:
    """Check the van Kampen biconditional on a concrete cube.

    Preconditions: the cube commutes, the bottom face is a pushout along a
    monomorphism, and the two back faces (over the span legs) are pullbacks.
    Then: the top face is a pushout iff the two front faces are pullbacks.
    """
    errs = []
    for name, h in (("ta", cube.ta), ("tb", cube.tb), ("tia", cube.tia),
                    ("tib", cube.tib), ("ba", cube.ba), ("bb", cube.bb),
                    ("bia", cube.bia), ("bib", cube.bib), ("vm", cube.vm),
                    ("va", cube.va), ("vb", cube.vb), ("vp", cube.vp)):
        if check_hom(h):
            errs.append(f"invalid hom {name}")
    if not errs:
        pairs = [
            ("back-a", compose_homs(cube.ta, cube.va), compose_homs(cube.vm, cube.ba)),
            ("back-b", compose_homs(cube.tb, cube.vb), compose_homs(cube.vm, cube.bb)),
            ("front-a", compose_homs(cube.tia, cube.vp), compose_homs(cube.va, cube.bia)),
            ("front-b", compose_homs(cube.tib, cube.vp), compose_homs(cube.vb, cube.bib)),
            ("top", compose_homs(cube.ta, cube.tia), compose_homs(cube.tb, cube.tib)),
            ("bottom", compose_homs(cube.ba, cube.bia), compose_homs(cube.bb, cube.bib)),
        ]
        for name, lhs, rhs in pairs:
            if not lhs.same_maps(rhs):
                errs.append(f"face {name} does not commute")
    if not errs and not (is_mono(cube.ba) or is_mono(cube.bb)):
        errs.append("bottom pushout is not along a monomorphism")
    if not errs and not verify_pushout(cube.ba, cube.bb, cube.bia, cube.bib):
        errs.append("bottom face is not a pushout")
    if not errs:
        if not verify_pullback(cube.ba, cube.vm, cube.va, cube.ta):
            errs.append("back face over A is not a pullback")
        if not verify_pullback(cube.bb, cube.vm, cube.vb, cube.tb):
            errs.append("back face over B is not a pullback")
    if errs:
        return VanKampenReport(tuple(errs), None, None, False)
    top_po = verify_pushout(cube.ta, cube.tb, cube.tia, cube.tib)
    fronts = (verify_pullback(cube.bia, cube.vp, cube.va, cube.tia)
              and verify_pullback(cube.bib, cube.vp, cube.vb, cube.tib))
    return VanKampenReport((), top_po, fronts, top_po == fronts)


# -- payload relabeling helper --------------------------------------------


def map_payloads(g: AsyncGraph, node_fn: Callable[[Any], Any] | None = None,
                 edge_fn: Callable[[Any], Any] | None = None) -> AsyncGraph:
    """Rename node/edge payloads in place (an isomorphism on structure)."""
    nodes = tuple(node_fn(p) if node_fn else p for p in g.nodes)
    edges = tuple((s, t, edge_fn(p) if edge_fn else p) for s, t, p in g.edges)
    return AsyncGraph(nodes, edges, g.tiles, g.partners)


def single_node_graph(payload=("n",)) -> AsyncGraph:
    return AsyncGraph((payload,), ())


def pointed_coproduct(pa: PointedGraph, pb: PointedGraph):
    """Coproduct of pointed graphs: disjoint union with the points identified
    (the coproduct in the category of error-monad algebras)."""
    n = single_node_graph()
    f = GraphHom(n, pa.graph, (pa.point,), (), ())
    g = GraphHom(n, pb.graph, (pb.point,), (), ())
    po = pushout(f, g)
    point = po.left.node_map[pa.point]
    return PointedGraph(po.graph, point), po.left, po.right


def subgraph(g: AsyncGraph, node_keep, edge_keep=None):
    """Full-ish subgraph: nodes where node_keep holds, edges between kept nodes
    where edge_keep holds (default: all), tiles whose four edges are kept.
    Returns (subgraph, inclusion hom into g)."""
    nodes = [i for i in range(g.n_nodes) if node_keep(i)]
    nset = set(nodes)
    nidx = {old: new for new, old in enumerate(nodes)}
    edges = []
    for e, (s, t, p) in enumerate(g.edges):
        if s in nset and t in nset and (edge_keep is None or edge_keep(e)):
            edges.append(e)
    eidx = {old: new for new, old in enumerate(edges)}
    tiles = []
    for ti, q in enumerate(g.tiles):
        if all(e in eidx for e in q):
            tiles.append(ti)
    tidx = {old: new for new, old in enumerate(tiles)}
    sub_tiles = []
    sub_partners = []
    for ti in tiles:
        sub_tiles.append(tuple(eidx[e] for e in g.tiles[ti]))
        # the partner has the same edge set, so it is kept too
        sub_partners.append(tidx[g.partners[ti]])
    sub = AsyncGraph(tuple(g.nodes[i] for i in nodes),
                     tuple((nidx[g.edges[e][0]], nidx[g.edges[e][1]], g.edges[e][2])
                           for e in edges),
                     tuple(sub_tiles), tuple(sub_partners))
    incl = GraphHom(sub, g, tuple(nodes), tuple(edges), tuple(tiles))
    return sub, incl


def factor_through(f: GraphHom, incl: GraphHom) -> GraphHom:
    """The unique g with g ; incl == f, for a monic incl with im(f) <= im(incl)."""
    if f.cod != incl.cod:
        raise ValueError("factor_through needs a common codomain")
    ninv = {old: new for new, old in enumerate(incl.node_map)}
    einv = {old: new for new, old in enumerate(incl.edge_map)}
    tinv = {old: new for new, old in enumerate(incl.tile_map)}
    try:
        return GraphHom(f.dom, incl.dom,
                        tuple(ninv[n] for n in f.node_map),
                        tuple(einv[e] for e in f.edge_map),
                        tuple(tinv[t] for t in f.tile_map))
    except KeyError as exc:
        raise ValueError("map does not factor through the inclusion") from exc
