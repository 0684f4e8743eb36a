"""Extraction coactions, twisted antipodes, the three-slot renormalized
expansion, and grouped counterterm reports.

Terms live inside a fixed ambient tree: every slot entry is a
`DecoratedTree` whose node ids are ambient ids (so embedded i-trees compare
literally), possibly colored.  Formal sums carry exact rational coefficients.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from .forests import irreducible_partition_exists, zero_node_hom
from .formal import FormalSum
from .rules import CumulantSet
from .scaling import ExtLabel, MultiIndex, TypeTable, ZERO_MI, multiindices_below, submultiindices
from .trees import DecoratedTree, EdgeKey, SubForest

PieceForest = tuple  # sorted tuple of DecoratedTree


def sorted_pieces(pieces: Iterable[DecoratedTree]) -> PieceForest:
    return tuple(sorted(pieces, key=lambda p: p.embedded_key()))


# -- membership ----------------------------------------------------------------


def in_X_minus(piece: DecoratedTree, table: TypeTable) -> bool:
    """Uncolored tree with a vanishing root label and |.|_- < 0."""
    if piece.has_coloring():
        return False
    return piece.node_dec(piece.root).is_zero() and piece.homogeneity(table, "minus") < 0


def dangling_of_hat2(piece: DecoratedTree, table: TypeTable) -> list[SubForest]:
    """The up-trees hanging off the color-2 part through a kernel edge."""
    out = []
    for e in piece.kernel_edges(table):
        if e[0] in piece.hat2.nodes and e[1] not in piece.hat2.nodes:
            out.append(_up_tree_in(piece, e))
    return out


def _up_tree_in(piece: DecoratedTree, e: EdgeKey) -> SubForest:
    nodes = {e[0], e[1]}
    edges = {e}
    stack = [e[1]]
    while stack:
        u = stack.pop()
        for f in piece.children(u):
            edges.add(f)
            nodes.add(f[1])
            stack.append(f[1])
    return SubForest(frozenset(nodes), frozenset(edges))


def _recentered_plus_hom(piece: DecoratedTree, sf: SubForest, table: TypeTable) -> Fraction:
    sub = piece.restrict(sf)
    total = sub.homogeneity(table, "plus")
    if sub.color_of_node(sub.root) != 2:
        total -= Fraction(sub.node_dec(sub.root).sdeg(table.scaling))
    return total


def in_X_plus(piece: DecoratedTree, table: TypeTable) -> bool:
    """Color-2 part nonempty and every dangling tree has positive
    root-recentered |.|_+ homogeneity."""
    if not piece.hat2.nodes:
        return False
    return all(
        _recentered_plus_hom(piece, sf, table) > 0
        for sf in dangling_of_hat2(piece, table)
    )


def membership(piece: DecoratedTree, table: TypeTable) -> dict:
    return {"in_X_minus": in_X_minus(piece, table), "in_X_plus": in_X_plus(piece, table)}


# -- negative coaction ----------------------------------------------------------


def _chi(edge_dec: dict[EdgeKey, MultiIndex]) -> dict[int, MultiIndex]:
    out: dict[int, MultiIndex] = {}
    for (p, _), k in edge_dec.items():
        out[p] = out.get(p, ZERO_MI) + k
    return out


def _extraction_decorations(
    t: DecoratedTree,
    table: TypeTable,
    comp: SubForest,
    boundary: Sequence[EdgeKey],
) -> Iterator[tuple[dict[int, MultiIndex], dict[EdgeKey, MultiIndex], Fraction]]:
    """Node labels n_G on the component and edge labels e_G on its boundary
    edges keeping the extracted tree in X_-: root label zero and homogeneity
    strictly negative.  Yields (n_G, e_G, combinatorial coefficient)."""
    root = t.subtree_root(comp)
    base = zero_node_hom(t, comp, table)
    budget = -base  # total extra s-degree must stay strictly below this
    if budget <= 0:
        return
    fict = {c for (p, c) in comp.edges if table.is_noise(t.edge_type((p, c)))}
    node_slots = [u for u in sorted(comp.nodes - fict) if u != root and not t.node_dec(u).is_zero()]
    edge_slots = [e for e in sorted(boundary) if e[0] != root]
    if any(e[0] == root for e in boundary) and False:
        pass  # boundary edges at the root force e_G = 0 there; they are skipped

    def rec(slots: list, remaining: Fraction, ndec: dict, edec: dict, coeff: Fraction):
        if not slots:
            yield dict(ndec), dict(edec), coeff
            return
        slot, rest = slots[0], slots[1:]
        if isinstance(slot, int):
            for k in submultiindices(t.node_dec(slot)):
                d = Fraction(k.sdeg(table.scaling))
                if d < remaining:
                    if not k.is_zero():
                        ndec[slot] = k
                    from .scaling import binom_mi

                    c = Fraction(binom_mi(t.node_dec(slot), k))
                    yield from rec(rest, remaining - d, ndec, edec, coeff * c)
                    ndec.pop(slot, None)
        else:
            for k in multiindices_below(table.scaling, remaining):
                if not k.is_zero():
                    edec[slot] = k
                yield from rec(
                    rest,
                    remaining - Fraction(k.sdeg(table.scaling)),
                    ndec,
                    edec,
                    coeff / k.factorial(),
                )
                edec.pop(slot, None)

    yield from rec(node_slots + edge_slots, budget, {}, {}, Fraction(1))


def _boundary(t: DecoratedTree, nodes: frozenset[int], edges: frozenset[EdgeKey], table: TypeTable) -> list[EdgeKey]:
    """d(G,T): kernel edges outside G whose parent lies in G (edge
    decorations live on the kernel edges only)."""
    return [e for e in t.kernel_edges(table) if e not in edges and e[0] in nodes]


def _extracted_piece(
    t: DecoratedTree, comp: SubForest, ndec: dict[int, MultiIndex]
) -> DecoratedTree:
    base = t.restrict(comp)
    return base.with_(node_dec=dict(ndec))


def _all_edge_subsets(t: DecoratedTree) -> Iterator[frozenset[EdgeKey]]:
    edges = [e for e, _ in t.edge_items]
    for r in range(len(edges) + 1):
        for combo in itertools.combinations(edges, r):
            yield frozenset(combo)


def delta_minus(
    t: DecoratedTree,
    table: TypeTable,
    vanishing: Optional[CumulantSet] = None,
) -> FormalSum:
    """The extraction coaction on an uncolored tree: a sum of
    (extracted forest, colored remainder) pairs.

    Every subforest whose components each pass the X_- filter is extracted;
    the decoration sums are materialized only where the filter survives,
    which keeps them finite.  With `vanishing` given, components whose
    renormalization constant vanishes identically are dropped as well (the
    lone noise, odd pairings, pendant-cancelled patterns).
    """
    if t.has_coloring():
        raise ValueError("the negative coaction acts on uncolored trees")
    out = FormalSum.zero()
    for edge_set in _all_edge_subsets(t):
        nodes = frozenset(itertools.chain.from_iterable(edge_set))
        sub = SubForest(nodes, edge_set)
        comps = t.subforest_components(sub) if edge_set else []
        if not edge_set:
            out = out + FormalSum.single(((), t))
            continue
        if vanishing is not None and not all(
            irreducible_partition_exists(t, c, vanishing) for c in comps
        ):
            continue
        per_comp = []
        dead = False
        for c in comps:
            options = list(
                _extraction_decorations(t, table, c, _boundary(t, c.nodes, edge_set, table))
            )
            if not options:
                dead = True
                break
            per_comp.append((c, options))
        if dead:
            continue
        for chosen in itertools.product(*(opts for _, opts in per_comp)):
            ndec_all: dict[int, MultiIndex] = {}
            edec_all: dict[EdgeKey, MultiIndex] = {}
            coeff = Fraction(1)
            pieces = []
            for (c, _), (nd, ed, cf) in zip(per_comp, chosen):
                coeff *= cf
                extra = _chi(ed)
                labels = dict(nd)
                for u, k in extra.items():
                    labels[u] = labels.get(u, ZERO_MI) + k
                pieces.append(_extracted_piece(t, c, labels))
                ndec_all.update(nd)
                edec_all.update(ed)
            remainder = _remainder_piece(t, sub, ndec_all, edec_all)
            out = out + coeff * FormalSum.single((sorted_pieces(pieces), remainder))
    return out


def _remainder_piece(
    t: DecoratedTree,
    extracted: SubForest,
    ndec_g: dict[int, MultiIndex],
    edec_g: dict[EdgeKey, MultiIndex],
) -> DecoratedTree:
    chi = _chi(edec_g)
    new_ndec = {}
    for u in t.nodes:
        k = t.node_dec(u)
        if u in ndec_g:
            k = k - ndec_g[u]
        if not k.is_zero():
            new_ndec[u] = k
    new_edec = {}
    for e, _ in t.edge_items:
        k = t.edge_dec(e)
        if e in edec_g:
            k = k + edec_g[e]
        if not k.is_zero():
            new_edec[e] = k
    olabel = {}
    for u in extracted.nodes:
        k = ndec_g.get(u, ZERO_MI) + chi.get(u, ZERO_MI)
        if not k.is_zero():
            olabel[u] = ExtLabel.from_multiindex(k)
    return t.with_(
        node_dec=new_ndec, edge_dec=new_edec, hat1=extracted, o_label=olabel
    )


# -- negative twisted antipode ----------------------------------------------------


class _AntipodeMinus:
    def __init__(self, table: TypeTable, vanishing: Optional[CumulantSet] = None):
        self.table = table
        self.vanishing = vanishing
        self.memo: dict[DecoratedTree, FormalSum] = {}

    def forest(self, pieces: Sequence[DecoratedTree]) -> FormalSum:
        acc = FormalSum.single(((),))
        for p in pieces:
            acc = acc.tensor(self.tree(p))
            acc = acc.map_keys(lambda k: (sorted_pieces(k[0] + k[1]),))
        return acc

    def tree(self, piece: DecoratedTree) -> FormalSum:
        if piece in self.memo:
            return self.memo[piece]
        if not in_X_minus(piece, self.table):
            raise ValueError("negative antipode applied outside X_-")
        t = self.table
        total = FormalSum.zero()
        full_edges = frozenset(e for e, _ in piece.edge_items)
        for edge_set in _all_edge_subsets(piece):
            comps = piece.subforest_components(SubForest(
                frozenset(itertools.chain.from_iterable(edge_set)), edge_set
            )) if edge_set else []
            # no component may be a full connected component of the input tree
            if any(c.edges == full_edges for c in comps):
                continue
            if self.vanishing is not None and not all(
                irreducible_partition_exists(piece, c, self.vanishing) for c in comps
            ):
                continue
            per_comp = []
            dead = False
            for c in comps:
                options = list(
                    _extraction_decorations(piece, t, c, _boundary(piece, c.nodes, edge_set, t))
                )
                if not options:
                    dead = True
                    break
                per_comp.append((c, options))
            if dead:
                continue
            sub = SubForest(frozenset(itertools.chain.from_iterable(edge_set)), edge_set)
            for chosen in itertools.product(*(opts for _, opts in per_comp)):
                coeff = Fraction(1)
                inner_pieces = []
                ndec_all: dict[int, MultiIndex] = {}
                edec_all: dict[EdgeKey, MultiIndex] = {}
                for (c, _), (nd, ed, cf) in zip(per_comp, chosen):
                    coeff *= cf
                    labels = dict(nd)
                    for u, k in _chi(ed).items():
                        labels[u] = labels.get(u, ZERO_MI) + k
                    inner_pieces.append(_extracted_piece(piece, c, labels))
                    ndec_all.update(nd)
                    edec_all.update(ed)
                residual = _antipode_residual(piece, sub, ndec_all, edec_all)
                inner = self.forest(inner_pieces)
                term = inner.map_keys(lambda k, r=residual: (sorted_pieces(k[0] + (r,)),))
                total = total + coeff * term
        result = (-1) * total
        self.memo[piece] = result
        return result


def _antipode_residual(
    piece: DecoratedTree,
    extracted: SubForest,
    ndec_g: dict[int, MultiIndex],
    edec_g: dict[EdgeKey, MultiIndex],
) -> DecoratedTree:
    new_ndec = {}
    for u in piece.nodes:
        k = piece.node_dec(u)
        if u in ndec_g:
            k = k - ndec_g[u]
        if not k.is_zero():
            new_ndec[u] = k
    new_edec = {}
    for e, _ in piece.edge_items:
        k = piece.edge_dec(e)
        if e in edec_g:
            k = k + edec_g[e]
        if not k.is_zero():
            new_edec[e] = k
    # the recursion's remainder keeps the coloring but carries no o-label
    return piece.with_(node_dec=new_ndec, edge_dec=new_edec, hat1=extracted, o_label={})


def antipode_minus(
    pieces: Sequence[DecoratedTree],
    table: TypeTable,
    vanishing: Optional[CumulantSet] = None,
) -> FormalSum:
    """Recursive counterterm map on a forest of X_- trees: a formal sum of
    colored forests (1 slot)."""
    return _AntipodeMinus(table, vanishing).forest(pieces)


# -- positive coaction and antipode ------------------------------------------------


def _rooted_subtrees(t: DecoratedTree, table: TypeTable) -> Iterator[SubForest]:
    """Subtrees containing the root, determined by their kernel edges: the
    noise edges ride along with their parent nodes (a noise is an attribute
    of its node, so recentering can never strand one).  Includes the trivial
    root-only subtree."""
    kernels = set(t.kernel_edges(table))
    children = {
        u: tuple(e for e in t.children(u) if e in kernels) for u in t.nodes
    }

    def close(acc: frozenset[EdgeKey]) -> SubForest:
        nodes = set(itertools.chain.from_iterable(acc)) | {t.root}
        edges = set(acc)
        for e, ty in t.edge_items:
            if e not in kernels and e[0] in nodes:
                edges.add(e)
                nodes.add(e[1])
        return SubForest(frozenset(nodes), frozenset(edges))

    def rec(frontier: list[EdgeKey], acc: frozenset[EdgeKey]):
        if not frontier:
            yield close(acc)
            return
        e, rest = frontier[0], frontier[1:]
        yield from rec(rest, acc)  # skip e and its whole branch
        yield from rec(rest + list(children[e[1]]), acc | {e})

    yield from rec(list(children[t.root]), frozenset())


def _hat1_components(piece: DecoratedTree) -> list[SubForest]:
    return piece.subforest_components(piece.hat1)


def _admissible_rooted(piece: DecoratedTree, table: TypeTable) -> Iterator[SubForest]:
    """A_2: rooted subtrees S such that every color-1 component is contained
    in S or disjoint from it."""
    comps = _hat1_components(piece)
    for sf in _rooted_subtrees(piece, table):
        ok = True
        for c in comps:
            inter = c.nodes & sf.nodes
            if inter and not (c.nodes <= sf.nodes and c.edges <= sf.edges):
                ok = False
                break
        if ok:
            yield sf


def _plus_colored(piece: DecoratedTree, s: SubForest) -> tuple[SubForest, SubForest]:
    """New coloring [hat1 \\ S]_1 + [S]_2 after recentering around S."""
    keep_nodes: set[int] = set()
    keep_edges: set[EdgeKey] = set()
    for c in _hat1_components(piece):
        if not (c.nodes <= s.nodes):
            keep_nodes |= c.nodes
            keep_edges |= c.edges
    return (
        SubForest(frozenset(keep_nodes), frozenset(keep_edges)),
        SubForest(s.nodes | piece.hat2.nodes, s.edges | piece.hat2.edges),
    )


def _dangle_headroom(
    piece: DecoratedTree, s: SubForest, table: TypeTable,
    ndec: dict[int, MultiIndex], hat1: SubForest, hat2: SubForest,
    olabel: dict[int, ExtLabel],
) -> Optional[dict[EdgeKey, Fraction]]:
    """For each boundary edge of S, the strict upper bound on the extra
    s-degree its decoration may carry while the dangling tree keeps
    positive recentered homogeneity.  None when some dangling tree already
    fails at zero decoration."""
    probe = piece.with_(node_dec=ndec, hat1=hat1, hat2=hat2, o_label=olabel)
    out: dict[EdgeKey, Fraction] = {}
    for e in piece.kernel_edges(table):
        if e[0] in s.nodes and e[1] not in s.nodes:
            h = _recentered_plus_hom(probe, _up_tree_in(piece, e), table)
            if h <= 0:
                return None
            out[e] = h
    return out


def delta_plus(piece: DecoratedTree, table: TypeTable) -> FormalSum:
    """The recentering coaction on a tree of color <= 1: a sum of
    (rooted piece, recentered remainder) pairs, the remainder filtered to
    X_+."""
    if piece.hat2.nodes:
        raise ValueError("the positive coaction acts on trees of color <= 1")
    out = FormalSum.zero()
    for s in _admissible_rooted(piece, table):
        hat1, hat2 = _plus_colored(piece, s)
        boundary = [e for e in piece.kernel_edges(table) if e not in s.edges and e[0] in s.nodes]
        fict = piece.fictitious_nodes(table)
        node_slots = [
            u for u in sorted(s.nodes - fict) if not piece.node_dec(u).is_zero()
        ]

        def assignments():
            def rec_nodes(idx: int, nd: dict, coeff: Fraction):
                if idx == len(node_slots):
                    yield dict(nd), coeff
                    return
                u = node_slots[idx]
                from .scaling import binom_mi

                for k in submultiindices(piece.node_dec(u)):
                    if not k.is_zero():
                        nd[u] = k
                    yield from rec_nodes(idx + 1, nd, coeff * binom_mi(piece.node_dec(u), k))
                    nd.pop(u, None)

            yield from rec_nodes(0, {}, Fraction(1))

        for nd, base_coeff in assignments():
            rem_ndec = {}
            for u in piece.nodes:
                k = piece.node_dec(u)
                if u in nd:
                    k = k - nd[u]
                if not k.is_zero():
                    rem_ndec[u] = k
            olabel = {u: v for u, v in piece.o_label_items if u in hat1.nodes}
            headroom = _dangle_headroom(piece, s, table, rem_ndec, hat1, hat2, olabel)
            if headroom is None:
                continue

            def rec_edges(edges: list[EdgeKey], ed: dict, coeff: Fraction):
                if not edges:
                    yield dict(ed), coeff
                    return
                e, rest = edges[0], edges[1:]
                for k in multiindices_below(table.scaling, headroom[e]):
                    if not k.is_zero():
                        ed[e] = k
                    yield from rec_edges(rest, ed, coeff / k.factorial())
                    ed.pop(e, None)

            for ed, edge_coeff in rec_edges(list(boundary), {}, Fraction(1)):
                chi = _chi(ed)
                left_labels = dict(nd)
                for u, k in chi.items():
                    left_labels[u] = left_labels.get(u, ZERO_MI) + k
                left = piece.restrict(s).with_(node_dec=left_labels)
                rem_edec = {}
                for e, _ in piece.edge_items:
                    k = piece.edge_dec(e)
                    if e in ed:
                        k = k + ed[e]
                    if not k.is_zero():
                        rem_edec[e] = k
                right = piece.with_(
                    node_dec=rem_ndec,
                    edge_dec=rem_edec,
                    hat1=hat1,
                    hat2=hat2,
                    o_label=olabel,
                )
                out = out + (base_coeff * edge_coeff) * FormalSum.single((left, right))
    return out


class _AntipodePlus:
    def __init__(self, table: TypeTable):
        self.table = table
        self.memo: dict[DecoratedTree, FormalSum] = {}

    def run(self, piece: DecoratedTree) -> FormalSum:
        if piece in self.memo:
            return self.memo[piece]
        t = self.table
        if not in_X_plus(piece, t):
            raise ValueError("positive antipode applied outside X_+")
        full_edges = frozenset(e for e, _ in piece.edge_items)
        if not (full_edges - piece.hat2.edges):
            sign = (-1) ** sum(k.degree() for _, k in piece.node_dec_items)
            res = FormalSum.single(((piece.with_(o_label={}),),), sign)
            self.memo[piece] = res
            return res
        danglers = dangling_of_hat2(piece, t)
        outer_sign = (-1) ** len(danglers)
        fict = piece.fictitious_nodes(t)
        nhat = {
            u: piece.node_dec(u)
            for u in piece.hat2.nodes - fict
            if not piece.node_dec(u).is_zero()
        }
        deg_nhat = sum(k.degree() for k in nhat.values())
        # f decorations sit on the kernel edges leaving the color-2 part and
        # must keep the *input* piece in X_+; each such edge trunks its own
        # dangling tree, so the bounds decouple.
        f_slots = sorted(
            e
            for e in piece.kernel_edges(t)
            if e[0] in piece.hat2.nodes and e not in piece.hat2.edges
        )
        f_headroom = {
            e: _recentered_plus_hom(piece, _up_tree_in(piece, e), t) for e in f_slots
        }
        total = FormalSum.zero()
        for s in self._abar2(piece, danglers):
            hat1, hat2 = _plus_colored(piece, s)
            boundary_s = [
                e for e in piece.kernel_edges(t) if e not in s.edges and e[0] in s.nodes
            ]
            node_slots = [
                u
                for u in sorted(s.nodes - fict - piece.hat2.nodes)
                if not piece.node_dec(u).is_zero()
            ]
            for nd, coeff_n in self._node_choices(piece, node_slots):
                rem_ndec = {}
                for u in piece.nodes:
                    k = piece.node_dec(u)
                    if u in nd:
                        k = k - nd[u]
                    if u in nhat:
                        k = k - nhat[u]
                    if not k.is_zero():
                        rem_ndec[u] = k
                olabel = {u: v for u, v in piece.o_label_items if u in hat1.nodes}
                headroom = _dangle_headroom(piece, s, t, rem_ndec, hat1, hat2, olabel)
                if headroom is None:
                    continue
                for ed_s in self._edge_choices(boundary_s, headroom, t):
                    for ed_f in self._edge_choices(f_slots, f_headroom, t):
                        fact = Fraction(1)
                        for k in ed_s.values():
                            fact /= k.factorial()
                        for k in ed_f.values():
                            fact /= k.factorial()
                        chi_s = _chi(ed_s)
                        chi_f = _chi(ed_f)
                        inner_sign = (-1) ** (
                            deg_nhat + sum(k.degree() for k in chi_f.values())
                        )
                        left_labels = dict(nd)
                        for extra in (nhat, chi_s, chi_f):
                            for u, k in extra.items():
                                left_labels[u] = left_labels.get(u, ZERO_MI) + k
                        left_labels = {u: k for u, k in left_labels.items() if not k.is_zero()}
                        left_edec = {}
                        for e in s.edges:
                            k = piece.edge_dec(e) + ed_f.get(e, ZERO_MI)
                            if not k.is_zero():
                                left_edec[e] = k
                        left = piece.restrict(s).with_(
                            node_dec=left_labels, edge_dec=left_edec, o_label={}
                        )
                        rem_edec = {}
                        for e, _ in piece.edge_items:
                            k = piece.edge_dec(e) + ed_s.get(e, ZERO_MI)
                            if not k.is_zero():
                                rem_edec[e] = k
                        right = piece.with_(
                            node_dec=rem_ndec,
                            edge_dec=rem_edec,
                            hat1=hat1,
                            hat2=hat2,
                            o_label=olabel,
                        )
                        if not in_X_plus(right, t):
                            continue
                        inner = self.run(right)
                        term = inner.map_keys(
                            lambda k, l=left: (sorted_pieces(k[0] + (l,)),)
                        )
                        total = total + (coeff_n * fact * inner_sign) * term
        result = outer_sign * total
        self.memo[piece] = result
        return result

    def _abar2(self, piece: DecoratedTree, danglers: list[SubForest]) -> Iterator[SubForest]:
        for s in _admissible_rooted(piece, self.table):
            if not (piece.hat2.nodes <= s.nodes and piece.hat2.edges <= s.edges):
                continue
            if s.edges == piece.hat2.edges:
                # the induction is on the number of uncolored edges, so the
                # recentered subtree must strictly grow the color-2 part
                continue
            if all(sf.edges & s.edges for sf in danglers):
                yield s

    def _node_choices(self, piece: DecoratedTree, slots: list[int]):
        from .scaling import binom_mi

        def rec(idx: int, nd: dict, coeff: Fraction):
            if idx == len(slots):
                yield dict(nd), coeff
                return
            u = slots[idx]
            for k in submultiindices(piece.node_dec(u)):
                if not k.is_zero():
                    nd[u] = k
                yield from rec(idx + 1, nd, coeff * binom_mi(piece.node_dec(u), k))
                nd.pop(u, None)

        yield from rec(0, {}, Fraction(1))

    def _edge_choices(self, slots: list[EdgeKey], headroom: dict, table: TypeTable):
        def rec(idx: int, ed: dict):
            if idx == len(slots):
                yield dict(ed)
                return
            e = slots[idx]
            for k in multiindices_below(table.scaling, headroom[e]):
                if not k.is_zero():
                    ed[e] = k
                yield from rec(idx + 1, ed)
                ed.pop(e, None)

        yield from rec(0, {})


def antipode_plus(piece: DecoratedTree, table: TypeTable) -> FormalSum:
    """Recursive recentering map on a tree of X_+: a formal sum of forests."""
    return _AntipodePlus(table).run(piece)


# -- the full expansion and the report ---------------------------------------------


def bphz_expansion(t: DecoratedTree, table: TypeTable) -> FormalSum:
    """(A_- (x) id (x) A_+)(id (x) Delta_+) Delta_- applied to an uncolored
    tree: a three-slot formal sum (counterterm forest, observed piece,
    recentering forest)."""
    dm = delta_minus(t, table)
    anti_minus = _AntipodeMinus(table)
    anti_plus = _AntipodePlus(table)
    out = FormalSum.zero()
    for (extracted, remainder), c1 in dm.items():
        left = anti_minus.forest(extracted)
        dp = delta_plus(remainder, table)
        for (mid, rec_piece), c2 in dp.items():
            right = anti_plus.run(rec_piece)
            for (lkey,), cl in left.items():
                for (rkey,), cr in right.items():
                    out = out + (c1 * c2 * cl * cr) * FormalSum.single((lkey, mid, rkey))
    return out


def undecorated_forest_shape(pieces: Sequence[DecoratedTree]) -> tuple:
    """The underlying undecorated colored i-forest of a slot entry, in the
    same format as the sigma constructions (for projector tests)."""
    out = []
    for p in pieces:
        out.append(
            (
                tuple(sorted(p.nodes)),
                tuple(sorted(e for e, _ in p.edge_items)),
                p.hat1.sort_key(),
                p.hat2.sort_key(),
            )
        )
    return tuple(sorted(out))


def _bare_constant_key(piece: DecoratedTree, table: TypeTable, cum: CumulantSet):
    """Canonical key of the contracted expectation symbol; None when the
    symbol vanishes (noises admit no full partition into cumulant blocks)."""
    plain = piece.contract_colored(table).relabel_canonical()
    leaves = sorted(plain.leaf_nodes(table))
    types = [plain.leaf_type(u, table) for u in leaves]
    if not cum.admits_full_partition(types):
        return None
    return plain.canonical_code()


class _RenormalizedConstant:
    """Evaluation of the expectation of the negative antipode of a divergent
    tree, as a formal combination of opaque expectation symbols.

    Applies the vanishing filter recursively: an extracted class whose
    admissible partitions are all pendant-reducible contributes zero.
    """

    def __init__(self, table: TypeTable, cum: CumulantSet):
        self.table = table
        self.cum = cum
        self.memo: dict[tuple, FormalSum] = {}

    def of(self, piece: DecoratedTree) -> FormalSum:
        key = piece.relabel_canonical().canonical_code()
        if key in self.memo:
            return self.memo[key]
        if not irreducible_partition_exists(piece, piece.full_subforest(), self.cum):
            res = FormalSum.zero()
        else:
            res = FormalSum.zero()
            t = self.table
            full_edges = frozenset(e for e, _ in piece.edge_items)
            for edge_set in _all_edge_subsets(piece):
                sub = SubForest(
                    frozenset(itertools.chain.from_iterable(edge_set)), edge_set
                )
                comps = piece.subforest_components(sub) if edge_set else []
                if any(c.edges == full_edges for c in comps):
                    continue
                per_comp = []
                dead = False
                for c in comps:
                    options = list(
                        _extraction_decorations(piece, t, c, _boundary(piece, c.nodes, edge_set, t))
                    )
                    if not options:
                        dead = True
                        break
                    per_comp.append((c, options))
                if dead:
                    continue
                for chosen in itertools.product(*(opts for _, opts in per_comp)):
                    coeff = Fraction(1)
                    factors = FormalSum.single(())
                    ndec_all: dict[int, MultiIndex] = {}
                    edec_all: dict[EdgeKey, MultiIndex] = {}
                    for (c, _), (nd, ed, cf) in zip(per_comp, chosen):
                        coeff *= cf
                        labels = dict(nd)
                        for u, k in _chi(ed).items():
                            labels[u] = labels.get(u, ZERO_MI) + k
                        factors = factors.tensor(self.of(_extracted_piece(piece, c, labels)))
                        ndec_all.update(nd)
                        edec_all.update(ed)
                    if factors.is_zero():
                        continue
                    residual = _antipode_residual(piece, sub, ndec_all, edec_all)
                    ckey = _bare_constant_key(residual, t, self.cum)
                    if ckey is None:
                        continue
                    term = factors.map_keys(lambda k, c0=ckey: tuple(sorted(k + (c0,))))
                    res = res + (-coeff) * term
        self.memo[key] = res
        return res


@dataclass(frozen=True)
class CountertermMonomial:
    coefficient: Fraction
    constants: tuple[str, ...]
    residual: DecoratedTree
    expansion: tuple = ()


@dataclass(frozen=True)
class CountertermReport:
    base: DecoratedTree
    monomials: tuple[CountertermMonomial, ...]


def _constant_name(code: tuple, renormalized: bool) -> str:
    digest = f"{abs(hash(code)) % 10**8:08d}"
    return ("C'" if renormalized else "C") + f"[{digest}]"


def counterterm_report(
    t: DecoratedTree, table: TypeTable, cum: CumulantSet, names: Optional[dict] = None
) -> CountertermReport:
    """Group the renormalized expansion of an uncolored tree into
    counterterm monomials: (constant product, exact coefficient, residual).

    Counterterm constants attach per extracted iso class; a class whose
    nested expansion is the bare expectation appears as C[.], one with
    genuine nested corrections as C'[.] with its expansion recorded.
    """
    rc = _RenormalizedConstant(table, cum)
    groups: dict[tuple, dict] = {}
    dm = delta_minus(t, table, vanishing=cum)
    for (extracted, remainder), coeff in dm.items():
        if not extracted:
            continue
        residual = remainder.contract_colored(table).relabel_canonical()
        comp_codes = tuple(sorted(p.relabel_canonical().canonical_code() for p in extracted))
        key = (residual.canonical_code(), comp_codes)
        g = groups.setdefault(
            key, {"residual": residual, "pieces": extracted, "coeff": Fraction(0)}
        )
        g["coeff"] += coeff
    monomials = []
    for key, g in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        pieces = g["pieces"]
        names_out = []
        expansions = []
        dead = False
        for p in pieces:
            expansion = rc.of(p)
            if expansion.is_zero():
                dead = True
                break
            bare = p.relabel_canonical().canonical_code()
            is_bare = len(expansion) == 1 and expansion.coeff((bare,)) == -1
            label = _label_for(p, table, names, renormalized=not is_bare)
            names_out.append(label)
            expansions.append(tuple((k, c) for k, c in expansion.items()))
        if dead:
            continue
        sign = Fraction(-1) ** len(pieces)
        monomials.append(
            CountertermMonomial(
                coefficient=g["coeff"] * sign,
                constants=tuple(sorted(names_out)),
                residual=g["residual"],
                expansion=tuple(expansions),
            )
        )
    monomials.sort(key=lambda m: (len(m.constants), m.constants, repr(m.residual.canonical_code())))
    return CountertermReport(base=t, monomials=tuple(monomials))


def _label_for(piece: DecoratedTree, table: TypeTable, names: Optional[dict], renormalized: bool) -> str:
    code = piece.relabel_canonical().canonical_code()
    if names and code in names:
        base = names[code]
    else:
        base = f"{abs(hash(code)) % 10**8:08d}"
    return ("C'" if renormalized else "C") + f"[{base}]"
