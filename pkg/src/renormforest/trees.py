"""Decorated typed rooted trees, colorings, subforest algebra, canonical forms.

A `DecoratedTree` is immutable.  Node ids are opaque integers; within a fixed
ambient tree, subtrees and i-forest components are referenced through the
ambient's ids, so two components are "the same embedded object" exactly when
their node/edge sets and decorations coincide literally.  Isomorphism of
abstract (embedding-erased) trees is decided by an AHU-style canonical code.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional

from .scaling import ExtLabel, MultiIndex, TypeTable, ZERO_EXT, ZERO_MI

EdgeKey = tuple[int, int]


@dataclass(frozen=True)
class SubForest:
    """A subforest of a fixed ambient tree, by node/edge reference."""

    nodes: frozenset[int]
    edges: frozenset[EdgeKey]

    @classmethod
    def empty(cls) -> "SubForest":
        return cls(frozenset(), frozenset())

    def is_empty(self) -> bool:
        return not self.nodes and not self.edges

    def union(self, other: "SubForest") -> "SubForest":
        return SubForest(self.nodes | other.nodes, self.edges | other.edges)

    def intersection(self, other: "SubForest") -> "SubForest":
        return SubForest(self.nodes & other.nodes, self.edges & other.edges)

    def disjoint_from(self, other: "SubForest") -> bool:
        return not (self.nodes & other.nodes)

    def contains(self, other: "SubForest") -> bool:
        return other.nodes <= self.nodes and other.edges <= self.edges

    def sort_key(self):
        return (tuple(sorted(self.nodes)), tuple(sorted(self.edges)))


EMPTY_SUBFOREST = SubForest.empty()


class StructureError(ValueError):
    """A node/edge set does not describe a well-formed (sub)tree."""


class DecoratedTree:
    """Typed rooted tree with node labels n, edge labels e, an optional
    coloring (hat1, hat2) and an extended label o on the color-1 nodes."""

    __slots__ = (
        "root",
        "_edges",
        "_ndec",
        "_edec",
        "hat1",
        "hat2",
        "_olabel",
        "_children",
        "_parent",
        "_hash",
    )

    def __init__(
        self,
        root: int,
        edges: Mapping[EdgeKey, str],
        node_dec: Mapping[int, MultiIndex] = (),
        edge_dec: Mapping[EdgeKey, MultiIndex] = (),
        hat1: SubForest = EMPTY_SUBFOREST,
        hat2: SubForest = EMPTY_SUBFOREST,
        o_label: Mapping[int, ExtLabel] = (),
        table: Optional[TypeTable] = None,
        check: bool = True,
    ):
        self.root = int(root)
        self._edges = tuple(sorted(((int(p), int(c)), str(t)) for (p, c), t in dict(edges).items()))
        nd = {int(u): k for u, k in dict(node_dec).items() if not k.is_zero()}
        ed = {(int(p), int(c)): k for (p, c), k in dict(edge_dec).items() if not k.is_zero()}
        self._ndec = tuple(sorted(nd.items()))
        self._edec = tuple(sorted(ed.items()))
        self.hat1 = hat1
        self.hat2 = hat2
        ol = {int(u): v for u, v in dict(o_label).items() if not v.is_zero()}
        self._olabel = tuple(sorted(ol.items()))

        children: dict[int, list[EdgeKey]] = {}
        parent: dict[int, int] = {}
        for (p, c), _ in self._edges:
            children.setdefault(p, []).append((p, c))
            children.setdefault(c, [])
            if c in parent:
                raise StructureError(f"node {c} has two parents")
            parent[c] = p
        children.setdefault(self.root, [])
        self._children = {u: tuple(sorted(v)) for u, v in children.items()}
        self._parent = parent
        self._hash = hash(
            (
                "tree",
                self.root,
                self._edges,
                self._ndec,
                self._edec,
                self.hat1.sort_key(),
                self.hat2.sort_key(),
                self._olabel,
            )
        )
        if check:
            self._check(table)

    # -- structure ---------------------------------------------------------

    def _check(self, table: Optional[TypeTable]):
        if self.root in self._parent:
            raise StructureError("root has an incoming edge")
        # connectivity: walk up from every node
        for u in self._children:
            v, hops = u, 0
            while v != self.root:
                if v not in self._parent or hops > len(self._children):
                    raise StructureError(f"node {u} not connected to the root")
                v = self._parent[v]
                hops += 1
        if table is not None:
            seen_noise_parent: set[int] = set()
            for (p, c), t in self._edges:
                if table.is_noise(t):
                    if self._children[c]:
                        raise StructureError("noise edges must be maximal")
                    if p in seen_noise_parent:
                        raise StructureError("two noise edges share a parent")
                    seen_noise_parent.add(p)
                elif not table.is_kernel(t):
                    raise KeyError(f"unknown type {t!r}")
        h1n, h2n = self.hat1.nodes, self.hat2.nodes
        if h1n & h2n:
            raise StructureError("colorings hat1 and hat2 overlap")
        for u, _ in self._olabel:
            if u not in h1n:
                raise StructureError("extended label supported outside the color-1 forest")

    @property
    def edges(self) -> dict[EdgeKey, str]:
        return dict(self._edges)

    @property
    def edge_items(self) -> tuple[tuple[EdgeKey, str], ...]:
        return self._edges

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self._children)

    def node_dec(self, u: int) -> MultiIndex:
        for v, k in self._ndec:
            if v == u:
                return k
        return ZERO_MI

    def edge_dec(self, e: EdgeKey) -> MultiIndex:
        for f, k in self._edec:
            if f == e:
                return k
        return ZERO_MI

    def o_label(self, u: int) -> ExtLabel:
        for v, k in self._olabel:
            if v == u:
                return k
        return ZERO_EXT

    @property
    def node_dec_items(self):
        return self._ndec

    @property
    def edge_dec_items(self):
        return self._edec

    @property
    def o_label_items(self):
        return self._olabel

    def children(self, u: int) -> tuple[EdgeKey, ...]:
        return self._children.get(u, ())

    def parent(self, u: int) -> Optional[int]:
        return self._parent.get(u)

    def edge_type(self, e: EdgeKey) -> str:
        for f, t in self._edges:
            if f == e:
                return t
        raise KeyError(e)

    def noise_edges(self, table: TypeTable) -> list[EdgeKey]:
        return [e for e, t in self._edges if table.is_noise(t)]

    def kernel_edges(self, table: TypeTable) -> list[EdgeKey]:
        return [e for e, t in self._edges if table.is_kernel(t)]

    def fictitious_nodes(self, table: TypeTable) -> frozenset[int]:
        return frozenset(c for (p, c), t in self._edges if table.is_noise(t))

    def true_nodes(self, table: TypeTable) -> frozenset[int]:
        """N(T): all nodes except the fictitious endpoints of noise edges."""
        return self.nodes - self.fictitious_nodes(table)

    def leaf_nodes(self, table: TypeTable) -> frozenset[int]:
        """L(T): parents of noise edges, with their inherited noise types."""
        return frozenset(p for (p, c), t in self._edges if table.is_noise(t))

    def leaf_type(self, u: int, table: TypeTable) -> str:
        for (p, c), t in self._edges:
            if p == u and table.is_noise(t):
                return t
        raise KeyError(f"node {u} carries no noise edge")

    def color_of_node(self, u: int) -> int:
        if u in self.hat2.nodes:
            return 2
        if u in self.hat1.nodes:
            return 1
        return 0

    def color_of_edge(self, e: EdgeKey) -> int:
        if e in self.hat2.edges:
            return 2
        if e in self.hat1.edges:
            return 1
        return 0

    def has_coloring(self) -> bool:
        return not (self.hat1.is_empty() and self.hat2.is_empty())

    def with_(self, **kw) -> "DecoratedTree":
        args = dict(
            root=self.root,
            edges=dict(self._edges),
            node_dec=dict(self._ndec),
            edge_dec=dict(self._edec),
            hat1=self.hat1,
            hat2=self.hat2,
            o_label=dict(self._olabel),
        )
        args.update(kw)
        return DecoratedTree(**args)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DecoratedTree)
            and self.root == other.root
            and self._edges == other._edges
            and self._ndec == other._ndec
            and self._edec == other._edec
            and self.hat1 == other.hat1
            and self.hat2 == other.hat2
            and self._olabel == other._olabel
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"DecoratedTree(root={self.root}, edges={len(self._edges)})"

    # -- homogeneities -----------------------------------------------------

    def homogeneity(self, table: TypeTable, mode: str = "plain") -> Fraction:
        """|.|_s (plain), |.|_- (minus) or |.|_+ (plus) of this tree."""
        total = Fraction(0)
        for e, t in self._edges:
            if mode == "minus" and self.color_of_edge(e) != 0:
                continue
            if mode == "plus" and self.color_of_edge(e) == 2:
                continue
            total += table.hom(t) - Fraction(self.edge_dec(e).sdeg(table.scaling))
        fict = self.fictitious_nodes(table)
        for u in self.nodes - fict:
            if mode == "plus" and self.color_of_node(u) == 2:
                continue
            total += Fraction(self.node_dec(u).sdeg(table.scaling))
            if mode == "plus":
                total += table.hom_ext(self.o_label(u))
        return total

    # -- canonical forms ---------------------------------------------------

    def _code(self, u: int) -> tuple:
        child_codes = sorted(
            (
                self.edge_type(e),
                self.edge_dec(e).entries,
                self.color_of_edge(e),
                self._code(e[1]),
            )
            for e in self.children(u)
        )
        return (
            self.node_dec(u).entries,
            self.color_of_node(u),
            (self.o_label(u).zd, self.o_label(u).types),
            tuple(child_codes),
        )

    def canonical_code(self) -> tuple:
        """AHU-style code: equal iff trees are isomorphic as decorated
        colored trees (embeddings erased)."""
        return self._code(self.root)

    def embedded_key(self) -> tuple:
        """Literal representation: equal iff equal as embedded i-trees."""
        return (
            "emb",
            self.root,
            self._edges,
            self._ndec,
            self._edec,
            self.hat1.sort_key(),
            self.hat2.sort_key(),
            self._olabel,
        )

    def relabel_canonical(self) -> "DecoratedTree":
        """Relabel node ids 0..n-1 in the canonical (AHU) traversal order,
        giving a deterministic representative of the iso class."""
        order: list[int] = []

        def visit(u: int):
            order.append(u)
            for e in sorted(
                self.children(u),
                key=lambda e: (
                    self.edge_type(e),
                    self.edge_dec(e).entries,
                    self.color_of_edge(e),
                    self._code(e[1]),
                ),
            ):
                visit(e[1])

        visit(self.root)
        ren = {u: i for i, u in enumerate(order)}
        return self.relabel(ren)

    def relabel(self, ren: Mapping[int, int]) -> "DecoratedTree":
        return DecoratedTree(
            root=ren[self.root],
            edges={(ren[p], ren[c]): t for (p, c), t in self._edges},
            node_dec={ren[u]: k for u, k in self._ndec},
            edge_dec={(ren[p], ren[c]): k for (p, c), k in self._edec},
            hat1=SubForest(
                frozenset(ren[u] for u in self.hat1.nodes),
                frozenset((ren[p], ren[c]) for p, c in self.hat1.edges),
            ),
            hat2=SubForest(
                frozenset(ren[u] for u in self.hat2.nodes),
                frozenset((ren[p], ren[c]) for p, c in self.hat2.edges),
            ),
            o_label={ren[u]: v for u, v in self._olabel},
            check=False,
        )

    def shift_ids(self, offset: int) -> "DecoratedTree":
        return self.relabel({u: u + offset for u in self.nodes})

    def max_id(self) -> int:
        return max(self.nodes)

    # -- subforest machinery -----------------------------------------------

    def subforest_components(self, sf: SubForest) -> list[SubForest]:
        """Connected components of a subforest, each again a SubForest."""
        if not (sf.nodes <= self.nodes):
            raise StructureError("subforest references unknown nodes")
        for p, c in sf.edges:
            if p not in sf.nodes or c not in sf.nodes:
                raise StructureError("dangling edge in subforest")
        adj: dict[int, set[int]] = {u: set() for u in sf.nodes}
        for p, c in sf.edges:
            adj[p].add(c)
            adj[c].add(p)
        seen: set[int] = set()
        comps = []
        for u in sorted(sf.nodes):
            if u in seen:
                continue
            stack, comp = [u], set()
            while stack:
                v = stack.pop()
                if v in comp:
                    continue
                comp.add(v)
                stack.extend(adj[v] - comp)
            seen |= comp
            comps.append(
                SubForest(frozenset(comp), frozenset(e for e in sf.edges if e[0] in comp))
            )
        return comps

    def is_subforest(self, sf: SubForest) -> bool:
        try:
            self.subforest_components(sf)
            return True
        except StructureError:
            return False

    def subtree_root(self, sf: SubForest) -> int:
        """Root of a connected subforest: its unique minimal node."""
        targets = {c for _, c in sf.edges}
        roots = [u for u in sf.nodes if u not in targets]
        if len(roots) != 1:
            raise StructureError("subforest is not a single subtree")
        return roots[0]

    def restrict(self, sf: SubForest) -> "DecoratedTree":
        """The decorated colored tree induced on one connected subforest
        (decorations, coloring and o restricted, per the paper's convention)."""
        root = self.subtree_root(sf)
        fict = {c for (p, c), t in self._edges if (p, c) in sf.edges}
        return DecoratedTree(
            root=root,
            edges={e: t for e, t in self._edges if e in sf.edges},
            node_dec={u: k for u, k in self._ndec if u in sf.nodes},
            edge_dec={e: k for e, k in self._edec if e in sf.edges},
            hat1=SubForest(self.hat1.nodes & sf.nodes, self.hat1.edges & sf.edges),
            hat2=SubForest(self.hat2.nodes & sf.nodes, self.hat2.edges & sf.edges),
            o_label={u: v for u, v in self._olabel if u in sf.nodes},
            check=False,
        )

    def full_subforest(self) -> SubForest:
        return SubForest(self.nodes, frozenset(e for e, _ in self._edges))

    def all_subtrees(
        self, table: TypeTable, min_true_nodes: int = 1, include_trivial: bool = False
    ) -> list[SubForest]:
        """Every connected edge-subset with its induced node set.

        Note (disappearing noises): a leaf node of the ambient tree may be a
        non-leaf true node of the subtree when its noise edge is omitted.
        """
        out: list[SubForest] = []
        if include_trivial:
            for u in sorted(self.true_nodes(table)):
                out.append(SubForest(frozenset([u]), frozenset()))
        edge_list = [e for e, _ in self._edges]
        n = len(edge_list)
        # grow connected edge sets from each top edge; enumerate by bitmask of
        # adjacency-connected subsets (fine at workbench sizes, <= ~12 edges)
        index = {e: i for i, e in enumerate(edge_list)}
        adj: dict[int, set[int]] = {i: set() for i in range(n)}
        for i, e in enumerate(edge_list):
            for j, f in enumerate(edge_list):
                if i != j and (set(e) & set(f)):
                    adj[i].add(j)
        seen_masks: set[int] = set()

        def grow(mask: int, frontier: set[int], min_new: int):
            if mask in seen_masks:
                return
            seen_masks.add(mask)
            sel = [edge_list[i] for i in range(n) if mask >> i & 1]
            nodes = frozenset(itertools.chain.from_iterable(sel))
            sf = SubForest(nodes, frozenset(sel))
            fict = {c for (p, c) in sel if table.is_noise(self.edge_type((p, c)))}
            if len(nodes - fict) >= min_true_nodes:
                out.append(sf)
            for j in sorted(frontier):
                if j < min_new:
                    continue
                grow(mask | (1 << j), (frontier | adj[j]) - {j}, min_new)

        for i in range(n):
            grow(1 << i, adj[i] - set(range(i + 1)), i + 1)
        # grow() with min_new prevents revisits of the same set from different
        # seeds; dedupe defensively anyway
        uniq = {sf.sort_key(): sf for sf in out}
        return [uniq[k] for k in sorted(uniq)]

    def contract_colored(self, table: TypeTable) -> "DecoratedTree":
        """Collapse the color-1 components to their roots and drop the
        color-2 part onto the root, mirroring how such a tree is evaluated:
        color-1 edges and noises contribute no factors and their node
        variables are identified with the component root's variable.  The
        extended label o is discarded.  The result is a plain decorated tree.
        """
        gv: dict[int, int] = {}
        for comp in self.subforest_components(self.hat1):
            r = self.subtree_root(comp)
            for u in comp.nodes:
                gv[u] = r
        for u in self.hat2.nodes:
            gv[u] = self.root
        for u in self.nodes:
            gv.setdefault(u, u)
        new_edges = {}
        new_edec = {}
        for e, t in self._edges:
            if e in self.hat1.edges or e in self.hat2.edges:
                continue
            p, c = gv[e[0]], gv[e[1]]
            new_edges[(p, c)] = t
            k = self.edge_dec(e)
            if not k.is_zero():
                new_edec[(p, c)] = k
        new_ndec: dict[int, MultiIndex] = {}
        fict = self.fictitious_nodes(table)
        for u in self.nodes - fict:
            k = self.node_dec(u)
            if not k.is_zero():
                tgt = gv[u]
                new_ndec[tgt] = new_ndec.get(tgt, ZERO_MI) + k
        keep = set(itertools.chain.from_iterable(new_edges)) | {gv[self.root]}
        new_ndec = {u: k for u, k in new_ndec.items() if u in keep}
        return DecoratedTree(
            root=gv[self.root], edges=new_edges, node_dec=new_ndec, edge_dec=new_edec, check=False
        )


# -- construction of standalone trees ---------------------------------------


def poly(n: MultiIndex = ZERO_MI) -> DecoratedTree:
    """The trivial tree bullet^n."""
    return DecoratedTree(root=0, edges={}, node_dec={0: n})


def noise(name: str) -> DecoratedTree:
    """The single-noise-edge tree Xi_l."""
    return DecoratedTree(root=0, edges={(0, 1): name})


def integrate(name: str, k: MultiIndex, tree: DecoratedTree, table: TypeTable) -> DecoratedTree:
    """Attach a fresh root above `tree` by an edge of kernel type `name`
    with edge decoration k."""
    if not table.is_kernel(name):
        raise ValueError(f"cannot integrate against non-kernel type {name!r}")
    shifted = tree.shift_ids(1)
    edges = dict(shifted.edges)
    edges[(0, shifted.root)] = name
    edec = {e: shifted.edge_dec(e) for e, _ in shifted.edge_items}
    if not k.is_zero():
        edec[(0, shifted.root)] = k
    out = DecoratedTree(
        root=0,
        edges=edges,
        node_dec={u: kk for u, kk in shifted.node_dec_items},
        edge_dec=edec,
        check=False,
    )
    return out.relabel_canonical()


def tree_product(*trees: DecoratedTree) -> DecoratedTree:
    """Identify the roots; the merged root's label is the sum of the old
    root labels.  Node ids are made disjoint internally."""
    if not trees:
        return poly()
    acc = trees[0]
    for t in trees[1:]:
        other = t.shift_ids(acc.max_id() + 1)
        edges = dict(acc.edges)
        ndec = {u: k for u, k in acc.node_dec_items}
        edec = {e: k for e, k in acc.edge_dec_items}
        ren = {other.root: acc.root}
        for u in other.nodes:
            ren.setdefault(u, u)
        for (p, c), ty in other.edges.items():
            edges[(ren[p], ren[c])] = ty
            k = other.edge_dec((p, c))
            if not k.is_zero():
                edec[(ren[p], ren[c])] = k
        for u, k in other.node_dec_items:
            tgt = ren[u]
            ndec[tgt] = ndec.get(tgt, ZERO_MI) + k
        acc = DecoratedTree(root=acc.root, edges=edges, node_dec=ndec, edge_dec=edec, check=False)
    return acc.relabel_canonical()


# -- standalone forests ------------------------------------------------------


class Forest:
    """A multiset of standalone decorated trees (the empty forest is 1)."""

    __slots__ = ("_components",)

    def __init__(self, components: Iterable[DecoratedTree] = ()):
        comps = sorted(components, key=lambda t: t.canonical_code())
        self._components = tuple(comps)

    @property
    def components(self) -> tuple[DecoratedTree, ...]:
        return self._components

    def is_empty(self) -> bool:
        return not self._components

    def product(self, other: "Forest") -> "Forest":
        return Forest(self._components + other._components)

    def canonical_code(self) -> tuple:
        return ("forest",) + tuple(t.canonical_code() for t in self._components)

    def __eq__(self, other):
        return isinstance(other, Forest) and self.canonical_code() == other.canonical_code()

    def __hash__(self):
        return hash(self.canonical_code())

    def __iter__(self) -> Iterator[DecoratedTree]:
        return iter(self._components)

    def __len__(self) -> int:
        return len(self._components)


EMPTY_FOREST = Forest()
