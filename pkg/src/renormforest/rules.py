"""SPDE rules: tree-basis generation, subcriticality, and the side conditions
used by the convergence theorem (super-regularity and the Gaussian-case
bullet list)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .scaling import MultiIndex, ScalingSpec, TypeTable, ZERO_MI, multiindices_below
from .trees import DecoratedTree, SubForest, noise, poly

# An entry of a production: (type name, derivative decoration).
Entry = tuple[str, MultiIndex]
# A production: a sorted multiset of entries.
Production = tuple[Entry, ...]


def production(*entries: tuple[str, MultiIndex] | str) -> Production:
    norm = []
    for e in entries:
        if isinstance(e, str):
            norm.append((e, ZERO_MI))
        else:
            norm.append((e[0], e[1]))
    return tuple(sorted(norm, key=lambda p: (p[0], p[1].entries)))


class SubcriticalityError(RuntimeError):
    pass


@dataclass(frozen=True)
class RuleSpec:
    """Allowed node contents per kernel type, plus the standalone noises.

    A tree conforms when every true node's multiset of outgoing (type,
    derivative) pairs is an allowed production for the type of its incoming
    edge (for the root: for at least one kernel type).
    """

    table: TypeTable
    productions: Mapping[str, frozenset[Production]]
    standalone_noises: tuple[str, ...] = ()

    def __post_init__(self):
        prods = {str(k): frozenset(v) for k, v in dict(self.productions).items()}
        object.__setattr__(self, "productions", prods)
        object.__setattr__(self, "standalone_noises", tuple(self.standalone_noises))
        for t in prods:
            if not self.table.is_kernel(t):
                raise ValueError(f"productions must be keyed by kernel types, got {t!r}")
        for t, ps in prods.items():
            for p in ps:
                for name, _ in p:
                    if not (self.table.is_kernel(name) or self.table.is_noise(name)):
                        raise KeyError(f"production references unknown type {name!r}")
                if sum(1 for name, _ in p if self.table.is_noise(name)) > 1:
                    raise ValueError("a production may carry at most one noise entry")
        for t in self.standalone_noises:
            if not self.table.is_noise(t):
                raise ValueError(f"standalone noise {t!r} is not a noise type")

    def allowed_contents(self, incoming: Optional[str]) -> frozenset[Production]:
        if incoming is None:
            out: set[Production] = set()
            for ps in self.productions.values():
                out |= ps
            return frozenset(out)
        return self.productions.get(incoming, frozenset())

    def node_content(self, t: DecoratedTree, u: int) -> Production:
        return tuple(
            sorted(
                ((t.edge_type(e), t.edge_dec(e)) for e in t.children(u)),
                key=lambda p: (p[0], p[1].entries),
            )
        )

    def conforms(self, t: DecoratedTree) -> bool:
        fict = t.fictitious_nodes(self.table)
        for u in t.nodes - fict:
            incoming = None
            p = t.parent(u)
            if p is not None:
                incoming = t.edge_type((p, u))
            content = self.node_content(t, u)
            if u == t.root and not content and len(t.nodes) == 1:
                return True  # bare polynomial
            if content not in self.allowed_contents(incoming):
                return False
        return True


@dataclass(frozen=True)
class CumulantSet:
    """The set of joint cumulants allowed to be nonzero.

    In gaussian mode every pair of noise types is allowed and nothing else.
    Explicit mode lists typed multisets (as sorted tuples of type names); the
    list must satisfy: arity >= 2, closure under sub-multisets of size >= 2,
    all same-type pairs present, and for arity M >= 3 the homogeneity bound
    |t([M])|_s > (1-M)|s|.
    """

    table: TypeTable
    mode: str = "gaussian"
    explicit: frozenset[tuple[str, ...]] = frozenset()
    max_arity_cap: int = 8

    def __post_init__(self):
        if self.mode not in ("gaussian", "explicit"):
            raise ValueError("mode must be 'gaussian' or 'explicit'")
        blocks = frozenset(tuple(sorted(b)) for b in self.explicit)
        object.__setattr__(self, "explicit", blocks)
        if self.mode == "explicit":
            noises = set(self.table.noise_types)
            abs_s = self.table.scaling.abs_s
            for b in blocks:
                if len(b) < 2:
                    raise ValueError("cumulant blocks must have arity >= 2")
                for t in b:
                    if t not in noises:
                        raise ValueError(f"cumulant block uses non-noise type {t!r}")
                if len(b) >= 3:
                    tot = sum(self.table.hom(t) for t in b)
                    if not tot > (1 - len(b)) * abs_s:
                        raise ValueError(
                            f"cumulant block {b} violates |t([M])|_s > (1-M)|s|"
                        )
            for b in blocks:
                for size in range(2, len(b)):
                    for sub in set(itertools.combinations(b, size)):
                        if tuple(sorted(sub)) not in blocks:
                            raise ValueError(
                                f"cumulant set not closed under subsets: missing {sub}"
                            )
            for t in noises:
                if (t, t) not in blocks:
                    raise ValueError(f"same-type pair ({t},{t}) missing from cumulant set")

    def admits(self, block_types: Sequence[str]) -> bool:
        b = tuple(sorted(block_types))
        if len(b) < 2:
            return False
        if self.mode == "gaussian":
            return len(b) == 2 and all(self.table.is_noise(t) for t in b)
        return b in self.explicit

    @property
    def max_arity(self) -> int:
        if self.mode == "gaussian":
            return 2
        return max((len(b) for b in self.explicit), default=2)

    def partitions_of(self, types: Sequence[str]) -> list[tuple[tuple[int, ...], ...]]:
        """All partitions of positions 0..n-1 into admissible blocks."""
        n = len(types)
        out: list[tuple[tuple[int, ...], ...]] = []

        def rec(remaining: tuple[int, ...], acc: list[tuple[int, ...]]):
            if not remaining:
                out.append(tuple(sorted(acc)))
                return
            first, rest = remaining[0], remaining[1:]
            for size in range(1, min(self.max_arity, len(remaining)) + 1):
                for others in itertools.combinations(rest, size - 1):
                    block = (first,) + others
                    if self.admits([types[i] for i in block]):
                        left = tuple(i for i in rest if i not in others)
                        acc.append(block)
                        rec(left, acc)
                        acc.pop()

        rec(tuple(range(n)), [])
        return out

    def admits_full_partition(self, types: Sequence[str]) -> bool:
        if len(types) == 0:
            return True
        return bool(self.partitions_of(types))


def jump(
    cum: CumulantSet, pool_types: Iterable[str], block_types: Sequence[str]
) -> Optional[Fraction]:
    """Worst-case homogeneity change when the noises of `block_types` form
    cumulants together with extra noises drawn (with repetition) from the
    type set of `pool_types`: the minimum of |t(C)|_s + |C|*|s| over nonempty
    C admitting a partition of C + B into allowed blocks, each meeting B.
    Returns None when no such C exists.
    """
    table = cum.table
    abs_s = table.scaling.abs_s
    pool = sorted(set(pool_types))
    b = tuple(sorted(block_types))
    if not pool:
        return None
    cap = max(1, (cum.max_arity - 1) * max(1, len(b)))
    best: Optional[Fraction] = None

    def feasible(c_types: tuple[str, ...]) -> bool:
        # elements: B-positions tagged True, C-positions tagged False
        elems = [(t, True) for t in b] + [(t, False) for t in c_types]

        def rec(remaining: tuple[int, ...]) -> bool:
            if not remaining:
                return True
            b_positions = [i for i in remaining if elems[i][1]]
            if not b_positions:
                return False  # leftover C-elements cannot form B-meeting blocks
            first = b_positions[0]
            rest = tuple(i for i in remaining if i != first)
            for size in range(2, min(cum.max_arity, len(remaining)) + 1):
                for others in itertools.combinations(rest, size - 1):
                    block = (first,) + others
                    if cum.admits([elems[i][0] for i in block]):
                        left = tuple(i for i in rest if i not in others)
                        if rec(left):
                            return True
            return False

        return rec(tuple(range(len(elems))))

    for size in range(1, cap + 1):
        for c_types in itertools.combinations_with_replacement(pool, size):
            value = sum((table.hom(t) for t in c_types), Fraction(0)) + size * abs_s
            if best is not None and value >= best:
                continue
            if feasible(c_types):
                best = value
    return best


# -- subcriticality -----------------------------------------------------------


def check_subcritical(rule: RuleSpec, iterations: int = 60) -> dict:
    """Fixpoint test on the minimal attainable homogeneity per kernel type.

    Iterates a(t) -> |t|_s + min over productions of the summed entry
    regularities; passes when the (monotone decreasing) iteration
    stabilizes, fails when it keeps dropping.
    """
    table = rule.table
    kernels = sorted(rule.productions)

    def entry_value(entry: Entry, a: Mapping[str, Fraction]) -> Fraction:
        name, k = entry
        base = a[name] if name in a else table.hom(name)
        return base - k.sdeg(table.scaling)

    a: dict[str, Fraction] = {}
    for t in kernels:
        vals = []
        for p in rule.productions[t]:
            if all(table.is_noise(name) or name not in kernels for name, _ in p):
                vals.append(
                    table.hom(t) + sum((entry_value(e, {}) for e in p), Fraction(0))
                )
        a[t] = min(vals) if vals else table.hom(t)
    history = [dict(a)]
    offender: Optional[tuple[str, Production]] = None
    for _ in range(iterations):
        nxt: dict[str, Fraction] = {}
        for t in kernels:
            best = None
            best_p = None
            for p in rule.productions[t]:
                v = table.hom(t) + sum((entry_value(e, a) for e in p), Fraction(0))
                if best is None or v < best:
                    best, best_p = v, p
            nxt[t] = min(best, a[t]) if best is not None else a[t]
            if nxt[t] < a[t]:
                offender = (t, best_p)
        if nxt == a:
            return {"pass": True, "fixpoint": a, "history": history}
        a = nxt
        history.append(dict(a))
    return {
        "pass": False,
        "fixpoint": a,
        "history": history,
        "offender": offender,
    }


# -- tree generation -----------------------------------------------------------


def generate_trees(
    rule: RuleSpec,
    cutoff: Fraction,
    max_edges: int,
    poly_sdeg_bound: int = 0,
    require_subcritical: bool = True,
) -> list[DecoratedTree]:
    """All rule-conforming trees with homogeneity < cutoff and at most
    `max_edges` edges, deduplicated up to isomorphism.

    Node labels are drawn from |n|_s <= poly_sdeg_bound (0 disables
    polynomial decorations, which is the right setting for a negative
    cutoff basis).
    """
    table = rule.table
    cutoff = Fraction(cutoff)
    if require_subcritical and not check_subcritical(rule)["pass"]:
        raise SubcriticalityError(
            "rule failed the subcriticality fixpoint test; pass "
            "require_subcritical=False to override"
        )
    labels = (
        [ZERO_MI]
        if poly_sdeg_bound <= 0
        else multiindices_below(table.scaling, Fraction(poly_sdeg_bound) + 1)
    )

    # planted generation: trees whose root content conforms for a given
    # incoming type, organized by edge budget
    cache: dict[tuple[Optional[str], int], list[DecoratedTree]] = {}

    def gen(incoming: Optional[str], budget: int) -> list[DecoratedTree]:
        key = (incoming, budget)
        if key in cache:
            return cache[key]
        out: dict[tuple, DecoratedTree] = {}
        for p in rule.allowed_contents(incoming):
            noise_entries = [e for e in p if table.is_noise(e[0])]
            kernel_entries = [e for e in p if table.is_kernel(e[0])]
            edges_needed = len(p)
            if edges_needed > budget:
                continue
            # distribute the remaining budget over kernel branches
            def branches(idx: int, left: int, acc: list[DecoratedTree]):
                if idx == len(kernel_entries):
                    yield list(acc)
                    return
                name, k = kernel_entries[idx]
                if left < 1:
                    return
                for sub in gen(name, left - 1):  # the connecting edge costs 1
                    acc.append(sub)
                    yield from branches(idx + 1, left - 1 - len(sub.edge_items), acc)
                    acc.pop()

            for subs in branches(0, budget - len(noise_entries), []):
                for lab in labels:
                    t = _assemble(table, lab, noise_entries, kernel_entries, subs)
                    out[t.canonical_code()] = t
        res = sorted(out.values(), key=lambda t: (len(t.edge_items), t.canonical_code()))
        cache[key] = res
        return res

    basis: dict[tuple, DecoratedTree] = {}
    for lab in labels:
        t = poly(lab)
        if t.homogeneity(table) < cutoff:
            basis[t.canonical_code()] = t
    for ln in rule.standalone_noises:
        t = noise(ln)
        if t.homogeneity(table) < cutoff:
            basis[t.canonical_code()] = t
    for t in gen(None, max_edges):
        if t.homogeneity(table) < cutoff:
            basis[t.canonical_code()] = t
    return sorted(basis.values(), key=lambda t: (len(t.edge_items), t.canonical_code()))


def _assemble(
    table: TypeTable,
    label: MultiIndex,
    noise_entries: Sequence[Entry],
    kernel_entries: Sequence[Entry],
    subs: Sequence[DecoratedTree],
) -> DecoratedTree:
    edges: dict[tuple[int, int], str] = {}
    edec: dict[tuple[int, int], MultiIndex] = {}
    ndec: dict[int, MultiIndex] = {}
    if not label.is_zero():
        ndec[0] = label
    nxt = 1
    for name, k in noise_entries:
        edges[(0, nxt)] = name
        if not k.is_zero():
            edec[(0, nxt)] = k
        nxt += 1
    for (name, k), sub in zip(kernel_entries, subs):
        shifted = sub.shift_ids(nxt)
        edges[(0, shifted.root)] = name
        if not k.is_zero():
            edec[(0, shifted.root)] = k
        for e, t in shifted.edge_items:
            edges[e] = t
            kk = shifted.edge_dec(e)
            if not kk.is_zero():
                edec[e] = kk
        for u, kk in shifted.node_dec_items:
            ndec[u] = kk
        nxt = shifted.max_id() + 1
    out = DecoratedTree(root=0, edges=edges, node_dec=ndec, edge_dec=edec, check=False)
    return out.relabel_canonical()


# -- side conditions ------------------------------------------------------------


def _zero_node_hom(t: DecoratedTree, sf: SubForest, table: TypeTable) -> Fraction:
    """|S^0_e|_s: the subtree's homogeneity with node labels dropped."""
    total = Fraction(0)
    for e in sf.edges:
        ty = t.edge_type(e)
        total += table.hom(ty) - Fraction(t.edge_dec(e).sdeg(table.scaling))
    return total


def eligible_subtrees(t: DecoratedTree, table: TypeTable) -> list[SubForest]:
    """Subtrees S with |N(S)| > 1 (true nodes)."""
    return t.all_subtrees(table, min_true_nodes=2)


def super_regularity(
    t: DecoratedTree,
    cum: CumulantSet,
    variant: str = "plain",
    ch=None,
) -> dict:
    """Check strengthened subtree power counting.

    plain variant: for every subtree S with |N(S)| > 1 and L(S) nonempty,
        |S^0_e|_s + min(|s|/2, min_u -|t(u)|_s, j_{L(T)}(L(S))) > 0.
    cumulant variant: for every subtree S with |N(S)| > 1,
        |S^0_e|_s + min(|s|/2, h_{c,L(T)}(L(S)), j_{L(T)}(L(S))) > 0,
    where h is the homogeneity-gain of a consistent cumulant homogeneity
    (an object with a .gain(block_types, pool_types) method).
    """
    table = cum.table
    if variant not in ("plain", "cumulant"):
        raise ValueError("variant must be 'plain' or 'cumulant'")
    if variant == "cumulant" and ch is None:
        raise ValueError("cumulant variant needs a cumulant homogeneity")
    half = Fraction(table.scaling.abs_s, 2)
    ambient_leaf_types = sorted(t.leaf_type(u, table) for u in t.leaf_nodes(table))
    rows = []
    ok = True
    for sf in eligible_subtrees(t, table):
        piece = t.restrict(sf)
        leaves = sorted(piece.leaf_nodes(table))
        leaf_types = [piece.leaf_type(u, table) for u in leaves]
        if variant == "plain" and not leaves:
            continue
        base = _zero_node_hom(t, sf, table)
        candidates = [half]
        if variant == "plain":
            candidates.extend(-table.hom(ty) for ty in leaf_types)
        else:
            candidates.append(ch.gain(leaf_types, ambient_leaf_types))
        j = jump(cum, ambient_leaf_types, leaf_types)
        if j is not None:
            candidates.append(j)
        margin = base + min(candidates)
        passed = margin > 0
        ok = ok and passed
        rows.append(
            {
                "subtree": sf,
                "zero_hom": base,
                "margin": margin,
                "pass": passed,
            }
        )
    failing = [r for r in rows if not r["pass"]]
    return {"pass": ok, "rows": rows, "failing": failing}


def theorem_conditions(t: DecoratedTree, cum: CumulantSet) -> dict:
    """The three subtree bullet conditions of the Gaussian convergence
    theorem, checked for every subtree S with |N(S)| >= 2."""
    table = cum.table
    abs_s = table.scaling.abs_s
    ambient_types = sorted(set(t.leaf_type(u, table) for u in t.leaf_nodes(table)))
    rows = []
    ok = True
    for sf in eligible_subtrees(t, table):
        piece = t.restrict(sf)
        leaves = sorted(piece.leaf_nodes(table))
        base = _zero_node_hom(t, sf, table)
        # bullet 1: worst typed set A (types from t(L(T)) as a set, |A|+|L(S)| even)
        bullet1 = True
        if ambient_types:
            parity = len(leaves) % 2
            worst = None
            for size in (1, 2):
                if (size + len(leaves)) % 2 != 0:
                    continue
                for combo in itertools.combinations_with_replacement(ambient_types, size):
                    v = sum((table.hom(x) for x in combo), Fraction(0)) + size * abs_s
                    worst = v if worst is None or v < worst else worst
            if worst is not None:
                bullet1 = base + worst > 0
        # bullet 2: per-leaf margin
        bullet2 = all(base - table.hom(piece.leaf_type(u, table)) > 0 for u in leaves)
        # bullet 3
        bullet3 = base > Fraction(-abs_s, 2)
        passed = bullet1 and bullet2 and bullet3
        ok = ok and passed
        rows.append(
            {
                "subtree": sf,
                "zero_hom": base,
                "bullets": (bullet1, bullet2, bullet3),
                "pass": passed,
            }
        )
    return {"pass": ok, "rows": rows, "failing": [r for r in rows if not r["pass"]]}
