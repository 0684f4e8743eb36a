import itertools
import math
import random
from fractions import Fraction

import pytest

from conftest import KAPPA, Phi4
from renormforest.coalescence import enumerate_trees, full_mask, popcount
from renormforest.forests import div_enumerate, leaf_partitions
from renormforest.powercount import (
    Certifier,
    CertificateInput,
    CumulantHomogeneity,
    fict_gain,
    trees_containing,
)
from renormforest.rules import CumulantSet
from renormforest.scaling import ScalingSpec, TypeTable


def test_default_consistency(phi4):
    ch = CumulantHomogeneity(phi4.cum)
    assert ch.consistency_check()["pass"]
    # item 1 verbatim: the total equals minus the block homogeneity
    block = ch.block(("Xi", "Xi"))
    for fam in enumerate_trees(2):
        assert block.total(fam) == -2 * (Fraction(-5, 2) - KAPPA)


def test_penalization_consistency(phi4):
    ch = CumulantHomogeneity(phi4.cum).penalized(Fraction(1, 200))
    block = ch.block(("Xi", "Xi"))
    for fam in enumerate_trees(2):
        assert block.total(fam) == -2 * (Fraction(-5, 2) - KAPPA) + 2 * Fraction(1, 200)


def test_fict_gain_values(phi4, kpz):
    # |t(B)|_s = -3 - 2k with |s| = 3: ceil(2k) = 1
    assert fict_gain(kpz.table, ("l", "l")) == 1
    # phi4 pair: -5 - 2k with |s| = 5: ceil(2k) = 1
    assert fict_gain(phi4.table, ("Xi", "Xi")) == 1
    # a pair above -|s| gains nothing
    sc = ScalingSpec(2, (2, 1))
    table = TypeTable(sc, kernel_types={"t": Fraction(1)}, noise_types={"l": Fraction(-1)})
    assert fict_gain(table, ("l", "l")) == 0
    assert fict_gain(table, ("l",)) == 0


def test_ext_hom_and_gain_gaussian(phi4):
    ch = CumulantHomogeneity(phi4.cum)
    # a pair cannot extend inside a Gaussian cumulant set
    assert ch.ext_hom(("Xi", "Xi"), ["Xi"]) is None
    # a singleton is not an allowed block: attributed homogeneity zero
    assert ch.ext_hom(("Xi",), ["Xi"]) == 0
    # gain of a single noise: 0 - |t| = 5/2 + kappa
    assert ch.gain(("Xi",), ["Xi"]) == Fraction(5, 2) + KAPPA
    assert ch.gain((), ["Xi"]) == 0
    # of a pair: the singleton branch wins, the pair branch is impossible
    assert ch.gain(("Xi", "Xi"), ["Xi"]) == Fraction(5, 2) + KAPPA


def test_ext_hom_explicit_triples():
    sc = ScalingSpec(2, (2, 1))
    table = TypeTable(sc, kernel_types={"t": Fraction(1)}, noise_types={"l": Fraction(-5, 4)})
    cum = CumulantSet(table, "explicit", frozenset({("l", "l"), ("l", "l", "l")}))
    ch = CumulantHomogeneity(cum)
    # a pair extends to a triple: the root-mass layout attributes zero to
    # any proper cluster
    assert ch.ext_hom(("l", "l"), ["l"]) == 0
    assert ch.higher_cum_check()["pass"]
    assert ch.consistency_check()["pass"]


def test_lift_support(phi4):
    """The lifted block homogeneity vanishes off the injected restriction."""
    ch = CumulantHomogeneity(phi4.cum)
    lifted = ch.lift(("Xi", "Xi"), [1, 3])
    bmask = (1 << 1) | (1 << 3)
    for fam in enumerate_trees(4):
        vals = lifted.on(fam)
        total = -2 * (Fraction(-5, 2) - KAPPA)
        assert sum(vals.values(), Fraction(0)) == total
        for c, v in vals.items():
            assert (c & bmask) == bmask or popcount(c & bmask) >= 2


def test_higher_cum_check(phi4):
    assert CumulantHomogeneity(phi4.cum).higher_cum_check()["pass"]


def _ci(setting, t, wick, pi, forest=frozenset()):
    return CertificateInput(
        tree=t,
        wick=frozenset(wick),
        pi=frozenset(frozenset(b) for b in pi),
        m_small=frozenset(forest),
        m_big=frozenset(forest),
        g_small=frozenset(),
        g_big=frozenset(),
    )


def test_certify_111(phi4):
    lv = sorted(phi4.t111.leaf_nodes(phi4.table))
    cert = Certifier(phi4.table, phi4.cum)
    res = cert.certify(_ci(phi4, phi4.t111, [lv[2]], [(lv[0], lv[1])]))
    assert res["pass"]
    assert res["alpha"] < 0
    assert res["alpha"] == Fraction(-6) + 2 * KAPPA


def test_certify_degenerate_two_vertices(phi4):
    """Just the root and the basepoint: the order is -|s| and there is
    nothing to violate."""
    cert = Certifier(phi4.table, phi4.cum)
    t = phi4.t1
    lv = sorted(t.leaf_nodes(phi4.table))
    # wick the only noise: no pairs; the quotient keeps the root, the leaf
    # node, and the basepoint
    res = cert.certify(_ci(phi4, t, lv, []))
    assert res["pass"]
    assert res["alpha"] < 0


def test_certify_131_all_classes(phi4):
    cert = Certifier(phi4.table, phi4.cum)
    lv = sorted(phi4.t131.leaf_nodes(phi4.table))

    def pairings(xs):
        if not xs:
            yield []
            return
        a = xs[0]
        for i in range(1, len(xs)):
            for p in pairings(xs[1:i] + xs[i + 1 :]):
                yield [(a, xs[i])] + p

    for wick in lv:
        rest = [u for u in lv if u != wick]
        for p in pairings(rest):
            res = cert.certify(_ci(phi4, phi4.t131, [wick], p))
            assert res["pass"], (wick, p, res)
            assert res["alpha"] == Fraction(-7) + 4 * KAPPA


def test_certify_211_scenario3(kpz):
    t, table, cum = kpz.t211, kpz.table, kpz.cum
    divs = div_enumerate(t, table, cum)
    s2 = [s for s, w in divs if t.root in s.nodes and len(s.edges) == 5][0]
    s2_leaves = sorted(t.restrict(s2).leaf_nodes(table))
    wick = [u for u in t.leaf_nodes(table) if u not in s2_leaves]
    cert = Certifier(table, cum)
    res = cert.certify(_ci(kpz, t, wick, [tuple(s2_leaves)], forest={s2}))
    assert res["pass"]
    assert res["alpha"] < 0


def test_certify_flips_on_bad_noise():
    bad = Phi4(xi_hom=Fraction(-3))
    lv = sorted(bad.t111.leaf_nodes(bad.table))
    cert = Certifier(bad.table, bad.cum)
    res = cert.certify(_ci(bad, bad.t111, [lv[2]], [(lv[0], lv[1])]))
    assert not res["pass"]
    assert res["violation"][0] in ("integrability", "decay")
    assert res["tree"] is not None  # the realizable witness


def test_subset_reduction_matches_tree_scan(phi4):
    """Cross-check: per-subset partial sums equal the per-tree evaluation of
    the assembled homogeneity on every coalescence tree."""
    lv = sorted(phi4.t111.leaf_nodes(phi4.table))
    ci = _ci(phi4, phi4.t111, [lv[2]], [(lv[0], lv[1])])
    cert = Certifier(phi4.table, phi4.cum)
    built = cert.build(ci)
    n = len(built["verts"])
    parts = cert.wick_contributions(ci, built)
    base, total = cert._subset_tables(ci, built)
    for fam in enumerate_trees(n):
        vals = cert.evaluate_hom(parts, fam, n)
        assert sum(vals.values(), Fraction(0)) == total
        for a in fam:
            # a renormalized block strictly inside a cluster nets to zero
            # and the forced gate at the block itself is folded into the
            # table, so the evaluations agree on every cluster
            part = sum((v for c, v in vals.items() if (c & a) == c), Fraction(0))
            assert part == base[a]


def test_trees_containing():
    n = 5
    a = (1 << 1) | (1 << 3)
    fams = list(trees_containing(n, a))
    assert fams
    assert all(a in fam for fam in fams)
    direct = [fam for fam in enumerate_trees(n) if a in fam]
    assert {frozenset(f) for f in fams} == {frozenset(f) for f in direct}
