from fractions import Fraction

import pytest

from conftest import KAPPA, Phi4
from renormforest.rules import (
    CumulantSet,
    RuleSpec,
    SubcriticalityError,
    check_subcritical,
    generate_trees,
    jump,
    production,
    super_regularity,
    theorem_conditions,
)
from renormforest.scaling import ScalingSpec, TypeTable
from renormforest.trees import noise, poly


def test_phi4_generation(phi4):
    basis = generate_trees(phi4.rule, Fraction(0), 11)
    codes = {t.canonical_code() for t in basis}
    assert phi4.xi.canonical_code() in codes
    assert phi4.t111.canonical_code() in codes
    assert phi4.t131.canonical_code() in codes
    assert all(t.homogeneity(phi4.table) < 0 for t in basis)
    # the lifted integral <1> enters as a tree of its own
    assert phi4.t1.canonical_code() in codes


def test_empty_rule(phi4):
    empty = RuleSpec(phi4.table, productions={}, standalone_noises=("Xi",))
    basis = generate_trees(empty, Fraction(1), 6, poly_sdeg_bound=0)
    # no productions: just the primitives below the cutoff
    kinds = sorted(len(t.edge_items) for t in basis)
    assert kinds == [0, 1]


def test_kpz_generation(kpz):
    basis = generate_trees(kpz.rule, Fraction(0), 10)
    codes = {t.canonical_code() for t in basis}
    assert kpz.t211.canonical_code() in codes


def test_generation_closed_under_subtrees(phi4):
    basis = generate_trees(phi4.rule, Fraction(0), 9)
    codes = {t.canonical_code() for t in basis}
    for t in basis:
        for sf in t.all_subtrees(phi4.table):
            piece = t.restrict(sf).relabel_canonical()
            if piece.homogeneity(phi4.table) < 0 and phi4.rule.conforms(piece):
                assert piece.canonical_code() in codes


def test_subcriticality():
    phi4 = Phi4()
    assert check_subcritical(phi4.rule)["pass"]
    # |Xi| = -4 is supercritical for the cubic rule
    sc = ScalingSpec(4, (2, 1, 1, 1))
    table = TypeTable(sc, kernel_types={"I": Fraction(2)}, noise_types={"Xi": Fraction(-4)})
    rule = RuleSpec(
        table,
        productions={"I": frozenset({production("I", "I", "I"), production("Xi")})},
    )
    res = check_subcritical(rule)
    assert not res["pass"]
    assert res["offender"] is not None
    # no productions: vacuous pass
    empty = RuleSpec(table, productions={})
    assert check_subcritical(empty)["pass"]
    with pytest.raises(SubcriticalityError):
        generate_trees(rule, Fraction(0), 6)


def test_super_regularity_phi4(phi4):
    rep = super_regularity(phi4.t111, phi4.cum)
    assert rep["pass"]
    assert len(rep["rows"]) >= 3
    # a lone noise has no eligible subtree
    assert super_regularity(phi4.xi, phi4.cum)["rows"] == []


def test_super_regularity_failure():
    # at |Xi| = -3 the exhaustive scan flags the full three-noise tree
    # (zero-label homogeneity -3, jump gain 2); the two-noise cherry still
    # clears its margin there and first fails at |Xi| = -7/2
    bad = Phi4(xi_hom=Fraction(-3))
    rep = super_regularity(bad.t111, bad.cum)
    assert not rep["pass"]
    assert {r["zero_hom"] for r in rep["failing"]} == {Fraction(-3)}
    worse = Phi4(xi_hom=Fraction(-7, 2))
    rep2 = super_regularity(worse.t11, worse.cum)
    assert not rep2["pass"]
    assert Fraction(-3) in {r["zero_hom"] for r in rep2["failing"]}


def test_theorem_conditions(phi4, kpz):
    assert theorem_conditions(phi4.t131, phi4.cum)["pass"]
    assert theorem_conditions(kpz.t211, kpz.cum)["pass"]
    worse = Phi4(xi_hom=Fraction(-5, 2) - Fraction(1, 4))
    rep = theorem_conditions(worse.t131, worse.cum)
    assert not rep["pass"]


def test_cumulant_set_invariants(phi4):
    with pytest.raises(ValueError):  # singleton block
        CumulantSet(phi4.table, "explicit", frozenset({("Xi",)}))
    with pytest.raises(ValueError):  # missing same-type pair
        CumulantSet(phi4.table, "explicit", frozenset())
    # subset closure: a triple without its pairs
    sc = ScalingSpec(2, (2, 1))
    table = TypeTable(sc, kernel_types={"t": Fraction(1)}, noise_types={"l": Fraction(-1)})
    with pytest.raises(ValueError):
        CumulantSet(table, "explicit", frozenset({("l", "l", "l")}))
    ok = CumulantSet(table, "explicit", frozenset({("l", "l", "l"), ("l", "l")}))
    assert ok.max_arity == 3
    assert ok.admits(("l", "l", "l"))
    # arity >= 3 homogeneity bound: |t([3])| = -3 <= (1-3)*3 = -6 holds, but
    # a deeper noise breaks it
    table_bad = TypeTable(sc, kernel_types={"t": Fraction(1)}, noise_types={"l": Fraction(-21, 10)})
    with pytest.raises(ValueError):
        CumulantSet(table_bad, "explicit", frozenset({("l", "l", "l"), ("l", "l")}))


def test_jump_values(phi4, kpz):
    # Gaussian pairs: an even block needs two partners, an odd block one
    assert jump(phi4.cum, ["Xi"], ["Xi", "Xi"]) == 2 * (
        Fraction(-5, 2) - KAPPA
    ) + 2 * 5
    assert jump(kpz.cum, ["l"], ["l"]) == (Fraction(-3, 2) - KAPPA) + 3
    assert jump(phi4.cum, [], ["Xi", "Xi"]) is None
    # empty block: no partition can meet it
    assert jump(phi4.cum, ["Xi"], []) is None


def test_gaussian_partitions(phi4):
    assert phi4.cum.admits_full_partition(["Xi", "Xi"])
    assert not phi4.cum.admits_full_partition(["Xi"])
    assert not phi4.cum.admits_full_partition(["Xi"] * 3)
    assert len(phi4.cum.partitions_of(["Xi"] * 4)) == 3
