"""Shared settings: the two standard model problems and the worked example
trees used across the suite."""
from __future__ import annotations

from fractions import Fraction

import pytest

from renormforest.rules import CumulantSet, RuleSpec, production
from renormforest.scaling import MultiIndex, ScalingSpec, TypeTable, ZERO_MI
from renormforest.trees import DecoratedTree, SubForest, integrate, noise, tree_product

KAPPA = Fraction(1, 100)


class Phi4:
    """Parabolic scaling in 3+1 dimensions, one kernel of order 2 and one
    noise of regularity -5/2 - kappa, cubic nonlinearity."""

    def __init__(self, xi_hom: Fraction = Fraction(-5, 2) - KAPPA):
        self.scaling = ScalingSpec(4, (2, 1, 1, 1))
        self.table = TypeTable(
            self.scaling, kernel_types={"I": Fraction(2)}, noise_types={"Xi": xi_hom}
        )
        self.cum = CumulantSet(self.table, "gaussian")
        self.rule = RuleSpec(
            self.table,
            productions={
                "I": frozenset(
                    {
                        production("I", "I", "I"),
                        production("I", "I"),
                        production("I"),
                        production(),
                        production("Xi"),
                    }
                )
            },
            standalone_noises=("Xi",),
        )
        self.xi = noise("Xi")
        self.t1 = integrate("I", ZERO_MI, self.xi, self.table)
        self.t11 = tree_product(self.t1, self.t1)
        self.t111 = tree_product(self.t1, self.t1, self.t1)
        self.t131 = tree_product(
            self.t1, integrate("I", ZERO_MI, self.t111, self.table), self.t1
        )


class Kpz:
    """Scaling (2,1), one kernel of order 1, one noise of regularity
    -3/2 - kappa, quadratic gradient nonlinearity."""

    def __init__(self):
        self.scaling = ScalingSpec(2, (2, 1))
        self.table = TypeTable(
            self.scaling,
            kernel_types={"t": Fraction(1)},
            noise_types={"l": Fraction(-3, 2) - KAPPA},
        )
        self.cum = CumulantSet(self.table, "gaussian")
        self.rule = RuleSpec(
            self.table,
            productions={
                "t": frozenset(
                    {
                        production("t", "t"),
                        production("t"),
                        production(),
                        production("l"),
                    }
                )
            },
            standalone_noises=("l",),
        )
        self.il = integrate("t", ZERO_MI, noise("l"), self.table)
        # the chain tree: root u1 carries a noise branch and u2; u2 carries a
        # noise branch and u3; u3 carries two noise branches
        self.t211 = tree_product(
            self.il,
            integrate(
                "t",
                ZERO_MI,
                tree_product(
                    self.il,
                    integrate("t", ZERO_MI, tree_product(self.il, self.il), self.table),
                ),
                self.table,
            ),
        )


@pytest.fixture(scope="session")
def phi4() -> Phi4:
    return Phi4()


@pytest.fixture(scope="session")
def kpz() -> Kpz:
    return Kpz()


def spine_tree(table: TypeTable) -> DecoratedTree:
    """The three-level spine with two noise branches per level, the running
    example for forests of subtrees.  Node ids: root 0, middle 1, top 2;
    noise nodes 10/11 at the root, 12/13 at the middle, 14/15 at the top;
    fictitious ends 2x."""
    edges = {
        (0, 1): "I",
        (1, 2): "I",
        (0, 10): "I",
        (0, 11): "I",
        (1, 12): "I",
        (1, 13): "I",
        (2, 14): "I",
        (2, 15): "I",
    }
    for v in (10, 11, 12, 13, 14, 15):
        edges[(v, v + 10)] = "Xi"
    return DecoratedTree(root=0, edges=edges, table=table)


def spine_subtrees(t: DecoratedTree) -> dict[str, SubForest]:
    """The six shaded subtrees of the spine example."""

    def sf(edge_list):
        edges = frozenset(edge_list)
        nodes = frozenset(u for e in edges for u in e)
        return SubForest(nodes, edges)

    noise_of = lambda v: (v, v + 10)
    s1 = sf(
        [(0, 1), (1, 2), (0, 10), (0, 11), (1, 12), (1, 13)]
        + [noise_of(v) for v in (10, 11, 12, 13)]
    )
    s2 = sf(
        [(0, 1), (0, 10), (0, 11), (1, 12)]
        + [noise_of(v) for v in (10, 11, 12)]
    )
    s3 = sf([(0, 1), (0, 10), (1, 12)] + [noise_of(v) for v in (10, 12)])
    s4 = sf([(0, 1), (0, 11), (1, 13)] + [noise_of(v) for v in (11, 13)])
    s5 = sf([(2, 14), (2, 15)] + [noise_of(v) for v in (14, 15)])
    s6 = sf(
        [(0, 1), (1, 2), (0, 10), (1, 12), (2, 14)]
        + [noise_of(v) for v in (10, 12, 14)]
    )
    return {"S1": s1, "S2": s2, "S3": s3, "S4": s4, "S5": s5, "S6": s6}
