"""Exact-rational formal linear combinations.

A `FormalSum` maps canonical hashable keys to nonzero `Fraction` coefficients.
Tensor terms are represented by tuples of per-slot keys.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Callable, Hashable, Iterable, Iterator, Mapping


class FormalSum:
    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Hashable, Fraction] | Iterable[tuple[Hashable, Fraction]] = ()):
        acc: dict = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for key, coeff in items:
            coeff = Fraction(coeff)
            if coeff:
                acc[key] = acc.get(key, Fraction(0)) + coeff
                if not acc[key]:
                    del acc[key]
        self._terms = acc

    @classmethod
    def single(cls, key: Hashable, coeff=1) -> "FormalSum":
        return cls([(key, Fraction(coeff))])

    @classmethod
    def zero(cls) -> "FormalSum":
        return cls()

    def items(self) -> Iterator[tuple[Hashable, Fraction]]:
        return iter(sorted(self._terms.items(), key=lambda kv: repr(kv[0])))

    def coeff(self, key: Hashable) -> Fraction:
        return self._terms.get(key, Fraction(0))

    def keys(self):
        return self._terms.keys()

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __add__(self, other: "FormalSum") -> "FormalSum":
        acc = dict(self._terms)
        for k, v in other._terms.items():
            acc[k] = acc.get(k, Fraction(0)) + v
            if not acc[k]:
                del acc[k]
        out = FormalSum.zero()
        out._terms = acc
        return out

    def __sub__(self, other: "FormalSum") -> "FormalSum":
        return self + (-1) * other

    def __rmul__(self, scalar) -> "FormalSum":
        scalar = Fraction(scalar)
        if not scalar:
            return FormalSum.zero()
        out = FormalSum.zero()
        out._terms = {k: scalar * v for k, v in self._terms.items()}
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, FormalSum) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def map_keys(self, fn: Callable[[Hashable], Hashable]) -> "FormalSum":
        return FormalSum((fn(k), v) for k, v in self._terms.items())

    def filter_keys(self, keep: Callable[[Hashable], bool]) -> "FormalSum":
        return FormalSum((k, v) for k, v in self._terms.items() if keep(k))

    def bind(self, fn: Callable[[Hashable], "FormalSum"]) -> "FormalSum":
        """Substitute each key by a formal sum and expand linearly."""
        out = FormalSum.zero()
        for k, v in self._terms.items():
            out = out + v * fn(k)
        return out

    def tensor(self, other: "FormalSum") -> "FormalSum":
        """Concatenate tuple keys slotwise."""
        out: dict = {}
        for k1, v1 in self._terms.items():
            for k2, v2 in other._terms.items():
                key = tuple(k1) + tuple(k2)
                out[key] = out.get(key, Fraction(0)) + v1 * v2
                if not out[key]:
                    del out[key]
        res = FormalSum.zero()
        res._terms = out
        return res

    def __repr__(self) -> str:
        if not self._terms:
            return "FormalSum(0)"
        bits = [f"{v}*{k!r}" for k, v in list(self.items())[:4]]
        more = "" if len(self._terms) <= 4 else f" ... ({len(self._terms)} terms)"
        return "FormalSum(" + " + ".join(bits) + more + ")"
