"""Partial Bell polynomials applied through multilinear maps, over time polynomials.

The combinatorial layer enumerates the partition structure of ``B_{j,m}``
with exact integer coefficients.  The analytic layer applies a symmetric
m-linear map slotwise to vector-valued polynomials in the time variable,
forming the monomial products in ``t`` first and contracting afterwards, and
integrates the resulting polynomial exactly (either up to a numeric upper
limit or symbolically, keeping ``t`` free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np

from .tpsa import MultilinearMap, StructureError, _scalar_is_zero

__all__ = [
    "PartitionTerm",
    "enumerate_partitions",
    "TimePoly",
    "bell_apply",
    "timepoly_integrate",
    "SYMBOLIC_T",
]

#: Sentinel upper limit selecting symbolic integration in :func:`timepoly_integrate`.
SYMBOLIC_T = "t"


@dataclass(frozen=True)
class PartitionTerm:
    """One monomial of a partial Bell polynomial.

    ``block_counts[i-1]`` is the number of blocks of size ``i``; the
    coefficient is the exact count of set partitions of {1..j} with that
    block-size profile, j!/(prod b_i! * prod (i!)^b_i).
    """

    block_counts: tuple[int, ...]
    coefficient: int


def enumerate_partitions(j: int, m: int) -> list[PartitionTerm]:
    """All block-size profiles of partitions of {1..j} into m blocks.

    Profiles ``b`` satisfy sum(b) == m and sum(i * b_i) == j with
    ``len(b) == j - m + 1``; the list is in lexicographic order of ``b``.
    """
    if j < 1 or m < 1 or m > j:
        raise StructureError(f"invalid Bell indices (j={j}, m={m}); need 1 <= m <= j")
    width = j - m + 1
    terms: list[PartitionTerm] = []

    def fill(pos: int, blocks_left: int, weight_left: int, prefix: list[int]) -> None:
        if pos == width:
            if blocks_left == 0 and weight_left == 0:
                terms.append(_make_term(tuple(prefix), j))
            return
        size = pos + 1
        for b in range(blocks_left + 1):
            w = weight_left - b * size
            rest = blocks_left - b
            # sizes size+1..width must absorb exactly w with rest blocks
            if w < rest * (size + 1) or w > rest * width:
                continue
            prefix.append(b)
            fill(pos + 1, rest, w, prefix)
            prefix.pop()

    fill(0, m, j, [])
    return terms


def _make_term(b: tuple[int, ...], j: int) -> PartitionTerm:
    denom = 1
    for i, bi in enumerate(b, start=1):
        denom *= math.factorial(bi) * math.factorial(i) ** bi
    coeff, rem = divmod(math.factorial(j), denom)
    assert rem == 0
    return PartitionTerm(b, coeff)


class TimePoly:
    """Polynomial in the time variable with vector coefficients.

    Coefficients are 1-D arrays over R^n, or object arrays of series when the
    computation carries displacement dependence.  Trailing zero coefficients
    are trimmed, so the zero polynomial has an empty coefficient tuple.
    """

    __slots__ = ("dim", "coeffs")

    def __init__(self, dim: int, coeffs: Sequence[np.ndarray] = ()):
        if dim < 1:
            raise StructureError("dim must be positive")
        self.dim = int(dim)
        clean = [np.asarray(c) for c in coeffs]
        for c in clean:
            if c.shape != (self.dim,):
                raise StructureError(f"coefficient shape {c.shape}, expected ({self.dim},)")
        while clean and _vector_is_zero(clean[-1]):
            clean.pop()
        self.coeffs = tuple(clean)

    @classmethod
    def zero(cls, dim: int) -> "TimePoly":
        return cls(dim)

    @classmethod
    def monomial(cls, vec, power: int) -> "TimePoly":
        """``vec * t**power``."""
        vec = np.asarray(vec)
        zero = vec * 0.0
        return cls(len(vec), [zero] * power + [vec])

    @property
    def degree(self) -> int:
        """Degree of the polynomial; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, power: int) -> np.ndarray:
        if 0 <= power < len(self.coeffs):
            return self.coeffs[power]
        return np.zeros(self.dim)

    def __add__(self, other):
        if not isinstance(other, TimePoly):
            return NotImplemented
        if self.dim != other.dim:
            raise StructureError("time polynomials of different dimension")
        longer, shorter = (self.coeffs, other.coeffs)
        if len(longer) < len(shorter):
            longer, shorter = shorter, longer
        out = list(longer)
        for p, c in enumerate(shorter):
            out[p] = out[p] + c
        return TimePoly(self.dim, out)

    def __sub__(self, other):
        if not isinstance(other, TimePoly):
            return NotImplemented
        return self + (other * -1.0)

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float)):
            return NotImplemented
        return TimePoly(self.dim, [c * float(scalar) for c in self.coeffs])

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TimePoly):
            return NotImplemented
        if self.dim != other.dim or len(self.coeffs) != len(other.coeffs):
            return False
        return all(
            all(x == y for x, y in zip(a, b)) for a, b in zip(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __call__(self, t: float):
        """Evaluate at a numeric time."""
        if not self.coeffs:
            return np.zeros(self.dim)
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * float(t) + c
        return acc

    def constant_part(self) -> "TimePoly":
        """Project series-valued coefficients to their numeric constant terms."""
        from .tpsa import constant_part

        return TimePoly(self.dim, [constant_part(c) for c in self.coeffs])

    def __repr__(self) -> str:
        return f"TimePoly(dim={self.dim}, degree={self.degree})"


def _vector_is_zero(vec: np.ndarray) -> bool:
    return all(_scalar_is_zero(v) for v in vec)


def bell_apply(L: MultilinearMap, ys: Sequence[TimePoly]) -> TimePoly:
    """Apply an m-linear map through the partial Bell polynomial B_{j,m}.

    ``ys`` supplies the arguments y_1..y_{j-m+1} with ``j = len(ys) + m - 1``.
    Each partition profile contributes its integer coefficient times the map
    applied to the profile's multiset of arguments; the map distributes over
    the time monomials of its arguments, so the result is again a polynomial
    in t.  Any profile touching a zero polynomial drops out.
    """
    m = L.arity
    if m < 1:
        raise StructureError("bell_apply needs a map of arity >= 1")
    if not ys:
        raise StructureError("bell_apply needs at least one argument polynomial")
    for y in ys:
        if y.dim != L.dim:
            raise StructureError(
                f"argument polynomial dim {y.dim} does not match map dim {L.dim}"
            )
    j = len(ys) + m - 1
    acc: dict[int, np.ndarray] = {}
    for term in enumerate_partitions(j, m):
        slots: list[TimePoly] = []
        dead = False
        for size, count in enumerate(term.block_counts, start=1):
            if count == 0:
                continue
            y = ys[size - 1]
            if y.is_zero():
                dead = True
                break
            slots.extend([y] * count)
        if dead:
            continue
        weight = float(term.coefficient)
        for powers in product(*(range(len(y.coeffs)) for y in slots)):
            vecs = [slots[q].coeffs[powers[q]] for q in range(m)]
            if any(_vector_is_zero(v) for v in vecs):
                continue
            value = L.apply(vecs) * weight
            p = sum(powers)
            acc[p] = value if p not in acc else acc[p] + value
    if not acc:
        return TimePoly.zero(L.dim)
    top = max(acc)
    coeffs = [acc.get(p, np.zeros(L.dim)) for p in range(top + 1)]
    return TimePoly(L.dim, coeffs)


def timepoly_integrate(p: TimePoly, upper: Union[float, str]):
    """Exact monomial integration of a time polynomial from 0.

    With ``upper=SYMBOLIC_T`` the antiderivative is returned as a
    :class:`TimePoly` (degree + 1, zero constant term); with a numeric upper
    limit the definite integral is returned as a coefficient vector.
    """
    if isinstance(upper, str):
        if upper != SYMBOLIC_T:
            raise StructureError(f"unknown symbolic upper limit {upper!r}")
        if p.is_zero():
            return TimePoly.zero(p.dim)
        first = p.coeffs[0] * 0.0
        out = [first] + [c * (1.0 / (q + 1)) for q, c in enumerate(p.coeffs)]
        return TimePoly(p.dim, out)
    u = float(upper)
    total = None
    for q, c in enumerate(p.coeffs):
        term = c * (u ** (q + 1) / (q + 1))
        total = term if total is None else total + term
    if total is None:
        return np.zeros(p.dim)
    return total
