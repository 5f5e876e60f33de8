"""Truncated multivariate power-series algebra over spatial displacement variables.

A :class:`TruncatedSeries` holds the Taylor coefficients of a smooth function
of a displacement ``dz = (dz1, ..., dzn)`` around some base point, up to a
fixed total degree.  Sums, products and the elementary functions ``sin``,
``cos`` and ``exp`` are closed on the truncated algebra, so any quantity
computed through it carries its own derivatives exactly (no finite
differencing anywhere).

Derivative tensors are read out of a series either as plain numbers
(:func:`extract_multilinear`) or as series-valued entries that still depend
on the displacement (:func:`partial_derivative_map`).
"""

from __future__ import annotations

import math
from itertools import product
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "StructureError",
    "TruncatedSeries",
    "MultilinearMap",
    "extract_multilinear",
    "partial_derivative_map",
    "series_vector",
    "constant_part",
]


class StructureError(ValueError):
    """Operands are structurally incompatible (dimension, order or arity)."""


def _validate_index(alpha, num_vars: int, max_order: int) -> tuple[int, ...]:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != num_vars:
        raise StructureError(f"multi-index {alpha} has {len(alpha)} entries, expected {num_vars}")
    if any(a < 0 for a in alpha):
        raise StructureError(f"multi-index {alpha} has a negative entry")
    if sum(alpha) > max_order:
        raise StructureError(f"multi-index {alpha} exceeds max_order {max_order}")
    return alpha


class TruncatedSeries:
    """Polynomial in dz1..dzn with all terms of total degree > max_order dropped.

    Instances are immutable; every operation returns a fresh series.  Zero
    coefficients are never stored, so two series with the same coefficient
    content compare equal.
    """

    __slots__ = ("num_vars", "max_order", "_coeffs")

    def __init__(self, num_vars: int, max_order: int, coeffs: Mapping | None = None):
        if num_vars < 1:
            raise StructureError("num_vars must be positive")
        if max_order < 0:
            raise StructureError("max_order must be non-negative")
        self.num_vars = int(num_vars)
        self.max_order = int(max_order)
        clean: dict[tuple[int, ...], float] = {}
        if coeffs:
            for alpha, value in coeffs.items():
                alpha = _validate_index(alpha, self.num_vars, self.max_order)
                v = float(value)
                if v != 0.0:
                    clean[alpha] = v
        self._coeffs = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, num_vars: int, max_order: int, value: float) -> "TruncatedSeries":
        return cls(num_vars, max_order, {(0,) * num_vars: float(value)})

    @classmethod
    def zero(cls, num_vars: int, max_order: int) -> "TruncatedSeries":
        return cls(num_vars, max_order)

    @classmethod
    def variable(cls, num_vars: int, max_order: int, index: int, base: float = 0.0) -> "TruncatedSeries":
        """Series ``base + dz[index]`` (the displacement jet of a coordinate)."""
        if not 0 <= index < num_vars:
            raise StructureError(f"variable index {index} out of range for {num_vars} variables")
        coeffs = {(0,) * num_vars: float(base)}
        if max_order >= 1:
            unit = tuple(1 if j == index else 0 for j in range(num_vars))
            coeffs[unit] = 1.0
        return cls(num_vars, max_order, coeffs)

    # -- inspection ---------------------------------------------------

    @property
    def coefficients(self) -> Mapping[tuple[int, ...], float]:
        return MappingProxyType(self._coeffs)

    @property
    def constant(self) -> float:
        return self._coeffs.get((0,) * self.num_vars, 0.0)

    def coefficient(self, alpha) -> float:
        alpha = _validate_index(alpha, self.num_vars, self.max_order)
        return self._coeffs.get(alpha, 0.0)

    def is_zero(self) -> bool:
        return not self._coeffs

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self._coeffs.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (
            self.num_vars == other.num_vars
            and self.max_order == other.max_order
            and self._coeffs == other._coeffs
        )

    __hash__ = None  # mutable-looking payload; identity hashing would be a trap

    def __repr__(self) -> str:
        if self.is_zero():
            body = "0"
        else:
            terms = []
            for alpha in sorted(self._coeffs, key=lambda a: (sum(a), a)):
                factors = [f"{self._coeffs[alpha]:g}"]
                factors += [
                    f"dz{j + 1}" + (f"^{a}" if a > 1 else "")
                    for j, a in enumerate(alpha)
                    if a > 0
                ]
                terms.append("*".join(factors))
            body = " + ".join(terms)
        return f"TruncatedSeries({body}; n={self.num_vars}, order<={self.max_order})"

    # -- structure helpers ---------------------------------------------

    def _check_compatible(self, other: "TruncatedSeries") -> None:
        if self.num_vars != other.num_vars or self.max_order != other.max_order:
            raise StructureError(
                f"incompatible series: (n={self.num_vars}, d={self.max_order}) vs "
                f"(n={other.num_vars}, d={other.max_order})"
            )

    def with_max_order(self, max_order: int) -> "TruncatedSeries":
        """Same polynomial under a different truncation order.

        Raising the order is a plain relabelling; lowering it drops the
        coefficients above the new order.
        """
        if max_order == self.max_order:
            return self
        kept = {a: v for a, v in self._coeffs.items() if sum(a) <= max_order}
        return TruncatedSeries(self.num_vars, max_order, kept)

    # -- ring operations ----------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TruncatedSeries.constant(self.num_vars, self.max_order, other)
        elif not isinstance(other, TruncatedSeries):
            return NotImplemented
        self._check_compatible(other)
        out = dict(self._coeffs)
        for alpha, v in other._coeffs.items():
            out[alpha] = out.get(alpha, 0.0) + v
        return TruncatedSeries(self.num_vars, self.max_order, out)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-float(other))
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return TruncatedSeries(
            self.num_vars, self.max_order, {a: -v for a, v in self._coeffs.items()}
        )

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)
            return TruncatedSeries(
                self.num_vars, self.max_order, {a: v * c for a, v in self._coeffs.items()}
            )
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        self._check_compatible(other)
        out: dict[tuple[int, ...], float] = {}
        for a1, v1 in self._coeffs.items():
            d1 = sum(a1)
            for a2, v2 in other._coeffs.items():
                if d1 + sum(a2) > self.max_order:
                    continue
                a = tuple(x + y for x, y in zip(a1, a2))
                out[a] = out.get(a, 0.0) + v1 * v2
        return TruncatedSeries(self.num_vars, self.max_order, out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            raise StructureError("series powers must use non-negative integer exponents")
        out = TruncatedSeries.constant(self.num_vars, self.max_order, 1.0)
        for _ in range(exponent):
            out = out * self
        return out

    # -- calculus ------------------------------------------------------

    def partial(self, var: int) -> "TruncatedSeries":
        """Formal partial derivative; the result order drops by one."""
        if not 0 <= var < self.num_vars:
            raise StructureError(f"variable index {var} out of range for {self.num_vars} variables")
        new_order = max(self.max_order - 1, 0)
        out: dict[tuple[int, ...], float] = {}
        for alpha, v in self._coeffs.items():
            e = alpha[var]
            if e == 0:
                continue
            beta = alpha[:var] + (e - 1,) + alpha[var + 1 :]
            if sum(beta) <= new_order:
                out[beta] = out.get(beta, 0.0) + v * e
        return TruncatedSeries(self.num_vars, new_order, out)

    def eval(self, point: Sequence[float]) -> float:
        """Evaluate the truncated polynomial at the displacement ``point``."""
        if len(point) != self.num_vars:
            raise StructureError(
                f"point has {len(point)} entries, expected {self.num_vars}"
            )
        total = 0.0
        for alpha, v in self._coeffs.items():
            term = v
            for x, e in zip(point, alpha):
                if e:
                    term *= float(x) ** e
            total += term
        return total

    # -- elementary functions -------------------------------------------

    def _taylor_apply(self, derivs: Sequence[float]) -> "TruncatedSeries":
        # sum_q derivs[q]/q! * nu^q with nu the nilpotent (non-constant) part
        nu = self - self.constant
        out = TruncatedSeries.constant(self.num_vars, self.max_order, derivs[0])
        power = TruncatedSeries.constant(self.num_vars, self.max_order, 1.0)
        fact = 1.0
        for q in range(1, len(derivs)):
            power = power * nu
            if power.is_zero():
                break
            fact *= q
            out = out + power * (derivs[q] / fact)
        return out

    def sin(self) -> "TruncatedSeries":
        c = self.constant
        cycle = (math.sin(c), math.cos(c), -math.sin(c), -math.cos(c))
        return self._taylor_apply([cycle[q % 4] for q in range(self.max_order + 1)])

    def cos(self) -> "TruncatedSeries":
        c = self.constant
        cycle = (math.cos(c), -math.sin(c), -math.cos(c), math.sin(c))
        return self._taylor_apply([cycle[q % 4] for q in range(self.max_order + 1)])

    def exp(self) -> "TruncatedSeries":
        e = math.exp(self.constant)
        return self._taylor_apply([e] * (self.max_order + 1))


class MultilinearMap:
    """Symmetric m-linear map R^n x ... x R^n -> R^n stored densely.

    ``entries[i1, ..., im]`` is the output vector picked out by the input
    coordinate indices; arity 0 degenerates to a plain vector.  Entries may be
    floats or :class:`TruncatedSeries` (the latter when the map itself still
    depends on the displacement).
    """

    __slots__ = ("arity", "dim", "entries")

    def __init__(self, arity: int, dim: int, entries: np.ndarray):
        if arity < 0 or dim < 1:
            raise StructureError("arity must be >= 0 and dim >= 1")
        entries = np.asarray(entries)
        if entries.shape != (dim,) * arity + (dim,):
            raise StructureError(
                f"entries shape {entries.shape} does not match arity {arity}, dim {dim}"
            )
        self.arity = int(arity)
        self.dim = int(dim)
        self.entries = entries

    def apply(self, args: Sequence[Sequence]) -> np.ndarray:
        """Contract the map against ``arity`` input vectors."""
        if len(args) != self.arity:
            raise StructureError(f"expected {self.arity} arguments, got {len(args)}")
        for a in args:
            if len(a) != self.dim:
                raise StructureError(f"argument of length {len(a)}, expected {self.dim}")
        if self.arity == 0:
            return np.array(self.entries, copy=True)
        acc = None
        for idx in product(range(self.dim), repeat=self.arity):
            w = args[0][idx[0]]
            for q in range(1, self.arity):
                w = w * args[q][idx[q]]
            if _scalar_is_zero(w):
                continue
            term = self.entries[idx] * w
            acc = term if acc is None else acc + term
        if acc is None:
            # every weight vanished; synthesize a zero of the entry kind
            acc = self.entries[(0,) * self.arity] * 0.0
        return acc

    def __repr__(self) -> str:
        return f"MultilinearMap(arity={self.arity}, dim={self.dim})"


def _scalar_is_zero(w) -> bool:
    if isinstance(w, (int, float)):
        return w == 0.0
    is_zero = getattr(w, "is_zero", None)
    return bool(is_zero()) if is_zero is not None else False


def series_vector(components: Iterable[TruncatedSeries]) -> np.ndarray:
    """Pack series into a 1-D object array so vector arithmetic broadcasts."""
    comps = list(components)
    out = np.empty(len(comps), dtype=object)
    out[:] = comps
    return out


def constant_part(vec: Sequence) -> np.ndarray:
    """Numeric vector of constant terms (identity on float arrays)."""
    return np.array(
        [v.constant if isinstance(v, TruncatedSeries) else float(v) for v in vec]
    )


def _check_components(components: Sequence[TruncatedSeries]) -> tuple[int, int]:
    if not components:
        raise StructureError("need at least one component series")
    n = components[0].num_vars
    d = components[0].max_order
    for s in components:
        if s.num_vars != n or s.max_order != d:
            raise StructureError("component series disagree on (num_vars, max_order)")
    return n, d


def extract_multilinear(components: Sequence[TruncatedSeries], m: int) -> MultilinearMap:
    """Degree-m Taylor data of a series-valued vector field as an m-linear map.

    Normalization: applying the result to m copies of ``u`` reproduces
    ``m!`` times the degree-m homogeneous part of the series at ``dz = u``,
    i.e. the entries are the plain mixed partial derivatives at the base
    point.
    """
    n, d = _check_components(components)
    if m < 0:
        raise StructureError("arity must be non-negative")
    if m > d:
        raise StructureError(f"arity {m} exceeds series order {d}")
    dim = len(components)
    if dim != n:
        raise StructureError(f"{dim} components for {n} variables; expected a square field")
    entries = np.zeros((n,) * m + (n,))
    for idx in product(range(n), repeat=m):
        alpha = [0] * n
        for i in idx:
            alpha[i] += 1
        fact = 1.0
        for a in alpha:
            fact *= math.factorial(a)
        for c, s in enumerate(components):
            v = s.coefficient(tuple(alpha))
            if v:
                entries[idx + (c,)] = v * fact
    return MultilinearMap(m, n, entries)


def partial_derivative_map(components: Sequence[TruncatedSeries], m: int) -> MultilinearMap:
    """m-th derivative of a series-valued field, entries still displacement-dependent.

    Each entry is the corresponding mixed formal partial of the component
    series, re-embedded at the input truncation order so the map composes
    with order-d arithmetic.  Evaluating the entries at ``dz = 0`` recovers
    :func:`extract_multilinear` of the same data.
    """
    n, d = _check_components(components)
    if m < 0:
        raise StructureError("arity must be non-negative")
    if m > d:
        raise StructureError(f"arity {m} exceeds series order {d}")
    dim = len(components)
    if dim != n:
        raise StructureError(f"{dim} components for {n} variables; expected a square field")
    entries = np.empty((n,) * m + (n,), dtype=object)
    memo: dict[tuple[int, tuple[int, ...]], TruncatedSeries] = {}
    for idx in product(range(n), repeat=m):
        key_idx = tuple(sorted(idx))
        for c, s in enumerate(components):
            key = (c, key_idx)
            der = memo.get(key)
            if der is None:
                der = s
                for var in key_idx:
                    der = der.partial(var)
                der = der.with_max_order(d)
                memo[key] = der
            entries[idx + (c,)] = der
    return MultilinearMap(m, n, entries)
