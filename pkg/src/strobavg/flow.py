"""Displacement-map computation via integration over a graded series algebra.

The state of the ODE family x' = sum_i eps^i F_i(t, x) is propagated as a
joint expansion: each state component is a :class:`GradedSeries`, a
polynomial in the perturbation size eps (truncated at the family order k)
whose coefficients are :class:`TruncatedSeries` jets in the spatial
displacement around the initial point.  One fixed-step fourth-order
Runge-Kutta pass over [0, T] therefore yields, in a single sweep, the
displacement map

    Delta(z + dz, eps) = x(T) - (z + dz) = sum_i eps^i f_i(z + dz)

with every f_i carried as a full spatial jet.  The constant terms are the
displacement-map coefficients at z; the jets feed derivative tensors and the
averaged-function recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .sysdsl import SystemSpec, eval_ast
from .tpsa import (
    MultilinearMap,
    StructureError,
    TruncatedSeries,
    extract_multilinear,
    series_vector,
)

__all__ = [
    "IntegrationError",
    "GradedSeries",
    "EpsGradedState",
    "graded_rhs",
    "integrate_displacement",
    "displacement_at_eps",
    "MelnikovTable",
    "DEFAULT_STEPS",
]

DEFAULT_STEPS = 2000


class IntegrationError(RuntimeError):
    """The integration produced non-finite values (field blow-up)."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class GradedSeries:
    """Truncated polynomial in the perturbation size with jet coefficients.

    ``parts[i]`` is the coefficient of eps^i, a :class:`TruncatedSeries`
    over the spatial displacement.  All parts share (num_vars, max_order);
    multiplication convolves the eps grading and drops powers beyond the
    grading order.  Immutable, like everything in the algebra stack.
    """

    __slots__ = ("parts",)

    def __init__(self, parts: Sequence[TruncatedSeries]):
        parts = tuple(parts)
        if not parts:
            raise StructureError("graded series needs at least the eps^0 part")
        n, d = parts[0].num_vars, parts[0].max_order
        for p in parts:
            if p.num_vars != n or p.max_order != d:
                raise StructureError("graded parts disagree on (num_vars, max_order)")
        self.parts = parts

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, num_vars: int, max_order: int, eps_order: int, value: float) -> "GradedSeries":
        parts = [TruncatedSeries.constant(num_vars, max_order, value)]
        parts += [TruncatedSeries.zero(num_vars, max_order) for _ in range(eps_order)]
        return cls(parts)

    @classmethod
    def from_series(cls, series: TruncatedSeries, eps_order: int) -> "GradedSeries":
        parts = [series] + [
            TruncatedSeries.zero(series.num_vars, series.max_order) for _ in range(eps_order)
        ]
        return cls(parts)

    # -- inspection -----------------------------------------------------

    @property
    def num_vars(self) -> int:
        return self.parts[0].num_vars

    @property
    def max_order(self) -> int:
        return self.parts[0].max_order

    @property
    def eps_order(self) -> int:
        return len(self.parts) - 1

    def is_finite(self) -> bool:
        return all(p.is_finite() for p in self.parts)

    def __eq__(self, other):
        if not isinstance(other, GradedSeries):
            return NotImplemented
        return self.parts == other.parts

    __hash__ = None

    def __repr__(self) -> str:
        return f"GradedSeries(eps_order={self.eps_order}, n={self.num_vars}, d={self.max_order})"

    def _check(self, other: "GradedSeries"):
        if (
            self.eps_order != other.eps_order
            or self.num_vars != other.num_vars
            or self.max_order != other.max_order
        ):
            raise StructureError("graded series shapes differ")

    def _lift(self, value) -> "GradedSeries":
        return GradedSeries.constant(self.num_vars, self.max_order, self.eps_order, value)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = self._lift(other)
        elif not isinstance(other, GradedSeries):
            return NotImplemented
        self._check(other)
        return GradedSeries([a + b for a, b in zip(self.parts, other.parts)])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-float(other))
        if not isinstance(other, GradedSeries):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return GradedSeries([-p for p in self.parts])

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)
            return GradedSeries([p * c for p in self.parts])
        if not isinstance(other, GradedSeries):
            return NotImplemented
        self._check(other)
        k = self.eps_order
        zero = TruncatedSeries.zero(self.num_vars, self.max_order)
        out = [zero] * (k + 1)
        for i, a in enumerate(self.parts):
            if a.is_zero():
                continue
            for j in range(k + 1 - i):
                b = other.parts[j]
                if b.is_zero():
                    continue
                out[i + j] = out[i + j] + a * b
        return GradedSeries(out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            raise StructureError("graded powers must use non-negative integer exponents")
        out = self._lift(1.0)
        for _ in range(exponent):
            out = out * self
        return out

    def shift(self, amount: int) -> "GradedSeries":
        """Multiply by eps^amount, dropping powers beyond the grading order."""
        if amount < 0:
            raise StructureError("shift amount must be non-negative")
        zero = TruncatedSeries.zero(self.num_vars, self.max_order)
        k = self.eps_order
        parts = [zero] * min(amount, k + 1) + list(self.parts[: max(k + 1 - amount, 0)])
        return GradedSeries(parts[: k + 1])

    # -- elementary functions ----------------------------------------------

    def _taylor_apply(self, derivs_of: str) -> "GradedSeries":
        c = self.parts[0].constant
        if derivs_of == "sin":
            cycle = (math.sin(c), math.cos(c), -math.sin(c), -math.cos(c))
        elif derivs_of == "cos":
            cycle = (math.cos(c), -math.sin(c), -math.cos(c), math.sin(c))
        else:
            e = math.exp(c)
            cycle = (e, e, e, e)
        # nilpotency: terms of nu carry eps-degree + spatial degree >= 1
        nmax = self.eps_order + self.max_order
        nu = self - c
        out = self._lift(cycle[0])
        power = self._lift(1.0)
        fact = 1.0
        for q in range(1, nmax + 1):
            power = power * nu
            if all(p.is_zero() for p in power.parts):
                break
            fact *= q
            out = out + power * (cycle[q % 4] / fact)
        return out

    def sin(self) -> "GradedSeries":
        return self._taylor_apply("sin")

    def cos(self) -> "GradedSeries":
        return self._taylor_apply("cos")

    def exp(self) -> "GradedSeries":
        return self._taylor_apply("exp")


@dataclass(frozen=True)
class EpsGradedState:
    """State vector of the graded integration: one GradedSeries per component."""

    components: tuple[GradedSeries, ...]

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def eps_order(self) -> int:
        return self.components[0].eps_order

    @property
    def entries(self) -> tuple[tuple[TruncatedSeries, ...], ...]:
        return tuple(c.parts for c in self.components)

    def __add__(self, other: "EpsGradedState") -> "EpsGradedState":
        return EpsGradedState(
            tuple(a + b for a, b in zip(self.components, other.components))
        )

    def scale(self, c: float) -> "EpsGradedState":
        return EpsGradedState(tuple(g * c for g in self.components))

    def is_finite(self) -> bool:
        return all(g.is_finite() for g in self.components)


def _initial_state(z0: Sequence[float], dim: int, d: int, k: int) -> EpsGradedState:
    comps = []
    for c in range(dim):
        jet = TruncatedSeries.variable(dim, d, c, base=float(z0[c]))
        comps.append(GradedSeries.from_series(jet, k))
    return EpsGradedState(tuple(comps))


def graded_rhs(s: SystemSpec, t: float, x: EpsGradedState) -> EpsGradedState:
    """Right-hand side sum_i eps^i F_i(t, x) over the graded algebra."""
    n = s.dim
    k = x.eps_order
    d = x.components[0].max_order
    out = [GradedSeries.constant(n, d, k, 0.0) for _ in range(n)]
    for power, comps in s.fields.items():
        if power > k:
            continue  # contributes only beyond the truncation order
        for c in range(n):
            v = eval_ast(comps[c], t, x.components)
            if isinstance(v, (int, float)):
                v = GradedSeries.constant(n, d, k, v)
            out[c] = out[c] + v.shift(power)
    return EpsGradedState(tuple(out))


def _rk4(rhs, state, T: float, steps: int):
    """Classic fixed-step RK4; works over any state supporting + and scale."""
    h = T / steps
    for step in range(steps):
        t = step * h
        k1 = rhs(t, state)
        k2 = rhs(t + h / 2, state + k1.scale(h / 2))
        k3 = rhs(t + h / 2, state + k2.scale(h / 2))
        k4 = rhs(t + h, state + k3.scale(h))
        state = state + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6)
        if not state.is_finite():
            raise IntegrationError(
                f"non-finite state after step {step + 1} of {steps} (t = {t + h:.6g})",
                step=step + 1,
            )
    return state


@dataclass(frozen=True)
class MelnikovTable:
    """Displacement-map coefficients f_i and their derivative tensors at a point.

    ``series[i]`` is the full spatial jet of f_i around the base point (one
    TruncatedSeries per state component); ``f[i]`` its value and
    ``derivs[i][m]`` the m-th derivative as a symmetric multilinear map, with
    m ranging from 0 to the order the jet supports (k - i at the default
    spatial order).
    """

    base_point: np.ndarray
    order: int
    period: float
    series: Mapping[int, tuple[TruncatedSeries, ...]]
    f: Mapping[int, np.ndarray]
    derivs: Mapping[int, Mapping[int, MultilinearMap]]

    @property
    def spatial_order(self) -> int:
        return self.series[1][0].max_order

    def jet_vector(self, i: int) -> np.ndarray:
        return series_vector(self.series[i])


def _table_from_jets(
    z0: np.ndarray, k: int, T: float, jets: dict[int, tuple[TruncatedSeries, ...]]
) -> MelnikovTable:
    d = jets[1][0].max_order
    values: dict[int, np.ndarray] = {}
    derivs: dict[int, dict[int, MultilinearMap]] = {}
    for i in range(1, k + 1):
        comps = list(jets[i])
        values[i] = np.array([c.constant for c in comps])
        arity_cap = min(max(k - i, 0), d)
        derivs[i] = {m: extract_multilinear(comps, m) for m in range(arity_cap + 1)}
    return MelnikovTable(
        base_point=np.asarray(z0, dtype=float),
        order=k,
        period=T,
        series={i: tuple(jets[i]) for i in jets},
        f=values,
        derivs=derivs,
    )


def integrate_displacement(
    s: SystemSpec,
    z0: Sequence[float],
    spatial_order: int | None = None,
    steps: int = DEFAULT_STEPS,
    order: int | None = None,
) -> MelnikovTable:
    """Integrate the family over one period and expand the displacement map.

    ``spatial_order`` defaults to k - 1, the minimal jet depth that supports
    every derivative the averaged-function recursion consumes; consumers
    should only request derivative arity up to k - i for the eps^i block.
    ``order`` truncates the expansion below the system's declared order
    (fields beyond it cannot influence the retained coefficients).
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (s.dim,):
        raise StructureError(f"initial point shape {z0.shape}, expected ({s.dim},)")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    k = s.order if order is None else int(order)
    if not 1 <= k <= s.order:
        raise ValueError(f"order must satisfy 1 <= order <= {s.order}, got {k}")
    d = max(k - 1, 0) if spatial_order is None else int(spatial_order)
    if d < 0:
        raise ValueError("spatial_order must be non-negative")

    init = _initial_state(z0, s.dim, d, k)
    final = _rk4(lambda t, x: graded_rhs(s, t, x), init, s.period, steps)

    jets: dict[int, tuple[TruncatedSeries, ...]] = {}
    for i in range(1, k + 1):
        jets[i] = tuple(
            final.components[c].parts[i] - init.components[c].parts[i]
            for c in range(s.dim)
        )
    # the eps^0 block never moves: the unperturbed flow is the identity
    for c in range(s.dim):
        residual = final.components[c].parts[0] - init.components[c].parts[0]
        if not residual.is_zero():
            raise IntegrationError(
                "unperturbed component drifted; the family must start at eps^1"
            )
    return _table_from_jets(z0, k, s.period, jets)


def displacement_at_eps(
    s: SystemSpec,
    z0: Sequence[float],
    eps: float,
    steps: int = DEFAULT_STEPS,
    spatial_order: int = 1,
) -> tuple[TruncatedSeries, ...]:
    """Displacement map of the full system at a concrete perturbation size.

    Integrates x' = sum_i eps^i F_i(t, x) with the state carried as spatial
    jets of the requested order, so the return value exposes both the
    displacement and (at order >= 1) its Jacobian in the initial condition.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (s.dim,):
        raise StructureError(f"initial point shape {z0.shape}, expected ({s.dim},)")
    weights = {i: float(eps) ** i for i in s.fields}

    class _JetState:
        __slots__ = ("comps",)

        def __init__(self, comps):
            self.comps = tuple(comps)

        def __add__(self, other):
            return _JetState(a + b for a, b in zip(self.comps, other.comps))

        def scale(self, c):
            return _JetState(a * c for a in self.comps)

        def is_finite(self):
            return all(a.is_finite() for a in self.comps)

    def rhs(t, state):
        out = []
        for c in range(s.dim):
            acc = TruncatedSeries.zero(s.dim, spatial_order)
            for power, comps in s.fields.items():
                v = eval_ast(comps[c], t, state.comps)
                if isinstance(v, (int, float)):
                    v = TruncatedSeries.constant(s.dim, spatial_order, v)
                acc = acc + v * weights[power]
            out.append(acc)
        return _JetState(out)

    init = _JetState(
        TruncatedSeries.variable(s.dim, spatial_order, c, base=z0[c]) for c in range(s.dim)
    )
    final = _rk4(rhs, init, s.period, steps)
    return tuple(final.comps[c] - init.comps[c] for c in range(s.dim))
