"""Conversion between displacement-map and averaged-function families.

The two families are linked level by level: the eps^i averaged function g_i
differs from f_i / T by a correction built from partial Bell polynomials of
the auxiliary time polynomials ytilde_1..ytilde_{i-1}, contracted through
derivative tensors of the lower averaged functions.  Running that recursion
over displacement-carrying jets gives every g_i together with its spatial
derivatives, exactly within the truncation order; no finite differencing is
involved at any level.

On top of the two conversion directions this module provides the identity
checker (f_i = T g_i through order 2l - 1 when the first l - 1 levels
vanish, plus the explicit order-2l closure) and a Newton search for periodic
orbits seeded by simple zeros of the first non-vanishing averaged function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bell import SYMBOLIC_T, TimePoly, bell_apply, timepoly_integrate
from .flow import MelnikovTable, _table_from_jets, displacement_at_eps, integrate_displacement
from .sysdsl import SystemSpec
from .tpsa import (
    MultilinearMap,
    StructureError,
    TruncatedSeries,
    extract_multilinear,
    partial_derivative_map,
    series_vector,
)

__all__ = [
    "AveragedTable",
    "averaged_from_melnikov",
    "melnikov_from_averaged",
    "compute_ytilde",
    "VerifyConfig",
    "VerificationReport",
    "SampleCheck",
    "verify_proposition",
    "OrbitConfig",
    "OrbitReport",
    "OrbitValidation",
    "find_periodic_orbit",
    "DegenerateZeroError",
    "NewtonError",
]


class DegenerateZeroError(RuntimeError):
    """The averaged function has a singular Jacobian at the candidate zero."""


class NewtonError(RuntimeError):
    """Newton iteration failed to converge; carries the residual trace."""

    def __init__(self, message: str, residual_history: Sequence[float]):
        self.residual_history = tuple(residual_history)
        super().__init__(message)


# -- derivative-map cache -----------------------------------------------------


class _DerivMaps:
    """Lazily built displacement-dependent derivative maps of the g jets."""

    def __init__(self, jets: Mapping[int, np.ndarray]):
        self.jets = jets
        self._cache: dict[tuple[int, int], MultilinearMap] = {}

    def get(self, level: int, m: int) -> MultilinearMap:
        key = (level, m)
        if key not in self._cache:
            self._cache[key] = partial_derivative_map(list(self.jets[level]), m)
        return self._cache[key]


def _correction_sum(i, j_max, ytilde, maps, T):
    """sum_{j<=j_max} sum_{m<=j} (1/j!) d^m g_{i-j} applied through B_{j,m}, integrated over a period."""
    total = None
    for j in range(1, j_max + 1):
        for m in range(1, j + 1):
            ys = [ytilde[a] for a in range(1, j - m + 2)]
            poly = bell_apply(maps.get(i - j, m), ys)
            if poly.is_zero():
                continue
            contrib = timepoly_integrate(poly, T) * (1.0 / math.factorial(j))
            total = contrib if total is None else total + contrib
    return total


def _ytilde_level(i, g_jets, ytilde, maps):
    """ytilde_i = i! t g_i + sum_{j,m} (i!/j!) d^m g_{i-j} applied through the
    running antiderivative of B_{j,m}(ytilde_1..ytilde_{j-m+1})."""
    poly = TimePoly.monomial(g_jets[i] * float(math.factorial(i)), 1)
    for j in range(1, i):
        for m in range(1, j + 1):
            ys = [ytilde[a] for a in range(1, j - m + 2)]
            inner = bell_apply(maps.get(i - j, m), ys)
            if inner.is_zero():
                continue
            integrated = timepoly_integrate(inner, SYMBOLIC_T)
            poly = poly + integrated * float(math.factorial(i) // math.factorial(j))
    return poly


# -- averaged table ---------------------------------------------------------------


@dataclass(frozen=True)
class AveragedTable:
    """Averaged functions g_i with derivative tensors and time polynomials.

    Mirrors :class:`strobavg.flow.MelnikovTable`: ``series[i]`` is the spatial
    jet of g_i around the base point, ``g[i]`` its value, ``derivs[i][m]`` the
    m-th derivative map.  ``ytilde[i]`` is the auxiliary polynomial at the
    base point; ``ytilde_series[i]`` the displacement-carrying version the
    recursion actually runs on.
    """

    base_point: np.ndarray
    order: int
    period: float
    series: Mapping[int, tuple[TruncatedSeries, ...]]
    g: Mapping[int, np.ndarray]
    derivs: Mapping[int, Mapping[int, MultilinearMap]]
    ytilde: Mapping[int, TimePoly]
    ytilde_series: Mapping[int, TimePoly]

    @property
    def spatial_order(self) -> int:
        return self.series[1][0].max_order

    def jet_vector(self, i: int) -> np.ndarray:
        return series_vector(self.series[i])

    @classmethod
    def from_series(
        cls, base_point, period: float, series: Mapping[int, Sequence[TruncatedSeries]]
    ) -> "AveragedTable":
        """Build a full table (time polynomials included) from g jets alone."""
        order = max(series)
        if set(series) != set(range(1, order + 1)):
            raise StructureError("series must cover every level 1..k")
        jets = {i: series_vector(series[i]) for i in series}
        maps = _DerivMaps(jets)
        ytilde: dict[int, TimePoly] = {}
        for i in range(1, order + 1):
            ytilde[i] = _ytilde_level(i, jets, ytilde, maps)
        return _assemble_averaged(np.asarray(base_point, dtype=float), order, period, jets, ytilde)


def _assemble_averaged(z0, k, T, g_jets, ytilde_series) -> AveragedTable:
    d = g_jets[1][0].max_order
    values: dict[int, np.ndarray] = {}
    derivs: dict[int, dict[int, MultilinearMap]] = {}
    numeric_ytilde: dict[int, TimePoly] = {}
    for i in range(1, k + 1):
        comps = list(g_jets[i])
        values[i] = np.array([c.constant for c in comps])
        arity_cap = min(max(k - i, 0), d)
        derivs[i] = {m: extract_multilinear(comps, m) for m in range(arity_cap + 1)}
        numeric = ytilde_series[i].constant_part()
        # every term carries a factor t or an antiderivative from 0
        assert np.all(numeric.coefficient(0) == 0.0)
        numeric_ytilde[i] = numeric
    return AveragedTable(
        base_point=np.asarray(z0, dtype=float),
        order=k,
        period=T,
        series={i: tuple(g_jets[i]) for i in g_jets},
        g=values,
        derivs=derivs,
        ytilde=numeric_ytilde,
        ytilde_series=dict(ytilde_series),
    )


def compute_ytilde(i: int, table: AveragedTable) -> TimePoly:
    """Auxiliary polynomial at level i from a (possibly partial) table.

    Requires g jets for levels 1..i and ytilde for levels below i; returns
    the displacement-carrying polynomial (project with ``constant_part`` for
    the numeric version).
    """
    for level in range(1, i + 1):
        if level not in table.series:
            raise StructureError(f"table is missing the level-{level} jet")
    for level in range(1, i):
        if level not in table.ytilde_series:
            raise StructureError(f"table is missing ytilde at level {level}")
    jets = {level: table.jet_vector(level) for level in range(1, i + 1)}
    maps = _DerivMaps(jets)
    prev = {level: table.ytilde_series[level] for level in range(1, i)}
    return _ytilde_level(i, jets, prev, maps)


def _require_spatial_order(d: int, k: int, what: str):
    if d < k - 1:
        raise StructureError(
            f"{what} to order {k} needs derivative arity {k - 1}, "
            f"but the table only carries spatial order {d}"
        )


def averaged_from_melnikov(
    mel: MelnikovTable, T: float, assume_vanishing_below: int | None = None
) -> AveragedTable:
    """Averaged functions from displacement-map coefficients.

    Runs the level-by-level recursion over jets, so derivative tensors come
    out alongside the values.  ``assume_vanishing_below = l`` truncates each
    correction sum at j = i - l, the reduced form valid when the first l - 1
    levels vanish; leave it at None for the general recursion.
    """
    k = mel.order
    _require_spatial_order(mel.spatial_order, k, "averaging")
    invT = 1.0 / float(T)
    g_jets: dict[int, np.ndarray] = {}
    ytilde: dict[int, TimePoly] = {}
    maps = _DerivMaps(g_jets)
    for i in range(1, k + 1):
        j_max = i - 1 if assume_vanishing_below is None else max(i - assume_vanishing_below, 0)
        corr = _correction_sum(i, min(j_max, i - 1), ytilde, maps, float(T))
        fvec = mel.jet_vector(i)
        g_jets[i] = (fvec - corr) * invT if corr is not None else fvec * invT
        ytilde[i] = _ytilde_level(i, g_jets, ytilde, maps)
    return _assemble_averaged(mel.base_point, k, float(T), g_jets, ytilde)


def melnikov_from_averaged(avg: AveragedTable, T: float) -> MelnikovTable:
    """Displacement-map coefficients from averaged functions (inverse direction)."""
    k = avg.order
    _require_spatial_order(avg.spatial_order, k, "inverting the recursion")
    g_jets = {i: avg.jet_vector(i) for i in range(1, k + 1)}
    maps = _DerivMaps(g_jets)
    f_jets: dict[int, tuple[TruncatedSeries, ...]] = {}
    for i in range(1, k + 1):
        corr = _correction_sum(i, i - 1, avg.ytilde_series, maps, float(T))
        fvec = g_jets[i] * float(T)
        if corr is not None:
            fvec = fvec + corr
        f_jets[i] = tuple(fvec)
    return _table_from_jets(avg.base_point, k, float(T), f_jets)


# -- identity verification ----------------------------------------------------------


@dataclass(frozen=True)
class VerifyConfig:
    order: int | None = None
    spatial_order: int | None = None
    steps: int = 2000
    tol_hypothesis: float = 1e-8
    tol_identity: float = 1e-7
    tol_closure: float = 1e-6
    tol_equivalence: float = 1e-8


@dataclass(frozen=True)
class SampleCheck:
    point: tuple[float, ...]
    f: Mapping[int, tuple[float, ...]]
    g: Mapping[int, tuple[float, ...]]
    hypothesis_residual: float
    identity_residuals: Mapping[int, float]
    identity_bounds: Mapping[int, float]
    closure_residual: float | None
    equivalence_residual: float | None
    equivalence_bound: float | None
    closure_note: str | None
    verdict: str


@dataclass(frozen=True)
class VerificationReport:
    ell: int
    order: int
    period: float
    config: VerifyConfig
    samples: tuple[SampleCheck, ...]
    hypothesis_residual: float
    worst_identity_residual: float
    worst_closure_residual: float | None
    verdict: str


def _inf(vec) -> float:
    arr = np.asarray(vec, dtype=float)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def verify_proposition(
    s: SystemSpec,
    ell: int,
    z_samples: Sequence[Sequence[float]],
    config: VerifyConfig = VerifyConfig(),
) -> VerificationReport:
    """Check the proportionality identities at each sample point.

    At every point: the hypothesis (levels below l vanish), the identities
    f_i = T g_i for l <= i <= min(2l - 1, k), and, when 2l <= k, the
    order-2l closure f_{2l} = T g_{2l} + (T^2/2) dg_l . g_l together with
    the equivalent form g_{2l} = (f_{2l} - df_l . f_l / 2) / T.  A failed
    hypothesis yields the verdict "hypothesis-failed", never an exception.
    """
    k = config.order if config.order is not None else s.order
    if not 2 <= ell <= k:
        raise ValueError(f"hypothesis index must satisfy 2 <= l <= k, got l={ell}, k={k}")
    d = config.spatial_order if config.spatial_order is not None else max(k - 1, 0)
    T = s.period

    checks: list[SampleCheck] = []
    for z in z_samples:
        mel = integrate_displacement(s, z, spatial_order=d, steps=config.steps, order=k)
        avg = averaged_from_melnikov(mel, T)

        hyp = 0.0
        for i in range(1, ell):
            hyp = max(hyp, _inf(mel.f[i]), _inf(avg.g[i]))

        identity_res: dict[int, float] = {}
        identity_bnd: dict[int, float] = {}
        for i in range(ell, min(2 * ell - 1, k) + 1):
            identity_res[i] = _inf(mel.f[i] - T * avg.g[i])
            identity_bnd[i] = config.tol_identity * (1.0 + _inf(mel.f[i]))

        closure = None
        closure_note = None
        equivalence = None
        equivalence_bnd = None
        if 2 * ell <= k:
            dg_g = avg.derivs[ell][1].apply([avg.g[ell]])
            closure = _inf(mel.f[2 * ell] - T * avg.g[2 * ell] - (T**2 / 2.0) * dg_g)
            df_f = mel.derivs[ell][1].apply([mel.f[ell]])
            g2l_direct = (mel.f[2 * ell] - 0.5 * df_f) / T
            equivalence = _inf(g2l_direct - avg.g[2 * ell])
            equivalence_bnd = config.tol_equivalence * (1.0 + _inf(avg.g[2 * ell]))
        else:
            closure_note = "not computable at this order"

        if hyp > config.tol_hypothesis:
            verdict = "hypothesis-failed"
        else:
            ok = all(identity_res[i] <= identity_bnd[i] for i in identity_res)
            if closure is not None:
                ok = ok and closure <= config.tol_closure
            if equivalence is not None:
                ok = ok and equivalence <= equivalence_bnd
            verdict = "pass" if ok else "identity-failed"

        checks.append(
            SampleCheck(
                point=tuple(float(v) for v in z),
                f={i: tuple(mel.f[i]) for i in mel.f},
                g={i: tuple(avg.g[i]) for i in avg.g},
                hypothesis_residual=hyp,
                identity_residuals=identity_res,
                identity_bounds=identity_bnd,
                closure_residual=closure,
                equivalence_residual=equivalence,
                equivalence_bound=equivalence_bnd,
                closure_note=closure_note,
                verdict=verdict,
            )
        )

    overall = "pass"
    if any(c.verdict == "hypothesis-failed" for c in checks):
        overall = "hypothesis-failed"
    elif any(c.verdict != "pass" for c in checks):
        overall = "identity-failed"
    worst_closure = None
    closures = [c.closure_residual for c in checks if c.closure_residual is not None]
    if closures:
        worst_closure = max(closures)
    return VerificationReport(
        ell=ell,
        order=k,
        period=T,
        config=config,
        samples=tuple(checks),
        hypothesis_residual=max((c.hypothesis_residual for c in checks), default=0.0),
        worst_identity_residual=max(
            (r for c in checks for r in c.identity_residuals.values()), default=0.0
        ),
        worst_closure_residual=worst_closure,
        verdict=overall if checks else "pass",
    )


# -- periodic-orbit search -----------------------------------------------------------


@dataclass(frozen=True)
class OrbitConfig:
    steps: int = 2000
    max_iterations: int = 50
    newton_tol: float = 1e-10
    min_damping: float = 1.0 / 1024.0
    hypothesis_tol: float = 1e-8
    validate_eps: float | None = None
    validate_steps: int | None = None


@dataclass(frozen=True)
class OrbitValidation:
    eps: float
    corrected_point: tuple[float, ...]
    periodicity_residual: float
    iterations: int


@dataclass(frozen=True)
class OrbitReport:
    ell: int
    z_star: tuple[float, ...]
    residual: float
    iterations: int
    residual_history: tuple[float, ...]
    jacobian: tuple[tuple[float, ...], ...]
    hypothesis_residual: float | None
    validation: OrbitValidation | None = None


_COND_LIMIT = 1e12


def _averaged_at(s: SystemSpec, z, ell: int, steps: int) -> AveragedTable:
    # jets one order deeper than the hypothesis level so the Jacobian of g_l is trusted
    mel = integrate_displacement(s, z, spatial_order=max(ell, 1), steps=steps, order=ell)
    return averaged_from_melnikov(mel, s.period)


def _jacobian(table: AveragedTable, ell: int) -> np.ndarray:
    entries = table.derivs[ell][1].entries  # entries[input, output]
    return np.ascontiguousarray(entries.T)


def find_periodic_orbit(
    s: SystemSpec,
    ell: int,
    initial_guess: Sequence[float],
    config: OrbitConfig = OrbitConfig(),
) -> OrbitReport:
    """Newton search for a simple zero of the first non-vanishing averaged function.

    The Jacobian comes from the recursion-carried jets, never from finite
    differences.  Steps are damped by halving whenever the residual would
    grow.  With ``validate_eps`` set, the zero is polished into a genuine
    initial condition of the full system at that perturbation size and the
    periodicity defect of the resulting trajectory is reported.
    """
    if not 1 <= ell <= s.order:
        raise ValueError(f"level must satisfy 1 <= l <= k, got l={ell}, k={s.order}")
    z = np.asarray(initial_guess, dtype=float)
    if z.shape != (s.dim,):
        raise ValueError(f"initial guess shape {z.shape}, expected ({s.dim},)")

    table = _averaged_at(s, z, ell, config.steps)
    residual = _inf(table.g[ell])
    history = [residual]
    iterations = 0
    while residual > config.newton_tol:
        if iterations >= config.max_iterations:
            raise NewtonError(
                f"no convergence after {config.max_iterations} iterations "
                f"(last residual {residual:.3e})",
                history,
            )
        J = _jacobian(table, ell)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > _COND_LIMIT:
            raise DegenerateZeroError(
                "degenerate-zero: Jacobian of the averaged function is singular "
                f"at {tuple(z)}"
            )
        step = np.linalg.solve(J, table.g[ell])
        lam = 1.0
        while True:
            z_new = z - lam * step
            table_new = _averaged_at(s, z_new, ell, config.steps)
            res_new = _inf(table_new.g[ell])
            if res_new < residual or res_new <= config.newton_tol:
                break
            lam *= 0.5
            if lam < config.min_damping:
                raise NewtonError(
                    f"step damping exhausted at residual {residual:.3e}", history
                )
        z, table, residual = z_new, table_new, res_new
        history.append(residual)
        iterations += 1

    J = _jacobian(table, ell)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > _COND_LIMIT:
        raise DegenerateZeroError(
            f"degenerate-zero: converged to {tuple(z)} but the Jacobian is singular"
        )

    hyp = None
    if ell >= 2:
        hyp = max(_inf(table.g[i]) for i in range(1, ell))

    validation = None
    if config.validate_eps is not None:
        validation = _validate_orbit(
            s,
            z,
            config.validate_eps,
            config.validate_steps or config.steps,
        )

    return OrbitReport(
        ell=ell,
        z_star=tuple(float(v) for v in z),
        residual=residual,
        iterations=iterations,
        residual_history=tuple(history),
        jacobian=tuple(tuple(float(v) for v in row) for row in J),
        hypothesis_residual=hyp,
        validation=validation,
    )


def _validate_orbit(
    s: SystemSpec, z_star: np.ndarray, eps: float, steps: int, tol: float = 1e-11, max_iter: int = 8
) -> OrbitValidation:
    """Polish the averaged zero on the true time-T map and report its defect."""
    z = np.array(z_star, dtype=float)
    n = s.dim
    iterations = 0
    for it in range(max_iter):
        delta = displacement_at_eps(s, z, eps, steps=steps, spatial_order=1)
        dvec = np.array([comp.constant for comp in delta])
        residual = _inf(dvec)
        if residual <= tol:
            return OrbitValidation(float(eps), tuple(map(float, z)), residual, it)
        J = np.empty((n, n))
        for v in range(n):
            alpha = tuple(1 if q == v else 0 for q in range(n))
            for c in range(n):
                J[c, v] = delta[c].coefficient(alpha)
        z = z - np.linalg.solve(J, dvec)
        iterations = it + 1
    delta = displacement_at_eps(s, z, eps, steps=steps, spatial_order=1)
    residual = _inf([comp.constant for comp in delta])
    return OrbitValidation(float(eps), tuple(map(float, z)), residual, iterations)
