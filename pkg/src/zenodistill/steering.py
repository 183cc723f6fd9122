"""
Choosing parameters so that a prescribed set of Fock states survives.

The freezing coupling closes loss channels wherever it dominates the
measured transition; the functions here pick ``tau``, ``eta`` and ``kappa``
for the three standard targets and predict the resulting channel pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .distillation import (
    TOL_CLOSED,
    ChannelReport,
    channel_report,
    closed_form_v,
    conditional_propagator,
    spectral_decompose,
    zeno_lower_bound,
)
from .hilbert import expm_unitary
from .models import ChainParams, TrappedIonParams, build_chain, build_trapped_ion, lamb_dicke_f

DARK_TOL = 1e-12
REL_TOL = 1e-2
ZENO_RATIO_WARN = 10.0


class SteeringError(ValueError):
    pass


def design_qnd_tau(n_bar: int, omega: float, eta1: float) -> float:
    """Interval that makes the ``n_bar`` carrier channel return with ``|cos| = 1``."""
    f = lamb_dicke_f(0, n_bar, eta1)
    if abs(f) < DARK_TOL:
        raise SteeringError(
            f"dark target: f_0({n_bar}, {eta1}) = {f:.3e}, no interval preserves |{n_bar}>"
        )
    if omega <= 0:
        raise SteeringError(f"omega must be > 0 to design tau, got {omega}")
    return float(np.pi / abs(omega * f))


def find_eta_zero(n_bar: int, branch: int = 0) -> float:
    """
    Lamb-Dicke parameter at which the carrier coupling of ``|n_bar>`` vanishes.

    ``branch`` picks the k-th smallest positive zero. Roots are bracketed on
    a grid in ``eta^2`` (the zeros of ``L_n`` lie below ``4 n + 2``) and then
    refined by bisection down to adjacent floating-point numbers.
    """
    if n_bar < 1:
        raise SteeringError(f"no zero exists: f_0({n_bar}, eta) has no zero for n_bar = {n_bar}")
    if not 0 <= branch < n_bar:
        raise SteeringError(f"f_0({n_bar}, eta) has {n_bar} zeros; branch {branch} is out of range")

    x_grid = np.linspace(0.0, 4.0 * n_bar + 6.0, 400 * n_bar + 1)
    eta_grid = np.sqrt(x_grid)
    vals = np.array([lamb_dicke_f(0, n_bar, e) for e in eta_grid])
    brackets = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    roots: list[float] = []
    for i in brackets:
        if vals[i] == 0.0:
            root = float(eta_grid[i])
        elif vals[i + 1] == 0.0:
            continue
        else:
            root = _bisect(n_bar, float(eta_grid[i]), float(eta_grid[i + 1]))
        if not roots or root > roots[-1]:
            roots.append(root)
    if len(roots) <= branch:
        raise SteeringError(f"only {len(roots)} zeros of f_0({n_bar}, eta) located")
    return roots[branch]


def _bisect(n: int, lo: float, hi: float) -> float:
    f_lo = lamb_dicke_f(0, n, lo)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = lamb_dicke_f(0, n, mid)
        if f_mid == 0.0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return lo if abs(lamb_dicke_f(0, n, lo)) <= abs(lamb_dicke_f(0, n, hi)) else hi


class BadTau(NamedTuple):
    channel: int
    k: int
    tau: float
    rel_distance: float


@dataclass(frozen=True)
class FineTuningCheck:
    ok: bool
    nearest_bad_tau: tuple[BadTau, ...]
    violations: tuple[BadTau, ...]
    dark_channels: tuple[int, ...]


def fine_tuning_check(
    tau: float, omega: float, eta1: float, q: int, rel_tol: float = REL_TOL
) -> FineTuningCheck:
    """
    Compare ``tau`` with the intervals ``k pi / (omega f_0(j, eta1))``,
    ``j < q``, at which an unfrozen channel would survive intact.

    ``nearest_bad_tau`` holds the closest such interval per channel; channels
    with ``f_0 = 0`` have none and are listed in ``dark_channels``.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    nearest, violations, dark = [], [], []
    for j in range(q):
        rate = abs(omega * lamb_dicke_f(0, j, eta1))
        if rate < DARK_TOL:
            dark.append(j)
            continue
        period = np.pi / rate
        best = None
        k = 1
        while True:
            bad = k * period
            d = abs(tau - bad) / bad
            entry = BadTau(j, k, bad, d)
            if best is None or d < best.rel_distance:
                best = entry
            if d <= rel_tol:
                violations.append(entry)
            if bad > tau * (1.0 + rel_tol):
                break
            k += 1
        nearest.append(best)
    return FineTuningCheck(not violations, tuple(nearest), tuple(violations), tuple(dark))


@dataclass(frozen=True)
class SteeringPlan:
    params: TrappedIonParams
    tau: float
    target_indices: tuple[int, ...]
    predicted_report: ChannelReport
    warnings: tuple[str, ...] = field(default=())


def propagator_for(params: TrappedIonParams, tau: float):
    """Closed form when available, numeric otherwise."""
    if params.p == 0:
        return closed_form_v(params, tau)
    return conditional_propagator(build_trapped_ion(params), 0, tau)


def predict_target_projector(
    params: TrappedIonParams,
    tau: float,
    tol_closed: float = TOL_CLOSED,
    rel_tol: float = REL_TOL,
) -> SteeringPlan:
    report = channel_report(spectral_decompose(propagator_for(params, tau)), tol_closed)
    targets = tuple(report.closed_labels)
    warnings: list[str] = []

    checked = params.kappa > 0 and params.p == 0 and params.q >= 1
    if checked:
        check = fine_tuning_check(tau, params.omega, params.eta1, params.q, rel_tol)
        for bad in check.violations:
            warnings.append(
                f"fine-tuned tau: channel {bad.channel} survives at tau = {bad.tau:.6g} "
                f"(k = {bad.k}), relative distance {bad.rel_distance:.2e}"
            )

    if params.kappa > 0:
        weak = []
        for n in range(params.slave_dim):
            o, k = abs(params.omega_n(n)), abs(params.kappa_n(n))
            if k > 0 and o > 0 and k / o < ZENO_RATIO_WARN:
                weak.append(n)
        if weak:
            warnings.append(
                f"weak freezing: kappa_n/omega_n < {ZENO_RATIO_WARN:g} for channels {_compact(weak)}"
            )
        for ch in report:
            n = ch.label
            if checked and n < params.q:
                continue
            if ch.closed and abs(params.kappa_n(n)) == 0 and abs(params.omega_n(n)) > 0:
                warnings.append(
                    f"channel {n} is unfrozen but survives at this tau (accidental closure)"
                )

    truncated = params.truncated_channels()
    if truncated:
        warnings.append(f"Fock truncation cuts the invariant blocks of channels {_compact(truncated)}")
    return SteeringPlan(params, float(tau), targets, report, tuple(warnings))


def _compact(values: Sequence[int]) -> str:
    vals = list(values)
    if len(vals) > 6:
        return f"{vals[0]}..{vals[-1]} ({len(vals)} channels)"
    return ", ".join(str(v) for v in vals)


class ZenoRow(NamedTuple):
    kappa: float
    n: int
    survival: float
    lower_bound: float


def _check_grid(grid: Sequence[float], name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly ascending")
    return g


def zeno_sweep(
    base: TrappedIonParams | ChainParams, kappa_grid: Sequence[float], tau: float
) -> list[ZenoRow]:
    """
    Per-channel survival probability as the freezing coupling is raised.

    For a chain the second coupling is swept and the single channel is the
    return probability of level 0. ``lower_bound`` is the squared
    three-level floor (NaN when it does not apply).
    """
    grid = _check_grid(kappa_grid, "kappa_grid")
    rows: list[ZenoRow] = []
    if isinstance(base, ChainParams):
        if len(base.couplings) < 2:
            raise ValueError("chain needs at least two couplings for a Zeno sweep")
        for kappa in grid:
            chain = base.with_coupling(1, kappa)
            u = expm_unitary(build_chain(chain).matrix, tau)
            bound = np.nan
            if len(chain.couplings) == 2:
                o2, k2 = abs(chain.couplings[0]) ** 2, abs(kappa) ** 2
                bound = max(0.0, (k2 - o2) / (k2 + o2)) ** 2 if k2 + o2 > 0 else 1.0
            rows.append(ZenoRow(float(kappa), 0, float(abs(u[0, 0]) ** 2), bound))
        return rows

    for kappa in grid:
        params = base.replace(kappa=float(kappa))
        report = channel_report(spectral_decompose(propagator_for(params, tau)))
        for ch in report:
            bound = np.nan
            if params.p == 0:
                bound = max(0.0, zeno_lower_bound(params, ch.label)) ** 2
            rows.append(ZenoRow(float(kappa), ch.label, ch.survival_probability, bound))
    return rows


class HierarchyRow(NamedTuple):
    kappa: float
    lam: float
    tau: float
    survival: float
    transfer: float


def hierarchy_sweep(
    chain: ChainParams,
    kappa_grid: Sequence[float],
    lambda_grid: Sequence[float],
    tau: float | Sequence[float],
) -> list[HierarchyRow]:
    """
    Level-0 survival and level-0 -> 1 transfer of a coupling chain.

    The second and third couplings of ``chain`` are replaced by each
    ``(kappa, lambda)`` pair; any further rings keep their template value.
    Rows are emitted in grid order (kappa outermost, tau innermost).
    """
    if len(chain.couplings) < 3:
        raise ValueError("hierarchy sweep needs a chain of at least three couplings (4 levels)")
    kg = _check_grid(kappa_grid, "kappa_grid")
    lg = _check_grid(lambda_grid, "lambda_grid")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    rows: list[HierarchyRow] = []
    for kappa in kg:
        for lam in lg:
            h = build_chain(chain.with_coupling(1, kappa).with_coupling(2, lam)).matrix
            for t in taus:
                col = expm_unitary(h, t)[:, 0]
                rows.append(
                    HierarchyRow(
                        float(kappa), float(lam), float(t),
                        float(abs(col[0]) ** 2), float(abs(col[1]) ** 2),
                    )
                )
    return rows
