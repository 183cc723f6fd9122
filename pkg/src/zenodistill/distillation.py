"""
Measurement-conditioned evolution of the Slave.

Each cycle evolves the compound system for a time ``tau`` and projects the
Master back onto a fixed basis state. Restricted to the Slave this is the
contraction ``V(tau) = <phi_0| exp(-i H tau) |phi_0>``; repeating it drives
the Slave into the eigenspace of ``V`` with the largest eigenvalue modulus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import (
    NumericalError,
    StateVector,
    as_matrix,
    eig_general,
    expm_unitary,
    is_normal,
)
from .models import HamiltonianModel, TrappedIonParams, lamb_dicke_f

CONTRACTION_TOL = 1e-10
TOL_CLOSED = 1e-3
DEGENERACY_TOL = 1e-9
EXTINCTION_PROB = 1e-300


class DistillationExtinguished(Exception):
    """The conditioning event has (numerically) zero probability."""

    def __init__(self, step: int, probability: float):
        self.step = step
        self.probability = probability
        super().__init__(
            f"distillation extinguished at step {step}: success probability {probability:.3e}"
        )


@dataclass(frozen=True)
class ConditionalPropagator:
    matrix: np.ndarray
    conditioned_master_index: int = 0
    tau: float = 0.0

    def __post_init__(self):
        m = as_matrix(self.matrix, square=True)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def max_singular_value(self) -> float:
        return float(np.linalg.norm(self.matrix, 2)) if self.dim else 0.0

    def check_contraction(self, tol: float = CONTRACTION_TOL) -> None:
        s = self.max_singular_value()
        if s > 1.0 + tol:
            raise NumericalError(f"conditional propagator is not a contraction: sigma_max = {s!r}")


@dataclass(frozen=True)
class SpectralDecomposition:
    """``V = sum_k eigenvalues[k] * projectors[k]`` with rank-one projectors."""

    eigenvalues: np.ndarray
    projectors: tuple[np.ndarray, ...]
    right: np.ndarray
    left: np.ndarray
    is_normal: bool
    labels: tuple[int, ...]

    def reconstruct(self) -> np.ndarray:
        return sum(g * p for g, p in zip(self.eigenvalues, self.projectors))

    def power(self, n: int) -> np.ndarray:
        """``V^n`` evaluated from the spectrum."""
        return (self.right * self.eigenvalues**n) @ self.left.conj().T


@dataclass(frozen=True)
class Channel:
    label: int
    eigenvalue: complex
    survival_probability: float
    phase: float
    closed: bool
    eigenvector: np.ndarray

    @property
    def classification(self) -> str:
        return "closed" if self.closed else "open"


@dataclass(frozen=True)
class ChannelReport:
    channels: tuple[Channel, ...]
    tol_closed: float

    def __iter__(self):
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)

    @property
    def survival(self) -> np.ndarray:
        return np.array([c.survival_probability for c in self.channels])

    @property
    def closed_labels(self) -> list[int]:
        return sorted(c.label for c in self.channels if c.closed)

    @property
    def open_labels(self) -> list[int]:
        return sorted(c.label for c in self.channels if not c.closed)


@dataclass
class DistillationRun:
    steps: int
    conditioned_states: list[StateVector] = field(default_factory=list)
    step_success_probs: list[float] = field(default_factory=list)
    cumulative_success: float = 1.0

    @property
    def final_state(self) -> StateVector:
        return self.conditioned_states[-1]

    def cumulative_trace(self) -> np.ndarray:
        return np.cumprod(self.step_success_probs)


def branch_operators(model: HamiltonianModel, master_index: int, tau: float) -> np.ndarray:
    """
    All Slave operators ``<phi_j| U(tau) |phi_0>``, stacked on axis 0.

    Their squared norms on a state resolve the outcome probabilities of the
    Master measurement.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    space = model.space
    u = expm_unitary(model.matrix, tau)
    cols = u[:, space.master_slice(master_index)]
    return cols.reshape(space.master_dim, space.slave_dim, space.slave_dim)


def conditional_propagator(
    model: HamiltonianModel, master_index: int = 0, tau: float = 0.0
) -> ConditionalPropagator:
    v = branch_operators(model, master_index, tau)[master_index]
    prop = ConditionalPropagator(v, master_index, tau)
    prop.check_contraction()
    return prop


def _label(vec: np.ndarray) -> int:
    return int(np.argmax(np.abs(vec)))


def spectral_decompose(v: ConditionalPropagator | np.ndarray) -> SpectralDecomposition:
    """
    Eigenvalues and bi-orthogonal spectral projectors of ``V``.

    Each eigenpair is labelled by the basis index where its right eigenvector
    has the largest weight, and the pairs are ordered by label. For a
    diagonal ``V`` the labels are the basis (Fock) indices.

    Raises
    ------
    DefectiveMatrixError
        If ``V`` is not diagonalizable.
    """
    m = v.matrix if isinstance(v, ConditionalPropagator) else as_matrix(v, square=True)
    normal = is_normal(m)
    eigs = eig_general(m)
    labels = [_label(eigs.right[:, k]) for k in range(len(eigs.eigenvalues))]
    order = sorted(range(len(labels)), key=lambda k: (labels[k], -abs(eigs.eigenvalues[k])))
    w = eigs.eigenvalues[order]
    r = eigs.right[:, order]
    l = eigs.left[:, order]
    projectors = tuple(np.outer(r[:, k], l[:, k].conj()) for k in range(len(w)))
    return SpectralDecomposition(w, projectors, r, l, normal, tuple(labels[k] for k in order))


def channel_report(decomp: SpectralDecomposition, tol_closed: float = TOL_CLOSED) -> ChannelReport:
    threshold = (1.0 - tol_closed) ** 2
    channels = []
    for k, g in enumerate(decomp.eigenvalues):
        g = complex(g)
        surv = abs(g) ** 2
        phase = float(np.angle(g))
        if phase <= -np.pi:
            phase = np.pi
        channels.append(
            Channel(
                label=decomp.labels[k],
                eigenvalue=g,
                survival_probability=surv,
                phase=phase,
                closed=surv >= threshold,
                eigenvector=decomp.right[:, k],
            )
        )
    return ChannelReport(tuple(channels), tol_closed)


@dataclass(frozen=True)
class AsymptoticProjector:
    projector: np.ndarray
    dominant_modulus: float
    indices: tuple[int, ...]
    is_single_state: bool

    @property
    def rank(self) -> int:
        return len(self.indices)


def asymptotic_projector(
    decomp: SpectralDecomposition, degeneracy_tol: float = DEGENERACY_TOL
) -> AsymptoticProjector:
    """
    Sum of the spectral projectors whose eigenvalue modulus is within
    ``degeneracy_tol`` (relative) of the largest one.

    ``indices`` are positions in ``decomp``; all near-degenerate dominant
    eigenvalues are kept.
    """
    mods = np.abs(decomp.eigenvalues)
    if mods.size == 0 or mods.max() < EXTINCTION_PROB:
        raise NumericalError("all eigenvalues vanish: no subspace survives conditioning")
    gamma = float(mods.max())
    keep = tuple(int(k) for k in np.flatnonzero(mods >= gamma * (1.0 - degeneracy_tol)))
    proj = sum(decomp.projectors[k] for k in keep)
    return AsymptoticProjector(proj, gamma, keep, len(keep) == 1)


def apply_conditional(
    v: ConditionalPropagator | np.ndarray, psi0: StateVector | Sequence[complex], steps: int
) -> DistillationRun:
    """
    Apply ``steps`` measure-and-condition cycles to ``psi0``.

    Raises
    ------
    DistillationExtinguished
        When a step's success probability drops below 1e-300.
    """
    m = v.matrix if isinstance(v, ConditionalPropagator) else as_matrix(v, square=True)
    if int(steps) != steps or steps < 1:
        raise ValueError(f"number of steps must be an integer >= 1, got {steps}")
    psi = psi0 if isinstance(psi0, StateVector) else StateVector(np.asarray(psi0, dtype=complex))
    if psi.dim != m.shape[0]:
        raise ValueError(f"state dimension {psi.dim} does not match propagator {m.shape[0]}")

    run = DistillationRun(steps=int(steps))
    amps = psi.amplitudes
    cumulative = 1.0
    for i in range(1, int(steps) + 1):
        nxt = m @ amps
        prob = float(np.vdot(nxt, nxt).real)
        if prob < EXTINCTION_PROB:
            raise DistillationExtinguished(i, prob)
        amps = nxt / np.sqrt(prob)
        cumulative *= prob
        run.step_success_probs.append(prob)
        run.conditioned_states.append(StateVector(amps))
    run.cumulative_success = cumulative
    return run


def closed_form_v(params: TrappedIonParams, tau: float) -> ConditionalPropagator:
    """
    Diagonal ``V(tau)`` for a carrier first coupling (``p = 0``).

    Channels whose ``e2`` partner does not exist (``n < q``, or cut by the
    Fock truncation) oscillate as ``cos(omega f_0(n, eta1) tau)``; the others
    follow the three-level return amplitude
    ``(|K_n|^2 + |O_n|^2 cos(w_n tau)) / w_n^2`` with ``w_n^2 = |K_n|^2 + |O_n|^2``.
    """
    if params.p != 0:
        raise NotImplementedError("closed-form V is only available for p = 0; use the numeric path")
    diag = np.empty(params.slave_dim)
    for n in range(params.slave_dim):
        k2 = abs(params.kappa_n(n)) ** 2
        if k2 == 0.0:
            diag[n] = np.cos(params.omega * lamb_dicke_f(0, n, params.eta1) * tau)
            continue
        o2 = abs(params.omega_n(n)) ** 2
        w2 = k2 + o2
        diag[n] = (k2 + o2 * np.cos(np.sqrt(w2) * tau)) / w2
    return ConditionalPropagator(np.diag(diag).astype(complex), 0, tau)


def zeno_lower_bound(params: TrappedIonParams, n: int) -> float:
    """``1 - 2|O_n|^2 / w_n^2``, a tau-independent floor on the return amplitude."""
    o2 = abs(params.omega_n(n)) ** 2
    w2 = o2 + abs(params.kappa_n(n)) ** 2
    if w2 == 0.0:
        return 1.0
    return 1.0 - 2.0 * o2 / w2
