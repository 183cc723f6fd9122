"""
Monte Carlo sampling of the repeated Master measurement.

A trajectory alternates unitary evolution of the compound state with a
projective Master measurement and stops at the first outcome different from
the conditioned one. Trajectory ``i`` of a batch draws from its own
generator seeded by ``(base_seed, i)``, so batches are reproducible and can
be split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .distillation import DistillationExtinguished, apply_conditional
from .hilbert import NumericalError, StateVector, expm_unitary
from .models import HamiltonianModel

MIN_TRAJECTORIES = 100


@dataclass(frozen=True)
class TrajectoryOutcome:
    seed: int
    outcomes: tuple[int, ...]
    success: bool
    steps_completed: int
    final_slave_state: StateVector | None = None
    failure_state: np.ndarray | None = field(default=None, repr=False)


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic 63-bit sub-seed for trajectory ``index`` of a batch."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _check_psi0(model: HamiltonianModel, psi0) -> np.ndarray:
    psi = psi0 if isinstance(psi0, StateVector) else StateVector(np.asarray(psi0, dtype=complex))
    if psi.dim != model.space.slave_dim:
        raise ValueError(f"psi0 has dimension {psi.dim}, Slave dimension is {model.space.slave_dim}")
    return psi.amplitudes


def _simulate(
    u: np.ndarray,
    model: HamiltonianModel,
    master_index: int,
    psi0: np.ndarray,
    steps: int,
    seed: int,
    record_failure: bool,
) -> TrajectoryOutcome:
    space = model.space
    rng = np.random.default_rng(seed)
    sl = space.master_slice(master_index)
    state = space.embed(master_index, psi0)
    outcomes: list[int] = []
    for _ in range(steps):
        evolved = u @ state
        blocks = evolved.reshape(space.master_dim, space.slave_dim)
        probs = np.einsum("ij,ij->i", blocks.conj(), blocks).real
        cdf = np.cumsum(probs)
        # inverse CDF over ordered Master indices
        j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        j = min(j, space.master_dim - 1)
        outcomes.append(j)
        if j != master_index:
            failed = blocks[j] / sqrt(probs[j]) if record_failure else None
            return TrajectoryOutcome(seed, tuple(outcomes), False, len(outcomes) - 1, None, failed)
        state = np.zeros_like(state)
        state[sl] = blocks[j] / sqrt(probs[j])
    return TrajectoryOutcome(seed, tuple(outcomes), True, steps, StateVector(state[sl].copy()))


def run_trajectory(
    model: HamiltonianModel,
    master_index: int,
    psi0,
    tau: float,
    steps: int,
    seed: int,
    record_failure: bool = False,
) -> TrajectoryOutcome:
    """
    Sample one run of ``steps`` evolve-and-measure cycles.

    ``steps_completed`` counts the successful detections; on failure the
    last recorded outcome is the offending Master index.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError(f"number of steps must be an integer >= 1, got {steps}")
    amps = _check_psi0(model, psi0)
    u = expm_unitary(model.matrix, tau)
    return _simulate(u, model, master_index, amps, int(steps), int(seed), record_failure)


@dataclass(frozen=True)
class SuccessEstimate:
    empirical_rate: float
    analytic_rate: float
    z_score: float
    successes: int
    num_trajectories: int
    base_seed: int
    analytic_final_state: StateVector | None
    outcomes: tuple[TrajectoryOutcome, ...] = field(repr=False, default=())


def estimate_success_rate(
    model: HamiltonianModel,
    master_index: int,
    psi0,
    tau: float,
    steps: int,
    num_trajectories: int,
    base_seed: int = 0,
) -> SuccessEstimate:
    """
    Fraction of trajectories with ``steps`` consecutive successful detections,
    compared with ``||V^N psi0||^2`` from the deterministic engine.

    ``z_score`` is the deviation in binomial standard errors; it is 0 when
    the analytic rate is 0 or 1 and matched exactly, and infinite otherwise.
    """
    if num_trajectories < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories, got {num_trajectories}")
    if int(steps) != steps or steps < 1:
        raise ValueError(f"number of steps must be an integer >= 1, got {steps}")
    amps = _check_psi0(model, psi0)
    u = expm_unitary(model.matrix, tau)
    space = model.space
    sl = space.master_slice(master_index)
    v = u[sl, sl]

    try:
        run = apply_conditional(v, StateVector(amps), steps)
        analytic, final = run.cumulative_success, run.final_state
    except DistillationExtinguished:
        analytic, final = 0.0, None

    outcomes = tuple(
        _simulate(u, model, master_index, amps, int(steps), derive_seed(base_seed, i), False)
        for i in range(num_trajectories)
    )
    successes = sum(o.success for o in outcomes)
    if analytic == 0.0 and successes:
        raise NumericalError(
            f"{successes} trajectories succeeded although the analytic success rate is 0"
        )
    empirical = successes / num_trajectories
    var = analytic * (1.0 - analytic) / num_trajectories
    if var > 0:
        z = abs(empirical - analytic) / sqrt(var)
    else:
        z = 0.0 if empirical == analytic else float("inf")
    return SuccessEstimate(
        empirical, analytic, z, successes, num_trajectories, int(base_seed), final, outcomes
    )
