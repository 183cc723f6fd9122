"""
Hamiltonian construction.

Two model families:

* nearest-neighbour tridiagonal chains with couplings ``[omega, kappa,
  lambda, ...]`` (the "watched pot / watched cook" toy), realised as a
  Master of ``len(couplings) + 1`` levels with a one-dimensional Slave;
* a three-level ion (``g, e1, e2`` at Master indices 0, 1, 2) coupled to a
  truncated harmonic oscillator through two sideband lasers.

Sideband orders follow the convention ``a^{-s} = (a^dagger)^s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import exp, lgamma, sqrt

import numpy as np
import scipy.sparse.csgraph

from .hilbert import BipartiteSpace, hermiticity_error

G, E1, E2 = 0, 1, 2
MASTER_LABELS = ("g", "e1", "e2")


def laguerre(m: int, alpha: int, x: float) -> float:
    """Generalized Laguerre polynomial L_m^(alpha)(x) by the three-term recurrence."""
    if m < 0:
        raise ValueError(f"Laguerre degree must be >= 0, got {m}")
    prev, cur = 0.0, 1.0
    for k in range(m):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def lamb_dicke_f(p: int, m: int, eta: float) -> float:
    """
    Nonlinear vibronic coupling function for a ``p``-th sideband.

    ``f_p(m, eta) = exp(-eta^2/2) p! m!/(m+p)! L_m^(p)(eta^2)``, normalized so
    that ``f_p(m, 0) = 1`` for every order; the ``eta^p / p!`` prefactor of the
    bare sideband matrix element is taken to be absorbed in the laser coupling
    constant. For the carrier this is ``exp(-eta^2/2) L_m(eta^2)``.
    """
    if p < 0:
        raise ValueError(f"sideband order p must be >= 0, got {p}")
    if m < 0:
        raise ValueError(f"Fock index must be >= 0, got {m}")
    if eta < 0:
        raise ValueError(f"Lamb-Dicke parameter must be >= 0, got {eta}")
    x = eta * eta
    if p == 0:
        return exp(-0.5 * x) * laguerre(m, 0, x)
    ratio = exp(lgamma(p + 1) + lgamma(m + 1) - lgamma(m + p + 1))
    return exp(-0.5 * x) * ratio * laguerre(m, p, x)


def sideband_element(p: int, n: int, eta: float, n_max: int | None = None) -> float:
    """
    ``<n-p| f_p(a^dagger a, eta) a^p |n>``, or 0 when ``n - p`` leaves the
    Fock range.

    For a red sideband (``p = -s``) the operator is ``f(a^dagger a) a^dagger^s``
    and the function evaluated at the raised level ``n + s`` is ``f_s(n)``,
    which gives the same magnitude as the blue-sideband element between the
    same two levels.
    """
    target = n - p
    if n < 0 or target < 0 or (n_max is not None and (n > n_max or target > n_max)):
        return 0.0
    if p >= 0:
        return lamb_dicke_f(p, target, eta) * sqrt(exp(lgamma(n + 1) - lgamma(target + 1)))
    s = -p
    return lamb_dicke_f(s, n, eta) * sqrt(exp(lgamma(target + 1) - lgamma(n + 1)))


@dataclass(frozen=True)
class ChainParams:
    couplings: tuple[complex, ...]

    def __post_init__(self):
        c = tuple(complex(x) for x in self.couplings)
        if not c:
            raise ValueError("a chain needs at least one coupling")
        if not all(np.isfinite(x) for x in c):
            raise ValueError("chain couplings must be finite")
        object.__setattr__(self, "couplings", c)

    @property
    def levels(self) -> int:
        return len(self.couplings) + 1

    def with_coupling(self, index: int, value: complex) -> ChainParams:
        c = list(self.couplings)
        c[index] = value
        return ChainParams(tuple(c))


@dataclass(frozen=True)
class TrappedIonParams:
    omega: float
    kappa: float
    p: int
    q: int
    eta1: float
    eta2: float
    n_max: int
    omega_phase: float = 0.0
    kappa_phase: float = 0.0

    def __post_init__(self):
        for name in ("omega", "kappa", "eta1", "eta2", "omega_phase", "kappa_phase"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        for name in ("omega", "kappa", "eta1", "eta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("p", "q", "n_max"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer, got {getattr(self, name)}")
        need = abs(self.p) + abs(self.q) + 2
        if self.n_max < need:
            raise ValueError(f"n_max must be >= |p| + |q| + 2 = {need}, got {self.n_max}")

    @property
    def slave_dim(self) -> int:
        return self.n_max + 1

    def replace(self, **changes) -> TrappedIonParams:
        return replace(self, **changes)

    def omega_n(self, n: int) -> complex:
        """Coupling between |n, g> and |n-p, e1>."""
        amp = self.omega * sideband_element(self.p, n, self.eta1, self.n_max)
        return amp * np.exp(1j * self.omega_phase)

    def kappa_n(self, n: int) -> complex:
        """Coupling between |n-p, e1> and |n-p-q, e2> (block labelled by the g-state n)."""
        amp = self.kappa * sideband_element(self.q, n - self.p, self.eta2, self.n_max)
        return amp * np.exp(1j * self.kappa_phase)

    def block_members(self, n: int) -> list[tuple[int, int]]:
        """(master, fock) pairs of the invariant set seeded by |n, g>, before truncation."""
        return [(G, n), (E1, n - self.p), (E2, n - self.p - self.q)]

    def truncated_channels(self) -> list[int]:
        """g-state Fock indices whose block loses a partner only because of n_max."""
        out = []
        for n in range(self.n_max + 1):
            if any(f > self.n_max for _, f in self.block_members(n)):
                out.append(n)
        return out


@dataclass(frozen=True)
class HamiltonianModel:
    space: BipartiteSpace
    matrix: np.ndarray
    blocks: tuple[tuple[int, ...], ...] = field(default=())
    params: ChainParams | TrappedIonParams | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dim {self.space.dim}")
        err = hermiticity_error(m)
        if err > 1e-12:
            raise ValueError(f"Hamiltonian is not Hermitian: max |H - H^dagger| = {err:.3e}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if not self.blocks:
            object.__setattr__(self, "blocks", tuple(block_decompose(self)))


def build_chain(params: ChainParams) -> HamiltonianModel:
    """Tridiagonal chain with super-diagonal ``params.couplings``."""
    if not isinstance(params, ChainParams):
        params = ChainParams(tuple(params))
    c = np.array(params.couplings, dtype=complex)
    h = np.diag(c, 1) + np.diag(c.conj(), -1)
    return HamiltonianModel(BipartiteSpace(params.levels, 1), h, params=params)


def build_trapped_ion(params: TrappedIonParams) -> HamiltonianModel:
    """Three-level ion (x) truncated oscillator, interaction picture, RWA."""
    space = BipartiteSpace(3, params.slave_dim)
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for n in range(params.n_max + 1):
        k = n - params.p
        if 0 <= k <= params.n_max:
            h[space.index(E1, k), space.index(G, n)] = params.omega_n(n)
    for k in range(params.n_max + 1):
        j = k - params.q
        if 0 <= j <= params.n_max:
            # kappa_n is labelled by the g-state n = k + p
            h[space.index(E2, j), space.index(E1, k)] = params.kappa_n(k + params.p)
    h = h + h.conj().T
    return HamiltonianModel(space, h, params=params)


def block_decompose(model: HamiltonianModel) -> list[tuple[int, ...]]:
    """Connected components of the coupling graph, ordered by smallest index."""
    h = np.asarray(model.matrix)
    adj = (h != 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    count, labels = scipy.sparse.csgraph.connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(lab, []).append(idx)
    return sorted((tuple(g) for g in groups.values()), key=lambda b: b[0])
