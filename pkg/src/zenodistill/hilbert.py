"""
Dense complex linear algebra and Master (x) Slave bookkeeping.

Matrices are plain ``numpy`` complex arrays. Composite indices are
master-major: ``(m, s) -> m * slave_dim + s``, so the Slave block belonging
to one Master basis state is a contiguous slice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-10
DEFECTIVE_TOL = 1e-10
NORMAL_TOL = 1e-10
NORM_TOL = 1e-12


class NumericalError(Exception):
    """Base class for numerical failures (maps to CLI exit code 4)."""


class NotHermitianError(NumericalError, ValueError):
    pass


class DefectiveMatrixError(NumericalError):
    """The matrix has no complete set of bi-orthogonal eigenvectors."""


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Return ``a`` as a 2-D complex array, rejecting NaN/Inf entries."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def hermiticity_error(h: np.ndarray) -> float:
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def is_normal(a: np.ndarray, tol: float = NORMAL_TOL) -> bool:
    ah = a.conj().T
    return bool(np.max(np.abs(ah @ a - a @ ah)) < tol)


@dataclass(frozen=True)
class BipartiteSpace:
    master_dim: int
    slave_dim: int

    def __post_init__(self):
        if int(self.master_dim) != self.master_dim or self.master_dim < 2:
            raise ValueError(f"master_dim must be an integer >= 2, got {self.master_dim}")
        if int(self.slave_dim) != self.slave_dim or self.slave_dim < 1:
            raise ValueError(f"slave_dim must be an integer >= 1, got {self.slave_dim}")

    @property
    def dim(self) -> int:
        return self.master_dim * self.slave_dim

    def index(self, m: int, s: int) -> int:
        return tensor_index(self, m, s)

    def split(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`index`."""
        if not 0 <= k < self.dim:
            raise IndexError(f"composite index {k} out of range [0, {self.dim})")
        return divmod(k, self.slave_dim)

    def master_slice(self, m: int) -> slice:
        if not 0 <= m < self.master_dim:
            raise IndexError(f"master index {m} out of range [0, {self.master_dim})")
        return slice(m * self.slave_dim, (m + 1) * self.slave_dim)

    def embed(self, m: int, slave_amplitudes) -> np.ndarray:
        """Composite vector |phi_m> (x) |slave>."""
        out = np.zeros(self.dim, dtype=complex)
        out[self.master_slice(m)] = slave_amplitudes
        return out


def tensor_index(space: BipartiteSpace, m: int, s: int) -> int:
    if not 0 <= m < space.master_dim:
        raise IndexError(f"master index {m} out of range [0, {space.master_dim})")
    if not 0 <= s < space.slave_dim:
        raise IndexError(f"slave index {s} out of range [0, {space.slave_dim})")
    return m * space.slave_dim + s


@dataclass(frozen=True)
class StateVector:
    """Amplitudes on a composite space, or on the Slave alone when ``space`` is None."""

    amplitudes: np.ndarray
    space: BipartiteSpace | None = None
    normalized: bool = True

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(amps)):
            raise ValueError("state has non-finite amplitudes")
        if self.space is not None and amps.size != self.space.dim:
            raise ValueError(f"expected {self.space.dim} amplitudes, got {amps.size}")
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise ValueError(f"state flagged normalized has norm {np.linalg.norm(amps)!r}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, space: BipartiteSpace | None = None) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, space)

    @classmethod
    def basis(cls, dim: int, n: int) -> StateVector:
        if not 0 <= n < dim:
            raise IndexError(f"basis index {n} out of range [0, {dim})")
        amps = np.zeros(dim, dtype=complex)
        amps[n] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def fidelity(self, other) -> float:
        """|<other|self>|^2 for a normalized ``other``."""
        o = other.amplitudes if isinstance(other, StateVector) else np.asarray(other, dtype=complex)
        return float(abs(np.vdot(o, self.amplitudes)) ** 2)


def expm_unitary(h, tau: float) -> np.ndarray:
    """
    exp(-i H tau) for Hermitian ``H`` via its eigendecomposition.

    Raises
    ------
    NotHermitianError
        If ``max |H - H^dagger|`` exceeds 1e-10.
    """
    h = as_matrix(h, square=True)
    err = hermiticity_error(h)
    if err > HERMITIAN_TOL:
        raise NotHermitianError(f"generator is not Hermitian: max |H - H^dagger| = {err:.3e}")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


class Eigensystem(NamedTuple):
    """``A = R diag(eigenvalues) L^dagger`` with ``L^dagger R = 1``.

    Eigenvectors are the columns of ``right`` and ``left``.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray


def eig_general(a) -> Eigensystem:
    """
    Bi-orthonormal eigendecomposition of a square complex matrix.

    Normal matrices go through the complex Schur form, whose unitary factor
    is then a common orthonormal set of left and right eigenvectors. Other
    matrices use LAPACK's left/right solver; the left vectors are then
    re-derived from the inverse of the right-vector matrix so that
    bi-orthonormality also holds inside degenerate eigenspaces.

    Raises
    ------
    DefectiveMatrixError
        If some unit-norm eigenpair has ``|l^dagger r| < 1e-10``.
    """
    a = as_matrix(a, square=True)
    n = a.shape[0]
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return Eigensystem(np.zeros(0, dtype=complex), empty, empty)

    offdiag = a - np.diag(np.diag(a))
    if not np.any(offdiag):
        eye = np.eye(n, dtype=complex)
        return Eigensystem(np.diag(a).copy(), eye, eye.copy())

    if hermiticity_error(a) <= HERMITIAN_TOL:
        w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
        return Eigensystem(w.astype(complex), v, v.copy())

    if is_normal(a):
        t, z = scipy.linalg.schur(a, output="complex")
        return Eigensystem(np.diag(t).copy(), z, z.copy())

    w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    vl = vl / np.linalg.norm(vl, axis=0)
    vr = vr / np.linalg.norm(vr, axis=0)
    overlap = np.abs(np.einsum("ij,ij->j", vl.conj(), vr))
    worst = int(np.argmin(overlap))
    if overlap[worst] < DEFECTIVE_TOL:
        raise DefectiveMatrixError(
            f"matrix is defective: |l^dagger r| = {overlap[worst]:.3e} "
            f"for eigenvalue {w[worst]:.6g}"
        )
    try:
        left_h = np.linalg.inv(vr)
    except np.linalg.LinAlgError as exc:
        raise DefectiveMatrixError("right eigenvectors are linearly dependent") from exc
    return Eigensystem(w, vr, left_h.conj().T)
