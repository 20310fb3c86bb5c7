"""Dense symmetric / SPD matrix helpers used by every analytic module.

Conventions
-----------
* Matrices are plain float64 ``numpy`` arrays wrapped in thin dataclasses
  that validate shape, symmetry, and (for ``SpdMatrix``) positive
  definiteness at construction time.
* Symmetry is enforced up to a relative tolerance of 1e-12; the stored
  entries are the symmetrized input (m + m.T)/2 and are read-only.
* Diagonal matrices take fast paths (no factorization needed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NotPositiveDefinite

SYMMETRY_RTOL = 1e-12
# Cholesky pivots at or below this are treated as loss of positive definiteness.
PIVOT_FLOOR = 1e-14


def _as_square(entries) -> np.ndarray:
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric matrix; input is checked against the symmetry tolerance,
    then stored symmetrized."""

    entries: np.ndarray

    def __post_init__(self):
        m = _as_square(self.entries)
        gap = np.abs(m - m.T)
        tol = SYMMETRY_RTOL * np.maximum(1.0, np.abs(m))
        if np.any(gap > tol):
            worst = float(gap.max())
            raise ValueError(f"matrix is not symmetric (worst asymmetry {worst:.3e})")
        sym = (m + m.T) / 2.0
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_diagonal(self) -> bool:
        off = self.entries - np.diag(np.diag(self.entries))
        return not np.any(off)

    @classmethod
    def diagonal(cls, diag) -> "SymMatrix":
        return cls(np.diag(np.asarray(diag, dtype=float)))


@dataclass(frozen=True, eq=False)
class SpdMatrix(SymMatrix):
    """Symmetric positive-definite matrix with a cached Cholesky factor.

    ``allow_semidefinite=True`` relaxes the construction check to PSD
    (needed for zero initial covariances and projection outputs); strict
    operations on such a matrix still raise ``NotPositiveDefinite``.
    """

    allow_semidefinite: bool = field(default=False)

    def __post_init__(self):
        super().__post_init__()
        if self.allow_semidefinite:
            w = np.linalg.eigvalsh(self.entries)
            scale = max(1.0, float(np.abs(self.entries).max(initial=0.0)))
            if w.min(initial=0.0) < -1e-10 * scale:
                raise NotPositiveDefinite(
                    f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})",
                    operation="SpdMatrix",
                )
        else:
            self.chol_lower  # noqa: B018  - eager validation

    @cached_property
    def chol_lower(self) -> np.ndarray:
        """Lower-triangular Cholesky factor; raises if any pivot <= 1e-14."""
        if self.is_diagonal:
            d = np.diag(self.entries)
            if np.any(d <= PIVOT_FLOOR):
                raise NotPositiveDefinite(
                    f"diagonal pivot {d.min():.3e} <= {PIVOT_FLOOR:g}", operation="cholesky"
                )
            out = np.diag(np.sqrt(d))
        else:
            try:
                out = np.linalg.cholesky(self.entries)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(str(exc), operation="cholesky") from exc
            piv = np.diag(out) ** 2
            if np.any(piv <= PIVOT_FLOOR):
                raise NotPositiveDefinite(
                    f"Cholesky pivot {piv.min():.3e} <= {PIVOT_FLOOR:g}", operation="cholesky"
                )
        out.flags.writeable = False
        return out

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, diag, *, allow_semidefinite: bool = False) -> "SpdMatrix":
        return cls(np.diag(np.asarray(diag, dtype=float)), allow_semidefinite)


def cholesky(m: SpdMatrix) -> np.ndarray:
    """Lower-triangular L with L @ L.T == m.entries."""
    return m.chol_lower


def sym_exp(m: SymMatrix, scale: float = 1.0) -> SymMatrix:
    """Matrix exponential exp(scale * m) through the symmetric eigendecomposition."""
    return SymMatrix(_sym_exp_entries(m.entries, scale))


def _sym_exp_entries(a: np.ndarray, scale: float) -> np.ndarray:
    if not np.any(a - np.diag(np.diag(a))):
        return np.diag(np.exp(scale * np.diag(a)))
    w, q = np.linalg.eigh(a)
    return (q * np.exp(scale * w)) @ q.T


def inverse(m: SpdMatrix) -> SpdMatrix:
    """Inverse via the cached Cholesky factor."""
    if m.is_diagonal:
        m.chol_lower  # pivot validation
        return SpdMatrix(np.diag(1.0 / np.diag(m.entries)))
    from scipy.linalg import cho_solve

    inv = cho_solve((m.chol_lower, True), np.eye(m.dim))
    return SpdMatrix((inv + inv.T) / 2.0)


def log_det(m: SpdMatrix) -> float:
    """log det m, computed as 2 * sum(log diag(L))."""
    return 2.0 * float(np.sum(np.log(np.diag(m.chol_lower))))


def trace(m: SymMatrix) -> float:
    return float(np.trace(m.entries))


def spectral_norm(m: SymMatrix) -> float:
    """Largest absolute eigenvalue."""
    if m.dim == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvalsh(m.entries)).max())
