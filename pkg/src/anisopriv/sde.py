"""Euler-Maruyama ensembles with pluggable drift and diffusion.

The update is x_{k+1} = x_k + h * drift(x_k) + sqrt(h) * sqrt_cov(x_k) @ z_k
with z_k standard normal. Increments come from a counter-based stream keyed
by (seed, step), drawn row-major over (path, coordinate), so results do not
depend on execution order and paired ensembles can share noise exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    BatchLargerThanDataset,
    CovarianceEvaluationFailed,
    NotPositiveDefinite,
)
from .linalg import SpdMatrix, SymMatrix
from .rng import step_normals

_FD_STEP = 1e-6


# ---------------------------------------------------------------------------
# drift specifications


@dataclass(frozen=True, eq=False)
class QuadraticDrift:
    """drift(x) = -design.T @ (design @ x - target)."""

    design: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.design, dtype=float))
        t = np.asarray(self.target, dtype=float).ravel()
        if d.shape[0] != t.shape[0]:
            raise ValueError("target length does not match design rows")
        object.__setattr__(self, "design", d)
        object.__setattr__(self, "target", t)

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return -self.design.T @ (self.design @ x - self.target)
        return -(x @ self.design.T - self.target) @ self.design


@dataclass(frozen=True, eq=False)
class CallableDrift:
    """Arbitrary drift; fn maps a state vector to a drift vector.

    Set vectorized=True when fn accepts (paths, dim) row batches directly.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    vectorized: bool = False

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 or self.vectorized:
            return np.asarray(self.fn(x), dtype=float)
        return np.stack([np.asarray(self.fn(row), dtype=float) for row in x])


@dataclass(frozen=True, eq=False)
class DatasetGradientDrift:
    """Gradient-flow drift -grad_fn(x, dataset) for a loss over a dataset."""

    grad_fn: Callable[[np.ndarray, Any], np.ndarray]
    dataset: Any

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return -np.asarray(self.grad_fn(x, self.dataset), dtype=float)
        return -np.stack([np.asarray(self.grad_fn(row, self.dataset), dtype=float) for row in x])


# ---------------------------------------------------------------------------
# covariance specifications


def _finite_or_fail(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise CovarianceEvaluationFailed(
            f"{what} produced non-finite entries", operation="covariance"
        )
    return arr


@dataclass(frozen=True, eq=False)
class ConstantSpd:
    """State-independent covariance. PSD-relaxed matrices (e.g. exactly zero)
    are accepted; their square root comes from the eigendecomposition."""

    matrix: SpdMatrix

    @cached_property
    def _sqrt(self) -> np.ndarray:
        try:
            return self.matrix.chol_lower
        except NotPositiveDefinite:
            w, q = np.linalg.eigh(self.matrix.entries)
            return (q * np.sqrt(np.maximum(w, 0.0))) @ q.T

    def apply_sqrt(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return z @ self._sqrt.T

    def whiten(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Rows of sqrt_cov^{-1} v; requires strict positive definiteness."""
        l = self.matrix.chol_lower
        return solve_triangular(l, np.atleast_2d(v).T, lower=True).T

    def matrix_at(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.entries

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.atleast_2d(x), dtype=float)


@dataclass(frozen=True, eq=False)
class DiagonalOfState:
    """Diagonal covariance diag(fn(x)) with fn mapping state to positive
    variances. Set vectorized=True when fn handles (paths, dim) batches."""

    fn: Callable[[np.ndarray], np.ndarray]
    vectorized: bool = False

    def diag_at(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.vectorized:
            d = np.asarray(self.fn(x), dtype=float)
        else:
            d = np.stack([np.asarray(self.fn(row), dtype=float) for row in x])
        _finite_or_fail(d, "diagonal covariance")
        if np.any(d <= 0.0):
            raise CovarianceEvaluationFailed(
                "diagonal covariance must be strictly positive", operation="covariance"
            )
        return d

    def apply_sqrt(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.sqrt(self.diag_at(x)) * z

    def whiten(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.atleast_2d(v) / np.sqrt(self.diag_at(x))

    def matrix_at(self, x: np.ndarray) -> np.ndarray:
        return np.diag(self.diag_at(x)[0])

    def divergence(self, x: np.ndarray) -> np.ndarray:
        # diagonal case: component i is d Sigma_ii / d x_i, forward difference
        x = np.atleast_2d(np.asarray(x, dtype=float))
        base = self.diag_at(x)
        out = np.empty_like(base)
        for i in range(x.shape[1]):
            step = _FD_STEP * np.maximum(1.0, np.abs(x[:, i]))
            xp = x.copy()
            xp[:, i] += step
            out[:, i] = (self.diag_at(xp)[:, i] - base[:, i]) / step
        return out


@dataclass(frozen=True, eq=False)
class MinibatchSgd:
    """Minibatch-sampling covariance built from per-example gradients.

    grad_fn maps a state vector to the (N, dim) stack of per-example
    gradients of a sum-structured loss. The raw sampling covariance is not
    PSD in general; it is projected (eigenvalue clamp at psd_floor) before
    taking the square root.
    """

    grad_fn: Callable[[np.ndarray], np.ndarray]
    batch: int
    replacement: bool = True
    psd_floor: float = 1e-10

    def matrix_at(self, x: np.ndarray, *, strict: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        grads = np.asarray(self.grad_fn(x), dtype=float)
        _finite_or_fail(grads, "per-example gradients")
        raw = minibatch_covariance(grads, grads.sum(axis=0), self.batch, self.replacement)
        proj = psd_project(raw, self.psd_floor)
        if strict and self.psd_floor <= 0.0 and not np.any(proj.entries):
            raise CovarianceEvaluationFailed(
                "PSD projection degenerated to zero with psd_floor = 0",
                operation="covariance",
            )
        return proj.entries

    def _sqrt_at(self, x: np.ndarray, *, strict: bool = False) -> np.ndarray:
        m = self.matrix_at(x, strict=strict)
        try:
            return SpdMatrix(m, allow_semidefinite=True).chol_lower
        except NotPositiveDefinite:
            w, q = np.linalg.eigh(m)
            return (q * np.sqrt(np.maximum(w, 0.0))) @ q.T

    def apply_sqrt(self, x: np.ndarray, z: np.ndarray, *, strict: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(z)
        out = np.empty_like(z)
        for p in range(x.shape[0]):
            out[p] = self._sqrt_at(x[p], strict=strict) @ z[p]
        return out

    def whiten(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(v)
        out = np.empty_like(v)
        for p in range(x.shape[0]):
            l = SpdMatrix(self.matrix_at(x[p])).chol_lower
            out[p] = solve_triangular(l, v[p], lower=True)
        return out

    def divergence(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for p in range(x.shape[0]):
            out[p] = _generic_divergence(lambda y: self.matrix_at(y), x[p])
        return out


def _generic_divergence(matrix_at: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """(div S)_i = sum_j dS_ij/dx_j by forward differences."""
    d = x.shape[0]
    base = matrix_at(x)
    out = np.zeros(d)
    for j in range(d):
        step = _FD_STEP * max(1.0, abs(float(x[j])))
        xp = x.copy()
        xp[j] += step
        out += (matrix_at(xp)[:, j] - base[:, j]) / step
    return out


# ---------------------------------------------------------------------------
# minibatch covariance and PSD repair


def minibatch_covariance(per_example_grads: np.ndarray, full_grad: np.ndarray,
                         batch: int, replacement: bool) -> SymMatrix:
    """Sampling covariance of the minibatch gradient of a sum-structured loss.

    For N examples and batch size n the scale factor is
    (N^2/n)(1 - 1/N) with replacement and (N^2/n)(1 - n/N) without, applied
    to sum_l g_l g_l.T - g g.T. The result need not be PSD; see psd_project.
    """
    g = np.atleast_2d(np.asarray(per_example_grads, dtype=float))
    full = np.asarray(full_grad, dtype=float).ravel()
    n_examples = g.shape[0]
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if batch > n_examples:
        raise BatchLargerThanDataset(
            f"batch {batch} exceeds dataset size {n_examples}", operation="minibatch_covariance"
        )
    colsum = g.sum(axis=0)
    tol = 1e-9 * max(1.0, float(np.abs(colsum).max(initial=0.0)))
    if np.abs(colsum - full).max(initial=0.0) > tol:
        raise ValueError("full_grad must equal the column sum of per_example_grads")
    if replacement:
        alpha = n_examples**2 / batch * (1.0 - 1.0 / n_examples)
    else:
        alpha = n_examples**2 / batch * (1.0 - batch / n_examples)
    raw = alpha * (g.T @ g - np.outer(full, full))
    return SymMatrix((raw + raw.T) / 2.0)


def psd_project(m: SymMatrix, floor: float = 0.0) -> SpdMatrix:
    """Nearest (Frobenius) PSD matrix with eigenvalues clamped at floor."""
    if floor < 0.0:
        raise ValueError(f"floor must be nonnegative, got {floor}")
    w, q = np.linalg.eigh(m.entries)
    clamped = (q * np.maximum(w, floor)) @ q.T
    return SpdMatrix((clamped + clamped.T) / 2.0, allow_semidefinite=True)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimConfig:
    """Discretization settings. horizon/step must be an integer number of
    steps, and that count must be divisible by record_stride so the recorded
    grid is uniform and ends exactly at the horizon."""

    step: float
    horizon: float
    paths: int
    seed: int
    record_stride: int = 1

    def __post_init__(self):
        if not (self.step > 0.0 and np.isfinite(self.step)):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if not (self.horizon >= self.step):
            raise ValueError("horizon must be at least one step")
        if self.paths < 1:
            raise ValueError(f"paths must be >= 1, got {self.paths}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")
        ratio = self.horizon / self.step
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError("horizon must be an integer multiple of step")
        if n % self.record_stride != 0:
            raise ValueError("step count must be divisible by record_stride")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.step)


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Recorded states: times (R,), states (paths, R, dim)."""

    times: np.ndarray
    states: np.ndarray
    seed: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or s.ndim != 3 or s.shape[1] != t.shape[0]:
            raise ValueError("states must be (paths, len(times), dim)")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("times must start at 0 and strictly increase")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]


def _prepare(x0, cfg: SimConfig):
    x0 = np.asarray(x0, dtype=float).ravel()
    d = x0.shape[0]
    n = cfg.n_steps
    n_rec = n // cfg.record_stride + 1
    times = np.arange(n_rec) * (cfg.step * cfg.record_stride)
    x = np.tile(x0, (cfg.paths, 1))
    return x, d, n, n_rec, times


def simulate(drift, cov, x0, cfg: SimConfig, *, strict_covariance: bool = False) -> TrajectoryEnsemble:
    """Euler-Maruyama ensemble of cfg.paths trajectories from the shared x0."""
    x, d, n, n_rec, times = _prepare(x0, cfg)
    rec = np.empty((cfg.paths, n_rec, d))
    rec[:, 0, :] = x
    sqrt_h = np.sqrt(cfg.step)
    kwargs = {"strict": True} if strict_covariance and isinstance(cov, MinibatchSgd) else {}
    for k in range(n):
        z = step_normals(cfg.seed, k, (cfg.paths, d))
        x = x + cfg.step * drift.evaluate(x) + sqrt_h * cov.apply_sqrt(x, z, **kwargs)
        if (k + 1) % cfg.record_stride == 0:
            rec[:, (k + 1) // cfg.record_stride, :] = x
    return TrajectoryEnsemble(times, rec, cfg.seed)


def paired_simulate(drift_a, drift_b, cov, x0, cfg: SimConfig,
                    *, strict_covariance: bool = False) -> tuple[TrajectoryEnsemble, TrajectoryEnsemble]:
    """Two ensembles driven by the same Gaussian increments per (path, step).

    Equal drifts therefore give bit-identical ensembles, and the pathwise
    difference between the arms is the data-difference signal alone.
    """
    xa, d, n, n_rec, times = _prepare(x0, cfg)
    xb = xa.copy()
    rec_a = np.empty((cfg.paths, n_rec, d))
    rec_b = np.empty((cfg.paths, n_rec, d))
    rec_a[:, 0, :] = xa
    rec_b[:, 0, :] = xb
    sqrt_h = np.sqrt(cfg.step)
    kwargs = {"strict": True} if strict_covariance and isinstance(cov, MinibatchSgd) else {}
    for k in range(n):
        z = step_normals(cfg.seed, k, (cfg.paths, d))
        xa = xa + cfg.step * drift_a.evaluate(xa) + sqrt_h * cov.apply_sqrt(xa, z, **kwargs)
        xb = xb + cfg.step * drift_b.evaluate(xb) + sqrt_h * cov.apply_sqrt(xb, z, **kwargs)
        if (k + 1) % cfg.record_stride == 0:
            j = (k + 1) // cfg.record_stride
            rec_a[:, j, :] = xa
            rec_b[:, j, :] = xb
    return TrajectoryEnsemble(times, rec_a, cfg.seed), TrajectoryEnsemble(times, rec_b, cfg.seed)


# ---------------------------------------------------------------------------
# export


def write_ensemble_csv(ensemble: TrajectoryEnsemble, path) -> None:
    """Rows (path, time, x0..x{dim-1}), floats at 17 significant digits."""
    d = ensemble.dim
    header = ["path", "time", *[f"x{i}" for i in range(d)]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p in range(ensemble.paths):
            for j, t in enumerate(ensemble.times):
                w.writerow(
                    [p, f"{t:.17g}", *[f"{v:.17g}" for v in ensemble.states[p, j, :]]]
                )
