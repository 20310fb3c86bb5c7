"""Relative-entropy bounds between diffusion laws.

Two ingredients:

* A Monte-Carlo evaluator of the drift/diffusion mismatch field

      mismatch(x) = (S_b(x) - S_a(x)) @ score_b(x) - (h_b(x) - h_a(x)),
      h(x) = drift(x) - div S(x),

  whose whitened squared norm, averaged over the first process's law and
  integrated in time, upper-bounds KL(law_a(t) || law_b(t)).

* Closed-form bounds for strongly convex losses with isotropic noise,
  driven by log-Sobolev constants, plus the gradient-moment and
  mean-square convergence estimates they rest on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .errors import ScoreRequired
from .ou import GaussianState
from .sde import ConstantSpd, DiagonalOfState, TrajectoryEnsemble

# ---------------------------------------------------------------------------
# score specifications


@dataclass(frozen=True, eq=False)
class GaussianScore:
    """Score of a Gaussian law: x -> -cov^{-1} (x - mean)."""

    state: GaussianState

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        l = self.state.cov.chol_lower
        return -cho_solve((l, True), (x - self.state.mean).T).T


@dataclass(frozen=True, eq=False)
class CallableScore:
    fn: Callable[[np.ndarray], np.ndarray]
    vectorized: bool = False

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.vectorized:
            return np.asarray(self.fn(x), dtype=float)
        return np.stack([np.asarray(self.fn(row), dtype=float) for row in x])


class AbsentScore:
    """Placeholder meaning "no score available"; valid only when the two
    covariance specifications are identical."""


ABSENT_SCORE = AbsentScore()


@dataclass(frozen=True, eq=False)
class TimeVaryingScore:
    """Family t -> ScoreSpec, resolved per recorded time by mc_kl_bound."""

    at_time: Callable[[float], object]


# ---------------------------------------------------------------------------
# mismatch field


def _covs_equal(cov_a, cov_b) -> bool:
    if cov_a is cov_b:
        return True
    if isinstance(cov_a, ConstantSpd) and isinstance(cov_b, ConstantSpd):
        return np.array_equal(cov_a.matrix.entries, cov_b.matrix.entries)
    return False


def _delta_sigma_apply(cov_a, cov_b, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    if isinstance(cov_a, ConstantSpd) and isinstance(cov_b, ConstantSpd):
        return s @ (cov_b.matrix.entries - cov_a.matrix.entries)
    if isinstance(cov_a, DiagonalOfState) and isinstance(cov_b, DiagonalOfState):
        return (cov_b.diag_at(x) - cov_a.diag_at(x)) * s
    out = np.empty_like(s)
    for p in range(x.shape[0]):
        delta = cov_b.matrix_at(x[p : p + 1]) - cov_a.matrix_at(x[p : p + 1])
        out[p] = delta @ s[p]
    return out


def phi(x, drift_a, drift_b, cov_a, cov_b, score=ABSENT_SCORE) -> np.ndarray:
    """Mismatch field between (drift_a, cov_a) and (drift_b, cov_b) at x.

    With identical covariance specifications this is drift_a(x) - drift_b(x);
    otherwise the score of the second process's law is required.
    """
    if isinstance(score, TimeVaryingScore):
        raise ValueError("resolve a TimeVaryingScore at a concrete time first")
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    rows = np.atleast_2d(x_arr)

    if _covs_equal(cov_a, cov_b):
        out = np.atleast_2d(drift_a.evaluate(rows)) - np.atleast_2d(drift_b.evaluate(rows))
        return out[0] if single else out

    if isinstance(score, AbsentScore):
        raise ScoreRequired(
            "covariances differ; a score for the second process is required",
            operation="phi",
        )
    s = score.evaluate(rows)
    h_gap = (
        np.atleast_2d(drift_b.evaluate(rows))
        - cov_b.divergence(rows)
        - np.atleast_2d(drift_a.evaluate(rows))
        + cov_a.divergence(rows)
    )
    out = _delta_sigma_apply(cov_a, cov_b, rows, s) - h_gap
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Monte-Carlo KL bound


@dataclass(frozen=True, eq=False)
class BoundCurve:
    """Running KL upper bound on the ensemble's recorded grid.

    stderr is the Monte-Carlo standard error of each bound value (zero when
    the integrand is path-independent).
    """

    times: np.ndarray
    bounds: np.ndarray
    stderr: np.ndarray


def mc_kl_bound(ensemble: TrajectoryEnsemble, drift_a, drift_b, cov_a, cov_b,
                score=ABSENT_SCORE) -> BoundCurve:
    """Estimate t -> (1/2) int_0^t E ||S_a^{-1/2} mismatch||^2 ds on the
    ensemble's recorded times (ensemble average in space, left-endpoint
    Riemann sum in time). The ensemble must be simulated under the FIRST
    process."""
    times = ensemble.times
    n_rec = times.shape[0]
    paths = ensemble.paths
    w = np.zeros((paths, n_rec))
    for j in range(n_rec - 1):  # left endpoints only
        sc = score.at_time(float(times[j])) if isinstance(score, TimeVaryingScore) else score
        x = ensemble.states[:, j, :]
        f = phi(x, drift_a, drift_b, cov_a, cov_b, sc)
        white = cov_a.whiten(x, f)
        w[:, j] = np.sum(white * white, axis=1)
    dt = np.diff(times)
    per_path = np.zeros((paths, n_rec))
    per_path[:, 1:] = 0.5 * np.cumsum(w[:, :-1] * dt, axis=1)
    bounds = per_path.mean(axis=0)
    if paths > 1:
        stderr = per_path.std(axis=0, ddof=1) / math.sqrt(paths)
    else:
        stderr = np.zeros(n_rec)
    return BoundCurve(times.copy(), bounds, stderr)


def write_bound_csv(curve: BoundCurve, path) -> None:
    """Columns time,bound at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time", "bound"])
        for t, b in zip(curve.times, curve.bounds):
            wr.writerow([f"{t:.17g}", f"{b:.17g}"])


# ---------------------------------------------------------------------------
# closed-form bounds


@dataclass(frozen=True, eq=False)
class RegularityParams:
    """Strong convexity / smoothness / noise-scale data for a pair of losses.

    kappa, grad_lip describe the first loss (strong convexity and gradient
    Lipschitz constants), the primed fields the second; sigma, sigma_prime
    are the isotropic noise scales; lsi0 is the log-Sobolev constant of the
    shared initial law; xstar, xstar_prime locate the two minimizers.
    """

    kappa: float
    grad_lip: float
    kappa_prime: float
    grad_lip_prime: float
    sigma: float
    sigma_prime: float
    lsi0: float
    xstar: np.ndarray
    xstar_prime: np.ndarray

    def __post_init__(self):
        for name in ("kappa", "grad_lip", "kappa_prime", "grad_lip_prime",
                     "sigma", "sigma_prime", "lsi0"):
            v = float(getattr(self, name))
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        if self.kappa > self.grad_lip:
            raise ValueError("kappa cannot exceed grad_lip")
        if self.kappa_prime > self.grad_lip_prime:
            raise ValueError("kappa_prime cannot exceed grad_lip_prime")
        a = np.asarray(self.xstar, dtype=float).ravel()
        b = np.asarray(self.xstar_prime, dtype=float).ravel()
        if a.shape != b.shape:
            raise ValueError("xstar and xstar_prime must share length")
        object.__setattr__(self, "xstar", a)
        object.__setattr__(self, "xstar_prime", b)

    @property
    def opt_gap_sq(self) -> float:
        return float(np.sum((self.xstar - self.xstar_prime) ** 2))


def lsi_rate(sigma: float, kappa: float) -> float:
    """Exponential rate sigma^2 kappa / 2 of the log-Sobolev constant flow."""
    return sigma**2 * kappa / 2.0


def lsi_constant(t: float, rho: float, c0: float) -> float:
    """(2/rho)(1 - e^{-rho t}) + c0 e^{-rho t}; monotone from c0 to 2/rho."""
    if not (rho > 0.0):
        raise ValueError(f"rho must be positive, got {rho}")
    if not (c0 > 0.0):
        raise ValueError(f"c0 must be positive, got {c0}")
    if not (t >= 0.0):
        raise ValueError(f"t must be nonnegative, got {t}")
    if math.isinf(t):
        return 2.0 / rho
    decay = math.exp(-rho * t)
    return (2.0 / rho) * (1.0 - decay) + c0 * decay


def klbound_closed(p: RegularityParams, *, stationary_limit: bool = False) -> float:
    """Time-uniform KL bound for the strongly convex isotropic pair.

    stationary_limit drops the +1 moment slack, the variant valid when the
    first process starts at its stationary law.
    """
    moment = p.sigma**2 / (2.0 * p.kappa) + (0.0 if stationary_limit else 1.0)
    brace = 2.0 * (p.grad_lip**2 / p.grad_lip_prime**2 + 2.0) * moment + p.opt_gap_sq
    lead = 8.0 * p.grad_lip_prime**2 / p.sigma**2
    tail = (4.0 + p.lsi0 * p.sigma_prime**2 * p.kappa_prime) / (
        p.sigma**2 * p.sigma_prime**2 * p.kappa_prime
    )
    return lead * brace * tail


def klbound_stationary(p: RegularityParams) -> float:
    """KL bound between the two stationary laws."""
    brace = (
        2.0
        * (p.sigma_prime**2 * p.grad_lip**2 / (p.sigma**2 * p.grad_lip_prime**2) + 2.0)
        * p.sigma**2
        / (2.0 * p.kappa)
        + p.opt_gap_sq
    )
    lead = p.grad_lip_prime**2 / (2.0 * p.kappa_prime * p.sigma_prime**6)
    return lead * brace


def xi_bound(t: float, p: RegularityParams, coupling: float) -> float:
    """Second moment bound for ||grad_a - coupling * grad_b||^2 along the
    first process; nonincreasing in t, finite limit at t = math.inf."""
    if not (coupling > 0.0):
        raise ValueError(f"coupling must be positive, got {coupling}")
    if not (t >= 0.0):
        raise ValueError(f"t must be nonnegative, got {t}")
    decay = 0.0 if math.isinf(t) else math.exp(-2.0 * p.kappa * t)
    m2l2 = coupling**2 * p.grad_lip_prime**2
    brace = (
        2.0 * (p.grad_lip**2 / m2l2 + 2.0) * (p.sigma**2 / (2.0 * p.kappa) + decay)
        + p.opt_gap_sq
    )
    return 2.0 * m2l2 * brace


def convergence_bound(t: float, kappa: float, trace_sigma: float, v0: float) -> float:
    """Upper bound on (1/2) E ||x_t - xstar||^2 for a kappa-strongly convex
    drift with constant noise of total variance trace_sigma."""
    if not (kappa > 0.0):
        raise ValueError(f"kappa must be positive, got {kappa}")
    if trace_sigma < 0.0:
        raise ValueError(f"trace_sigma must be nonnegative, got {trace_sigma}")
    if v0 < 0.0:
        raise ValueError(f"v0 must be nonnegative, got {v0}")
    if not (t >= 0.0):
        raise ValueError(f"t must be nonnegative, got {t}")
    decay = 0.0 if math.isinf(t) else math.exp(-2.0 * kappa * t)
    return v0 * decay + trace_sigma / (4.0 * kappa) * (1.0 - decay)
