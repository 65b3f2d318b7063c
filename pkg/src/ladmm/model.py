"""Problem data for two-block linearly constrained convex programs.

The problems handled here have the form::

    minimize    theta1(x) + theta2(y)
    subject to  A x + B y = b

with ``x`` and ``y`` ranging over the whole spaces R^n1 and R^n2. A problem is
described by its coupling matrices plus two oracles: an exact minimizer of the
augmented Lagrangian over ``x`` and the proximal map of ``theta2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

XOracle = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
ProxOracle = Callable[[np.ndarray, float], np.ndarray]
Objective = Callable[[np.ndarray, np.ndarray, np.ndarray], float]

# Full column rank of A is only verified below this many columns.
RANK_CHECK_MAX_COLS = 200


class SpectralNormError(RuntimeError):
    """Power iteration hit its cap before the Rayleigh quotient settled.

    The best estimate seen is kept in :attr:`estimate`.
    """

    def __init__(self, message: str, estimate: float, iterations: int):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


def shrink(v, kappa: float) -> np.ndarray:
    """Soft-thresholding, the proximal map of ``kappa * ||.||_1``.

    Parameters
    ----------
    v : array_like
        Input vector.
    kappa : float
        Non-negative threshold.

    Returns
    -------
    ndarray
        ``sign(v) * max(|v| - kappa, 0)`` elementwise.
    """
    if not kappa >= 0:
        raise ValueError(f"shrink threshold must be non-negative, got {kappa!r}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def spectral_norm(mat, max_iter: int = 5000, rtol: float = 1e-9) -> float:
    """Return ``||M^T M||``, the largest eigenvalue of the Gram matrix of `mat`.

    Power iteration on ``u -> M^T (M u)`` from the normalized all-ones vector.
    Stops once two successive Rayleigh quotients agree to `rtol` (relative).

    Raises
    ------
    ValueError
        If `mat` is empty.
    SpectralNormError
        If `max_iter` iterations pass without convergence.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError("spectral_norm needs a non-empty 2-D matrix")
    n = mat.shape[1]
    u = np.full(n, 1.0 / np.sqrt(n))
    rq_old = None
    best = 0.0
    for it in range(1, max_iter + 1):
        w = mat.T @ (mat @ u)
        rq = float(u @ w)
        best = max(best, rq)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # u lies in the null space; M^T M = 0 only if M = 0
            if not np.any(mat):
                return 0.0
            u = np.random.default_rng(it).standard_normal(n)
            u /= np.linalg.norm(u)
            rq_old = None
            continue
        if rq_old is not None and abs(rq - rq_old) <= rtol * abs(rq):
            return rq
        rq_old = rq
        u = w / nw
    raise SpectralNormError(
        f"power iteration did not converge in {max_iter} iterations", best, max_iter
    )


def gram_frobenius_norm(mat) -> float:
    """Frobenius norm of ``M^T M``.

    Computed through whichever of ``M^T M`` and ``M M^T`` is smaller; both
    share their nonzero eigenvalues and so their Frobenius norm.
    """
    mat = np.asarray(mat, dtype=np.float64)
    gram = mat.T @ mat if mat.shape[1] <= mat.shape[0] else mat @ mat.T
    return float(np.linalg.norm(gram, "fro"))


@dataclass(frozen=True)
class SplitProblem:
    """Two-block problem ``min theta1(x) + theta2(y)  s.t.  A x + B y = b``.

    Attributes
    ----------
    mat_a, mat_b : ndarray
        Coupling matrices, ``m x n1`` and ``m x n2``.
    rhs_b : ndarray
        Right-hand side, length ``m``.
    x_oracle : callable
        ``x_oracle(y, lam, beta)`` returns the exact minimizer over ``x`` of
        ``theta1(x) - lam^T A x + beta/2 ||A x + B y - b||^2``.
    y_prox_oracle : callable
        ``y_prox_oracle(p, w)`` returns ``argmin_y theta2(y) + w/2 ||y - p||^2``.
    btb_norm : float
        Spectral norm of ``B^T B``. Computed by power iteration when omitted.
    btb_fro : float
        Frobenius norm of ``B^T B``. Computed when omitted.
    objective : callable, optional
        ``objective(x, y, By)`` value recorded in solver traces; ``By`` is
        passed in because the solver already holds it.
    """

    mat_a: np.ndarray
    mat_b: np.ndarray
    rhs_b: np.ndarray
    x_oracle: XOracle
    y_prox_oracle: ProxOracle
    btb_norm: Optional[float] = None
    btb_fro: Optional[float] = None
    objective: Optional[Objective] = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asfortranarray(self.mat_a, dtype=np.float64)
        b = np.asfortranarray(self.mat_b, dtype=np.float64)
        rhs = np.asarray(self.rhs_b, dtype=np.float64).reshape(-1)
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("mat_a and mat_b must be 2-D")
        if a.shape[0] != b.shape[0] or rhs.shape[0] != a.shape[0]:
            raise ValueError(
                f"inconsistent row dimensions: A {a.shape}, B {b.shape}, b {rhs.shape}"
            )
        if a.shape[1] <= RANK_CHECK_MAX_COLS and np.linalg.matrix_rank(a) < a.shape[1]:
            raise ValueError("mat_a must have full column rank")
        object.__setattr__(
            self, "_a_is_identity",
            a.shape[0] == a.shape[1] and np.array_equal(a, np.eye(a.shape[0])),
        )
        for arr in (a, b, rhs):
            arr.setflags(write=False)
        object.__setattr__(self, "mat_a", a)
        object.__setattr__(self, "mat_b", b)
        object.__setattr__(self, "rhs_b", rhs)
        if self.btb_norm is None:
            object.__setattr__(self, "btb_norm", spectral_norm(b))
        if self.btb_fro is None:
            object.__setattr__(self, "btb_fro", gram_frobenius_norm(b))
        if self.btb_norm < 0 or self.btb_fro < 0:
            raise ValueError("Gram norms must be non-negative")

    @property
    def m(self) -> int:
        return self.mat_a.shape[0]

    @property
    def n1(self) -> int:
        return self.mat_a.shape[1]

    @property
    def n2(self) -> int:
        return self.mat_b.shape[1]

    def gram_scale(self, kind: str) -> float:
        """``||B^T B||`` under the named matrix norm (``spectral`` or ``frobenius``)."""
        if kind == "spectral":
            return float(self.btb_norm)
        if kind == "frobenius":
            return float(self.btb_fro)
        raise ValueError(f"unknown Gram norm {kind!r}")

    def apply_a(self, x) -> np.ndarray:
        """``A x``, skipping the product when ``A`` is the identity."""
        if self._a_is_identity:
            return np.array(x, dtype=np.float64)
        return self.mat_a @ x

    def residual(self, x, y) -> np.ndarray:
        """Constraint residual ``A x + B y - b``."""
        return self.apply_a(x) + self.mat_b @ y - self.rhs_b


@dataclass
class Iterate:
    """Current ``(x, y, lambda)`` triple plus the previous ``y``."""

    x: np.ndarray
    y: np.ndarray
    y_prev: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, problem: SplitProblem) -> "Iterate":
        return cls(
            x=np.zeros(problem.n1),
            y=np.zeros(problem.n2),
            y_prev=np.zeros(problem.n2),
            lam=np.zeros(problem.m),
        )

    @property
    def v(self) -> np.ndarray:
        """The reduced pair ``(y, lambda)`` stacked into one vector."""
        return np.concatenate([self.y, self.lam])

    def copy(self) -> "Iterate":
        return Iterate(self.x.copy(), self.y.copy(), self.y_prev.copy(), self.lam.copy())

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.x))
            and np.all(np.isfinite(self.y))
            and np.all(np.isfinite(self.lam))
        )
