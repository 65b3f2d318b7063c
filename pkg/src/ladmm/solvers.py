"""Linearized ADMM with an adaptive proximal coefficient, and its fixed baseline.

Both solvers share the same three-step iteration::

    x+  = argmin_x L_beta(x, y, lam)
    y+  = prox_{theta2 / (delta beta)}(y - B^T(A x+ + B y - b)/delta + B^T lam/(delta beta))
    lam+ = lam - beta (A x+ + B y+ - b)

:func:`solve_oladmm` keeps ``delta`` fixed. :func:`solve_adaptive` sets it
from the curvature of ``B^T B`` seen along the last step, backtracks until the
step passes an acceptance test, and keeps a floor under it that rises every
time ``delta`` has to grow.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import Iterate, SplitProblem

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
NUMERICAL_FAILURE = "numerical_failure"

# ||y+ - y|| below this fraction of (1 + ||y||) counts as y+ == y.
STATIONARY_RTOL = 1e-14


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by both solvers.

    ``delta0_frac`` and ``delta_min_frac`` are multiples of ``||B^T B||``;
    ``gram_norm`` picks which matrix norm that is. The default,
    ``"frobenius"``, is the scaling under which the published iteration
    counts are reproduced; ``"spectral"`` uses the largest eigenvalue.
    """

    beta: float = 1.0
    tau: float = 1.1
    eta: float = 1.1
    epsilon: float = 5.0 / 11.0
    delta0_frac: float = 0.75
    delta_min_frac: float = 0.05
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    max_iters: int = 10000
    max_backtracks_per_iter: int = 200
    gram_norm: str = "frobenius"

    def __post_init__(self):
        checks = [
            (self.beta > 0, "beta must be > 0"),
            (self.tau > 1, "tau must be > 1"),
            (self.eta > 1, "eta must be > 1"),
            (0 < self.epsilon < 0.5, "epsilon must lie in (0, 1/2)"),
            (self.delta0_frac > 0, "delta0_frac must be > 0"),
            (self.delta_min_frac > 0, "delta_min_frac must be > 0"),
            (self.eps_abs >= 0 and self.eps_rel >= 0, "stopping tolerances must be >= 0"),
            (int(self.max_iters) == self.max_iters and self.max_iters >= 1,
             "max_iters must be a positive integer"),
            (int(self.max_backtracks_per_iter) == self.max_backtracks_per_iter
             and self.max_backtracks_per_iter >= 1,
             "max_backtracks_per_iter must be a positive integer"),
            (self.gram_norm in ("spectral", "frobenius"),
             "gram_norm must be 'spectral' or 'frobenius'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)

    def tightened(self, factor: float = 1e-3) -> "SolverConfig":
        """Copy with both stopping tolerances scaled by `factor`."""
        return replace(self, eps_abs=self.eps_abs * factor, eps_rel=self.eps_rel * factor)


@dataclass
class AdaptiveState:
    delta_k: float
    delta_prev: float
    delta_min: float
    backtracks_this_iter: int = 0
    xi_running_sum: float = 0.0


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    primal_res: float
    dual_res: float
    delta_k: float
    objective: float
    backtracks: int
    elapsed_ms: float
    delta_entry: float = float("nan")
    delta_min: float = float("nan")
    xi_sum: float = 0.0


@dataclass(frozen=True)
class Snapshot:
    """Iterates produced by one iteration, kept for post-hoc diagnostics."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    delta_k: float


@dataclass
class RunSummary:
    reason: str
    iterations: int
    wall_time: float
    primal_res: float
    dual_res: float
    objective: float
    trace: list
    final: Iterate
    solver: str = ""
    xi_sum: float = 0.0
    failure: Optional[dict] = None
    y0: Optional[np.ndarray] = None
    lam0: Optional[np.ndarray] = None
    snapshots: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.reason == CONVERGED


def y_update_linearized(problem: SplitProblem, it: Iterate, beta: float, delta: float,
                        residual=None) -> np.ndarray:
    """Linearized ``y`` step with proximal weight ``delta * beta``.

    `it.x` must already hold the new ``x``. `residual`, if given, is
    ``A x+ + B y - b`` and saves one product.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    if residual is None:
        residual = problem.residual(it.x, it.y)
    point = it.y - (problem.mat_b.T @ (residual - it.lam / beta)) / delta
    return problem.y_prox_oracle(point, delta * beta)


def lambda_update(problem: SplitProblem, it: Iterate, beta: float) -> np.ndarray:
    """Multiplier step ``lam - beta (A x + B y - b)`` at the current ``(x, y)``."""
    return it.lam - beta * problem.residual(it.x, it.y)


def accept_step(delta_k: float, dy, b_dy, epsilon: float, tol: float = 0.0) -> bool:
    """Acceptance test of the backtracking loop.

    True when ``||dy|| <= tol`` (the step did not move ``y``) or when
    ``delta_k ||dy||^2 > ||B dy||^2 / (2 epsilon)`` holds strictly.
    """
    ndy2 = float(np.dot(dy, dy))
    if math.sqrt(ndy2) <= tol:
        return True
    return delta_k * ndy2 > float(np.dot(b_dy, b_dy)) / (2.0 * epsilon)


def escalate_delta_min(state: AdaptiveState, eta: float) -> AdaptiveState:
    """Raise the floor ``delta_min`` by `eta` if ``delta`` grew this iteration.

    The growth is unbounded; once ``delta_min`` passes the Gram norm the floor
    used by :func:`next_delta` saturates at that norm.
    """
    if state.delta_k > state.delta_prev:
        return replace(state, delta_min=state.delta_min * eta)
    return state


def bb_quotient(dy, b_dy, delta_k_fallback: float, tol: float = 0.0) -> float:
    """Rayleigh quotient ``||B dy||^2 / ||dy||^2``; the fallback when ``||dy|| <= tol``."""
    ndy2 = float(np.dot(dy, dy))
    if ndy2 == 0.0 or math.sqrt(ndy2) <= tol:
        return float(delta_k_fallback)
    return float(np.dot(b_dy, b_dy)) / ndy2


def next_delta(h: float, delta_min: float, btb_norm: float) -> float:
    """``max(h, min(delta_min, btb_norm))``."""
    return max(h, min(delta_min, btb_norm))


def stop_tolerances(problem: SplitProblem, x, y, config: SolverConfig):
    """Primal and dual thresholds for the residual stopping rule."""
    root_n = math.sqrt(problem.n2)
    ax = np.linalg.norm(problem.mat_a @ x)
    by = np.linalg.norm(problem.mat_b @ y)
    eps_pri = root_n * config.eps_abs + config.eps_rel * max(ax, by, np.linalg.norm(problem.rhs_b))
    eps_dual = root_n * config.eps_abs + config.eps_rel * np.linalg.norm(y)
    return float(eps_pri), float(eps_dual)


def check_stop(it: Iterate, prev_y, problem: SplitProblem, config: SolverConfig):
    """Residual-based stopping test.

    The primal residual is ``||A x + B y - b||`` and the dual residual
    ``||beta B (y - prev_y)||``. For the LASSO split ``x = A y`` these are
    ``||x - A y||`` and ``||beta A (y+ - y)||``.

    Returns
    -------
    (stop, primal_res, dual_res)
    """
    primal = float(np.linalg.norm(problem.residual(it.x, it.y)))
    dual = float(np.linalg.norm(config.beta * (problem.mat_b @ (it.y - prev_y))))
    eps_pri, eps_dual = stop_tolerances(problem, it.x, it.y, config)
    return (primal < eps_pri and dual < eps_dual), primal, dual


def _objective(problem: SplitProblem, x, y, by) -> float:
    if problem.objective is None:
        return float("nan")
    return float(problem.objective(x, y, by))


def _run(problem: SplitProblem, config: SolverConfig, init: Optional[Iterate],
         adaptive: bool, keep_iterates: bool) -> RunSummary:
    beta = config.beta
    scale = problem.gram_scale(config.gram_norm)
    if scale <= 0:
        raise ConfigurationError("||B^T B|| is zero; the linearized step is undefined")
    mat_b, rhs = problem.mat_b, problem.rhs_b
    root_n = math.sqrt(problem.n2)
    rhs_norm = float(np.linalg.norm(rhs))

    it = (init or Iterate.zeros(problem)).copy()
    it.x = problem.x_oracle(it.y, it.lam, beta)
    y0, lam0 = it.y.copy(), it.lam.copy()
    by = mat_b @ it.y

    delta0 = config.delta0_frac * scale
    state = AdaptiveState(delta_k=delta0, delta_prev=delta0,
                          delta_min=config.delta_min_frac * scale)

    trace: list[IterationRecord] = []
    snapshots: list[Snapshot] = []
    t0 = time.perf_counter()
    reason = MAX_ITERS
    failure = None
    primal = dual = float("nan")

    for k in range(config.max_iters):
        # (a) x-step; independent of delta, so backtracking leaves it alone
        it.x = problem.x_oracle(it.y, it.lam, beta)
        ax = problem.apply_a(it.x)
        r_pre = ax + by - rhs
        grad = mat_b.T @ (r_pre - it.lam / beta)
        tol = STATIONARY_RTOL * (1.0 + np.linalg.norm(it.y))

        # (b) y-step with backtracking on delta
        delta_entry = state.delta_k
        backtracks = 0
        while True:
            y_new = problem.y_prox_oracle(it.y - grad / state.delta_k, state.delta_k * beta)
            dy = y_new - it.y
            by_new = mat_b @ y_new
            b_dy = by_new - by
            if not np.all(np.isfinite(y_new)):
                failure = {"cause": "non-finite iterate", "iter": k + 1, "delta_k": state.delta_k}
                break
            if not adaptive or accept_step(state.delta_k, dy, b_dy, config.epsilon, tol):
                break
            if backtracks >= config.max_backtracks_per_iter:
                failure = {
                    "cause": "backtrack cap exceeded",
                    "iter": k + 1,
                    "delta_k": state.delta_k,
                    "norm_dy": float(np.linalg.norm(dy)),
                    "norm_b_dy": float(np.linalg.norm(b_dy)),
                }
                break
            state.delta_k *= config.tau
            backtracks += 1
        state.backtracks_this_iter = backtracks
        if failure is not None:
            reason = NUMERICAL_FAILURE
            break

        # (c) multiplier step
        residual = ax + by_new - rhs
        it.y_prev, it.y = it.y, y_new
        it.lam = it.lam - beta * residual
        by = by_new
        if not it.is_finite():
            reason = NUMERICAL_FAILURE
            failure = {"cause": "non-finite iterate", "iter": k + 1, "delta_k": state.delta_k}
            break

        delta_used = state.delta_k
        if adaptive:
            state.xi_running_sum += max(0.0, state.delta_k - state.delta_prev)
            # (d) floor escalation, (e) next delta
            state = escalate_delta_min(state, config.eta)
            h = bb_quotient(dy, b_dy, state.delta_k, tol)
            state.delta_prev = state.delta_k
            state.delta_k = next_delta(h, state.delta_min, scale)

        # (f) stopping test
        primal = float(np.linalg.norm(residual))
        dual = float(np.linalg.norm(beta * b_dy))
        eps_pri = root_n * config.eps_abs + config.eps_rel * max(
            float(np.linalg.norm(ax)), float(np.linalg.norm(by)), rhs_norm)
        eps_dual = root_n * config.eps_abs + config.eps_rel * float(np.linalg.norm(it.y))
        trace.append(IterationRecord(
            iter=k + 1,
            primal_res=primal,
            dual_res=dual,
            delta_k=delta_used,
            objective=_objective(problem, it.x, it.y, by),
            backtracks=backtracks,
            elapsed_ms=(time.perf_counter() - t0) * 1e3,
            delta_entry=delta_entry,
            delta_min=state.delta_min,
            xi_sum=state.xi_running_sum,
        ))
        if keep_iterates:
            snapshots.append(Snapshot(it.x.copy(), it.y.copy(), it.lam.copy(), delta_used))
        if primal < eps_pri and dual < eps_dual:
            reason = CONVERGED
            break

    if failure is not None:
        logger.warning("solver stopped: %s", failure)
    return RunSummary(
        reason=reason,
        iterations=len(trace),
        wall_time=time.perf_counter() - t0,
        primal_res=primal,
        dual_res=dual,
        objective=_objective(problem, it.x, it.y, by),
        trace=trace,
        final=it,
        solver="adaptive" if adaptive else "oladmm",
        xi_sum=state.xi_running_sum,
        failure=failure,
        y0=y0,
        lam0=lam0,
        snapshots=snapshots,
    )


def solve_adaptive(problem: SplitProblem, config: SolverConfig = SolverConfig(),
                   init: Optional[Iterate] = None, keep_iterates: bool = False) -> RunSummary:
    """Adaptive linearized ADMM.

    Each iteration backtracks ``delta`` by ``tau`` until the step passes
    :func:`accept_step`, multiplies the floor ``delta_min`` by ``eta`` when
    ``delta`` ended above its previous value, and proposes the next ``delta``
    as ``max(h, min(delta_min, ||B^T B||))`` with ``h`` the Rayleigh quotient
    of ``B^T B`` along the step just taken.

    Parameters
    ----------
    problem : SplitProblem
    config : SolverConfig
    init : Iterate, optional
        Starting ``(y, lambda)``; zeros by default. Its ``x`` is recomputed.
    keep_iterates : bool
        Store every ``(x, y, lambda, delta)`` in ``RunSummary.snapshots``.
    """
    return _run(problem, config, init, adaptive=True, keep_iterates=keep_iterates)


def solve_oladmm(problem: SplitProblem, config: SolverConfig = SolverConfig(),
                 init: Optional[Iterate] = None, keep_iterates: bool = False) -> RunSummary:
    """Linearized ADMM with ``delta`` fixed at ``delta0_frac * ||B^T B||``."""
    return _run(problem, config, init, adaptive=False, keep_iterates=keep_iterates)


def backtrack_bound(btb_norm: float, epsilon: float, tau: float, delta_entry: float) -> int:
    """Upper bound on backtracks in one iteration entered with `delta_entry`.

    Once ``delta > ||B^T B|| / (2 epsilon)`` every nonzero step is accepted.
    """
    if btb_norm <= 0:
        return 0
    ratio = btb_norm / (2.0 * epsilon * delta_entry)
    return max(math.ceil(math.log(ratio) / math.log(tau)) + 1, 0)
