"""Post-hoc checks of the convergence identities along a solver trace.

All checks work on the reduced pair ``v = (y, lambda)`` and take a
:class:`~ladmm.solvers.RunSummary` produced with ``keep_iterates=True``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import SplitProblem
from .solvers import RunSummary, SolverConfig, backtrack_bound

# Block matrices are only formed densely up to this size of v.
DENSE_LIMIT = 1000
DESCENT_SLACK = 1e-10


class ReferenceError(ValueError):
    """The reference solution handed to a check is unusable."""


@dataclass(frozen=True)
class TheoryMatrices:
    q_k: np.ndarray
    h_k: np.ndarray
    m_mat: np.ndarray


@dataclass(frozen=True)
class TildeIterate:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return np.concatenate([self.y, self.lam])


def build_theory_matrices(delta_k: float, beta: float, mat_b) -> TheoryMatrices:
    """Dense ``Q``, ``H`` and ``M`` for one value of ``delta``.

    ``Q = [[beta delta I, 0], [-B, I/beta]]``,
    ``H = diag(beta delta I, I/beta)`` and ``M = [[I, 0], [-beta B, I]]``.
    """
    if not (delta_k > 0 and beta > 0):
        raise ValueError("delta_k and beta must be positive")
    mat_b = np.atleast_2d(np.asarray(mat_b, dtype=np.float64))
    m, n2 = mat_b.shape
    eye_n, eye_m = np.eye(n2), np.eye(m)
    zero_nm = np.zeros((n2, m))
    q = np.block([[beta * delta_k * eye_n, zero_nm], [-mat_b, eye_m / beta]])
    h = np.block([[beta * delta_k * eye_n, zero_nm], [zero_nm.T, eye_m / beta]])
    mm = np.block([[eye_n, zero_nm], [-beta * mat_b, eye_m]])
    return TheoryMatrices(q, h, mm)


def tilde_iterate(problem: SplitProblem, x_new, y_old, lam_old, y_new, beta: float) -> TildeIterate:
    """``(x+, y+, lam - beta (A x+ + B y - b))`` for one step from ``(y, lam)``."""
    lam_t = lam_old - beta * problem.residual(x_new, y_old)
    return TildeIterate(np.asarray(x_new), np.asarray(y_new), lam_t)


def _steps(summary: RunSummary):
    """Yield ``(y_k, lam_k, snapshot_{k+1})`` along the trace."""
    if summary.y0 is None:
        raise ValueError("summary carries no initial point")
    if len(summary.snapshots) != summary.iterations:
        raise ValueError("summary has no iterates; rerun with keep_iterates=True")
    y, lam = summary.y0, summary.lam0
    for snap in summary.snapshots:
        yield y, lam, snap
        y, lam = snap.y, snap.lam


def _dense_ok(problem: SplitProblem) -> bool:
    return problem.n2 + problem.m <= DENSE_LIMIT


def m_identity_errors(problem: SplitProblem, summary: RunSummary, beta: float) -> list:
    """Per-iteration error of ``v^k - v^{k+1} = M (v^k - v~^k)``.

    Each entry is ``||lhs - rhs|| / (1 + ||v^k - v^{k+1}||)``.
    """
    mat_b = problem.mat_b
    n2 = problem.n2
    m_mat = build_theory_matrices(1.0, beta, mat_b).m_mat if _dense_ok(problem) else None
    errs = []
    for y, lam, snap in _steps(summary):
        tilde = tilde_iterate(problem, snap.x, y, lam, snap.y, beta)
        lhs = np.concatenate([y - snap.y, lam - snap.lam])
        gap = np.concatenate([y, lam]) - tilde.v
        if m_mat is not None:
            rhs = m_mat @ gap
        else:
            rhs = np.concatenate([gap[:n2], gap[n2:] - beta * (mat_b @ gap[:n2])])
        errs.append(float(np.linalg.norm(lhs - rhs) / (1.0 + np.linalg.norm(lhs))))
    return errs


def check_m_identity(problem: SplitProblem, summary: RunSummary, beta: float) -> float:
    """Largest :func:`m_identity_errors` entry; 0 for an empty trace."""
    errs = m_identity_errors(problem, summary, beta)
    return max(errs, default=0.0)


def multiplier_identity_errors(problem: SplitProblem, summary: RunSummary, beta: float) -> list:
    """``||(lam^k - lam^{k+1}) - beta (A x+ + B y+ - b)|| / (1 + ||lam^k||)`` per step."""
    errs = []
    for _, lam, snap in _steps(summary):
        r = problem.residual(snap.x, snap.y)
        errs.append(float(np.linalg.norm((lam - snap.lam) - beta * r) / (1.0 + np.linalg.norm(lam))))
    return errs


def qhm_errors(problem: SplitProblem, summary: RunSummary, beta: float) -> list:
    """``max|Q - H M|`` for every distinct ``delta`` in the trace (dense sizes only)."""
    if not _dense_ok(problem):
        return []
    out = []
    for delta in sorted({snap.delta_k for snap in summary.snapshots}):
        tm = build_theory_matrices(delta, beta, problem.mat_b)
        out.append(float(np.max(np.abs(tm.q_k - tm.h_k @ tm.m_mat))))
    return out


def _h_norm_sq(vec, delta: float, beta: float, n2: int) -> float:
    dy, dl = vec[:n2], vec[n2:]
    return beta * delta * float(dy @ dy) + float(dl @ dl) / beta


def descent_margins(problem: SplitProblem, summary: RunSummary, v_star, beta: float,
                    epsilon: float) -> list:
    """Per-iteration slack ``rhs - lhs`` of the H-norm descent inequality.

    The inequality is ::

        ||v+ - v*||_H^2 <= ||v - v*||_H^2
                           - beta (delta ||dy||^2 - ||B dy||^2 / (2 eps))
                           - (1 - 2 eps) / beta ||dlam||^2

    with ``H = diag(beta delta I, I / beta)`` and ``delta`` the value used in
    that iteration. Entries are ``(slack, ||v - v*||_H^2)``; negative slack
    means the inequality failed.
    """
    n2 = problem.n2
    v_star = np.asarray(v_star, dtype=np.float64)
    dense = _dense_ok(problem)
    out = []
    for y, lam, snap in _steps(summary):
        delta = snap.delta_k
        v_k = np.concatenate([y, lam])
        v_next = np.concatenate([snap.y, snap.lam])
        if dense:
            h = build_theory_matrices(delta, beta, problem.mat_b).h_k
            before = float((v_k - v_star) @ h @ (v_k - v_star))
            after = float((v_next - v_star) @ h @ (v_next - v_star))
        else:
            before = _h_norm_sq(v_k - v_star, delta, beta, n2)
            after = _h_norm_sq(v_next - v_star, delta, beta, n2)
        dy = snap.y - y
        b_dy = problem.mat_b @ dy
        dlam = snap.lam - lam
        decrease = beta * (delta * float(dy @ dy) - float(b_dy @ b_dy) / (2 * epsilon)) \
            + (1 - 2 * epsilon) / beta * float(dlam @ dlam)
        out.append((before - decrease - after, before))
    return out


def check_descent(problem: SplitProblem, summary: RunSummary, reference, beta: float,
                  epsilon: float, slack: float = DESCENT_SLACK) -> int:
    """Count iterations where the H-norm descent inequality fails.

    `reference` is either a converged :class:`RunSummary` or the vector
    ``v* = (y*, lambda*)``. A failure is a negative margin beyond
    ``slack * (1 + ||v^k - v*||_H^2)``.
    """
    if isinstance(reference, RunSummary):
        if not reference.converged:
            raise ReferenceError(f"reference solve ended with {reference.reason!r}")
        v_star = reference.final.v
    else:
        v_star = np.asarray(reference, dtype=np.float64)
    if v_star.shape != (problem.n2 + problem.m,):
        raise ReferenceError("reference has the wrong dimension")
    margins = descent_margins(problem, summary, v_star, beta, epsilon)
    return sum(1 for gap, before in margins if gap < -slack * (1.0 + before))


def xi_budget(config: SolverConfig, btb_norm: float) -> float:
    """``ceil(log_eta(||B^T B|| / delta_min)) * ||B^T B||`` at the initial ``delta_min``."""
    delta_min = config.delta_min_frac * btb_norm
    if btb_norm <= 0:
        return 0.0
    # round before ceil so that log(1) and exact powers of eta are not bumped up
    steps = math.ceil(round(math.log(btb_norm / delta_min) / math.log(config.eta), 12))
    return max(steps, 0) * btb_norm


def backtrack_excess(problem: SplitProblem, summary: RunSummary, config: SolverConfig) -> int:
    """Largest ``backtracks - bound`` over the trace; <= 0 means the bound held."""
    worst = -math.inf
    for rec in summary.trace:
        bound = backtrack_bound(problem.btb_norm, config.epsilon, config.tau, rec.delta_entry)
        worst = max(worst, rec.backtracks - bound)
    return 0 if worst == -math.inf else int(worst)


def diagnostics_report(problem: SplitProblem, summary: RunSummary, config: SolverConfig,
                       reference=None) -> dict:
    """Run every check on one trace and collect the results by check name."""
    beta = config.beta
    scale = problem.gram_scale(config.gram_norm)
    m_errs = m_identity_errors(problem, summary, beta)
    lam_errs = multiplier_identity_errors(problem, summary, beta)
    qhm = qhm_errors(problem, summary, beta)
    report = {
        "m_identity": {"max_error": max(m_errs, default=0.0), "iterations": len(m_errs)},
        "multiplier_identity": {"max_error": max(lam_errs, default=0.0)},
        "q_equals_hm": {"max_error": max(qhm, default=0.0), "deltas_checked": len(qhm)},
        "xi_sum": {"sum": summary.xi_sum, "budget": xi_budget(config, scale)},
        "backtracking": {
            "max_per_iter": max((r.backtracks for r in summary.trace), default=0),
            "excess_over_bound": backtrack_excess(problem, summary, config),
        },
    }
    if reference is not None:
        report["descent"] = {
            "violations": check_descent(problem, summary, reference, beta, config.epsilon),
            "slack": DESCENT_SLACK,
        }
    return report


def dump_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
