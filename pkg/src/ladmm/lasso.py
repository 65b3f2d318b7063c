"""LASSO instances: generation, split form, closed-form updates, optimality check.

The problem is ``min 1/2 ||A y - b||^2 + sigma ||y||_1``. Introducing
``x = A y`` turns it into the two-block problem

    min 1/2 ||x - b||^2 + sigma ||y||_1   s.t.   I x + (-A) y = 0,

whose ``x`` step is a scaled average and whose linearized ``y`` step is a
soft-threshold.

Instance files
--------------
:func:`save_instance` writes one ASCII header line followed by raw
little-endian float64 data::

    LASSO-INSTANCE v1 m=<m> n=<n> seed=<seed> sigma=<hex> ata_norm=<hex>\\n
    A      m*n values, column-major
    b      m values
    y_true n values

Floats in the header use ``float.hex`` so a round trip is exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import SplitProblem, shrink, spectral_norm

SUPPORT_SIZE = 100
NOISE_VARIANCE = 1e-3
SIGMA_RATIO = 0.1

_HEADER_RE = re.compile(
    rb"LASSO-INSTANCE v1 m=(\d+) n=(\d+) seed=(-?\d+) sigma=(\S+) ata_norm=(\S+)\n"
)


@dataclass(frozen=True)
class LassoInstance:
    design: np.ndarray
    labels: np.ndarray
    sigma: float
    y_true: np.ndarray
    ata_norm: float
    seed: Optional[int] = None

    @property
    def shape(self):
        return self.design.shape

    def objective(self, y) -> float:
        return lasso_objective(self, y)


def generate(m: int, n: int, seed: int) -> LassoInstance:
    """Random LASSO instance with a sparse ground truth.

    ``A`` has i.i.d. standard normal entries, then unit-norm columns.
    ``y_true`` has ``min(n, 100)`` nonzero N(0, 1) entries at uniformly
    drawn positions, ``b = A y_true + noise`` with noise variance 1e-3, and
    ``sigma = 0.1 ||A^T b||_inf``.

    Draws come from a PCG64 generator seeded with `seed`, in this order: the
    entries of ``A`` in column-major order, the support positions, the
    support values, the noise.
    """
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be positive, got m={m}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    design = np.asfortranarray(rng.standard_normal((n, m)).T)
    design /= np.linalg.norm(design, axis=0)

    k = min(n, SUPPORT_SIZE)
    support = rng.choice(n, size=k, replace=False)
    y_true = np.zeros(n)
    y_true[support] = rng.standard_normal(k)
    labels = design @ y_true + np.sqrt(NOISE_VARIANCE) * rng.standard_normal(m)

    sigma = SIGMA_RATIO * float(np.max(np.abs(design.T @ labels)))
    for arr in (design, labels, y_true):
        arr.setflags(write=False)
    return LassoInstance(design, labels, sigma, y_true, spectral_norm(design), seed)


def lasso_objective(inst: LassoInstance, y) -> float:
    r = inst.design @ y - inst.labels
    return 0.5 * float(r @ r) + inst.sigma * float(np.sum(np.abs(y)))


def x_update_closed_form(inst: LassoInstance, y, lam, beta: float) -> np.ndarray:
    """``x = (b + lam + beta A y) / (1 + beta)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return (inst.labels + lam + beta * (inst.design @ y)) / (1.0 + beta)


def y_update_shrink(inst: LassoInstance, x_new, y, lam, beta: float, delta: float) -> np.ndarray:
    """Soft-threshold step
    ``shrink(y - A^T [lam - beta (x_new - A y)] / (delta beta), sigma / (delta beta))``."""
    if not (beta > 0 and delta > 0):
        raise ValueError("beta and delta must be positive")
    db = delta * beta
    a = inst.design
    point = y - a.T @ (lam - beta * (x_new - a @ y)) / db
    return shrink(point, inst.sigma / db)


def to_split_form(inst: LassoInstance, beta: Optional[float] = None) -> SplitProblem:
    """Map the instance onto ``I x + (-A) y = 0``.

    `beta` is accepted for symmetry with the solver configuration; the
    oracles take it per call.
    """
    m = inst.design.shape[0]
    sigma, labels = inst.sigma, inst.labels

    def x_oracle(y, lam, beta_):
        return x_update_closed_form(inst, y, lam, beta_)

    def y_prox(point, weight):
        return shrink(point, sigma / weight)

    def objective(x, y, by):
        # B = -A, so A y - b = -(B y) - b
        r = -by - labels
        return 0.5 * float(r @ r) + sigma * float(np.sum(np.abs(y)))

    return SplitProblem(
        mat_a=np.eye(m),
        mat_b=-inst.design,
        rhs_b=np.zeros(m),
        x_oracle=x_oracle,
        y_prox_oracle=y_prox,
        btb_norm=inst.ata_norm,
        objective=objective,
    )


def kkt_residual(inst: LassoInstance, y) -> float:
    """Largest violation of the LASSO subgradient optimality condition at `y`.

    With ``g = A^T (A y - b)``: ``|g_i + sigma sign(y_i)|`` on the support and
    ``max(0, |g_i| - sigma)`` off it.
    """
    y = np.asarray(y, dtype=np.float64)
    g = inst.design.T @ (inst.design @ y - inst.labels)
    on = y != 0
    viol = np.where(on, np.abs(g + inst.sigma * np.sign(y)), np.maximum(0.0, np.abs(g) - inst.sigma))
    return float(np.max(viol)) if viol.size else 0.0


def save_instance(inst: LassoInstance, path) -> None:
    m, n = inst.design.shape
    seed = -1 if inst.seed is None else int(inst.seed)
    header = (
        f"LASSO-INSTANCE v1 m={m} n={n} seed={seed} "
        f"sigma={float(inst.sigma).hex()} ata_norm={float(inst.ata_norm).hex()}\n"
    ).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(inst.design, dtype="<f8").tobytes(order="F"))
        fh.write(np.asarray(inst.labels, dtype="<f8").tobytes())
        fh.write(np.asarray(inst.y_true, dtype="<f8").tobytes())


def load_instance(path) -> LassoInstance:
    raw = Path(path).read_bytes()
    match = _HEADER_RE.match(raw)
    if match is None:
        raise ValueError(f"{path}: not a LASSO instance file")
    m, n, seed = (int(g) for g in match.groups()[:3])
    sigma = float.fromhex(match.group(4).decode())
    ata_norm = float.fromhex(match.group(5).decode())
    body = np.frombuffer(raw, dtype="<f8", offset=match.end())
    if body.size != m * n + m + n:
        raise ValueError(f"{path}: expected {m * n + m + n} values, found {body.size}")
    design = np.asfortranarray(body[: m * n].reshape((m, n), order="F")).astype(np.float64)
    labels = body[m * n: m * n + m].astype(np.float64)
    y_true = body[m * n + m:].astype(np.float64)
    return LassoInstance(design, labels, sigma, y_true, ata_norm, None if seed < 0 else seed)
