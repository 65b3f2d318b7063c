import time

import numpy as np
import pytest

from ladmm import generate, solve_adaptive, solve_oladmm, to_split_form
from ladmm.solvers import SolverConfig

BENCH_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def small_inst():
    return generate(20, 50, 7)


@pytest.fixture(scope="session")
def small_problem(small_inst):
    return to_split_form(small_inst)


@pytest.fixture(scope="session")
def small_runs(small_problem):
    """Adaptive and baseline traces plus a tightened reference on the 20x50 instance."""
    cfg = SolverConfig()
    return {
        "adaptive": solve_adaptive(small_problem, cfg, keep_iterates=True),
        "oladmm": solve_oladmm(small_problem, cfg, keep_iterates=True),
        "reference": solve_adaptive(small_problem, cfg.tightened()),
    }


_bench_cache = {}


def bench_runs(m, n):
    """Both solvers on the five benchmark seeds of one benchmark size, computed once."""
    if (m, n) not in _bench_cache:
        t0 = time.perf_counter()
        out = []
        for seed in BENCH_SEEDS:
            inst = generate(m, n, seed)
            prob = to_split_form(inst)
            out.append((inst, solve_adaptive(prob), solve_oladmm(prob)))
        _bench_cache[(m, n)] = (out, time.perf_counter() - t0)
    return _bench_cache[(m, n)][0]


def bench_seconds(m, n):
    """Wall seconds spent generating and solving in :func:`bench_runs`."""
    bench_runs(m, n)
    return _bench_cache[(m, n)][1]


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
