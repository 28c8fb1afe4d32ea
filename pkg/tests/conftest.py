"""Session fixtures shared by the acceptance suite.

Everything expensive is integrated exactly once per pytest session: the
random-data monotonicity and subcritical suites (n=64, Neumann/Neumann),
the small-n trajectories checked against the independent RK4 oracle, the
staircase ladder runs at n in {100, 400, 1600} (Dirichlet/Neumann), the
fine-grid reference run (n_ref=4096, smooth datum), and the odd-reflection
doubled-grid run. Wall-clock times are recorded where a criterion carries
a runtime target. Seeds are fixed so artifacts are reproducible.
"""

import time

import numpy as np
import pytest

from pmflow import analysis, counterexample
from pmflow.flow import IntegratorOptions, Trajectory, integrate
from pmflow.grid import BoundaryCondition, GridFunction, odd_reflection
from pmflow.phi import SubcriticalWindow, model_from_name

SEED = 20260815
SUITE_N = 64
LADDER_NS = (100, 400, 1600)
N_REF = 4096

# Exact window constants: sigma0=0.5 with phi'' extrema bounds for the log
# model (|phi''| <= 1 everywhere, >= 0.48 on [0, sigma0 + pi sigma0 / 4]).
WINDOW = SubcriticalWindow(sigma0=0.5, lambda0=0.48, Lambda0=1.0)


@pytest.fixture(scope="session")
def log_model():
    return model_from_name("log")


@pytest.fixture(scope="session")
def monotonicity_suite(log_model):
    """50 runs from uniform [-1, 1] data, with the total wall-clock time."""
    rng = np.random.default_rng(SEED)
    opts = IntegratorOptions(rtol=1e-8, atol=1e-12, n_samples=101)
    runs = []
    start = time.perf_counter()
    for _ in range(50):
        u0 = GridFunction(SUITE_N, rng.uniform(-1.0, 1.0, SUITE_N))
        runs.append(integrate(u0, log_model,
                              BoundaryCondition.NEUMANN_NEUMANN, 1.0, opts))
    elapsed = time.perf_counter() - start
    return runs, elapsed


@pytest.fixture(scope="session")
def subcritical_suite(log_model):
    """20 runs whose data have every forward slope in [-sigma1, sigma1]."""
    rng = np.random.default_rng(SEED + 1)
    opts = IntegratorOptions(rtol=1e-8, atol=1e-12, n_samples=101)
    sigma1 = log_model.sigma1
    runs = []
    for _ in range(20):
        increments = rng.uniform(-1.0, 1.0, SUITE_N - 1) * (sigma1 / SUITE_N)
        values = rng.uniform(-1.0, 1.0) + np.concatenate(
            ([0.0], np.cumsum(increments)))
        u0 = GridFunction(SUITE_N, values)
        runs.append(integrate(u0, log_model,
                              BoundaryCondition.NEUMANN_NEUMANN, 1.0, opts))
    return runs


@pytest.fixture(scope="session")
def oracle_runs(log_model):
    """Adaptive runs on the alternating 0/0.3 datum for n = 3..8."""
    opts = IntegratorOptions(rtol=1e-10, atol=1e-14, n_samples=11)
    runs = {}
    for n in range(3, 9):
        u0 = GridFunction(n, 0.3 * (np.arange(n) % 2).astype(float))
        runs[n] = integrate(u0, log_model,
                            BoundaryCondition.NEUMANN_NEUMANN, 0.1, opts)
    return runs


@pytest.fixture(scope="session")
def ladder_runs(log_model):
    """Staircase runs at n in {100, 400, 1600}: n -> (params, traj, secs)."""
    opts = IntegratorOptions(rtol=1e-6, atol=1e-12, n_samples=101)
    runs = {}
    for n in LADDER_NS:
        params = counterexample.params_for(n, log_model, WINDOW, 1.0)
        u0 = counterexample.staircase_datum(params)
        start = time.perf_counter()
        traj = integrate(u0, log_model,
                         BoundaryCondition.DIRICHLET_NEUMANN, 1.0, opts)
        runs[n] = (params, traj, time.perf_counter() - start)
    return runs


@pytest.fixture(scope="session")
def reference_run(log_model) -> Trajectory:
    """Fine-grid smooth-datum run standing in for the limit solution."""
    opts = IntegratorOptions(rtol=1e-6, atol=1e-12, n_samples=101)
    return analysis.reference_solution(
        N_REF, WINDOW, log_model, 1.0, BoundaryCondition.DIRICHLET_NEUMANN,
        opts)


@pytest.fixture(scope="session")
def odd_reflection_run(log_model, ladder_runs):
    """The n=100 staircase datum reflected oddly onto 2n cells, run NN."""
    params, _, _ = ladder_runs[100]
    u0 = odd_reflection(counterexample.staircase_datum(params))
    opts = IntegratorOptions(rtol=1e-6, atol=1e-12, n_samples=101)
    traj = integrate(u0, log_model,
                     BoundaryCondition.NEUMANN_NEUMANN, 1.0, opts)
    return params, traj
