"""Built-in invariant suites behind the `selftest` subcommand.

Each suite recomputes its target by an independent slow route (central
finite differences, exhaustive enumeration, fixed-step time stepping) and
compares against the fast implementation, so a passing run certifies the
package against unambiguous arithmetic rather than against itself. Results
come back as plain records; the CLI decides what a failure means for the
process exit code.
"""

from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np

from . import counterexample, flow, phi
from .analysis import sign_measure
from .grid import BoundaryCondition, GridFunction, tv_m_plus

FD_STEP = 1e-5
FD_TOL = 1e-7
ORACLE_TOL = 1e-8

BUILTIN_MODELS = ("log", "atan2", "quartic")


@dataclasses.dataclass(frozen=True)
class SuiteResult:
    """Outcome of one suite: a name the CLI can report, and a detail line."""

    name: str
    passed: bool
    detail: str

    def payload(self) -> dict:
        return dataclasses.asdict(self)


def _sample_slopes(model: phi.NonlinearityModel) -> np.ndarray:
    # straddle both regimes and the critical slope itself
    s1 = model.sigma1
    return np.concatenate((np.linspace(-3.0, 3.0, 61),
                           s1 + np.array([-0.1, -0.01, 0.0, 0.01, 0.1]),
                           -s1 + np.array([-0.05, 0.0, 0.05])))


def phi_derivative_suite() -> SuiteResult:
    """Central differences of phi reproduce phi', and of phi' reproduce phi''.

    Also checks the conjugate-slope identity phi'(g(sigma)) = phi'(sigma)
    above the critical slope, since the parameter ladder leans on it.
    """
    worst = 0.0
    h = FD_STEP
    for name in BUILTIN_MODELS:
        model = phi.model_from_name(name)
        s = _sample_slopes(model)
        fd1 = (phi.phi_eval(model, s + h) - phi.phi_eval(model, s - h)) / (2 * h)
        fd2 = (phi.phi_prime(model, s + h) - phi.phi_prime(model, s - h)) / (2 * h)
        err = max(float(np.max(np.abs(fd1 - phi.phi_prime(model, s)))),
                  float(np.max(np.abs(fd2 - phi.phi_second(model, s)))))
        worst = max(worst, err)
        for sigma in (1.5 * model.sigma1, 2.0 * model.sigma1, 5.0 * model.sigma1):
            g = phi.conjugate_slope(model, sigma)
            worst = max(worst, abs(phi.phi_prime(model, g)
                                   - phi.phi_prime(model, sigma)))
    return SuiteResult("phi-derivatives", worst <= FD_TOL,
                       f"max deviation {worst:.3e} (tol {FD_TOL:g})")


def _tv_m_plus_exhaustive(values: np.ndarray, m: int) -> float:
    # alternating partial sums accumulate left to right, the same
    # association order as the DP recursion, so agreement is bit-exact
    best = -math.inf
    for tup in itertools.combinations_with_replacement(range(len(values)), 2 * m):
        acc = 0.0
        for k, idx in enumerate(tup):
            acc = acc - values[idx] if k % 2 == 0 else acc + values[idx]
        if acc > best:
            best = acc
    return best


def tv_m_suite(seed: int, draws: int = 60) -> SuiteResult:
    """Dynamic program equals exhaustive enumeration, exactly, on small grids."""
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(draws):
        n = int(rng.integers(2, 13))
        u = GridFunction(n, rng.uniform(-1.0, 1.0, n))
        for m in (1, 2, 3):
            fast = tv_m_plus(u, m)
            slow = _tv_m_plus_exhaustive(u.values, m)
            checked += 1
            if fast != slow:
                return SuiteResult(
                    "tv-m-plus-bruteforce", False,
                    f"mismatch at n={n} m={m}: dp={fast!r} exhaustive={slow!r}")
    return SuiteResult("tv-m-plus-bruteforce", True,
                       f"{checked} exact matches on grids up to n=12")


def _neumann_rhs(y: np.ndarray, n: int, model: phi.NonlinearityModel) -> np.ndarray:
    d = np.zeros(n + 1)
    d[1:n] = n * (y[1:] - y[:-1])
    fluxes = phi.phi_prime(model, d)
    return n * (fluxes[1:] - fluxes[:-1])


def _rk4(u0: np.ndarray, model: phi.NonlinearityModel, t_end: float,
         dt: float) -> np.ndarray:
    n = u0.shape[0]
    y = u0.copy()
    for _ in range(int(round(t_end / dt))):
        k1 = _neumann_rhs(y, n, model)
        k2 = _neumann_rhs(y + 0.5 * dt * k1, n, model)
        k3 = _neumann_rhs(y + 0.5 * dt * k2, n, model)
        k4 = _neumann_rhs(y + dt * k3, n, model)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def integrator_suite() -> SuiteResult:
    """Adaptive integrator vs fixed-step classical Runge-Kutta, small grids."""
    model = phi.model_from_name("log")
    t_end, dt = 0.05, 5e-5
    worst = 0.0
    for n in range(3, 7):
        u0 = GridFunction(n, 0.3 * (np.arange(n) % 2).astype(float))
        traj = flow.integrate(u0, model, BoundaryCondition.NEUMANN_NEUMANN,
                              t_end, flow.IntegratorOptions(
                                  rtol=1e-10, atol=1e-14, n_samples=2))
        ref = _rk4(u0.values, model, t_end, dt)
        worst = max(worst, float(np.max(np.abs(traj.final.values - ref))))
    return SuiteResult("integrator-oracle", worst <= ORACLE_TOL,
                       f"max sup deviation {worst:.3e} (tol {ORACLE_TOL:g})")


def monotonicity_suite(seed: int, runs: int = 8, n: int = 32,
                       t_end: float = 0.5) -> SuiteResult:
    """Random Neumann runs keep max/min/variation/energy monotone in time."""
    rng = np.random.default_rng(seed)
    model = phi.model_from_name("log")
    opts = flow.IntegratorOptions(rtol=1e-8, atol=1e-12, n_samples=41)
    for k in range(runs):
        u0 = GridFunction(n, rng.uniform(-1.0, 1.0, n))
        traj = flow.integrate(u0, model, BoundaryCondition.NEUMANN_NEUMANN,
                              t_end, opts)
        table = flow.run_diagnostics(traj)
        if not table.clean:
            return SuiteResult("monotonicity", False,
                               f"run {k}: {'; '.join(table.violations)}")
    return SuiteResult("monotonicity", True,
                       f"{runs} random runs at n={n} stayed monotone")


def sign_measure_suite(seed: int, model: phi.NonlinearityModel | None = None,
                       draws: int = 200) -> SuiteResult:
    """Every component of d(i) phi'(d(i)) is >= 0, bit-exactly.

    Random states are checked first so a corrupted flux model is caught
    before any time integration happens with it.
    """
    if model is None:
        model = phi.model_from_name("log")
    rng = np.random.default_rng(seed)
    low = 0.0
    for bc in BoundaryCondition:
        for _ in range(draws):
            u = GridFunction(16, rng.uniform(-1.0, 1.0, 16))
            low = min(low, float(np.min(sign_measure(u, model, bc))))
            if low < 0.0:
                return SuiteResult("sign-measure", False,
                                   f"negative component {low:.3e} on a random state")
    window = phi.SubcriticalWindow(sigma0=0.4 * model.sigma1,
                                   lambda0=0.1, Lambda0=model.phi2_sup)
    traj = flow.integrate(counterexample.smooth_datum(32, window), model,
                          BoundaryCondition.NEUMANN_NEUMANN, 0.3,
                          flow.IntegratorOptions(rtol=1e-8, n_samples=31))
    for state in traj.states:
        low = min(low, float(np.min(sign_measure(state, model, traj.bc))))
    if low < 0.0:
        return SuiteResult("sign-measure", False,
                           f"negative component {low:.3e} along a run")
    return SuiteResult("sign-measure", True,
                       "all components nonnegative on random states and a run")


def corrupted_model(fault: str) -> phi.NonlinearityModel:
    """Deliberately broken model for exercising the failure path."""
    base = phi.model_from_name("log")
    if fault == "phi-prime-sign-flip":
        return phi.custom_model(base.phi_abs,
                                lambda s: -base.dphi_abs(s),
                                base.d2phi_abs, base.sigma1, base.phi2_sup,
                                validate=False)
    raise ValueError(f"unknown fault {fault!r}")


def run_all(seed: int, draws: int = 60,
            fault: str | None = None) -> list[SuiteResult]:
    """All suites in a fixed order; `fault` corrupts the sign-measure model."""
    sign_model = corrupted_model(fault) if fault else None
    return [
        phi_derivative_suite(),
        tv_m_suite(seed, draws=draws),
        integrator_suite(),
        monotonicity_suite(seed),
        sign_measure_suite(seed, model=sign_model),
    ]
