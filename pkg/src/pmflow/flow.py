"""Time integration of the semi-discrete flow u'(i) = D-(phi'(D+ u(i))).

The system is the gradient flow of the discrete functional
(1/n) sum_i phi(D+ u(i)) in the scaled Euclidean metric, so along exact
solutions the max is nonincreasing, the min nondecreasing, total variation
and energy nonincreasing, and the integral of (1/n) sum |u'|^2 is bounded by
the initial energy. `integrate` produces a Trajectory carrying per-sample
diagnostics of exactly these quantities; `run_diagnostics` turns them into
violation flags with a documented tolerance so the theorems become runnable
checks rather than comments.

Energy convention: `dpm_energy` sums phi over all ghost-aware slopes
D+ u(0..n). Under Neumann/Neumann both ghost slopes vanish, so this equals
the plain interior sum. Under Dirichlet/Neumann the left ghost term
phi(n u(1)) is included, which is the functional the flow actually descends
in that regime; dropping it would make the energy column non-monotone.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DivergenceError, StiffnessError
from .grid import BoundaryCondition, GridFunction, forward_diff, tv, tv_pm
from .phi import NonlinearityModel, phi_eval, phi_prime

# Transient micro-increases of the monotone quantities are time-discretization
# noise; two orders looser than the default integrator tolerance.
MONOTONICITY_TOL = 1e-6
# One-sided slack when checking that slopes initially <= sigma1 stay there.
SUBCRITICAL_SLACK = 1e-8
DISSIPATION_REL_TOL = 1e-4
DISSIPATION_ABS_TOL = 1e-10

_BC_CODES = {
    BoundaryCondition.NEUMANN_NEUMANN: _kernels.BC_NEUMANN_NEUMANN,
    BoundaryCondition.DIRICHLET_NEUMANN: _kernels.BC_DIRICHLET_NEUMANN,
}

_MONOTONE_KEYS = ("max", "tv", "tv_plus", "tv_minus", "energy")  # min handled with flipped sign


@dataclasses.dataclass(frozen=True)
class IntegratorOptions:
    """Tolerances and sample schedule for `integrate`.

    The step size is capped at c_step / (n^2 sup|phi''|) on top of whatever
    the error controller chooses; `max_step` lowers the cap further but never
    raises it. Samples are `n_samples` uniform times on [0, t_end] unless an
    explicit strictly increasing `times` tuple starting at 0 is given.
    """

    rtol: float = 1e-8
    atol: float = 1e-12
    c_step: float = 2.0
    max_step: float | None = None
    n_samples: int = 101
    times: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0.0 < self.rtol < 1.0):
            raise ConfigurationError(f"rtol must be in (0, 1), got {self.rtol}")
        if not (0.0 < self.atol < 1.0):
            raise ConfigurationError(f"atol must be in (0, 1), got {self.atol}")
        if self.c_step <= 0.0:
            raise ConfigurationError(f"c_step must be positive, got {self.c_step}")
        if self.max_step is not None and self.max_step <= 0.0:
            raise ConfigurationError(f"max_step must be positive, got {self.max_step}")
        if self.n_samples < 2:
            raise ConfigurationError(f"need at least 2 sample times, got {self.n_samples}")
        if self.times is not None:
            ts = tuple(float(t) for t in self.times)
            if len(ts) < 2 or ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ConfigurationError(
                    "explicit times must be strictly increasing and start at 0")
            object.__setattr__(self, "times", ts)

    def sample_times(self, t_end: float | None) -> np.ndarray:
        if self.times is not None:
            if t_end is not None and float(t_end) != self.times[-1]:
                raise ConfigurationError(
                    f"t_end={t_end} conflicts with explicit times ending at {self.times[-1]}")
            return np.asarray(self.times, dtype=float)
        if t_end is None or t_end <= 0.0:
            raise ConfigurationError(f"t_end must be positive, got {t_end}")
        return np.linspace(0.0, float(t_end), self.n_samples)


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Sampled solution of one integration run.

    diagnostics holds one record per sample time with keys
    t, max, min, tv, tv_plus, tv_minus, energy, subcritical_count
    (the count of slope positions i = 0..n with D+ u(i) <= sigma1).
    dissipation is the accumulated integral of (1/n) sum |u'(t,i)|^2.
    """

    model: NonlinearityModel
    bc: BoundaryCondition
    n: int
    times: np.ndarray
    states: tuple[GridFunction, ...]
    dissipation: float
    diagnostics: tuple[dict, ...]
    stats: dict = dataclasses.field(default_factory=dict, repr=False)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        if times.ndim != 1 or times.shape[0] != len(self.states):
            raise ValueError("need one state per sample time")
        if times.shape[0] != len(self.diagnostics):
            raise ValueError("need one diagnostics record per sample time")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("sample times must start at 0 and increase strictly")
        if any(s.n != self.n for s in self.states):
            raise ValueError("state size does not match trajectory n")
        if not (np.isfinite(self.dissipation) and self.dissipation >= 0.0):
            raise ValueError(f"dissipation must be finite and >= 0, got {self.dissipation}")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def model_id(self) -> str:
        return self.model.name

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def state_matrix(self) -> np.ndarray:
        """Sample-by-cell matrix of values, shape (len(times), n)."""
        return np.array([s.values for s in self.states])


def rhs(u: GridFunction, model: NonlinearityModel,
        bc: BoundaryCondition = BoundaryCondition.NEUMANN_NEUMANN) -> np.ndarray:
    """Right-hand side n [phi'(D+ u(i)) - phi'(D+ u(i-1))] for i = 1..n.

    Under Neumann/Neumann the components telescope, so the mean of u is
    conserved by the flow.
    """
    d = forward_diff(u, bc)
    v = phi_prime(model, d)
    return float(u.n) * (v[1:] - v[:-1])


def dpm_energy(u: GridFunction, model: NonlinearityModel,
               bc: BoundaryCondition = BoundaryCondition.NEUMANN_NEUMANN) -> float:
    """(1/n) sum of phi over the ghost-aware slopes D+ u(0..n).

    Equals (1/n) sum_{i=1..n} phi(D+ u(i)) under Neumann/Neumann since the
    ghost slopes vanish there; see the module docstring for the
    Dirichlet/Neumann convention.
    """
    d = forward_diff(u, bc)
    return float(np.sum(phi_eval(model, d))) / u.n


def _sample_record(t: float, state: GridFunction, model: NonlinearityModel,
                   bc: BoundaryCondition) -> dict:
    d = forward_diff(state, bc)
    plus, minus = tv_pm(state)
    return {
        "t": float(t),
        "max": float(np.max(state.values)),
        "min": float(np.min(state.values)),
        "tv": tv(state),
        "tv_plus": plus,
        "tv_minus": minus,
        "energy": dpm_energy(state, model, bc),
        "subcritical_count": int(np.count_nonzero(d <= model.sigma1)),
    }


def _rhs_closure(n: int, model: NonlinearityModel, bc: BoundaryCondition):
    """Raw vector field for the numpy core; no finiteness checks so that a
    diverging trial state propagates NaN instead of raising mid-step."""
    dphi = model.dphi_abs
    dirichlet = bc is BoundaryCondition.DIRICHLET_NEUMANN
    fn = float(n)

    def f(y: np.ndarray) -> np.ndarray:
        d = np.empty(n + 1)
        d[0] = fn * y[0] if dirichlet else 0.0
        d[1:n] = fn * (y[1:] - y[:-1])
        d[n] = 0.0
        p = dphi(np.abs(d))
        v = np.where(np.signbit(d), -p, p)
        return fn * (v[1:] - v[:n])

    return f


def integrate(u0: GridFunction, model: NonlinearityModel,
              bc: BoundaryCondition = BoundaryCondition.NEUMANN_NEUMANN,
              t_end: float | None = None,
              opts: IntegratorOptions | None = None) -> Trajectory:
    """Integrate the flow from u0, sampling states on the requested schedule.

    Uses an embedded adaptive Dormand-Prince 5(4) pair; the compiled kernel
    handles the built-in models, a numpy twin of the same algorithm handles
    custom ones. Raises StiffnessError when the accepted step underflows with
    finite trial states, DivergenceError when the state or vector field stops
    being finite.
    """
    if opts is None:
        opts = IntegratorOptions()
    t_samples = opts.sample_times(t_end)
    n = u0.n
    h_max = opts.c_step / (n * n * model.phi2_sup)
    if opts.max_step is not None:
        h_max = min(h_max, opts.max_step)
    y0 = np.array(u0.values, dtype=float)

    if model.kernel_code >= 0 and _kernels.dopri5_compiled is not None:
        path = "compiled"
        states_mat, dissipation, status, t_fail, h_fail, n_acc, n_rej = \
            _kernels.dopri5_compiled(y0, model.kernel_code, _BC_CODES[bc],
                                     t_samples, opts.rtol, opts.atol, h_max)
    else:
        path = "numpy"
        states_mat, dissipation, status, t_fail, h_fail, n_acc, n_rej = \
            _kernels.dopri5_numpy(y0, _rhs_closure(n, model, bc),
                                  t_samples, opts.rtol, opts.atol, h_max)

    if status != _kernels.STATUS_OK:
        last = states_mat[np.searchsorted(t_samples, t_fail, side="right") - 1]
        detail = {
            "n": n, "model": model.name, "bc": bc.value,
            "rtol": opts.rtol, "atol": opts.atol, "h_max": h_max,
            "accepted": int(n_acc), "rejected": int(n_rej),
            "sup_state": float(np.max(np.abs(last))),
        }
        if status == _kernels.STATUS_STIFF:
            floor = max(_kernels.MIN_STEP,
                        _kernels.REL_MIN_STEP * float(t_samples[-1] - t_samples[0]))
            raise StiffnessError(
                f"step size underflowed below {floor:g} at t={t_fail:.6g} "
                f"with finite trial states; tolerance rtol={opts.rtol:g} is not "
                f"attainable for this system", t=t_fail, step=h_fail, detail=detail)
        raise DivergenceError(
            f"state or vector field became non-finite near t={t_fail:.6g}",
            t=t_fail, step=h_fail, detail=detail)

    states = tuple(GridFunction(n, states_mat[k].copy())
                   for k in range(t_samples.shape[0]))
    diagnostics = tuple(_sample_record(t_samples[k], states[k], model, bc)
                        for k in range(t_samples.shape[0]))
    stats = {"path": path, "accepted": int(n_acc), "rejected": int(n_rej),
             "rtol": opts.rtol, "atol": opts.atol, "h_max": h_max}
    return Trajectory(model=model, bc=bc, n=n, times=t_samples, states=states,
                      dissipation=float(dissipation), diagnostics=diagnostics,
                      stats=stats)


@dataclasses.dataclass(frozen=True)
class DiagnosticsTable:
    """Per-time records plus violation flags; empty `violations` means every
    monotone-in-time quantity behaved within tolerance."""

    rows: tuple[dict, ...]
    violations: tuple[str, ...]
    datum_nondecreasing: bool
    subcritical_initial_count: int

    @property
    def clean(self) -> bool:
        return not self.violations


def run_diagnostics(traj: Trajectory,
                    monotonicity_tol: float = MONOTONICITY_TOL,
                    subcritical_slack: float = SUBCRITICAL_SLACK) -> DiagnosticsTable:
    """Check the sampled records against the monotone-in-time theorems.

    Under Neumann/Neumann flags: any increase of max/tv/tv+/tv-/energy (or
    decrease of min) beyond monotonicity_tol between consecutive samples; any
    slope position that was subcritical at t=0 exceeding sigma1 +
    subcritical_slack later; loss of spatial monotonicity when the datum was
    nondecreasing. Under Dirichlet/Neumann the left ghost injects or removes
    mass, so the pointwise max/min and variation statements do not hold as
    written (a negative constant datum rises toward 0); what survives there
    is ghost-aware energy descent, the dissipation bound, per-index
    subcritical preservation (the barrier argument uses only
    phi' <= phi'(sigma1), so ghost slopes are covered), and preservation of
    monotone data in the ghost-consistent case u0(1) >= 0.
    """
    rows = traj.diagnostics
    violations: list[str] = []
    neumann = traj.bc is BoundaryCondition.NEUMANN_NEUMANN
    keys = _MONOTONE_KEYS if neumann else ("energy",)
    for prev, cur in zip(rows, rows[1:]):
        for key in keys:
            if cur[key] > prev[key] + monotonicity_tol:
                violations.append(
                    f"{key} increased by {cur[key] - prev[key]:.3e} "
                    f"between t={prev['t']:.6g} and t={cur['t']:.6g}")
        if neumann and cur["min"] < prev["min"] - monotonicity_tol:
            violations.append(
                f"min decreased by {prev['min'] - cur['min']:.3e} "
                f"between t={prev['t']:.6g} and t={cur['t']:.6g}")

    sigma1 = traj.model.sigma1
    mask0 = forward_diff(traj.states[0], traj.bc) <= sigma1
    for k in range(1, len(traj.states)):
        d = forward_diff(traj.states[k], traj.bc)
        escaped = mask0 & (d > sigma1 + subcritical_slack)
        if np.any(escaped):
            worst = float(np.max(d[escaped]) - sigma1)
            violations.append(
                f"{int(np.count_nonzero(escaped))} initially subcritical "
                f"slope(s) exceeded sigma1 by up to {worst:.3e} "
                f"at t={rows[k]['t']:.6g}")

    datum_nondecreasing = bool(np.all(np.diff(traj.states[0].values) >= 0.0))
    ghost_consistent = neumann or traj.states[0].values[0] >= 0.0
    if datum_nondecreasing and ghost_consistent:
        for k in range(1, len(traj.states)):
            slopes = traj.n * np.diff(traj.states[k].values)
            if slopes.size and float(np.min(slopes)) < -monotonicity_tol:
                violations.append(
                    f"nondecreasing datum lost monotonicity at t={rows[k]['t']:.6g} "
                    f"(worst slope {float(np.min(slopes)):.3e})")

    bound = rows[0]["energy"] * (1.0 + DISSIPATION_REL_TOL) + DISSIPATION_ABS_TOL
    if traj.dissipation > bound:
        violations.append(
            f"dissipation {traj.dissipation:.6e} exceeds the initial energy "
            f"bound {bound:.6e}")

    return DiagnosticsTable(
        rows=rows, violations=tuple(violations),
        datum_nondecreasing=datum_nondecreasing,
        subcritical_initial_count=int(np.count_nonzero(mask0)))


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Long-format export: one `t,i,value` row per sample time and cell."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,i,value\n")
        for t, state in zip(traj.times, traj.states):
            ts = "%.17g" % t
            for i in range(traj.n):
                fh.write("%s,%d,%.17g\n" % (ts, i + 1, state.values[i]))


def diagnostics_payload(traj: Trajectory, table: DiagnosticsTable | None = None) -> dict:
    """JSON-ready summary of a run; pair with `save_trajectory_csv`."""
    if table is None:
        table = run_diagnostics(traj)
    return {
        "model": traj.model_id,
        "bc": traj.bc.value,
        "n": traj.n,
        "dissipation": traj.dissipation,
        "stats": traj.stats,
        "rows": list(table.rows),
        "violations": list(table.violations),
        "datum_nondecreasing": table.datum_nondecreasing,
        "subcritical_initial_count": table.subcritical_initial_count,
    }


def save_diagnostics_json(traj: Trajectory, path,
                          table: DiagnosticsTable | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(diagnostics_payload(traj, table), fh, sort_keys=True, indent=2)
        fh.write("\n")
