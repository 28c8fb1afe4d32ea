"""Flux-field diagnostics, reference surrogates, and convergence gaps.

Three layers on top of the integrator:

* v_field / sign_measure / uv_residual look at the flux v = phi'(D+ u),
  whose discrete divergence is the right-hand side of the system. The sign
  products D+ u * phi'(D+ u) are nonnegative bit-exactly because phi' is
  implemented as an odd extension, and uv_residual certifies the algebraic
  identity u' = D-(v) together with the flux ghost values.

* reference_solution integrates the smooth sine datum on a fine grid as the
  desk-scale surrogate for the continuum limit. Above a size threshold the
  explicit pair would need tens of millions of stability-limited steps, so
  the run switches to a stiff multistep solver fed with the analytic
  tridiagonal Jacobian; the two paths are cross-validated in the tests, and
  every reference run is post-checked to stay subcritical.

* convergence_study integrates a family of data across grid sizes, tabulates
  sup norm and total variation against the reference, and aggregates
  liminf-style gaps. Both norms being lower semicontinuous along the limit,
  the gaps can only close or stay open; a family whose variation gap stays
  above a positive threshold at positive times is exactly a family that
  converges weakly-* but not strictly. Under the mixed regime the variation
  is counted with the jump against the zero left trace (trace_tv), which is
  the variation of the embedded profile extended by its boundary datum.
"""

from __future__ import annotations

import csv
import dataclasses
import json

import numpy as np

from .errors import ConfigurationError, IntegrationError, InvariantViolation
from .flow import (SUBCRITICAL_SLACK, IntegratorOptions, Trajectory,
                   _rhs_closure, _sample_record, integrate, rhs,
                   run_diagnostics)
from .grid import BoundaryCondition, GridFunction, forward_diff, lp_distance, \
    sup_norm, tv
from .phi import NonlinearityModel, SubcriticalWindow, phi_prime, phi_second
from .counterexample import smooth_datum

__all__ = [
    "REFERENCE_SWITCH_N",
    "v_field",
    "sign_measure",
    "trace_tv",
    "uv_residual",
    "UvResidualTable",
    "reference_jacobian_banded",
    "reference_solution",
    "GapReport",
    "convergence_study",
    "save_gap_csv",
    "save_gap_json",
]

# Grid size at which reference runs leave the explicit pair for the stiff
# solver; the explicit stability step c/(n^2 phi2_sup) makes larger grids
# impractical at the horizon lengths the studies use.
REFERENCE_SWITCH_N = 512


def v_field(u: GridFunction, model: NonlinearityModel,
            bc: BoundaryCondition = BoundaryCondition.NEUMANN_NEUMANN
            ) -> np.ndarray:
    """Flux v(i) = phi'(D+ u(i)) at slope positions i = 0..n.

    The two ghost entries ride along: both are 0 under the symmetric
    regime, and the left one is phi'(n u(1)) under the mixed regime.
    Every entry is bounded by phi'(sigma1) in absolute value.
    """
    return phi_prime(model, forward_diff(u, bc))


def sign_measure(u: GridFunction, model: NonlinearityModel,
                 bc: BoundaryCondition = BoundaryCondition.NEUMANN_NEUMANN
                 ) -> np.ndarray:
    """Products D+ u(i) * phi'(D+ u(i)) at slope positions i = 0..n.

    Nonnegative entry by entry, bit-exactly: the flux is an odd extension,
    so each slope and its flux share a sign. This is the discrete form of
    the sign condition that survives to the limit measure.
    """
    d = forward_diff(u, bc)
    return d * phi_prime(model, d)


def trace_tv(u: GridFunction, bc: BoundaryCondition) -> float:
    """Total variation including the boundary jump against the zero trace.

    Under the mixed regime the embedded profile carries the datum u = 0 at
    the left endpoint, so its variation picks up |u(1)| on top of the cell
    gaps; under the symmetric regime this is plain tv.
    """
    extra = abs(u.value(1)) if bc is BoundaryCondition.DIRICHLET_NEUMANN \
        else 0.0
    return tv(u) + extra


@dataclasses.dataclass(frozen=True)
class UvResidualTable:
    """Per-sample certification of u' = D-(v) and the flux ghost values."""

    bc: str
    rows: tuple[dict, ...]
    max_abs: float
    max_rel: float
    ghosts_clean: bool

    def payload(self) -> dict:
        return dataclasses.asdict(self)


def uv_residual(traj: Trajectory, model: NonlinearityModel) -> UvResidualTable:
    """Check rhs(u) == D-(v_field(u)) at every sample time.

    The two sides are the same composition of the same primitives, so the
    residual is exactly zero; the table records it anyway, together with
    the flux ghost entries (both zero under the symmetric regime, right one
    zero always). Never raises: the table reports.
    """
    n = traj.n
    rows = []
    worst_abs = 0.0
    worst_rel = 0.0
    ghosts_clean = True
    for t, state in zip(traj.times, traj.states):
        v = v_field(state, model, traj.bc)
        direct = rhs(state, model, traj.bc)
        divergence = n * np.diff(v)
        err = np.abs(direct - divergence)
        scale = np.maximum(np.abs(direct), 1e-300)
        max_abs = float(np.max(err)) if n else 0.0
        max_rel = float(np.max(err / scale))
        left, right = float(v[0]), float(v[-1])
        if traj.bc is BoundaryCondition.NEUMANN_NEUMANN and (left != 0.0
                                                             or right != 0.0):
            ghosts_clean = False
        if right != 0.0:
            ghosts_clean = False
        worst_abs = max(worst_abs, max_abs)
        worst_rel = max(worst_rel, max_rel)
        rows.append({"t": float(t), "max_abs": max_abs, "max_rel": max_rel,
                     "v_ghost_left": left, "v_ghost_right": right})
    return UvResidualTable(bc=traj.bc.value, rows=tuple(rows),
                           max_abs=worst_abs, max_rel=worst_rel,
                           ghosts_clean=ghosts_clean)


def reference_jacobian_banded(y: np.ndarray, n: int,
                              model: NonlinearityModel,
                              bc: BoundaryCondition) -> np.ndarray:
    """Tridiagonal Jacobian of the vector field, banded storage (3, n).

    Row 0 holds the superdiagonal shifted right, row 1 the diagonal, row 2
    the subdiagonal shifted left, matching the packed layout the banded
    multistep solver expects. With w(j) = phi''(D+ u(j)) the entries are

        J[k, k-1] = n^2 w(k)      J[k, k] = -n^2 (w(k) + w(k+1))
        J[k, k+1] = n^2 w(k+1)

    for 0-based cells k, where the constant ghost slopes contribute w = 0
    (position n always, position 0 under the symmetric regime).
    """
    y = np.asarray(y, dtype=float)
    s = np.empty(n + 1)
    s[0] = n * y[0] if bc is BoundaryCondition.DIRICHLET_NEUMANN else 0.0
    s[1:n] = n * (y[1:] - y[:-1])
    s[n] = 0.0
    w = np.asarray(phi_second(model, s), dtype=float)
    w[n] = 0.0
    if bc is BoundaryCondition.NEUMANN_NEUMANN:
        w[0] = 0.0
    n2 = float(n) * float(n)
    packed = np.zeros((3, n))
    packed[0, 1:] = n2 * w[1:n]
    packed[1, :] = -n2 * (w[:n] + w[1:])
    packed[2, :-1] = n2 * w[1:n]
    return packed


def reference_solution(n_ref: int, window: SubcriticalWindow,
                       model: NonlinearityModel, t_end: float,
                       bc: BoundaryCondition,
                       opts: IntegratorOptions | None = None,
                       method: str = "auto") -> Trajectory:
    """Fine-grid run of the smooth sine datum, the stand-in for the limit.

    method "explicit" uses the package integrator, "stiff" the banded
    multistep solver, and "auto" switches on REFERENCE_SWITCH_N. Either
    way the run is post-checked to stay subcritical at all samples (the
    smooth datum starts subcritical and must remain so); a violation
    raises, since every gap computed against a supercritical reference
    would be meaningless.
    """
    opts = opts or IntegratorOptions()
    datum = smooth_datum(n_ref, window)
    if method == "auto":
        method = "stiff" if n_ref >= REFERENCE_SWITCH_N else "explicit"
    if method == "explicit":
        traj = integrate(datum, model, bc=bc, t_end=t_end, opts=opts)
    elif method == "stiff":
        traj = _integrate_stiff(datum, model, bc, t_end, opts)
    else:
        raise ConfigurationError(
            f"method must be auto, explicit, or stiff, got {method!r}")
    slack = model.sigma1 + SUBCRITICAL_SLACK
    for t, state in zip(traj.times, traj.states):
        worst = float(np.max(forward_diff(state, bc)))
        if worst > slack:
            raise InvariantViolation(
                f"reference run left the subcritical regime at t={float(t)}: "
                f"max slope {worst} > sigma1 = {model.sigma1}", report=traj)
    return traj


def _integrate_stiff(u0: GridFunction, model: NonlinearityModel,
                     bc: BoundaryCondition, t_end: float,
                     opts: IntegratorOptions) -> Trajectory:
    from scipy.integrate import solve_ivp

    n = u0.n
    times = opts.sample_times(t_end)
    f = _rhs_closure(n, model, bc)
    # The solver's banded callback wants 2*lband+uband+1 rows: the packed
    # Jacobian on top, then lband workspace rows for the LU factors.
    pad = np.zeros((1, n))

    def jac(_t, y):
        return np.vstack((reference_jacobian_banded(y, n, model, bc), pad))

    sol = solve_ivp(lambda t, y: f(y), (0.0, float(t_end)), u0.values,
                    method="LSODA", t_eval=times, rtol=opts.rtol,
                    atol=opts.atol, lband=1, uband=1, jac=jac)
    if not sol.success or sol.y.shape[1] != times.shape[0]:
        raise IntegrationError(
            f"stiff reference solver failed: {sol.message}",
            t=float(sol.t[-1]) if sol.t.size else 0.0,
            detail={"n": n, "model": model.name, "bc": bc.value})
    states = tuple(GridFunction(n, sol.y[:, k].copy())
                   for k in range(times.shape[0]))
    records = tuple(_sample_record(float(t), s, model, bc)
                    for t, s in zip(times, states))
    # Sample-resolution quadrature only; the per-step Simpson accumulator
    # belongs to the explicit path.
    rates = np.asarray([np.sum(f(s.values) ** 2) / n for s in states])
    dissipation = float(np.trapezoid(rates, times))
    stats = {"path": "lsoda-banded", "rtol": opts.rtol, "atol": opts.atol,
             "nfev": int(sol.nfev), "njev": int(sol.njev),
             "nlu": int(sol.nlu)}
    return Trajectory(model=model, bc=bc, n=n, times=times, states=states,
                      dissipation=dissipation, diagnostics=records,
                      stats=stats)


@dataclasses.dataclass(frozen=True)
class GapReport:
    """Norm tables and liminf-style gaps of a cross-n study.

    sup_tv_table maps (n, t) to (sup_norm, trace_tv) of the state;
    ref_table maps t to the same pair for the reference; l2_to_ref maps
    (n, t) to the exact L2 distance of the embeddings. gaps maps t to
    (gap_sup, gap_tv): the minimum over the liminf_count largest grid
    sizes of state norm minus reference norm. richardson, when present,
    maps t to first-order extrapolations of (sup, tv) from the two
    largest grids, a diagnostic column only.
    """

    ns: tuple[int, ...]
    times: tuple[float, ...]
    l2_to_ref: dict
    sup_tv_table: dict
    ref_table: dict
    gaps: dict
    liminf_count: int
    richardson: dict | None = None

    def rows(self) -> list[dict]:
        """One row per (n, t), deterministic order, ready for CSV."""
        out = []
        for n in self.ns:
            for t in self.times:
                sup_n, tv_n = self.sup_tv_table[(n, t)]
                sup_ref, tv_ref = self.ref_table[t]
                out.append({
                    "n": n, "t": t, "tv_n": tv_n, "sup_n": sup_n,
                    "tv_ref": tv_ref, "sup_ref": sup_ref,
                    "gap_tv": tv_n - tv_ref, "gap_sup": sup_n - sup_ref,
                    "l2_to_ref": self.l2_to_ref[(n, t)],
                })
        return out

    def payload(self) -> dict:
        return {
            "ns": list(self.ns),
            "times": list(self.times),
            "liminf_count": self.liminf_count,
            "table": self.rows(),
            "gaps": [{"t": t, "gap_sup": g[0], "gap_tv": g[1]}
                     for t, g in sorted(self.gaps.items())],
            "richardson": None if self.richardson is None else
            [{"t": t, "sup": r[0], "tv": r[1]}
             for t, r in sorted(self.richardson.items())],
        }


def convergence_study(ns, datum, model: NonlinearityModel,
                      bc: BoundaryCondition, t_end: float, times,
                      reference: Trajectory,
                      opts: IntegratorOptions | None = None,
                      liminf_count: int = 2,
                      initial_gap_tolerance: float | None = None,
                      positive_gap_threshold: float | None = None,
                      richardson: bool = False) -> GapReport:
    """Integrate datum(n) for each n and tabulate norms against reference.

    The reference trajectory must be sampled at exactly the requested
    times. Every per-n run is required to come back clean from the flow
    diagnostics; the aggregated gaps are optionally checked against an
    initial-time tolerance and a positive-time threshold (both raise on
    violation with the report attached). An integration failure for any n
    aborts the study with the partial tables attached to the error.
    """
    ns = tuple(int(n) for n in ns)
    if len(ns) < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigurationError(f"ns must be strictly increasing, got {ns}")
    times = tuple(float(t) for t in times)
    base = opts or IntegratorOptions()
    run_opts = dataclasses.replace(base, times=times)
    sample = run_opts.sample_times(t_end)
    if (reference.times.shape[0] != sample.shape[0]
            or not np.allclose(reference.times, sample, rtol=0.0,
                               atol=1e-12)):
        raise ConfigurationError(
            "reference trajectory is not sampled at the study times")
    if reference.bc is not bc:
        raise ConfigurationError(
            "reference trajectory uses a different boundary regime")

    sup_tv_table: dict = {}
    l2_to_ref: dict = {}
    ref_table = {t: (sup_norm(s), trace_tv(s, bc))
                 for t, s in zip(times, reference.states)}
    for n in ns:
        u0 = datum(n)
        if not isinstance(u0, GridFunction) or u0.n != n:
            raise ConfigurationError(
                f"datum builder returned a bad grid function for n={n}")
        try:
            traj = integrate(u0, model, bc=bc, t_end=t_end, opts=run_opts)
        except IntegrationError as exc:
            exc.detail["partial_report"] = {
                "completed_ns": [k for k in ns if (k, times[0])
                                 in sup_tv_table],
                "sup_tv_table": {f"{k},{t}": v
                                 for (k, t), v in sup_tv_table.items()},
            }
            raise
        table = run_diagnostics(traj)
        if not table.clean:
            raise InvariantViolation(
                f"study run at n={n} tripped flow diagnostics: "
                f"{[v[0] for v in table.violations]}", report=table)
        for t, state, ref_state in zip(times, traj.states, reference.states):
            sup_tv_table[(n, t)] = (sup_norm(state), trace_tv(state, bc))
            l2_to_ref[(n, t)] = lp_distance(state, ref_state, 2.0)

    head = ns[-max(1, min(liminf_count, len(ns))):]
    gaps = {}
    for t in times:
        sup_ref, tv_ref = ref_table[t]
        gap_sup = min(sup_tv_table[(n, t)][0] for n in head) - sup_ref
        gap_tv = min(sup_tv_table[(n, t)][1] for n in head) - tv_ref
        gaps[t] = (gap_sup, gap_tv)

    extrapolated = None
    if richardson and len(ns) >= 2:
        n1, n2 = ns[-2], ns[-1]
        r = n1 / n2  # first-order step ratio
        extrapolated = {}
        for t in times:
            s1, v1 = sup_tv_table[(n1, t)]
            s2, v2 = sup_tv_table[(n2, t)]
            extrapolated[t] = ((s2 - r * s1) / (1.0 - r),
                               (v2 - r * v1) / (1.0 - r))

    report = GapReport(ns=ns, times=times, l2_to_ref=l2_to_ref,
                       sup_tv_table=sup_tv_table, ref_table=ref_table,
                       gaps=gaps, liminf_count=len(head),
                       richardson=extrapolated)

    if initial_gap_tolerance is not None and times[0] == 0.0:
        g0 = report.gaps[0.0]
        if max(g0) > initial_gap_tolerance:
            raise InvariantViolation(
                f"initial-time gaps {g0} exceed the data-construction "
                f"tolerance {initial_gap_tolerance}", report=report)
    if positive_gap_threshold is not None:
        for t in times:
            if t <= 0.0:
                continue
            if min(report.gaps[t]) < positive_gap_threshold:
                raise InvariantViolation(
                    f"gaps {report.gaps[t]} at t={t} fall below the "
                    f"threshold {positive_gap_threshold}", report=report)
    return report


GAP_COLUMNS = ("n", "t", "tv_n", "sup_n", "tv_ref", "sup_ref", "gap_tv",
                "gap_sup", "l2_to_ref")


def save_gap_csv(report: GapReport, path) -> None:
    """Write the per-(n, t) table; floats at 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GAP_COLUMNS)
        for row in report.rows():
            writer.writerow([row["n"]] + ["%.17g" % row[c]
                                          for c in GAP_COLUMNS[1:]])


def save_gap_json(report: GapReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.payload(), fh, indent=2, sort_keys=True)
        fh.write("\n")
