"""Command-line front end: simulate, counterexample, converge, selftest.

Exit codes are part of the interface and stay stable: 0 success, 2
configuration problem, 3 integration failure, 4 invariant violation, 5
inadmissible staircase parameters (the offending inequalities are named on
stderr). Artifacts are deterministic for a fixed config and seed: CSV uses
17-significant-digit floats, JSON sorted keys. PNG figures and the
plain-text plot scripts are rendered alongside but never influence the
exit code.

Configuration is a flat JSON object whose keys match the long flag names
with dashes replaced by underscores; values given on the command line
override the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import pathlib
import sys

import numpy as np

from . import analysis, counterexample, flow, grid, phi, selftest
from .errors import (AdmissibilityError, ConfigurationError, IntegrationError,
                     InvariantViolation)
from .grid import BoundaryCondition

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_INVARIANT = 4
EXIT_INADMISSIBLE = 5

# gap threshold headroom: the positive-time gap must clear sigma0/2 minus
# the reference variation with this much to spare before we call it a pass
GAP_SAFETY = 0.01

DEFAULTS: dict = {
    "model": "log",
    "bc": None,
    "n": 100,
    "ns": (),
    "sigma0": 0.5,
    "lambda0": None,
    "Lambda0": None,
    "t_end": 1.0,
    "samples": 101,
    "rtol": None,
    "atol": 1e-12,
    "datum": "smooth",
    "out": "pmflow-out",
    "seed": 20260815,
    "n_ref": 4096,
    "probes": (0.25, 0.5),
    "odd_reflection": False,
    "liminf_count": 2,
    "richardson": False,
    "initial_gap_tol": None,
    "gap_threshold": None,
    "inject_fault": None,
    "draws": 60,
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one subcommand invocation."""

    command: str
    model: str
    bc: str | None
    n: int
    ns: tuple[int, ...]
    sigma0: float
    lambda0: float | None
    Lambda0: float | None
    t_end: float
    samples: int
    rtol: float
    atol: float
    datum: str
    out: str
    seed: int
    n_ref: int
    probes: tuple[float, ...]
    odd_reflection: bool
    liminf_count: int
    richardson: bool
    initial_gap_tol: float | None
    gap_threshold: float | None
    inject_fault: str | None
    draws: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"n must be at least 2, got {self.n}")
        if self.samples < 2:
            raise ConfigurationError("samples must be at least 2")
        if self.t_end <= 0.0:
            raise ConfigurationError("t_end must be positive")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ConfigurationError("tolerances must be positive")
        if self.n_ref < 2:
            raise ConfigurationError("n_ref must be at least 2")
        if self.bc is not None:
            values = [b.value for b in BoundaryCondition]
            if self.bc not in values:
                raise ConfigurationError(
                    f"bc must be one of {values}, got {self.bc!r}")


# ---------------------------------------------------------------------------
# Argument parsing and config resolution
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat JSON file of settings; flags override it")
    p.add_argument("--model", default=None,
                   help="nonlinearity: log, atan2 or quartic")
    p.add_argument("--n", type=int, default=None, help="grid size")
    p.add_argument("--ns", default=None,
                   help="comma-separated grid sizes for a study")
    p.add_argument("--sigma0", type=float, default=None,
                   help="subcritical window height")
    p.add_argument("--lambda0", type=float, default=None,
                   help="explicit lower bilipschitz constant (with --Lambda0)")
    p.add_argument("--Lambda0", type=float, default=None,
                   help="explicit upper bilipschitz constant (with --lambda0)")
    p.add_argument("--t-end", dest="t_end", type=float, default=None,
                   help="time horizon")
    p.add_argument("--samples", type=int, default=None,
                   help="number of uniform sample times, endpoints included")
    p.add_argument("--rtol", type=float, default=None,
                   help="relative integration tolerance")
    p.add_argument("--atol", type=float, default=None,
                   help="absolute integration tolerance")
    p.add_argument("--bc", default=None,
                   help="neumann-neumann or dirichlet-neumann")
    p.add_argument("--datum", default=None,
                   help="smooth, staircase, or a path to an i,value CSV")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for randomized suites")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pmflow",
        description="Semi-discrete Perona-Malik flow: runs, barrier checks, "
                    "convergence studies and self-verification.")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one datum and report "
                         "the monotonicity diagnostics")
    _add_common(sim)
    sim.add_argument("--odd-reflection", dest="odd_reflection",
                     action="store_const", const=True, default=None,
                     help="oddly reflect the staircase datum and run the "
                          "doubled grid with Neumann ends")

    ce = sub.add_parser("counterexample", help="staircase run with barrier "
                        "checks and the gap against a fine reference")
    _add_common(ce)
    ce.add_argument("--n-ref", dest="n_ref", type=int, default=None,
                    help="reference grid size")
    ce.add_argument("--probes", default=None,
                    help="comma-separated x positions for the upper bound")
    ce.add_argument("--initial-gap-tol", dest="initial_gap_tol", type=float,
                    default=None, help="override the t=0 gap tolerance")
    ce.add_argument("--gap-threshold", dest="gap_threshold", type=float,
                    default=None, help="override the positive-time gap bar")

    cv = sub.add_parser("converge", help="cross-n study of variation and "
                        "sup-norm gaps against a fine reference")
    _add_common(cv)
    cv.add_argument("--n-ref", dest="n_ref", type=int, default=None,
                    help="reference grid size")
    cv.add_argument("--liminf-count", dest="liminf_count", type=int,
                    default=None, help="how many of the largest grids enter "
                    "the gap minimum")
    cv.add_argument("--richardson", action="store_const", const=True,
                    default=None, help="add first-order extrapolated norms")
    cv.add_argument("--initial-gap-tol", dest="initial_gap_tol", type=float,
                    default=None, help="override the t=0 gap tolerance")
    cv.add_argument("--gap-threshold", dest="gap_threshold", type=float,
                    default=None, help="override the positive-time gap bar")

    st = sub.add_parser("selftest", help="run the built-in invariant suites")
    _add_common(st)
    st.add_argument("--draws", type=int, default=None,
                    help="random draws for the exhaustive variation suite")
    st.add_argument("--inject-fault", dest="inject_fault", default=None,
                    choices=["phi-prime-sign-flip"],
                    help="corrupt the flux model to exercise the failure path")
    return p


def _parse_int_list(value) -> tuple[int, ...]:
    if isinstance(value, str):
        parts = [s for s in value.split(",") if s.strip()]
    else:
        parts = list(value)
    try:
        return tuple(int(s) for s in parts)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a list of integers, got {value!r}")


def _parse_float_list(value) -> tuple[float, ...]:
    if isinstance(value, str):
        parts = [s for s in value.split(",") if s.strip()]
    else:
        parts = list(value)
    try:
        return tuple(float(s) for s in parts)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a list of numbers, got {value!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional JSON config file, and explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = pathlib.Path(args.config)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        merged.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    merged["ns"] = _parse_int_list(merged["ns"])
    merged["probes"] = _parse_float_list(merged["probes"])
    merged["odd_reflection"] = bool(merged["odd_reflection"])
    merged["richardson"] = bool(merged["richardson"])
    if merged["rtol"] is None:
        # the barrier run is certified at 1e-6; the monotone-in-time
        # diagnostics need the tighter default to hold within tolerance
        merged["rtol"] = 1e-6 if args.command == "counterexample" else 1e-8
    return RunConfig(command=args.command, **merged)


def _model(cfg: RunConfig) -> phi.NonlinearityModel:
    try:
        return phi.model_from_name(cfg.model)
    except ValueError as exc:
        raise ConfigurationError(str(exc))


def _window(cfg: RunConfig, model: phi.NonlinearityModel) -> phi.SubcriticalWindow:
    if (cfg.lambda0 is None) != (cfg.Lambda0 is None):
        raise ConfigurationError(
            "lambda0 and Lambda0 override the window only together")
    if cfg.lambda0 is not None:
        return phi.SubcriticalWindow(sigma0=cfg.sigma0, lambda0=cfg.lambda0,
                                     Lambda0=cfg.Lambda0)
    try:
        return phi.bilipschitz_window(model, cfg.sigma0)
    except ValueError as exc:
        raise ConfigurationError(str(exc))


def _bc(name: str | None, fallback: BoundaryCondition) -> BoundaryCondition:
    if name is None:
        return fallback
    return BoundaryCondition(name)


def _opts(cfg: RunConfig) -> flow.IntegratorOptions:
    return flow.IntegratorOptions(rtol=cfg.rtol, atol=cfg.atol,
                                  n_samples=cfg.samples)


def _outdir(cfg: RunConfig) -> pathlib.Path:
    path = pathlib.Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Shared artifact helpers
# ---------------------------------------------------------------------------

def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _write_json(path: pathlib.Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_text(path: pathlib.Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _render_figure(path: pathlib.Path, draw) -> None:
    # figures are best effort by contract: report, never change the exit code
    try:
        import matplotlib
        matplotlib.use("Agg", force=True)
        import matplotlib.pyplot as plt
        fig = plt.figure(figsize=(9.0, 4.5))
        draw(fig)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    except Exception as exc:
        _err(f"warning: could not render {path.name}: {exc}")


def _snapshot_indices(count: int, want: int = 5) -> list[int]:
    if count <= want:
        return list(range(count))
    return sorted({int(round(k * (count - 1) / (want - 1)))
                   for k in range(want)})


def _cell_centers(n: int) -> np.ndarray:
    return (np.arange(1, n + 1) - 0.5) / n


def _draw_profiles(fig, traj: flow.Trajectory) -> None:
    ax = fig.add_subplot(1, 1, 1)
    x = _cell_centers(traj.n)
    for k in _snapshot_indices(len(traj.times)):
        ax.plot(x, traj.states[k].values, label=f"t={traj.times[k]:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("u(t, x)")
    ax.set_title(f"profiles, n={traj.n}, {traj.bc.value}")
    ax.legend(fontsize=8)


def _draw_counterexample(fig, traj: flow.Trajectory,
                         params: counterexample.CounterexampleParams,
                         reference: flow.Trajectory,
                         report: analysis.GapReport | None) -> None:
    ax = fig.add_subplot(1, 2, 1)
    x = _cell_centers(traj.n)
    xr = _cell_centers(reference.n)
    for k in _snapshot_indices(len(traj.times), want=3):
        t = traj.times[k]
        line, = ax.plot(x, traj.states[k].values, label=f"u, t={t:g}")
        ax.plot(x, counterexample.barrier_profile(params, t),
                linestyle="--", color=line.get_color(), linewidth=0.9)
    ax.plot(xr, reference.final.values, color="0.4", linewidth=0.9,
            label=f"reference, t={reference.times[-1]:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title(f"staircase vs barrier (dashed), n={params.n}")
    ax.legend(fontsize=8)
    if report is not None:
        ax2 = fig.add_subplot(1, 2, 2)
        ts = list(report.times)
        ax2.plot(ts, [report.gaps[t][1] for t in ts], label="variation gap")
        ax2.plot(ts, [report.gaps[t][0] for t in ts], label="sup-norm gap")
        ax2.set_xlabel("t")
        ax2.set_ylabel("gap to reference")
        ax2.set_title("strict-convergence gap")
        ax2.legend(fontsize=8)


def _draw_gaps(fig, report: analysis.GapReport) -> None:
    ax = fig.add_subplot(1, 2, 1)
    ts = list(report.times)
    for n in report.ns:
        ax.plot(ts, [report.sup_tv_table[(n, t)][1] for t in ts],
                label=f"n={n}")
    ax.plot(ts, [report.ref_table[t][1] for t in ts], color="0.4",
            linestyle="--", label="reference")
    ax.set_xlabel("t")
    ax.set_ylabel("variation")
    ax.legend(fontsize=8)
    ax2 = fig.add_subplot(1, 2, 2)
    ax2.plot(ts, [report.gaps[t][1] for t in ts], label="variation gap")
    ax2.plot(ts, [report.gaps[t][0] for t in ts], label="sup-norm gap")
    ax2.set_xlabel("t")
    ax2.set_ylabel("gap")
    ax2.legend(fontsize=8)


def _trajectory_plot_script(csv_name: str, png_name: str, n: int,
                            times: list[float]) -> str:
    shown = ", ".join(f"{t:g}" for t in times)
    return (
        "# profile snapshots\n"
        f"# data: {csv_name}, long format with header t,i,value\n"
        f"# grid: i = 1..{n}, plot against x = (i - 0.5)/{n}\n"
        f"read {csv_name}\n"
        f"filter t in ({shown})\n"
        "series x=(i-0.5)/n y=value group=t style=line\n"
        "labels x=\"x\" y=\"u(t, x)\"\n"
        f"write {png_name}\n")


def _counterexample_plot_script(params: counterexample.CounterexampleParams,
                                times: list[float]) -> str:
    shown = ", ".join(f"{t:g}" for t in times)
    return (
        "# staircase solution against the explicit barrier and the\n"
        "# fine-grid reference\n"
        "# data: trajectory.csv and reference.csv (t,i,value),\n"
        "#       gap_report.csv (per-time norms and gaps)\n"
        f"read trajectory.csv as u     # n = {params.n}\n"
        f"read reference.csv  as ref\n"
        f"filter t in ({shown})\n"
        "series from u:   x=(i-0.5)/n y=value group=t style=line\n"
        "overlay barrier: sine ramp below the jump cell, parabolic cap "
        "above, dashed\n"
        "overlay from ref at final t: style=line color=gray\n"
        "panel 2: read gap_report.csv; series x=t y=gap_tv and y=gap_sup\n"
        "write counterexample.png\n")


def _gap_plot_script(report: analysis.GapReport) -> str:
    ns = ", ".join(str(n) for n in report.ns)
    return (
        "# variation per grid against the reference, and the gap curves\n"
        "# data: gap_report.csv with header "
        + ",".join(analysis.GAP_COLUMNS) + "\n"
        f"read gap_report.csv\n"
        f"panel 1: series x=t y=tv_n group=n for n in ({ns}); overlay "
        "x=t y=tv_ref dashed\n"
        "panel 2: series x=t y=gap_tv and x=t y=gap_sup\n"
        "write gaps.png\n")


def _snapshot_times(traj: flow.Trajectory, want: int = 5) -> list[float]:
    return [float(traj.times[k])
            for k in _snapshot_indices(len(traj.times), want)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _resolve_datum(cfg: RunConfig, model: phi.NonlinearityModel,
                   window: phi.SubcriticalWindow
                   ) -> tuple[grid.GridFunction, BoundaryCondition]:
    if cfg.datum == "smooth":
        return (counterexample.smooth_datum(cfg.n, window),
                _bc(cfg.bc, BoundaryCondition.NEUMANN_NEUMANN))
    if cfg.datum == "staircase":
        if cfg.odd_reflection:
            if cfg.bc == BoundaryCondition.DIRICHLET_NEUMANN.value:
                raise ConfigurationError(
                    "the odd reflection runs with Neumann ends; drop --bc")
        elif cfg.bc not in (None, BoundaryCondition.DIRICHLET_NEUMANN.value):
            raise ConfigurationError(
                "the staircase datum pins its left trace: bc must be "
                "dirichlet-neumann unless --odd-reflection is set")
        params = counterexample.params_for(cfg.n, model, window, T=cfg.t_end)
        u0 = counterexample.staircase_datum(params)
        if cfg.odd_reflection:
            return grid.odd_reflection(u0), BoundaryCondition.NEUMANN_NEUMANN
        return u0, BoundaryCondition.DIRICHLET_NEUMANN
    path = pathlib.Path(cfg.datum)
    if not path.is_file():
        raise ConfigurationError(
            f"datum must be smooth, staircase, or an existing CSV; "
            f"got {cfg.datum!r}")
    return (grid.load_csv(path),
            _bc(cfg.bc, BoundaryCondition.NEUMANN_NEUMANN))


def cmd_simulate(cfg: RunConfig) -> int:
    model = _model(cfg)
    window = _window(cfg, model)
    u0, bc = _resolve_datum(cfg, model, window)
    traj = flow.integrate(u0, model, bc, cfg.t_end, _opts(cfg))
    table = flow.run_diagnostics(traj)
    outdir = _outdir(cfg)
    flow.save_trajectory_csv(traj, outdir / "trajectory.csv")
    flow.save_diagnostics_json(traj, outdir / "diagnostics.json", table)
    times = _snapshot_times(traj)
    _write_text(outdir / "plot_trajectory.txt",
                _trajectory_plot_script("trajectory.csv", "trajectory.png",
                                        traj.n, times))
    _render_figure(outdir / "trajectory.png",
                   lambda fig: _draw_profiles(fig, traj))
    print(f"integrated n={traj.n} {bc.value} to t={cfg.t_end:g} "
          f"({traj.stats['accepted']} steps, dissipation "
          f"{traj.dissipation:.6g})")
    print(f"artifacts in {outdir}")
    if not table.clean:
        _err("invariant violations:")
        for v in table.violations:
            _err(f"  {v}")
        return EXIT_INVARIANT
    return EXIT_OK


def _auto_thresholds(cfg: RunConfig,
                     params: counterexample.CounterexampleParams,
                     window: phi.SubcriticalWindow,
                     reference: flow.Trajectory,
                     bc: BoundaryCondition) -> tuple[float, float]:
    """Ladder-derived gap bars: at t=0 the gap is J_n plus the sine deficit,
    for t>0 it must clear sigma0/2 minus the reference variation."""
    if cfg.initial_gap_tol is not None:
        initial = cfg.initial_gap_tol
    else:
        deficit = (window.sigma0 / 2.0) * (
            1.0 - math.sin(math.pi / 2.0 * params.m_n / params.n))
        initial = params.J_n + deficit + 1e-9
    if cfg.gap_threshold is not None:
        positive = cfg.gap_threshold
    else:
        ref_tv = analysis.trace_tv(reference.final, bc)
        positive = max(window.sigma0 / 2.0 - ref_tv - GAP_SAFETY, 1e-6)
    return initial, positive


def cmd_counterexample(cfg: RunConfig) -> int:
    model = _model(cfg)
    window = _window(cfg, model)
    params = counterexample.params_for(cfg.n, model, window, T=cfg.t_end)
    outdir = _outdir(cfg)
    _write_json(outdir / "params.json", params.payload())
    if not params.admissible:
        _err(f"inadmissible parameters at n={params.n}: violated "
             + "; ".join(repr(c) for c in params.failed_conditions))
        return EXIT_INADMISSIBLE

    bc = BoundaryCondition.DIRICHLET_NEUMANN
    opts = _opts(cfg)
    u0 = counterexample.staircase_datum(params)
    traj = flow.integrate(u0, model, bc, cfg.t_end, opts)
    hyp = counterexample.check_lemma_hypotheses(traj, params, model)
    conc = counterexample.check_lemma_conclusion(traj, params)
    bounds = counterexample.key_bounds_report(traj, params, cfg.probes)
    reference = analysis.reference_solution(cfg.n_ref, window, model,
                                            cfg.t_end, bc, opts)
    initial_tol, positive_thr = _auto_thresholds(cfg, params, window,
                                                 reference, bc)

    code = EXIT_OK
    report = None
    try:
        report = analysis.convergence_study(
            (cfg.n,), lambda _n: counterexample.staircase_datum(params),
            model, bc, cfg.t_end, traj.times, reference, opts,
            liminf_count=1, initial_gap_tolerance=initial_tol,
            positive_gap_threshold=positive_thr)
    except InvariantViolation as exc:
        report = exc.report
        _err(f"gap check failed: {exc}")
        code = EXIT_INVARIANT

    _write_json(outdir / "hypotheses.json", hyp.payload())
    _write_json(outdir / "conclusion.json", conc.payload())
    _write_json(outdir / "key_bounds.json", bounds.payload())
    flow.save_trajectory_csv(traj, outdir / "trajectory.csv")
    flow.save_trajectory_csv(reference, outdir / "reference.csv")
    if report is not None:
        analysis.save_gap_csv(report, outdir / "gap_report.csv")
        analysis.save_gap_json(report, outdir / "gap_report.json")
    _write_text(outdir / "plot_counterexample.txt",
                _counterexample_plot_script(params, _snapshot_times(traj, 3)))
    _render_figure(outdir / "counterexample.png",
                   lambda fig: _draw_counterexample(fig, traj, params,
                                                    reference, report))

    for name, ok in (("hypotheses", hyp.all_satisfied),
                     ("conclusion", conc.satisfied),
                     ("key bounds", bounds.satisfied)):
        print(f"{name}: {'satisfied' if ok else 'VIOLATED'}")
        if not ok:
            code = EXIT_INVARIANT
    if not hyp.all_satisfied:
        for rec in hyp.failures():
            _err(f"hypothesis {rec.item} failed: margin {rec.margin:.3e} "
                 f"at t={rec.worst_t:g}, i={rec.worst_index}")
    if not conc.satisfied:
        _err(f"ordering failed first at t={conc.first_crossing}")
    if not bounds.satisfied:
        _err(f"key bound failed: edge margin {bounds.edge_min_margin:.3e}")
    if report is not None:
        t_last = report.times[-1]
        gap_sup, gap_tv = report.gaps[t_last]
        print(f"gap at t={t_last:g}: sup {gap_sup:.6g}, variation "
              f"{gap_tv:.6g} (threshold {positive_thr:.6g})")
    print(f"artifacts in {outdir}")
    return code


def cmd_converge(cfg: RunConfig) -> int:
    if not cfg.ns:
        raise ConfigurationError("converge requires a nonempty --ns list")
    model = _model(cfg)
    window = _window(cfg, model)
    opts = _opts(cfg)
    times = tuple(opts.sample_times(cfg.t_end))

    params_top = None
    if cfg.datum == "smooth":
        bc = _bc(cfg.bc, BoundaryCondition.NEUMANN_NEUMANN)

        def builder(k: int) -> grid.GridFunction:
            return counterexample.smooth_datum(k, window)
    elif cfg.datum == "staircase":
        if cfg.bc not in (None, BoundaryCondition.DIRICHLET_NEUMANN.value):
            raise ConfigurationError(
                "the staircase family runs under dirichlet-neumann")
        bc = BoundaryCondition.DIRICHLET_NEUMANN
        params_top = counterexample.params_for(max(cfg.ns), model, window,
                                               T=cfg.t_end)

        def builder(k: int) -> grid.GridFunction:
            return counterexample.staircase_datum(
                counterexample.params_for(k, model, window, T=cfg.t_end))
    else:
        raise ConfigurationError(
            "converge needs a datum family: smooth or staircase")

    outdir = _outdir(cfg)
    try:
        reference = analysis.reference_solution(cfg.n_ref, window, model,
                                                cfg.t_end, bc, opts)
        if params_top is not None:
            initial_tol, positive_thr = _auto_thresholds(
                cfg, params_top, window, reference, bc)
        else:
            initial_tol, positive_thr = cfg.initial_gap_tol, cfg.gap_threshold
        report = analysis.convergence_study(
            cfg.ns, builder, model, bc, cfg.t_end, times, reference, opts,
            liminf_count=cfg.liminf_count, initial_gap_tolerance=initial_tol,
            positive_gap_threshold=positive_thr, richardson=cfg.richardson)
    except IntegrationError as exc:
        partial = exc.detail.get("partial_report",
                                 {"completed_ns": [], "sup_tv_table": {}})
        _write_json(outdir / "partial_report.json", partial)
        _err(f"integration failed during the study: {exc}")
        return EXIT_INTEGRATION
    except InvariantViolation as exc:
        if exc.report is not None:
            analysis.save_gap_csv(exc.report, outdir / "gap_report.csv")
            analysis.save_gap_json(exc.report, outdir / "gap_report.json")
        _err(f"gap invariant failed: {exc}")
        return EXIT_INVARIANT

    analysis.save_gap_csv(report, outdir / "gap_report.csv")
    analysis.save_gap_json(report, outdir / "gap_report.json")
    _write_text(outdir / "plot_gaps.txt", _gap_plot_script(report))
    _render_figure(outdir / "gaps.png",
                   lambda fig: _draw_gaps(fig, report))
    t_last = report.times[-1]
    gap_sup, gap_tv = report.gaps[t_last]
    print(f"study over ns={report.ns} against n_ref={cfg.n_ref}")
    print(f"gap at t={t_last:g}: sup {gap_sup:.6g}, variation {gap_tv:.6g}")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    results = selftest.run_all(cfg.seed, draws=cfg.draws,
                               fault=cfg.inject_fault)
    outdir = _outdir(cfg)
    _write_json(outdir / "selftest.json",
                {"seed": cfg.seed,
                 "results": [r.payload() for r in results]})
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failing = [r.name for r in results if not r.passed]
    if failing:
        _err(f"selftest failed in suite: {failing[0]}")
        return EXIT_INVARIANT
    return EXIT_OK


_HANDLERS = {
    "simulate": cmd_simulate,
    "counterexample": cmd_counterexample,
    "converge": cmd_converge,
    "selftest": cmd_selftest,
}


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _HANDLERS[cfg.command](cfg)
    except AdmissibilityError as exc:
        _err(f"inadmissible parameters: {exc}")
        return EXIT_INADMISSIBLE
    except ConfigurationError as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except IntegrationError as exc:
        _err(f"integration failed: {exc}")
        return EXIT_INTEGRATION
    except InvariantViolation as exc:
        _err(f"invariant violation: {exc}")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(entrypoint())
