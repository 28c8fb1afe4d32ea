"""Flux diagnostics, reference surrogates, and the gap machinery."""

import dataclasses
import json
import math

import numpy as np
import pytest

from pmflow import analysis, counterexample as cx
from pmflow.errors import ConfigurationError, InvariantViolation
from pmflow.flow import IntegratorOptions, integrate
from pmflow.grid import BoundaryCondition, GridFunction, forward_diff, tv
from pmflow.phi import SubcriticalWindow, log_quadratic, phi_prime

NN = BoundaryCondition.NEUMANN_NEUMANN
DN = BoundaryCondition.DIRICHLET_NEUMANN
WINDOW = SubcriticalWindow(sigma0=0.5, lambda0=0.48, Lambda0=1.0)


@pytest.fixture(scope="module")
def log_model():
    return log_quadratic()


def test_v_field_examples(log_model):
    n = 16  # dyadic so the ramp slope is exactly 1.0
    const = GridFunction(n, np.full(n, 0.7))
    assert np.all(analysis.v_field(const, log_model) == 0.0)
    ramp = GridFunction(n, np.arange(1, n + 1) / n)
    v = analysis.v_field(ramp, log_model)
    assert v.shape == (n + 1,)
    assert np.all(v[1:n] == 0.5)  # phi'(1) = 1/2 at the critical slope
    assert v[0] == 0.0 and v[n] == 0.0
    left = analysis.v_field(ramp, log_model, DN)
    assert left[0] == phi_prime(log_model, n * ramp.value(1))
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = GridFunction(n, rng.uniform(-3, 3, n))
        assert np.max(np.abs(analysis.v_field(u, log_model))) <= 0.5


def test_sign_measure_nonnegative_bit_exact(log_model):
    n = 16  # dyadic grid, slope exactly 1.0
    const = GridFunction(n, np.zeros(n))
    assert np.all(analysis.sign_measure(const, log_model) == 0.0)
    ramp = GridFunction(n, np.arange(1, n + 1) / n)
    prod = analysis.sign_measure(ramp, log_model)
    assert np.all(prod[1:n] == 0.5)  # 1 * phi'(1)
    rng = np.random.default_rng(99)
    for _ in range(200):
        u = GridFunction(n, rng.uniform(-5, 5, n))
        for bc in (NN, DN):
            assert np.all(analysis.sign_measure(u, log_model, bc) >= 0.0)


def test_trace_tv(log_model):
    u = GridFunction(4, np.asarray([0.2, 0.1, 0.5, 0.5]))
    assert analysis.trace_tv(u, NN) == tv(u)
    assert analysis.trace_tv(u, DN) == tv(u) + 0.2


def test_uv_residual_identity(log_model):
    rng = np.random.default_rng(3)
    u0 = GridFunction(16, rng.uniform(-1, 1, 16))
    opts = IntegratorOptions(n_samples=6)
    traj = integrate(u0, log_model, bc=NN, t_end=0.05, opts=opts)
    table = analysis.uv_residual(traj, log_model)
    assert table.max_abs == 0.0  # same primitives, same floats
    assert table.max_rel == 0.0
    assert table.ghosts_clean
    assert all(row["v_ghost_left"] == 0.0 and row["v_ghost_right"] == 0.0
               for row in table.rows)

    up = GridFunction(16, np.linspace(0.1, 0.9, 16))
    traj_dn = integrate(up, log_model, bc=DN, t_end=0.05, opts=opts)
    table_dn = analysis.uv_residual(traj_dn, log_model)
    assert table_dn.max_abs == 0.0
    assert table_dn.ghosts_clean  # right ghost still zero
    assert table_dn.rows[0]["v_ghost_left"] > 0.0
    payload = json.loads(json.dumps(table_dn.payload()))
    assert payload["bc"] == "dirichlet-neumann"


@pytest.mark.parametrize("bc", [NN, DN])
def test_reference_jacobian_banded_matches_dense(bc, log_model):
    from pmflow.flow import _rhs_closure

    n = 6
    rng = np.random.default_rng(17)
    y = rng.uniform(-0.4, 0.4, n)
    f = _rhs_closure(n, log_model, bc)
    packed = analysis.reference_jacobian_banded(y, n, log_model, bc)
    h = 1e-7
    dense = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        dense[:, j] = (f(y + e) - f(y - e)) / (2 * h)
    for i in range(n):
        for j in range(n):
            entry = packed[1 + i - j, j] if abs(i - j) <= 1 else 0.0
            assert entry == pytest.approx(dense[i, j], rel=1e-6, abs=1e-5)
    # Flux coupling is symmetric across each interface.
    assert np.allclose(packed[0, 1:], packed[2, :-1], rtol=0, atol=0)


def test_reference_solution_explicit_small(log_model):
    opts = IntegratorOptions(n_samples=11)
    traj = analysis.reference_solution(64, WINDOW, log_model, 0.5, DN,
                                       opts=opts)
    assert traj.stats["path"] in ("compiled", "numpy")
    tv0 = analysis.trace_tv(traj.states[0], DN)
    assert math.isclose(tv0, WINDOW.sigma0 / 2, rel_tol=1e-12)
    assert analysis.trace_tv(traj.final, DN) <= tv0
    for state in traj.states:
        assert np.max(forward_diff(state, DN)) <= log_model.sigma1 + 1e-8


def test_reference_switches_to_stiff_path(log_model):
    opts = IntegratorOptions(n_samples=3)
    traj = analysis.reference_solution(512, WINDOW, log_model, 0.01, DN,
                                       opts=opts)
    assert traj.stats["path"] == "lsoda-banded"
    assert traj.stats["njev"] >= 0
    assert traj.dissipation >= 0.0
    with pytest.raises(ConfigurationError, match="method"):
        analysis.reference_solution(64, WINDOW, log_model, 0.01, DN,
                                    opts=opts, method="implicit")


def test_stiff_reference_matches_explicit(log_model):
    # The two reference paths are independent codes; they must agree on a
    # grid both can afford.
    opts = IntegratorOptions(rtol=1e-8, atol=1e-12, n_samples=6)
    explicit = analysis.reference_solution(256, WINDOW, log_model, 0.25, DN,
                                           opts=opts, method="explicit")
    stiff = analysis.reference_solution(256, WINDOW, log_model, 0.25, DN,
                                        opts=opts, method="stiff")
    assert np.allclose(explicit.times, stiff.times, rtol=0, atol=0)
    for a, b in zip(explicit.states, stiff.states):
        assert np.max(np.abs(a.values - b.values)) <= 1e-6


@pytest.fixture(scope="module")
def smooth_reference(log_model):
    opts = IntegratorOptions(times=(0.0, 0.125, 0.25))
    return analysis.reference_solution(128, WINDOW, log_model, 0.25, DN,
                                       opts=opts, method="explicit")


def test_convergence_study_smooth_family(log_model, smooth_reference):
    times = (0.0, 0.125, 0.25)
    report = analysis.convergence_study(
        (8, 16, 32), lambda n: cx.smooth_datum(n, WINDOW), log_model, DN,
        0.25, times, smooth_reference, richardson=True)
    assert report.ns == (8, 16, 32) and report.liminf_count == 2
    for t in times:
        gap_sup, gap_tv = report.gaps[t]
        # Lower semicontinuity direction: norms never undershoot the
        # reference by more than roundoff-scale slack.
        assert gap_sup >= -1e-3 and gap_tv >= -1e-3
        assert abs(gap_sup) < 0.02 and abs(gap_tv) < 0.02
    for t in times[1:]:
        assert report.l2_to_ref[(32, t)] < report.l2_to_ref[(8, t)]
    assert set(report.richardson) == set(times)
    rows = report.rows()
    assert len(rows) == 9
    assert [r["n"] for r in rows[:3]] == [8, 8, 8]


def test_convergence_study_staircase_family(log_model):
    times = (0.0, 0.5, 1.0)
    opts = IntegratorOptions(rtol=1e-6, atol=1e-12, times=times)
    reference = analysis.reference_solution(512, WINDOW, log_model, 1.0, DN,
                                            opts=opts)
    params = cx.params_for(100, log_model, WINDOW, T=1.0)

    def datum(n):
        return cx.staircase_datum(cx.params_for(n, log_model, WINDOW, T=1.0))

    bound0 = params.J_n + (WINDOW.sigma0 / 2) * (
        1.0 - math.sin(math.pi / 2 * params.m_n / params.n))
    report = analysis.convergence_study(
        (100,), datum, log_model, DN, 1.0, times, reference,
        opts=opts, initial_gap_tolerance=bound0,
        positive_gap_threshold=0.05)
    gap_sup0, gap_tv0 = report.gaps[0.0]
    assert 0.0 < gap_tv0 <= bound0 and 0.0 < gap_sup0 <= bound0
    gap_sup1, gap_tv1 = report.gaps[1.0]
    assert gap_sup1 >= 0.05 and gap_tv1 >= 0.05
    # The jump keeps the edge high: sup = trace tv = edge value.
    sup_n, tv_n = report.sup_tv_table[(100, 1.0)]
    assert math.isclose(sup_n, tv_n, rel_tol=1e-9)
    with pytest.raises(InvariantViolation, match="threshold") as exc:
        analysis.convergence_study((100,), datum, log_model, DN, 1.0, times,
                                   reference, opts=opts,
                                   positive_gap_threshold=10.0)
    assert isinstance(exc.value.report, analysis.GapReport)


def test_convergence_study_input_validation(log_model, smooth_reference):
    times = (0.0, 0.125, 0.25)
    builder = lambda n: cx.smooth_datum(n, WINDOW)
    with pytest.raises(ConfigurationError, match="strictly increasing"):
        analysis.convergence_study((16, 8), builder, log_model, DN, 0.25,
                                   times, smooth_reference)
    with pytest.raises(ConfigurationError, match="study times"):
        analysis.convergence_study((8,), builder, log_model, DN, 0.125,
                                   (0.0, 0.125), smooth_reference)
    with pytest.raises(ConfigurationError, match="boundary regime"):
        analysis.convergence_study((8,), builder, log_model, NN, 0.25,
                                   times, smooth_reference)
    with pytest.raises(ConfigurationError, match="datum builder"):
        analysis.convergence_study(
            (8,), lambda n: cx.smooth_datum(n + 1, WINDOW), log_model, DN,
            0.25, times, smooth_reference)


def test_gap_report_serialization(tmp_path, log_model, smooth_reference):
    times = (0.0, 0.125, 0.25)
    report = analysis.convergence_study(
        (8, 16), lambda n: cx.smooth_datum(n, WINDOW), log_model, DN, 0.25,
        times, smooth_reference)
    csv_path = tmp_path / "gaps.csv"
    json_path = tmp_path / "gaps.json"
    analysis.save_gap_csv(report, csv_path)
    analysis.save_gap_json(report, json_path)
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ("n,t,tv_n,sup_n,tv_ref,sup_ref,gap_tv,gap_sup,"
                        "l2_to_ref")
    assert len(lines) == 1 + 2 * len(times)
    payload = json.loads(json_path.read_text(encoding="utf-8"))
    assert payload["ns"] == [8, 16]
    # Deterministic output: a second save is byte-identical.
    again = tmp_path / "gaps2.csv"
    analysis.save_gap_csv(report, again)
    assert again.read_bytes() == csv_path.read_bytes()
