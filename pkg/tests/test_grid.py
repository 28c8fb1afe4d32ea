"""Grid layer: difference calculus, TV family, embeddings, serialization."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmflow.grid import (
    BoundaryCondition,
    GridFunction,
    backward_diff,
    embed,
    forward_diff,
    from_json,
    load_csv,
    lp_distance,
    odd_reflection,
    save_csv,
    sup_norm,
    to_json,
    tv,
    tv_m_plus,
    tv_pm,
)

from _oracles import tv_m_plus_bruteforce

NN = BoundaryCondition.NEUMANN_NEUMANN
DN = BoundaryCondition.DIRICHLET_NEUMANN

finite_values = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=1, max_size=40,
).map(lambda xs: GridFunction(n=len(xs), values=np.asarray(xs)))


def gf(*values):
    return GridFunction(n=len(values), values=np.asarray(values, dtype=float))


def test_gridfunction_validation():
    with pytest.raises(ValueError):
        GridFunction(n=3, values=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        GridFunction(n=2, values=np.array([1.0, np.nan]))
    u = gf(1.0, 2.0)
    assert u.value(1) == 1.0 and u.value(2) == 2.0
    with pytest.raises(IndexError):
        u.value(0)
    with pytest.raises(Exception):
        u.values[0] = 5.0  # frozen storage


def test_forward_diff_examples():
    c = gf(3.5, 3.5, 3.5)
    assert np.all(forward_diff(c, NN) == 0.0)
    n = 5
    lin = GridFunction(n=n, values=np.arange(1, n + 1) / n)
    d = forward_diff(lin, NN)
    assert d[0] == 0.0 and d[n] == 0.0
    assert d[1:n] == pytest.approx(np.ones(n - 1), rel=1e-12)
    u = gf(0.5, 0.7)
    assert forward_diff(u, DN) == pytest.approx([1.0, 0.4, 0.0], abs=1e-15)


def test_backward_diff_is_shifted_forward_diff():
    rng = np.random.default_rng(0)
    for bc in (NN, DN):
        u = GridFunction(n=9, values=rng.normal(size=9))
        f = forward_diff(u, bc)
        b = backward_diff(u, bc)
        # position j of b holds D-u(j+1) = D+u(j) = position j of f
        assert np.array_equal(b, f)
    lin = GridFunction(n=4, values=np.arange(1, 5) / 4)
    assert backward_diff(lin, NN)[0] == 0.0  # D-u(1) = D+u(0) = 0


def test_sup_norm_examples():
    assert sup_norm(gf(-3.0, 1.0, 2.0)) == 3.0
    assert sup_norm(gf(0.0, 0.0)) == 0.0


@given(u=finite_values)
@settings(max_examples=100)
def test_sup_norm_symmetry(u):
    neg = GridFunction(n=u.n, values=-u.values)
    assert sup_norm(neg) == sup_norm(u)


def test_tv_examples():
    mono = gf(0.0, 0.2, 0.9, 1.5)
    assert tv(mono) == pytest.approx(1.5)
    assert tv(gf(0.0, 1.0, 0.0, 1.0)) == 3.0
    u = gf(0.3, -0.2, 0.5)
    shifted = GridFunction(n=3, values=u.values + 17.25)
    assert tv(shifted) == pytest.approx(tv(u), abs=1e-12)


def test_tv_equals_scaled_slope_sum_under_neumann():
    rng = np.random.default_rng(1)
    u = GridFunction(n=17, values=rng.uniform(-1, 1, 17))
    assert tv(u) == pytest.approx(np.sum(np.abs(forward_diff(u, NN))) / u.n,
                                  rel=1e-12)


def test_tv_pm_examples():
    plus, minus = tv_pm(gf(0.0, 1.0, 0.0))
    assert (plus, minus) == (1.0, 1.0)
    nd = gf(0.1, 0.4, 0.4, 2.0)
    assert tv_pm(nd) == (pytest.approx(1.9), 0.0)


@given(u=finite_values)
@settings(max_examples=100)
def test_tv_pm_decomposition_and_reflection(u):
    plus, minus = tv_pm(u)
    assert plus + minus == pytest.approx(tv(u), rel=1e-12, abs=1e-12)
    neg = GridFunction(n=u.n, values=-u.values)
    assert tv_pm(neg) == (minus, plus)


def test_tv_m_plus_examples():
    u = gf(0.0, 1.0, 0.0, 1.0)
    assert tv_m_plus(u, 1) == 1.0
    assert tv_m_plus(u, 2) == 2.0
    assert tv_m_plus(gf(5.0, 5.0, 5.0), 3) == 0.0
    with pytest.raises(ValueError):
        tv_m_plus(u, 0)


def test_tv_m_plus_matches_bruteforce():
    rng = np.random.default_rng(42)
    for _ in range(60):
        n = int(rng.integers(1, 13))
        u = GridFunction(n=n, values=rng.uniform(-1, 1, n))
        for m in (1, 2, 3):
            assert tv_m_plus(u, m) == tv_m_plus_bruteforce(u.values, m)


@given(u=finite_values, m=st.integers(min_value=1, max_value=4))
@settings(max_examples=100)
def test_tv_m_plus_monotone_in_m_and_capped_by_tv_plus(u, m):
    a = tv_m_plus(u, m)
    b = tv_m_plus(u, m + 1)
    assert a <= b <= tv_pm(u)[0] + 1e-9 * (1 + sup_norm(u))
    # enough alternations always reach TV+
    assert tv_m_plus(u, u.n) == pytest.approx(tv_pm(u)[0], rel=1e-12, abs=1e-12)


def test_tv_m_plus_saturates_at_monotone_run_count():
    u = gf(0.0, 2.0, 1.0, 3.0, 0.5)  # rises 0->2 and 1->3: TV+ = 4 with m = 2
    assert tv_m_plus(u, 2) == pytest.approx(4.0)
    assert tv_m_plus(u, 3) == pytest.approx(4.0)


def test_embed_examples():
    u = gf(1.5, -2.0)
    f = embed(u)
    assert f(0.3) == 1.5 and f(0.8) == -2.0
    for i in (1, 2):
        assert f(i / 2) == u.value(i)  # left continuity at breakpoints
    mid = f((np.arange(1, 3) - 0.5) / 2)
    assert np.array_equal(mid, u.values)


def test_embed_breakpoint_snap_is_robust():
    n = 3
    u = GridFunction(n=n, values=np.array([10.0, 20.0, 30.0]))
    f = embed(u)
    for i in range(1, n + 1):
        assert f(i / n) == u.value(i)  # 1/3, 2/3 are not representable exactly
    assert f(1e-12) == 10.0  # x just inside the open interval


@given(u=finite_values)
@settings(max_examples=100)
def test_embed_preserves_norms(u):
    f = embed(u)
    assert f.tv() == tv(u)
    assert f.sup_norm() == sup_norm(u)


def test_lp_distance_examples():
    a = gf(0.3, -1.2, 4.0)
    assert lp_distance(a, a, 2.0) == 0.0
    assert lp_distance(gf(1.0), gf(3.5), 2.0) == pytest.approx(2.5)
    assert lp_distance(gf(0.0, 1.0), gf(0.5), 1.0) == pytest.approx(0.5)
    assert lp_distance(gf(0.0, 1.0), gf(0.5), math.inf) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        lp_distance(a, a, 0.5)


def test_lp_distance_cross_grid_exactness():
    # u on 3 cells vs w on 2 cells: breakpoints {1/3, 2/3} and {1/2};
    # piecewise differences worked out by hand
    u = gf(0.0, 1.0, 0.0)
    w = gf(1.0, 1.0)
    # |du| = 1 on (0,1/3], 0 on (1/3,2/3], 1 on (2/3,1]
    assert lp_distance(u, w, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert lp_distance(u, w, 2.0) == pytest.approx(math.sqrt(2.0 / 3.0), rel=1e-15)
    assert lp_distance(u, w, math.inf) == 1.0


@given(data=st.data())
@settings(max_examples=60)
def test_lp_distance_triangle_inequality(data):
    n1 = data.draw(st.integers(1, 12))
    n2 = data.draw(st.integers(1, 12))
    n3 = data.draw(st.integers(1, 12))
    rng_seed = data.draw(st.integers(0, 2**31))
    rng = np.random.default_rng(rng_seed)
    u = GridFunction(n=n1, values=rng.uniform(-1, 1, n1))
    v = GridFunction(n=n2, values=rng.uniform(-1, 1, n2))
    w = GridFunction(n=n3, values=rng.uniform(-1, 1, n3))
    for p in (1.0, 2.0, 3.5, math.inf):
        assert lp_distance(u, w, p) <= (lp_distance(u, v, p)
                                        + lp_distance(v, w, p) + 1e-12)


def test_odd_reflection_examples():
    u = gf(1.0, 2.0)
    w = odd_reflection(u)
    assert w.n == 4
    assert np.array_equal(w.values, [-2.0, -1.0, 1.0, 2.0])
    z = odd_reflection(gf(0.0, 0.0, 0.0))
    assert np.all(z.values == 0.0)


@given(u=finite_values)
@settings(max_examples=100)
def test_odd_reflection_identities(u):
    w = odd_reflection(u)
    n = u.n
    for i in (1, n):  # spot-check the defining relations bit-exactly
        assert w.value(n + i) == u.value(i)
        assert w.value(n + 1 - i) == -u.value(i)
    assert np.array_equal(w.values[:n], -w.values[2 * n - 1:n - 1:-1])
    assert tv(w) == pytest.approx(2.0 * tv(u) + 2.0 * abs(u.value(1)),
                                  rel=1e-12, abs=1e-9)


def test_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(3)
    u = GridFunction(n=50, values=rng.normal(size=50) * 1e3)
    path = tmp_path / "u.csv"
    save_csv(u, path)
    text = path.read_text(encoding="utf-8")
    assert text.splitlines()[0] == "i,value"
    back = load_csv(path)
    assert back.n == u.n
    assert np.array_equal(back.values, u.values)


def test_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        load_csv(path)


@given(u=finite_values)
@settings(max_examples=100)
def test_json_roundtrip_exact(u):
    assert np.array_equal(from_json(to_json(u)).values, u.values)
