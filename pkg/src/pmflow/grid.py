"""Discrete functions on {1,...,n} and their bounded-variation calculus.

A GridFunction u lives on n cells of width 1/n and is identified with the
left-continuous piecewise-constant function u_hat(x) = u(ceil(n x)) on (0,1).
Difference quotients carry the grid factor n:

    D+ u(i) = n (u(i+1) - u(i)),   i = 0..n,
    D- u(i) = D+ u(i-1),           i = 1..n+1,

with ghost values chosen by the boundary condition: NeumannNeumann sets
u(0) = u(1) and u(n+1) = u(n) (so the boundary quotients vanish exactly),
DirichletNeumann sets u(0) = 0 and u(n+1) = u(n).

The total-variation family:

    tv(u)      = sum |u(i+1) - u(i)|
    tv_pm(u)   = (sum of rises, sum of falls), tv+ + tv- = tv
    tv_m_plus  = max over 1 <= i_1 <= ... <= i_2m <= n of
                 sum_k (-1)^k u(i_k)   (positive m-variation)

tv_m_plus is computed by an O(n m) dynamic program whose partial sums are
accumulated left to right, so it agrees *exactly* (not just to roundoff) with
brute-force enumeration that sums tuples in the same order.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundaryCondition",
    "GridFunction",
    "forward_diff",
    "backward_diff",
    "sup_norm",
    "tv",
    "tv_pm",
    "tv_m_plus",
    "embed",
    "PiecewiseConstant",
    "lp_distance",
    "odd_reflection",
    "save_csv",
    "load_csv",
    "to_json",
    "from_json",
]


class BoundaryCondition(enum.Enum):
    NEUMANN_NEUMANN = "neumann-neumann"
    DIRICHLET_NEUMANN = "dirichlet-neumann"


@dataclass(frozen=True)
class GridFunction:
    """Values u(1),...,u(n) on a uniform grid of step 1/n over (0,1)."""

    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.shape[0] != self.n or self.n < 1:
            raise ValueError(f"expected {self.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def value(self, i: int) -> float:
        """u(i) with the 1-based index used throughout the difference calculus."""
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} outside 1..{self.n}")
        return float(self.values[i - 1])


def forward_diff(u: GridFunction, bc: BoundaryCondition) -> np.ndarray:
    """D+ u as an array of n+1 entries; position i holds D+ u(i), i = 0..n."""
    n, v = u.n, u.values
    out = np.empty(n + 1)
    out[1:n] = n * (v[1:] - v[:-1])
    out[n] = 0.0  # right ghost u(n+1) = u(n) under both regimes
    if bc is BoundaryCondition.DIRICHLET_NEUMANN:
        out[0] = n * v[0]
    else:
        out[0] = 0.0
    return out


def backward_diff(u: GridFunction, bc: BoundaryCondition) -> np.ndarray:
    """D- u as an array of n+1 entries; position j holds D- u(j+1), j = 0..n.

    Since D- u(i) = D+ u(i-1), the array is elementwise identical to
    forward_diff; only the index interpretation shifts by one.
    """
    return forward_diff(u, bc)


def sup_norm(u: GridFunction) -> float:
    return float(np.max(np.abs(u.values)))


def tv(u: GridFunction) -> float:
    return float(np.sum(np.abs(np.diff(u.values))))


def tv_pm(u: GridFunction) -> tuple[float, float]:
    """(positive, negative) variation; the two add up to tv(u)."""
    d = np.diff(u.values)
    plus = float(np.sum(np.maximum(d, 0.0)))
    minus = float(np.sum(np.maximum(-d, 0.0)))
    return plus, minus


def tv_m_plus(u: GridFunction, m: int) -> float:
    """Positive m-variation: max of sum_k (-1)^k u(i_k) over nondecreasing
    2m-tuples of indices.

    DP state best[k] = largest alternating partial sum using k points among
    the prefix scanned so far. Updating k in ascending order within one
    position allows a tuple to repeat that position (the sup ranges over
    nondecreasing, not strictly increasing, tuples; repeats contribute 0).
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    stages = 2 * m
    best = [-math.inf] * (stages + 1)
    best[0] = 0.0
    for x in u.values:
        fx = float(x)
        for k in range(1, stages + 1):
            cand = best[k - 1] - fx if k % 2 == 1 else best[k - 1] + fx
            if cand > best[k]:
                best[k] = cand
    return best[stages]


@dataclass(frozen=True)
class PiecewiseConstant:
    """Left-continuous piecewise-constant representative of a GridFunction."""

    n: int
    cell_values: np.ndarray = field(repr=False)

    @property
    def breakpoints(self) -> np.ndarray:
        """Right endpoints i/n of the n cells."""
        return np.arange(1, self.n + 1) / self.n

    def __call__(self, x) -> float | np.ndarray:
        """Evaluate u_hat(x) = u(ceil(n x)) for x in (0, 1].

        Products n*x landing within 1e-9 of an integer are snapped to it so
        that u_hat(i/n) = u(i) holds for the float closest to i/n, keeping
        breakpoint evaluation deterministic.
        """
        t = self.n * np.asarray(x, dtype=float)
        nearest = np.rint(t)
        snapped = np.where(np.abs(t - nearest) <= 1e-9 * np.maximum(1.0, np.abs(t)),
                           nearest, np.ceil(t))
        idx = np.clip(snapped.astype(int), 1, self.n)
        out = self.cell_values[idx - 1]
        return float(out) if np.ndim(x) == 0 else out

    def tv(self) -> float:
        return float(np.sum(np.abs(np.diff(self.cell_values))))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.cell_values)))


def embed(u: GridFunction) -> PiecewiseConstant:
    return PiecewiseConstant(n=u.n, cell_values=u.values)


def lp_distance(u: GridFunction, w: GridFunction, p: float) -> float:
    """Exact L^p(0,1) distance of the two piecewise-constant embeddings.

    Both embeddings are constant on every interval of the merged breakpoint
    partition, so the integral is a finite sum. Breakpoints are merged in
    integer arithmetic (positions in units of 1/(n1*n2)), which keeps the
    cell lookup exact for any grid pair; only the final interval lengths and
    powers are floating point.
    """
    if not (p >= 1.0 or p == math.inf):
        raise ValueError("p must be >= 1 or inf")
    n1, n2 = u.n, w.n
    pos = np.union1d(np.arange(1, n1 + 1, dtype=np.int64) * n2,
                     np.arange(1, n2 + 1, dtype=np.int64) * n1)
    # cell index of each merged interval (prev, cur]: evaluate at cur, whose
    # cell is ceil(cur / n2) for u (positions are cur = n1*n2*x)
    iu = -(-pos // n2)
    iw = -(-pos // n1)
    du = np.abs(u.values[iu - 1] - w.values[iw - 1])
    if p == math.inf:
        return float(np.max(du))
    lengths = np.diff(np.concatenate(([0], pos))) / float(n1 * n2)
    return float(np.sum(du ** p * lengths) ** (1.0 / p))


def odd_reflection(u: GridFunction) -> GridFunction:
    """Odd extension across the left endpoint, rescaled back to (0,1).

    Returns w on 2n cells with w(n+i) = u(i) and w(n+1-i) = -u(i); oddness
    w(n+1-i) = -w(n+i) is bit-exact. The original domain (-1,1) is identified
    with (0,1), so the result is an ordinary GridFunction of step 1/(2n).
    """
    return GridFunction(n=2 * u.n,
                        values=np.concatenate((-u.values[::-1], u.values)))


# ---------------------------------------------------------------------------
# Serialization: CSV with header i,value and a JSON value array. 17
# significant digits makes both round-trip float64 exactly.
# ---------------------------------------------------------------------------

def save_csv(u: GridFunction, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "value"])
        for i, x in enumerate(u.values, start=1):
            writer.writerow([i, "%.17g" % x])


def load_csv(path) -> GridFunction:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["i", "value"]:
            raise ValueError(f"unexpected CSV header {header!r}")
        values = [float(row[1]) for row in reader]
    return GridFunction(n=len(values), values=np.asarray(values))


def to_json(u: GridFunction) -> str:
    return json.dumps([float("%.17g" % x) for x in u.values])


def from_json(text: str) -> GridFunction:
    values = np.asarray(json.loads(text), dtype=float)
    return GridFunction(n=values.shape[0], values=values)
