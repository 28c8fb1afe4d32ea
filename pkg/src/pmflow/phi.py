"""Convex-concave Lagrangians phi and their derived constants.

The flux nonlinearity is an even function phi with phi(0) = 0, phi'' bounded,
phi' nondecreasing on [0, sigma1] and nonincreasing beyond (so the diffusion
u_t = (phi'(u_x))_x is forward parabolic for slopes below sigma1 and backward
above), and sublinear growth phi'(sigma) -> 0 as sigma -> infinity.

Built-in models:

    log      phi(s) = 1/2 log(1 + s^2)        sigma1 = 1
    atan2    phi(s) = arctan(s^2)             sigma1 = 3^(-1/4)
    quartic  phi(s) = (1 + s^2)^(1/4) - 1     sigma1 = sqrt(2)

Derived quantities used downstream:

* conjugate slope g(sigma): the subcritical slope carrying the same flux,
  phi'(g(sigma)) = phi'(sigma) for sigma >= sigma1;
* bi-Lipschitz window (sigma0, lambda0, Lambda0): on [0, sigma0] with
  sigma0 < sigma1 the flux satisfies
  lambda0 (a - b) <= phi'(a) - phi'(b) <= Lambda0 (a - b).

phi' is evaluated on |sigma| and given the sign of sigma, so oddness (and
hence sigma * phi'(sigma) >= 0) holds bit-exactly in floating point, not just
analytically. phi and phi'' are evaluated on |sigma| for the same reason.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import WindowError

__all__ = [
    "ModelKind",
    "NonlinearityModel",
    "SubcriticalWindow",
    "log_quadratic",
    "arctan_square",
    "quartic_root",
    "custom_model",
    "model_from_name",
    "phi_eval",
    "phi_prime",
    "phi_second",
    "conjugate_slope",
    "bilipschitz_window",
]


class ModelKind(enum.Enum):
    LOG_QUADRATIC = "log"
    ARCTAN_SQUARE = "atan2"
    QUARTIC_ROOT = "quartic"
    CUSTOM = "custom"


# Integer codes consumed by the compiled integrator kernels. Custom models
# have no code and take the uncompiled path.
KERNEL_CODES = {
    ModelKind.LOG_QUADRATIC: 0,
    ModelKind.ARCTAN_SQUARE: 1,
    ModelKind.QUARTIC_ROOT: 2,
}


@dataclass(frozen=True)
class SubcriticalWindow:
    """Bi-Lipschitz constants of phi' on [0, sigma0], sigma0 < sigma1."""

    sigma0: float
    lambda0: float
    Lambda0: float


@dataclass(frozen=True)
class NonlinearityModel:
    """An even Lagrangian with evaluators restricted to sigma >= 0.

    The public entry points (phi_eval, phi_prime, phi_second) extend the
    nonnegative-branch evaluators by symmetry. kernel_code is -1 for custom
    models, which forces the pure-numpy integrator path.
    """

    kind: ModelKind
    sigma1: float
    phi2_sup: float
    phi_abs: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dphi_abs: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    d2phi_abs: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kernel_code: int = -1

    @property
    def name(self) -> str:
        return self.kind.value


def _as_checked_array(sigma):
    arr = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("sigma must be finite")
    return arr


def _scalar_like(sigma, arr):
    return float(arr) if np.isscalar(sigma) or np.ndim(sigma) == 0 else arr


def phi_eval(model: NonlinearityModel, sigma) -> float | np.ndarray:
    """phi(sigma). Even; phi(0) = 0."""
    arr = _as_checked_array(sigma)
    return _scalar_like(sigma, model.phi_abs(np.abs(arr)))


def phi_prime(model: NonlinearityModel, sigma) -> float | np.ndarray:
    """phi'(sigma), explicitly odd: computed on |sigma|, sign restored.

    The sign bit of sigma (including -0.0) selects negation, so
    phi_prime(-s) == -phi_prime(s) holds bit-exactly for every representable
    s and sigma * phi_prime(sigma) is a product of same-signed factors, hence
    nonnegative exactly. Negation rather than copysign so that the (invalid,
    but constructible with validate=False) case dphi_abs < 0 keeps its sign
    instead of being silently rectified.
    """
    arr = _as_checked_array(sigma)
    p = model.dphi_abs(np.abs(arr))
    return _scalar_like(sigma, np.where(np.signbit(arr), -p, p))


def phi_second(model: NonlinearityModel, sigma) -> float | np.ndarray:
    """phi''(sigma). Even; |phi''| <= model.phi2_sup; phi''(0) > 0."""
    arr = _as_checked_array(sigma)
    return _scalar_like(sigma, model.d2phi_abs(np.abs(arr)))


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

# Each evaluator switches to its asymptotic tail once powers of s would
# overflow; the crossover (1e60) is far below overflow and far above the point
# where core and tail agree to the last bit.
_TAIL = 1e60


def _tailed(s, core, tail):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return np.where(s > _TAIL, tail(np.maximum(s, 1.0)), core(np.minimum(s, _TAIL)))


def _log_phi(s):
    return _tailed(s, lambda x: 0.5 * np.log1p(x * x), np.log)


def _log_dphi(s):
    return _tailed(s, lambda x: x / (1.0 + x * x), lambda x: 1.0 / x)


def _log_d2phi(s):
    def core(x):
        x2 = x * x
        return (1.0 - x2) / ((1.0 + x2) * (1.0 + x2))
    return _tailed(s, core, lambda x: -1.0 / (x * x))


def _atan2_phi(s):
    return _tailed(s, lambda x: np.arctan(x * x),
                   lambda x: np.full_like(x, 0.5 * math.pi))


def _atan2_dphi(s):
    return _tailed(s, lambda x: 2.0 * x / (1.0 + (x * x) * (x * x)),
                   lambda x: 2.0 / (x * x * x))


def _atan2_d2phi(s):
    def core(x):
        x4 = (x * x) * (x * x)
        den = 1.0 + x4
        return (2.0 - 6.0 * x4) / (den * den)
    return _tailed(s, core, lambda x: -6.0 / ((x * x) * (x * x)))


def _quartic_phi(s):
    # (1+s^2)^(1/4) - 1 = expm1(log1p(s^2)/4), accurate near 0
    return _tailed(s, lambda x: np.expm1(0.25 * np.log1p(x * x)), np.sqrt)


def _quartic_dphi(s):
    return _tailed(s, lambda x: 0.5 * x * (1.0 + x * x) ** -0.75,
                   lambda x: 0.5 / np.sqrt(x))


def _quartic_d2phi(s):
    def core(x):
        x2 = x * x
        return 0.25 * (2.0 - x2) * (1.0 + x2) ** -1.75
    return _tailed(s, core, lambda x: -0.25 / (x * np.sqrt(x)))


def _golden_max(f: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-12) -> float:
    """Abscissa of the maximum of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _locate_sigma1(dphi: Callable[[float], float]) -> float:
    """Maximizer of phi' on (0, inf), bracketed by doubling."""
    hi = 1.0
    while dphi(hi) >= dphi(0.5 * hi):
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("phi' has no interior maximum below 1e12")
    return _golden_max(dphi, 0.0, hi)


_BUILTIN_CACHE: dict[ModelKind, NonlinearityModel] = {}


def log_quadratic() -> NonlinearityModel:
    """phi(s) = 1/2 log(1+s^2); sigma1 = 1 analytically; sup|phi''| = 1."""
    if ModelKind.LOG_QUADRATIC not in _BUILTIN_CACHE:
        _BUILTIN_CACHE[ModelKind.LOG_QUADRATIC] = NonlinearityModel(
            kind=ModelKind.LOG_QUADRATIC, sigma1=1.0, phi2_sup=1.0,
            phi_abs=_log_phi, dphi_abs=_log_dphi, d2phi_abs=_log_d2phi,
            kernel_code=KERNEL_CODES[ModelKind.LOG_QUADRATIC])
    return _BUILTIN_CACHE[ModelKind.LOG_QUADRATIC]


def arctan_square() -> NonlinearityModel:
    """phi(s) = arctan(s^2); sigma1 = 3^(-1/4); sup|phi''| = 2 (at 0)."""
    if ModelKind.ARCTAN_SQUARE not in _BUILTIN_CACHE:
        sigma1 = _locate_sigma1(lambda s: float(_atan2_dphi(np.float64(s))))
        _BUILTIN_CACHE[ModelKind.ARCTAN_SQUARE] = NonlinearityModel(
            kind=ModelKind.ARCTAN_SQUARE, sigma1=sigma1, phi2_sup=2.0,
            phi_abs=_atan2_phi, dphi_abs=_atan2_dphi, d2phi_abs=_atan2_d2phi,
            kernel_code=KERNEL_CODES[ModelKind.ARCTAN_SQUARE])
    return _BUILTIN_CACHE[ModelKind.ARCTAN_SQUARE]


def quartic_root() -> NonlinearityModel:
    """phi(s) = (1+s^2)^(1/4) - 1; sigma1 = sqrt(2); sup|phi''| = 1/2."""
    if ModelKind.QUARTIC_ROOT not in _BUILTIN_CACHE:
        sigma1 = _locate_sigma1(lambda s: float(_quartic_dphi(np.float64(s))))
        _BUILTIN_CACHE[ModelKind.QUARTIC_ROOT] = NonlinearityModel(
            kind=ModelKind.QUARTIC_ROOT, sigma1=sigma1, phi2_sup=0.5,
            phi_abs=_quartic_phi, dphi_abs=_quartic_dphi,
            d2phi_abs=_quartic_d2phi,
            kernel_code=KERNEL_CODES[ModelKind.QUARTIC_ROOT])
    return _BUILTIN_CACHE[ModelKind.QUARTIC_ROOT]


def model_from_name(name: str) -> NonlinearityModel:
    """Resolve the CLI/config model names "log", "atan2", "quartic"."""
    factories = {
        "log": log_quadratic,
        "atan2": arctan_square,
        "quartic": quartic_root,
    }
    if name not in factories:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(factories)}")
    return factories[name]()


# ---------------------------------------------------------------------------
# Custom models
# ---------------------------------------------------------------------------

def _validate_model(model: NonlinearityModel,
                    raw_phi: Callable, raw_dphi: Callable) -> None:
    """Sample-grid checks of the structural assumptions on phi.

    Custom evaluators are rejected if they break phi(0)=0, evenness of the
    raw phi, the sign/monotonicity structure of phi', sublinear decay,
    phi''(0) > 0, or the declared bound on |phi''|.
    """
    s1 = model.sigma1
    if not (np.isfinite(s1) and s1 > 0):
        raise ValueError("sigma1 must be a positive finite real")
    if not (np.isfinite(model.phi2_sup) and model.phi2_sup > 0):
        raise ValueError("phi2_sup must be a positive finite real")

    if abs(float(raw_phi(0.0))) > 1e-12:
        raise ValueError("phi(0) must be 0")
    probe = np.array([0.3 * s1, s1, 7.0 * s1])
    even_gap = np.abs(np.asarray(raw_phi(-probe), dtype=float)
                      - np.asarray(raw_phi(probe), dtype=float))
    if np.any(even_gap > 1e-9 * (1.0 + np.abs(np.asarray(raw_phi(probe))))):
        raise ValueError("phi must be even")

    up = np.linspace(0.0, s1, 257)
    dn = np.geomspace(s1, 1e6 * s1, 257)
    dphi_up = phi_prime(model, up)
    dphi_dn = phi_prime(model, dn)
    if np.any(np.diff(dphi_up) < -1e-12 * (1.0 + np.abs(dphi_up[:-1]))):
        raise ValueError("phi' must be nondecreasing on [0, sigma1]")
    if np.any(np.diff(dphi_dn) > 1e-12 * (1.0 + np.abs(dphi_dn[:-1]))):
        raise ValueError("phi' must be nonincreasing on [sigma1, inf)")
    if np.any(dphi_up < 0.0) or np.any(dphi_dn < 0.0):
        raise ValueError("sigma * phi'(sigma) must be nonnegative")
    # decay constant 1e-2, not tighter: a sqrt-law tail like the quartic
    # builtin sits at 1.36e-3 over six decades and must pass
    if not phi_prime(model, 1e6 * s1) < 1e-2 * phi_prime(model, s1):
        raise ValueError("phi' must decay: phi'(1e6 sigma1) < 1e-2 phi'(sigma1)")
    # The raw phi' should itself be odd; the wrapper evaluates on |sigma| and
    # restores the sign, so probe the negative axis where a non-odd plug-in
    # (say, one returning |phi'|) would silently disagree with the wrapper.
    raw_d = np.asarray(raw_dphi(-probe), dtype=float)
    wrapped_d = phi_prime(model, -probe)
    if np.any(np.abs(raw_d - wrapped_d) > 1e-9 * (1.0 + np.abs(wrapped_d))):
        raise ValueError("phi' evaluator disagrees with its odd extension")

    if not phi_second(model, 0.0) > 0.0:
        raise ValueError("phi''(0) must be positive")
    wide = np.linspace(0.0, 10.0 * s1, 513)
    if np.any(np.abs(phi_second(model, wide)) > model.phi2_sup * (1.0 + 1e-9)):
        raise ValueError("|phi''| exceeds the declared phi2_sup")


def custom_model(phi: Callable, phi_prime_fn: Callable, phi_second_fn: Callable,
                 sigma1: float, phi2_sup: float,
                 validate: bool = True) -> NonlinearityModel:
    """Wrap user evaluators as a model; validate=False skips the checks.

    The unchecked path exists for fault-injection tests; production callers
    should leave validation on.
    """
    def _wrap(f):
        return lambda s: np.asarray(f(s), dtype=float)

    model = NonlinearityModel(
        kind=ModelKind.CUSTOM, sigma1=float(sigma1), phi2_sup=float(phi2_sup),
        phi_abs=_wrap(phi), dphi_abs=_wrap(phi_prime_fn),
        d2phi_abs=_wrap(phi_second_fn), kernel_code=-1)
    if validate:
        _validate_model(model, raw_phi=phi, raw_dphi=phi_prime_fn)
    return model


# ---------------------------------------------------------------------------
# Derived constants
# ---------------------------------------------------------------------------

def conjugate_slope(model: NonlinearityModel, sigma: float) -> float:
    """g(sigma) in [0, sigma1] with phi'(g(sigma)) = phi'(sigma), sigma >= sigma1.

    Bisection on [0, sigma1], where phi' is nondecreasing; the iteration runs
    to floating-point interval collapse, so the flux mismatch is far below
    the contractual 1e-12. In a hypothetical flat region of phi' the returned
    point is the bisection limit; preimages are then non-unique.
    """
    sigma = float(sigma)
    if not np.isfinite(sigma):
        raise ValueError("sigma must be finite")
    s1 = model.sigma1
    if sigma < s1:
        raise ValueError(f"conjugate_slope needs sigma >= sigma1 = {s1}")
    if sigma == s1:
        return s1
    target = phi_prime(model, sigma)
    lo, hi = 0.0, s1
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi_prime(model, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bilipschitz_window(model: NonlinearityModel, sigma0: float,
                       samples: int = 20001) -> SubcriticalWindow:
    """lambda0 = min phi'' and Lambda0 = max phi'' on [0, sigma0].

    Dense sampling (>= 1e4 points) with a relative safety margin of 1e-9
    (lambda0 deflated, Lambda0 inflated) so the sampled window inequality
    lambda0 (a-b) <= phi'(a) - phi'(b) <= Lambda0 (a-b) cannot fail by
    roundoff. By the mean value theorem these are the sharpest constants.
    """
    sigma0 = float(sigma0)
    if not (0.0 < sigma0 < model.sigma1):
        raise ValueError(f"sigma0 must lie in (0, sigma1) = (0, {model.sigma1})")
    if samples < 10000:
        raise ValueError("window sampling needs at least 1e4 points")
    grid = np.linspace(0.0, sigma0, samples)
    d2 = phi_second(model, grid)
    lo = float(np.min(d2))
    hi = float(np.max(d2))
    lambda0 = lo - abs(lo) * 1e-9
    Lambda0 = hi + abs(hi) * 1e-9
    if lambda0 <= 0.0:
        raise WindowError(
            f"phi'' reaches {lo:.3e} on [0, {sigma0}]; shrink sigma0 "
            f"(sigma1 = {model.sigma1})")
    return SubcriticalWindow(sigma0=sigma0, lambda0=lambda0, Lambda0=Lambda0)
