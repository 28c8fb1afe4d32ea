"""Integrator cores: an embedded Dormand-Prince 5(4) pair, twice.

The compiled core handles the built-in nonlinearities (selected by an integer
kind code so the flux evaluation inlines); the numpy core runs the identical
algorithm for custom models or when no JIT is available. Tests assert the two
paths agree to integrator accuracy.

Semantics shared by both cores:

* autonomous right-hand side u'(i) = n [phi'(D+u(i)) - phi'(D+u(i-1))] with
  ghost slopes per boundary code (0 = Neumann/Neumann, 1 = Dirichlet/Neumann);
* scaled RMS error norm, accept when <= 1, step factor 0.9 err^(-1/5)
  clamped to [0.2, 5], step never above h_max (the caller caps h_max at
  c_step / (n^2 sup|phi''|) to keep the controller out of the unstable
  region of the explicit pair);
* sample times hit exactly by step truncation;
* dissipation integral of (1/n) sum u'(i)^2 accumulated per accepted step by
  Simpson's rule on (k1, f(midpoint), k7) with the 4th-order Hermite midpoint
  state, costing one extra evaluation per accepted step;
* status 0 = ok, 1 = step underflow with finite trials (stiffness),
  2 = non-finite state or right-hand side (divergence).
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

BC_NEUMANN_NEUMANN = 0
BC_DIRICHLET_NEUMANN = 1

STATUS_OK = 0
STATUS_STIFF = 1
STATUS_DIVERGED = 2

MIN_STEP = 1e-15
# Steps this small relative to the horizon mean the controller is crawling
# on roundoff noise (unattainable tolerances): give up rather than spin.
REL_MIN_STEP = 1e-14

# Dormand-Prince 5(4) tableau (the two quadrature rows appear only through
# their difference e = b5th - b4th)
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


def _kernel_source():
    """Define the compiled kernels; split out so import stays cheap to read."""

    @numba.njit(inline="always")
    def dphi(kind, s):
        a = abs(s)
        if kind == 0:
            v = a / (1.0 + a * a)
        elif kind == 1:
            v = 2.0 * a / (1.0 + (a * a) * (a * a))
        else:
            v = 0.5 * a * (1.0 + a * a) ** -0.75
        return -v if s < 0.0 else v

    @numba.njit(inline="always")
    def rhs_into(y, kind, bc, out, dbuf):
        n = y.shape[0]
        fn = float(n)
        if bc == 1:
            dbuf[0] = fn * y[0]
        else:
            dbuf[0] = 0.0
        for i in range(1, n):
            dbuf[i] = fn * (y[i] - y[i - 1])
        dbuf[n] = 0.0
        prev = dphi(kind, dbuf[0])
        for i in range(n):
            cur = dphi(kind, dbuf[i + 1])
            out[i] = fn * (cur - prev)
            prev = cur

    @numba.njit(cache=True)
    def dopri5(y0, kind, bc, t_samples, rtol, atol, h_max):
        n = y0.shape[0]
        m = t_samples.shape[0]
        states = np.empty((m, n))
        y = y0.copy()
        for j in range(n):
            states[0, j] = y[j]
        k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n)
        k4 = np.empty(n); k5 = np.empty(n); k6 = np.empty(n)
        k7 = np.empty(n); ytmp = np.empty(n); y5 = np.empty(n)
        dbuf = np.empty(n + 1)
        rhs_into(y, kind, bc, k1, dbuf)
        diss = 0.0
        t = t_samples[0]
        h = h_max
        h_floor = max(MIN_STEP, REL_MIN_STEP * (t_samples[m - 1] - t_samples[0]))
        status = STATUS_OK
        n_accept = 0
        n_reject = 0
        for sidx in range(1, m):
            t_target = t_samples[sidx]
            while t < t_target and status == STATUS_OK:
                remaining = t_target - t
                clipped = h >= remaining
                h_step = remaining if clipped else h
                if not clipped and h_step < h_floor:
                    status = STATUS_STIFF
                    h = h_step
                    break

                for j in range(n):
                    ytmp[j] = y[j] + h_step * (_A21 * k1[j])
                rhs_into(ytmp, kind, bc, k2, dbuf)
                for j in range(n):
                    ytmp[j] = y[j] + h_step * (_A31 * k1[j] + _A32 * k2[j])
                rhs_into(ytmp, kind, bc, k3, dbuf)
                for j in range(n):
                    ytmp[j] = y[j] + h_step * (_A41 * k1[j] + _A42 * k2[j]
                                               + _A43 * k3[j])
                rhs_into(ytmp, kind, bc, k4, dbuf)
                for j in range(n):
                    ytmp[j] = y[j] + h_step * (_A51 * k1[j] + _A52 * k2[j]
                                               + _A53 * k3[j] + _A54 * k4[j])
                rhs_into(ytmp, kind, bc, k5, dbuf)
                for j in range(n):
                    ytmp[j] = y[j] + h_step * (_A61 * k1[j] + _A62 * k2[j]
                                               + _A63 * k3[j] + _A64 * k4[j]
                                               + _A65 * k5[j])
                rhs_into(ytmp, kind, bc, k6, dbuf)
                for j in range(n):
                    y5[j] = y[j] + h_step * (_B1 * k1[j] + _B3 * k3[j]
                                             + _B4 * k4[j] + _B5 * k5[j]
                                             + _B6 * k6[j])
                rhs_into(y5, kind, bc, k7, dbuf)

                errsum = 0.0
                trial_finite = True
                for j in range(n):
                    e = h_step * (_E1 * k1[j] + _E3 * k3[j] + _E4 * k4[j]
                                  + _E5 * k5[j] + _E6 * k6[j] + _E7 * k7[j])
                    ay = abs(y[j]); a5 = abs(y5[j])
                    sc = atol + rtol * (ay if ay > a5 else a5)
                    q = e / sc
                    errsum += q * q
                    if not (np.isfinite(y5[j]) and np.isfinite(k7[j])):
                        trial_finite = False
                errnorm = np.sqrt(errsum / n)

                if trial_finite and errnorm <= 1.0:
                    # Simpson increment of the dissipation on this step:
                    # midpoint state from the 4th-order Hermite interpolant
                    for j in range(n):
                        ytmp[j] = 0.5 * (y[j] + y5[j]) \
                            + h_step * 0.125 * (k1[j] - k7[j])
                    rhs_into(ytmp, kind, bc, k2, dbuf)  # k2 reused as scratch
                    g1 = 0.0; gm = 0.0; g7 = 0.0
                    for j in range(n):
                        g1 += k1[j] * k1[j]
                        gm += k2[j] * k2[j]
                        g7 += k7[j] * k7[j]
                    diss += h_step / 6.0 * (g1 + 4.0 * gm + g7) / n

                    t = t_target if clipped else t + h_step
                    for j in range(n):
                        y[j] = y5[j]
                        k1[j] = k7[j]
                    n_accept += 1
                    if errnorm == 0.0:
                        factor = 5.0
                    else:
                        factor = 0.9 * errnorm ** -0.2
                        if factor > 5.0:
                            factor = 5.0
                        elif factor < 0.2:
                            factor = 0.2
                    if not clipped:
                        h = h_step * factor
                        if h > h_max:
                            h = h_max
                else:
                    n_reject += 1
                    if trial_finite and np.isfinite(errnorm):
                        factor = 0.9 * errnorm ** -0.2
                        if factor < 0.2:
                            factor = 0.2
                    else:
                        factor = 0.2
                    h = h_step * factor
                    if h < h_floor:
                        status = STATUS_STIFF if trial_finite else STATUS_DIVERGED
            if status != STATUS_OK:
                # leave remaining samples at the last good state
                for rest in range(sidx, m):
                    for j in range(n):
                        states[rest, j] = y[j]
                return states, diss, status, t, h, n_accept, n_reject
            for j in range(n):
                states[sidx, j] = y[j]
        return states, diss, status, t, h, n_accept, n_reject

    return dopri5


dopri5_compiled = _kernel_source() if HAVE_NUMBA else None


def dopri5_numpy(y0, rhs, t_samples, rtol, atol, h_max):
    """Pure-numpy twin of the compiled core; rhs is a vector callable."""
    n = y0.shape[0]
    m = t_samples.shape[0]
    states = np.empty((m, n))
    y = y0.copy()
    states[0] = y
    k1 = rhs(y)
    diss = 0.0
    t = float(t_samples[0])
    h = h_max
    h_floor = max(MIN_STEP, REL_MIN_STEP * float(t_samples[-1] - t_samples[0]))
    status = STATUS_OK
    n_accept = 0
    n_reject = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for sidx in range(1, m):
            t_target = float(t_samples[sidx])
            while t < t_target and status == STATUS_OK:
                remaining = t_target - t
                clipped = h >= remaining
                h_step = remaining if clipped else h
                if not clipped and h_step < h_floor:
                    status = STATUS_STIFF
                    h = h_step
                    break

                k2 = rhs(y + h_step * (_A21 * k1))
                k3 = rhs(y + h_step * (_A31 * k1 + _A32 * k2))
                k4 = rhs(y + h_step * (_A41 * k1 + _A42 * k2 + _A43 * k3))
                k5 = rhs(y + h_step * (_A51 * k1 + _A52 * k2 + _A53 * k3
                                       + _A54 * k4))
                k6 = rhs(y + h_step * (_A61 * k1 + _A62 * k2 + _A63 * k3
                                       + _A64 * k4 + _A65 * k5))
                y5 = y + h_step * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5
                                   + _B6 * k6)
                k7 = rhs(y5)

                err = h_step * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5
                                + _E6 * k6 + _E7 * k7)
                sc = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
                errnorm = float(np.sqrt(np.mean((err / sc) ** 2)))
                trial_finite = bool(np.all(np.isfinite(y5))
                                    and np.all(np.isfinite(k7)))

                if trial_finite and errnorm <= 1.0:
                    ymid = 0.5 * (y + y5) + h_step * 0.125 * (k1 - k7)
                    kmid = rhs(ymid)
                    diss += h_step / 6.0 * (np.dot(k1, k1)
                                            + 4.0 * np.dot(kmid, kmid)
                                            + np.dot(k7, k7)) / n
                    t = t_target if clipped else t + h_step
                    y, k1 = y5, k7
                    n_accept += 1
                    if errnorm == 0.0:
                        factor = 5.0
                    else:
                        factor = min(5.0, max(0.2, 0.9 * errnorm ** -0.2))
                    if not clipped:
                        h = min(h_max, h_step * factor)
                else:
                    n_reject += 1
                    if trial_finite and np.isfinite(errnorm):
                        factor = max(0.2, 0.9 * errnorm ** -0.2)
                    else:
                        factor = 0.2
                    h = h_step * factor
                    if h < h_floor:
                        status = STATUS_STIFF if trial_finite else STATUS_DIVERGED
            if status != STATUS_OK:
                states[sidx:] = y
                return states, diss, status, t, h, n_accept, n_reject
            states[sidx] = y
    return states, diss, status, t, h, n_accept, n_reject
