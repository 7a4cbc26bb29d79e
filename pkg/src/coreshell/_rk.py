"""Adaptive Dormand-Prince 5(4) integrator with PI step control.

Two implementations of the same scheme: a numba kernel for the built-in
analytic vector fields (selected by an integer ``kind``), and a plain-Python
loop for arbitrary callables.  Both propagate the 5th-order solution, control
the embedded 4th-order error estimate in a mixed absolute/relative RMS norm,
and produce dense output from the standard quartic interpolant.

Kernel field kinds:
    0  averaged resonant-frame equations (gamma, v_gamma, eta, v_eta)
    1  decoupled crust, v_eta frozen (core rows stay constant)
    2  decoupled core, crust locked (crust rows stay constant, v_gamma = 0)
    3  unaveraged equations in absolute angles (phi, v_phi, nu, v_nu)

Status codes: 0 ok, 1 step-size underflow, 2 non-finite state, 3 step budget
exhausted.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
_EPS = 2.220446049250313e-16

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b5 - b4: error estimate weights.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
# Dense-output polynomial: y(t+theta*h) = y + h*sum_i k_i * sum_j P[i,j]*theta^(j+1).
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# PI controller constants: max-norm error control with safety 0.8, PI
# exponents from the classic DOPRI5 controller.  Passed into the kernel at
# call time (compile caches do not key on global scalars).
_SAFETY = 0.8
_BETA = 0.04
_EXPO1 = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_CTRL = None  # built lazily in run_kernel

KIND_AVERAGED = 0
KIND_CRUST = 1
KIND_CORE = 2
KIND_UNAVERAGED = 3

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3


@njit(cache=True)
def _kepler_E(Mr, e):
    # Safeguarded Newton on [Mr - e, Mr + e]; Mr already reduced to [0, 2*pi).
    lo = Mr - e
    hi = Mr + e
    E = Mr + e * math.sin(Mr)
    for _ in range(100):
        f = E - e * math.sin(E) - Mr
        if abs(f) < 1e-15:
            break
        if f > 0.0:
            hi = E
        else:
            lo = E
        En = E - f / (1.0 - e * math.cos(E))
        if En < lo or En > hi:
            En = 0.5 * (lo + hi)
        if En == E:
            break
        E = En
    return E


@njit(cache=True)
def _rhs(kind, p, t, y, out):
    if kind == 3:
        # p = (crust_torque, core_torque, itg, ite, itep, e, omega)
        e = p[5]
        om = p[6]
        M = om * t
        Mr = M - TWO_PI * math.floor(M / TWO_PI)
        E = _kepler_E(Mr, e)
        oc = 1.0 - e * math.cos(E)
        rr3 = 1.0 / (oc * oc * oc)
        thdd = -2.0 * om * om * e * math.sqrt(1.0 - e * e) * math.sin(E) / (oc * oc * oc * oc)
        out[0] = y[1]
        out[1] = -p[0] * rr3 * math.sin(2.0 * y[0]) - thdd - p[2] * (y[1] - y[3])
        out[2] = y[3]
        out[3] = -p[1] * rr3 * math.sin(2.0 * y[2]) - thdd \
            + p[3] * (y[1] - y[3]) - p[4] * y[3]
    else:
        # p = (A_crust, A_core, itg, ite, itep, drift)
        if kind == 2:
            out[0] = 0.0
            out[1] = 0.0
        else:
            out[0] = y[1]
            out[1] = -p[0] * math.sin(2.0 * y[0]) - p[2] * (y[1] - y[3])
        if kind == 1:
            out[2] = 0.0
            out[3] = 0.0
        else:
            out[2] = y[3]
            out[3] = -p[1] * math.sin(2.0 * y[2]) \
                + p[3] * (y[1] - y[3]) - p[4] * (y[3] + p[5])


@njit(cache=True)
def _initial_step(kind, p, t0, y, f0, rtol, atol, t_span):
    d0 = 0.0
    d1 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / 4.0)
    d1 = math.sqrt(d1 / 4.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_span)
    y1 = np.empty(4)
    f1 = np.empty(4)
    for i in range(4):
        y1[i] = y[i] + h0 * f0[i]
    _rhs(kind, p, t0 + h0, y1, f1)
    d2 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / 4.0) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    return min(100.0 * h0, h1, t_span)


@njit(cache=True)
def _kernel(kind, p, t0, y0, t_end, rtol, atol, t_samples, max_steps,
            A, B, C, E, P, ctrl):
    n_s = t_samples.shape[0]
    samples = np.empty((n_s, 4))
    k = np.empty((7, 4))
    y = y0.copy()
    ynew = np.empty(4)
    ystage = np.empty(4)
    f0 = np.empty(4)
    _rhs(kind, p, t0, y, f0)
    t = t0
    h = _initial_step(kind, p, t0, y, f0, rtol, atol, t_end - t0)
    safety = ctrl[0]
    beta = ctrl[1]
    expo1 = ctrl[2]
    fac_min = ctrl[3]
    fac_max = ctrl[4]
    si = 0
    naccept = 0
    nreject = 0
    facold = 1e-4
    last_rejected = False
    status = STATUS_OK
    steps = 0
    while t < t_end:
        steps += 1
        if steps > max_steps:
            status = STATUS_MAXSTEPS
            break
        if h <= 16.0 * _EPS * max(abs(t), 1.0):
            status = STATUS_UNDERFLOW
            break
        final = h >= t_end - t
        hs = t_end - t if final else h
        for i in range(4):
            k[0, i] = f0[i]
        for s in range(1, 6):
            for i in range(4):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * k[j, i]
                ystage[i] = y[i] + hs * acc
            _rhs(kind, p, t + C[s] * hs, ystage, k[s])
        for i in range(4):
            acc = 0.0
            for j in range(6):
                acc += B[j] * k[j, i]
            ynew[i] = y[i] + hs * acc
        _rhs(kind, p, t + hs, ynew, k[6])
        err = 0.0
        finite = True
        for i in range(4):
            ei = 0.0
            for j in range(7):
                ei += E[j] * k[j, i]
            ei *= hs
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            ei = abs(ei) / sc
            if ei > err:
                err = ei
            if not math.isfinite(ynew[i]):
                finite = False
        if not finite or not math.isfinite(err):
            status = STATUS_NONFINITE
            break
        if err <= 1.0:
            t_next = t_end if final else t + hs
            while si < n_s and t_samples[si] <= t_next:
                theta = (t_samples[si] - t) / hs
                if theta > 1.0:
                    theta = 1.0
                for i in range(4):
                    acc = 0.0
                    for j in range(7):
                        poly = ((P[j, 3] * theta + P[j, 2]) * theta + P[j, 1]) * theta + P[j, 0]
                        acc += k[j, i] * poly
                    samples[si, i] = y[i] + hs * theta * acc
                si += 1
            t = t_next
            for i in range(4):
                y[i] = ynew[i]
                f0[i] = k[6, i]
            naccept += 1
            if err == 0.0:
                fac = 1.0 / fac_max
            else:
                fac = max(1.0 / fac_max,
                          min(1.0 / fac_min, (err ** expo1) / (facold ** beta) / safety))
            hnew = hs / fac
            if last_rejected:
                hnew = min(hnew, hs)
            h = hnew
            facold = max(err, 1e-4)
            last_rejected = False
        else:
            nreject += 1
            h = hs / min(1.0 / fac_min, (err ** 0.2) / safety)
            last_rejected = True
    return status, t, y, naccept, nreject, samples, si


def _ctrl_array() -> np.ndarray:
    global _CTRL
    if _CTRL is None:
        _CTRL = np.array([_SAFETY, _BETA, _EXPO1, _FAC_MIN, _FAC_MAX])
    return _CTRL


def run_kernel(kind: int, params: np.ndarray, t0: float, y0: np.ndarray,
               t_end: float, rtol: float, atol: float,
               t_samples: np.ndarray, max_steps: int):
    """Dispatch one integration to the compiled kernel."""
    p = np.zeros(7)
    p[: params.shape[0]] = params
    return _kernel(kind, p, t0, np.asarray(y0, dtype=float), t_end, rtol, atol,
                   np.asarray(t_samples, dtype=float), max_steps,
                   _A, _B, _C, _E, _P, _ctrl_array())


def run_python(fun, t0: float, y0: np.ndarray, t_end: float, rtol: float,
               atol: float, t_samples: np.ndarray, max_steps: int):
    """Same scheme as the kernel for an arbitrary callable fun(t, y) -> array."""
    n = y0.shape[0]
    n_s = t_samples.shape[0]
    samples = np.empty((n_s, n))
    y = y0.astype(float).copy()
    f0 = np.asarray(fun(t0, y), dtype=float)
    t = t0

    scale = atol + rtol * np.abs(y)
    d0 = math.sqrt(float(np.mean((y / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    f1 = np.asarray(fun(t0 + h0, y + h0 * f0), dtype=float)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / scale) ** 2))) / h0
    dm = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
    h = min(100.0 * h0, h1, t_end - t0)

    k = np.empty((7, n))
    si = 0
    naccept = 0
    nreject = 0
    facold = 1e-4
    last_rejected = False
    status = STATUS_OK
    steps = 0
    while t < t_end:
        steps += 1
        if steps > max_steps:
            status = STATUS_MAXSTEPS
            break
        if h <= 16.0 * _EPS * max(abs(t), 1.0):
            status = STATUS_UNDERFLOW
            break
        final = h >= t_end - t
        hs = t_end - t if final else h
        k[0] = f0
        for s in range(1, 6):
            ystage = y + hs * (_A[s, :s] @ k[:s])
            k[s] = fun(t + _C[s] * hs, ystage)
        ynew = y + hs * (_B[:6] @ k[:6])
        k[6] = fun(t + hs, ynew)
        evec = hs * (_E @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.max(np.abs(evec) / sc))
        if not (np.all(np.isfinite(ynew)) and math.isfinite(err)):
            status = STATUS_NONFINITE
            break
        if err <= 1.0:
            t_next = t_end if final else t + hs
            while si < n_s and t_samples[si] <= t_next:
                theta = min(1.0, (t_samples[si] - t) / hs)
                poly = _P @ np.array([theta, theta ** 2, theta ** 3, theta ** 4])
                samples[si] = y + hs * (poly @ k)
                si += 1
            t = t_next
            y = ynew
            f0 = k[6].copy()
            naccept += 1
            if err == 0.0:
                fac = 1.0 / _FAC_MAX
            else:
                fac = max(1.0 / _FAC_MAX,
                          min(1.0 / _FAC_MIN, (err ** _EXPO1) / (facold ** _BETA) / _SAFETY))
            hnew = hs / fac
            if last_rejected:
                hnew = min(hnew, hs)
            h = hnew
            facold = max(err, 1e-4)
            last_rejected = False
        else:
            nreject += 1
            h = hs / min(1.0 / _FAC_MIN, (err ** 0.2) / _SAFETY)
            last_rejected = True
    return status, t, y, naccept, nreject, samples, si
