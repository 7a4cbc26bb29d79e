"""Coupled crust/core vector fields and the adaptive trajectory integrator.

The resonant-frame state is (gamma, v_gamma, eta, v_eta): crust and core
resonant angles and their rates in a 2(k/2+1):2 spin-orbit frame.  The
averaged equations of motion are

    dv_gamma/dt = -A_crust*sin(2*gamma) - (1/tau_gamma)*(v_gamma - v_eta)
    dgamma/dt   = v_gamma
    dv_eta/dt   = -A_core*sin(2*eta) + (1/tau_eta)*(v_gamma - v_eta)
                  - (1/tau_eta')*(v_eta + k*omega/2)
    deta/dt     = v_eta

with all dissipation off they reduce to two independent pendulums.  The
unaveraged variant keeps the full time dependence: the torque scales with
(a/rho(t))^3, the resonant harmonic stays inside the sine, and the inertial
term from the true-anomaly acceleration appears on both shells.

Angles accumulate without modular reduction so circulation and libration
remain distinguishable; trigonometric evaluation reduces internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bodies import (
    BodyParameters,
    SECONDS_PER_YEAR,
    couplings,
    moments_of_inertia,
    triaxiality,
)
from .kepler import center_harmonic, radius_cubed_harmonic

TIME_UNITS = {"s": 1.0, "yr": SECONDS_PER_YEAR}

TOL_MIN = 1e-12
TOL_MAX = 1e-3


class IntegrationError(RuntimeError):
    """Integration aborted; carries the offending time and state."""

    def __init__(self, message: str, t: float | None = None,
                 state: tuple | None = None):
        if t is not None:
            message = f"{message} (at t={t!r}, state={state!r})"
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass(frozen=True)
class SpinState:
    """Instantaneous resonant-frame state; angles in rad, rates in rad per time unit."""

    t: float
    gamma: float
    v_gamma: float
    eta: float
    v_eta: float

    def __post_init__(self) -> None:
        for name in ("t", "gamma", "v_gamma", "eta", "v_eta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def array(self) -> np.ndarray:
        return np.array([self.gamma, self.v_gamma, self.eta, self.v_eta])


@dataclass(frozen=True)
class ModelCoefficients:
    """The six rescaled coefficients of the first-order system, frozen per k.

    A_crust = (3/(4C'))(B'-A') omega^2 a_k(e) e^k and A_core likewise with
    core quantities; the inverse times are lambda/C', lambda/C, lambda'/C;
    drift = k*omega/2.  All rates are per ``time_unit``.
    """

    A_crust: float
    A_core: float
    inv_tau_gamma: float
    inv_tau_eta: float
    inv_tau_eta_prime: float
    drift: float
    k: int
    time_unit: str = "s"

    def __post_init__(self) -> None:
        for name in ("A_crust", "A_core", "inv_tau_gamma", "inv_tau_eta",
                     "inv_tau_eta_prime"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.k < 0:
            raise ValueError(f"resonance index must be >= 0, got {self.k}")
        if self.time_unit not in TIME_UNITS:
            raise ValueError(f"time_unit must be one of {sorted(TIME_UNITS)}")

    @property
    def seconds_per_unit(self) -> float:
        return TIME_UNITS[self.time_unit]

    @classmethod
    def from_body(cls, params: BodyParameters, k: int,
                  time_unit: str = "s") -> "ModelCoefficients":
        """Derive the rescaled coefficients for resonance index k from a body."""
        spu = TIME_UNITS[time_unit]
        C, C_prime = moments_of_inertia(params)
        BmA, BpmAp = triaxiality(params)
        cset = couplings(params, max(k, 1))
        Ak = radius_cubed_harmonic(k, params.e)  # a_k(e) e^k
        w2 = params.omega ** 2
        return cls(
            A_crust=0.75 * BpmAp / C_prime * w2 * Ak * spu ** 2,
            A_core=0.75 * BmA / C * w2 * Ak * spu ** 2,
            inv_tau_gamma=cset.lam / C_prime * spu,
            inv_tau_eta=cset.lam / C * spu,
            inv_tau_eta_prime=(cset.lam_prime / C * spu) if k >= 1 else 0.0,
            drift=0.5 * k * params.omega * spu,
            k=k,
            time_unit=time_unit,
        )

    def kernel_params(self) -> np.ndarray:
        return np.array([self.A_crust, self.A_core, self.inv_tau_gamma,
                         self.inv_tau_eta, self.inv_tau_eta_prime, self.drift])


# Reference coefficient set for the Ganymede 3:2 scenario, time in years.
# Shipped verbatim as a named preset, independent of the body-derived path.
EQ35_COEFFICIENTS = ModelCoefficients(
    A_crust=202.5,
    A_core=0.0135,
    inv_tau_gamma=0.167,
    inv_tau_eta=6.67e-7,
    inv_tau_eta_prime=6.67e-10,
    drift=150.0,
    k=1,
    time_unit="yr",
)

COEFFICIENT_PRESETS = {"eq35": EQ35_COEFFICIENTS}


@dataclass(frozen=True)
class AveragedField:
    """Full averaged system; kernel kind 0."""

    coeffs: ModelCoefficients

    kernel_kind = 0  # _rk.KIND_AVERAGED

    def kernel_params(self) -> np.ndarray:
        return self.coeffs.kernel_params()

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        c = self.coeffs
        return np.array([
            y[1],
            -c.A_crust * math.sin(2.0 * y[0]) - c.inv_tau_gamma * (y[1] - y[3]),
            y[3],
            -c.A_core * math.sin(2.0 * y[2]) + c.inv_tau_eta * (y[1] - y[3])
            - c.inv_tau_eta_prime * (y[3] + c.drift),
        ])


@dataclass(frozen=True)
class DecoupledCrustField:
    """Crust equations with the core rate held fixed; kernel kind 1."""

    coeffs: ModelCoefficients
    v_eta_frozen: float

    kernel_kind = 1  # _rk.KIND_CRUST

    def kernel_params(self) -> np.ndarray:
        return self.coeffs.kernel_params()

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        c = self.coeffs
        return np.array([
            y[1],
            -c.A_crust * math.sin(2.0 * y[0]) - c.inv_tau_gamma * (y[1] - y[3]),
            0.0,
            0.0,
        ])


@dataclass(frozen=True)
class DecoupledCoreField:
    """Core equations with the crust locked (v_gamma = 0); kernel kind 2."""

    coeffs: ModelCoefficients

    kernel_kind = 2  # _rk.KIND_CORE

    def kernel_params(self) -> np.ndarray:
        return self.coeffs.kernel_params()

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        c = self.coeffs
        return np.array([
            0.0,
            0.0,
            y[3],
            -c.A_core * math.sin(2.0 * y[2]) + c.inv_tau_eta * (y[1] - y[3])
            - c.inv_tau_eta_prime * (y[3] + c.drift),
        ])


@dataclass(frozen=True)
class UnaveragedField:
    """Full time-dependent equations in absolute angles (phi, v_phi, nu, v_nu).

    crust_torque and core_torque are the bare prefactors
    (3/(2C'))(B'-A') omega^2 = epsilon' omega^2 (and the core analogue) that
    multiply (a/rho(t))^3 sin(2*angle); kernel kind 3.
    """

    crust_torque: float
    core_torque: float
    inv_tau_gamma: float
    inv_tau_eta: float
    inv_tau_eta_prime: float
    e: float
    omega: float
    k: int
    time_unit: str = "s"

    kernel_kind = 3  # _rk.KIND_UNAVERAGED

    @classmethod
    def from_body(cls, params: BodyParameters, k: int,
                  time_unit: str = "s") -> "UnaveragedField":
        spu = TIME_UNITS[time_unit]
        C, C_prime = moments_of_inertia(params)
        cset = couplings(params, max(k, 1))
        w2 = params.omega ** 2
        return cls(
            crust_torque=params.epsilon_prime * w2 * spu ** 2,
            core_torque=params.epsilon * w2 * spu ** 2,
            inv_tau_gamma=cset.lam / C_prime * spu,
            inv_tau_eta=cset.lam / C * spu,
            inv_tau_eta_prime=(cset.lam_prime / C * spu) if k >= 1 else 0.0,
            e=params.e,
            omega=params.omega * spu,
            k=k,
            time_unit=time_unit,
        )

    def averaged(self) -> ModelCoefficients:
        """The matching averaged coefficients: A = torque * a_k(e) e^k / 2."""
        Ak = radius_cubed_harmonic(self.k, self.e)
        return ModelCoefficients(
            A_crust=0.5 * self.crust_torque * Ak,
            A_core=0.5 * self.core_torque * Ak,
            inv_tau_gamma=self.inv_tau_gamma,
            inv_tau_eta=self.inv_tau_eta,
            inv_tau_eta_prime=self.inv_tau_eta_prime,
            drift=0.5 * self.k * self.omega,
            k=self.k,
            time_unit=self.time_unit,
        )

    def kernel_params(self) -> np.ndarray:
        return np.array([self.crust_torque, self.core_torque,
                         self.inv_tau_gamma, self.inv_tau_eta,
                         self.inv_tau_eta_prime, self.e, self.omega])

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        from .kepler import solve_kepler
        e = self.e
        om = self.omega
        E = solve_kepler(om * t, e)
        oc = 1.0 - e * math.cos(E)
        rr3 = 1.0 / (oc * oc * oc)
        thdd = -2.0 * om * om * e * math.sqrt(1.0 - e * e) * math.sin(E) / oc ** 4
        return np.array([
            y[1],
            -self.crust_torque * rr3 * math.sin(2.0 * y[0]) - thdd
            - self.inv_tau_gamma * (y[1] - y[3]),
            y[3],
            -self.core_torque * rr3 * math.sin(2.0 * y[2]) - thdd
            + self.inv_tau_eta * (y[1] - y[3]) - self.inv_tau_eta_prime * y[3],
        ])


def averaged_field(state: SpinState, coeffs: ModelCoefficients) -> tuple:
    """Time derivative (dgamma, dv_gamma, deta, dv_eta) of the averaged system."""
    d = AveragedField(coeffs)(state.t, state.array())
    return tuple(d)


def decoupled_crust_field(state: SpinState, coeffs: ModelCoefficients,
                          v_eta_frozen: float) -> tuple:
    """Crust derivative (dgamma, dv_gamma) with the core rate held constant."""
    y = np.array([state.gamma, state.v_gamma, 0.0, v_eta_frozen])
    d = DecoupledCrustField(coeffs, v_eta_frozen)(state.t, y)
    return (d[0], d[1])


def decoupled_core_field(state: SpinState, coeffs: ModelCoefficients) -> tuple:
    """Core derivative (deta, dv_eta) with the crust in resonance (v_gamma = 0)."""
    y = np.array([0.0, 0.0, state.eta, state.v_eta])
    d = DecoupledCoreField(coeffs)(state.t, y)
    return (d[2], d[3])


def unaveraged_field(state: SpinState, params: BodyParameters, k: int,
                     time_unit: str = "s") -> tuple:
    """Full time-dependent derivative; the state holds absolute angles (phi, nu)."""
    f = UnaveragedField.from_body(params, k, time_unit)
    return tuple(f(state.t, state.array()))


def resonant_to_absolute(state: SpinState, k: int, omega: float) -> SpinState:
    """Map (gamma, v_gamma, eta, v_eta) to absolute angles phi = k*omega*t/2 + gamma."""
    off = 0.5 * k * omega
    return SpinState(t=state.t,
                     gamma=state.gamma + off * state.t,
                     v_gamma=state.v_gamma + off,
                     eta=state.eta + off * state.t,
                     v_eta=state.v_eta + off)


def absolute_to_resonant(state: SpinState, k: int, omega: float) -> SpinState:
    """Inverse of resonant_to_absolute."""
    off = 0.5 * k * omega
    return SpinState(t=state.t,
                     gamma=state.gamma - off * state.t,
                     v_gamma=state.v_gamma - off,
                     eta=state.eta - off * state.t,
                     v_eta=state.v_eta - off)


def matched_initial_state(state: SpinState, field: UnaveragedField) -> SpinState:
    """Exact-frame state whose mean rotation matches a slow (averaged) state.

    The unaveraged resonant angles carry a forced oscillation
    -(theta - M) driven by the inertial term; a state of the averaged system
    corresponds to an exact-frame state shifted by that oscillation and its
    rate at the given epoch.  Use this to hand the same physical initial
    condition to averaged_field and unaveraged_field runs.
    """
    from .kepler import true_anomaly, true_anomaly_rate
    M = field.omega * state.t
    wobble = true_anomaly(M, field.e) - M
    rate = (true_anomaly_rate(M, field.e) - 1.0) * field.omega
    return SpinState(t=state.t,
                     gamma=state.gamma - wobble,
                     v_gamma=state.v_gamma - rate,
                     eta=state.eta - wobble,
                     v_eta=state.v_eta - rate)


# --- energies ---

def pendulum_energy(angle: float, rate: float, amplitude: float) -> float:
    """Per-unit-inertia pendulum energy rate^2/2 - (amplitude/2) cos(2*angle)."""
    return 0.5 * rate * rate - 0.5 * amplitude * math.cos(2.0 * angle)


def dissipative_energy(state: SpinState, coeffs: ModelCoefficients) -> float:
    """Total two-shell energy per unit viscous coupling.

    With drift = 0 this is non-increasing along trajectories of the averaged
    system (Rayleigh dissipation).
    """
    c = coeffs
    if c.inv_tau_gamma <= 0.0 or c.inv_tau_eta <= 0.0:
        raise ValueError("dissipative energy needs positive friction rates")
    return (0.5 * state.v_gamma ** 2 / c.inv_tau_gamma
            + 0.5 * state.v_eta ** 2 / c.inv_tau_eta
            - 0.5 * c.A_crust / c.inv_tau_gamma * math.cos(2.0 * state.gamma)
            - 0.5 * c.A_core / c.inv_tau_eta * math.cos(2.0 * state.eta))


def mean_shell_energy(state: SpinState, field: UnaveragedField,
                      which: str = "crust", n_terms: int = 8) -> float:
    """Orbit-averaged shell energy per unit inertia, constant offsets included.

    The offsets (the ((k/2+1) omega)^2 term, the equation-of-center power sum,
    and the angle-independent potential constant) do not enter the equations
    of motion but are reported here for completeness.
    """
    if which == "crust":
        angle, rate, torque = state.gamma, state.v_gamma, field.crust_torque
    elif which == "core":
        angle, rate, torque = state.eta, state.v_eta, field.core_torque
    else:
        raise ValueError(f"which must be 'crust' or 'core', got {which!r}")
    Ak = radius_cubed_harmonic(field.k, field.e)
    spin = (0.5 * field.k + 1.0) * field.omega
    center_sum = sum((n * field.omega * center_harmonic(n, field.e)) ** 2
                     for n in range(1, n_terms + 1)) if field.e > 0 else 0.0
    return (0.5 * rate * rate + 0.5 * spin * spin + spin * rate
            + 0.25 * center_sum
            - (torque / 6.0) * (1.0 + 1.5 * math.cos(2.0 * angle) * Ak))


# --- trajectories ---

@dataclass(frozen=True)
class Trajectory:
    """Time-ordered resonant-frame samples plus integrator statistics.

    ``data`` columns are (t, gamma, v_gamma, eta, v_eta); the first row is the
    supplied initial condition and t is strictly increasing.
    """

    data: np.ndarray
    naccepted: int
    nrejected: int
    rtol: float
    atol: float
    time_unit: str

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[1] != 5:
            raise ValueError("trajectory data must have 5 columns")
        if np.any(np.diff(self.data[:, 0]) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def gamma(self) -> np.ndarray:
        return self.data[:, 1]

    @property
    def v_gamma(self) -> np.ndarray:
        return self.data[:, 2]

    @property
    def eta(self) -> np.ndarray:
        return self.data[:, 3]

    @property
    def v_eta(self) -> np.ndarray:
        return self.data[:, 4]

    def state(self, i: int) -> SpinState:
        t, g, vg, et, ve = self.data[i]
        return SpinState(t=t, gamma=g, v_gamma=vg, eta=et, v_eta=ve)

    @property
    def initial(self) -> SpinState:
        return self.state(0)

    @property
    def final(self) -> SpinState:
        return self.state(-1)

    def stats(self) -> dict:
        return {
            "samples": int(len(self)),
            "steps_accepted": int(self.naccepted),
            "steps_rejected": int(self.nrejected),
            "rtol": self.rtol,
            "atol": self.atol,
            "time_unit": self.time_unit,
        }

    def to_csv(self, path, stride: int = 1) -> None:
        """Write ``t,gamma,v_gamma,eta,v_eta`` rows, newline-terminated."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        rows = self.data[::stride]
        if (len(self) - 1) % stride != 0:  # keep the final sample
            rows = np.vstack([rows, self.data[-1]])
        with open(path, "w", newline="") as fh:
            fh.write("t,gamma,v_gamma,eta,v_eta\n")
            for r in rows:
                fh.write(",".join(repr(float(v)) for v in r) + "\n")


def _sample_times(t0: float, t_end: float, sample_dt: float | None,
                  sample_times) -> np.ndarray:
    if sample_times is not None:
        ts = np.unique(np.asarray(sample_times, dtype=float))
        ts = ts[(ts > t0) & (ts <= t_end)]
    elif sample_dt is not None:
        if sample_dt <= 0.0:
            raise ValueError("sample_dt must be positive")
        n = int(math.floor((t_end - t0) / sample_dt))
        ts = t0 + sample_dt * np.arange(1, n + 1)
    else:
        ts = t0 + np.arange(1, int(math.floor(t_end - t0)) + 1, dtype=float)
    if ts.size == 0 or ts[-1] < t_end:
        ts = np.append(ts, t_end)
    return ts


_STATUS_MESSAGES = {
    1: "step-size underflow: stiffness beyond the explicit scheme",
    2: "non-finite state encountered",
    3: "step budget exhausted before reaching t_end",
}


def integrate(field, initial: SpinState, t_end: float, tol: float, *,
              atol: float | None = None, sample_dt: float | None = None,
              sample_times=None, max_steps: int = 200_000_000) -> Trajectory:
    """Integrate a vector field from ``initial`` to ``t_end``.

    ``tol`` is the relative tolerance of the mixed relative/absolute local
    error norm (absolute floor ``atol``, default tol*1e-3).  Dense output is
    produced at the requested sample times (default: unit spacing); the final
    time is always sampled.  Identical inputs produce identical trajectories.

    ``field`` is one of the built-in field objects (integrated by the
    compiled kernel) or any callable f(t, y) -> dy/dt over 4-vectors.
    """
    if not TOL_MIN <= tol <= TOL_MAX:
        raise ValueError(f"tol must lie in [{TOL_MIN}, {TOL_MAX}], got {tol}")
    if not t_end > initial.t:
        raise ValueError(f"t_end must exceed the initial time {initial.t}")
    if atol is None:
        atol = tol * 1e-3
    t0 = initial.t
    ts = _sample_times(t0, t_end, sample_dt, sample_times)

    from . import _rk  # deferred: pulls in the numba kernel

    unaveraged = isinstance(field, UnaveragedField)
    if unaveraged:
        y0 = resonant_to_absolute(initial, field.k, field.omega).array()
    else:
        y0 = initial.array()
    if isinstance(field, DecoupledCrustField):
        y0[3] = field.v_eta_frozen  # the frozen rate lives in the state vector
    elif isinstance(field, DecoupledCoreField):
        y0[1] = 0.0  # crust locked by definition

    kind = getattr(field, "kernel_kind", None)
    if kind is not None:
        status, t_reached, y_final, nacc, nrej, samples, filled = _rk.run_kernel(
            kind, field.kernel_params(), t0, y0, t_end, tol, atol, ts, max_steps)
    else:
        status, t_reached, y_final, nacc, nrej, samples, filled = _rk.run_python(
            field, t0, y0, t_end, tol, atol, ts, max_steps)

    if status != 0:
        raise IntegrationError(_STATUS_MESSAGES[status], t=t_reached,
                               state=tuple(y_final))

    data = np.empty((filled + 1, 5))
    data[0, 0] = t0
    data[0, 1:] = y0
    data[1:, 0] = ts[:filled]
    data[1:, 1:] = samples[:filled]
    coeffs = getattr(field, "coeffs", None)
    unit = coeffs.time_unit if coeffs is not None else getattr(field, "time_unit", "s")
    if unaveraged:
        off = 0.5 * field.k * field.omega
        data[:, 1] -= off * data[:, 0]
        data[:, 2] -= off
        data[:, 3] -= off * data[:, 0]
        data[:, 4] -= off
    return Trajectory(data=data, naccepted=int(nacc), nrejected=int(nrej),
                      rtol=tol, atol=atol, time_unit=unit)
