"""Capture conditions, effective energy, lock detection, and the cascade.

All body-level conditions work in SI units.  The crust equilibrium exists
while the core rate stays inside a friction-set window; the core equilibrium
exists while the eccentricity is large enough; capture of the core is
certain when the per-well dissipation exceeds the washboard tilt, which
reduces to a lambda/lambda' threshold.  The cascade driver chains these
conditions into an event-driven history of resonance visits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bodies import (
    BodyParameters,
    coupling_ratio,
    couplings,
    moments_of_inertia,
    triaxiality,
    viscoelastic_lambda,
    viscous_lambda,
)
from .dynamics import ModelCoefficients, SpinState, Trajectory
from .kepler import radius_cubed_harmonic

EXIT_ECCENTRICITY = "eccentricity-below-threshold"
EXIT_TERMINAL = "terminal-1:1"
EXIT_SKIPPED = "skipped"
EXIT_STATIONARY = "stationary"


@dataclass(frozen=True)
class CrustCondition:
    """Existence of the crust equilibrium at core rate v_eta (rad/s)."""

    satisfied: bool
    threshold: float        # window half-width on |v_eta|, rad/s
    v_eta: float
    gamma_bar: float | None  # equilibrium angle when it exists


@dataclass(frozen=True)
class CoreCondition:
    """Existence of the core equilibrium: eccentricity large enough.

    ``e_min`` solves e^k a_k(e) = 2k*lambda'/(3*eps*C*omega) (the stated
    inequality); ``e_min_field`` solves the fixed point of the implemented
    field, e^k a_k(e) = k*lambda'/(eps*C*omega).  The two differ by the 2/3
    constant, which is surfaced rather than silently resolved.
    """

    satisfied: bool
    e: float
    e_min: float | None
    e_min_field: float | None
    rhs: float
    unsatisfiable: bool = False


@dataclass(frozen=True)
class CaptureVerdict:
    """Equilibrium existence plus the certainty-of-capture margin at index k."""

    k: int
    crust_equilibrium_exists: bool
    gamma_bar: float | None
    core_equilibrium_exists: bool
    eta_bar: float | None
    certainty_margin: float      # lambda/lambda' minus the threshold below
    ratio: float                 # lambda / lambda'
    threshold_ratio: float       # k*pi / sqrt(32*eps*a_k(e)*e^k) - 1
    delta_v_eff: float           # potential rise over one well, rad^2/s^2
    delta_e_eff_bound: float     # dissipation lower bound over one well

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "crust_equilibrium_exists": self.crust_equilibrium_exists,
            "gamma_bar": self.gamma_bar,
            "core_equilibrium_exists": self.core_equilibrium_exists,
            "eta_bar": self.eta_bar,
            "certainty_margin": self.certainty_margin,
            "coupling_ratio": self.ratio,
            "threshold_ratio": self.threshold_ratio,
            "delta_v_eff": self.delta_v_eff,
            "delta_e_eff_bound": self.delta_e_eff_bound,
        }


@dataclass(frozen=True)
class LockVerdict:
    """Classification of one shell's trajectory over the last window."""

    kind: str    # "locked" | "librating" | "circulating"
    rate: float  # windowed mean rate (the value the rate librates about)

    @property
    def locked(self) -> bool:
        return self.kind == "locked"

    def label(self) -> str:
        if self.kind == "librating":
            return f"librating-about({self.rate:g})"
        return self.kind


@dataclass(frozen=True)
class CascadeEpisode:
    """One resonance visit: entry/exit times (s), eccentricities, verdicts."""

    k: int
    t_enter: float
    t_exit: float
    e_enter: float
    e_exit: float
    exit_cause: str
    captured: bool
    certainty_margin: float

    def __post_init__(self) -> None:
        if not self.t_exit > self.t_enter:
            raise ValueError("episode must have t_exit > t_enter")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "t_enter": self.t_enter,
            "t_exit": self.t_exit,
            "e_enter": self.e_enter,
            "e_exit": self.e_exit,
            "exit_cause": self.exit_cause,
            "captured": self.captured,
            "certainty_margin": self.certainty_margin,
        }


def crust_threshold(params: BodyParameters, k: int) -> float:
    """Window half-width 3(B'-A') omega^2 a_k(e) e^k / (4 lambda), rad/s."""
    if k < 0:
        raise ValueError(f"resonance index must be >= 0, got {k}")
    _, BpmAp = triaxiality(params)
    Ak = radius_cubed_harmonic(k, params.e)
    return 0.75 * BpmAp * params.omega ** 2 * Ak / viscous_lambda(params)


def crust_condition(params: BodyParameters, k: int, v_eta: float) -> CrustCondition:
    """Does the crust equilibrium exist while the core rotates at v_eta (rad/s)?"""
    thr = crust_threshold(params, k)
    ok = abs(v_eta) < thr
    gamma_bar = 0.5 * math.asin(v_eta / thr) if ok else None
    return CrustCondition(satisfied=ok, threshold=thr, v_eta=v_eta,
                          gamma_bar=gamma_bar)


def _solve_harmonic_equals(k: int, rhs: float) -> float | None:
    """Solve e^k a_k(e) = rhs for e by bisection in log(e); None if no root."""
    lo, hi = math.log(1e-30), math.log(0.95)
    f_hi = radius_cubed_harmonic(k, math.exp(hi))
    if rhs > f_hi:
        return None
    if rhs <= radius_cubed_harmonic(k, math.exp(lo)):
        return math.exp(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = radius_cubed_harmonic(k, math.exp(mid))
        if abs(val - rhs) <= 1e-12 * rhs:
            return math.exp(mid)
        if val > rhs:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14:
            break
    return math.exp(0.5 * (lo + hi))


def core_condition(params: BodyParameters, k: int) -> CoreCondition:
    """Is the eccentricity large enough for the core equilibrium at index k?"""
    if k < 0:
        raise ValueError(f"resonance index must be >= 0, got {k}")
    if k == 0:
        # No drift term in the 1:1 state; the condition is vacuous.
        return CoreCondition(satisfied=True, e=params.e, e_min=0.0,
                             e_min_field=0.0, rhs=0.0)
    C, _ = moments_of_inertia(params)
    lam_p = viscoelastic_lambda(params, k)
    rhs = 2.0 * k * lam_p / (3.0 * params.epsilon * C * params.omega)
    e_min = _solve_harmonic_equals(k, rhs)
    e_min_field = _solve_harmonic_equals(k, 1.5 * rhs)
    if e_min is None:
        return CoreCondition(satisfied=False, e=params.e, e_min=None,
                             e_min_field=e_min_field, rhs=rhs, unsatisfiable=True)
    return CoreCondition(satisfied=params.e > e_min, e=params.e, e_min=e_min,
                         e_min_field=e_min_field, rhs=rhs)


def effective_potential(eta: float, coeffs: ModelCoefficients) -> float:
    """Tilted-washboard potential for the core angle, per unit inertia.

    V_eff(eta) = -(A_core/2) cos(2 eta) + (1/tau_eta') * drift * eta, in the
    amplitude convention of the implemented field so that the Lyapunov
    descent identity holds exactly.
    """
    return (-0.5 * coeffs.A_core * math.cos(2.0 * eta)
            + coeffs.inv_tau_eta_prime * coeffs.drift * eta)


def lyapunov_energy(state: SpinState, coeffs: ModelCoefficients) -> float:
    """Effective energy W = v_eta^2/2 + V_eff(eta) of the decoupled core."""
    return 0.5 * state.v_eta ** 2 + effective_potential(state.eta, coeffs)


def lyapunov_rate(state: SpinState, coeffs: ModelCoefficients) -> float:
    """dW/dt along the decoupled core field: -((lambda+lambda')/C) v_eta^2 <= 0."""
    return -(coeffs.inv_tau_eta + coeffs.inv_tau_eta_prime) * state.v_eta ** 2


def capture_certainty(params: BodyParameters, k: int,
                      v_eta: float = 0.0) -> CaptureVerdict:
    """Certainty-of-capture verdict at resonance k.

    The core is captured with probability 1 when the per-well dissipation
    lower bound exceeds the potential rise over one well, i.e. when
    lambda/lambda' > k*pi/sqrt(32*eps*a_k(e)*e^k) - 1.  The crust equilibrium
    is evaluated at the supplied core rate (default: co-rotation, 0).
    """
    if k < 1:
        raise ValueError(f"resonance index must be >= 1, got {k}")
    if params.e <= 0.0:
        raise ValueError("capture certainty needs a positive eccentricity")
    C, _ = moments_of_inertia(params)
    lam = viscous_lambda(params)
    lam_p = viscoelastic_lambda(params, k)
    eps = params.epsilon
    Ak = radius_cubed_harmonic(k, params.e)
    ratio = coupling_ratio(params, k)
    threshold = k * math.pi / math.sqrt(32.0 * eps * Ak) - 1.0
    margin = ratio - threshold
    delta_v = math.pi * (lam_p / C) * (0.5 * k * params.omega)
    delta_e = ((lam + lam_p) / C) * params.omega * math.sqrt(8.0 * eps * Ak)

    cc = crust_condition(params, k, v_eta)
    # Core fixed point of the implemented field: sin(2 eta_bar) = -arg.
    arg = k * lam_p / (eps * C * params.omega * Ak)
    core_ok = arg < 1.0
    eta_bar = -0.5 * math.asin(arg) if core_ok else None
    return CaptureVerdict(
        k=k,
        crust_equilibrium_exists=cc.satisfied,
        gamma_bar=cc.gamma_bar,
        core_equilibrium_exists=core_ok,
        eta_bar=eta_bar,
        certainty_margin=margin,
        ratio=ratio,
        threshold_ratio=threshold,
        delta_v_eff=delta_v,
        delta_e_eff_bound=delta_e,
    )


def detect_lock(traj: Trajectory, which: str = "crust",
                window: float | None = None, *, rate_fraction: float = 0.01,
                span_limit: float = math.pi) -> LockVerdict:
    """Classify a shell's motion over the trailing window of a trajectory.

    locked:      windowed mean rate below ``rate_fraction`` of the initial
                 rate magnitude and angle span below ``span_limit``;
    librating:   the rate oscillates about a settled mean (the angle,
                 detrended by that mean, spans less than ``span_limit``);
    circulating: the angle winds monotonically by more than 2*pi per window.

    The reference magnitude is the larger of the initial rate and the rate
    peak over the first window.  The trajectory must span at least three
    windows (default window: one third of the span).
    """
    if which == "crust":
        angle, rate = traj.gamma, traj.v_gamma
    elif which == "core":
        angle, rate = traj.eta, traj.v_eta
    else:
        raise ValueError(f"which must be 'crust' or 'core', got {which!r}")
    t = traj.times
    span_t = t[-1] - t[0]
    if window is None:
        window = span_t / 3.0
    if window <= 0.0 or span_t < 3.0 * window:
        raise ValueError("trajectory too short: needs at least three windows")

    first = t <= t[0] + window
    ref = max(abs(rate[0]), float(np.max(np.abs(rate[first]))))
    last = t >= t[-1] - window
    mean_rate = float(np.mean(rate[last]))
    a_last = angle[last]
    t_last = t[last]
    span = float(np.max(a_last) - np.min(a_last))

    if abs(mean_rate) <= rate_fraction * ref and span < span_limit:
        return LockVerdict(kind="locked", rate=mean_rate)
    detrended = a_last - mean_rate * (t_last - t_last[0])
    if float(np.max(detrended) - np.min(detrended)) < span_limit:
        return LockVerdict(kind="librating", rate=mean_rate)
    diffs = np.diff(a_last)
    monotone = bool(np.all(diffs >= 0.0) or np.all(diffs <= 0.0))
    if monotone and abs(a_last[-1] - a_last[0]) > 2.0 * math.pi:
        return LockVerdict(kind="circulating", rate=mean_rate)
    return LockVerdict(kind="librating", rate=mean_rate)


def cascade(params: BodyParameters, k_start: int, e0: float,
            spin0: float | None = None,
            freeze_eccentricity: bool = False) -> list[CascadeEpisode]:
    """Event-driven history of resonance visits from k_start down to 1:1.

    Between resonances the co-rotating body spins down toward the orbit rate
    under the tidal drag alone, Omega(t) = omega + (Omega0 - omega) *
    exp(-dt*lambda'/C).  On reaching a resonance window the visit is captured
    when both the eccentricity condition and the certainty criterion hold;
    the eccentricity then decays exponentially on tau_eta' = C/lambda' until
    the eccentricity condition fails and the cascade moves to k-1.  Passages
    where the core equilibrium cannot exist leave no episode; passages where
    only the certainty criterion fails are recorded as skipped.  The 1:1
    state (k = 0) is terminal; the drag coefficient of the last defined
    resonance (k = 1) drives the final approach.

    ``spin0`` is the absolute initial rotation rate in rad/s (default: a
    quarter mean-motion above the k_start resonance rate); times are seconds.
    """
    if k_start < 1:
        raise ValueError(f"k_start must be >= 1, got {k_start}")
    if not 0.0 < e0 < 1.0:
        raise ValueError(f"e0 must lie in (0, 1), got {e0}")
    omega = params.omega
    C, _ = moments_of_inertia(params)
    rate_start = (0.5 * k_start + 1.0) * omega
    if spin0 is None:
        spin0 = rate_start + 0.25 * omega
    if spin0 < rate_start:
        raise ValueError(f"spin0 = {spin0} is below the k_start resonance rate "
                         f"{rate_start}")

    episodes: list[CascadeEpisode] = []
    t = 0.0
    e = e0
    u = spin0 - omega  # rate above the 1:1 state
    for k in range(k_start, -1, -1):
        body = replace(params, e=e) if e != params.e else params
        tau_p = C / viscoelastic_lambda(params, max(k, 1))
        thr = crust_threshold(body, k)
        u_k = 0.5 * k * omega
        if k == 0:
            # Terminal 1:1 approach: enter when |Omega - omega| < threshold.
            if u > thr:
                t += tau_p * math.log(u / thr)
            episodes.append(CascadeEpisode(
                k=0, t_enter=t, t_exit=math.inf, e_enter=e, e_exit=e,
                exit_cause=EXIT_TERMINAL, captured=True,
                certainty_margin=math.inf))
            break
        u_enter = u_k + thr
        if u > u_enter:
            t += tau_p * math.log(u / u_enter)
            u = u_enter
        t_enter = t
        core = core_condition(body, k)
        if not core.satisfied:
            # The resonance cannot hold the core; the body drifts through.
            if u > u_k:
                t += tau_p * math.log(u / u_k)
                u = u_k
            continue
        verdict = capture_certainty(body, k)
        if verdict.certainty_margin <= 0.0:
            # Capture is not guaranteed; record the passage and drift on.
            if u > u_k:
                t += tau_p * math.log(u / u_k)
                u = u_k
            episodes.append(CascadeEpisode(
                k=k, t_enter=t_enter, t_exit=t if t > t_enter else math.nextafter(t_enter, math.inf),
                e_enter=e, e_exit=e, exit_cause=EXIT_SKIPPED, captured=False,
                certainty_margin=verdict.certainty_margin))
            continue
        if freeze_eccentricity:
            episodes.append(CascadeEpisode(
                k=k, t_enter=t_enter, t_exit=math.inf, e_enter=e, e_exit=e,
                exit_cause=EXIT_STATIONARY, captured=True,
                certainty_margin=verdict.certainty_margin))
            break
        # Locked: eccentricity decays as de/dt = -e/tau_eta' until the core
        # condition fails (modeling choice: exponential with that constant).
        e_exit = core.e_min if core.e_min is not None else 0.0
        dt_lock = tau_p * math.log(e / e_exit)
        t = t_enter + dt_lock
        episodes.append(CascadeEpisode(
            k=k, t_enter=t_enter, t_exit=t, e_enter=e, e_exit=e_exit,
            exit_cause=EXIT_ECCENTRICITY, captured=True,
            certainty_margin=verdict.certainty_margin))
        e = e_exit
        u = u_k  # the pair co-rotates at the resonance rate at exit
    return episodes
