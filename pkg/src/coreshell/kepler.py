"""Kepler equation and eccentricity-expansion Fourier coefficients.

The orbit-averaged torques are driven by the Fourier coefficients of
(a/rho)^3 and of the equation of center theta - M over one orbital period:

    (a/rho)^3   = sum_n a_n(e) e^n cos(n M)
    theta - M   = sum_n c_n(e) e^n sin(n M)

Both families are computed numerically (FFT quadrature on the exact Kepler
solution) rather than from closed-form coefficient tables, so they are valid
at any eccentricity below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Quadrature refinement: start at 2^12 points, double until two successive
# grids agree to _QUAD_AGREEMENT on every requested harmonic.
_QUAD_START = 4096
_QUAD_MAX = 2 ** 18
_QUAD_AGREEMENT = 1e-11

# Default evaluation points for the e -> 0 limits (the coefficients are
# power series in e^2, so extrapolation is polynomial in e^2).
LIMIT_POINTS = (1e-2, 5e-3, 2.5e-3)


def _check_eccentricity(e: float, strict_positive: bool = False) -> None:
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must satisfy 0 <= e < 1, got {e}")
    if strict_positive and e == 0.0:
        raise ValueError("eccentricity must be positive here; use the *_limit0 "
                         "operation for the e -> 0 value")


@dataclass(frozen=True)
class OrbitGeometry:
    """Fixed Keplerian orbit: eccentricity and semi-major axis (meters)."""

    e: float
    a: float

    def __post_init__(self) -> None:
        _check_eccentricity(self.e)
        if self.a <= 0.0:
            raise ValueError(f"semi-major axis must be positive, got {self.a}")


@dataclass(frozen=True)
class ExpansionTable:
    """Fourier coefficients a_n(e), c_n(e) up to max_order.

    a_coeffs[n] = a_n(e) for n = 0..max_order; c_coeffs[n-1] = c_n(e) for
    n = 1..max_order (the sine series has no n = 0 term).
    """

    e: float
    max_order: int
    a_coeffs: tuple[float, ...]
    c_coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.a_coeffs + self.c_coeffs):
            raise ValueError("expansion coefficients must be finite")


def solve_kepler(M: float, e: float) -> float:
    """Solve E - e*sin(E) = M for the eccentric anomaly E.

    Newton iteration seeded with E0 = M + e*sin(M); any Newton step that
    leaves the bracket [M - e, M + e] is replaced by a bisection step.  The
    result is continuous in M: E(M + 2*pi) = E(M) + 2*pi.

    Residual |E - e*sin(E) - M| is below 1e-13.
    """
    _check_eccentricity(e)
    wind = math.floor(M / TWO_PI)
    Mr = M - wind * TWO_PI
    lo, hi = Mr - e, Mr + e
    E = Mr + e * math.sin(Mr)
    for _ in range(100):
        f = E - e * math.sin(E) - Mr
        if abs(f) < 1e-15:
            break
        if f > 0.0:
            hi = E
        else:
            lo = E
        step = f / (1.0 - e * math.cos(E))
        En = E - step
        if not lo <= En <= hi:
            En = 0.5 * (lo + hi)
        if En == E:
            break
        E = En
    return E + wind * TWO_PI


def _solve_kepler_grid(M: np.ndarray, e: float) -> np.ndarray:
    """Vectorized safeguarded Newton for quadrature grids, M in [0, 2*pi)."""
    lo = M - e
    hi = M + e
    E = M + e * np.sin(M)
    for _ in range(100):
        f = E - e * np.sin(E) - M
        if np.max(np.abs(f)) < 4e-15:
            break
        hi = np.where(f > 0.0, np.minimum(hi, E), hi)
        lo = np.where(f <= 0.0, np.maximum(lo, E), lo)
        En = E - f / (1.0 - e * np.cos(E))
        bad = (En < lo) | (En > hi)
        En = np.where(bad, 0.5 * (lo + hi), En)
        if np.array_equal(En, E):
            break
        E = En
    return E


def radius_ratio_cubed(M: float, e: float) -> float:
    """(a/rho)^3 at mean anomaly M, evaluated exactly via rho/a = 1 - e*cos(E)."""
    E = solve_kepler(M, e)
    return (1.0 - e * math.cos(E)) ** -3


def true_anomaly(M: float, e: float) -> float:
    """True anomaly theta(M), continuous and unwrapped: theta(M + 2*pi) = theta(M) + 2*pi."""
    _check_eccentricity(e)
    wind = math.floor(M / TWO_PI)
    E = solve_kepler(M - wind * TWO_PI, e)
    th = math.atan2(math.sqrt(1.0 - e * e) * math.sin(E), math.cos(E) - e)
    if th < 0.0:
        th += TWO_PI
    return th + wind * TWO_PI


def true_anomaly_rate(M: float, e: float) -> float:
    """d(theta)/dM = sqrt(1-e^2) / (1 - e*cos(E))^2, from angular momentum."""
    E = solve_kepler(M, e)
    return math.sqrt(1.0 - e * e) / (1.0 - e * math.cos(E)) ** 2


def true_anomaly_accel(M: float, e: float) -> float:
    """d^2(theta)/dM^2: the true-anomaly acceleration for unit mean motion.

    For physical time multiply by omega^2.  Closed form from the angular
    momentum integral: -2*e*sqrt(1-e^2)*sin(E) / (1 - e*cos(E))^4.
    """
    E = solve_kepler(M, e)
    return -2.0 * e * math.sqrt(1.0 - e * e) * math.sin(E) / (1.0 - e * math.cos(E)) ** 4


def _harmonic_sets(e: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw Fourier coefficients on [0, 2*pi): cosines of (a/rho)^3 and sines of theta - M.

    Returns (A, S) with A[n] = a_n(e) * e^n for n = 0..n_max and
    S[n] = c_n(e) * e^n for n = 1..n_max (S[0] is zero).  Trapezoidal rule on
    a uniform grid (spectrally accurate for these periodic analytic
    integrands), refined by grid doubling until successive results agree to
    1e-11.
    """
    _check_eccentricity(e)
    npts = _QUAD_START
    prev: tuple[np.ndarray, np.ndarray] | None = None

    def _agree(new: np.ndarray, old: np.ndarray) -> bool:
        # Per-coefficient: 1e-11 relative, with an absolute floor at the
        # roundoff level of the dominant coefficient.
        floor = 1e-13 * max(1e-300, float(np.max(np.abs(new))))
        return bool(np.all(np.abs(new - old) <=
                           np.maximum(_QUAD_AGREEMENT * np.abs(new), floor)))

    while npts <= _QUAD_MAX:
        M = np.arange(npts) * (TWO_PI / npts)
        E = _solve_kepler_grid(M, e)
        # Cancellation-free deviations from the circular orbit: both
        # integrands are O(e), which keeps the harmonics accurate in a
        # relative sense at any eccentricity.
        x = e * np.cos(E)
        dev = x * (3.0 - 3.0 * x + x * x) / (1.0 - x) ** 3  # (a/rho)^3 - 1
        beta = e / (1.0 + math.sqrt(1.0 - e * e))
        sinE = np.sin(E)
        center = e * sinE + 2.0 * np.arctan2(beta * sinE, 1.0 - beta * np.cos(E))
        fa = np.fft.rfft(dev)
        fc = np.fft.rfft(center)
        A = 2.0 * np.real(fa[: n_max + 1]) / npts
        A[0] = 1.0 + 0.5 * A[0]
        S = -2.0 * np.imag(fc[: n_max + 1]) / npts
        S[0] = 0.0
        if prev is not None and _agree(A, prev[0]) and _agree(S, prev[1]):
            return A, S
        prev = (A, S)
        npts *= 2
    raise RuntimeError(f"Fourier quadrature did not converge at e={e} "
                       f"within {_QUAD_MAX} grid points")


def radius_cubed_harmonic(n: int, e: float) -> float:
    """Raw n-th cosine coefficient of (a/rho)^3, i.e. a_n(e) * e^n.

    This is what the averaged dynamics consumes; it stays finite at e = 0.
    """
    if n < 0:
        raise ValueError(f"harmonic index must be >= 0, got {n}")
    if e == 0.0:
        return 1.0 if n == 0 else 0.0
    A, _ = _harmonic_sets(e, n)
    return float(A[n])


def center_harmonic(n: int, e: float) -> float:
    """Raw n-th sine coefficient of theta - M, i.e. c_n(e) * e^n."""
    if n < 1:
        raise ValueError(f"harmonic index must be >= 1, got {n}")
    if e == 0.0:
        return 0.0
    _, S = _harmonic_sets(e, n)
    return float(S[n])


def fourier_a(n: int, e: float) -> float:
    """Eccentricity-expansion coefficient a_n(e) of the (a/rho)^3 cosine series."""
    if n < 0:
        raise ValueError(f"harmonic index must be >= 0, got {n}")
    _check_eccentricity(e, strict_positive=n >= 1)
    if n == 0 and e == 0.0:
        return 1.0
    return radius_cubed_harmonic(n, e) / e ** n


def fourier_c(n: int, e: float) -> float:
    """Eccentricity-expansion coefficient c_n(e) of the theta - M sine series."""
    if n < 1:
        raise ValueError(f"harmonic index must be >= 1, got {n}")
    _check_eccentricity(e, strict_positive=True)
    return center_harmonic(n, e) / e ** n


def _extrapolate_e2(values: list[float], points: tuple[float, ...]) -> float:
    """Neville polynomial extrapolation to e = 0 in the variable x = e^2."""
    x = [p * p for p in points]
    tab = list(values)
    for m in range(1, len(tab)):
        for i in range(len(tab) - m):
            tab[i] = (x[i + m] * tab[i] - x[i] * tab[i + 1]) / (x[i + m] - x[i])
    return tab[0]


def fourier_a_limit0(n: int, points: tuple[float, ...] = LIMIT_POINTS) -> float:
    """a_n(0): Richardson-extrapolated limit of a_n(e) as e -> 0."""
    if n == 0:
        return fourier_a(0, 0.0)
    return _extrapolate_e2([fourier_a(n, e) for e in points], points)


def fourier_c_limit0(n: int, points: tuple[float, ...] = LIMIT_POINTS) -> float:
    """c_n(0): Richardson-extrapolated limit of c_n(e) as e -> 0."""
    return _extrapolate_e2([fourier_c(n, e) for e in points], points)


def expansion_table(e: float, n_max: int = 8) -> ExpansionTable:
    """Tabulate a_n(e) for n = 0..n_max and c_n(e) for n = 1..n_max."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    _check_eccentricity(e, strict_positive=True)
    A, S = _harmonic_sets(e, n_max)
    a = tuple(float(A[n]) / e ** n for n in range(n_max + 1))
    c = tuple(float(S[n]) / e ** n for n in range(1, n_max + 1))
    return ExpansionTable(e=e, max_order=n_max, a_coeffs=a, c_coeffs=c)
