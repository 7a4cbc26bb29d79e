"""Physical parameter sets and crust-core coupling estimates.

Houses the per-body parameter records (shipped files: ``ganymede`` and
``mercury``), the derived moments of inertia of the two layers, the viscous
and viscoelastic friction coefficients lambda and lambda', and the three
characteristic timescales of the crust-core system.

Everything here is SI; a seconds-per-year constant is provided for the
year-based simulation outputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

GRAVITATIONAL_CONSTANT = 6.674e-11  # m^3 kg^-1 s^-2
SECONDS_PER_YEAR = 3.156e7

DATA_DIR_ENV = "CORESHELL_DATA_DIR"

# Relative slack allowed between G*M_secondary and omega^2 a^3 (the shipped
# two-significant-digit values land within ~5%).
_KEPLER_TOLERANCE = 0.05


@dataclass(frozen=True)
class BodyParameters:
    """One primary/secondary pair, SI units.

    The triaxial layers are described by the equatorial ellipticities
    epsilon = (3/2)(B-A)/C of the core and epsilon_prime of the crust; the
    total spin moment of inertia is inertia_factor * m * R^2, split between
    core and crust by crust_inertia_ratio = C'/(C + C').
    """

    omega: float                 # mean motion, rad/s
    a: float                     # semi-major axis, m
    e: float                     # eccentricity
    R: float                     # mean radius, m
    m: float                     # primary mass, kg
    epsilon: float               # core equatorial ellipticity
    Q: float                     # tidal quality factor
    k2: float                    # tidal Love number
    eta_fluid: float             # interface-fluid viscosity, Pa s
    h: float                     # fluid-layer depth, m
    M_secondary: float | None = None   # secondary mass, kg (optional)
    epsilon_prime: float | None = None  # crust ellipticity; defaults to epsilon
    inertia_factor: float = 0.4        # alpha in C_total = alpha m R^2
    crust_inertia_ratio: float = 1e-3  # C' / C_total
    estimated: frozenset = field(default_factory=frozenset)  # provenance flags

    def __post_init__(self) -> None:
        if self.epsilon_prime is None:
            object.__setattr__(self, "epsilon_prime", self.epsilon)
        positive = {
            "omega": self.omega, "a": self.a, "R": self.R, "m": self.m,
            "epsilon": self.epsilon, "epsilon_prime": self.epsilon_prime,
            "Q": self.Q, "k2": self.k2, "eta_fluid": self.eta_fluid,
            "h": self.h, "inertia_factor": self.inertia_factor,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must satisfy 0 <= e < 1, got {self.e}")
        if not 0.0 < self.crust_inertia_ratio < 1.0:
            raise ValueError("crust_inertia_ratio must lie in (0, 1), "
                             f"got {self.crust_inertia_ratio}")
        if self.epsilon >= 1.0 or self.epsilon_prime >= 1.0:
            raise ValueError("equatorial ellipticities must be small (< 1)")
        if self.M_secondary is not None:
            kepler = self.omega ** 2 * self.a ** 3
            dev = abs(GRAVITATIONAL_CONSTANT * self.M_secondary - kepler) / kepler
            if dev >= _KEPLER_TOLERANCE:
                raise ValueError(
                    f"M_secondary inconsistent with Kepler's third law: "
                    f"relative deviation {dev:.3f} >= {_KEPLER_TOLERANCE}")


@dataclass(frozen=True)
class CouplingSet:
    """Friction coefficients and spin moments of inertia of the two layers."""

    lam: float        # viscous crust-core coupling, kg m^2 / s
    lam_prime: float  # viscoelastic tidal coupling, kg m^2 / s
    C: float          # core spin moment of inertia, kg m^2
    C_prime: float    # crust spin moment of inertia, kg m^2

    def __post_init__(self) -> None:
        if not (self.lam > 0.0 and self.lam_prime > 0.0):
            raise ValueError("coupling coefficients must be positive")
        if not 0.0 < self.C_prime < self.C:
            raise ValueError("crust inertia must satisfy 0 < C' < C")


def moments_of_inertia(params: BodyParameters) -> tuple[float, float]:
    """Split the total spin inertia alpha*m*R^2 into (C, C_prime)."""
    total = params.inertia_factor * params.m * params.R ** 2
    c_prime = params.crust_inertia_ratio * total
    return total - c_prime, c_prime


def triaxiality(params: BodyParameters) -> tuple[float, float]:
    """(B - A, B' - A'): equatorial inertia differences of core and crust."""
    C, C_prime = moments_of_inertia(params)
    return (2.0 / 3.0) * params.epsilon * C, (2.0 / 3.0) * params.epsilon_prime * C_prime


def viscous_lambda(params: BodyParameters) -> float:
    """Viscous coupling lambda = (8*pi/3) * eta * R^4 / h from the fluid interface."""
    if params.h <= 0.0:
        raise ValueError("no fluid layer: h must be positive")
    return (8.0 * math.pi / 3.0) * params.eta_fluid * params.R ** 4 / params.h


def viscoelastic_lambda(params: BodyParameters, k: int) -> float:
    """Viscoelastic coupling lambda' = (3/(k*omega)) * (k2/Q) * G * m^2 * R^5 / a^6.

    Linearizes the MacDonald tidal torque about the 2(k/2+1):2 resonance;
    undefined for the 1:1 state (k = 0), which the cascade treats as terminal.
    """
    if k < 1:
        raise ValueError(f"resonance index must be >= 1 for the tidal coupling, got {k}")
    return (3.0 / (k * params.omega)) * (params.k2 / params.Q) * \
        GRAVITATIONAL_CONSTANT * params.m ** 2 * params.R ** 5 / params.a ** 6


def coupling_ratio(params: BodyParameters, k: int) -> float:
    """lambda / lambda' = 8*pi*eta*a^6*Q*k*omega / (9*h*k2*G*m^2*R), closed form."""
    if k < 1:
        raise ValueError(f"resonance index must be >= 1, got {k}")
    num = 8.0 * math.pi * params.eta_fluid * params.a ** 6 * params.Q * k * params.omega
    den = 9.0 * params.h * params.k2 * GRAVITATIONAL_CONSTANT * params.m ** 2 * params.R
    return num / den


def couplings(params: BodyParameters, k: int) -> CouplingSet:
    """Assemble the full CouplingSet for resonance index k."""
    C, C_prime = moments_of_inertia(params)
    return CouplingSet(lam=viscous_lambda(params),
                       lam_prime=viscoelastic_lambda(params, k),
                       C=C, C_prime=C_prime)


def timescales(coupling: CouplingSet) -> tuple[float, float, float]:
    """(tau_gamma, tau_eta, tau_eta') = (C'/lambda, C/lambda, C/lambda'), seconds.

    Crust relaxation, core relaxation, and tidal circularization; the three
    are well separated whenever C' << C and lambda' << lambda.
    """
    return (coupling.C_prime / coupling.lam,
            coupling.C / coupling.lam,
            coupling.C / coupling.lam_prime)


# --- body parameter files ---

_FIELD_NAMES = {
    "omega", "a", "e", "R", "m", "M_secondary", "epsilon", "epsilon_prime",
    "Q", "k2", "eta_fluid", "h", "inertia_factor", "crust_inertia_ratio",
}


def data_dir() -> Path:
    """Directory holding the shipped body files; CORESHELL_DATA_DIR overrides."""
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("coreshell") / "data"))


def parse_body_file(text: str) -> BodyParameters:
    """Parse a key-value body description.

    One ``name = value`` pair per line; ``#`` starts a comment; a trailing
    ``[estimate]`` marks the value as a literature estimate rather than a
    direct measurement.
    """
    values: dict[str, float] = {}
    estimated: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'name = value', got {raw!r}")
        name, _, rhs = line.partition("=")
        name = name.strip()
        rhs = rhs.strip()
        if name not in _FIELD_NAMES:
            raise ValueError(f"line {lineno}: unknown parameter {name!r}")
        if rhs.endswith("[estimate]"):
            estimated.add(name)
            rhs = rhs[: -len("[estimate]")].strip()
        try:
            values[name] = float(rhs)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {name!r}: {rhs!r}") from exc
    try:
        return BodyParameters(estimated=frozenset(estimated), **values)
    except TypeError as exc:
        raise ValueError(f"incomplete body file: {exc}") from exc


def load_body(name: str) -> BodyParameters:
    """Load a body by shipped name (``ganymede``, ``mercury``) or file path."""
    path = Path(name)
    if not path.is_file():
        path = data_dir() / name
    if not path.is_file():
        raise ValueError(f"no body file named {name!r} (searched {path.parent})")
    return parse_body_file(path.read_text())
