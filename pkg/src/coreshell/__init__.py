"""Core-shell spin-orbit resonance toolkit.

Simulates a two-layer (solid crust over a heavier solid core) rotating body
on a fixed Keplerian orbit, with viscous crust-core friction and a weaker
viscoelastic tidal drag on the core.  Provides the averaged and unaveraged
resonant-frame equations of motion, an adaptive RK5(4) integrator, capture
and exit conditions, and the multi-resonance cascade driver, plus shipped
parameter sets for Ganymede and Mercury.
"""

__version__ = "0.1.0"

from .kepler import (
    OrbitGeometry,
    ExpansionTable,
    solve_kepler,
    radius_ratio_cubed,
    true_anomaly,
    fourier_a,
    fourier_c,
    fourier_a_limit0,
    fourier_c_limit0,
    expansion_table,
)
from .bodies import (
    BodyParameters,
    CouplingSet,
    moments_of_inertia,
    viscous_lambda,
    viscoelastic_lambda,
    coupling_ratio,
    couplings,
    timescales,
    load_body,
    SECONDS_PER_YEAR,
    GRAVITATIONAL_CONSTANT,
)
from .dynamics import (
    SpinState,
    ModelCoefficients,
    Trajectory,
    AveragedField,
    DecoupledCrustField,
    DecoupledCoreField,
    UnaveragedField,
    averaged_field,
    decoupled_crust_field,
    decoupled_core_field,
    unaveraged_field,
    integrate,
    IntegrationError,
    EQ35_COEFFICIENTS,
)
from .analysis import (
    CaptureVerdict,
    CascadeEpisode,
    CrustCondition,
    CoreCondition,
    LockVerdict,
    crust_condition,
    core_condition,
    effective_potential,
    lyapunov_energy,
    lyapunov_rate,
    capture_certainty,
    detect_lock,
    cascade,
)
