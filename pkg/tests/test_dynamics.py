import math

import numpy as np
import pytest

from coreshell import _rk, dynamics
from coreshell.dynamics import (
    AveragedField,
    DecoupledCoreField,
    DecoupledCrustField,
    EQ35_COEFFICIENTS,
    IntegrationError,
    ModelCoefficients,
    SpinState,
    Trajectory,
    UnaveragedField,
    integrate,
    matched_initial_state,
)
from coreshell.kepler import (
    radius_cubed_harmonic,
    solve_kepler,
    true_anomaly_rate,
)

TWO_PI = 2.0 * math.pi


def coeffs(**overrides):
    base = dict(A_crust=1.0, A_core=0.5, inv_tau_gamma=0.2, inv_tau_eta=0.02,
                inv_tau_eta_prime=1e-3, drift=2.0, k=1, time_unit="s")
    base.update(overrides)
    return ModelCoefficients(**base)


class TestTypes:
    def test_spin_state_finite(self):
        with pytest.raises(ValueError):
            SpinState(0.0, math.nan, 0.0, 0.0, 0.0)

    def test_coefficients_validation(self):
        with pytest.raises(ValueError):
            coeffs(A_crust=-1.0)
        with pytest.raises(ValueError):
            coeffs(k=-1)
        with pytest.raises(ValueError):
            coeffs(time_unit="d")

    def test_inertia_ratio_identity(self, ganymede):
        # built from one coupling set: tau_gamma/tau_eta ratio equals C/C'
        c = ModelCoefficients.from_body(ganymede, 1)
        from coreshell.bodies import moments_of_inertia
        C, Cp = moments_of_inertia(ganymede)
        assert c.inv_tau_gamma / c.inv_tau_eta == pytest.approx(C / Cp, rel=1e-12)

    def test_from_body_amplitudes(self, ganymede):
        # A = (eps/2) omega^2 a_k(e) e^k in SI
        c = ModelCoefficients.from_body(ganymede, 1)
        Ak = radius_cubed_harmonic(1, ganymede.e)
        expected = 0.5 * ganymede.epsilon * ganymede.omega ** 2 * Ak
        assert c.A_core == pytest.approx(expected, rel=1e-12)
        assert c.A_crust == pytest.approx(expected, rel=1e-12)  # eps' = eps
        assert c.drift == pytest.approx(0.5 * ganymede.omega)

    def test_time_unit_scaling(self, ganymede):
        s = ModelCoefficients.from_body(ganymede, 1, "s")
        y = ModelCoefficients.from_body(ganymede, 1, "yr")
        spy = y.seconds_per_unit
        assert y.A_crust == pytest.approx(s.A_crust * spy ** 2, rel=1e-12)
        assert y.inv_tau_eta == pytest.approx(s.inv_tau_eta * spy, rel=1e-12)
        assert y.drift == pytest.approx(s.drift * spy, rel=1e-12)

    def test_kernel_kind_protocol(self):
        assert AveragedField.kernel_kind == _rk.KIND_AVERAGED
        assert DecoupledCrustField.kernel_kind == _rk.KIND_CRUST
        assert DecoupledCoreField.kernel_kind == _rk.KIND_CORE
        assert UnaveragedField.kernel_kind == _rk.KIND_UNAVERAGED


class TestAveragedField:
    def test_pendulum_equilibrium(self):
        c = coeffs(inv_tau_gamma=0.0, inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                   drift=0.0)
        d = dynamics.averaged_field(SpinState(0.0, 0.0, 0.0, 0.0, 0.0), c)
        assert d == (0.0, 0.0, 0.0, 0.0)

    def test_quarter_turn_crust(self):
        c = coeffs(inv_tau_gamma=0.0, inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                   drift=0.0)
        d = dynamics.averaged_field(SpinState(0.0, math.pi / 4, 0.0, 0.0, 0.0), c)
        assert d[1] == pytest.approx(-c.A_crust)
        assert d[0] == 0.0

    def test_reference_coefficient_set(self):
        d = dynamics.averaged_field(SpinState(0.0, 0.1, 1000.0, 0.1, 50.0),
                                    EQ35_COEFFICIENTS)
        assert d[1] == pytest.approx(-202.5 * math.sin(0.2) - 0.167 * 950.0,
                                     rel=1e-14)

    def test_reduces_to_independent_pendulums(self):
        c = coeffs(inv_tau_gamma=0.0, inv_tau_eta=0.0, inv_tau_eta_prime=0.0)
        st = SpinState(0.0, 0.3, 0.7, -0.4, 0.2)
        d = dynamics.averaged_field(st, c)
        assert d[1] == pytest.approx(-c.A_crust * math.sin(0.6))
        assert d[3] == pytest.approx(-c.A_core * math.sin(-0.8))


class TestDecoupledFields:
    def test_crust_zero_at_origin(self):
        d = dynamics.decoupled_crust_field(SpinState(0.0, 0.0, 0.0, 0.0, 0.0),
                                           coeffs(), 0.0)
        assert d == (0.0, 0.0)

    def test_crust_equilibrium_angle(self):
        c = coeffs()
        u = 0.8 * c.A_crust / c.inv_tau_gamma
        gbar = 0.5 * math.asin(c.inv_tau_gamma * u / c.A_crust)
        d = dynamics.decoupled_crust_field(SpinState(0.0, gbar, 0.0, 0.0, 0.0), c, u)
        assert d[1] == pytest.approx(0.0, abs=1e-14)

    def test_crust_no_root_above_threshold(self):
        c = coeffs()
        u = 1.2 * c.A_crust / c.inv_tau_gamma
        best = min(abs(dynamics.decoupled_crust_field(
            SpinState(0.0, g, 0.0, 0.0, 0.0), c, u)[1])
            for g in np.linspace(-math.pi, math.pi, 2001))
        assert best > 0.0  # |sin| <= 1: no zero of the field over gamma

    def test_core_zero_at_origin_without_dissipation(self):
        c = coeffs(inv_tau_eta=0.0, inv_tau_eta_prime=0.0)
        d = dynamics.decoupled_core_field(SpinState(0.0, 0.0, 0.0, 0.0, 0.0), c)
        assert d == (0.0, 0.0)

    def test_core_drag_at_origin(self):
        c = coeffs()
        d = dynamics.decoupled_core_field(SpinState(0.0, 0.0, 0.0, 0.0, 0.0), c)
        assert d[1] == pytest.approx(-c.inv_tau_eta_prime * c.drift)

    def test_core_fixed_point_by_root_finding(self):
        # root of the implemented field at v_eta = 0, against the arcsine form
        c = coeffs()

        def vdot(eta):
            return dynamics.decoupled_core_field(
                SpinState(0.0, 0.0, 0.0, eta, 0.0), c)[1]

        lo, hi = -math.pi / 4, 0.0
        assert vdot(lo) * vdot(hi) < 0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if vdot(lo) * vdot(mid) <= 0:
                hi = mid
            else:
                lo = mid
        eta_bar = 0.5 * (lo + hi)
        expected = -0.5 * math.asin(c.inv_tau_eta_prime * c.drift / c.A_core)
        assert eta_bar == pytest.approx(expected, abs=1e-10)


class TestUnaveragedField:
    def test_circular_synchronous_reduces_to_pendulum(self):
        # e = 0, k = 0: constant-amplitude pendulum, no time dependence
        f = UnaveragedField(crust_torque=1.0, core_torque=0.5, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=0.0, omega=1.0, k=0)
        for t in (0.0, 1.3, 4.1):
            d = f(t, np.array([0.3, 0.1, -0.2, 0.05]))
            assert d[1] == pytest.approx(-math.sin(0.6))
            assert d[3] == pytest.approx(-0.5 * math.sin(-0.4))

    def test_one_period_torque_mean_matches_harmonic(self):
        # <(a/rho)^3 cos(k M)> = a_k(e) e^k / 2, trapezoid oracle
        e = 0.11
        for k in (1, 2):
            npts = 4096
            M = np.arange(npts) * TWO_PI / npts
            E = np.array([solve_kepler(m, e) for m in M])
            rr3 = (1.0 - e * np.cos(E)) ** -3
            mean = np.sum(rr3 * np.cos(k * M)) / npts
            assert mean == pytest.approx(radius_cubed_harmonic(k, e) / 2, rel=1e-10)

    def test_frozen_angle_average_matches_averaged_field(self):
        # averaging the unaveraged torque at frozen resonant angle reproduces
        # the averaged field exactly (the resonant harmonic picks out a_k e^k)
        e, om, k = 0.08, 2 * math.pi, 1
        f = UnaveragedField(crust_torque=0.7, core_torque=0.4, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=e, omega=om, k=k)
        avg = f.averaged()
        gamma = 0.37
        npts = 8192
        ts = np.arange(npts) / npts  # one orbit at omega = 2*pi
        acc = 0.0
        for t in ts:
            phi = 0.5 * k * om * t + gamma
            y = np.array([phi, 0.0, 0.0, 0.0])
            E = solve_kepler(om * t, e)
            rr3 = (1.0 - e * math.cos(E)) ** -3
            thdd = -2.0 * om * om * e * math.sqrt(1 - e * e) * math.sin(E) \
                / (1.0 - e * math.cos(E)) ** 4
            acc += -f.crust_torque * rr3 * math.sin(2.0 * phi) - thdd
        acc /= npts
        assert acc == pytest.approx(-avg.A_crust * math.sin(2 * gamma), rel=1e-6)

    def test_matched_initial_preserves_core_inertial_rate(self):
        # torque-free, friction-free core: v_nu + theta_dot is a constant of
        # motion; the matched initial state must set it to the slow target
        e, om, k = 0.05, 2 * math.pi, 1
        f = UnaveragedField(crust_torque=0.1, core_torque=0.0, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=e, omega=om, k=k)
        slow = SpinState(0.0, 0.0, 0.02, 0.0, 0.02)
        init = matched_initial_state(slow, f)
        traj = integrate(f, init, 40.0, 1e-10, sample_dt=0.01)
        t = traj.times
        thdot = np.array([true_anomaly_rate(om * ti, e) for ti in t]) * om
        inertial = traj.v_eta + 0.5 * k * om + thdot
        target = 0.02 + 0.5 * k * om + om
        assert np.max(np.abs(inertial - target)) < 1e-8 * target

    def test_conservative_limit_energy_is_physical(self):
        # friction off: the energy modulation is physics, not integrator
        # error; halving the tolerance leaves the curves unchanged
        e, om, k = 0.05, 2 * math.pi, 1
        f = UnaveragedField(crust_torque=0.3, core_torque=0.2, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=e, omega=om, k=k)
        init = SpinState(0.0, 0.2, 0.05, -0.3, 0.02)
        t1 = integrate(f, init, 50.0, 1e-9, sample_dt=0.05)
        t2 = integrate(f, init, 50.0, 1e-10, sample_dt=0.05)
        assert np.max(np.abs(t1.gamma - t2.gamma)) < 1e-6
        assert np.max(np.abs(t1.v_gamma - t2.v_gamma)) < 1e-6


class TestMeanShellEnergy:
    def test_rate_dependence(self):
        f = UnaveragedField(crust_torque=0.3, core_torque=0.2, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=0.1, omega=2 * math.pi, k=1)
        s0 = SpinState(0.0, 0.2, 0.0, 0.0, 0.0)
        s1 = SpinState(0.0, 0.2, 0.3, 0.0, 0.0)
        spin = (0.5 * f.k + 1.0) * f.omega
        dE = dynamics.mean_shell_energy(s1, f, "crust") - \
            dynamics.mean_shell_energy(s0, f, "crust")
        assert dE == pytest.approx(0.5 * 0.3 ** 2 + spin * 0.3, rel=1e-12)

    def test_offsets_do_not_depend_on_state(self):
        f = UnaveragedField(crust_torque=0.3, core_torque=0.2, inv_tau_gamma=0.0,
                            inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                            e=0.1, omega=2 * math.pi, k=1)
        # potential part: difference between angle 0 and pi/2 equals
        # (torque/6) * 3 * a_k e^k
        s0 = SpinState(0.0, 0.0, 0.0, 0.0, 0.0)
        s1 = SpinState(0.0, math.pi / 2, 0.0, 0.0, 0.0)
        Ak = radius_cubed_harmonic(1, 0.1)
        dE = dynamics.mean_shell_energy(s1, f, "crust") - \
            dynamics.mean_shell_energy(s0, f, "crust")
        assert dE == pytest.approx((0.3 / 6.0) * 3.0 * Ak, rel=1e-12)


class TestIntegrate:
    def test_validation(self):
        c = coeffs()
        st = SpinState(0.0, 0.1, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            integrate(AveragedField(c), st, 1.0, 1e-2)
        with pytest.raises(ValueError):
            integrate(AveragedField(c), st, 1.0, 1e-13)
        with pytest.raises(ValueError):
            integrate(AveragedField(c), st, 0.0, 1e-8)

    def test_first_sample_is_initial_and_strictly_increasing(self, kernel_warm):
        c = coeffs()
        st = SpinState(0.0, 0.1, 0.3, -0.2, 0.05)
        traj = integrate(AveragedField(c), st, 5.0, 1e-8, sample_dt=0.25)
        assert traj.initial == st
        assert np.all(np.diff(traj.times) > 0)
        assert traj.times[-1] == pytest.approx(5.0)

    def test_conservative_energy_short(self, kernel_warm):
        c = coeffs(A_crust=1.0, A_core=0.0, inv_tau_gamma=0.0, inv_tau_eta=0.0,
                   inv_tau_eta_prime=0.0, drift=0.0)
        traj = integrate(AveragedField(c), SpinState(0.0, 0.1, 0.0, 0.0, 0.0),
                         500.0, 1e-10, sample_dt=1.0)
        E = 0.5 * traj.v_gamma ** 2 - 0.5 * np.cos(2 * traj.gamma)
        assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-9

    def test_dissipation_sign_without_drift(self, kernel_warm):
        # drift = 0: the total two-shell energy is non-increasing
        c = coeffs(drift=0.0)
        traj = integrate(AveragedField(c), SpinState(0.0, 0.9, 1.5, -1.1, 0.7),
                         100.0, 1e-10, sample_dt=0.05)
        E = np.array([dynamics.dissipative_energy(traj.state(i), c)
                      for i in range(len(traj))])
        assert np.all(np.diff(E) <= 1e-9 * max(1.0, abs(E[0])))

    def test_timescale_separation(self, kernel_warm):
        # crust gap |v_gamma - v_eta| halves within a factor 3 of
        # tau_gamma * ln 2 when tau_gamma/tau_eta <= 1e-3
        c = coeffs(A_crust=1.0, A_core=1e-4, inv_tau_gamma=2.0, inv_tau_eta=2e-3,
                   inv_tau_eta_prime=0.0, drift=0.0)
        traj = integrate(AveragedField(c), SpinState(0.0, 0.0, 8.0, 0.0, 0.0),
                         5.0, 1e-10, sample_dt=0.001)
        gap = np.abs(traj.v_gamma - traj.v_eta)
        t_half = traj.times[np.argmax(gap < 0.5 * gap[0])]
        expected = math.log(2.0) / c.inv_tau_gamma
        assert expected / 3.0 < t_half < expected * 3.0

    def test_step_halving_convergence(self, kernel_warm):
        # printed-coefficient scenario B: tol vs tol/10 changes the final
        # (gamma, eta) by less than 10*tol
        final = {}
        for tol in (1e-8, 1e-9):
            traj = integrate(AveragedField(EQ35_COEFFICIENTS),
                             SpinState(0.0, 0.1, 1000.0, 0.1, 5.0),
                             200.0, tol, sample_dt=200.0)
            final[tol] = np.array([traj.final.gamma, traj.final.eta])
        assert np.linalg.norm(final[1e-8] - final[1e-9]) < 10 * 1e-8

    def test_determinism(self, kernel_warm, tmp_path):
        c = coeffs()
        st = SpinState(0.0, 0.1, 0.3, -0.2, 0.05)
        t1 = integrate(AveragedField(c), st, 10.0, 1e-9, sample_dt=0.1)
        t2 = integrate(AveragedField(c), st, 10.0, 1e-9, sample_dt=0.1)
        assert np.array_equal(t1.data, t2.data)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        t1.to_csv(p1)
        t2.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dense_output_accuracy(self, kernel_warm):
        # sampled pendulum states match a tighter-tolerance reference
        c = coeffs(A_crust=1.0, A_core=0.0, inv_tau_gamma=0.0, inv_tau_eta=0.0,
                   inv_tau_eta_prime=0.0, drift=0.0)
        st = SpinState(0.0, 0.4, 0.0, 0.0, 0.0)
        a = integrate(AveragedField(c), st, 20.0, 1e-6, sample_dt=0.173)
        b = integrate(AveragedField(c), st, 20.0, 1e-11, sample_dt=0.173)
        assert np.max(np.abs(a.gamma - b.gamma)) < 2e-5

    def test_python_path_matches_kernel(self, kernel_warm):
        c = coeffs()
        st = SpinState(0.0, 0.3, 0.5, -0.1, 0.2)
        field = AveragedField(c)
        ker = integrate(field, st, 8.0, 1e-9, sample_dt=0.2)

        def plain(t, y):  # same equations through the generic python loop
            return field(t, y)

        py = integrate(plain, st, 8.0, 1e-9, sample_dt=0.2)
        assert np.max(np.abs(ker.data - py.data)) < 1e-8

    def test_decoupled_crust_uses_frozen_rate(self, kernel_warm):
        # overdamped crust: capture into the equilibrium angle is certain
        c = coeffs(inv_tau_gamma=3.0, inv_tau_eta=0.0, inv_tau_eta_prime=0.0)
        u = 0.5 * c.A_crust / c.inv_tau_gamma
        f = DecoupledCrustField(c, u)
        # initial state deliberately carries a different v_eta
        traj = integrate(f, SpinState(0.0, 0.0, u, 0.0, 999.0), 80.0, 1e-9,
                         sample_dt=0.1)
        assert np.all(traj.v_eta[1:] == u)
        gbar = 0.5 * math.asin(c.inv_tau_gamma * u / c.A_crust)
        assert traj.final.gamma == pytest.approx(gbar, abs=1e-4)

    def test_step_budget_error(self, kernel_warm):
        c = coeffs()
        with pytest.raises(IntegrationError):
            integrate(AveragedField(c), SpinState(0.0, 0.1, 0.0, 0.0, 0.0),
                      1000.0, 1e-10, max_steps=10)

    def test_trajectory_csv_stride(self, kernel_warm, tmp_path):
        c = coeffs()
        traj = integrate(AveragedField(c), SpinState(0.0, 0.1, 0.0, 0.0, 0.0),
                         10.0, 1e-8, sample_dt=0.1)
        path = tmp_path / "traj.csv"
        traj.to_csv(path, stride=7)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,gamma,v_gamma,eta,v_eta"
        assert lines[-1].startswith("10.0,")
        n_rows = len(traj.data[::7]) + (1 if (len(traj) - 1) % 7 else 0)
        assert len(lines) - 1 == n_rows

    def test_trajectory_stats(self, kernel_warm):
        c = coeffs()
        traj = integrate(AveragedField(c), SpinState(0.0, 0.1, 0.0, 0.0, 0.0),
                         10.0, 1e-8)
        s = traj.stats()
        assert s["steps_accepted"] == traj.naccepted
        assert s["rtol"] == 1e-8
        assert s["time_unit"] == "s"
