import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rk4_fixed
from threewave.core import SAME_SIGN, ComplexTriple, CouplingSignature, VelocitySet
from threewave.ode import Termination, integrate
from threewave.pde import (
    BlowUpReached,
    PeriodicDomain,
    PhaseFreezeMonitor,
    TransportInvariantMonitor,
    TriadField,
    advect,
    chain,
    estimate_field_blowup_time,
    grid_min_amplitude,
    integral_invariants,
    nonlinear_step,
    pointwise_transport_invariants,
    read_snapshot,
    riccati_lower_bound,
    run_pde,
    spectral_tail,
    step_strang,
    write_snapshot,
)
from threewave.scenarios import InitialConditionSpec, generate, preset_velocities

MIXED = CouplingSignature(1, -1, -1)
LINE = PeriodicDomain((math.pi,))
SIXTH = cmath.exp(1j * math.pi / 6)


def smooth_triple(domain, n, seed=0):
    """Three smooth periodic complex fields built from a few low modes."""
    rng = np.random.default_rng(seed)
    x = domain.axes((n,))[0]
    a = domain.half_widths[0]
    data = []
    for j in range(3):
        u = 0.8 + 0j
        for m in (1, 2, 3):
            c = (rng.normal() + 1j * rng.normal()) * 0.1 / m
            u = u + c * np.exp(1j * math.pi * m * x / a)
        data.append(u)
    return TriadField(domain, np.array(data))


class TestDomain:
    def test_grid(self):
        d = PeriodicDomain((2.0,))
        x = d.axes((8,))[0]
        assert x[0] == -2.0 and x[1] - x[0] == pytest.approx(0.5)
        assert d.spacing((8,)) == (0.5,)
        assert d.measure == 4.0

    def test_bad_widths(self):
        with pytest.raises(ValueError):
            PeriodicDomain((0.0,))
        with pytest.raises(ValueError):
            PeriodicDomain((1.0, 1.0, 1.0))

    def test_power_of_two(self):
        with pytest.raises(ValueError):
            TriadField(LINE, np.ones((3, 12), dtype=complex))

    def test_non_finite_rejected(self):
        data = np.ones((3, 8), dtype=complex)
        data[1, 3] = np.nan
        with pytest.raises(ValueError):
            TriadField(LINE, data)


class TestAdvect:
    def test_constant_field(self):
        u = np.full(64, 1.5 - 0.5j)
        w = advect(u, (0.7,), 0.3, LINE)
        assert np.abs(w - u).max() <= 1e-15

    def test_single_mode(self):
        a, n, kappa = 2.0, 64, 3
        d = PeriodicDomain((a,))
        x = d.axes((n,))[0]
        k = math.pi * kappa / a
        s = 0.37
        w = advect(np.exp(1j * k * x), (s,), 1.0, d)
        assert np.abs(w - np.exp(1j * k * (x - s))).max() < 1e-12

    def test_one_cell(self):
        n = 32
        dx = LINE.spacing((n,))[0]
        u = np.random.default_rng(0).normal(size=n) + 0j
        w = advect(u, (dx,), 1.0, LINE)
        assert np.abs(w - np.roll(u, 1)).max() < 1e-12

    def test_two_dimensional_shift(self):
        d = PeriodicDomain((1.0, 2.0))
        X, Y = d.mesh((32, 16))
        u = np.exp(1j * math.pi * (2 * X / 1.0 - Y / 2.0))
        w = advect(u, (0.3, -0.4), 0.5, d)
        want = np.exp(1j * math.pi * (2 * (X - 0.15) / 1.0 - (Y + 0.2) / 2.0))
        assert np.abs(w - want).max() < 1e-12

    @settings(max_examples=30)
    @given(st.floats(-10, 10), st.integers(0, 2 ** 16))
    def test_l2_isometry(self, shift, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=64) + 1j * rng.normal(size=64)
        w = advect(u, (shift,), 1.0, LINE)
        assert abs(np.linalg.norm(w) - np.linalg.norm(u)) / np.linalg.norm(u) < 1e-13

    def test_negative_time_inverts(self):
        u = smooth_triple(LINE, 64).data[0]
        back = advect(advect(u, (0.9,), 0.4, LINE), (0.9,), -0.4, LINE)
        assert np.abs(back - u).max() < 1e-13

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            advect(np.ones(8, dtype=complex), (1.0, 0.0), 0.1, LINE)


class TestNonlinearStep:
    def test_equilibrium_unchanged(self):
        f = TriadField.uniform(LINE, (16,), (0, 0, 3))
        assert np.array_equal(nonlinear_step(f, SAME_SIGN, 0.1).data, f.data)

    def test_uniform_field_matches_single_point(self):
        f = TriadField.uniform(LINE, (16,), (SIXTH, SIXTH, SIXTH))
        out = nonlinear_step(f, SAME_SIGN, 0.1).data
        ref = rk4_fixed([SIXTH] * 3, 0.1, 1)
        assert np.abs(out - ref[:, None]).max() < 1e-15
        assert np.abs(out - out[:, :1]).max() == 0

    def test_fourth_order(self):
        f = smooth_triple(LINE, 32)
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            one = nonlinear_step(f, MIXED, dt).data
            ref = f
            for _ in range(100):
                ref = nonlinear_step(ref, MIXED, dt / 100)
            errs.append(np.abs(one - ref.data).max())
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        # a single step carries local error O(dt^5); global order 4 follows
        assert np.all(orders > 4.5)

    def test_blow_up_signal(self):
        f = TriadField.uniform(LINE, (8,), (1e200, 1e200, 1e200))
        with pytest.raises(BlowUpReached) as exc:
            nonlinear_step(f, SAME_SIGN, 1.0)
        assert exc.value.index == (0,)

    def test_dt_must_be_positive(self):
        with pytest.raises(ValueError):
            nonlinear_step(TriadField.uniform(LINE, (8,), (1, 1, 1)), SAME_SIGN, 0.0)


class TestStrang:
    def test_zero_velocity_is_nonlinear_step(self):
        f = smooth_triple(LINE, 64)
        zero = ((0.0,), (0.0,), (0.0,))
        a = step_strang(f, SAME_SIGN, zero, 1e-2).data
        b = nonlinear_step(f, SAME_SIGN, 1e-2).data
        assert np.array_equal(a, b)

    def test_equal_velocity_galilean_shift(self):
        d = PeriodicDomain((math.pi,))
        f0 = smooth_triple(d, 256, seed=5)
        v = VelocitySet((0.7,), (0.7,), (0.7,))
        moving = run_pde(f0, MIXED, v, tau_end=1.0, dt=1e-3, sample_interval=1.0).final
        still = f0
        for _ in range(1000):
            still = nonlinear_step(still, MIXED, 1e-3)
        shifted = np.stack([advect(still.data[j], (0.7,), 1.0, d) for j in range(3)])
        assert np.abs(moving.data - shifted).max() < 1e-8

    def test_second_order_global(self):
        f0 = smooth_triple(LINE, 64, seed=2)
        v = VelocitySet((1.0,), (-0.5,), (0.25,))

        def run(dt):
            return run_pde(f0, SAME_SIGN, v, tau_end=1.0, dt=dt, sample_interval=1.0).final.data

        ref = run(2.5e-4)
        errs = [np.abs(run(dt) - ref).max() for dt in (4e-3, 2e-3, 1e-3)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)


class TestInvariantsAndMinimum:
    def test_constant_field(self):
        d = PeriodicDomain((1.0,))
        f = TriadField.uniform(d, (16,), (2, 1, 0))
        assert integral_invariants(f) == pytest.approx((6.0, 8.0), abs=1e-14)

    def test_zero_field(self):
        assert integral_invariants(TriadField.uniform(LINE, (8,), (0, 0, 0))) == (0.0, 0.0)

    def test_drift_on_mixed_velocity_run(self):
        f0 = smooth_triple(LINE, 256, seed=11)
        v = VelocitySet((1.0,), (-0.5,), (0.25,))
        traj = run_pde(f0, SAME_SIGN, v, tau_end=1.0, dt=1e-3, sample_interval=0.05)
        assert traj.termination is Termination.COMPLETED
        assert traj.invariant_drift().max() < 1e-6

    def test_min_amplitude_constant(self):
        f = TriadField.uniform(LINE, (8,), (2, 1, 0.5))
        assert grid_min_amplitude(f) == 0.5

    def test_min_amplitude_modulated(self):
        x = LINE.axes((128,))[0]
        data = np.stack([1.5 + 0.5 * np.sin(x), np.full(128, 3.0), np.full(128, 3.0)]).astype(complex)
        assert grid_min_amplitude(TriadField(LINE, data)) == pytest.approx(1.0, abs=1e-3)

    def test_spectral_tail_clean_and_dirty(self):
        assert spectral_tail(smooth_triple(LINE, 64)) < 1e-25
        rng = np.random.default_rng(0)
        noisy = TriadField(LINE, rng.normal(size=(3, 64)) + 0j)
        assert spectral_tail(noisy) > 0.1


class TestRiccatiBound:
    def test_start(self):
        assert riccati_lower_bound(1.0, 0.0, 0.0) == pytest.approx(0.99)

    def test_diverges_at_singularity(self):
        assert riccati_lower_bound(1.0, 0.0, 1 / 0.99 - 1e-9) > 1e6
        with pytest.raises(ValueError):
            riccati_lower_bound(1.0, 0.0, 1 / 0.99)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            riccati_lower_bound(0.0, 0.0, 0.1)
        with pytest.raises(ValueError):
            riccati_lower_bound(1.0, 1.0, 0.5)


class TestRunPde:
    def test_theorem3_preset_blows_up_in_time(self):
        spec = InitialConditionSpec(preset="theorem3_blowup")
        f0 = generate(spec, 42)
        v = preset_velocities("theorem3_blowup", 1, {})
        traj = run_pde(f0, SAME_SIGN, v, tau_end=2.0)
        assert traj.termination is Termination.BLOWUP
        assert traj.t_star_estimate <= 1.0 / grid_min_amplitude(f0) + 0.1
        assert traj.blowup_location is not None

    def test_uniform_field_tracks_ode(self):
        d = PeriodicDomain((1.0,))
        a0 = (0.5 + 0.2j, 0.3 - 0.1j, 0.4j)
        f0 = TriadField.uniform(d, (8,), a0)
        v = VelocitySet((1.0,), (-2.0,), (0.5,))
        traj = run_pde(f0, SAME_SIGN, v, tau_end=1.0, dt=1e-3, sample_interval=1.0)
        ode = integrate(ComplexTriple(*a0), tau_end=1.0, tol=1e-12).final
        assert np.abs(traj.final.data - np.array(list(ode))[:, None]).max() < 1e-8

    def test_drift_abort(self):
        f0 = smooth_triple(LINE, 64, seed=3)
        v = VelocitySet((1.0,), (-0.5,), (0.25,))
        traj = run_pde(f0, SAME_SIGN, v, tau_end=1.0, dt=1e-2, drift_abort_tol=1e-16)
        assert traj.termination is Termination.DRIFT_ABORT
        assert "drift" in traj.message

    def test_resolution_abort(self):
        rng = np.random.default_rng(1)
        rough = TriadField(LINE, 0.5 + 0.1 * rng.normal(size=(3, 64)) + 0j)
        v = VelocitySet((1.0,), (-0.5,), (0.25,))
        traj = run_pde(rough, MIXED, v, tau_end=0.1, dt=1e-2)
        assert traj.termination is Termination.RESOLUTION_ABORT

    def test_times_strictly_increasing(self):
        f0 = smooth_triple(LINE, 32)
        traj = run_pde(f0, MIXED, VelocitySet((1.0,), (1.0,), (1.0,)), tau_end=0.2, dt=1e-2,
                       sample_interval=0.05)
        assert np.all(np.diff(traj.times) > 0)
        assert len(traj.times) == 5

    def test_field_blowup_estimate_needs_samples(self):
        f0 = smooth_triple(LINE, 32)
        traj = run_pde(f0, MIXED, VelocitySet((1.0,), (1.0,), (1.0,)), tau_end=0.02, dt=1e-2)
        with pytest.raises(Exception):
            estimate_field_blowup_time(traj)

    def test_velocity_dimension_checked(self):
        with pytest.raises(ValueError):
            run_pde(smooth_triple(LINE, 16), SAME_SIGN, VelocitySet((1, 0), (1, 0), (1, 0)), tau_end=0.1)


class TestMonitors:
    def test_uniform_data_transport_sums_constant(self):
        f0 = TriadField.uniform(LINE, (16,), (0.9, 0.5j, 0.3 + 0.3j))
        rep = pointwise_transport_invariants(f0, MIXED, VelocitySet((0.5,), (0.5,), (0.5,)), tau_end=2.0, dt=1e-3)
        assert rep.applicable
        assert max(rep.max_defect_k1, rep.max_defect_k2) < 1e-10

    def test_not_applicable(self):
        f0 = TriadField.uniform(LINE, (16,), (1, 1, 1))
        assert not pointwise_transport_invariants(f0, SAME_SIGN, VelocitySet((1,), (1,), (1,)), tau_end=0.1).applicable
        assert not pointwise_transport_invariants(f0, MIXED, VelocitySet((1,), (2,), (1,)), tau_end=0.1).applicable

    def test_defect_converges_at_least_second_order(self):
        spec = InitialConditionSpec(preset="theorem1_bounded")
        f0 = generate(spec, 7, domain=LINE, resolution=(128,))
        v = preset_velocities("theorem1_bounded", 1, {})
        defects = []
        for dt in (0.04, 0.02, 0.01):
            rep = pointwise_transport_invariants(f0, MIXED, v, tau_end=2.0, dt=dt)
            defects.append(max(rep.max_defect_k1, rep.max_defect_k2))
        orders = np.log2(np.array(defects[:-1]) / np.array(defects[1:]))
        assert np.all(orders >= 2.0)

    def test_phase_freeze_monitor(self):
        mon = PhaseFreezeMonitor()
        f = TriadField.uniform(LINE, (8,), (1j, 1, 1))
        mon(0.0, f)
        mon(0.1, TriadField.uniform(LINE, (8,), (0, 1, 1)))
        assert mon.devs[0] < 1e-15 and math.isnan(mon.devs[1])
        assert mon.max_dev == mon.devs[0]

    def test_chain_skips_none(self):
        seen = []
        hook = chain(None, lambda t, f: seen.append(t), None)
        hook(0.5, None)
        assert seen == [0.5]

    def test_monitor_bounds(self):
        f0 = TriadField.uniform(LINE, (8,), (1, 1, 2))
        mon = TransportInvariantMonitor(f0, MIXED, VelocitySet((1,), (1,), (1,)))
        assert np.allclose(mon.bounds, [math.sqrt(2), math.sqrt(2), math.sqrt(5)])


class TestSnapshots:
    def test_round_trip_1d(self, tmp_path):
        f = smooth_triple(LINE, 16)
        path = tmp_path / "snap.txt"
        write_snapshot(path, f, 0.25)
        g, tau = read_snapshot(path)
        assert tau == 0.25
        assert np.array_equal(g.data, f.data)
        assert g.domain.half_widths == f.domain.half_widths

    def test_round_trip_2d(self, tmp_path):
        d = PeriodicDomain((1.0, 2.0))
        rng = np.random.default_rng(0)
        f = TriadField(d, rng.normal(size=(3, 4, 8)) + 1j * rng.normal(size=(3, 4, 8)))
        write_snapshot(tmp_path / "s.txt", f, 1.5)
        g, _ = read_snapshot(tmp_path / "s.txt")
        assert np.array_equal(g.data, f.data)

    def test_rejects_other_files(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("hello\n")
        with pytest.raises(ValueError):
            read_snapshot(p)
