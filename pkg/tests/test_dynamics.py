import math

import numpy as np
import pytest

import nlspair as nl
from nlspair.dynamics import (
    DtPolicy,
    SolverConfig,
    boundary_mass_fraction,
    mass_ledger,
    rk4_reference,
    run,
    strang_step,
)
from nlspair.errors import ConfigError, GuardViolation
from nlspair.spectral import l2_norm

from conftest import gaussian_field, rel_l2


def rk4_pointwise(u1, u2, dt, n_sub):
    """Independent oracle: classical RK4 on the pointwise amplitude ODE."""
    h = dt / n_sub

    def f(v):
        return np.array([-abs(v[1]) ** 2 * v[0], -abs(v[0]) ** 2 * v[1]])

    v = np.array([u1, u2], dtype=complex)
    for _ in range(n_sub):
        k1 = f(v)
        k2 = f(v + 0.5 * h * k1)
        k3 = f(v + 0.5 * h * k2)
        k4 = f(v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def make_pair(grid, amps=(0.4, 0.25), widths=(3.0, 4.0), vel2=0.2, t=0.0):
    u1 = gaussian_field(grid, amps[0], widths[0], time=t)
    u2 = gaussian_field(grid, amps[1], widths[1], velocity=vel2, time=t)
    return nl.FieldPair(u1, u2)


class TestNonlinearSubstep:
    def test_second_component_zero_is_identity(self, small_grid):
        u1 = gaussian_field(small_grid, 0.8, 2.0)
        zero = nl.ComplexField(small_grid, np.zeros(small_grid.n_points), 0.0)
        out = nl.nonlinear_substep(nl.FieldPair(u1, zero), 0.7)
        assert np.array_equal(out.u1.values, u1.values)
        assert np.all(out.u2.values == 0)

    def test_balanced_closed_form(self, small_grid):
        u = gaussian_field(small_grid, 0.9, 2.0, velocity=0.3)
        out = nl.nonlinear_substep(nl.FieldPair(u, u), 0.5)
        a0 = np.abs(u.values) ** 2
        expected = a0 / (1.0 + 2.0 * a0 * 0.5)
        assert np.max(np.abs(np.abs(out.u1.values) ** 2 - expected)) < 1e-14

    def test_generic_point_against_rk4(self, small_grid):
        n = small_grid.n_points
        u1 = np.full(n, math.sqrt(2.0) * np.exp(0.7j))
        u2 = np.full(n, 1.0 * np.exp(-0.3j))
        pair = nl.FieldPair(nl.ComplexField(small_grid, u1, 0.0),
                            nl.ComplexField(small_grid, u2, 0.0))
        out = nl.nonlinear_substep(pair, 0.3)
        ref = rk4_pointwise(u1[0], u2[0], 0.3, 10_000)
        assert abs(out.u1.values[0] - ref[0]) < 1e-10
        assert abs(out.u2.values[0] - ref[1]) < 1e-10
        a = abs(out.u1.values[0]) ** 2
        b = abs(out.u2.values[0]) ** 2
        assert abs((a - b) - 1.0) < 1e-13

    def test_pointwise_difference_conserved(self, small_grid, rng):
        n = small_grid.n_points
        u1 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        u2 = 0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        pair = nl.FieldPair(nl.ComplexField(small_grid, u1, 0.0),
                            nl.ComplexField(small_grid, u2, 0.0))
        out = nl.nonlinear_substep(pair, 0.4)
        m0 = np.abs(u1) ** 2 - np.abs(u2) ** 2
        m1 = np.abs(out.u1.values) ** 2 - np.abs(out.u2.values) ** 2
        assert np.max(np.abs(m1 - m0)) <= 1e-13 * np.max(1.0 + np.abs(m0))

    def test_phases_untouched(self, small_grid, rng):
        n = small_grid.n_points
        u1 = np.exp(1j * rng.uniform(-3, 3, n)) * rng.uniform(0.1, 2.0, n)
        u2 = np.exp(1j * rng.uniform(-3, 3, n)) * rng.uniform(0.1, 2.0, n)
        pair = nl.FieldPair(nl.ComplexField(small_grid, u1, 0.0),
                            nl.ComplexField(small_grid, u2, 0.0))
        out = nl.nonlinear_substep(pair, 0.9)
        for before, after in ((u1, out.u1.values), (u2, out.u2.values)):
            mask = np.abs(after) > 1e-12
            dphase = np.angle(after[mask] / before[mask])
            assert np.max(np.abs(dphase)) < 1e-12

    def test_backward_rejected(self, small_grid):
        pair = make_pair(small_grid)
        with pytest.raises(ValueError):
            nl.nonlinear_substep(pair, -0.1)


class TestStrangStep:
    def test_zero_field(self, small_grid):
        zero = nl.ComplexField(small_grid, np.zeros(small_grid.n_points), 0.0)
        out = strang_step(nl.FieldPair(zero, zero), 0.0, 0.05)
        assert np.all(out.u1.values == 0) and np.all(out.u2.values == 0)

    def test_decoupled_equals_free_flow(self, small_grid):
        u1 = gaussian_field(small_grid, 0.8, 2.0)
        zero = nl.ComplexField(small_grid, np.zeros(small_grid.n_points), 0.0)
        out = strang_step(nl.FieldPair(u1, zero), 0.0, 0.25)
        free = nl.free_propagate(u1, 0.25)
        assert rel_l2(small_grid, out.u1.values, free.values) < 1e-13

    def test_richardson_order(self, small_grid):
        pair = make_pair(small_grid, amps=(0.5, 0.3))
        dt = 0.01
        one = strang_step(pair, 0.0, dt)
        two = strang_step(strang_step(pair, 0.0, dt / 2), dt / 2, dt / 2)
        cfg = SolverConfig(n_points=small_grid.n_points, length=small_grid.length,
                           t_start=0.0, t_end=dt, dt_policy=DtPolicy.fixed(1e-4),
                           checkpoint_times=(dt,), scheme="rk4_reference")
        ref = rk4_reference(cfg, pair).checkpoints[-1].pair
        e1 = rel_l2(small_grid, one.u1.values, ref.u1.values)
        e2 = rel_l2(small_grid, two.u1.values, ref.u1.values)
        order = math.log2(e1 / e2)
        assert order >= 1.9


class TestMassLedger:
    def test_zero(self, small_grid):
        zero = nl.ComplexField(small_grid, np.zeros(small_grid.n_points), 0.0)
        led = mass_ledger(nl.FieldPair(zero, zero))
        assert led.mass1 == led.mass2 == led.diff == led.interaction == 0.0

    def test_disjoint_supports(self, small_grid):
        left = np.where(small_grid.x < 0, 1.0 + 0j, 0.0)
        right = np.where(small_grid.x >= 0, 1.0 + 0j, 0.0)
        led = mass_ledger(nl.FieldPair(nl.ComplexField(small_grid, left, 0.0),
                                       nl.ComplexField(small_grid, right, 0.0)))
        assert led.interaction == 0.0

    def test_unit_gaussian_interaction(self, transform_grid):
        from scipy.integrate import quad
        u = gaussian_field(transform_grid)
        led = mass_ledger(nl.FieldPair(u, u))
        closed_form = math.sqrt(math.pi / 2.0)
        oracle, _ = quad(lambda x: np.exp(-2 * x ** 2), -np.inf, np.inf)
        assert led.interaction == pytest.approx(closed_form, rel=1e-12)
        assert led.interaction == pytest.approx(oracle, rel=1e-10)


class TestRun:
    def _config(self, t_end=100.0, **kw):
        base = dict(n_points=512, length=320.0, t_start=0.0, t_end=t_end,
                    checkpoint_times=tuple([0.0] + list(np.geomspace(2.0, t_end, 24))))
        base.update(kw)
        return SolverConfig(**base)

    def _data(self, cfg, amps=(0.15, 0.075)):
        g = cfg.grid
        return nl.FieldPair(gaussian_field(g, amps[0], 4.0),
                            gaussian_field(g, amps[1], 6.0, velocity=0.1))

    def test_zero_data_stays_zero(self):
        cfg = self._config(t_end=20.0)
        g = cfg.grid
        zero = nl.ComplexField(g, np.zeros(g.n_points), 0.0)
        traj = run(cfg, nl.FieldPair(zero, zero))
        assert all(c.ledger.mass1 == 0 and c.ledger.mass2 == 0 for c in traj.checkpoints)

    def test_mass_monotone_and_difference_conserved(self):
        cfg = self._config()
        traj = run(cfg, self._data(cfg))
        ledgers = traj.ledgers()
        total = [l.mass1 + l.mass2 for l in ledgers]
        assert all(b <= a + 1e-12 for a, b in zip(total, total[1:]))
        drift = max(abs(l.diff - ledgers[0].diff) for l in ledgers)
        assert drift <= 1e-8 * total[0]

    def test_ledger_consistent_with_pair(self):
        cfg = self._config(t_end=10.0)
        traj = run(cfg, self._data(cfg))
        for cp in traj.checkpoints:
            again = mass_ledger(cp.pair)
            assert again.mass1 == pytest.approx(cp.ledger.mass1, rel=1e-12)
            assert again.interaction == pytest.approx(cp.ledger.interaction, rel=1e-12)

    def test_checkpoint_times_exact(self):
        cfg = self._config(t_end=50.0)
        traj = run(cfg, self._data(cfg))
        assert np.allclose(traj.times(), cfg.resolved_checkpoints(), rtol=0, atol=1e-9)

    def test_guard_trips_on_fast_packet(self):
        # a strongly modulated packet exits a short box quickly
        cfg = SolverConfig(n_points=256, length=80.0, t_start=0.0, t_end=200.0,
                           checkpoint_times=tuple(np.linspace(5.0, 200.0, 20)))
        g = cfg.grid
        pair = nl.FieldPair(gaussian_field(g, 0.2, 3.0, velocity=1.0),
                            gaussian_field(g, 0.1, 3.0, velocity=-1.0))
        with pytest.raises(GuardViolation) as exc:
            run(cfg, pair)
        assert exc.value.time <= 200.0
        assert exc.value.fraction > cfg.boundary_mass_tol

    def test_boundary_fraction_of_centered_data(self, small_grid):
        pair = make_pair(small_grid)
        assert boundary_mass_fraction(pair) < 1e-12

    def test_dissipation_rate_second_order(self, small_grid):
        # each component loses mass at rate 2 * interaction; the total at 4x.
        # residual of the integrated law must shrink at second order in dt
        pair0 = make_pair(small_grid)

        def residuals(dt, T=2.0):
            pair = pair0
            ledgers = [mass_ledger(pair)]
            t = 0.0
            for _ in range(round(T / dt)):
                pair = strang_step(pair, t, dt)
                t += dt
                ledgers.append(mass_ledger(pair))
            ts = np.array([l.t for l in ledgers])
            inter = np.trapezoid([l.interaction for l in ledgers], ts)
            m1 = ledgers[-1].mass1 - ledgers[0].mass1
            m2 = ledgers[-1].mass2 - ledgers[0].mass2
            return abs(m1 + 2 * inter), abs(m2 + 2 * inter), abs(m1 + m2 + 4 * inter)

        coarse = residuals(0.04)
        mid = residuals(0.02)
        fine = residuals(0.01)
        for k in range(3):
            assert math.log2(coarse[k] / mid[k]) >= 1.9
            assert math.log2(mid[k] / fine[k]) >= 1.9


class TestRk4Reference:
    def _config(self, **kw):
        base = dict(n_points=256, length=120.0, t_start=0.0, t_end=5.0,
                    dt_policy=DtPolicy.fixed(0.01), checkpoint_times=(5.0,),
                    scheme="rk4_reference")
        base.update(kw)
        return SolverConfig(**base)

    def test_zero_data(self):
        cfg = self._config()
        g = cfg.grid
        zero = nl.ComplexField(g, np.zeros(g.n_points), 0.0)
        traj = rk4_reference(cfg, nl.FieldPair(zero, zero))
        assert traj.checkpoints[-1].ledger.mass1 == 0.0

    def test_decoupled_matches_free_flow(self):
        cfg = self._config()
        g = cfg.grid
        u1 = gaussian_field(g, 0.3, 3.0)
        zero = nl.ComplexField(g, np.zeros(g.n_points), 0.0)
        traj = rk4_reference(cfg, nl.FieldPair(u1, zero))
        out = traj.checkpoints[-1].pair.u1
        free = nl.free_propagate(u1, 5.0)
        assert rel_l2(g, out.values, free.values) < 1e-8

    def test_agrees_with_strang(self):
        cfg_r = self._config(t_end=10.0, checkpoint_times=(10.0,),
                             dt_policy=DtPolicy.fixed(0.005))
        cfg_s = SolverConfig(n_points=256, length=120.0, t_start=0.0, t_end=10.0,
                             dt_policy=DtPolicy.fixed(0.005), checkpoint_times=(10.0,))
        g = cfg_s.grid
        pair = nl.FieldPair(gaussian_field(g, 0.1, 3.0),
                            gaussian_field(g, 0.05, 4.0, velocity=0.15))
        a = run(cfg_s, pair).checkpoints[-1].pair
        b = rk4_reference(cfg_r, pair).checkpoints[-1].pair
        num = math.hypot(
            l2_norm(nl.ComplexField(g, a.u1.values - b.u1.values, 10.0)),
            l2_norm(nl.ComplexField(g, a.u2.values - b.u2.values, 10.0)),
        )
        den = math.hypot(l2_norm(a.u1), l2_norm(a.u2))
        assert num / den < 1e-6

    def test_conservative_coupling_preserves_mass(self):
        cfg = self._config(coupling="conservative")
        g = cfg.grid
        pair = nl.FieldPair(gaussian_field(g, 0.2, 3.0),
                            gaussian_field(g, 0.15, 4.0))
        traj = rk4_reference(cfg, pair)
        m0 = mass_ledger(pair)
        mT = traj.checkpoints[-1].ledger
        assert mT.mass1 + mT.mass2 == pytest.approx(m0.mass1 + m0.mass2, rel=1e-10)

    def test_conservative_needs_rk4(self):
        with pytest.raises(ConfigError):
            SolverConfig(n_points=256, length=120.0, t_end=5.0,
                         coupling="conservative", scheme="strang_exact")


class TestConfigValidation:
    def test_bad_time_window(self):
        with pytest.raises(ConfigError):
            SolverConfig(n_points=256, length=100.0, t_start=5.0, t_end=5.0)

    def test_checkpoints_outside_window(self):
        with pytest.raises(ConfigError):
            SolverConfig(n_points=256, length=100.0, t_end=10.0,
                         checkpoint_times=(2.0, 20.0))

    def test_checkpoints_not_increasing(self):
        with pytest.raises(ConfigError):
            SolverConfig(n_points=256, length=100.0, t_end=10.0,
                         checkpoint_times=(5.0, 2.0))

    def test_dt_policy_kinds(self):
        assert DtPolicy.fixed(0.1).dt_at(100.0) == 0.1
        pol = DtPolicy()
        assert pol.dt_at(1.0) == pol.dt
        assert pol.dt_at(100.0) == pytest.approx(0.1)
        assert pol.dt_at(1e4) == pol.dt_cap
        with pytest.raises(ConfigError):
            DtPolicy(kind="unknown")

    def test_default_checkpoints_start_at_two(self):
        cfg = SolverConfig(n_points=256, length=100.0, t_end=50.0)
        cps = cfg.resolved_checkpoints()
        assert cps[0] == pytest.approx(2.0)
        assert cps[-1] == pytest.approx(50.0)
        assert len(cps) == 40


class TestDeterminism:
    def test_identical_runs_bitwise(self):
        cfg = SolverConfig(n_points=256, length=160.0, t_end=20.0,
                           checkpoint_times=(2.0, 10.0, 20.0))
        g = cfg.grid
        pair = nl.FieldPair(gaussian_field(g, 0.2, 3.0),
                            gaussian_field(g, 0.1, 4.0, velocity=0.1))
        a = run(cfg, pair)
        b = run(cfg, pair)
        for ca, cb in zip(a.checkpoints, b.checkpoints):
            assert np.array_equal(ca.pair.u1.values, cb.pair.u1.values)
            assert np.array_equal(ca.pair.u2.values, cb.pair.u2.values)
            assert ca.ledger == cb.ledger
