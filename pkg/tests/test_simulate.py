import math

import numpy as np
import pytest

from phs_stab.coefficients import (
    CoefficientSet,
    JumpMeasureSpec,
    MarkDistribution,
    QWienerSpec,
    constant_diffusion,
    constant_drift,
    constant_jump,
    linear_diffusion,
    linear_drift,
    zero_diffusion,
    zero_drift,
    zero_jump,
)
from phs_stab.noise import JumpBatch, derive_stream
from phs_stab.simulate import (
    SimConfig,
    SimulationAborted,
    energy,
    integrate,
    integrate_coupled,
    integrate_ensemble,
    mean_energy,
    mean_square_gap,
    mean_state,
    step,
)
from phs_stab.space import BlockOperator, SpaceDecomposition, build_damped_wave_chain, propagator

SP = SpaceDecomposition(1, 1)
NO_JUMP = JumpBatch(0, np.zeros((0, 1)))


def rotation(damping):
    return BlockOperator([[damping]], [[damping]], [[1.0]], [[-1.0]]).assemble()


def additive(space, C, q_half=None):
    C = np.asarray(C, dtype=float)
    w = None if q_half is None else QWienerSpec(q_half)
    return CoefficientSet(zero_drift(space), constant_diffusion(space, C), zero_jump(space), wiener=w)


class TestConfig:
    def test_step_count_rounds_up(self):
        assert SimConfig(dt=0.3, t_end=1.0).n_steps == 4

    def test_recorded_times(self):
        cfg = SimConfig(dt=0.1, t_end=1.0, record_every=3)
        t = cfg.times()
        assert t[0] == 0 and np.all(np.diff(t) > 0) and t[-1] == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [dict(dt=0.0, t_end=1.0), dict(dt=2.0, t_end=1.0),
                                    dict(dt=0.1, t_end=1.0, n_paths=0),
                                    dict(dt=0.1, t_end=1.0, record_every=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)


class TestStep:
    def test_pure_semigroup(self):
        x = np.array([0.7, -1.3])
        out = step(x, -np.eye(2), CoefficientSet.zero(SP), 0.25, np.zeros(2), NO_JUMP)
        np.testing.assert_allclose(out, math.exp(-0.25) * x, rtol=1e-15)

    def test_constant_drift_euler(self):
        c = np.array([2.0, -1.0])
        coeffs = CoefficientSet.zero(SP).with_(drift=constant_drift(SP, c))
        out = step(np.array([1.0, 1.0]), np.zeros((2, 2)), coeffs, 0.1, np.zeros(2), NO_JUMP)
        np.testing.assert_allclose(out, [1.2, 0.9], rtol=1e-15)

    def test_jump_and_compensator(self):
        c = np.array([0.0, 1.0])
        mu = JumpMeasureSpec(2.0, MarkDistribution("constant", 1, {"value": 1.0}))
        coeffs = CoefficientSet.zero(SP).with_(jump=constant_jump(SP, c), jump_measure=mu)
        batch = JumpBatch(3, np.ones((3, 1)))
        out = step(np.zeros(2), np.zeros((2, 2)), coeffs, 0.1, np.zeros(2), batch)
        np.testing.assert_allclose(out, 3 * c - 2.0 * 0.1 * c, atol=1e-15)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            step(np.zeros(2), -np.eye(2), CoefficientSet.zero(SP), 0.0, np.zeros(2), NO_JUMP)

    def test_overflow_aborts(self):
        with pytest.raises(SimulationAborted):
            step(np.array([1e300, 1e300]), np.eye(2), CoefficientSet.zero(SP), 1.0,
                 np.zeros(2), NO_JUMP)


class TestIntegrate:
    def test_exponential_decay_closed_form(self):
        x0 = np.array([1.5, -0.5])
        cfg = SimConfig(dt=0.01, t_end=3.0, record_every=7)
        traj = integrate(x0, -np.eye(2), CoefficientSet.zero(SP), cfg)
        expect = np.exp(-traj.times)[:, None] * x0
        np.testing.assert_allclose(traj.states, expect, rtol=1e-10, atol=0)

    def test_rotation_norm_decay(self):
        x0 = np.array([1.0, 2.0])
        cfg = SimConfig(dt=0.05, t_end=10.0)
        traj = integrate(x0, rotation(0.1), CoefficientSet.zero(SP), cfg)
        norms = np.linalg.norm(traj.states, axis=1)
        np.testing.assert_allclose(norms, np.exp(-0.1 * traj.times) * np.linalg.norm(x0),
                                   rtol=1e-8, atol=0)

    def test_conservative_energy(self):
        blocks = build_damped_wave_chain(3, 0.0, 0.0, 1.7)
        cfg = SimConfig(dt=0.01, t_end=5.0, record_every=10)
        x0 = np.linspace(-1, 1, 6)
        traj = integrate(x0, blocks.assemble(), CoefficientSet.zero(blocks.space), cfg)
        np.testing.assert_allclose(energy(traj.states), energy(x0), rtol=1e-8, atol=0)

    def test_energy_dissipation(self):
        blocks = build_damped_wave_chain(3, 0.4, 0.0, 1.0)
        cfg = SimConfig(dt=0.01, t_end=5.0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            traj = integrate(rng.standard_normal(6), blocks.assemble(),
                             CoefficientSet.zero(blocks.space), cfg)
            e = energy(traj.states)
            assert np.all(np.diff(e) <= 1e-14 * e[0])

    def test_ou_stationary_variance(self):
        # dX = -X dt + dW on the second coordinate
        coeffs = additive(SP, [[0.0], [1.0]])
        cfg = SimConfig(dt=0.005, t_end=6.0, n_paths=10_000, seed=11, record_every=100)
        ens = integrate_ensemble(np.zeros(2), -np.eye(2), coeffs, cfg)
        x = ens.at(6.0)[:, 1]
        var = x.var(ddof=1)
        se = var * math.sqrt(2 / (len(x) - 1))
        assert abs(var - 0.5) <= 3 * se
        assert np.all(ens.at(6.0)[:, 0] == 0)

    def test_deterministic_given_seed(self):
        coeffs = additive(SP, np.eye(2))
        cfg = SimConfig(dt=0.01, t_end=1.0, seed=4)
        a = integrate(np.ones(2), -np.eye(2), coeffs, cfg)
        b = integrate(np.ones(2), -np.eye(2), coeffs, cfg)
        c = integrate(np.ones(2), -np.eye(2), coeffs, cfg, stream=derive_stream(4, 1))
        assert np.array_equal(a.states, b.states)
        assert not np.array_equal(a.states, c.states)

    def test_single_path_matches_ensemble_path(self):
        coeffs = additive(SP, np.eye(2))
        cfg = SimConfig(dt=0.01, t_end=1.0, seed=4, n_paths=3)
        ens = integrate_ensemble(np.ones(2), -np.eye(2), coeffs, cfg)
        one = integrate(np.ones(2), -np.eye(2), coeffs, cfg, stream=derive_stream(4, 2))
        assert np.array_equal(ens.states[2], one.states)

    def test_blowup_raises(self):
        coeffs = CoefficientSet.zero(SP).with_(drift=linear_drift(SP, 50 * np.eye(2)))
        with pytest.raises(SimulationAborted):
            integrate(np.ones(2), np.zeros((2, 2)), coeffs, SimConfig(dt=0.1, t_end=10.0))

    def test_ensemble_flags_aborted_paths(self):
        x0 = np.array([[1.0, 1.0], [0.0, 0.0]])
        coeffs = CoefficientSet.zero(SP).with_(drift=linear_drift(SP, 50 * np.eye(2)))
        ens = integrate_ensemble(x0, np.zeros((2, 2)), coeffs,
                                 SimConfig(dt=0.1, t_end=10.0, n_paths=2))
        assert ens.aborted.tolist() == [True, False]
        assert np.all(np.isnan(ens.states[0, -1]))
        assert np.all(ens.states[1] == 0)
        assert mean_state(ens, 10.0).value.tolist() == [0.0, 0.0]


class TestCoupled:
    def setup_method(self):
        self.blocks = build_damped_wave_chain(2, 1.0, 0.5, 1.0)
        self.A = self.blocks.assemble()
        sp = self.blocks.space
        G = np.zeros((4, 4, 4))
        for i in range(4):
            G[i, i, i] = 0.3
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1, {"std": 0.5}))
        from phs_stab.coefficients import linear_jump
        self.coeffs = CoefficientSet(zero_drift(sp), linear_diffusion(sp, G),
                                     linear_jump(sp, 0.3 * np.eye(4), mu), mu)

    def test_equal_starts_give_zero_gap(self):
        cfg = SimConfig(dt=0.01, t_end=2.0, n_paths=50, seed=1, record_every=20)
        x0 = np.arange(4.0)
        ens = integrate_coupled(x0, x0, self.A, self.coeffs, cfg)
        assert np.array_equal(ens.x_states, ens.y_states)
        for t in ens.times:
            g = mean_square_gap(ens, t)
            assert g.value == 0 and g.se == 0

    def test_deterministic_gap_is_flow_difference(self):
        cfg = SimConfig(dt=0.01, t_end=2.0, n_paths=3, record_every=10)
        x0, y0 = np.ones(4), -np.ones(4)
        ens = integrate_coupled(x0, y0, self.A, CoefficientSet.zero(self.blocks.space), cfg)
        for t in ens.times:
            d = propagator(self.A, t) @ (x0 - y0)
            assert mean_square_gap(ens, t).value == pytest.approx(d @ d, rel=1e-12)

    def test_additive_noise_cancels_in_gap(self):
        sp = self.blocks.space
        coeffs = additive(sp, np.eye(4))
        cfg = SimConfig(dt=0.01, t_end=2.0, n_paths=20, seed=2, record_every=10)
        x0, y0 = np.ones(4), np.zeros(4)
        ens = integrate_coupled(x0, y0, self.A, coeffs, cfg)
        for j, t in enumerate(ens.times):
            d = propagator(self.A, t) @ (x0 - y0)
            np.testing.assert_allclose(ens.x_states[:, j] - ens.y_states[:, j],
                                       np.broadcast_to(d, (20, 4)), atol=1e-10)

    def test_gap_decays_at_least_at_alpha(self):
        alpha = 0.5  # min damping; the chain coupling is skew
        cfg = SimConfig(dt=0.01, t_end=5.0, n_paths=1, record_every=10)
        x0, y0 = np.array([1.0, 0, 0, 2.0]), np.zeros(4)
        ens = integrate_coupled(x0, y0, self.A, CoefficientSet.zero(self.blocks.space), cfg)
        gap = np.linalg.norm(ens.x_states[0] - ens.y_states[0], axis=1)
        assert np.all(gap <= np.exp(-alpha * ens.times) * gap[0] * (1 + 1e-10))

    def test_worker_count_does_not_change_results(self):
        kw = dict(dt=0.01, t_end=0.5, n_paths=2500, seed=7, record_every=10)
        x0, y0 = np.ones(4), -np.ones(4)
        a = integrate_coupled(x0, y0, self.A, self.coeffs, SimConfig(**kw, workers=1))
        b = integrate_coupled(x0, y0, self.A, self.coeffs, SimConfig(**kw, workers=4))
        assert np.array_equal(a.x_states, b.x_states)
        assert np.array_equal(a.y_states, b.y_states)

    def test_halving_dt_changes_gap_by_less_than_se(self):
        kw = dict(dt=0.01, t_end=2.0, n_paths=10_000, seed=3, record_every=50)
        x0, y0 = np.ones(4), -np.ones(4)
        base = integrate_coupled(x0, y0, self.A, self.coeffs, SimConfig(**kw))
        fine = integrate_coupled(x0, y0, self.A, self.coeffs, SimConfig(**kw, substeps=2))
        for t in base.times[1:]:
            g1, g2 = mean_square_gap(base, t), mean_square_gap(fine, t)
            assert abs(g1.value - g2.value) < g1.se

    def test_unrecorded_time(self):
        cfg = SimConfig(dt=0.1, t_end=1.0, n_paths=2, record_every=5)
        ens = integrate_coupled(np.ones(4), np.zeros(4), self.A,
                                CoefficientSet.zero(self.blocks.space), cfg)
        with pytest.raises(ValueError):
            mean_square_gap(ens, 0.3)


class TestEnergy:
    def test_examples(self):
        assert energy(np.array([3.0, 4.0])) == 12.5
        assert energy(np.zeros(2)) == 0.0

    def test_mean_energy_estimate(self):
        coeffs = additive(SP, np.eye(2))
        cfg = SimConfig(dt=0.1, t_end=1.0, n_paths=10, seed=0)
        ens = integrate_ensemble(np.zeros(2), -np.eye(2), coeffs, cfg)
        e = mean_energy(ens, 1.0)
        vals = energy(ens.at(1.0))
        assert e.value == pytest.approx(vals.mean())
        assert e.se == pytest.approx(vals.std(ddof=1) / math.sqrt(10))


def test_compensated_constant_jump_keeps_drift_flow_mean():
    c = np.array([0.5, -1.0])
    mu = JumpMeasureSpec(1.0, MarkDistribution("constant", 1, {"value": 1.0}))
    coeffs = CoefficientSet(zero_drift(SP), zero_diffusion(SP), constant_jump(SP, c), mu)
    A = rotation(0.3)
    x0 = np.array([1.0, 0.0])
    cfg = SimConfig(dt=0.01, t_end=4.0, n_paths=5000, seed=21, record_every=50)
    ens = integrate_ensemble(x0, A, coeffs, cfg)
    flow = integrate(x0, A, CoefficientSet.zero(SP), cfg)
    for j, t in enumerate(ens.times[1:], start=1):
        m = mean_state(ens, t)
        assert np.all(np.abs(m.value - flow.states[j]) <= 3 * m.se)
