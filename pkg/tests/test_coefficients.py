import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phs_stab.coefficients import (
    CoefficientSet,
    DiffusionMap,
    DriftMap,
    JumpMap,
    JumpMeasureSpec,
    MarkDistribution,
    PortViolation,
    QWienerSpec,
    additive_jump,
    constant_diffusion,
    constant_drift,
    constant_jump,
    estimate_lipschitz,
    jump_compensator_mean,
    linear_diffusion,
    linear_drift,
    linear_jump,
    moment_check,
    random_pair_sampler,
    tanh_drift,
    tanh_jump,
    zero_diffusion,
    zero_drift,
    zero_jump,
)
from phs_stab.space import SpaceDecomposition

SP = SpaceDecomposition(2, 2)


def top_direction_sampler(v):
    """Pairs whose difference is a multiple of ``v``."""

    def sample(rng, k):
        x = rng.standard_normal((k, len(v)))
        return x, x + rng.uniform(0.1, 2, (k, 1)) * v

    return sample


class TestMarks:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            MarkDistribution("cauchy")

    def test_moments(self):
        g = MarkDistribution("gaussian", 1, {"mean": 0.5, "std": 2.0})
        assert g.mean().tolist() == [0.5] and g.second_moment().tolist() == [4.25]
        u = MarkDistribution("uniform_pm", 2, {"c": 3.0})
        assert u.mean().tolist() == [0, 0] and u.second_moment().tolist() == [9, 9]

    def test_negative_intensity(self):
        with pytest.raises(ValueError):
            JumpMeasureSpec(-1.0)

    def test_uniform_pm_support(self):
        u = MarkDistribution("uniform_pm", 1, {"c": 2.0})
        s = u.sample(np.random.default_rng(0), 1000)
        assert set(np.unique(s)) == {-2.0, 2.0}


class TestPortFlag:
    def test_constant_drift_rejects_h0_component(self):
        with pytest.raises(PortViolation):
            constant_drift(SP, [1.0, 0, 0, 0], port=True)

    def test_runtime_check_on_custom_map(self):
        bad = DriftMap(SP, lambda x: x.copy(), 1.0, port_flag=True)
        with pytest.raises(PortViolation):
            bad(np.ones(4))

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_port_maps_land_in_h1(self, seed):
        rng = np.random.default_rng(seed)
        M = np.zeros((4, 3))
        M[2:] = rng.standard_normal((2, 3))
        mu = JumpMeasureSpec(1.5, MarkDistribution("gaussian", 1))
        G = np.zeros((4, 4))
        G[2:] = rng.standard_normal((2, 4))
        x = rng.standard_normal((7, 4))
        eta = rng.standard_normal((7, 1))
        Gd = np.zeros((4, 4, 4))
        Gd[:, 2:, :] = rng.standard_normal((4, 2, 4))
        outs = [
            tanh_drift(SP, M, rng.standard_normal((3, 4)), port=True)(x),
            linear_jump(SP, G, mu, port=True)(x, eta),
            tanh_jump(SP, M, rng.standard_normal((3, 4)), mu, port=True)(x, eta),
        ]
        for out in outs:
            assert np.all(out[..., :2] == 0)
        sig = linear_diffusion(SP, Gd, port=True)(x)
        assert np.all(sig[..., :2, :] == 0)


class TestLipschitz:
    def test_linear_drift_singular_value_oracle(self):
        rng = np.random.default_rng(1)
        B = rng.standard_normal((4, 4))
        U, s, Vt = np.linalg.svd(B)
        f = linear_drift(SP, B)
        assert math.isclose(f.L_F, s[0] ** 2, rel_tol=1e-12)
        generic = estimate_lipschitz(f, random_pair_sampler(SP), 2000, rng=rng)
        assert generic.estimate <= f.L_F * (1 + 1e-12) and not generic.violation
        top = estimate_lipschitz(f, top_direction_sampler(Vt[0]), 50, rng=rng)
        assert math.isclose(top.estimate, s[0] ** 2, rel_tol=1e-10)

    def test_constant_map_is_zero(self):
        est = estimate_lipschitz(constant_drift(SP, [1, 2, 3, 4]), random_pair_sampler(SP), 100)
        assert est.estimate == 0.0

    def test_understated_constant_flagged(self):
        f = replace(linear_drift(SP, 0.5 * np.eye(4)), L_F=0.2)
        est = estimate_lipschitz(f, random_pair_sampler(SP), 100)
        assert est.violation and math.isclose(est.estimate, 0.25, rel_tol=1e-12)

    def test_coincident_pairs_skipped(self):
        same = lambda rng, k: (np.ones((k, 4)), np.ones((k, 4)))
        est = estimate_lipschitz(linear_drift(SP, np.eye(4)), same, 10)
        assert est.n_used == 0 and not est.violation

    def test_tanh_drift_within_declared(self):
        rng = np.random.default_rng(2)
        f = tanh_drift(SP, rng.standard_normal((4, 3)), rng.standard_normal((3, 4)))
        est = estimate_lipschitz(f, random_pair_sampler(SP, 0.05), 5000, rng=rng)
        assert not est.violation and est.estimate > 0.3 * f.L_F

    def test_linear_diffusion_hilbert_schmidt(self):
        rng = np.random.default_rng(3)
        G = rng.standard_normal((4, 4, 3))
        q = rng.standard_normal((3, 2))
        sig = linear_diffusion(SP, G, q_half=q)
        est = estimate_lipschitz(sig, random_pair_sampler(SP), 3000, rng=rng, q_half=q)
        assert not est.violation and est.estimate > 0.5 * sig.L_sigma
        # oracle: squared operator norm of x -> sum_k x_k G[k] q (flattened)
        T = np.stack([(G[k] @ q).ravel() for k in range(4)], axis=1)
        assert math.isclose(sig.L_sigma, np.linalg.norm(T, 2) ** 2, rel_tol=1e-12)

    def test_linear_jump_convention(self):
        mu = JumpMeasureSpec(2.0, MarkDistribution("gaussian", 1, {"mean": 1.0, "std": 1.0}))
        G = np.diag([0.0, 0.0, 0.5, 0.25])
        j = linear_jump(SP, G, mu)
        assert math.isclose(j.L_gamma, 2.0 * 2.0 * 0.25, rel_tol=1e-14)
        est = estimate_lipschitz(j, top_direction_sampler(np.array([0, 0, 1.0, 0])), 20, measure=mu)
        assert math.isclose(est.estimate, j.L_gamma, rel_tol=1e-12)

    def test_custom_jump_uses_sampled_marks(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("uniform_pm", 1, {"c": 2.0}))
        j = JumpMap(SP, lambda x, eta: eta[..., :1] * x, 4.0)
        est = estimate_lipschitz(j, random_pair_sampler(SP), 50, measure=mu)
        assert math.isclose(est.estimate, 4.0, rel_tol=1e-12)

    def test_jump_needs_measure(self):
        with pytest.raises(ValueError):
            estimate_lipschitz(zero_jump(SP), random_pair_sampler(SP), 10)


class TestCompensator:
    def test_symmetric_marks(self):
        mu = JumpMeasureSpec(2.0, MarkDistribution("uniform_pm", 4, {"c": 1.5}))
        j = additive_jump(SP, np.eye(4))
        assert np.array_equal(jump_compensator_mean(j, mu, np.ones(4)).value, np.zeros(4))

    def test_constant_map(self):
        mu = JumpMeasureSpec(3.0, MarkDistribution("gaussian", 1))
        c = np.array([1.0, -2.0, 0.5, 4.0])
        est = jump_compensator_mean(constant_jump(SP, c), mu, np.zeros(4))
        assert np.allclose(est.value, 3 * c, rtol=1e-15) and np.all(est.se == 0)

    def test_monte_carlo_mean(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1, {"mean": 0.5, "std": 1.0}))
        j = JumpMap(SP, lambda x, eta: eta[..., :1] * x, 1.25)
        x = np.array([1.0, -2.0, 3.0, 0.5])
        est = jump_compensator_mean(j, mu, x, n_mc=20000, rng=np.random.default_rng(5))
        assert np.all(np.abs(est.value - 0.5 * x) <= 3 * est.se)
        assert np.all(est.se > 0)

    def test_closed_form_agrees_with_monte_carlo(self):
        mu = JumpMeasureSpec(1.5, MarkDistribution("gaussian", 1, {"mean": 0.3, "std": 0.7}))
        G = np.random.default_rng(6).standard_normal((4, 4))
        closed = linear_jump(SP, G, mu, B=np.ones((4, 1)))
        generic = JumpMap(SP, closed.fn, closed.L_gamma)
        x = np.array([0.2, -1.0, 0.4, 1.1])
        a = jump_compensator_mean(closed, mu, x).value
        b = jump_compensator_mean(generic, mu, x, n_mc=40000, rng=np.random.default_rng(7))
        assert np.all(np.abs(a - b.value) <= 4 * b.se)

    def test_zero_intensity(self):
        est = jump_compensator_mean(constant_jump(SP, np.ones(4)), JumpMeasureSpec(0.0), np.ones(4))
        assert np.array_equal(est.value, np.zeros(4))

    def test_linear_in_the_map(self):
        mu = JumpMeasureSpec(2.0, MarkDistribution("gaussian", 1, {"mean": 0.2}))
        f1 = lambda x, eta: eta[..., :1] * np.sin(x)
        f2 = lambda x, eta: eta[..., :1] ** 2 * x
        j1, j2 = JumpMap(SP, f1, 1.0), JumpMap(SP, f2, 1.0)
        j12 = JumpMap(SP, lambda x, eta: f1(x, eta) + f2(x, eta), 1.0)
        x = np.array([0.3, 1.0, -2.0, 0.5])
        c = lambda j: jump_compensator_mean(j, mu, x, n_mc=500, rng=np.random.default_rng(9)).value
        assert np.allclose(c(j12), c(j1) + c(j2), rtol=1e-12, atol=1e-14)


class TestMoments:
    def test_zero_map(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1))
        r = moment_check(zero_jump(SP), mu, np.ones(4))
        assert (r.second_moment, r.fourth_moment) == (0.0, 0.0) and r.finite

    def test_constant_map(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1))
        c = np.array([0.0, 1.0, 2.0, 0.0])
        r = moment_check(constant_jump(SP, c), mu, np.ones(4))
        assert math.isclose(r.second_moment, 5.0, rel_tol=1e-14)
        assert math.isclose(r.fourth_moment, 25.0, rel_tol=1e-14)

    def test_gaussian_moments(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1))
        e1 = np.array([1.0, 0, 0, 0])
        j = additive_jump(SP, e1[:, None])
        r = moment_check(j, mu, np.zeros(4), n_mc=50000, rng=np.random.default_rng(10))
        assert abs(r.second_moment - 1) <= 3 * r.second_se
        assert abs(r.fourth_moment - 3) <= 3 * r.fourth_se

    def test_non_finite_diagnostic(self):
        mu = JumpMeasureSpec(1.0, MarkDistribution("gaussian", 1))
        j = JumpMap(SP, lambda x, eta: np.full(np.broadcast_shapes(x.shape[:-1], eta.shape[:-1]) + (4,), np.inf), 0.0)
        r = moment_check(j, mu, np.ones(4))
        assert not r.finite and r.diagnostic

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            moment_check(zero_jump(SP), JumpMeasureSpec(1.0, MarkDistribution("gaussian")), np.ones(4), n_mc=1)


class TestDiffusionApply:
    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1), st.booleans())
    def test_apply_matches_matrix_product(self, seed, diagonal):
        rng = np.random.default_rng(seed)
        if diagonal:
            G = np.zeros((4, 4, 4))
            G[np.arange(4), np.arange(4), np.arange(4)] = rng.standard_normal(4)
        else:
            G = rng.standard_normal((4, 4, 4))
        sig = linear_diffusion(SP, G, C=rng.standard_normal((4, 4)))
        x = rng.standard_normal((5, 2, 4))
        dw = rng.standard_normal((5, 1, 4))
        ref = np.einsum("...ij,...j->...i", sig(x), np.broadcast_to(dw, x.shape))
        assert np.allclose(sig.apply(x, dw), ref, rtol=1e-12, atol=1e-12)

    def test_constant_and_zero(self):
        C = np.arange(8.0).reshape(4, 2)
        sig = constant_diffusion(SP, C)
        dw = np.array([1.0, -1.0])
        assert np.array_equal(sig.apply(np.zeros((3, 4)), dw[None]), np.tile(C @ dw, (3, 1)))
        assert sig.L_sigma == 0
        assert np.array_equal(zero_diffusion(SP).apply(np.ones((2, 4)), np.ones((1, 4))), np.zeros((2, 4)))


class TestCoefficientSet:
    def test_spaces_must_agree(self):
        with pytest.raises(ValueError):
            CoefficientSet(zero_drift(SP), zero_diffusion(SpaceDecomposition(1, 1)), zero_jump(SP))

    def test_wiener_dimension_checked(self):
        with pytest.raises(ValueError):
            CoefficientSet(zero_drift(SP), zero_diffusion(SP, 3), zero_jump(SP), wiener=QWienerSpec(np.eye(2)))

    def test_default_identity_covariance(self):
        co = CoefficientSet.zero(SP)
        assert np.array_equal(co.wiener.Q, np.eye(4))
        assert co.with_(drift=linear_drift(SP, np.eye(4))).drift.family == "linear"
