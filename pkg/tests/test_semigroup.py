"""Semigroup estimators and the gradient consistency check.

Closed forms used as oracles (hand computations):
  * linear restoring system: P_t id(x) = x e^{-t}, derivative flow e^{-t};
  * translation on R: E (x + B_t)^2 = x^2 + t and
    E sin(x + B_t) = e^{-t/2} sin x, E cos(x + B_t) = e^{-t/2} cos x.
"""

import numpy as np
import pytest

from flowlab import (
    builtin,
    estimate_Ptf,
    estimate_deltaPt,
    estimate_nested_Ptf,
    gradient_consistency_check,
    observable,
)

ID_OBS = observable(lambda x: x[..., 0], lambda x, v: v[..., 0])


class TestPtf:
    def test_constant_observable(self):
        scn = builtin("ou(1)")
        obs = observable(lambda x: np.ones(np.asarray(x).shape[:-1]))
        est = estimate_Ptf(scn.system, obs, [0.3], 1.0, 128, seed=1, dt=1e-2)
        assert est.value == 1.0 and est.se == 0.0

    def test_ou_mean_decay(self):
        scn = builtin("ou(1)")
        est = estimate_Ptf(scn.system, ID_OBS, [1.0], 1.0, 4000, seed=2, dt=1e-2)
        assert abs(est.value - np.exp(-1.0)) <= 3.0 * est.se + 1e-4

    def test_translation_second_moment(self):
        scn = builtin("translation(1)")
        obs = observable(lambda x: x[..., 0] ** 2)
        est = estimate_Ptf(scn.system, obs, [0.5], 1.0, 4000, seed=3, dt=1e-2)
        assert abs(est.value - 1.25) <= 3.0 * est.se + 1e-4

    def test_seed_determinism(self):
        scn = builtin("ou(1)")
        a = estimate_Ptf(scn.system, ID_OBS, [1.0], 0.5, 500, seed=4, dt=1e-2)
        b = estimate_Ptf(scn.system, ID_OBS, [1.0], 0.5, 500, seed=4, dt=1e-2)
        assert a.value == b.value and a.se == b.se


class TestDeltaPt:
    def test_ou_deterministic_transport(self):
        scn = builtin("ou(1)")
        est = estimate_deltaPt(scn.system, ID_OBS, [1.0], [1.0], 1.0, 64,
                               seed=5, dt=1e-3)
        assert est.value == pytest.approx(np.exp(-1.0), abs=1e-5)
        assert est.se <= 1e-12  # every path transports identically

    def test_translation_identity_transport(self):
        scn = builtin("translation(1)")
        obs = observable(lambda x: np.sin(x[..., 0]),
                         lambda x, v: np.cos(x[..., 0]) * v[..., 0])
        est = estimate_deltaPt(scn.system, obs, [0.8], [1.0], 1.0, 4000,
                               seed=6, dt=1e-2)
        expected = np.exp(-0.5) * np.cos(0.8)
        assert abs(est.value - expected) <= 3.0 * est.se + 1e-4

    def test_linearity_exact_under_shared_seed(self):
        scn = builtin("inversion_plane")
        obs = observable(lambda x: x[..., 0], lambda x, v: v[..., 0])
        kw = dict(t=0.3, n_paths=128, seed=7, dt=1e-2)
        one = estimate_deltaPt(scn.system, obs, [1.0, 0.0], [0.5, 0.2], **kw)
        two = estimate_deltaPt(scn.system, obs, [1.0, 0.0], [1.0, 0.4], **kw)
        assert two.value == pytest.approx(2.0 * one.value, rel=1e-14)

    def test_zero_vector_gives_zero(self):
        scn = builtin("ou(1)")
        est = estimate_deltaPt(scn.system, ID_OBS, [1.0], [0.0], 1.0, 16,
                               seed=8, dt=1e-2)
        assert est.value == 0.0


class TestGradientConsistency:
    def test_ou_linear_observable(self):
        scn = builtin("ou(1)")
        rep = gradient_consistency_check(scn.system, ID_OBS, [1.0], [1.0], 1.0,
                                         2000, seed=9, dt=1e-2,
                                         eps_ladder=[1e-1, 1e-2])
        assert rep.passed
        assert rep.lhs == pytest.approx(np.exp(-1.0), abs=1e-4)
        assert rep.rhs == pytest.approx(np.exp(-1.0), abs=1e-4)
        # both sides are noise-free for a linear system + linear observable
        assert rep.se_lhs <= 1e-12 and rep.se_rhs <= 1e-12
        assert rep.se_ptf > 1e-3  # the underlying semigroup estimate is noisy

    def test_translation_sine_observable(self):
        # both sides estimate e^{-t/2} cos(x); the Gaussian characteristic
        # function oracle was cross-checked by direct sampling
        scn = builtin("translation(1)")
        obs = observable(lambda x: np.sin(x[..., 0]),
                         lambda x, v: np.cos(x[..., 0]) * v[..., 0])
        rep = gradient_consistency_check(scn.system, obs, [0.8], [1.0], 1.0,
                                         4000, seed=10, dt=1e-2,
                                         eps_ladder=[1e-1, 1e-2])
        expected = np.exp(-0.5) * np.cos(0.8)
        assert rep.passed
        assert abs(rep.rhs - expected) <= 3.0 * rep.se_rhs + 1e-4
        assert abs(rep.lhs - expected) <= 3.0 * np.hypot(rep.se_lhs, rep.se_rhs) + 2e-3

    def test_richardson_trend_on_nonlinear_observable(self):
        # FD bias of a curved observable is O(eps): slope about 1
        scn = builtin("translation(1)")
        obs = observable(lambda x: np.sin(x[..., 0]),
                         lambda x, v: np.cos(x[..., 0]) * v[..., 0])
        rep = gradient_consistency_check(scn.system, obs, [0.8], [1.0], 0.5,
                                         3000, seed=11, dt=1e-2,
                                         eps_ladder=[2e-1, 5e-2, 1.25e-2])
        assert rep.richardson_slope is not None
        assert 0.7 <= rep.richardson_slope <= 1.3

    def test_zero_direction(self):
        scn = builtin("ou(1)")
        rep = gradient_consistency_check(scn.system, ID_OBS, [1.0], [0.0], 0.5,
                                         64, seed=12, dt=1e-2, eps_ladder=[1e-2])
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed

    def test_sphere_gradient_system(self):
        # retraction handles the off-manifold shifted start of the FD side
        scn = builtin("sphere(3)")
        obs = observable(lambda x: x[..., 2], lambda x, v: v[..., 2])
        rep = gradient_consistency_check(scn.system, obs, [1.0, 0.0, 0.0],
                                         [0.0, 0.0, 1.0], t=0.5, n_paths=3000,
                                         seed=31, dt=1e-2, eps_ladder=[1e-1, 1e-2])
        assert rep.passed
        assert rep.se_lhs > 0  # genuinely stochastic transport here


def test_semigroup_property_nested():
    # P_{t+s} f against the nested P_t(P_s f) at coarse resolution
    scn = builtin("ou(1)")
    full = estimate_Ptf(scn.system, ID_OBS, [1.0], 1.0, 4000, seed=13, dt=1e-2)
    nested = estimate_nested_Ptf(scn.system, ID_OBS, [1.0], t=0.5, s=0.5,
                                 n_outer=160, n_inner=160, seed=13, dt=1e-2)
    tol = 3.0 * np.hypot(full.se, nested.se) + 1e-3
    assert abs(full.value - nested.value) <= tol
