"""Scenario registry, oracle behavior and the expected-verdict regression."""

import numpy as np
import pytest

from flowlab import (
    BrownianDriver,
    CertifyConfig,
    ContractError,
    builtin,
    certify,
    integrate_flow,
    oracle_flow,
    ou_exact_states,
    scenario_listing,
    schedule_for,
)


class TestRegistry:
    def test_parse_with_dimension(self):
        assert builtin("ou(3)").system.dim == 3
        assert builtin("sphere(4)").model.intrinsic_dim == 3

    def test_parse_errors(self):
        with pytest.raises(ContractError):
            builtin("ou")          # missing dimension
        with pytest.raises(ContractError):
            builtin("kunita(2)")   # takes none
        with pytest.raises(ContractError):
            builtin("mystery(1)")

    def test_listing_shape(self):
        listing = scenario_listing()
        names = {row["name"] for row in listing}
        assert "kunita" in names and "inversion_plane" in names
        for row in listing:
            assert row["notes"]
            assert "expected_verdicts" in row

    def test_kunita_capped_horizon(self):
        scn = builtin("kunita")
        assert scn.default_horizon == 0.5
        assert "0.5" in scn.notes


class TestOracles:
    def test_translation_oracle_is_cumsum(self):
        scn = builtin("translation(2)")
        sched = schedule_for(1.0, 0.1)
        drv = BrownianDriver(1, 2)
        res = oracle_flow(scn, np.array([1.0, 1.0]), drv, sched)
        dW = drv.increments(sched)
        assert np.allclose(res.states[-1], np.array([1.0, 1.0]) + dW.sum(axis=0))
        assert not res.singular.any()

    def test_inversion_oracle_values_and_flag(self):
        scn = builtin("inversion_plane")
        # one step of size (-0.5, 0): z = 1/(1 - 0.5) = 2
        dW = np.array([[-0.5, 0.0]])
        res = scn.oracle(np.array([1.0, 0.0]), dW, 1.0)
        assert np.allclose(res.states[-1], [2.0, 0.0])
        # crossing the pole of the denominator flags the path
        dW_sing = np.array([[-1.0, 0.0]])
        res2 = scn.oracle(np.array([1.0, 0.0]), dW_sing, 1.0)
        assert res2.singular.all()

    def test_inversion_oracle_complex_identity(self):
        # 1/(1 + B) for a two-step complex path
        scn = builtin("inversion_plane")
        dW = np.array([[0.3, -0.2], [0.1, 0.4]])
        res = scn.oracle(np.array([1.0, 0.0]), dW, 0.5)
        B = dW.sum(axis=0)
        z = 1.0 / (1.0 + B[0] + 1j * B[1])
        assert np.allclose(res.states[-1], [z.real, z.imag], atol=1e-14)

    def test_ou_oracle_zero_noise_limit(self):
        res = ou_exact_states(np.array([2.0]), np.zeros((100, 1)), dt=0.01)
        assert res.states[-1, 0] == pytest.approx(2.0 * np.exp(-1.0), rel=1e-12)

    def test_ou_oracle_distribution(self):
        # marginal variance of the exact recursion matches (1 - e^{-2t})/2
        sched = schedule_for(1.0, 0.05)
        drv = BrownianDriver(123, 1)
        dW = np.stack([drv.for_path(k).increments(sched) for k in range(4000)], axis=1)
        res = ou_exact_states(np.array([0.0]), dW, dt=0.05)
        var = res.states[-1, :, 0].var()
        target = (1.0 - np.exp(-2.0)) / 2.0
        assert var == pytest.approx(target, rel=0.1)

    def test_ou_oracle_close_to_integrator(self):
        scn = builtin("ou(1)")
        sched = schedule_for(1.0, 1e-3)
        drv = BrownianDriver(5, 1)
        res = integrate_flow(scn.system, np.array([1.0]), sched, drv)
        orc = oracle_flow(scn, np.array([1.0]), drv, sched)
        # same driving noise: pathwise gap at the discretization scale
        assert abs(res.states[-1, 0, 0] - orc.states[-1, 0]) < 5e-3


class TestExpectedVerdicts:
    @pytest.mark.parametrize("name", ["translation(2)", "ou(1)", "kunita",
                                      "inversion_plane", "sphere(3)",
                                      "paraboloid", "punctured_translation(2)",
                                      "rescaled_punctured_plane", "linear"])
    def test_regression(self, name):
        scn = builtin(name)
        if not scn.expected_verdicts:
            pytest.skip("no expectations recorded")
        rep = certify(scn.system, CertifyConfig(theorems=tuple(scn.expected_verdicts),
                                                curvature=scn.curvature,
                                                n_directions=16))
        for theorem, expected in scn.expected_verdicts.items():
            assert rep.status_of(theorem) == expected, (name, theorem)
