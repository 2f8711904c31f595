"""Flux evaluation and the model right-hand side in all formulations."""

import numpy as np
import pytest

from calcium_gspt import model
from calcium_gspt.params import Parameters

DP = Parameters().nondimensionalize()


def random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.01, 0.9, n)
    h = rng.uniform(0.05, 0.95, n)
    # gamma*(c_t - c) >= 0 requires c_t >= c
    c_t = c + rng.uniform(0.05, 2.0, n)
    return np.stack([c, c_t, h])


def test_hill_basic():
    assert model.hill(0.2, 0.2, 4) == pytest.approx(0.5)
    assert model.hill_minus(0.2, 0.2, 4) == pytest.approx(0.5)
    assert model.hill(0.0, 0.2, 4) == 0.0
    assert model.hill_minus(0.0, 0.2, 4) == 1.0


def test_open_probability_range():
    for c, ct, h in random_states(200).T:
        po = model.open_probability(c, h, DP)[0]
        assert 0.0 < po < 1.0


def test_flux_values_hand_oracle():
    """Every flux against a from-scratch transcription of its formula."""
    dp = DP
    c, c_t, h = 0.2, 0.8, 0.5
    fv = model.eval_fluxes((c, c_t, h), dp, "dimensionless")
    phi_c = c ** 4 / (c ** 4 + dp.K_c ** 4)
    phi_p = dp.p ** 2 / (dp.p ** 2 + dp.K_p ** 2)
    phi_pdown = dp.K_p ** 2 / (dp.p ** 2 + dp.K_p ** 2)
    h_inf = dp.K_h ** 4 / (c ** 4 + dp.K_h ** 4)
    beta = phi_c * phi_p * h
    alpha = phi_pdown * (1.0 - phi_c * h_inf)
    po = beta / (beta + dp.k_beta * (beta + alpha))
    c_e = dp.gamma * (c_t - c)
    assert fv.P_o == pytest.approx(po, rel=1e-14)
    assert fv.J_IPR == pytest.approx(dp.k_f * po * (c_e - c), rel=1e-14)
    assert fv.J_SERCA_plus == pytest.approx(
        dp.V_s * c ** 2 / (c ** 2 + dp.K_s ** 2), rel=1e-14)
    assert fv.J_SERCA_minus == pytest.approx(
        dp.V_s * dp.K * c_e ** 2 / (c ** 2 + dp.K_s ** 2), rel=1e-14)
    assert fv.J_PM == pytest.approx(
        dp.V_PM * c ** 2 / (c ** 2 + dp.K_PM ** 2), rel=1e-14)
    assert fv.J_IN == pytest.approx(
        dp.alpha_0 + dp.alpha_1 * dp.K_e ** 4 / (c_e ** 4 + dp.K_e ** 4),
        rel=1e-14)
    assert fv.tau_h == pytest.approx(
        dp.tau_max * dp.K_tau ** 4 / (c ** 4 + dp.K_tau ** 4), rel=1e-14)


def test_rhs_dimensionless_assembles_fluxes():
    for state in random_states(50).T:
        fv = model.eval_fluxes(state, DP, "dimensionless")
        d = model.rhs_dimensionless(state, DP)
        assert d[0] == pytest.approx(
            fv.J_IPR - fv.J_SERCA_plus + fv.J_SERCA_minus
            + DP.delta * (fv.J_IN - fv.J_PM), rel=1e-12, abs=1e-16)
        assert d[1] == pytest.approx(
            DP.delta * (fv.J_IN - fv.J_PM), rel=1e-12, abs=1e-16)
        assert d[2] == pytest.approx(
            (fv.h_inf - state[2]) / fv.tau_h, rel=1e-12, abs=1e-16)


def test_dimensional_vs_dimensionless():
    """The dimensionless field at the scaled state equals T times the
    dimensional field (concentration scale 1)."""
    pm = Parameters()
    dp = pm.nondimensionalize()
    for state in random_states(50, seed=1).T:
        dim = model.rhs_dimensional(state, pm)
        nondim = model.rhs_dimensionless(state, dp)
        assert np.allclose(nondim, np.asarray(dim) * dp.T, rtol=1e-12)


def test_a1_coefficient():
    # K_tau**4 * tau_max(dimensionless) = 0.04**4 * 200 * 220
    assert model.a1_coefficient(DP) == pytest.approx(2.56e-6 * 44000.0)


def test_rhs_r1_matches_dimensionless():
    eps = DP.K_tau ** 4
    nu = DP.V_s
    for state in random_states(100, seed=2).T:
        ref = model.rhs_dimensionless(state, DP)
        got = model.rhs_r1(state, DP, eps, nu)
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-300)


def test_rhs_r2_exact_rescaling():
    """rhs_r2 is an exact substitution c = eps*C, t2 = eps**3 * t: components
    relate to the dimensionless field by powers of eps."""
    eps = DP.K_tau
    nu_tilde = DP.V_s / eps ** 2
    rng = np.random.default_rng(3)
    for _ in range(100):
        C = rng.uniform(0.1, 5.0)
        c_t = rng.uniform(0.2, 2.0)
        h = rng.uniform(0.05, 0.95)
        ref = model.rhs_dimensionless((eps * C, c_t, h), DP)
        got = model.rhs_r2((C, c_t, h), DP, eps, nu_tilde)
        assert got[0] == pytest.approx(ref[0] / eps ** 4, rel=1e-11)
        assert got[1] == pytest.approx(ref[1] / eps ** 3, rel=1e-11)
        assert got[2] == pytest.approx(ref[2] / eps ** 3, rel=1e-11)


def test_rhs_r2_rejects_negative_C():
    with pytest.raises(ValueError):
        model.rhs_r2((-0.1, 0.5, 0.5), DP, 0.04, 2.5)


def test_rhs_r2_singular_limit():
    """At varepsilon = 0 the field reduces to (leading-order layer flow, 0, 0);
    small varepsilon approaches it."""
    nt = DP.V_s / DP.K_tau ** 2
    C, c_t, h = 1.3, 0.6, 0.4
    sing = model.rhs_r2((C, c_t, h), DP, 0.0, nt)
    assert sing[1] == 0.0 and sing[2] == 0.0
    assert sing[0] == pytest.approx(
        model.singular_f_r2(C, c_t, h, DP, nt), rel=1e-13)
    f_small = model.rhs_r2((C, c_t, h), DP, 1e-5, nt)
    assert f_small[0] == pytest.approx(sing[0], rel=1e-3)


def test_jacobian_full_oracle():
    """Finite-difference Jacobian against a richer central difference."""
    state = np.array([0.15, 0.7, 0.4])
    J = model.jacobian_full(state, DP)
    for j in range(3):
        d = np.zeros(3)
        d[j] = 1e-7
        col = (np.asarray(model.rhs_dimensionless(state + d, DP))
               - np.asarray(model.rhs_dimensionless(state - d, DP))) / 2e-7
        assert np.allclose(J[:, j], col, rtol=1e-4, atol=1e-12)


def test_make_rhs_formulations():
    state = (0.2, 0.9, 0.5)
    f = model.make_rhs(DP, "dimensionless")
    assert np.allclose(f(0.0, state), model.rhs_dimensionless(state, DP))
    f1 = model.make_rhs(DP, "r1", eps=DP.K_tau ** 4, nu=DP.V_s)
    assert np.allclose(f1(0.0, state),
                       model.rhs_r1(state, DP, DP.K_tau ** 4, DP.V_s))
