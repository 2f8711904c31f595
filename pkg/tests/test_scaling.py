"""Flux scales, switch scores and the polynomial scaling relation."""

import numpy as np
import pytest

from calcium_gspt import scaling
from calcium_gspt.params import Parameters

DP = Parameters().nondimensionalize()


def test_scale_factors_hand_oracle():
    sf = scaling.scale_factors(DP)
    # hand-computed from the default parameter set (time scale 1/220 s)
    assert sf["h_relaxation"] == pytest.approx(1.0 / 44000.0)
    assert sf["ipr"] == pytest.approx(1.0)
    assert sf["serca_plus"] == pytest.approx(0.9 / 220.0)
    assert sf["serca_minus"] == pytest.approx(
        (0.9 / 220.0) * 1.5e-5 * 5.5 ** 2 / 0.2 ** 2)
    assert sf["inflow_base"] == pytest.approx(0.1 * 0.003 / 220.0)
    assert sf["inflow_gated"] == pytest.approx(0.1 * 0.01 / 220.0)
    assert sf["pm_extrusion"] == pytest.approx(0.1 * 0.07 / 220.0)


def test_candidate_small_parameters():
    eps = scaling.candidate_small_parameters(DP)
    assert set(eps) == {f"eps_{i}" for i in range(1, 8)}
    assert eps["eps_7"] == DP.K_tau
    assert all(v < 1 for v in eps.values())


def test_hill_max_slope():
    assert scaling.hill_max_slope(0.04, 4) == pytest.approx(25.0)
    assert scaling.hill_max_slope(0.1, 4) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        scaling.hill_max_slope(0.0, 4)


def test_switch_scores_exact():
    scores = scaling.classify_switches(DP)
    expected = {"tau_h": 25.0, "phi_c": 5.0, "h_inf": 10.0,
                "J_SERCA_plus": 2.5, "J_PM": 5.0 / 3.0, "J_IN": 1.0 / 14.0}
    for name, val in expected.items():
        assert scores[name].score == pytest.approx(val, rel=1e-14)
    # only the gating time-scale qualifies as a switch
    assert scores["tau_h"].is_switch
    assert not any(s.is_switch for n, s in scores.items() if n != "tau_h")


def test_borderline_score_is_not_a_switch():
    scores = scaling.classify_switches(DP)
    assert scores["h_inf"].borderline and not scores["h_inf"].is_switch
    assert not scores["tau_h"].borderline


def test_serca_minus_gradient_corner_value():
    res = scaling.serca_minus_gradient_max(DP)
    assert res["corner_value"] == pytest.approx(2.0 * np.sqrt(2.0), abs=1e-12)
    assert res["corner"] == (0.0, 1.0)


def test_serca_minus_gradient_max_dense_grid_oracle():
    """The refined maximizer against a brute-force 2001x2001 grid of the
    closed-form gradient magnitude."""
    res = scaling.serca_minus_gradient_max(DP)
    Ks2 = DP.K_s ** 2
    c = np.linspace(0.0, 1.0, 2001)
    cc, tt = np.meshgrid(c, c, indexing="ij")
    pref = 2.0 * Ks2 * (tt - cc) / (Ks2 + cc ** 2)
    g = pref * np.sqrt(1.0 + ((cc * tt + Ks2) / (Ks2 + cc ** 2)) ** 2)
    g = np.where(cc <= tt, g, -np.inf)
    assert res["max_value"] == pytest.approx(g.max(), abs=1e-3)
    assert res["max_value"] >= res["corner_value"]


def test_gradient_zero_on_diagonal():
    Ks2 = DP.K_s ** 2
    c = 0.3
    assert Ks2 * (c - c) ** 2 / (c ** 2 + Ks2) == 0.0


def test_scaling_relation_closed_forms():
    rep = scaling.scaling_relation(DP)
    eps = DP.K_tau ** 4
    assert rep.epsilon == eps == 2.56e-6
    cand = rep.eps_candidates
    for i in (1, 3, 4, 5, 6):
        assert rep.a[f"a_{i}"] == pytest.approx(eps / cand[f"eps_{i}"])
        assert rep.b[f"b_{i}"] == 1
    assert rep.a["a_7"] == pytest.approx(eps / cand["eps_7"] ** 4) == 1.0
    assert rep.b["b_7"] == 4
    assert rep.nu == pytest.approx(DP.V_s)
    assert rep.nu_tilde == pytest.approx(DP.V_s / DP.K_tau ** 2)
    # the uptake scale is kept independent; its coupling is informational
    assert "a_2" not in rep.a
    assert rep.a2_informational == pytest.approx(eps / DP.V_s ** 2)
    assert rep.b2_informational == 2


def test_scaling_relation_warns_when_not_order_one():
    dp = Parameters(K_tau=0.4).nondimensionalize()
    with pytest.warns(UserWarning):
        scaling.scaling_relation(dp)


def test_report_as_dict_roundtrip():
    d = scaling.scaling_relation(DP).as_dict()
    assert d["a"]["a_7"] == 1.0
    assert d["switch_scores"]["tau_h"]["is_switch"] is True
