"""Parameter ingestion, validation and nondimensionalization."""

import dataclasses
import json

import numpy as np
import pytest

from calcium_gspt.params import (ParameterError, Parameters, apply_overrides,
                                 load_parameters)


def test_defaults_positive_and_complete():
    pm = Parameters()
    for f in dataclasses.fields(pm):
        assert getattr(pm, f.name) > 0


def test_immutable():
    pm = Parameters()
    with pytest.raises(dataclasses.FrozenInstanceError):
        pm.K_c = 1.0


def test_positivity_validated():
    with pytest.raises(ParameterError):
        Parameters(K_c=-0.2)
    with pytest.raises(ParameterError):
        Parameters(V_s=0.0)


def test_gamma_must_exceed_one():
    # gamma <= 1 would make the free ER calcium gamma*(c_t - c) ill-defined
    # as a volume ratio
    with pytest.raises(ParameterError):
        Parameters(gamma=0.5)


def test_replace_returns_new_object():
    pm = Parameters()
    pm2 = pm.replace(p=0.05)
    assert pm2.p == 0.05 and pm.p == 0.09


def test_load_parameters_roundtrip(tmp_path):
    path = tmp_path / "params.json"
    path.write_text(json.dumps({"p": 0.05, "K_c": 0.25}))
    pm = load_parameters(path)
    assert pm.p == 0.05 and pm.K_c == 0.25
    assert pm.K_h == Parameters().K_h


def test_load_parameters_rejects_unknown_keys(tmp_path):
    path = tmp_path / "params.json"
    path.write_text(json.dumps({"p": 0.05, "bogus": 1.0}))
    with pytest.raises(ParameterError):
        load_parameters(path)


def test_apply_overrides():
    pm = apply_overrides(Parameters(), ["p=0.02", "K_tau=0.05"])
    assert pm.p == 0.02 and pm.K_tau == 0.05
    with pytest.raises(ParameterError):
        apply_overrides(Parameters(), ["nope=1"])
    with pytest.raises(ParameterError):
        apply_overrides(Parameters(), ["p"])


def test_nondimensionalize_oracle():
    """Check the scaling rules against a hand-computed instance: times by
    T = 1/(gamma*k_f), concentrations by Q_c, pressure-like p by Q_p."""
    pm = Parameters()
    T = 1.0 / (pm.gamma * pm.k_f)     # = 1/220 s
    dp = pm.nondimensionalize()
    assert dp.T == pytest.approx(T)
    # rate constants pick up a factor T
    assert dp.V_s == pytest.approx(0.9 / 220.0)
    assert dp.V_PM == pytest.approx(0.07 / 220.0)
    assert dp.alpha_0 == pytest.approx(0.003 / 220.0)
    assert dp.k_f == pytest.approx(40.0 / 220.0)
    # times scale by 1/T, thresholds are untouched at Q_c = 1
    assert dp.tau_max == pytest.approx(200.0 * 220.0)
    assert dp.K_tau == pm.K_tau
    assert dp.gamma == pm.gamma and dp.delta == pm.delta


def test_nondimensionalize_concentration_scale():
    pm = Parameters()
    dp = pm.nondimensionalize(Q_c=2.0)
    assert dp.K_c == pytest.approx(pm.K_c / 2.0)
    assert dp.V_s == pytest.approx(pm.V_s * dp.T / 2.0)
