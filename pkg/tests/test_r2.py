"""Small-c regime analysis: critical manifold graph, fold curve, derivatives
and the desingularized reduced flow."""

import numpy as np
import pytest

from calcium_gspt import model, r2
from calcium_gspt.params import Parameters

DP = Parameters().nondimensionalize()
NT = r2.default_nu_tilde(DP)


def test_default_nu_tilde():
    assert NT == pytest.approx(DP.V_s / DP.K_tau ** 2)
    assert NT == pytest.approx((0.9 / 220.0) / 0.04 ** 2)


def test_varphi_annihilates_leading_layer_field():
    rng = np.random.default_rng(0)
    for _ in range(50):
        C = rng.uniform(0.5, 5.0)
        ct = rng.uniform(0.1, 2.0)
        h = float(r2.varphi(C, ct, DP, NT))
        assert abs(model.singular_f_r2(C, ct, h, DP, NT)) < 1e-10


def test_varphi_rejects_nonpositive_arguments():
    with pytest.raises(ValueError):
        r2.varphi(-1.0, 0.5, DP)
    with pytest.raises(ValueError):
        r2.varphi(1.0, 0.0, DP)


def test_lambda_matches_finite_differences():
    """Closed-form layer eigenvalue against central differences of the
    leading-order fast field along C at h = varphi."""
    rng = np.random.default_rng(1)
    for _ in range(30):
        C = rng.uniform(0.3, 4.0)
        ct = rng.uniform(0.1, 2.0)
        h = float(r2.varphi(C, ct, DP, NT))
        d = 1e-6 * C
        fd = (model.singular_f_r2(C + d, ct, h, DP, NT)
              - model.singular_f_r2(C - d, ct, h, DP, NT)) / (2 * d)
        assert r2.lambda_r2(C, ct, DP, NT) == pytest.approx(fd, rel=1e-6,
                                                            abs=1e-8)


def test_fold_curve_lambda_vanishes():
    for ct in np.linspace(0.05, 2.0, 20):
        Cf = float(r2.fold_C(ct, DP, NT))
        assert abs(r2.lambda_r2(Cf, ct, DP, NT)) < 1e-10


def test_sheets_split_at_fold():
    ct = 0.6
    Cf = float(r2.fold_C(ct, DP, NT))
    assert r2.classify_sheet(0.9 * Cf, ct, DP, NT) == "attracting"
    assert r2.classify_sheet(1.1 * Cf, ct, DP, NT) == "repelling"
    assert r2.s3_point(0.9 * Cf, ct, DP, NT).sheet == "attracting"


def test_dfdct_matches_finite_differences():
    for ct in np.linspace(0.1, 2.0, 15):
        Cf = float(r2.fold_C(ct, DP, NT))
        h = float(r2.varphi(Cf, ct, DP, NT))
        d = 1e-6
        fd = (model.singular_f_r2(Cf, ct + d, h, DP, NT)
              - model.singular_f_r2(Cf, ct - d, h, DP, NT)) / (2 * d)
        assert r2.dfdct_on_fold(ct, DP, NT) == pytest.approx(fd, rel=1e-6)


def test_fold_points_structure():
    pts = r2.fold_curve(np.linspace(0.05, 2.0, 20), DP, NT)
    for q in pts:
        assert q.transversality > 0
        assert q.nondegeneracy == pytest.approx(4.0 * NT / DP.K_s ** 2)
        assert q.h_fold == pytest.approx(
            float(r2.varphi(q.C_fold, q.c_t, DP, NT)), rel=1e-12)


def test_no_folded_singularity_at_defaults():
    with pytest.raises(r2.FoldedSingularityNotFound):
        r2.folded_singularity_root(DP, NT)


def test_reduced_flow_reaches_fold():
    for ct0 in np.linspace(0.3, 1.2, 5):
        C0 = 0.85 * float(r2.fold_C(ct0, DP, NT))
        res = r2.reduced_flow_r2((C0, ct0), DP, NT)
        assert res["reached_fold"]
        assert res["fold_residual"] <= 1e-8


def test_reduced_flow_rejects_repelling_start():
    ct0 = 0.6
    with pytest.raises(ValueError):
        r2.reduced_flow_r2((2.0 * float(r2.fold_C(ct0, DP, NT)), ct0), DP, NT)


def test_desingularized_flow_direction_on_attracting_sheet():
    """On the attracting sheet (lambda < 0) the desingularized c_t-equation
    -lambda * J_IN is positive: the slow drift loads the store."""
    for ct in (0.3, 0.6, 1.0):
        C = 0.85 * float(r2.fold_C(ct, DP, NT))
        d = r2.desing_reduced_rhs_r2(C, ct, DP, NT)
        assert d[1] > 0
