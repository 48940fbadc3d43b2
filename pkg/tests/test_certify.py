"""Certificate pipeline: tightness gate, worst-case checks, verdicts."""

import numpy as np
import pytest

from lipcert.certify import (
    exactness_check,
    lower_bound_pgd,
    robustness_certificate,
    upper_bound,
    verify_worst_case,
)
from lipcert.model import FnnModel, TargetSpec, forward, gen_random
from lipcert.multipliers import MultiplierClass

from conftest import random_instance


def test_exactness_check_rank_one():
    v = np.array([1.0, 0.3, -0.2])
    report = exactness_check(np.outer(v, v))
    assert report.rank_one
    assert report.ratio <= 1e-12
    np.testing.assert_allclose(report.h, v, atol=1e-12)
    h2, h3 = report.split(1)
    np.testing.assert_allclose(h2, [0.3])
    np.testing.assert_allclose(h3, [-0.2])


def test_exactness_check_identity_not_rank_one():
    report = exactness_check(np.eye(4))
    assert not report.rank_one
    assert report.ratio == pytest.approx(1.0)


def test_exactness_check_bad_corner():
    v = np.array([2.0, 1.0])
    with pytest.raises(ValueError, match="H\\[0,0\\]"):
        exactness_check(np.outer(v, v))


def test_exactness_check_no_positive_eigenvalue():
    with pytest.raises(ValueError, match="eigenvalue"):
        exactness_check(np.diag([0.0, -1.0, -2.0]))


def test_verify_worst_case_toy(toy_model, toy_target):
    # solver-extracted worst case, rounded to four decimals (the rounding
    # leaves it a hair outside the ball, hence the loosened ball_tol)
    w_star = np.array([0.5116, -0.0648, -0.1217])
    res = verify_worst_case(
        toy_model, toy_target, w_star, 0.1088, ball_tol=1e-3, value_tol=1e-3
    )
    assert res["ok"] and res["ball_ok"] and res["value_ok"]
    assert res["distance"] <= toy_target.eps * (1 + 1e-3)
    assert res["deviation"] == pytest.approx(0.1088, abs=2e-4)


def test_verify_worst_case_rejects_center_for_positive_gamma(toy_model, toy_target):
    res = verify_worst_case(toy_model, toy_target, toy_target.w0, 0.1088)
    assert not res["ok"] and res["ball_ok"] and not res["value_ok"]
    assert res["deviation"] == 0.0


def test_verify_worst_case_zero_gamma(toy_model, toy_w0):
    target = TargetSpec(toy_w0, 0.0)
    res = verify_worst_case(toy_model, target, toy_w0, 0.0)
    assert res["ok"]


def test_verify_worst_case_outside_ball(toy_model, toy_target):
    w_far = toy_target.w0 + 10.0 * toy_target.eps * np.array([1.0, 0.0, 0.0])
    res = verify_worst_case(toy_model, toy_target, w_far, 0.1088)
    assert not res["ball_ok"]


def test_lower_bound_pgd_toy(toy_model, toy_target):
    lb, w = lower_bound_pgd(toy_model, toy_target, restarts=50, steps=300, seed=0)
    # tight instance: ascent reaches the SDP optimum
    assert 0.1078 <= lb <= 0.1089
    assert np.linalg.norm(w - toy_target.w0) <= toy_target.eps * (1 + 1e-9)


def test_lower_bound_pgd_affine_matches_svd():
    # a purely affine network: max deviation is eps * sigma_max exactly
    rng = np.random.default_rng(8)
    w_out_half = rng.standard_normal((2, 3))
    model = FnnModel(
        np.vstack([np.eye(3), -np.eye(3)]),
        np.zeros(6),
        np.hstack([w_out_half, -w_out_half]),
    )
    target = TargetSpec(np.zeros(3), 0.5)
    # split-identity trick: G(w) = W relu(w) - W relu(-w) = W w, exactly affine
    oracle = 0.5 * np.linalg.svd(w_out_half, compute_uv=False)[0]
    lb, _ = lower_bound_pgd(model, target, restarts=30, steps=400, seed=1)
    assert lb == pytest.approx(oracle, abs=1e-4)


def test_lower_bound_pgd_zero_eps(toy_model, toy_w0):
    lb, w = lower_bound_pgd(toy_model, TargetSpec(toy_w0, 0.0))
    assert lb == 0.0
    np.testing.assert_array_equal(w, toy_w0)


def test_lower_bound_pgd_extra_starts(toy_model, toy_target):
    # seeding with a known maximizer cannot lower the bound
    w_star = np.array([0.5116, -0.0648, -0.1217])
    lb, _ = lower_bound_pgd(
        toy_model, toy_target, restarts=2, steps=50, seed=3, extra_starts=[w_star]
    )
    assert lb >= 0.1087


def test_upper_bound_reduced_matches_unreduced(toy_model, toy_target):
    g_red, rm_red, _ = upper_bound(toy_model, toy_target, do_reduce=True)
    g_full, rm_full, _ = upper_bound(toy_model, toy_target, do_reduce=False)
    assert rm_red.n_r == 2 and rm_full.n_r == toy_model.n
    # both are sound; on this instance they agree
    lb, _ = lower_bound_pgd(toy_model, toy_target, restarts=20, steps=200, seed=0)
    assert g_red >= lb - 1e-8 and g_full >= lb - 1e-8
    assert g_red == pytest.approx(g_full, abs=1e-4)


def test_toy_certificate_end_to_end(toy_model, toy_target):
    cert = robustness_certificate(toy_model, toy_target, seed=0)
    assert cert.gamma_upper == pytest.approx(0.1088, abs=5e-4)
    assert cert.gamma_dual == pytest.approx(cert.gamma_upper, abs=1e-6)
    assert cert.duality_gap <= 1e-4 * (1 + cert.gamma_upper)
    assert cert.exact
    assert cert.rank_ratio <= 1e-6
    assert cert.w_star is not None
    np.testing.assert_allclose(
        cert.w_star, [0.5116, -0.0648, -0.1217], atol=5e-4
    )
    assert cert.lower_bound == pytest.approx(cert.gamma_upper, abs=1e-6)
    assert cert.n_r == 2
    assert cert.multiplier_class == "nn"
    assert cert.margin_value == pytest.approx(0.0741, abs=5e-4)
    # gamma exceeds the margin: not certified
    assert cert.robust_verdict == "not_certified"
    assert cert.timings["total_s"] > 0


def test_certificate_json_dict(toy_model, toy_target):
    cert = robustness_certificate(toy_model, toy_target, seed=0)
    obj = cert.to_json_dict()
    assert set(obj) == {
        "gamma_upper", "gamma_dual", "duality_gap", "exact", "w_star",
        "lower_bound", "n_r", "multiplier_class", "margin_value",
        "robust_verdict", "rank_ratio", "timings",
    }
    assert isinstance(obj["w_star"], list)
    assert obj["exact"] is True


def test_certified_robust_when_margin_large():
    # tiny ball around a confidently classified input
    model = gen_random(10, 4, 3, seed=5)
    rng = np.random.default_rng(5)
    w0 = rng.standard_normal(4)
    target = TargetSpec(w0, 1e-3)
    cert = robustness_certificate(model, target, pgd_restarts=10, seed=0)
    assert cert.margin_value is not None
    if cert.margin_value > cert.gamma_upper:
        assert cert.robust_verdict == "certified_robust"
        assert cert.lower_bound <= cert.gamma_upper + 1e-6
    else:
        assert cert.robust_verdict == "not_certified"


def test_sandwich_on_random_ensemble():
    # the empirical ascent bound never exceeds the certified bound, and
    # whenever the pipeline claims exactness the two meet
    for seed in (1, 2, 3, 4, 5, 6):
        model, target = random_instance(seed, n_max=8, m_max=4, l_max=3)
        cert = robustness_certificate(model, target, pgd_restarts=30, seed=seed)
        assert cert.lower_bound <= cert.gamma_upper + 1e-6
        if cert.exact:
            assert cert.gamma_upper - cert.lower_bound <= 1e-3 * (1 + cert.gamma_upper)


def test_exact_instance_beyond_toy():
    # an instance (found by scan) whose dual solution is rank one, so the
    # exactness gate fires away from the bundled example
    model = gen_random(6, 2, 3, seed=3)
    w0 = 0.5 * np.random.default_rng(203).standard_normal(2)
    target = TargetSpec(w0, 0.2)
    cert = robustness_certificate(model, target, pgd_restarts=30, seed=3)
    assert cert.exact
    assert cert.w_star is not None
    assert cert.gamma_upper - cert.lower_bound <= 1e-3 * (1 + cert.gamma_upper)
    res = verify_worst_case(model, target, cert.w_star, cert.gamma_upper)
    assert res["ok"]


def test_gamma_monotone_in_eps(toy_model, toy_w0):
    gammas = []
    for eps in (0.02, 0.05, 0.1, 0.2):
        g, _, _ = upper_bound(toy_model, TargetSpec(toy_w0, eps))
        gammas.append(g)
    assert all(b >= a - 1e-9 for a, b in zip(gammas, gammas[1:]))


def test_verdict_monotone_in_eps(toy_model, toy_w0):
    # once not certified, growing the ball cannot restore certification
    verdicts = []
    for eps in (0.01, 0.05, 0.1, 0.3):
        cert = robustness_certificate(
            toy_model, TargetSpec(toy_w0, eps), pgd_restarts=0
        )
        verdicts.append(cert.robust_verdict == "certified_robust")
    assert verdicts == sorted(verdicts, reverse=True)


def test_pipeline_without_presolve_matches(toy_model, toy_target):
    base = robustness_certificate(toy_model, toy_target, pgd_restarts=0)
    raw = robustness_certificate(
        toy_model, toy_target, compress=False, normalize=False, pgd_restarts=0
    )
    assert raw.gamma_upper == pytest.approx(base.gamma_upper, abs=1e-5)
    assert raw.exact == base.exact
    if raw.exact:
        np.testing.assert_allclose(raw.w_star, base.w_star, atol=1e-3)


def test_multiplier_class_recorded(toy_model, toy_target):
    cert = robustness_certificate(
        toy_model, toy_target, mclass=MultiplierClass.OZF, pgd_restarts=0
    )
    assert cert.multiplier_class == "ozf"
    # the coarser class cannot beat the finer one
    base = robustness_certificate(toy_model, toy_target, pgd_restarts=0)
    assert cert.gamma_upper >= base.gamma_upper - 1e-8
