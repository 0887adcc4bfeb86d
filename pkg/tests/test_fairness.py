import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairbound.fairness import (
    BoundsReport,
    DegenerateGroupError,
    FairnessBudget,
    constraint_free_check,
    equalized_odds,
    equalized_odds_surrogate,
    equalized_opportunity,
    rd_bounds,
    rd_bounds_batch,
    rd_extremes,
    risk_difference,
    risk_difference_weighted,
    risk_ratio,
    risk_ratio_constraint,
    surrogate_rd,
)
from fairbound.synthetic import random_discrete_dataset, students_dataset

PAIRS = ("hinge", "square", "exponential")


def enumerate_all_rd(data):
    """Independent oracle: group-count risk difference of every deterministic
    classifier over the distinct feature rows."""
    _, inverse = np.unique(data.features, axis=0, return_inverse=True)
    k = inverse.max() + 1
    npos = (data.sensitive == 1).sum()
    nneg = (data.sensitive == 0).sum()
    pos = np.bincount(inverse, weights=(data.sensitive == 1).astype(float), minlength=k)
    cnt = np.bincount(inverse, minlength=k)
    diff = pos / npos - (cnt - pos) / nneg
    assigns = ((np.arange(2 ** k)[:, None] >> np.arange(k)) & 1).astype(float)
    return assigns @ diff


# -- risk differences -------------------------------------------------------------


def test_risk_difference_students(students):
    accept_high = np.where(students.features[:, 0] == 1, 1, -1)
    assert risk_difference(np.ones(200, int), students.sensitive) == pytest.approx(0.0, abs=1e-12)
    assert risk_difference(accept_high, students.sensitive) == pytest.approx(0.03, abs=1e-12)
    assert risk_difference(-accept_high, students.sensitive) == pytest.approx(-0.03, abs=1e-12)
    assert risk_difference(-np.ones(200, int), students.sensitive) == pytest.approx(0.0, abs=1e-12)


def test_risk_difference_needs_both_groups():
    with pytest.raises(DegenerateGroupError):
        risk_difference(np.ones(4, int), np.ones(4, int))


def test_weighted_rd_constant_propensity_is_zero(rng):
    scores = rng.standard_normal(50)
    eta = np.full(50, 0.3)
    assert risk_difference_weighted(scores, eta, 0.3) == pytest.approx(0.0, abs=1e-12)


def test_weighted_rd_all_positive_scores(students):
    scores = np.ones(students.n_rows)
    expected = float(students.propensity.mean()) / students.group_rate - 1.0
    assert risk_difference_weighted(scores, students.propensity, students.group_rate) == \
        pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.0, abs=1e-6)


def test_weighted_rd_matches_group_counts_students(students):
    accept_high = np.where(students.features[:, 0] == 1, 1.0, -1.0)
    wrd = risk_difference_weighted(accept_high, students.propensity, students.group_rate)
    assert wrd == pytest.approx(0.03, abs=1e-12)


@given(seed=st.integers(min_value=0, max_value=2_000))
@settings(max_examples=25)
def test_weighted_rd_matches_group_counts_on_exact_frequencies(seed):
    data = random_discrete_dataset(seed, max_cells=8, max_rows=120)
    rng = np.random.default_rng(seed + 1)
    w = rng.standard_normal(data.n_features + 1)
    scores = data.features @ w[:-1] + w[-1]
    preds = np.where(scores >= 0, 1, -1)
    assert risk_difference_weighted(scores, data.propensity, data.group_rate) == \
        pytest.approx(risk_difference(preds, data.sensitive), abs=1e-12)


# -- surrogate risk differences -----------------------------------------------------


def test_surrogate_rd_reference_values(students):
    zeros = np.zeros(students.n_rows)
    assert surrogate_rd(zeros, "hinge", "convex", sensitive=students.sensitive) == \
        pytest.approx(1.0, abs=1e-12)
    assert surrogate_rd(zeros, "hinge", "concave", sensitive=students.sensitive) == \
        pytest.approx(-1.0, abs=1e-12)


def test_surrogate_rd_linear_region_blind_to_signs():
    # four points with equal group score means: the surrogate average sees no
    # gap while the sign-count risk difference is 0.25
    sensitive = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    scores = np.array([0.1, 0.1, 0.1, -0.3, 0.2, -0.2, 0.1, -0.1])
    preds = np.where(scores >= 0, 1, -1)
    assert risk_difference(preds, sensitive) == pytest.approx(0.25)
    rd_k = surrogate_rd(scores, "hinge", "convex", sensitive=sensitive)
    rd_d = surrogate_rd(scores, "hinge", "concave", sensitive=sensitive)
    assert rd_k - 1.0 == pytest.approx(0.0, abs=1e-12)  # gap term vanishes
    assert rd_d + 1.0 == pytest.approx(0.0, abs=1e-12)


def test_surrogate_rd_group_swap_symmetry(rng):
    eta = rng.uniform(0.1, 0.9, size=30)
    scores = rng.standard_normal(30)
    p = 0.4
    for kind in PAIRS:
        a = surrogate_rd(-scores, kind, "convex", propensity=eta, group_rate=p)
        b = surrogate_rd(scores, kind, "convex", propensity=1 - eta, group_rate=1 - p)
        assert a == pytest.approx(b, abs=1e-12)


def test_surrogate_rd_convex_in_scores(rng):
    eta = rng.uniform(0.05, 0.95, size=40)
    p = 0.35
    for kind in PAIRS:
        for _ in range(20):
            u = rng.standard_normal(40) * 3
            v = rng.standard_normal(40) * 3
            mid = (u + v) / 2
            k_mid = surrogate_rd(mid, kind, "convex", propensity=eta, group_rate=p)
            k_avg = (surrogate_rd(u, kind, "convex", propensity=eta, group_rate=p)
                     + surrogate_rd(v, kind, "convex", propensity=eta, group_rate=p)) / 2
            assert k_mid <= k_avg + 1e-9
            d_mid = surrogate_rd(mid, kind, "concave", propensity=eta, group_rate=p)
            d_avg = (surrogate_rd(u, kind, "concave", propensity=eta, group_rate=p)
                     + surrogate_rd(v, kind, "concave", propensity=eta, group_rate=p)) / 2
            assert -d_mid <= -d_avg + 1e-9


# -- extremes and the criterion ------------------------------------------------------


def test_extremes_students(students):
    ext = rd_extremes(students.propensity, students.group_rate, kappa="hinge", delta="hinge")
    assert ext.rd_plus == pytest.approx(0.03, abs=1e-12)
    assert ext.rd_minus == pytest.approx(-0.03, abs=1e-12)
    accept_high = np.where(students.features[:, 0] == 1, 1, -1)
    assert np.array_equal(ext.f_max, accept_high)
    assert np.array_equal(ext.f_min, -accept_high)
    assert risk_difference(ext.f_max, students.sensitive) == pytest.approx(ext.rd_plus, abs=1e-12)


def test_extremes_constant_propensity():
    eta = np.full(10, 0.7)
    ext = rd_extremes(eta, 0.7)
    assert ext.rd_plus == pytest.approx(0.0, abs=1e-12)
    assert ext.rd_minus == pytest.approx(0.0, abs=1e-12)


@given(seed=st.integers(min_value=0, max_value=5_000))
@settings(max_examples=30)
def test_every_classifier_rd_between_extremes(seed):
    data = random_discrete_dataset(seed, max_cells=10, max_rows=200)
    ext = rd_extremes(data.propensity, data.group_rate)
    rds = enumerate_all_rd(data)
    assert rds.max() <= ext.rd_plus + 1e-12
    assert rds.min() >= ext.rd_minus - 1e-12
    assert rds.max() == pytest.approx(ext.rd_plus, abs=1e-12)
    assert rds.min() == pytest.approx(ext.rd_minus, abs=1e-12)


def test_constraint_free_check_students(students):
    assert constraint_free_check(students, 0.05).passed
    assert not constraint_free_check(students, 0.01).passed
    assert constraint_free_check(students, 1.0).passed
    report = constraint_free_check(students, FairnessBudget(tau=0.05))
    assert report.margin_upper == pytest.approx(0.02, abs=1e-12)


def test_constraint_free_check_needs_propensity(students):
    bare = students_dataset(with_propensity=False)
    with pytest.raises(ValueError):
        constraint_free_check(bare, 0.05)


# -- certified bounds ------------------------------------------------------------------


def test_bounds_contain_weighted_rd_random_models():
    worst = 0.0
    for seed in range(6):
        data = random_discrete_dataset(seed, max_rows=100)
        rng = np.random.default_rng(900 + seed)
        W = rng.standard_normal((data.n_features + 1, 300)) * rng.uniform(0.2, 4.0)
        scores = data.features @ W[:-1] + W[-1]
        wrd = np.array([risk_difference_weighted(scores[:, j], data.propensity, data.group_rate)
                        for j in range(300)])
        for pair in PAIRS:
            reports = rd_bounds_batch(scores, data.propensity, data.group_rate,
                                      kappa=pair, delta=pair)
            lo = np.array([r.lower_bound for r in reports])
            up = np.array([r.upper_bound for r in reports])
            worst = max(worst, float(np.maximum(lo - wrd, wrd - up).max()))
    assert worst <= 1e-9


def test_bounds_valid_at_extreme_classifier(students):
    ext = rd_extremes(students.propensity, students.group_rate, kappa="hinge", delta="hinge")
    fmin_scores = np.where(ext.f_min == 1, 1e-6, -1e-6)
    rep = rd_bounds(fmin_scores, students.propensity, students.group_rate, "hinge", "hinge")
    assert rep.upper_bound >= ext.rd_minus - 1e-12
    assert rep.lower_bound <= ext.rd_minus + 1e-12


def test_bounds_hinge_identity(students, rng):
    scores = rng.standard_normal(students.n_rows)
    rep = rd_bounds(scores, students.propensity, students.group_rate, "hinge", "hinge")
    if not rep.upper_vacuous:
        assert rep.upper_bound == pytest.approx(
            rep.rd_minus + rep.rd_kappa_of_h - rep.rd_kappa_min, abs=1e-9)


def test_bounds_clamp_and_flags(students):
    ext = rd_extremes(students.propensity, students.group_rate, kappa="hinge", delta="hinge")
    fmin_scores = np.where(ext.f_min == 1, 1e-9, -1e-9)
    rep = rd_bounds(fmin_scores, students.propensity, students.group_rate, "hinge", "hinge")
    assert not rep.upper_vacuous
    big = np.where(ext.f_max == 1, 1e3, -1e3)
    rep2 = rd_bounds(big, students.propensity, students.group_rate, "hinge", "hinge")
    assert rep2.upper_vacuous  # surrogate excess beyond the transform domain


# -- other notions ---------------------------------------------------------------------


def test_risk_ratio_students(students):
    accept_high = np.where(students.features[:, 0] == 1, 1, -1)
    assert risk_ratio(accept_high, students.sensitive) == pytest.approx(1.0625, abs=1e-12)
    assert risk_ratio(np.ones(200, int), students.sensitive) == pytest.approx(1.0)
    assert risk_ratio(-np.ones(200, int), students.sensitive) == np.inf


def test_risk_ratio_constraint_upper_bounds_indicator_form(rng):
    eta = rng.uniform(0.1, 0.9, 60)
    eta = eta / eta.mean() * 0.5
    eta = np.clip(eta, 0.01, 0.99)
    p = float(eta.mean())
    scores = rng.standard_normal(60)
    preds = np.where(scores >= 0, 1, -1)
    tau = 1.2
    val = risk_ratio_constraint(scores, eta, p, tau, "hinge")
    indicator = (np.mean((eta / p) * (scores > 0)) - tau * np.mean(
        ((1 - eta) / (1 - p)) * (scores > 0)))
    assert val >= indicator - 1e-9  # convex surrogate dominates the indicator form
    mirrored = risk_ratio_constraint(scores, eta, p, tau, "hinge", mirrored=True)
    assert np.isfinite(mirrored)
    with pytest.raises(ValueError):
        risk_ratio_constraint(scores, eta, p, 0.0, "hinge")


def test_equalized_odds_hand_dataset():
    # eight rows enumerated by hand
    y = np.array([1, 1, 1, 1, -1, -1, -1, -1])
    s = np.array([1, 1, 0, 0, 1, 1, 1, 0])
    pred = np.array([1, -1, 1, 1, 1, 1, -1, -1])
    gaps = equalized_odds(pred, y, s)
    assert gaps[1] == pytest.approx(0.5 - 1.0)
    assert gaps[-1] == pytest.approx(2.0 / 3.0)
    assert equalized_opportunity(pred, y, s) == pytest.approx(-0.5)


def test_equalized_odds_perfect_predictor_balanced_groups():
    y = np.array([1, 1, -1, -1] * 6)
    s = np.array([1, 0, 1, 0] * 6)
    gaps = equalized_odds(y, y, s)
    assert gaps[1] == pytest.approx(0.0)
    assert gaps[-1] == pytest.approx(0.0)


def test_equalized_odds_missing_cell_reported():
    y = np.array([1, 1, -1, -1])
    s = np.array([1, 1, 1, 0])
    gaps = equalized_odds(np.ones(4, int), y, s)
    assert gaps[1] is None  # label +1 has no group-0 rows
    assert gaps[-1] == pytest.approx(0.0)


def test_equalized_odds_surrogate_matches_conditional_indicator_limit():
    y = np.array([1, 1, 1, 1, -1, -1, -1, -1])
    s = np.array([1, 0, 1, 0, 1, 0, 1, 0])
    scores = np.array([5.0, -5.0, 5.0, 5.0, -5.0, -5.0, 5.0, -5.0])
    val = equalized_odds_surrogate(scores, y, s, "hinge", "convex", label_value=1)
    m = y == 1
    expected = (np.mean(np.maximum(scores[m & (s == 1)] + 1, 0))
                + np.mean(np.maximum(1 - scores[m & (s == 0)], 0)) - 1)
    assert val == pytest.approx(expected, abs=1e-12)


def test_budget_validation():
    with pytest.raises(ValueError):
        FairnessBudget()
    with pytest.raises(ValueError):
        FairnessBudget(tau=-0.1)
    with pytest.raises(ValueError):
        FairnessBudget(c1=0.1, c2=3.0)
    with pytest.raises(ValueError):
        FairnessBudget(tau=0.1, notion="unknown")
    b = FairnessBudget(c1=0.1, c2=0.2)
    assert b.upper == 0.1 and b.lower == 0.2
