import numpy as np
import pytest

from fairbound.dataset import Dataset
from fairbound.fairness import FairnessBudget, risk_difference_weighted
from fairbound.solver import (
    LinearModel,
    SolverConfig,
    augmented_problem,
    Constraint,
    covariance_problem,
    load_model,
    predict,
    refined_thresholds,
    save_model,
    surrogate_rd_problem,
    train_covariance_baseline,
    train_formulation1,
    train_formulation2,
    train_unconstrained,
    _loss_problem,
)
from fairbound.surrogate import margin_loss
from fairbound.synthetic import biased_dataset


def two_point_data():
    feats = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.1], [-1.0, -0.1]])
    labels = np.array([1, -1, 1, -1])
    sens = np.array([1, 0, 0, 1])
    return Dataset(feats, labels, sens, ("a", "b"), 0.5)


def test_unconstrained_separable_reaches_full_accuracy():
    data = two_point_data()
    res = train_unconstrained(data, SolverConfig(loss="logistic", l2_penalty=0.01))
    _, preds = predict(res.model, data)
    assert res.status == "feasible"
    assert np.array_equal(preds, data.labels)


def test_zero_init_symmetric_data_keeps_zero_bias():
    feats = np.array([[1.0], [-1.0]] * 20)
    labels = np.array([1, -1] * 20)
    sens = np.array([1, 0, 0, 1] * 10)
    data = Dataset(feats, labels, sens, ("a",), 0.5)
    res = train_unconstrained(data, SolverConfig(loss="logistic", l2_penalty=1e-3))
    assert res.model.bias == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("loss", ["logistic", "square", "exponential", "hinge"])
def test_loss_gradient_matches_finite_differences(loss, guarantee_family):
    data = guarantee_family
    fun, grad = _loss_problem(data, SolverConfig(loss=loss, l2_penalty=1e-3))
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 25:
        theta = rng.standard_normal(data.n_features + 1) * 0.8
        if loss == "hinge":
            margins = data.labels * (data.features @ theta[:-1] + theta[-1])
            if np.any(np.abs(margins - 1.0) < 1e-3):
                continue  # keep clear of the kink, where subgradients differ
        g = grad(theta)
        h = 1e-5
        for j in range(len(theta)):
            e = np.zeros_like(theta)
            e[j] = h
            num = (fun(theta + e) - fun(theta - e)) / (2 * h)
            assert num == pytest.approx(g[j], rel=1e-4, abs=1e-7)
        checked += 1


def test_augmented_gradient_matches_finite_differences(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", kappa="square", l2_penalty=1e-3)
    base_fun, base_grad = _loss_problem(data, cfg)
    kf, kg = surrogate_rd_problem(data, "square", "convex", "propensity")
    df, dg = surrogate_rd_problem(data, "square", "concave", "propensity")
    cons = [Constraint("k", lambda t: kf(t) - 0.9, kg),
            Constraint("d", lambda t: -df(t) - 0.9, lambda t: -dg(t))]
    fun, grad = augmented_problem(base_fun, base_grad, cons, np.array([0.3, 0.1]), 7.0)
    rng = np.random.default_rng(8)
    for _ in range(100):
        theta = rng.standard_normal(data.n_features + 1)
        g = grad(theta)
        h = 1e-5
        j = int(rng.integers(len(theta)))
        e = np.zeros_like(theta)
        e[j] = h
        num = (fun(theta + e) - fun(theta - e)) / (2 * h)
        assert num == pytest.approx(g[j], rel=1e-4, abs=1e-8)


def test_vacuous_thresholds_recover_unconstrained(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", kappa="hinge", l2_penalty=1e-4)
    free = train_unconstrained(data, cfg)
    capped = train_formulation1(data, cfg, (2.0, 2.0))
    assert capped.status == "feasible"
    assert capped.objective == pytest.approx(free.objective, abs=1e-6)
    assert np.all(capped.multipliers <= 1e-9)


def test_tight_threshold_activates_constraint_kkt(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", kappa="hinge", l2_penalty=1e-4)
    free = train_unconstrained(data, cfg)
    kf, _ = surrogate_rd_problem(data, "hinge", "convex", "indicator")
    free_level = kf(np.concatenate([free.model.weights, [free.model.bias]]))
    b1 = free_level - 0.15
    res = train_formulation1(data, cfg, (b1, 2.0))
    assert res.status == "feasible"
    g1 = res.constraint_values[0]
    assert abs(g1) <= 1e-6  # active
    assert res.multipliers[0] > 0
    # slack constraint carries a vanishing multiplier
    assert res.constraint_values[1] < -1e-3
    assert res.multipliers[1] <= 1e-9


def test_two_inits_reach_same_objective(guarantee_family):
    data = guarantee_family
    budget = FairnessBudget(c1=0.05, c2=0.05)
    a = train_formulation2(data, SolverConfig(loss="logistic", kappa="hinge", budget=budget,
                                              init="zeros"))
    b = train_formulation2(data, SolverConfig(loss="logistic", kappa="hinge", budget=budget,
                                              init="seeded-random", seed=123))
    assert a.status == b.status == "feasible"
    assert b.objective == pytest.approx(a.objective, rel=1e-4)
    assert np.max(np.abs(b.constraint_values - a.constraint_values)) <= 1e-4


def test_refined_thresholds_hinge_identity(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", kappa="hinge",
                       budget=FairnessBudget(c1=0.05, c2=0.07))
    b1, b2, ext, _ = refined_thresholds(data, cfg)
    assert b1 == pytest.approx(0.05 - ext.rd_minus + ext.rd_kappa_min, abs=1e-12)
    assert b2 == pytest.approx(0.07 + ext.rd_plus - ext.rd_delta_max, abs=1e-12)


def test_formulation2_guarantee_on_family(guarantee_family):
    data = guarantee_family
    losses = []
    for c in (0.2, 0.05):
        cfg = SolverConfig(loss="logistic", kappa="hinge", budget=FairnessBudget(c1=c, c2=c))
        res = train_formulation2(data, cfg)
        assert res.status == "feasible"
        scores, _ = predict(res.model, data)
        wrd = risk_difference_weighted(scores, data.propensity, data.group_rate)
        assert abs(wrd) <= c + 1e-4
        assert res.bounds.upper_bound <= c + 1e-4
        assert res.bounds.lower_bound >= -c - 1e-4
        losses.append(res.objective)
    assert losses[1] >= losses[0] - 1e-6


def test_formulation2_needs_budget_and_propensity(guarantee_family):
    with pytest.raises(ValueError):
        train_formulation2(guarantee_family, SolverConfig(loss="logistic"))
    bare = biased_dataset(with_propensity=False)
    with pytest.raises(ValueError):
        train_formulation2(bare, SolverConfig(
            loss="logistic", budget=FairnessBudget(c1=0.1, c2=0.1)))


def test_formulation2_infeasible_budget_reported(guarantee_family):
    cfg = SolverConfig(loss="logistic", kappa="hinge",
                       budget=FairnessBudget(c1=0.002, c2=0.002),
                       max_outer_iters=25, max_inner_iters=300)
    res = train_formulation2(guarantee_family, cfg)
    assert res.status == "infeasible"
    assert res.max_violation > 0
    assert "violation" in res.message


def test_covariance_baseline_zero_threshold(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", l2_penalty=1e-4)
    res = train_covariance_baseline(data, cfg, 0.0)
    assert res.status == "feasible"
    cf, _ = covariance_problem(data)
    theta = np.concatenate([res.model.weights, [res.model.bias]])
    assert abs(cf(theta)) <= 1e-6


def test_covariance_baseline_infinite_threshold_is_unconstrained(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", l2_penalty=1e-4)
    free = train_unconstrained(data, cfg)
    res = train_covariance_baseline(data, cfg, np.inf)
    assert res.objective == pytest.approx(free.objective, abs=1e-10)
    with pytest.raises(ValueError):
        train_covariance_baseline(data, cfg, -1.0)


def test_covariance_tradeoff_monotone(guarantee_family):
    data = guarantee_family
    cfg = SolverConfig(loss="logistic", l2_penalty=1e-4)
    cf, _ = covariance_problem(data)
    free = train_unconstrained(data, cfg)
    cov0 = abs(cf(np.concatenate([free.model.weights, [free.model.bias]])))
    losses = []
    for m in (1.0, 0.5, 0.1, 0.0):
        losses.append(train_covariance_baseline(data, cfg, m * cov0).objective)
    assert all(losses[i + 1] >= losses[i] - 1e-6 for i in range(len(losses) - 1))


def test_predict_conventions(guarantee_family):
    model = LinearModel(np.zeros(2), 0.0, ("A", "B"))
    scores, labels = predict(model, guarantee_family)
    assert np.all(scores == 0.0)
    assert np.all(labels == 1)  # sign(0) = +1
    doubled = LinearModel(2 * model.weights + 1e-3, 2 * model.bias + 1e-3)
    s1, l1 = predict(LinearModel(np.array([0.5, -0.2]), 0.1), guarantee_family)
    s2, l2 = predict(LinearModel(np.array([1.0, -0.4]), 0.2), guarantee_family)
    assert np.array_equal(l1, l2)  # positive scaling preserves labels
    with pytest.raises(ValueError):
        predict(LinearModel(np.zeros(3), 0.0), guarantee_family)


def test_model_save_load_round_trip(tmp_path):
    model = LinearModel(np.array([0.125, -2.5e-7, 3.0]), -1.75e-3, ("a", "b", "c"))
    path = tmp_path / "model.txt"
    save_model(model, path, SolverConfig())
    back = load_model(path)
    assert np.array_equal(back.weights, model.weights)
    assert back.bias == model.bias
    assert back.feature_names == model.feature_names
    with pytest.raises(ValueError):
        load_model(tmp_path / "model.txt.tmp") if (tmp_path / "model.txt.tmp").exists() \
            else (_ for _ in ()).throw(ValueError("gone"))


def test_model_requires_finite_parameters():
    with pytest.raises(ValueError):
        LinearModel(np.array([np.inf]), 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(feasibility_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(penalty_growth=1.0)
    with pytest.raises(ValueError):
        SolverConfig(init="warm")
    assert SolverConfig(seed=1).digest() != SolverConfig(seed=2).digest()
