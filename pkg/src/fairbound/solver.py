"""Linear classifiers trained by an augmented Lagrangian over convex fairness
constraints, with plain empirical-risk minimisation as the base case.

The inner solver is full-batch gradient descent with a Barzilai-Borwein
initial step and Armijo backtracking; the outer loop updates multipliers
lambda_i <- max(0, lambda_i + rho g_i) and escalates the penalty when
feasibility stalls.  Hinge kinks are handled through right-derivative
subgradients, so every piece stays deterministic.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .fairness import BoundsReport, Extremes, FairnessBudget, rd_bounds, rd_extremes
from .surrogate import GapTransform, Surrogate, get_surrogate, margin_loss

logger = logging.getLogger("fairbound.solver")

RHO_CAP = 1e8


@dataclass(frozen=True)
class LinearModel:
    """Affine score function; the classifier is its sign with sign(0) = +1."""

    weights: np.ndarray
    bias: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def scores(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=float)
        if X.shape[1] != self.weights.shape[0]:
            raise ValueError(f"feature dimension mismatch: {X.shape[1]} vs {self.weights.shape[0]}")
        return X @ self.weights + self.bias


def predict(model: LinearModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Scores and +-1 labels for a Dataset or a feature matrix."""
    X = data.features if hasattr(data, "features") else data
    s = model.scores(X)
    return s, np.where(s >= 0.0, 1, -1)


@dataclass(frozen=True)
class SolverConfig:
    loss: str | Surrogate = "logistic"
    kappa: str | Surrogate = "hinge"
    delta: str | Surrogate | None = None
    budget: FairnessBudget | None = None
    l2_penalty: float = 1e-4
    max_outer_iters: int = 60
    max_inner_iters: int = 2000
    feasibility_tol: float = 1e-6
    objective_tol: float = 1e-8
    penalty_growth: float = 10.0
    rho_init: float = 10.0
    init: str = "zeros"  # or "seeded-random"
    seed: int = 0

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.objective_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.init not in ("zeros", "seeded-random"):
            raise ValueError("init must be 'zeros' or 'seeded-random'")

    def digest(self) -> str:
        text = "|".join(str(x) for x in (
            getattr(self.loss, "kind", self.loss), getattr(self.kappa, "kind", self.kappa),
            getattr(self.delta, "kind", self.delta), self.budget, self.l2_penalty,
            self.max_outer_iters, self.max_inner_iters, self.feasibility_tol,
            self.objective_tol, self.penalty_growth, self.rho_init, self.init, self.seed))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Constraint:
    """One convex inequality g(theta) <= 0, expressed through the score vector
    h = X w + b so evaluations can share a single matrix product.

    ``value(h)`` returns g; ``coef(h)`` returns per-row weights c with
    grad g = (X^T c, sum c).
    """

    name: str
    value: Callable[[np.ndarray], float]
    coef: Callable[[np.ndarray], np.ndarray]

    def fun(self, theta: np.ndarray, X: np.ndarray) -> float:
        return self.value(X @ theta[:-1] + theta[-1])

    def grad(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        c = self.coef(X @ theta[:-1] + theta[-1])
        return np.concatenate([X.T @ c, [c.sum()]])


@dataclass
class TrainResult:
    model: LinearModel
    status: str  # "feasible" or "infeasible"
    objective: float
    constraint_values: np.ndarray
    multipliers: np.ndarray
    outer_iters: int
    inner_iters: int
    grad_norm: float
    message: str = ""
    bounds: BoundsReport | None = None
    thresholds: tuple[float, float] | None = None

    @property
    def max_violation(self) -> float:
        if self.constraint_values.size == 0:
            return 0.0
        return float(np.maximum(self.constraint_values, 0.0).max())


# -- objective machinery ---------------------------------------------------------


def surrogate_rd_terms(data, surrogate: str | Surrogate, side: str,
                       weighting: str = "indicator"):
    """Score-space value and gradient coefficients of the chosen-side surrogate
    risk difference.  The convex side is convex in the scores (hence in theta);
    the negated concave side is too."""
    s = get_surrogate(surrogate)
    if weighting == "indicator":
        eta = (data.sensitive == 1).astype(float)
    elif weighting == "propensity":
        if data.propensity is None:
            raise ValueError("propensity weighting needs an estimated propensity")
        eta = data.propensity
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    p = data.group_rate
    wa = eta / p
    wb = (1.0 - eta) / (1.0 - p)
    n = len(eta)
    val = s.value if side == "convex" else s.concave_value
    der = s.deriv if side == "convex" else s.concave_deriv

    def value(h):
        return float(np.mean(wa * val(h) + wb * val(-h)) - 1.0)

    def coef(h):
        return (wa * der(h) - wb * der(-h)) / n

    return value, coef


def covariance_terms(data):
    """Signed covariance between group membership and the score; the gradient
    coefficients are constant and sum to zero, so the bias drops out."""
    centered = ((data.sensitive == 1).astype(float) - data.group_rate) / data.n_rows

    def value(h):
        return float(centered @ h)

    def coef(_h):
        return centered

    return value, coef


def augmented_problem(data, config: SolverConfig, constraints: list[Constraint],
                      lam: np.ndarray, rho: float):
    """Augmented Lagrangian objective and gradient over theta = (weights, bias).

    All terms are functions of the score vector, so each evaluation performs a
    single pass X theta and a single transposed product for the gradient.
    """
    s = get_surrogate(config.loss)
    X = data.features
    y = data.labels.astype(float)
    n = X.shape[0]
    l2 = config.l2_penalty

    def fun(theta):
        w = theta[:-1]
        h = X @ w + theta[-1]
        total = float(np.mean(s.loss(y * h)) + 0.5 * l2 * w @ w)
        for i, c in enumerate(constraints):
            total += (max(0.0, lam[i] + rho * c.value(h)) ** 2 - lam[i] ** 2) / (2.0 * rho)
        return total

    def grad(theta):
        w = theta[:-1]
        h = X @ w + theta[-1]
        coef = s.loss_deriv(y * h) * y / n
        for i, c in enumerate(constraints):
            mult = max(0.0, lam[i] + rho * c.value(h))
            if mult > 0.0:
                coef = coef + mult * c.coef(h)
        return np.concatenate([X.T @ coef + l2 * w, [coef.sum()]])

    return fun, grad


def _subgradient_phase(fun, grad, theta, f, g, rounds: int = 40):
    """Diminishing-step subgradient walk for points where the line search
    stalls on a kink; keeps the best iterate seen and reports improvement."""
    best_theta, best_f = theta, f
    cur = theta
    scale = 0.01 * max(1.0, float(np.linalg.norm(theta)))
    for j in range(1, rounds + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            break
        cur = cur - (scale / j) * g / gnorm
        with np.errstate(over="ignore"):
            fc = fun(cur)
        if np.isfinite(fc) and fc < best_f:
            best_theta, best_f = cur, fc
        g = grad(cur)
    improved = best_f < f - 1e-15
    return improved, best_theta, best_f, grad(best_theta)


def _descend(fun, grad, theta0: np.ndarray, gtol: float, max_iters: int) -> tuple[np.ndarray, int, float]:
    """Gradient descent with BB-seeded Armijo backtracking line search and a
    subgradient fallback for hinge kinks."""
    theta = theta0.copy()
    f = fun(theta)
    g = grad(theta)
    step = 1.0
    prev_theta = prev_g = None
    it = 0
    stalls = 0
    while it < max_iters:
        it += 1
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol:
            break
        if prev_theta is not None:
            dt = theta - prev_theta
            dg = g - prev_g
            denom = float(dt @ dg)
            if denom > 1e-18:
                step = min(max(float(dt @ dt) / denom, 1e-12), 1e8)
            else:
                step = min(step * 2.0, 1e8)
        d = -g
        t = step
        ok = False
        for _ in range(60):
            cand = theta + t * d
            with np.errstate(over="ignore"):
                fc = fun(cand)
            if np.isfinite(fc) and fc <= f - 1e-4 * t * gnorm * gnorm:
                ok = True
                break
            t *= 0.5
        if not ok:
            improved, theta, f, g = _subgradient_phase(fun, grad, theta, f, g)
            stalls += 1
            prev_theta = prev_g = None
            step = 1.0
            if not improved or stalls >= 5:
                break
            continue
        prev_theta, prev_g = theta, g
        theta, f = cand, fc
        g = grad(theta)
    return theta, it, float(np.linalg.norm(grad(theta)))


def _initial_theta(dim: int, config: SolverConfig) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros(dim)
    rng = np.random.default_rng(config.seed)
    return 0.01 * rng.standard_normal(dim)


def _train(data, config: SolverConfig, constraints: list[Constraint]) -> TrainResult:
    theta = _initial_theta(data.n_features + 1, config)
    total_inner = 0

    def objective(th):
        fun, _ = augmented_problem(data, config, [], np.zeros(0), 1.0)
        return fun(th)

    def constraint_values(th):
        h = data.features @ th[:-1] + th[-1]
        return np.asarray([c.value(h) for c in constraints])

    if not constraints:
        fun, grad = augmented_problem(data, config, [], np.zeros(0), 1.0)
        theta, iters, gnorm = _descend(fun, grad, theta,
                                       config.objective_tol, config.max_inner_iters)
        model = LinearModel(theta[:-1], float(theta[-1]), data.feature_names)
        return TrainResult(model, "feasible", fun(theta), np.zeros(0), np.zeros(0),
                           0, iters, gnorm)

    lam = np.zeros(len(constraints))
    rho = config.rho_init
    best_theta, best_viol = theta.copy(), np.inf
    prev_viol = np.inf
    stalled_at_cap = 0
    status, message = "infeasible", "outer iteration cap reached"
    outer = 0
    gnorm = np.inf
    for outer in range(1, config.max_outer_iters + 1):
        fun, grad = augmented_problem(data, config, constraints, lam, rho)
        # at the penalty cap the inner problem is too ill-conditioned for full
        # effort to pay off; cheap probes suffice to detect stagnation
        inner_cap = config.max_inner_iters if rho < RHO_CAP else min(config.max_inner_iters, 300)
        theta, iters, gnorm = _descend(fun, grad, theta, config.objective_tol, inner_cap)
        total_inner += iters
        g = constraint_values(theta)
        viol = float(np.maximum(g, 0.0).max())
        if viol < best_viol:
            best_viol, best_theta = viol, theta.copy()
        lam = np.maximum(0.0, lam + rho * g)
        comp = float(np.minimum(lam, np.maximum(-g, 0.0)).max()) if len(lam) else 0.0
        if viol <= config.feasibility_tol and comp <= max(config.feasibility_tol, 1e-6):
            status, message = "feasible", ""
            break
        # multiplier steps alone shrink the violation geometrically on convex
        # problems; escalate the penalty only on real stagnation
        if viol > 0.9 * prev_viol:
            if rho >= RHO_CAP:
                stalled_at_cap += 1
                if stalled_at_cap >= 3:
                    status = "infeasible"
                    message = (f"no feasibility progress at penalty cap; best violation {best_viol:.3g}")
                    theta = best_theta
                    break
            rho = min(rho * config.penalty_growth, RHO_CAP)
        else:
            stalled_at_cap = 0
        prev_viol = viol

    g = constraint_values(theta)
    model = LinearModel(theta[:-1], float(theta[-1]), data.feature_names)
    if status == "infeasible":
        logger.warning("constrained training did not reach feasibility: %s", message)
    return TrainResult(model, status, objective(theta), g, lam, outer, total_inner, gnorm,
                       message=message)


# -- public training entry points -------------------------------------------------


def train_unconstrained(data, config: SolverConfig | None = None) -> TrainResult:
    """Minimise the surrogate margin loss plus an l2 ridge on the weights."""
    return _train(data, config or SolverConfig(), [])


def train_formulation1(data, config: SolverConfig, thresholds: tuple[float, float],
                       weighting: str = "indicator") -> TrainResult:
    """Loss minimisation under raw surrogate risk-difference caps.

    thresholds = (b1, b2) bound the convex-side value by b1 and the negated
    concave-side value by b2, both on the surrogate scale.
    """
    kappa = get_surrogate(config.kappa)
    delta = get_surrogate(config.delta if config.delta is not None else config.kappa)
    b1, b2 = float(thresholds[0]), float(thresholds[1])
    k_val, k_coef = surrogate_rd_terms(data, kappa, "convex", weighting)
    d_val, d_coef = surrogate_rd_terms(data, delta, "concave", weighting)
    constraints = [
        Constraint("surrogate_rd_upper", lambda h: k_val(h) - b1, k_coef),
        Constraint("surrogate_rd_lower", lambda h: -d_val(h) - b2, lambda h: -d_coef(h)),
    ]
    result = _train(data, config, constraints)
    result.thresholds = (b1, b2)
    return result


def refined_thresholds(data, config: SolverConfig) -> tuple[float, float, Extremes,
                                                            tuple[GapTransform, GapTransform]]:
    """Surrogate-scale caps that certify the true risk-difference budget."""
    if data.propensity is None:
        raise ValueError("refined training needs a propensity estimate")
    budget = config.budget
    if budget is None:
        raise ValueError("refined training needs a fairness budget")
    kappa = get_surrogate(config.kappa)
    delta = get_surrogate(config.delta if config.delta is not None else config.kappa)
    ext = rd_extremes(data.propensity, data.group_rate, kappa=kappa, delta=delta)
    t_k = GapTransform(kappa, data.group_rate, side="convex")
    t_d = GapTransform(delta, data.group_rate, side="concave")
    c1, c2 = budget.upper, budget.lower
    if c1 < ext.rd_minus or -c2 > ext.rd_plus:
        raise ValueError("budget contradicts the extreme risk differences; unattainable")
    b1 = float(t_k.gap(c1 - ext.rd_minus)) + ext.rd_kappa_min
    b2 = float(t_d.gap(c2 + ext.rd_plus)) - ext.rd_delta_max
    return b1, b2, ext, (t_k, t_d)


def train_formulation2(data, config: SolverConfig) -> TrainResult:
    """Loss minimisation under refined caps so the certified bounds place the
    weighted risk difference inside [-c2, c1].

    The constraints weight the surrogate risk differences by the propensity,
    the same measure the certificate uses, so feasibility transfers to the
    reported bounds exactly (up to the feasibility tolerance).
    """
    b1, b2, ext, transforms = refined_thresholds(data, config)
    result = train_formulation1(data, config, (b1, b2), weighting="propensity")
    scores = result.model.scores(data.features)
    kappa = get_surrogate(config.kappa)
    delta = get_surrogate(config.delta if config.delta is not None else config.kappa)
    result.bounds = rd_bounds(scores, data.propensity, data.group_rate,
                              kappa=kappa, delta=delta, extremes=ext, transforms=transforms)
    budget = config.budget
    if result.status == "feasible":
        up_ok = result.bounds.upper_bound <= budget.upper + _certificate_slack(
            transforms[0], budget.upper - ext.rd_minus, config.feasibility_tol)
        lo_ok = result.bounds.lower_bound >= -budget.lower - _certificate_slack(
            transforms[1], budget.lower + ext.rd_plus, config.feasibility_tol)
        if not (up_ok and lo_ok):
            result.message = "certified bounds exceed the budget beyond the feasibility slack"
            logger.warning(result.message)
    return result


def _certificate_slack(transform: GapTransform, arg: float, feas_tol: float) -> float:
    """How far a feasibility_tol violation of the surrogate cap can push the
    certified bound past the budget."""
    arg = min(max(arg, 0.0), transform.mu_max)
    mu, _ = transform.inverse(float(transform.gap(arg)) + feas_tol)
    return max(mu - arg, 0.0) + 1e-12


def train_covariance_baseline(data, config: SolverConfig, cov_threshold: float) -> TrainResult:
    """Baseline constraining |cov(group, score)| <= threshold."""
    if cov_threshold < 0:
        raise ValueError("covariance threshold must be nonnegative")
    if not np.isfinite(cov_threshold):
        return _train(data, config, [])
    c_val, c_coef = covariance_terms(data)
    constraints = [
        Constraint("covariance_upper", lambda h: c_val(h) - cov_threshold, c_coef),
        Constraint("covariance_lower", lambda h: -c_val(h) - cov_threshold,
                   lambda h: -c_coef(h)),
    ]
    return _train(data, config, constraints)


# -- model files -------------------------------------------------------------------

MODEL_FORMAT = "fairbound-model v1"


def save_model(model: LinearModel, path, config: SolverConfig | None = None) -> None:
    lines = [MODEL_FORMAT]
    if config is not None:
        lines.append(f"config\t{config.digest()}")
    lines.append(f"bias\t{float(model.bias)!r}")
    names = model.feature_names or tuple(f"x{i}" for i in range(len(model.weights)))
    for name, w in zip(names, model.weights):
        lines.append(f"w\t{name}\t{float(w)!r}")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    tmp.replace(path)


def load_model(path) -> LinearModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_FORMAT:
        raise ValueError(f"{path} is not a recognised model file")
    bias = 0.0
    names, weights = [], []
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "bias":
            bias = float(parts[1])
        elif parts[0] == "w":
            names.append(parts[1])
            weights.append(float(parts[2]))
    return LinearModel(np.asarray(weights), bias, tuple(names))
