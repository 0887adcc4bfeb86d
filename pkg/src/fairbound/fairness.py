"""Fairness metrics, risk-difference extremes, the constraint-free criterion,
and certified bounds on the true risk difference of a scored model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .surrogate import (
    GapTransform,
    Surrogate,
    get_surrogate,
    max_conditional_concave_rd,
    max_conditional_rd,
    min_conditional_rd,
    min_conditional_surrogate_rd,
)

logger = logging.getLogger("fairbound.fairness")

NOTIONS = ("risk-difference", "risk-ratio", "equalized-odds", "equalized-opportunity")


class DegenerateGroupError(ValueError):
    """Raised when an operation needs both sensitive groups present."""


@dataclass(frozen=True)
class FairnessBudget:
    """User fairness budget: symmetric tau or asymmetric (c1, c2) caps on the
    chosen notion (risk-difference caps satisfy -c2 <= RD <= c1)."""

    tau: float | None = None
    c1: float | None = None
    c2: float | None = None
    notion: str = "risk-difference"

    def __post_init__(self):
        if self.notion not in NOTIONS:
            raise ValueError(f"unknown fairness notion {self.notion!r}")
        if self.tau is None and (self.c1 is None or self.c2 is None):
            raise ValueError("budget needs tau or both c1 and c2")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.notion == "risk-ratio" and self.tau is not None and self.tau <= 0:
            raise ValueError("risk-ratio threshold must be positive")
        for c in (self.c1, self.c2):
            if c is not None and not 0.0 <= c <= 2.0:
                raise ValueError("c1 and c2 must lie in [0, 2]")

    @property
    def upper(self) -> float:
        return self.c1 if self.c1 is not None else self.tau

    @property
    def lower(self) -> float:
        return self.c2 if self.c2 is not None else self.tau


def _group_masks(sensitive):
    s = np.asarray(sensitive)
    pos = s == 1
    neg = s == 0
    if not pos.any() or not neg.any():
        raise DegenerateGroupError("both sensitive groups must be present")
    return pos, neg


def risk_difference(predictions, sensitive) -> float:
    """Positive-prediction rate gap between the two groups, in [-1, 1]."""
    preds = np.asarray(predictions)
    pos, neg = _group_masks(sensitive)
    return float(np.mean(preds[pos] == 1) - np.mean(preds[neg] == 1))


def risk_difference_weighted(scores, propensity, group_rate: float) -> float:
    """Propensity-weighted risk difference of sign(scores), with sign(0) = +1.

    (1/N) sum eta_i/p [h_i >= 0] + (1-eta_i)/(1-p) [h_i < 0], minus 1.
    Equals the group-count risk difference when the propensity is the exact
    per-row group frequency.
    """
    h = np.asarray(scores, dtype=float)
    eta = np.asarray(propensity, dtype=float)
    p = float(group_rate)
    pos = h >= 0.0
    return float(np.mean(np.where(pos, eta / p, (1.0 - eta) / (1.0 - p))) - 1.0)


def surrogate_rd(scores, surrogate: str | Surrogate, side: str = "convex", *,
                 propensity=None, group_rate: float | None = None,
                 sensitive=None) -> float:
    """Risk difference with the indicators replaced by a surrogate.

    Weights come either from a propensity vector with its group rate, or from
    the observed group indicator (pass ``sensitive``), in which case the value
    reduces to mean_pos surrogate(h) + mean_neg surrogate(-h) - 1.
    """
    s = get_surrogate(surrogate)
    h = np.asarray(scores, dtype=float)
    if sensitive is not None:
        pos, neg = _group_masks(sensitive)
        eta = pos.astype(float)
        p = float(np.mean(eta))
    else:
        if propensity is None or group_rate is None:
            raise ValueError("need either sensitive or (propensity, group_rate)")
        eta = np.asarray(propensity, dtype=float)
        p = float(group_rate)
    f = s.value if side == "convex" else s.concave_value
    vals = (eta / p) * f(h) + ((1.0 - eta) / (1.0 - p)) * f(-h)
    return float(np.mean(vals) - 1.0)


@dataclass(frozen=True)
class Extremes:
    """Extreme classifiers over the empirical propensity and their metrics."""

    f_max: np.ndarray
    f_min: np.ndarray
    rd_plus: float
    rd_minus: float
    rd_kappa_min: float | None = None
    rd_delta_max: float | None = None


def rd_extremes(propensity, group_rate: float,
                kappa: str | Surrogate | None = None,
                delta: str | Surrogate | None = None) -> Extremes:
    """Maximal / minimal risk-difference classifiers and their extreme values.

    f_max predicts +1 exactly where the propensity reaches the group rate;
    f_min is its negation.  Also returns the extreme surrogate risk
    differences when surrogates are supplied.
    """
    eta = np.asarray(propensity, dtype=float)
    p = float(group_rate)
    f_max = np.where(eta >= p, 1, -1)
    rd_plus = float(np.mean(max_conditional_rd(eta, p)))
    rd_minus = float(np.mean(min_conditional_rd(eta, p)))
    rd_kappa_min = None
    rd_delta_max = None
    if kappa is not None:
        rd_kappa_min = float(np.mean(min_conditional_surrogate_rd(eta, p, kappa)))
    if delta is not None:
        rd_delta_max = float(np.mean(max_conditional_concave_rd(eta, p, delta)))
    return Extremes(f_max=f_max, f_min=-f_max, rd_plus=rd_plus, rd_minus=rd_minus,
                    rd_kappa_min=rd_kappa_min, rd_delta_max=rd_delta_max)


@dataclass(frozen=True)
class CriterionReport:
    """Outcome of the constraint-free fairness check on a dataset."""

    passed: bool
    tau: float
    rd_plus: float
    rd_minus: float
    margin_upper: float  # tau - rd_plus
    margin_lower: float  # rd_minus + tau

    def lines(self):
        yield f"criterion: {'PASS' if self.passed else 'FAIL'}"
        yield f"tau: {self.tau:.12g}"
        yield f"rd_plus: {self.rd_plus:.12g}"
        yield f"rd_minus: {self.rd_minus:.12g}"
        yield f"margin_upper: {self.margin_upper:.12g}"
        yield f"margin_lower: {self.margin_lower:.12g}"


def constraint_free_check(data, budget: FairnessBudget | float) -> CriterionReport:
    """PASS when every classifier trained on the data is fair at level tau,
    i.e. rd_plus <= tau and rd_minus >= -tau."""
    if not isinstance(budget, FairnessBudget):
        budget = FairnessBudget(tau=float(budget))
    if budget.notion != "risk-difference":
        raise ValueError("the constraint-free criterion is defined for risk-difference budgets")
    if data.propensity is None:
        raise ValueError("dataset needs a propensity estimate; run estimate_propensity first")
    ext = rd_extremes(data.propensity, data.group_rate)
    tau = float(budget.tau if budget.tau is not None else min(budget.c1, budget.c2))
    passed = ext.rd_plus <= tau and ext.rd_minus >= -tau
    return CriterionReport(passed=passed, tau=tau, rd_plus=ext.rd_plus, rd_minus=ext.rd_minus,
                           margin_upper=tau - ext.rd_plus, margin_lower=ext.rd_minus + tau)


@dataclass(frozen=True)
class BoundsReport:
    """Certified interval for the weighted risk difference of a scored model."""

    rd_minus: float
    rd_plus: float
    rd_kappa_min: float
    rd_delta_max: float
    rd_kappa_of_h: float
    rd_delta_of_h: float
    lower_bound: float
    upper_bound: float
    upper_vacuous: bool = False
    lower_vacuous: bool = False
    upper_clamped_zero: bool = False
    lower_clamped_zero: bool = False

    def lines(self):
        for name in ("rd_minus", "rd_plus", "rd_kappa_min", "rd_delta_max",
                     "rd_kappa_of_h", "rd_delta_of_h", "lower_bound", "upper_bound"):
            yield f"{name}: {getattr(self, name):.12g}"
        yield f"upper_vacuous: {self.upper_vacuous}"
        yield f"lower_vacuous: {self.lower_vacuous}"


def rd_bounds(scores, propensity, group_rate: float,
              kappa: str | Surrogate = "hinge", delta: str | Surrogate | None = None,
              extremes: Extremes | None = None,
              transforms: tuple[GapTransform, GapTransform] | None = None) -> BoundsReport:
    """Certified lower and upper bounds on the weighted risk difference.

    upper = rd_minus + inverse_gap(convex excess); lower = rd_plus -
    inverse_gap(concave shortfall).  All surrogate risk differences use the
    same propensity weighting, which makes the inequalities exact on the
    empirical measure.
    """
    reports = rd_bounds_batch(np.asarray(scores, dtype=float)[:, None], propensity, group_rate,
                              kappa=kappa, delta=delta, extremes=extremes, transforms=transforms)
    return reports[0]


def rd_bounds_batch(score_matrix, propensity, group_rate: float,
                    kappa: str | Surrogate = "hinge", delta: str | Surrogate | None = None,
                    extremes: Extremes | None = None,
                    transforms: tuple[GapTransform, GapTransform] | None = None) -> list[BoundsReport]:
    """Vectorised :func:`rd_bounds` over the columns of an N x M score matrix."""
    kappa = get_surrogate(kappa)
    delta = kappa if delta is None else get_surrogate(delta)
    H = np.asarray(score_matrix, dtype=float)
    eta = np.asarray(propensity, dtype=float)
    p = float(group_rate)
    if extremes is None or extremes.rd_kappa_min is None or extremes.rd_delta_max is None:
        extremes = rd_extremes(eta, p, kappa=kappa, delta=delta)
    if transforms is None:
        transforms = (GapTransform(kappa, p, side="convex"),
                      GapTransform(delta, p, side="concave"))
    t_kappa, t_delta = transforms

    wa = (eta / p)[:, None]
    wb = ((1.0 - eta) / (1.0 - p))[:, None]
    rd_k = np.mean(wa * kappa.value(H) + wb * kappa.value(-H), axis=0) - 1.0
    rd_d = np.mean(wa * delta.concave_value(H) + wb * delta.concave_value(-H), axis=0) - 1.0

    upper_arg = rd_k - extremes.rd_kappa_min
    lower_arg = extremes.rd_delta_max - rd_d
    up_clamp = upper_arg < 0
    lo_clamp = lower_arg < 0
    mu_up, up_sat = t_kappa.inverse_many(np.maximum(upper_arg, 0.0))
    mu_lo, lo_sat = t_delta.inverse_many(np.maximum(lower_arg, 0.0))

    out = []
    for j in range(H.shape[1]):
        out.append(BoundsReport(
            rd_minus=extremes.rd_minus, rd_plus=extremes.rd_plus,
            rd_kappa_min=extremes.rd_kappa_min, rd_delta_max=extremes.rd_delta_max,
            rd_kappa_of_h=float(rd_k[j]), rd_delta_of_h=float(rd_d[j]),
            lower_bound=float(extremes.rd_plus - mu_lo[j]),
            upper_bound=float(extremes.rd_minus + mu_up[j]),
            upper_vacuous=bool(up_sat[j]), lower_vacuous=bool(lo_sat[j]),
            upper_clamped_zero=bool(up_clamp[j]), lower_clamped_zero=bool(lo_clamp[j]),
        ))
    return out


RATIO_INF = math.inf


def risk_ratio(predictions, sensitive) -> float:
    """Ratio of positive-prediction rates, non-sensitive over sensitive group.
    An empty denominator yields the +inf sentinel (with a warning)."""
    preds = np.asarray(predictions)
    pos, neg = _group_masks(sensitive)
    num = float(np.mean(preds[pos] == 1))
    den = float(np.mean(preds[neg] == 1))
    if den == 0.0:
        logger.warning("risk ratio denominator group has no positive predictions; reporting inf")
        return RATIO_INF
    return num / den


def risk_ratio_constraint(scores, propensity, group_rate: float, tau: float,
                          kappa: str | Surrogate = "hinge", mirrored: bool = False) -> float:
    """Convex surrogate value of the risk-ratio constraint; <= 0 means satisfied.

    (1/N) sum (eta/p) value(h) + tau ((1-eta)/(1-p)) value(-h), minus tau.
    With ``mirrored`` the groups swap and the threshold inverts, which guards
    against reverse bias from enforcing one direction only.
    """
    if tau <= 0:
        raise ValueError("risk-ratio threshold must be positive")
    s = get_surrogate(kappa)
    h = np.asarray(scores, dtype=float)
    eta = np.asarray(propensity, dtype=float)
    p = float(group_rate)
    if mirrored:
        eta, p, tau = 1.0 - eta, 1.0 - p, 1.0 / tau
    vals = (eta / p) * s.value(h) + tau * ((1.0 - eta) / (1.0 - p)) * s.value(-h)
    return float(np.mean(vals) - tau)


def equalized_odds(predictions, labels, sensitive) -> dict[int, float | None]:
    """Positive-rate gap between groups conditional on each truth label.

    A label whose (label, group) cell is empty gets None and a warning.
    """
    preds = np.asarray(predictions)
    y = np.asarray(labels)
    s = np.asarray(sensitive)
    gaps: dict[int, float | None] = {}
    for label in (-1, 1):
        m = y == label
        if not m.any():
            gaps[int(label)] = None
            continue
        try:
            gaps[int(label)] = risk_difference(preds[m], s[m])
        except DegenerateGroupError:
            logger.warning("equalized odds: label %+d has an empty group cell", label)
            gaps[int(label)] = None
    return gaps


def equalized_opportunity(predictions, labels, sensitive) -> float | None:
    """Positive-rate gap between groups among truly positive rows."""
    return equalized_odds(predictions, labels, sensitive)[1]


def equalized_odds_surrogate(scores, labels, sensitive, surrogate: str | Surrogate,
                             side: str = "convex", label_value: int = 1) -> float:
    """Surrogate form of the equalized-odds gap for one truth label, using the
    within-label group indicator weights and within-label group rate."""
    h = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    m = y == label_value
    if not m.any():
        raise ValueError(f"no rows with label {label_value:+d}")
    return surrogate_rd(h[m], surrogate, side=side, sensitive=np.asarray(sensitive)[m])
