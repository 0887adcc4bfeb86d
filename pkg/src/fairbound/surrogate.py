"""Surrogates for the positive-prediction indicator and their risk-difference transforms.

Each surrogate kind comes in two flavours derived from one convex base
function ``value``: the convex form bounds the indicator 1[score > 0] from
above, and the concave form ``1 - value(-score)`` bounds it from below.
The margin loss used for training is ``value(-margin)``, which recovers the
familiar hinge / square / logistic / exponential classification losses.

The conditional risk-difference helpers and :class:`GapTransform` implement
the machinery that converts an excess in surrogate risk difference into a
certified excess in true risk difference (and back, via the inverse).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

logger = logging.getLogger("fairbound.surrogate")

SURROGATE_KINDS = ("hinge", "square", "logistic", "exponential")


def _sigmoid(a):
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _hinge(a):
    return np.maximum(np.asarray(a, dtype=float) + 1.0, 0.0)


def _hinge_deriv(a):
    # right derivative at the kink, for determinism
    return np.where(np.asarray(a, dtype=float) >= -1.0, 1.0, 0.0)


def _square(a):
    a = np.asarray(a, dtype=float)
    return (a + 1.0) ** 2


def _square_deriv(a):
    return 2.0 * (np.asarray(a, dtype=float) + 1.0)


def _logistic(a):
    return np.logaddexp(0.0, np.asarray(a, dtype=float))


def _exponential(a):
    return np.exp(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class Surrogate:
    """A named convex surrogate with its derivative.

    ``value`` is convex and increasing at zero (``deriv(0) > 0``); it stands
    in for the indicator 1[score > 0].
    """

    kind: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]

    def concave_value(self, a):
        return 1.0 - self.value(-np.asarray(a, dtype=float))

    def concave_deriv(self, a):
        return self.deriv(-np.asarray(a, dtype=float))

    def loss(self, margin):
        return self.value(-np.asarray(margin, dtype=float))

    def loss_deriv(self, margin):
        return -self.deriv(-np.asarray(margin, dtype=float))

    @property
    def value_at_zero(self) -> float:
        return float(self.value(0.0))


_REGISTRY = {
    "hinge": Surrogate("hinge", _hinge, _hinge_deriv),
    "square": Surrogate("square", _square, _square_deriv),
    "logistic": Surrogate("logistic", _logistic, _sigmoid),
    "exponential": Surrogate("exponential", _exponential, _exponential),
}


def get_surrogate(kind: str | Surrogate) -> Surrogate:
    if isinstance(kind, Surrogate):
        return kind
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown surrogate kind {kind!r}; expected one of {SURROGATE_KINDS}") from None


def margin_loss(scores, labels, surrogate: str | Surrogate) -> float:
    """Average surrogate loss (1/N) sum value(-y_i h_i) over the sample."""
    s = get_surrogate(surrogate)
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels length mismatch: {scores.shape} vs {labels.shape}")
    return float(np.mean(s.loss(labels * scores)))


def _weights(eta, p):
    eta = np.clip(np.asarray(eta, dtype=float), 0.0, 1.0)
    if not 0.0 < p < 1.0:
        raise ValueError(f"group rate must lie in (0, 1), got {p}")
    return eta / p, (1.0 - eta) / (1.0 - p)


def min_conditional_rd(eta, p):
    """Smallest per-point contribution to the weighted risk difference."""
    a, b = _weights(eta, p)
    return np.minimum(a, b) - 1.0


def max_conditional_rd(eta, p):
    """Largest per-point contribution to the weighted risk difference."""
    a, b = _weights(eta, p)
    return np.maximum(a, b) - 1.0


def _xlogy(x, y):
    out = np.zeros_like(np.asarray(x, dtype=float))
    mask = np.asarray(x) > 0
    out[mask] = np.asarray(x)[mask] * np.log(np.asarray(y)[mask])
    return out


def min_conditional_surrogate_rd(eta, p, surrogate: str | Surrogate):
    """min over scores of (eta/p) value(s) + ((1-eta)/(1-p)) value(-s) - 1.

    Closed forms per kind; ``min_conditional_surrogate_rd_numeric`` is the
    independent minimiser used to cross-check them.
    """
    s = get_surrogate(surrogate)
    a, b = _weights(eta, p)
    nu = a + b
    if s.kind == "hinge":
        return 2.0 * np.minimum(a, b) - 1.0
    if s.kind == "square":
        return 4.0 * a * b / nu - 1.0
    if s.kind == "exponential":
        return 2.0 * np.sqrt(a * b) - 1.0
    if s.kind == "logistic":
        return _xlogy(a, nu / np.where(a > 0, a, 1.0)) + _xlogy(b, nu / np.where(b > 0, b, 1.0)) - 1.0
    return min_conditional_surrogate_rd_numeric(eta, p, s)


def restricted_min_conditional_surrogate_rd(eta, p, surrogate: str | Surrogate):
    """Minimum of the conditional surrogate risk difference over scores whose
    sign agrees with eta - p.  The optimum sits at score zero, so the value is
    (eta/p + (1-eta)/(1-p)) * value(0) - 1."""
    s = get_surrogate(surrogate)
    a, b = _weights(eta, p)
    return (a + b) * s.value_at_zero - 1.0


def max_conditional_concave_rd(eta, p, surrogate: str | Surrogate):
    """max over scores of the concave-form conditional risk difference.

    Uses the identity max = nu - 2 - min_convex, which follows from
    concave(s) = 1 - value(-s)."""
    a, b = _weights(eta, p)
    return (a + b) - 2.0 - min_conditional_surrogate_rd(eta, p, surrogate)


def restricted_max_conditional_concave_rd(eta, p, surrogate: str | Surrogate):
    """Maximum of the concave-form conditional risk difference over scores whose
    sign opposes eta - p; the concave objective peaks at score zero there."""
    s = get_surrogate(surrogate)
    a, b = _weights(eta, p)
    return (a + b) * (1.0 - s.value_at_zero) - 1.0


def golden_section_min(f, lo: float, hi: float, xtol: float = 1e-8) -> tuple[float, float]:
    """Golden-section search for the minimum of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, float(f(x))


def min_conditional_surrogate_rd_numeric(eta, p, surrogate: str | Surrogate,
                                         bracket: float = 30.0, xtol: float = 1e-8) -> float:
    s = get_surrogate(surrogate)
    a, b = _weights(float(eta), p)
    _, fmin = golden_section_min(lambda t: a * float(s.value(t)) + b * float(s.value(-t)) - 1.0,
                                 -bracket, bracket, xtol)
    return fmin


def max_conditional_concave_rd_numeric(eta, p, surrogate: str | Surrogate,
                                       bracket: float = 30.0, xtol: float = 1e-8) -> float:
    s = get_surrogate(surrogate)
    a, b = _weights(float(eta), p)
    _, fmin = golden_section_min(lambda t: -(a * float(s.concave_value(t)) + b * float(s.concave_value(-t)) - 1.0),
                                 -bracket, bracket, xtol)
    return -fmin


class InverseResult(NamedTuple):
    mu: float
    saturated: bool


@dataclass
class GapTransform:
    """Monotone map from a true risk-difference excess to the guaranteed
    surrogate risk-difference excess, for one surrogate and group rate.

    For a point mass at eta the surrogate gap between the sign-restricted and
    the unrestricted conditional optimum bounds how much surrogate excess any
    score must pay for a unit of true excess.  The transform evaluates that
    gap on the side of the group rate where it is smallest, which for every
    supported kind is the side reached through q = min(p, 1-p); this keeps
    the resulting bounds valid for any eta in [0, 1].  Domain: (0, 1/q].
    """

    surrogate: Surrogate
    group_rate: float
    side: str = "convex"  # "concave" gives identical values for these pairs
    check_grid: int = 101
    q: float = field(init=False)
    mu_max: float = field(init=False)

    def __post_init__(self):
        self.surrogate = get_surrogate(self.surrogate)
        p = float(self.group_rate)
        if not 0.0 < p < 1.0:
            raise ValueError(f"group rate must lie in (0, 1), got {p}")
        if self.side not in ("convex", "concave"):
            raise ValueError(f"side must be 'convex' or 'concave', got {self.side!r}")
        self.q = min(p, 1.0 - p)
        self.mu_max = 1.0 / self.q
        self._validate()

    # -- evaluation ---------------------------------------------------------

    def _point_gap(self, eta):
        """Gap between restricted and unrestricted conditional optimum at eta,
        evaluated with q as the group rate (the conservative side)."""
        if self.side == "convex":
            return (restricted_min_conditional_surrogate_rd(eta, self.q, self.surrogate)
                    - min_conditional_surrogate_rd(eta, self.q, self.surrogate))
        return (max_conditional_concave_rd(eta, self.q, self.surrogate)
                - restricted_max_conditional_concave_rd(eta, self.q, self.surrogate))

    def gap(self, mu):
        """Transform value at mu; arguments beyond the domain are clamped."""
        mu_arr = np.asarray(mu, dtype=float)
        if np.any(mu_arr > self.mu_max * (1 + 1e-12)):
            logger.info("gap transform argument clamped into (0, %g]", self.mu_max)
        mu_c = np.clip(mu_arr, 0.0, self.mu_max)
        eta = np.clip(self.q * (1.0 - self.q) * mu_c + self.q, 0.0, 1.0)
        out = np.asarray(self._point_gap(eta), dtype=float)
        out = np.where(mu_c <= 0.0, 0.0, out)
        return float(out) if np.isscalar(mu) or np.ndim(mu) == 0 else out

    def closed_gap(self, mu):
        """Closed form of the transform where one is known, else None."""
        kind = self.surrogate.kind
        mu = np.asarray(mu, dtype=float)
        c = abs(1.0 - 2.0 * self.group_rate)
        if kind == "hinge":
            return mu.copy()
        if kind == "square":
            return mu ** 2 / (2.0 + c * mu)
        if kind == "exponential":
            q = self.q
            return (np.sqrt((1.0 - q) * mu + 1.0) - np.sqrt(np.maximum(1.0 - q * mu, 0.0))) ** 2
        return None

    # -- inversion ----------------------------------------------------------

    def inverse(self, target: float) -> InverseResult:
        """Smallest mu with gap(mu) >= target; saturates at the domain end."""
        mus, sat = self.inverse_many(np.asarray([target], dtype=float))
        return InverseResult(float(mus[0]), bool(sat[0]))

    def inverse_many(self, targets) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(targets, dtype=float)
        kind = self.surrogate.kind
        top = self.gap(self.mu_max)
        saturated = t > top + 1e-12
        tc = np.minimum(np.maximum(t, 0.0), top)
        if kind == "hinge":
            mu = tc.copy()
        elif kind == "square":
            c = abs(1.0 - 2.0 * self.group_rate)
            mu = (tc * c + np.sqrt((tc * c) ** 2 + 8.0 * tc)) / 2.0
        else:
            lo = np.zeros_like(tc)
            hi = np.full_like(tc, self.mu_max)
            for _ in range(64):
                mid = (lo + hi) / 2.0
                below = self.gap(mid) < tc
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            mu = hi  # upper end keeps gap(mu) >= target, so derived bounds stay valid
        mu = np.where(saturated, self.mu_max, np.minimum(mu, self.mu_max))
        mu = np.where(t <= 0.0, 0.0, mu)
        return mu, saturated

    # -- construction-time checks -------------------------------------------

    def _validate(self):
        grid = np.linspace(self.mu_max / self.check_grid, self.mu_max, self.check_grid)
        vals = self.gap(grid)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{self.surrogate.kind} gap transform is not finite on its domain")
        if not np.all(np.diff(vals) > 0):
            raise ValueError(f"{self.surrogate.kind} gap transform is not strictly increasing; "
                             "the inverse is undefined")
        if self.gap(1e-9) > 1e-6:
            raise ValueError(f"{self.surrogate.kind} gap transform does not vanish at 0")
        mid = (vals[:-2] + vals[2:]) / 2.0
        if not np.all(mid >= vals[1:-1] - 1e-9):
            raise ValueError(f"{self.surrogate.kind} gap transform is not convex on the grid")
        closed = self.closed_gap(grid)
        if closed is not None and not np.allclose(closed, vals, atol=1e-6):
            raise ValueError(f"{self.surrogate.kind} closed form disagrees with the evaluated gap")
