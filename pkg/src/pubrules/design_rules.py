"""Publication rules for verifiable, unbiased research designs.

A design's statistic is ``X | theta ~ N(theta, s2)`` with prior
``theta ~ N(0, eta2)``, so marginally ``X ~ N(0, s2 + eta2)``.  The planner
publishes with a threshold rule ``1{|X| >= t}`` and must leave the researcher
an ex-ante publication chance of at least the design's cost.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import gaussian_kernel as gk
from ._errors import DomainError

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Environment:
    eta2: float
    ca: float

    def __post_init__(self):
        if not self.eta2 > 0:
            raise DomainError("eta2 must be positive")
        if not self.ca >= 0:
            raise DomainError("ca must be non-negative")


@dataclass(frozen=True)
class Design:
    s2: float
    cost: float = 0.0

    def __post_init__(self):
        if not self.s2 >= 0:
            raise DomainError("s2 must be non-negative")
        if not 0.0 <= self.cost <= 1.0:
            raise DomainError("cost must lie in [0, 1]")


@dataclass(frozen=True)
class ThresholdRule:
    cutoff: float

    def __post_init__(self):
        if not self.cutoff >= 0:
            raise DomainError("cutoff must be non-negative")

    def __call__(self, x):
        return np.where(np.abs(x) >= self.cutoff, 1.0, 0.0)


class DesignClass(enum.Enum):
    CHEAP = "cheap"
    EXPENSIVE = "expensive"


def marginal_sd(env: Environment, d: Design) -> float:
    return math.sqrt(d.s2 + env.eta2)


def post_var_red(env: Environment, d: Design) -> float:
    return env.eta2 ** 2 / (d.s2 + env.eta2)


def gamma_star(env: Environment, d: Design) -> float:
    """Cutoff the planner would use if the researcher needed no inducement."""
    return (d.s2 + env.eta2) / env.eta2 * math.sqrt(env.ca)


def publication_mass(env: Environment, d: Design, cutoff):
    """``P(|X| >= cutoff)`` in closed form."""
    return 2.0 * gk.sf(np.asarray(cutoff, dtype=float) / marginal_sd(env, d))


def classify_design(env: Environment, d: Design) -> DesignClass:
    if d.cost < publication_mass(env, d, gamma_star(env, d)):
        return DesignClass.CHEAP
    return DesignClass.EXPENSIVE


def optimal_cutoff(env: Environment, d: Design) -> ThresholdRule:
    """Lowest-loss threshold subject to ``P(|X| >= t) >= cost``."""
    if d.cost <= 0.0:
        return ThresholdRule(gamma_star(env, d))
    ir_cutoff = gk.two_sided_z(d.cost) * marginal_sd(env, d)
    return ThresholdRule(min(gamma_star(env, d), ir_cutoff))


def loss_at_mass(env: Environment, d: Design, mass):
    """Expected planner loss of the threshold rule that publishes ``mass``."""
    mass = np.asarray(mass, dtype=float)
    out = env.eta2 + mass * env.ca - post_var_red(env, d) * gk.upsilon(mass)
    return float(out) if out.ndim == 0 else out


def threshold_rule_loss(env: Environment, d: Design, rule: ThresholdRule | float):
    cutoff = rule.cutoff if isinstance(rule, ThresholdRule) else rule
    return loss_at_mass(env, d, publication_mass(env, d, cutoff))


def optimal_mass(env: Environment, d: Design) -> float:
    """Publication mass under the constrained-optimal rule."""
    return max(d.cost, float(publication_mass(env, d, gamma_star(env, d))))


def optimal_loss(env: Environment, d: Design) -> float:
    return loss_at_mass(env, d, optimal_mass(env, d))


@dataclass(frozen=True)
class Worthwhileness:
    worthwhile: bool
    design_class: DesignClass
    # Sufficient conditions for expensive designs; None for cheap ones.
    sufficient_bound: bool | None = None
    necessary_bound_violated: bool | None = None


def is_worthwhile(env: Environment, d: Design) -> Worthwhileness:
    cls = classify_design(env, d)
    if cls is DesignClass.CHEAP:
        return Worthwhileness(True, cls)
    pvr = post_var_red(env, d)
    c = d.cost
    exact = gk.upsilon(c) * pvr >= c * env.ca
    return Worthwhileness(
        bool(exact),
        cls,
        sufficient_bound=bool(pvr >= c * env.ca + env.eta2 * (1.0 - c) ** 3),
        necessary_bound_violated=bool(pvr < c * env.ca),
    )


class Preference(enum.Enum):
    PREFERS_E = "planner_prefers_e"
    PREFERS_O = "planner_prefers_o"
    INDIFFERENT = "indifferent"


@dataclass(frozen=True)
class ComparisonDiagnostics:
    e_class: DesignClass
    o_class: DesignClass
    # Cost of O used in the sufficient bounds (its mass under gamma* if O is cheap).
    effective_cost_o: float
    bound_prefers_e: bool | None
    bound_prefers_o: bool | None
    critical_ca: float | None


@dataclass(frozen=True)
class Comparison:
    preference: Preference
    loss_e: float
    loss_o: float
    diagnostics: ComparisonDiagnostics | None = field(default=None)


def _preference(env: Environment, loss_e: float, loss_o: float) -> Preference:
    if abs(loss_e - loss_o) <= TIE_RTOL * max(1.0, env.eta2):
        return Preference.INDIFFERENT
    return Preference.PREFERS_E if loss_e < loss_o else Preference.PREFERS_O


def _loss_over_ca(eta2: float, d: Design, ca) -> np.ndarray:
    """Vectorized :func:`optimal_loss` over attention costs."""
    ca = np.asarray(ca, dtype=float)
    sd = math.sqrt(d.s2 + eta2)
    cutoff = sd / eta2 * np.sqrt(ca) * sd
    mass = np.maximum(d.cost, 2.0 * gk.sf(cutoff / sd))
    return eta2 + mass * ca - eta2 ** 2 / (d.s2 + eta2) * gk.upsilon(mass)


def critical_attention_cost(env: Environment, e: Design, o: Design) -> float | None:
    """Root in ``ca`` of ``L*_E - L*_O`` on ``(1e-8, 10 eta2)``, if it changes sign."""
    def gap(ca):
        env_c = Environment(env.eta2, ca)
        return optimal_loss(env_c, e) - optimal_loss(env_c, o)

    lo, hi = 1e-8, 10.0 * env.eta2
    grid = np.geomspace(lo, hi, 200)
    vals = _loss_over_ca(env.eta2, e, grid) - _loss_over_ca(env.eta2, o, grid)
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if sign_change.size == 0:
        return None
    i = int(sign_change[0])
    return float(optimize.brentq(gap, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-12))


def compare_designs(env: Environment, e: Design, o: Design) -> Comparison:
    """Planner preference between ``e`` and ``o`` by exact optimal losses.

    Diagnostics are attached only when ``e`` is strictly more precise and
    strictly more costly than ``o``.
    """
    loss_e = optimal_loss(env, e)
    loss_o = optimal_loss(env, o)
    pref = _preference(env, loss_e, loss_o)
    if not (e.s2 < o.s2 and e.cost > o.cost):
        return Comparison(pref, loss_e, loss_o)

    e_cls = classify_design(env, e)
    o_cls = classify_design(env, o)
    c_o = o.cost if o_cls is DesignClass.EXPENSIVE else float(publication_mass(env, o, gamma_star(env, o)))
    c_e = e.cost
    gap = post_var_red(env, e) - post_var_red(env, o)
    if e_cls is DesignClass.EXPENSIVE and c_o < c_e:
        fires_a = gap >= (1.0 - c_o / c_e) * env.ca
        fires_b = gap <= (c_e - (1.0 + 2.0 * c_o) / 3.0) * env.ca
    else:
        fires_a = fires_b = None
    diag = ComparisonDiagnostics(
        e_class=e_cls,
        o_class=o_cls,
        effective_cost_o=c_o,
        bound_prefers_e=fires_a,
        bound_prefers_o=fires_b,
        critical_ca=critical_attention_cost(env, e, o),
    )
    return Comparison(pref, loss_e, loss_o, diag)


def incentive_cost(env: Environment, e: Design) -> float:
    """Loss of ``e`` minus the loss of a free design with the same variance."""
    return optimal_loss(env, e) - optimal_loss(env, Design(e.s2, 0.0))


def indifference_cost(env: Environment, s2_e: float, o: Design) -> float | None:
    """Cost of E at which the planner is indifferent between E and ``o``.

    Returns None when E is preferred at every cost in [0, 1] (no crossing),
    and 0.0 when O is already preferred to a free E.
    """
    target = optimal_loss(env, o)

    def gap(c):
        return optimal_loss(env, Design(s2_e, c)) - target

    if gap(0.0) >= 0:
        return 0.0
    if gap(1.0) <= 0:
        return None
    # Losses are flat in cost while E is cheap; start the bracket at its free mass.
    lo = float(publication_mass(env, Design(s2_e), gamma_star(env, Design(s2_e))))
    return float(optimize.brentq(gap, lo, 1.0, xtol=1e-13))


def indifference_curve(env: Environment, s2_e: float, s2_o_grid, cost_o: float = 0.0):
    """Rows ``(s2_o, indifference cost of E)`` tracing the planner's indifference set."""
    return [(float(s), indifference_cost(env, s2_e, Design(float(s), cost_o))) for s in s2_o_grid]
