"""Optimal publication rules when researchers can bias their reported statistic.

A researcher of type ``y = theta + eps`` (``eps ~ N(0, s2)``) reports
``x = y + bias`` at cost ``cm * |bias| + c0`` and receives 1 if published.
The audience reads published results at face value, so the planner's loss
conditional on ``y`` when the study is published with probability ``p`` is

    (omega^2 (bias^2 - y^2) + ca) * p + omega^2 y^2 + omega s2

with ``omega = eta2 / (s2 + eta2)``.  The last two terms are the loss of
publishing nothing and integrate to ``eta2``.

Ties in the researcher's problem are broken toward the action the planner
prefers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import optimize

from . import design_rules as dr
from . import gaussian_kernel as gk
from ._errors import DomainError
from .quadrature import integrate, scan_then_golden

QUAD_TOL = 1e-8
MANIPULATION_EPS = 1e-12
TAIL_SDS = 10.0


@dataclass(frozen=True)
class ManipulationEnv:
    eta2: float
    s2: float
    ca: float
    cm: float
    c0: float = 0.0

    def __post_init__(self):
        if not self.eta2 > 0:
            raise DomainError("eta2 must be positive")
        if not self.s2 >= 0:
            raise DomainError("s2 must be non-negative")
        if not self.ca > 0:
            raise DomainError("ca must be positive")
        if not 0 < self.cm < math.inf:
            raise DomainError("cm must be positive and finite")
        if not 0 <= self.c0 < 1:
            raise DomainError("c0 must lie in [0, 1)")

    @classmethod
    def from_cutoff(cls, eta2: float, s2: float, cm: float, cutoff: float, c0: float = 0.0):
        """Environment whose no-manipulation cutoff ``gamma_star`` equals ``cutoff``."""
        omega = eta2 / (s2 + eta2)
        return cls(eta2=eta2, s2=s2, ca=(cutoff * omega) ** 2, cm=cm, c0=c0)

    @property
    def omega(self) -> float:
        return self.eta2 / (self.s2 + self.eta2)

    @property
    def gamma_star(self) -> float:
        return math.sqrt(self.ca) / self.omega

    @property
    def sigma_y(self) -> float:
        return math.sqrt(self.s2 + self.eta2)

    @property
    def max_bias(self) -> float:
        return (1.0 - self.c0) / self.cm

    def design_env(self) -> dr.Environment:
        return dr.Environment(self.eta2, self.ca)


@dataclass(frozen=True)
class SmoothedRule:
    """Publish with probability ``clip(1 - slope * (cutoff - |x|), 0, 1)``."""

    cutoff: float
    slope: float

    def __post_init__(self):
        if not self.cutoff > 0:
            raise DomainError("cutoff must be positive")
        if not self.slope > 0:
            raise DomainError("slope must be positive")

    @property
    def ramp_start(self) -> float:
        return self.cutoff - 1.0 / self.slope

    def __call__(self, x):
        return np.clip(1.0 - self.slope * (self.cutoff - np.abs(x)), 0.0, 1.0)


Rule = Union[SmoothedRule, dr.ThresholdRule]


def smoothed_rule_eval(rule: SmoothedRule, x):
    out = rule(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _cutoff_and_slope(rule: Rule) -> tuple[float, float]:
    if isinstance(rule, SmoothedRule):
        return rule.cutoff, rule.slope
    return rule.cutoff, math.inf


@dataclass(frozen=True)
class BestResponse:
    pub_prob: float
    bias: float
    utility: float


def response_prob(env: ManipulationEnv, y, v):
    """Loss-minimizing publication probability among ``p - cm * bias = v``."""
    a = np.abs(np.asarray(y, dtype=float))
    v = np.asarray(v, dtype=float)
    g = env.gamma_star
    disc = v * v + 3.0 * env.cm ** 2 * np.maximum(a * a - g * g, 0.0)
    interior = np.minimum(1.0, (2.0 * v + np.sqrt(disc)) / 3.0)
    return np.where(a <= g, v, interior)


def best_response(env: ManipulationEnv, y: float, v: float) -> BestResponse:
    if not 0.0 <= v <= 1.0:
        raise DomainError("promised utility level must lie in [0, 1]")
    p = float(response_prob(env, y, v))
    return BestResponse(pub_prob=p, bias=(p - v) / env.cm, utility=v - env.c0)


def conditional_loss(env: ManipulationEnv, y, bias, p):
    """Planner loss conditional on ``y`` net of the publish-nothing loss."""
    y = np.asarray(y, dtype=float)
    return (env.omega ** 2 * (np.square(bias) - y * y) + env.ca) * p


def type_loss(env: ManipulationEnv, y, v):
    v = np.asarray(v, dtype=float)
    p = response_prob(env, y, v)
    out = conditional_loss(env, y, (p - v) / env.cm, p)
    return float(out) if np.ndim(out) == 0 else out


def _abs_density(env: ManipulationEnv, a):
    s = env.sigma_y
    return 2.0 * gk.pdf(a / s) / s


def _full_publication_onset(env: ManipulationEnv, promised, lo: float, hi: float) -> float | None:
    """Smallest ``|y|`` in ``(lo, hi]`` whose best response publishes surely."""
    g = env.gamma_star
    lo = max(lo, g)
    if hi <= lo:
        return None

    def h(a):
        v = promised(a)
        return 2.0 * v + math.sqrt(v * v + 3.0 * env.cm ** 2 * max(a * a - g * g, 0.0)) - 3.0

    if h(lo) >= 0:
        return lo
    if h(hi) < 0:
        return None
    return float(optimize.brentq(h, lo, hi, xtol=1e-14))


def planner_objective(env: ManipulationEnv, u: float) -> float:
    """Expected planner loss when the threshold type ``gamma_star`` is left utility ``u``."""
    if not 0.0 <= u <= 1.0 - env.c0:
        raise DomainError("u must lie in [0, 1 - c0]")
    g, cm, c0 = env.gamma_star, env.cm, env.c0
    lo = max(g - u / cm, 0.0)
    x_star = g + (1.0 - c0 - u) / cm
    upper = g + (1.0 - c0) / cm + TAIL_SDS * env.sigma_y

    def promised(a):
        return np.minimum(u + c0 + cm * (a - g), 1.0)

    def f(a):
        return type_loss(env, a, promised(a)) * _abs_density(env, a)

    onset = _full_publication_onset(env, lambda a: float(promised(a)), g, x_star)
    pts = [p for p in (g, onset, x_star) if p is not None]
    value, _ = integrate(f, lo, upper, breakpoints=pts, tol=QUAD_TOL)
    return value + env.eta2


@dataclass(frozen=True)
class ManipulationSolution:
    u_star: float
    x_star: float
    expected_loss: float
    slope: float

    @property
    def rule(self) -> SmoothedRule:
        return SmoothedRule(self.x_star, self.slope)


def optimize_rule(env: ManipulationEnv, n_scan: int = 1001) -> ManipulationSolution:
    """Optimal linearly smoothed cutoff rule (slope ``cm``) for ``env``."""
    u_star, loss = scan_then_golden(lambda u: planner_objective(env, u), 0.0, 1.0 - env.c0,
                                    n_scan=n_scan, tol=1e-10)
    x_star = env.gamma_star + (1.0 - env.c0 - u_star) / env.cm
    return ManipulationSolution(u_star=u_star, x_star=x_star, expected_loss=loss, slope=env.cm)


class Policy(enum.Enum):
    BEST_RESPOND = "best_respond"
    TRUTHFUL = "truthful"


@dataclass(frozen=True)
class Response:
    """Vectorized researcher responses; non-participants have ``pub_prob == 0``."""

    pub_prob: np.ndarray
    bias: np.ndarray
    participates: np.ndarray


def respond(env: ManipulationEnv, rule: Rule, y, policy: Policy = Policy.BEST_RESPOND) -> Response:
    """Researcher responses to ``rule`` for types ``y`` (scalar or array).

    Under ``BEST_RESPOND`` the researcher compares staying at ``|y|``, jumping
    to the full-publication cutoff, and abstaining.  When the rule's ramp has
    slope exactly ``cm`` every point on the ramp is equally good, and the
    planner-preferred point is the one from :func:`response_prob`.
    """
    a = np.abs(np.atleast_1d(np.asarray(y, dtype=float)))
    cutoff, slope = _cutoff_and_slope(rule)
    stay_p = np.asarray(rule(a), dtype=float)
    c0 = env.c0

    if policy is Policy.TRUTHFUL:
        part = stay_p - c0 >= 0
        p = np.where(part & (stay_p > 0), stay_p, 0.0)
        return Response(p, np.zeros_like(a), p > 0)

    jump_bias = np.maximum(cutoff - a, 0.0)
    jump_util = 1.0 - env.cm * jump_bias - c0
    stay_util = stay_p - c0
    jump_loss = conditional_loss(env, a, jump_bias, 1.0)
    stay_loss = conditional_loss(env, a, 0.0, stay_p)
    take_jump = (jump_util > stay_util) | ((jump_util == stay_util) & (jump_loss < stay_loss))
    p = np.where(take_jump, 1.0, stay_p)
    bias = np.where(take_jump, jump_bias, 0.0)
    util = np.where(take_jump, jump_util, stay_util)
    loss = np.where(take_jump, jump_loss, stay_loss)

    if math.isfinite(slope) and math.isclose(slope, env.cm, rel_tol=1e-12):
        on_ramp = (a > rule.ramp_start) & (a < cutoff)
        v = np.where(on_ramp, stay_p, 0.0)
        ramp_p = response_prob(env, a, v)
        p = np.where(on_ramp, ramp_p, p)
        bias = np.where(on_ramp, (ramp_p - v) / env.cm, bias)
        util = np.where(on_ramp, v - c0, util)
        loss = np.where(on_ramp, conditional_loss(env, a, bias, p), loss)

    part = (util > 0) | ((util == 0) & (loss < 0))
    part &= p > 0
    return Response(np.where(part, p, 0.0), np.where(part, bias, 0.0), part)


def _response_breakpoints(env: ManipulationEnv, rule: Rule) -> list[float]:
    cutoff, slope = _cutoff_and_slope(rule)
    g, cm, c0 = env.gamma_star, env.cm, env.c0
    pts = [g, cutoff, cutoff - (1.0 - c0) / cm]
    if math.isfinite(slope):
        start = cutoff - 1.0 / slope
        pts += [start, start + c0 / slope]
        if slope != cm:
            # Staying on the ramp stops paying off here.
            pts.append(cutoff - (1.0 - c0) / slope)
        else:
            onset = _full_publication_onset(
                env, lambda a: min(max(1.0 - cm * (cutoff - a), 0.0), 1.0), max(start, 0.0), cutoff)
            if onset is not None:
                pts.append(onset)
    return [p for p in pts if p > 0]


@dataclass(frozen=True)
class RuleMoments:
    """Population quantities under a rule, computed by quadrature over ``|y|``."""

    expected_loss: float
    published: float
    manipulated: float
    bias_mass: float

    @property
    def manipulated_share(self) -> float:
        return self.manipulated / self.published

    @property
    def avg_bias(self) -> float:
        return self.bias_mass / self.published


def rule_moments(env: ManipulationEnv, rule: Rule, policy: Policy = Policy.BEST_RESPOND,
                 tol: float = QUAD_TOL) -> RuleMoments:
    cutoff, _ = _cutoff_and_slope(rule)
    upper = max(cutoff, env.gamma_star) + env.max_bias + TAIL_SDS * env.sigma_y
    pts = _response_breakpoints(env, rule)

    def moment(kind):
        def f(a):
            r = respond(env, rule, a, policy)
            if kind == "loss":
                val = conditional_loss(env, a, r.bias, r.pub_prob)
            elif kind == "pub":
                val = r.pub_prob
            elif kind == "manip":
                val = r.pub_prob * (r.bias > MANIPULATION_EPS)
            else:
                val = r.pub_prob * r.bias
            return val * _abs_density(env, a)
        return integrate(f, 0.0, upper, breakpoints=pts, tol=tol)[0]

    return RuleMoments(
        expected_loss=moment("loss") + env.eta2,
        published=moment("pub"),
        manipulated=moment("manip"),
        bias_mass=moment("bias"),
    )


def expected_loss_under_rule(env: ManipulationEnv, rule: Rule,
                             policy: Policy = Policy.BEST_RESPOND) -> float:
    cutoff, _ = _cutoff_and_slope(rule)
    upper = max(cutoff, env.gamma_star) + env.max_bias + TAIL_SDS * env.sigma_y

    def f(a):
        r = respond(env, rule, a, policy)
        return conditional_loss(env, a, r.bias, r.pub_prob) * _abs_density(env, a)

    value, _ = integrate(f, 0.0, upper, breakpoints=_response_breakpoints(env, rule), tol=QUAD_TOL)
    return value + env.eta2


def equilibrium_map(env: ManipulationEnv, sol: ManipulationSolution, y: float) -> BestResponse:
    """Planner-preferred equilibrium response of type ``y`` to the optimal rule."""
    r = respond(env, sol.rule, y)
    p, b = float(r.pub_prob[0]), float(r.bias[0])
    if not r.participates[0]:
        return BestResponse(0.0, 0.0, 0.0)
    return BestResponse(p, b, p - env.cm * b - env.c0)


def loss_under_tabulated_rule(env: ManipulationEnv, grid, probs, chunk: int = 512) -> float:
    """Expected loss of an arbitrary rule tabulated on a grid of ``|x|`` values.

    Brute force: each grid point is also a type, which may report any grid
    value at cost ``cm * | |x| - |y| |``.  Types carry the normal mass of the
    cell around them.  Intended as a slow, assumption-free cross-check.
    """
    grid = np.asarray(grid, dtype=float)
    probs = np.asarray(probs, dtype=float)
    s = env.sigma_y
    edges = np.concatenate([[0.0], 0.5 * (grid[1:] + grid[:-1]), [np.inf]])
    weights = 2.0 * (gk.cdf(edges[1:] / s) - gk.cdf(edges[:-1] / s))
    total = 0.0
    for i in range(0, grid.size, chunk):
        a = grid[i:i + chunk, None]
        bias = np.abs(grid[None, :] - a)
        util = probs[None, :] - env.cm * bias - env.c0
        loss = conditional_loss(env, a, bias, probs[None, :])
        best = util.max(axis=1, keepdims=True)
        tied = util >= best - 1e-12
        chosen = np.where(tied, loss, np.inf).min(axis=1)
        abstain = (best[:, 0] < 0) | ((np.abs(best[:, 0]) <= 1e-12) & (chosen > 0))
        total += float(np.sum(np.where(abstain, 0.0, chosen) * weights[i:i + chunk]))
    return total + env.eta2


class PreregPreference(enum.Enum):
    PREFERS_EXPERIMENT = "prefers_experiment"
    PREFERS_MANIPULABLE = "prefers_manipulable"


@dataclass(frozen=True)
class PreregComparison:
    preference: PreregPreference
    loss_experiment: float
    loss_manipulable: float
    incentive_cost: float
    bound: float


def manipulable_advantage_bound(env: ManipulationEnv) -> float:
    """Incentive cost above which the manipulable study is guaranteed to win."""
    return (1.0 + 2.0 * math.sqrt(env.s2) * env.cm) / env.cm ** 2


def compare_prereg_vs_manipulable(env: ManipulationEnv, c_e: float,
                                  sol: ManipulationSolution | None = None) -> PreregComparison:
    """Pre-registered experiment with cost ``c_e`` versus a free manipulable study."""
    if not 0.0 <= c_e <= 1.0:
        raise DomainError("c_e must lie in [0, 1]")
    if sol is None:
        sol = optimize_rule(env)
    denv = env.design_env()
    experiment = dr.Design(env.s2, c_e)
    loss_e = dr.optimal_loss(denv, experiment)
    pref = (PreregPreference.PREFERS_EXPERIMENT if loss_e <= sol.expected_loss
            else PreregPreference.PREFERS_MANIPULABLE)
    return PreregComparison(pref, loss_e, sol.expected_loss,
                            dr.incentive_cost(denv, experiment), manipulable_advantage_bound(env))


def prereg_crossover_cost(env: ManipulationEnv, sol: ManipulationSolution | None = None,
                          target_loss: float | None = None) -> float | None:
    """Experiment cost at which its loss equals ``target_loss`` (default: optimal manipulable loss)."""
    if target_loss is None:
        target_loss = (sol or optimize_rule(env)).expected_loss
    denv = env.design_env()

    def gap(c):
        return dr.optimal_loss(denv, dr.Design(env.s2, c)) - target_loss

    lo = float(dr.publication_mass(denv, dr.Design(env.s2), env.gamma_star))
    if gap(lo) >= 0:
        return 0.0
    if gap(1.0) <= 0:
        return None
    return float(optimize.brentq(gap, lo, 1.0, xtol=1e-13))
