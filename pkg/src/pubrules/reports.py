"""Table and figure data assembled from the model modules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import design_rules as dr
from . import equilibrium_sim as sim
from . import manipulation_rules as mr


@dataclass(frozen=True)
class Calibration:
    name: str
    eta2: float
    s2: float
    cm: float
    cutoff: float

    def env(self) -> mr.ManipulationEnv:
        return mr.ManipulationEnv.from_cutoff(self.eta2, self.s2, self.cm, self.cutoff)


CALIBRATIONS = {
    "five_pct": Calibration("five_pct", eta2=1.94, s2=1.0, cm=0.98, cutoff=1.96),
    "one_pct": Calibration("one_pct", eta2=1.94, s2=1.0, cm=0.83, cutoff=2.56),
}

ILLUSTRATION = dict(eta2=2.0, s2=0.0, ca=0.5, cm=2.0)
DEFAULT_BIN_WIDTH = 0.01


def _sim_row(env, rule, policy, pop, seed):
    recs = sim.simulate_equilibrium(env, rule, policy, pop, seed)
    return asdict(sim.summarize(recs))


def _quad_row(env, rule, policy):
    m = mr.rule_moments(env, rule, policy)
    return {
        "expected_loss": m.expected_loss,
        "pct_published": m.published,
        "pct_manipulated_within_published": m.manipulated_share,
        "avg_abs_bias_within_published": m.avg_bias,
    }


def table2_rows(cal: Calibration, n: int, seed: int) -> dict:
    """Truthful, naive and optimal rows for one calibration."""
    env = cal.env()
    sol = mr.optimize_rule(env)
    naive = dr.ThresholdRule(env.gamma_star)
    pop = sim.sample_population(env, n, seed)
    specs = [
        ("truthful_threshold", naive, mr.Policy.TRUTHFUL),
        ("best_respond_threshold", naive, mr.Policy.BEST_RESPOND),
        ("best_respond_optimal", sol.rule, mr.Policy.BEST_RESPOND),
    ]
    rows = []
    for label, rule, policy in specs:
        rows.append({
            "row": label,
            "rule": rule_description(rule),
            "policy": policy.value,
            "monte_carlo": _sim_row(env, rule, policy, pop, seed),
            "quadrature": _quad_row(env, rule, policy),
        })
    return {
        "calibration": cal.name,
        "env": asdict(env),
        "gamma_star": env.gamma_star,
        "u_star": sol.u_star,
        "x_star": sol.x_star,
        "optimal_loss": sol.expected_loss,
        "rows": rows,
    }


def rule_description(rule) -> dict:
    if isinstance(rule, mr.SmoothedRule):
        return {"kind": "smoothed", "cutoff": rule.cutoff, "slope": rule.slope}
    return {"kind": "threshold", "cutoff": rule.cutoff}


def bin_edges(upper: float, width: float) -> np.ndarray:
    n_bins = int(math.ceil(upper / width - 1e-9))
    return np.arange(n_bins + 1) * width


def _histogram_block(env, rule, policy, pop, seed, edges, label):
    recs = sim.simulate_equilibrium(env, rule, policy, pop, seed)
    atom_locs = sim.default_atom_locations(rule) if policy is mr.Policy.BEST_RESPOND else []
    h = sim.histogram_export(recs, edges, atom_locations=atom_locs)
    return {
        "regime": label,
        "rule": rule_description(rule),
        "policy": policy.value,
        "density": h.density.tolist(),
        "atoms": [{"location": loc, "mass": mass} for loc, mass in h.atoms],
        "summary": asdict(sim.summarize(recs)),
    }


def regime_histograms(env, n, seed, width, upper, include_naive=True) -> dict:
    sol = mr.optimize_rule(env)
    naive = dr.ThresholdRule(env.gamma_star)
    pop = sim.sample_population(env, n, seed)
    edges = bin_edges(upper, width)
    regimes = [("truthful", naive, mr.Policy.TRUTHFUL)]
    if include_naive:
        regimes.append(("naive_cutoff", naive, mr.Policy.BEST_RESPOND))
    regimes.append(("optimal_rule", sol.rule, mr.Policy.BEST_RESPOND))
    return {
        "env": asdict(env),
        "gamma_star": env.gamma_star,
        "x_star": sol.x_star,
        "bin_edges": edges.tolist(),
        "panels": [_histogram_block(env, r, p, pop, seed, edges, lab) for lab, r, p in regimes],
    }


def fig2_data(s2_o_grid=None, attention_costs=(0.5, 1.0), eta2: float = 1.0) -> dict:
    """Indifference curves between a zero-variance costly design and a free noisier one."""
    if s2_o_grid is None:
        s2_o_grid = np.round(np.arange(1, 301) * 0.01, 10)
    curves = []
    for ca in attention_costs:
        env = dr.Environment(eta2, ca)
        pts = dr.indifference_curve(env, 0.0, s2_o_grid, cost_o=0.0)
        curves.append({"ca": ca, "s2_o": [p[0] for p in pts], "cost_e": [p[1] for p in pts]})
    return {"eta2": eta2, "s2_e": 0.0, "cost_o": 0.0, "curves": curves}


def fig3_data(n: int, seed: int, width: float = DEFAULT_BIN_WIDTH) -> dict:
    env = mr.ManipulationEnv(**ILLUSTRATION)
    return regime_histograms(env, n, seed, width, upper=4.0)


def fig4_data(cal: Calibration = CALIBRATIONS["five_pct"], step: float = 0.01,
              upper: float = 0.6) -> dict:
    """Experiment-to-observational loss ratios over experiment costs."""
    env = cal.env()
    denv = env.design_env()
    sol = mr.optimize_rule(env)
    naive_loss = mr.expected_loss_under_rule(env, dr.ThresholdRule(env.gamma_star))
    costs = np.round(np.arange(int(round(upper / step)) + 1) * step, 10)
    loss_e = [dr.optimal_loss(denv, dr.Design(env.s2, float(c))) for c in costs]
    return {
        "calibration": cal.name,
        "env": asdict(env),
        "observational_loss_naive": naive_loss,
        "observational_loss_optimal": sol.expected_loss,
        "crossover_cost": mr.prereg_crossover_cost(env, sol),
        "cost_e": costs.tolist(),
        "loss_experiment": loss_e,
        "ratio_naive": [le / naive_loss for le in loss_e],
        "ratio_optimal": [le / sol.expected_loss for le in loss_e],
    }


def fig5_data(n: int, seed: int, cal: Calibration = CALIBRATIONS["five_pct"],
              width: float = DEFAULT_BIN_WIDTH) -> dict:
    out = regime_histograms(cal.env(), n, seed, width, upper=8.0, include_naive=False)
    out["calibration"] = cal.name
    return out
