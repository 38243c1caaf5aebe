"""Acceptance criteria. Each test records one PASS/FAIL line, shown in the terminal summary."""
import math
import time

import numpy as np
import pytest

from pubrules import calibration as cal
from pubrules import cli
from pubrules import design_rules as dr
from pubrules import equilibrium_sim as sim
from pubrules import gaussian_kernel as gk
from pubrules import manipulation_rules as mr
from pubrules import reports

N = 1_000_000
SEED = 7

# (published, manipulated, bias); None means the entry is not reported.
FIVE_TARGETS = {
    "truthful_threshold": (0.25, None, None),
    "best_respond_threshold": (0.58, 0.56, 0.31),
    "best_respond_optimal": (0.25, 0.45, 0.11),
}
ONE_TARGETS = {
    "truthful_threshold": (0.13, None, None),
    "best_respond_threshold": (0.42, 0.68, 0.45),
    "best_respond_optimal": (0.13, 0.57, 0.18),
}
TOLS = (0.01, 0.02, 0.02)
KEYS = ("pct_published", "pct_manipulated_within_published", "avg_abs_bias_within_published")


def table_misses(table, targets):
    """List every row entry outside tolerance, for both estimators."""
    misses = []
    for row in table["rows"]:
        for source in ("monte_carlo", "quadrature"):
            for key, target, tol in zip(KEYS, targets[row["row"]], TOLS):
                if target is None:
                    continue
                got = row[source][key]
                if not abs(got - target) <= tol:
                    misses.append(f"{row['row']}/{source}/{key}={got:.4f}")
    return misses


def fmt_rows(table):
    return " ".join(
        f"{row['row']}=({row['monte_carlo']['pct_published']:.3f},"
        f"{row['monte_carlo']['pct_manipulated_within_published']:.3f},"
        f"{row['monte_carlo']['avg_abs_bias_within_published']:.3f})"
        for row in table["rows"])


class TestAcceptance:
    def test_c1_five_percent_table(self, criterion_report):
        start = time.perf_counter()
        table = reports.table2_rows(reports.CALIBRATIONS["five_pct"], N, SEED)
        elapsed = time.perf_counter() - start
        misses = table_misses(table, FIVE_TARGETS)
        x_ok = abs(table["x_star"] - 2.64) <= 0.03
        ok = not misses and x_ok and elapsed <= 60
        criterion_report(
            "C1 5% table", ok,
            f"X*={table['x_star']:.4f} {fmt_rows(table)} runtime={elapsed:.1f}s"
            + (f" misses={misses}" if misses else ""))
        assert ok

    def test_c2_one_percent_table(self, criterion_report):
        table = reports.table2_rows(reports.CALIBRATIONS["one_pct"], N, SEED)
        misses = table_misses(table, ONE_TARGETS)
        x_ok = abs(table["x_star"] - 3.39) <= 0.03
        ok = not misses and x_ok
        criterion_report(
            "C2 1% table", ok,
            f"X*={table['x_star']:.4f} {fmt_rows(table)}" + (f" misses={misses}" if misses else ""))
        assert ok

    def test_c3_calibration(self, criterion_report):
        five = cal.CalibrationConfig(level=cal.Level.FIVE_PCT)
        one = cal.CalibrationConfig(level=cal.Level.ONE_PCT)
        cm5 = cal.estimate_cm(five, cal.adjusted_bunch_share(five, 0.18))
        cm1 = cal.estimate_cm(one, cal.adjusted_bunch_share(one, 0.10))
        eta2 = cal.eta2_from_quantile(3.43, five)
        worst_trip = 0.0
        for cutoff in (1.0, 1.645, 1.96, 2.56, 3.29):
            ca = cal.derive_ca(eta2, cutoff)
            env = mr.ManipulationEnv(eta2=eta2, s2=1.0, ca=ca, cm=1.0)
            worst_trip = max(worst_trip, abs(env.gamma_star - cutoff))
        ok = (0.90 <= cm5 <= 1.05 and 0.75 <= cm1 <= 0.92
              and abs(eta2 - 1.94) <= 0.005 and worst_trip <= 1e-9)
        criterion_report(
            "C3 calibration", ok,
            f"c_m(5%)={cm5:.4f} c_m(1%)={cm1:.4f} eta2={eta2:.5f} gamma* round trip={worst_trip:.1e}")
        assert ok

    def test_c4_prereg_crossover(self, criterion_report):
        env = reports.CALIBRATIONS["five_pct"].env()
        sol = mr.optimize_rule(env)
        c_star = mr.prereg_crossover_cost(env, sol)
        denv = env.design_env()
        ratios = {c: dr.optimal_loss(denv, dr.Design(env.s2, c)) / sol.expected_loss for c in (0.1, 0.2)}
        ok = c_star is not None and 0.25 <= c_star <= 0.35 and all(r >= 0.99 for r in ratios.values())
        criterion_report(
            "C4 crossover", ok,
            f"c_e*={c_star:.5f} ratio(0.1)={ratios[0.1]:.5f} ratio(0.2)={ratios[0.2]:.5f}")
        assert ok

    def test_c5_property_suite(self, criterion_report):
        start = time.perf_counter()
        checks = {}

        # Bounds on the second-moment factor over 10^4 points of (0, 1).
        t = np.linspace(0, 1, 10_002)[1:-1]
        deficit = gk.upsilon_deficit(t)
        z = gk.two_sided_z(t)
        checks["upsilon_bounds"] = bool(
            np.all(deficit > 0) and np.all(deficit < (1 - t) ** 3)
            and np.all(deficit < (1 - t) * z * z / 3) and np.all(np.diff(gk.upsilon(t)) > 0))

        # Closed-form cutoff against a 10^4-point grid search.
        rng = np.random.default_rng(2024)
        ok = True
        for _ in range(100):
            env = dr.Environment(rng.uniform(0.2, 4), rng.uniform(0.01, 3))
            d = dr.Design(rng.uniform(0, 3), rng.uniform(0, 1))
            grid = np.linspace(0, 3 * dr.gamma_star(env, d) + 5 * dr.marginal_sd(env, d), 10_000)
            feasible = dr.publication_mass(env, d, grid) >= d.cost
            losses = np.where(feasible, dr.threshold_rule_loss(env, d, grid), np.inf)
            ok &= abs(dr.optimal_cutoff(env, d).cutoff - grid[np.argmin(losses)]) <= grid[1] - grid[0]
        checks["cutoff_brute_force"] = bool(ok)

        # Closed-form best response against nested grids.
        env5 = reports.CALIBRATIONS["five_pct"].env()
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(1000):
            y, v = rng.uniform(-4, 4), rng.uniform(0, 1)

            def loss(p):
                return (env5.omega ** 2 * (((p - v) / env5.cm) ** 2 - y * y) + env5.ca) * p

            grid = np.linspace(v, 1.0, 10_001)
            i = int(np.argmin(loss(grid)))
            step = grid[1] - grid[0]
            fine = np.linspace(max(v, grid[i] - step), min(1.0, grid[i] + step), 10_001)
            worst = max(worst, abs(mr.best_response(env5, y, v).pub_prob - fine[np.argmin(loss(fine))]))
        checks["best_response_brute_force"] = worst <= 1e-5

        # Optimal cutoff interval and endpoint slopes on random environments.
        rng = np.random.default_rng(17)
        in_interval = slopes = True
        h = 1e-4
        for _ in range(100):
            env = mr.ManipulationEnv(eta2=rng.uniform(0.3, 4), s2=rng.uniform(0, 2), ca=rng.uniform(0.05, 3),
                                     cm=rng.uniform(0.3, 4), c0=rng.uniform(0, 0.6))
            sol = mr.optimize_rule(env)
            in_interval &= env.gamma_star < sol.x_star < env.gamma_star + (1 - env.c0) / env.cm
            top = 1 - env.c0
            slopes &= (mr.planner_objective(env, h) < mr.planner_objective(env, 0.0)
                       and mr.planner_objective(env, top) > mr.planner_objective(env, top - h))
        checks["x_star_interval"] = bool(in_interval)
        checks["endpoint_slopes"] = bool(slopes)

        # Bunching atoms at 0.01 bins.
        sol5 = mr.optimize_rule(env5)
        pop = sim.sample_population(env5, N, SEED)
        edges = reports.bin_edges(6.0, reports.DEFAULT_BIN_WIDTH)
        naive_rec = sim.simulate_equilibrium(env5, dr.ThresholdRule(env5.gamma_star), mr.Policy.BEST_RESPOND, pop, SEED)
        opt_rec = sim.simulate_equilibrium(env5, sol5.rule, mr.Policy.BEST_RESPOND, pop, SEED)
        naive_atoms = sim.histogram_export(naive_rec, edges, atom_locations=[env5.gamma_star]).atoms
        opt_atoms = sim.histogram_export(opt_rec, edges, atom_locations=[sol5.x_star]).atoms
        checks["bunching_atoms"] = (len(naive_atoms) == 1 and len(opt_atoms) == 1
                                    and 0 < opt_atoms[0][1] < naive_atoms[0][1])

        elapsed = time.perf_counter() - start
        ok = all(checks.values()) and elapsed <= 300
        failed = [k for k, v in checks.items() if not v]
        atoms = (f"atoms naive={naive_atoms[0][1]:.4f} optimal={opt_atoms[0][1]:.4f}"
                 if naive_atoms and opt_atoms else "atoms missing")
        criterion_report(
            "C5 property suite", ok,
            f"{len(checks) - len(failed)}/{len(checks)} checks, best-response worst={worst:.1e}, "
            f"{atoms}, runtime={elapsed:.1f}s" + (f" failed={failed}" if failed else ""))
        assert ok

    def test_c6_determinism(self, tmp_path, criterion_report):
        paths = [tmp_path / "first.json", tmp_path / "second.json"]
        codes = [cli.dispatch(["table2", "--n", str(N), "--seed", str(SEED), "--out", str(p)]) for p in paths]
        blobs = [p.read_bytes() for p in paths]
        ok = codes == [0, 0] and blobs[0] == blobs[1]
        criterion_report("C6 determinism", ok, f"table2 twice, {len(blobs[0])} bytes each, identical={blobs[0] == blobs[1]}")
        assert ok
