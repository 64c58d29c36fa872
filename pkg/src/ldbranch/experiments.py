"""Monte Carlo campaigns that confront the simulator with the analytic
and rate-function modules.

Every experiment returns an :class:`ExperimentReport`: named estimates
with standard errors plus pass/fail checks that derive only from the
recorded numbers.  Reports serialize to canonical JSON (byte-identical
for identical config and seed; wall time is reported separately exactly
so that holds) and to aligned text tables.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .analytic import (
    PopulationIndex,
    clone_count_mean,
    mean_population,
    solve_targets,
    variance_population,
)
from .params import ModelParams, ScenarioConfig
from .ratefn import (
    case3_theta_closed_form,
    clone_number_cost,
    conditioned_rate,
    crossover_rate,
    cumulant,
    cumulant_double_prime,
    cumulant_prime,
    optimal_clone_factor,
    rate_objective,
    recurrence_rate,
    survivor_integral,
    survivor_integral2,
)
from .simulate import det_sensitive_batch, passage_batch

__all__ = [
    "ExperimentReport",
    "convergence_experiment",
    "tail_probability_experiment",
    "conditioned_clone_experiment",
    "moment_validation",
    "validate_suite",
    "write_passage_csv",
]


def _snapshot(params: ModelParams, **extra) -> dict:
    snap = {
        "r0": params.r0,
        "d0": params.d0,
        "r1": params.r1,
        "d1": params.d1,
        "mu": params.mu,
        "alpha": params.alpha,
        "case": params.case,
    }
    snap.update(extra)
    return snap


@dataclass
class ExperimentReport:
    """Estimates, standard errors, and verdicts for one campaign."""

    experiment: str
    params: dict
    replicates: int
    seed: int
    cells: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    wall_time: float = 0.0

    def add_cell(self, name: str, estimate: float, se: float, **extra) -> None:
        cell = {"name": name, "estimate": float(estimate), "se": float(se)}
        for key, value in extra.items():
            cell[key] = value.item() if isinstance(value, np.generic) else value
        self.cells.append(cell)

    def add_check(self, name: str, passed: Optional[bool], detail: str) -> None:
        self.checks.append({
            "name": name,
            "passed": None if passed is None else bool(passed),
            "detail": detail,
        })

    @property
    def passed(self) -> bool:
        return all(c["passed"] is not False for c in self.checks)

    def to_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "params": self.params,
            "replicates": self.replicates,
            "seed": self.seed,
            "cells": self.cells,
            "checks": self.checks,
            "passed": self.passed,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment}"]
        lines.append(
            "params: "
            + " ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        )
        lines.append(f"replicates: {self.replicates}   seed: {self.seed}")
        if self.cells:
            width = max(len(c["name"]) for c in self.cells)
            for c in self.cells:
                extra = " ".join(
                    f"{k}={v}"
                    for k, v in c.items()
                    if k not in ("name", "estimate", "se")
                )
                lines.append(
                    f"  {c['name']:<{width}}  {c['estimate']: .6e} "
                    f"+/- {c['se']:.3e}  {extra}".rstrip()
                )
        for c in self.checks:
            verdict = {True: "PASS", False: "FAIL", None: "INCONCLUSIVE"}[
                c["passed"]
            ]
            lines.append(f"  [{verdict}] {c['name']}: {c['detail']}")
        # wall time is deliberately absent: serialized reports must be
        # byte-identical for identical (config, seed)
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def write_passage_csv(path, gammas, taus, surviving=None, extinct=None) -> None:
    """Raw per-replicate passage times; empty fields where not tracked."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("replicate,gamma,tau,censored_gamma,censored_tau,S,E\n")
        for i in range(len(gammas)):
            g, t = gammas[i], taus[i]
            g_txt = "" if math.isnan(g) else f"{g:.12g}"
            t_txt = "" if math.isnan(t) else f"{t:.12g}"
            s_txt = "" if surviving is None else str(int(surviving[i]))
            e_txt = "" if extinct is None else str(int(extinct[i]))
            fh.write(
                f"{i},{g_txt},{t_txt},{int(math.isnan(g))},"
                f"{int(math.isnan(t))},{s_txt},{e_txt}\n"
            )


def _quantile_with_se(values: np.ndarray, q: float) -> tuple[float, float]:
    """Empirical quantile and a distribution-free order-statistic SE."""
    x = np.sort(values)
    m = len(x)
    value = float(np.quantile(x, q))
    half = 2.0 * math.sqrt(m * q * (1.0 - q))
    lo = max(int(math.floor(m * q - half)), 0)
    hi = min(int(math.ceil(m * q + half)), m - 1)
    return value, (x[hi] - x[lo]) / 4.0


def _trend_nonincreasing(pairs: Sequence[tuple[float, float]]) -> tuple[bool, str]:
    """Non-increasing sequence allowing one inversion within 2 SE."""
    inversions = 0
    for (v1, s1), (v2, s2) in zip(pairs, pairs[1:]):
        if v2 > v1:
            if v2 - v1 <= 2.0 * math.hypot(s1, s2):
                inversions += 1
            else:
                return False, f"inversion {v1:.4g} -> {v2:.4g} beyond 2 SE"
    if inversions > 1:
        return False, f"{inversions} soft inversions (one allowed)"
    return True, f"{inversions} soft inversion(s) within 2 SE"


def convergence_experiment(
    params: ModelParams,
    a: float,
    n_grid: Sequence[int],
    replicates: int,
    seed: int,
    threads: int = 1,
    raw_dir=None,
) -> ExperimentReport:
    """Quantiles of |gamma_n - zeta_n| and |tau_n - xi_n| across n.

    Passes when the 90% quantiles are non-increasing along the grid
    (one inversion within 2 SE allowed) and censoring stays below 1%.
    """
    start = time.perf_counter()
    report = ExperimentReport(
        "convergence", _snapshot(params, a=a, n_grid=list(n_grid)),
        replicates, seed,
    )
    gamma_trend, tau_trend = [], []
    for idx, n in enumerate(n_grid):
        scenario = ScenarioConfig(n=int(n), a=a, y=1e-6)
        targets = solve_targets(params, scenario)
        batch = passage_batch(
            params, scenario, (seed, idx), replicates, threads=threads
        )
        if raw_dir is not None:
            write_passage_csv(
                f"{raw_dir}/passages-n{n}.csv", batch["gamma"], batch["tau"]
            )
        for tag, times, target, trend in (
            ("gamma", batch["gamma"], targets.zeta, gamma_trend),
            ("tau", batch["tau"], targets.xi, tau_trend),
        ):
            censored = int(np.isnan(times).sum())
            dev = np.abs(times[~np.isnan(times)] - target)
            if censored > 0.01 * replicates:
                report.add_check(
                    f"censoring-{tag}-n{n}", False,
                    f"{censored}/{replicates} censored (> 1%)",
                )
            if len(dev) == 0:
                continue
            for q in (0.5, 0.9, 0.99):
                value, se = _quantile_with_se(dev, q)
                report.add_cell(
                    f"abs-dev-{tag}-q{int(q * 100)}-n{n}", value, se,
                    censored=censored,
                )
                if q == 0.9:
                    trend.append((value, se))
    if len(n_grid) >= 2:
        for tag, trend in (("gamma", gamma_trend), ("tau", tau_trend)):
            ok, detail = _trend_nonincreasing(trend)
            report.add_check(f"q90-nonincreasing-{tag}", ok, detail)
    report.wall_time = time.perf_counter() - start
    return report


def _ols_with_se(x: np.ndarray, y: np.ndarray, var_y: np.ndarray):
    xbar = x.mean()
    sxx = ((x - xbar) ** 2).sum()
    coeffs = (x - xbar) / sxx
    slope = float((coeffs * y).sum())
    intercept = float(y.mean() - slope * xbar)
    slope_se = float(math.sqrt((coeffs**2 * var_y).sum()))
    return slope, intercept, slope_se


def tail_probability_experiment(
    params: ModelParams,
    a: float,
    y: float,
    n_grid: Sequence[int],
    replicates: int,
    seed: int,
    threads: int = 1,
    passage: str = "recurrence",
    raw_dir=None,
) -> ExperimentReport:
    """Direct Monte Carlo of the early-passage probability per n and the
    OLS slope of -log(p_hat) against the large-deviation speed n^(1-alpha)
    (n^(1-beta) in the pre-existing regime)."""
    start = time.perf_counter()
    report = ExperimentReport(
        f"tail-{passage}",
        _snapshot(params, a=a, y=y, n_grid=list(n_grid)),
        replicates, seed,
    )
    exponent = (
        1.0 - params.regime.beta
        if params.case == 3
        else 1.0 - params.alpha
    )
    xs, ys, var_ys = [], [], []
    for idx, n in enumerate(n_grid):
        scenario = ScenarioConfig(n=int(n), a=a, y=y)
        targets = solve_targets(params, scenario)
        if passage == "recurrence":
            horizon = targets.zeta - y
            track = ("gamma",)
        else:
            horizon = targets.xi - y
            track = ("tau",)
            if horizon <= 0:
                report.add_check(
                    f"horizon-n{n}", False, f"xi - y = {horizon} <= 0"
                )
                continue
        batch = passage_batch(
            params, scenario, (seed, idx), replicates,
            track=track, horizon=horizon, threads=threads,
        )
        if raw_dir is not None:
            write_passage_csv(
                f"{raw_dir}/passages-n{n}.csv", batch["gamma"], batch["tau"]
            )
        times = batch["gamma"] if passage == "recurrence" else batch["tau"]
        events = int((~np.isnan(times)).sum())
        p_hat = events / replicates
        se = math.sqrt(max(p_hat * (1 - p_hat), 0.0) / replicates)
        report.add_cell(f"p-early-n{n}", p_hat, se, events=events)
        if events == 0:
            report.add_check(
                f"events-n{n}", None, "no early events observed; n excluded"
            )
            continue
        xs.append(float(n) ** exponent)
        ys.append(-math.log(p_hat))
        var_ys.append((1.0 - p_hat) / (replicates * p_hat))
    if xs and ys:
        largest = int(max(n_grid))
        largest_events = next(
            (c["events"] for c in report.cells if c["name"] == f"p-early-n{largest}"),
            0,
        )
        report.add_check(
            "rare-event-feasibility", largest_events >= 10,
            f"{largest_events} events at n={largest} (need >= 10)",
        )
    if len(xs) >= 3:
        slope, intercept, slope_se = _ols_with_se(
            np.array(xs), np.array(ys), np.array(var_ys)
        )
        rate_fn = recurrence_rate if passage == "recurrence" else crossover_rate
        limit_rate = rate_fn(params.case, y, params).value
        report.add_cell("slope", slope, slope_se, intercept=intercept,
                        limit_rate=limit_rate)
        report.add_check("slope-positive", slope > 0, f"slope={slope:.4g}")
    else:
        report.add_check(
            "regression-points", False,
            f"only {len(xs)} usable n values (need >= 3)",
        )
    report.wall_time = time.perf_counter() - start
    return report


def conditioned_clone_experiment(
    params: ModelParams,
    y: float,
    n: int,
    replicates: int,
    seed: int,
    threads: int = 1,
    min_conditioning: int = 200,
    raw_dir=None,
) -> ExperimentReport:
    """Distribution of the surviving-clone count S among paths with early
    recurrence (deterministic-sensitive mode), located against the most
    likely clone factor a**."""
    start = time.perf_counter()
    scenario = ScenarioConfig(n=n, a=1.0, y=y)
    report = ExperimentReport(
        "conditioned-clones", _snapshot(params, y=y, n=n), replicates, seed,
    )
    batch = det_sensitive_batch(
        params, scenario, seed, replicates, threads=threads
    )
    if raw_dir is not None:
        write_passage_csv(
            f"{raw_dir}/clones.csv", batch["gamma"],
            np.full(replicates, np.nan), surviving=batch["S"],
            extinct=batch["E"],
        )
    surviving = batch["S"]
    early = ~np.isnan(batch["gamma"])
    reference = (
        params.lambda1 * params.mu / (params.r * params.r1)
    ) * n ** (1.0 - params.alpha)
    opt = optimal_clone_factor(y, params)

    # unconditional S should be Poisson with the analytic finite-T mean
    lam = clone_count_mean(batch["T"], params, n)
    top = max(int(surviving.max()), int(lam * 3)) + 1
    observed = np.bincount(surviving, minlength=top).astype(float)
    probs = stats.poisson.pmf(np.arange(top), lam)
    # merge bins until every expected count is at least 5
    bins_obs, bins_exp = [], []
    acc_o = acc_e = 0.0
    for o, p in zip(observed, probs * replicates):
        acc_o += o
        acc_e += p
        if acc_e >= 5.0:
            bins_obs.append(acc_o)
            bins_exp.append(acc_e)
            acc_o = acc_e = 0.0
    bins_obs.append(acc_o + replicates - sum(bins_obs) - acc_o)  # tail
    bins_exp.append(max(replicates - sum(bins_exp), 1e-9))
    chi = stats.chisquare(bins_obs, f_exp=np.array(bins_exp) /
                          sum(bins_exp) * replicates)
    report.add_cell("unconditional-mean-S", surviving.mean(),
                    surviving.std(ddof=1) / math.sqrt(replicates),
                    analytic=lam)
    report.add_check(
        "unconditional-poisson-chisq", bool(chi.pvalue >= 0.01),
        f"p-value={chi.pvalue:.4g} with {len(bins_obs)} bins",
    )

    mode_all = int(np.bincount(surviving).argmax())
    report.add_cell("unconditional-mode-ratio", mode_all / reference, 0.0)
    n_early = int(early.sum())
    report.add_cell("conditioning-events", n_early, math.sqrt(n_early))
    if n_early < min_conditioning:
        report.add_check(
            "conditional-mode", None,
            f"only {n_early} early-recurrence paths (< {min_conditioning}); "
            "inconclusive",
        )
    else:
        cond = surviving[early]
        mode_cond = int(np.bincount(cond).argmax())
        ratio = mode_cond / reference
        report.add_cell("conditional-mode-ratio", ratio,
                        1.0 / reference, a_star_star=opt.a_star_star)
        report.add_check(
            "conditional-mode-exceeds-unconditional",
            mode_cond >= mode_all,
            f"conditional mode {mode_cond} vs unconditional {mode_all} "
            f"(a**={opt.a_star_star:.4f})",
        )
    report.wall_time = time.perf_counter() - start
    return report


def moment_validation(
    params: ModelParams,
    n: int,
    checkpoints: Sequence[float],
    replicates: int,
    seed: int,
    threads: int = 1,
    mean_z: float = 3.0,
    var_z: float = 4.0,
) -> ExperimentReport:
    """Analytic vs empirical means (Z0, Z1, Z2) and variances (Z0, Z1)
    at the requested checkpoint times."""
    start = time.perf_counter()
    report = ExperimentReport(
        "moments", _snapshot(params, n=n, checkpoints=list(checkpoints)),
        replicates, seed,
    )
    scenario = ScenarioConfig(n=n)
    horizon = max(checkpoints) + 1e-9
    batch = passage_batch(
        params, scenario, seed, replicates, track=(),
        checkpoints=checkpoints, horizon=horizon, threads=threads,
    )
    cps = batch["checkpoints"].astype(float)
    populations = (
        ("z0", 0, PopulationIndex.SENSITIVE),
        ("z1", 1, PopulationIndex.PRE_EXISTING),
        ("z2", 2, PopulationIndex.ACQUIRED),
    )

    def z_score(diff: float, se: float, expected: float) -> float:
        if se > 0.0:
            return diff / se
        # constant sample: exact comparison up to rounding of the formula
        return 0.0 if abs(diff) <= 1e-9 * (1.0 + abs(expected)) else math.inf

    for j, t in enumerate(batch["checkpoint_times"]):
        for tag, col, which in populations:
            sample = cps[:, j, col]
            expected = mean_population(which, t, params, n)
            se = sample.std(ddof=1) / math.sqrt(replicates)
            z = z_score(sample.mean() - expected, se, expected)
            report.add_cell(f"mean-{tag}-t{t:g}", sample.mean(), se,
                            analytic=expected, z=z)
            report.add_check(
                f"mean-{tag}-t{t:g}", abs(z) <= mean_z, f"|z|={abs(z):.2f}"
            )
            if which is PopulationIndex.ACQUIRED:
                continue
            expected_var = variance_population(which, t, params, n)
            s2 = sample.var(ddof=1)
            m4 = ((sample - sample.mean()) ** 4).mean()
            var_se = math.sqrt(max(m4 - s2**2, 0.0) / replicates)
            vz = z_score(s2 - expected_var, var_se, expected_var)
            report.add_cell(f"var-{tag}-t{t:g}", s2, var_se,
                            analytic=expected_var, z=vz)
            report.add_check(
                f"var-{tag}-t{t:g}", abs(vz) <= var_z, f"|z|={abs(vz):.2f}"
            )
    report.wall_time = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# The validate command: fast deterministic invariant battery plus a small
# stochastic sanity check.


def validate_suite(params: ModelParams, scenario: ScenarioConfig,
                   seed: int, threads: int = 1) -> ExperimentReport:
    """Run the cross-module invariant suite at one configuration."""
    start = time.perf_counter()
    report = ExperimentReport(
        "validate", _snapshot(params, n=scenario.n, a=scenario.a,
                              y=scenario.y),
        0, seed,
    )

    def check(name: str, passed: bool, detail: str) -> None:
        report.add_check(name, bool(passed), detail)

    # series vs quadrature for the cumulant family and survivor integrals
    worst = 0.0
    for theta in np.linspace(0.01, 0.95, 12):
        worst = max(
            worst,
            abs(cumulant(theta, params) - cumulant(theta, params, "quadrature")),
            abs(cumulant_prime(theta, params)
                - cumulant_prime(theta, params, "quadrature")),
        )
    bound = params.lambda1 / params.r1
    for theta in np.linspace(0.01, 0.95, 12) * bound:
        worst = max(
            worst,
            abs(survivor_integral(theta, params)
                - survivor_integral(theta, params, "quadrature")),
            abs(survivor_integral2(theta, params)
                - survivor_integral2(theta, params, "quadrature")),
        )
    check("series-vs-quadrature", worst <= 1e-10, f"worst |diff|={worst:.2e}")

    slope0 = cumulant_prime(0.0, params)
    identity = params.lambda1 * params.mu / ((params.lambda1 + params.r) * params.r1)
    check("cumulant-slope-at-zero", abs(slope0 - identity) <= 1e-12,
          f"|diff|={abs(slope0 - identity):.2e}")
    check(
        "cumulant-strictly-convex",
        all(cumulant_double_prime(t, params) > 0
            for t in np.linspace(0.01, 0.99, 25)),
        "second derivative positive on grid",
    )

    additivity = max(
        abs(rate_objective(2, th, scenario.y, params)
            - rate_objective(1, th, scenario.y, params)
            - rate_objective(3, th, scenario.y, params))
        for th in np.linspace(0.01, 0.98, 25)
    )
    check("case2-additivity", additivity <= 1e-12, f"worst={additivity:.2e}")

    closed = case3_theta_closed_form(scenario.y, params)
    got = recurrence_rate(3, scenario.y, params).theta_star
    check("case3-closed-form", abs(closed - got) <= 1e-6,
          f"|theta diff|={abs(closed - got):.2e}")

    ys = [0.25, 0.5, 1.0, 1.5]
    monotone = all(
        recurrence_rate(case, y1, params).value
        < recurrence_rate(case, y2, params).value
        for case in (1, 2, 3)
        for y1, y2 in zip(ys, ys[1:])
    )
    check("rates-increasing-in-y", monotone, "all cases on y grid")
    dominated = all(
        crossover_rate(case, y, params).value
        > recurrence_rate(case, y, params).value
        for case in (1, 2, 3)
        for y in ys
    )
    check("crossover-dominates-recurrence", dominated, "all cases on y grid")

    opt = optimal_clone_factor(scenario.y, params)
    check("theta2-below-theta1", opt.theta2 < opt.theta1,
          f"theta1={opt.theta1:.4f}, theta2={opt.theta2:.4f}")
    check("clone-factor-above-one", opt.a_star_star > 1.0,
          f"a**={opt.a_star_star:.4f}")
    grid = np.linspace(1e-3, math.exp(params.lambda1 * scenario.y), 400)
    direct = min(
        conditioned_rate(scenario.y, a, params).value
        + clone_number_cost(a, params)
        for a in grid
    )
    check("minimax-agrees-with-direct",
          abs(direct - opt.objective_value) <= 1e-5,
          f"|diff|={abs(direct - opt.objective_value):.2e}")

    targets = solve_targets(params, scenario)
    check(
        "target-brackets",
        targets.u_lower <= targets.zeta <= targets.u_upper
        and targets.xi < targets.zeta,
        f"zeta={targets.zeta:.4f}, xi={targets.xi:.4f}",
    )

    one = passage_batch(params, scenario, seed, 16, threads=threads)
    two = passage_batch(params, scenario, seed, 16, threads=threads)
    check(
        "replicate-determinism",
        np.array_equal(one["gamma"], two["gamma"], equal_nan=True)
        and np.array_equal(one["tau"], two["tau"], equal_nan=True),
        "same seed twice gives identical passage times",
    )
    report.wall_time = time.perf_counter() - start
    return report
