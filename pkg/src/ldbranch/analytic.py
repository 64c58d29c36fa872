"""Closed-form means, variances, generating functions, and target times.

Everything here is a pure function of the model parameters.  Time
arguments are absolute (same units as the rates); population-size
arguments are the initial sensitive count n.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy.integrate import quad

from ._numerics import BracketError, bracketed_root
from .params import ModelParams, ResistantRates, ScenarioConfig, SensitiveRates, time_scale

__all__ = [
    "PopulationIndex",
    "TargetTimes",
    "mean_population",
    "variance_population",
    "clone_mgf",
    "clone_mgf_domain",
    "clone_pmf",
    "clone_survival",
    "subcritical_laplace",
    "decay_coefficient",
    "solve_targets",
    "conditional_clone_mean",
    "conditional_clone_mgf",
    "clone_count_mean",
]

QUAD_ABS_TOL = 1e-10


class PopulationIndex(enum.Enum):
    SENSITIVE = "sensitive"          # Z0, subcritical, starts at n
    PRE_EXISTING = "pre_existing"    # Z1, supercritical, starts at X(n)
    ACQUIRED = "acquired"            # Z2, branching with immigration


def _immigration_scale(params: ModelParams, n: int) -> float:
    """mu / (lambda1 + r) * n**(1 - alpha), the acquired-mutant mean scale."""
    return params.mu / (params.lambda1 + params.r) * n ** (1.0 - params.alpha)


def mean_population(which: PopulationIndex, t: float, params: ModelParams,
                    n: int) -> float:
    """Expected count of one population at absolute time t >= 0."""
    if t < 0:
        raise ValueError(f"t must be >= 0 (got {t})")
    if which is PopulationIndex.SENSITIVE:
        return n * math.exp(-params.r * t)
    if which is PopulationIndex.PRE_EXISTING:
        return params.initial_mutants(n) * math.exp(params.lambda1 * t)
    # e^{lambda1 t} (1 - e^{(lambda0-lambda1) t}) == e^{lambda1 t} - e^{lambda0 t}
    return _immigration_scale(params, n) * (
        math.exp(params.lambda1 * t) - math.exp(params.lambda0 * t)
    )


def variance_population(which: PopulationIndex, t: float, params: ModelParams,
                        n: int) -> float:
    """Variance of Z0 or Z1 at time t.  No formula exists for Z2."""
    if t < 0:
        raise ValueError(f"t must be >= 0 (got {t})")
    if which is PopulationIndex.SENSITIVE:
        decay = math.exp(-params.r * t)
        return (params.r0 + params.d0) / params.r * n * decay * (1.0 - decay)
    if which is PopulationIndex.PRE_EXISTING:
        growth = math.exp(params.lambda1 * t)
        return (
            params.initial_mutants(n)
            * (params.r1 + params.d1) / params.lambda1
            * growth * (growth - 1.0)
        )
    raise ValueError("no variance formula for the acquired-mutant population")


def clone_mgf_domain(t: float, resistant: ResistantRates) -> float:
    """Upper endpoint of the finite domain of the single-clone MGF.

    log((r1 e^{lambda1 t} - d1) / (r1 e^{lambda1 t} - r1)); strictly
    positive and strictly decreasing in t.
    """
    if not t > 0:
        raise ValueError(f"t must be positive (got {t})")
    # log(num/den) = log1p((r1 - d1) / (r1 (e^{lambda1 t} - 1)))
    return math.log1p(
        resistant.lambda1 / (resistant.r1 * math.expm1(resistant.lambda1 * t))
    )


def clone_mgf(theta: float, t: float, resistant: ResistantRates) -> float:
    """MGF E[exp(theta Z(t))] of a single resistant clone started at 1.

    Returns math.inf for theta at or above the domain endpoint.
    """
    if not t > 0:
        raise ValueError(f"t must be positive (got {t})")
    if theta >= clone_mgf_domain(t, resistant):
        return math.inf
    r1, d1 = resistant.r1, resistant.d1
    em = math.exp(theta)
    decay = math.exp(-resistant.lambda1 * t)
    top = d1 * (em - 1.0) - decay * (r1 * em - d1)
    bot = r1 * (em - 1.0) - decay * (r1 * em - d1)
    return top / bot


def clone_survival(t: float, resistant: ResistantRates) -> float:
    """P(Z(t) > 0) = lambda1 / (r1 - d1 e^{-lambda1 t}) for a single clone."""
    return resistant.lambda1 / (
        resistant.r1 - resistant.d1 * math.exp(-resistant.lambda1 * t)
    )


def clone_pmf(j: int, t: float, resistant: ResistantRates) -> float:
    """P(Z(t) = j) for a single resistant clone started at one cell."""
    if not t > 0:
        raise ValueError(f"t must be positive (got {t})")
    if j < 0:
        raise ValueError(f"j must be >= 0 (got {j})")
    r1, d1, lam1 = resistant.r1, resistant.d1, resistant.lambda1
    decay = math.exp(-lam1 * t)
    denom = r1 - d1 * decay
    if j == 0:
        return d1 * (1.0 - decay) / denom
    ratio = r1 * (1.0 - decay) / denom
    return (lam1 / denom) * ratio ** (j - 1) * (lam1 * decay / denom)


def subcritical_laplace(theta: float, t: float,
                        sensitive: SensitiveRates) -> float:
    """Laplace transform E[exp(-theta Z0(t))] of a single subcritical line.

    Written so it stays finite for arbitrarily large r*t.
    """
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative (got {theta})")
    if not t > 0:
        raise ValueError(f"t must be positive (got {t})")
    r0, d0 = sensitive.r0, sensitive.d0
    emt = math.exp(-theta)
    c = r0 * emt - d0
    e = d0 * (emt - 1.0)
    f = r0 * (emt - 1.0)
    shrink = math.exp(-sensitive.r * t)
    return (c - e * shrink) / (c - f * shrink)


def decay_coefficient(theta: float, sensitive: SensitiveRates) -> float:
    """k(theta) = (e - f)/c > 0, the n**(1-a)-scale decay constant of the
    Laplace transform of the sensitive population; k(theta)/theta -> 1 as
    theta -> 0."""
    if not theta > 0:
        raise ValueError(f"theta must be positive (got {theta})")
    r0, d0 = sensitive.r0, sensitive.d0
    emt = math.exp(-theta)
    c = r0 * emt - d0
    return (d0 - r0) * (emt - 1.0) / c


@dataclass(frozen=True)
class TargetTimes:
    """Deterministic target times the passage times concentrate around.

    All fields are absolute times except u_of_y, which is the rescaled
    (zeta - y) / t_n.
    """

    zeta: float        # solution of z1(t) + z2(t) = a*n
    xi: float          # solution of z1(t) + z2(t) = z0(t)
    u_lower: float     # analytic lower bracket for zeta
    u_upper: float     # analytic upper bracket for zeta
    u_of_y: float      # (zeta - y) / t_n


def _mutant_mean(t: float, x0: int, scale: float, lam1: float,
                 lam0: float) -> float:
    return x0 * math.exp(lam1 * t) + scale * (
        math.exp(lam1 * t) - math.exp(lam0 * t)
    )


def solve_targets(params: ModelParams, scenario: ScenarioConfig) -> TargetTimes:
    """Solve for zeta_n(a) and xi_n with analytically bracketed roots.

    The brackets come from the envelope bounds on the acquired-mutant
    mean: scale*(e^{lambda1 t} - 1) <= z2(t) <= scale*e^{lambda1 t}.
    Raises BracketError when no root exists in the derived bracket
    (e.g. no mutant source, threshold already met, or y >= zeta).
    """
    n, a, y = scenario.n, scenario.a, scenario.y
    lam1, lam0, r = params.lambda1, params.lambda0, params.r
    x0 = params.initial_mutants(n)
    scale = _immigration_scale(params, n)
    base = x0 + scale
    if base <= 0.0:
        raise BracketError("no mutant source: X = 0 and mu = 0")
    if a * n <= base:
        raise BracketError(
            f"recurrence threshold a*n = {a * n} not above X + mutant scale "
            f"= {base}; zeta would not be positive"
        )

    u_lower = math.log(a * n / base) / lam1
    u_upper = math.log((a * n + scale) / base) / lam1

    def recur_gap(t: float) -> float:
        return _mutant_mean(t, x0, scale, lam1, lam0) - a * n

    zeta = bracketed_root(recur_gap, u_lower, u_upper)
    if abs(recur_gap(zeta)) > 1e-9 * a * n:
        raise ArithmeticError(
            f"target-time solve residual too large at zeta={zeta}"
        )

    def cross_gap(t: float) -> float:
        return _mutant_mean(t, x0, scale, lam1, lam0) - n * math.exp(-r * t)

    t_lo = max(0.0, math.log(n / base) / (lam1 + r))
    t_hi = math.log((n + scale) / base) / lam1
    xi = bracketed_root(cross_gap, t_lo, t_hi)

    if y >= zeta:
        raise BracketError(f"early offset y={y} is not below zeta={zeta}")
    t_n = time_scale(n, r)
    return TargetTimes(
        zeta=zeta, xi=xi, u_lower=u_lower, u_upper=u_upper,
        u_of_y=(zeta - y) / t_n,
    )


# ---------------------------------------------------------------------------
# Clone-level quantities for the deterministic-sensitive analysis (X = 0).


def _arrival_weight_integral(T: float, params: ModelParams) -> float:
    """integral_0^T survival(T - s) e^{-r s} ds, the (unscaled) mean number
    of clones born before T that survive to T."""
    res = params.resistant
    val, _ = quad(
        lambda s: clone_survival(T - s, res) * math.exp(-params.r * s),
        0.0, T, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200,
    )
    return val


def conditional_clone_mean(K: int, T: float, params: ModelParams) -> float:
    """E[surviving-clone mass at T | exactly K clones survive to T].

    Linear in K.  Valid in the deterministic-sensitive mode (X = 0).
    """
    if K < 0:
        raise ValueError(f"K must be >= 0 (got {K})")
    if not T > 0:
        raise ValueError(f"T must be positive (got {T})")
    if K == 0:
        return 0.0
    lam1, r = params.lambda1, params.r
    numer = math.exp(lam1 * T) * -math.expm1(-(lam1 + r) * T) / (lam1 + r)
    return K * numer / _arrival_weight_integral(T, params)


def _conditioned_clone_factor(u: float, theta_scaled: float,
                              resistant: ResistantRates) -> float:
    """E[exp(theta_scaled Z(u)) | Z(u) > 0] for a single clone."""
    r1, d1, lam1 = resistant.r1, resistant.d1, resistant.lambda1
    em = math.exp(theta_scaled)
    decay = math.exp(-lam1 * u)
    return em * lam1 * decay / (r1 * (1.0 - em) + decay * (r1 * em - d1))


def conditional_clone_mgf(theta: float, K: int, T: float,
                          params: ModelParams,
                          limit_kernel: bool = False) -> float:
    """MGF E[exp(theta e^{-lambda1 T} Z_S(T)) | S = K] of the scaled
    surviving-clone mass.

    With ``limit_kernel=True`` the inner survival-conditioned factor is
    replaced by its large-n limit lambda1 e^{lambda1 s} /
    (lambda1 e^{lambda1 s} - r1 theta), whose domain is
    theta < lambda1/r1.  Returns math.inf outside the finite domain.
    """
    if K < 0:
        raise ValueError(f"K must be >= 0 (got {K})")
    if not T > 0:
        raise ValueError(f"T must be positive (got {T})")
    if K == 0 or theta == 0.0:
        return 1.0
    res = params.resistant
    lam1, r, r1 = params.lambda1, params.r, params.r1

    if limit_kernel:
        if theta >= lam1 / r1:
            return math.inf

        def inner(s: float) -> float:
            grow = lam1 * math.exp(lam1 * s)
            return grow / (grow - r1 * theta)
    else:
        theta_scaled = theta * math.exp(-lam1 * T)
        if theta_scaled >= clone_mgf_domain(T, res):
            return math.inf

        def inner(s: float) -> float:
            return _conditioned_clone_factor(T - s, theta_scaled, res)

    numer, _ = quad(
        lambda s: clone_survival(T - s, res) * inner(s) * math.exp(-r * s),
        0.0, T, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200,
    )
    return (numer / _arrival_weight_integral(T, params)) ** K


def clone_count_mean(T: float, params: ModelParams, n: int) -> float:
    """Mean number of clones born in (0, T) that survive to T
    (deterministic-sensitive mode).

    T = math.inf returns the limit n**(1-alpha) * lambda1 * mu / (r * r1).
    """
    if T < 0:
        raise ValueError(f"T must be >= 0 (got {T})")
    scale = params.mu * n ** (1.0 - params.alpha)
    if T == 0.0:
        return 0.0
    if math.isinf(T):
        return scale * params.lambda1 / (params.r * params.r1)
    return scale * _arrival_weight_integral(T, params)
