"""Limiting cumulant, Legendre transform, and the large-deviation rate
functions for early recurrence/crossover, plus the conditioned-recurrence
optimization over the surviving-clone factor.

Conventions
-----------
* The limiting cumulant of the rescaled mutant mass is

      Lam(theta) = (lambda1 mu theta / r1) * I(theta),
      I(theta)   = integral_0^inf e^{-r s} / (e^{lambda1 s} - theta) ds,

  finite for theta < 1 and +inf beyond.  The substitution x = e^{-lambda1 s}
  turns I and its derivatives into integrals over [0, 1]; the geometric
  expansion of the same integrals gives the series forms used as the
  primary evaluation path.  Series and quadrature must agree to 1e-10.

* Each rate function is the supremum over theta of a concave objective
  (linear minus convex).  The supremum search is golden-section to a
  1e-10 bracket followed by a derivative-sign bisection polish.

* Case (2) objectives are by construction the sum of the case (1) and
  case (3) objectives, which is asserted by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.integrate import quad
from scipy.special import hyp2f1

from ._numerics import (
    BracketError,
    bracketed_root,
    geometric_series,
    golden_max,
)
from .params import ModelParams

__all__ = [
    "Cumulant",
    "RateResult",
    "ClonesOptimum",
    "cumulant",
    "cumulant_prime",
    "cumulant_double_prime",
    "legendre",
    "rate_objective",
    "recurrence_rate",
    "crossover_rate",
    "case3_theta_closed_form",
    "decay_ratio_curve",
    "survivor_integral",
    "survivor_integral2",
    "conditioned_rate",
    "clone_number_cost",
    "optimal_clone_factor",
]

EDGE = 1e-9                 # offset from domain endpoints in sup searches
_SERIES_EDGE = 0.99         # beyond this the raw series is summed in closed
                            # form (hyp2f1) instead of term by term
_AGREE_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-13, limit=400)


# ---------------------------------------------------------------------------
# Limiting cumulant and derivatives.


def _cumulant_series(theta: float, lam1: float, r: float) -> float:
    if abs(theta) > _SERIES_EDGE:
        # hyp2f1 is the exact sum of the same series; the raw geometric
        # series needs ~30/(1-theta) terms this close to the edge
        p = r / lam1
        return theta * hyp2f1(1.0, p + 1.0, p + 2.0, theta) / ((p + 1.0) * lam1)
    return theta * geometric_series(lambda k: 1.0 / (r + (k + 1) * lam1), theta)


def _cumulant_quad(theta: float, lam1: float, r: float) -> float:
    p = r / lam1
    val, _ = quad(lambda x: x**p / (1.0 - theta * x), 0.0, 1.0,
                  **_AGREE_QUAD_OPTS)
    return theta * val / lam1


def _cumulant_prime_series(theta: float, lam1: float, r: float) -> float:
    if abs(theta) > _SERIES_EDGE:
        p = r / lam1
        return hyp2f1(2.0, p + 1.0, p + 2.0, theta) / ((p + 1.0) * lam1)
    return geometric_series(lambda k: (k + 1) / (r + (k + 1) * lam1), theta)


def _cumulant_prime_quad(theta: float, lam1: float, r: float) -> float:
    p = r / lam1
    val, _ = quad(lambda x: x**p / (1.0 - theta * x) ** 2, 0.0, 1.0,
                  **_AGREE_QUAD_OPTS)
    return val / lam1


def _cumulant_dprime_series(theta: float, lam1: float, r: float) -> float:
    if abs(theta) > _SERIES_EDGE:
        p = r / lam1
        return 2.0 * hyp2f1(3.0, p + 2.0, p + 3.0, theta) / ((p + 2.0) * lam1)
    return geometric_series(
        lambda k: (k + 1) * (k + 2) / (r + (k + 2) * lam1), theta
    )


def _cumulant_dprime_quad(theta: float, lam1: float, r: float) -> float:
    p = r / lam1 + 1.0
    val, _ = quad(lambda x: 2.0 * x**p / (1.0 - theta * x) ** 3, 0.0, 1.0,
                  **_AGREE_QUAD_OPTS)
    return val / lam1


def _pick(method: str, theta: float, series_fn, quad_fn, lam1, r):
    if method == "series":
        return series_fn(theta, lam1, r)
    if method == "quadrature":
        return quad_fn(theta, lam1, r)
    raise ValueError(f"method must be 'series' or 'quadrature' (got {method!r})")


def cumulant(theta: float, params: ModelParams, method: str = "series") -> float:
    """Lam(theta); +inf for theta >= 1."""
    if theta >= 1.0:
        return math.inf
    if theta == 0.0:
        return 0.0
    scale = params.lambda1 * params.mu / params.r1
    return scale * _pick(method, theta, _cumulant_series, _cumulant_quad,
                         params.lambda1, params.r)


def cumulant_prime(theta: float, params: ModelParams,
                   method: str = "series") -> float:
    """Lam'(theta); Lam'(0) = lambda1 mu / ((lambda1 + r) r1)."""
    if theta >= 1.0:
        return math.inf
    scale = params.lambda1 * params.mu / params.r1
    return scale * _pick(method, theta, _cumulant_prime_series,
                         _cumulant_prime_quad, params.lambda1, params.r)


def cumulant_double_prime(theta: float, params: ModelParams,
                          method: str = "series") -> float:
    """Lam''(theta) > 0 on (0, 1)."""
    if theta >= 1.0:
        return math.inf
    scale = params.lambda1 * params.mu / params.r1
    return scale * _pick(method, theta, _cumulant_dprime_series,
                         _cumulant_dprime_quad, params.lambda1, params.r)


@dataclass(frozen=True)
class Cumulant:
    """Limiting cumulant bound to one parameter set and evaluation method."""

    params: ModelParams
    method: str = "series"

    def __call__(self, theta: float) -> float:
        return cumulant(theta, self.params, self.method)

    def prime(self, theta: float) -> float:
        return cumulant_prime(theta, self.params, self.method)

    def double_prime(self, theta: float) -> float:
        return cumulant_double_prime(theta, self.params, self.method)


# ---------------------------------------------------------------------------
# Rate-function machinery.


@dataclass(frozen=True)
class RateResult:
    """Value of a rate function with its maximizer and solver diagnostics."""

    value: float
    theta_star: float
    iterations: int
    case_tag: str


def _clamp_tiny(value: float) -> float:
    # sup over a half-open interval evaluated at the epsilon edge can come
    # out at -1e-19 when the true supremum is 0
    return 0.0 if -1e-12 < value < 0.0 else value


def legendre(x: float, params: ModelParams) -> RateResult:
    """Legendre transform Lam*(x) with maximizer theta*(x) = Lam'^{-1}(x).

    For x <= Lam'(0) the infimum slope is attained at theta = 0 and the
    transform is 0 (boundary case tag).
    """
    slope0 = params.lambda1 * params.mu / ((params.lambda1 + params.r) * params.r1)
    if x <= slope0:
        return RateResult(0.0, 0.0, 0, "legendre-boundary")

    def gap(theta: float) -> float:
        return cumulant_prime(theta, params) - x

    hi = 0.5
    iters = 0
    while gap(hi) < 0.0:
        hi = 1.0 - 0.1 * (1.0 - hi)
        iters += 1
        if 1.0 - hi < 1e-15:
            raise BracketError(f"Lam' never reaches x={x} below theta=1")
    # gap(0) = Lam'(0) - x < 0 exactly, so [0, hi] always brackets
    theta_star = bracketed_root(gap, 0.0, hi)
    value = x * theta_star - cumulant(theta_star, params)
    return RateResult(value, theta_star, iters, "legendre")


def _log_barrier(theta: float, lam1: float, r1: float) -> float:
    """log(1 - (lambda1/r1) * theta/(theta - 1)) for theta in (0, 1)."""
    return math.log1p((lam1 / r1) * theta / (1.0 - theta))


def _log_barrier_prime(theta: float, lam1: float, r1: float) -> float:
    g = 1.0 + (lam1 / r1) * theta / (1.0 - theta)
    return (lam1 / r1) / ((1.0 - theta) ** 2 * g)


def _case_terms(case: int, y: float, params: ModelParams, exponent: float):
    """Linear coefficient and convex part (f, f') of one case objective."""
    lam1, r, r1, mu = params.lambda1, params.r, params.r1, params.mu
    growth = math.exp(exponent * y)
    if case == 1:
        coeff = lam1 * mu * growth / (r1 * (lam1 + r))
        convex = lambda th: cumulant(th, params)
        convex_prime = lambda th: cumulant_prime(th, params)
    elif case == 2:
        coeff = lam1 * (mu + lam1 + r) * growth / (r1 * (lam1 + r))
        convex = lambda th: _log_barrier(th, lam1, r1) + cumulant(th, params)
        convex_prime = lambda th: (
            _log_barrier_prime(th, lam1, r1) + cumulant_prime(th, params)
        )
    elif case == 3:
        coeff = lam1 * growth / r1
        convex = lambda th: _log_barrier(th, lam1, r1)
        convex_prime = lambda th: _log_barrier_prime(th, lam1, r1)
    else:
        raise ValueError(f"case must be 1, 2 or 3 (got {case})")
    return coeff, convex, convex_prime


def rate_objective(case: int, theta: float, y: float, params: ModelParams,
                   passage: str = "recurrence") -> float:
    """The concave objective whose supremum over theta in (0,1) is the
    rate function.  Exposed for the case-2 additivity identity."""
    exponent = _passage_exponent(passage, params)
    coeff, convex, _ = _case_terms(case, y, params, exponent)
    return coeff * theta - convex(theta)


def _passage_exponent(passage: str, params: ModelParams) -> float:
    if passage == "recurrence":
        return params.lambda1
    if passage == "crossover":
        return params.lambda1 + params.r
    raise ValueError(
        f"passage must be 'recurrence' or 'crossover' (got {passage!r})"
    )


def _case_rate(case: int, y: float, params: ModelParams,
               passage: str) -> RateResult:
    if y < 0:
        raise ValueError(f"y must be >= 0 (got {y})")
    exponent = _passage_exponent(passage, params)
    coeff, convex, convex_prime = _case_terms(case, y, params, exponent)
    f = lambda th: coeff * th - convex(th)
    fp = lambda th: coeff - convex_prime(th)
    theta_star, value, iters = golden_max(f, EDGE, 1.0 - EDGE, fprime=fp)
    return RateResult(_clamp_tiny(value), theta_star, iters,
                      f"{passage}-case{case}")


def recurrence_rate(case: int, y: float, params: ModelParams) -> RateResult:
    """Rate function for early recurrence, cases 1-3."""
    return _case_rate(case, y, params, "recurrence")


def crossover_rate(case: int, y: float, params: ModelParams) -> RateResult:
    """Rate function for early crossover: identical structure with every
    e^{lambda1 y} replaced by e^{(lambda1 + r) y}."""
    return _case_rate(case, y, params, "crossover")


def case3_theta_closed_form(y: float, params: ModelParams,
                            passage: str = "recurrence") -> float:
    """Closed-form maximizer of the case-3 objective.

    Root of (d1 theta - r1)(theta - 1) = r1 / E with E the passage
    growth factor; written in the d1->0-stable rationalized form.
    """
    lam1, r1, d1 = params.lambda1, params.r1, params.d1
    growth = math.exp(_passage_exponent(passage, params) * y)
    disc = math.sqrt(lam1 * lam1 + 4.0 * r1 * d1 / growth)
    return 2.0 * r1 * (1.0 - 1.0 / growth) / (r1 + d1 + disc)


def decay_ratio_curve(y: float, beta_values, n: int,
                      params: ModelParams) -> list[tuple[float, float]]:
    """n**(beta - alpha) * L1(y) / L3(y) for each beta in (0, alpha]."""
    alpha = params.alpha
    for beta in beta_values:
        if not 0.0 < beta <= alpha:
            raise ValueError(
                f"each beta must lie in (0, alpha={alpha}] (got {beta})"
            )
    l1 = recurrence_rate(1, y, params).value
    l3 = recurrence_rate(3, y, params).value
    return [(beta, n ** (beta - alpha) * l1 / l3) for beta in beta_values]


# ---------------------------------------------------------------------------
# Conditioned analysis: survivor integrals, Poisson cost, clone factor.


def _q_of(theta: float, params: ModelParams) -> float:
    return params.r1 * theta / params.lambda1


def survivor_integral(theta: float, params: ModelParams,
                      method: str = "series") -> float:
    """J(theta) = r * integral_0^inf lambda1 e^{lambda1 s} /
    (lambda1 e^{lambda1 s} - r1 theta) e^{-r s} ds; +inf for
    theta >= lambda1/r1.  J(0) = 1 and J is strictly increasing."""
    lam1, r = params.lambda1, params.r
    q = _q_of(theta, params)
    if q >= 1.0:
        return math.inf
    p = r / lam1
    if method == "quadrature":
        val, _ = quad(lambda x: x ** (p - 1.0) / (1.0 - q * x), 0.0, 1.0,
                      **_AGREE_QUAD_OPTS)
        return p * val
    if abs(q) > _SERIES_EDGE:
        return hyp2f1(1.0, p, p + 1.0, q)
    return geometric_series(lambda k: r / (r + k * lam1), q)


def survivor_integral2(theta: float, params: ModelParams,
                       method: str = "series") -> float:
    """J2(theta) = integral_0^inf lambda1 e^{lambda1 s} /
    (lambda1 e^{lambda1 s} - r1 theta)^2 e^{-r s} ds; +inf for
    theta >= lambda1/r1."""
    lam1, r = params.lambda1, params.r
    q = _q_of(theta, params)
    if q >= 1.0:
        return math.inf
    p = r / lam1
    if method == "quadrature":
        val, _ = quad(lambda x: x**p / (1.0 - q * x) ** 2, 0.0, 1.0,
                      **_AGREE_QUAD_OPTS)
        return val / (lam1 * lam1)
    if abs(q) > _SERIES_EDGE:
        return hyp2f1(2.0, p + 1.0, p + 2.0, q) / ((p + 1.0) * lam1 * lam1)
    return geometric_series(
        lambda k: (k + 1) / ((k + 1) * lam1 + r), q
    ) / lam1


def _survivor_integral_prime(theta: float, params: ModelParams) -> float:
    """dJ/dtheta = r * r1 * J2(theta) (differentiate under the integral)."""
    return params.r * params.r1 * survivor_integral2(theta, params)


def clone_number_cost(a: float, params: ModelParams) -> float:
    """Poisson deviation exponent for observing a times the mean clone
    count: (lambda1 mu / (r r1)) * (a log a - a + 1)."""
    if not a > 0:
        raise ValueError(f"a must be positive (got {a})")
    kappa = params.lambda1 * params.mu / (params.r * params.r1)
    return kappa * (a * math.log(a) - a + 1.0)


def conditioned_rate(y: float, a: float, params: ModelParams) -> RateResult:
    """Rate of early recurrence conditioned on the surviving-clone count
    being a times its mean (deterministic-sensitive mode).

    sup over theta in (0, lambda1/r1) of
        theta mu e^{lambda1 y} / (lambda1 + r)
        - a (lambda1 mu / (r r1)) log J(theta).
    """
    lam1, r, r1, mu = params.lambda1, params.r, params.r1, params.mu
    growth = math.exp(lam1 * y)
    if not 0.0 < a <= growth:
        raise ValueError(
            f"clone factor a must lie in (0, e^(lambda1 y)={growth}] "
            f"(got {a}); beyond it early recurrence is not rare"
        )
    kappa = lam1 * mu / (r * r1)
    linear = mu * growth / (lam1 + r)
    bound = lam1 / r1

    def f(theta: float) -> float:
        return linear * theta - a * kappa * math.log(
            survivor_integral(theta, params)
        )

    def fp(theta: float) -> float:
        j = survivor_integral(theta, params)
        return linear - a * kappa * _survivor_integral_prime(theta, params) / j

    lo, hi = EDGE * bound, (1.0 - EDGE) * bound
    theta_star, value, iters = golden_max(f, lo, hi, fprime=fp)
    return RateResult(_clamp_tiny(value), theta_star, iters, "conditioned")


@dataclass(frozen=True)
class ClonesOptimum:
    """Most likely clone factor given early recurrence, with the roots of
    the two survivor-integral equations and the minimized total exponent."""

    a_star_star: float
    theta1: float
    theta2: float
    objective_value: float


def _solve_to_level(fn, target: float, bound: float) -> float:
    """Root of fn(theta) = target on (0, bound); fn increasing from fn(0)."""

    def gap(theta: float) -> float:
        return fn(theta) - target

    hi = 0.5 * bound
    for _ in range(60):
        val = gap(hi)
        if math.isfinite(val) and val > 0.0:
            break
        hi = bound - 0.1 * (bound - hi)
    else:
        raise BracketError(f"level {target} not reached below theta={bound}")
    return bracketed_root(gap, 1e-14, hi)


def optimal_clone_factor(y: float, params: ModelParams) -> ClonesOptimum:
    """Solve the minimax problem for the most likely clone factor a**.

    theta1 solves J(theta) = e^{lambda1 y}; theta2 solves
    lambda1 (lambda1 + r) J2(theta) = e^{lambda1 y}; theta2 < theta1 and
    a** = min(J(theta2), e^{lambda1 y}) is interior.  The reported
    objective is conditioned_rate(y, a**) + clone_number_cost(a**).
    """
    if not y > 0:
        raise ValueError(f"y must be positive (got {y})")
    lam1, r, r1 = params.lambda1, params.r, params.r1
    growth = math.exp(lam1 * y)
    bound = lam1 / r1

    theta1 = _solve_to_level(
        lambda th: survivor_integral(th, params), growth, bound
    )
    theta2 = _solve_to_level(
        lambda th: lam1 * (lam1 + r) * survivor_integral2(th, params),
        growth, bound,
    )
    if not theta2 < theta1:
        raise ArithmeticError(
            f"expected theta2 < theta1 (got theta1={theta1}, theta2={theta2})"
        )
    a_star_star = min(survivor_integral(theta2, params), growth)
    total = conditioned_rate(y, a_star_star, params).value + clone_number_cost(
        a_star_star, params
    )
    return ClonesOptimum(a_star_star, theta1, theta2, total)
