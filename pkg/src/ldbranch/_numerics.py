"""Shared numerical helpers: bracketed roots, concave maximization, series."""

from __future__ import annotations

import math

from scipy.optimize import brentq

SERIES_RTOL = 1e-14
SERIES_MAX_TERMS = 10**6
GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(RuntimeError):
    """A root was not bracketed by the analytically derived interval."""


def bracketed_root(f, lo: float, hi: float, rtol: float = 1e-12) -> float:
    """Root of f on [lo, hi]; f(lo) and f(hi) must differ in sign.

    Brent's method (bisection refined by secant/inverse-quadratic steps).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(
            f"root not bracketed on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}"
        )
    return brentq(f, lo, hi, xtol=1e-300, rtol=max(rtol, 8.9e-16), maxiter=300)


def geometric_series(term_fn, q: float, rtol: float = SERIES_RTOL,
                     max_terms: int = SERIES_MAX_TERMS) -> float:
    """Sum_{k>=0} q**k * term_fn(k) with compensated (Kahan) summation.

    Stops once the remaining geometric tail, bounded by the last term
    times q/(1-q), drops below rtol times the partial sum.
    """
    tail_factor = abs(q) / (1.0 - abs(q)) if abs(q) < 1.0 else math.inf
    tail_factor = max(tail_factor, 1.0)
    total = 0.0
    carry = 0.0
    power = 1.0
    for k in range(max_terms):
        add = power * term_fn(k) - carry
        fresh = total + add
        carry = (fresh - total) - add
        total = fresh
        if k > 4 and abs(add) * tail_factor <= rtol * abs(total):
            return total
        power *= q
    return total


def golden_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL,
               fprime=None):
    """Maximize a concave f on [lo, hi].

    Golden-section search to bracket width ``tol``, then (when ``fprime``
    is given) a derivative-sign bisection polish inside the final
    bracket.  Returns (x, f(x), iterations).
    """
    a, b = lo, hi
    iters = 0
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        iters += 1
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    if fprime is not None:
        ga, gb = fprime(a), fprime(b)
        if ga > 0 > gb:
            pa, pb = a, b
            for _ in range(200):
                iters += 1
                mid = 0.5 * (pa + pb)
                if mid == pa or mid == pb:
                    break
                if fprime(mid) > 0:
                    pa = mid
                else:
                    pb = mid
            x = 0.5 * (pa + pb)
    return x, f(x), iters
