"""Physicists' Hermite polynomials in log-sign form.

Threshold work needs H_m over a huge dynamic range (values beyond 1e308 for
m ~ 200 at moderate argument), so the three-term recurrence

    H_{m+1}(x) = 2x H_m(x) - 2m H_{m-1}(x)

is carried in (log|H|, sign) pairs.  Near a polynomial zero the subtraction
cancels and the relative accuracy of that single value degrades; callers only
ever use those values where their magnitude is negligible, so this is benign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, SolverError

__all__ = [
    "hermite_eval",
    "hermite_eval_all",
    "hermite_value",
    "hermite_nonneg_zeros",
    "HermiteAnchor",
    "hermite_anchor",
]


def hermite_eval_all(order: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """(log|H_m(x)|, sign H_m(x)) for every m = 0..order at scalar x."""
    if order < 0:
        raise DomainError(f"order must be >= 0, got {order}")
    logh = np.full(order + 1, -np.inf)
    sgn = np.zeros(order + 1)
    logh[0], sgn[0] = 0.0, 1.0
    if order == 0:
        return logh, sgn
    ax = abs(2.0 * x)
    l2x = math.log(ax) if ax > 0.0 else -math.inf
    s2x = 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)
    logh[1], sgn[1] = l2x, s2x
    for m in range(1, order):
        l1 = l2x + logh[m]
        s1 = s2x * sgn[m]
        l2 = math.log(2.0 * m) + logh[m - 1]
        s2 = -sgn[m - 1]
        logh[m + 1], sgn[m + 1] = _signed_log_add(l1, s1, l2, s2)
    return logh, sgn


def _signed_log_add(l1, s1, l2, s2):
    """log-sign sum of s1*e^l1 + s2*e^l2 (scalars)."""
    if s1 == 0.0 or l1 == -math.inf:
        return l2, s2
    if s2 == 0.0 or l2 == -math.inf:
        return l1, s1
    if l1 >= l2:
        hi, lo, shi = l1, l2, s1
    else:
        hi, lo, shi = l2, l1, s2
    d = lo - hi
    if s1 == s2:
        return hi + math.log1p(math.exp(d)), s1
    ex = math.exp(d)
    if ex >= 1.0:  # exact cancellation
        return -math.inf, 0.0
    return hi + math.log1p(-ex), shi


def hermite_eval(order: int, x: float) -> tuple[float, float]:
    """Physicists' Hermite H_order(x) as (log-magnitude, sign)."""
    logh, sgn = hermite_eval_all(order, x)
    return float(logh[order]), float(sgn[order])


def hermite_value(order: int, x: float) -> float:
    """H_order(x) as a plain float; overflows to +-inf for large order."""
    logm, s = hermite_eval(order, x)
    return s * math.exp(logm)


def log_hermite_recurrence(y: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (log|H_m|, sign) for m = 0..order over an array of arguments."""
    y = np.asarray(y, dtype=float)
    logh = np.full((order + 1,) + y.shape, -np.inf)
    sgn = np.zeros((order + 1,) + y.shape)
    logh[0] = 0.0
    sgn[0] = 1.0
    if order == 0:
        return logh, sgn
    with np.errstate(divide="ignore"):
        l2y = np.where(y != 0.0, np.log(np.abs(2.0 * y)), -np.inf)
    s2y = np.sign(y)
    logh[1], sgn[1] = l2y, s2y
    for m in range(1, order):
        l1 = l2y + logh[m]
        s1 = s2y * sgn[m]
        l2 = math.log(2.0 * m) + logh[m - 1]
        s2 = -sgn[m - 1]
        hi = np.maximum(l1, l2)
        lo = np.minimum(l1, l2)
        with np.errstate(invalid="ignore"):
            ex = np.exp(lo - hi)
        ex = np.where(np.isfinite(ex), ex, 0.0)
        same = s1 == s2
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(same, hi + np.log1p(ex), hi + np.log1p(-np.minimum(ex, 1.0)))
        sg = np.where(same, s1, np.where(l1 >= l2, s1, s2))
        dead1 = (s1 == 0.0) | ~np.isfinite(l1)
        dead2 = (s2 == 0.0) | ~np.isfinite(l2)
        val = np.where(dead1, l2, np.where(dead2, l1, val))
        sg = np.where(dead1, s2, np.where(dead2, s1, sg))
        cancel = ~dead1 & ~dead2 & ~same & (ex >= 1.0)
        val = np.where(cancel, -np.inf, val)
        sg = np.where(cancel, 0.0, sg)
        logh[m + 1], sgn[m + 1] = val, sg
    return logh, sgn


_RESCALE = 2.0**512
_RESCALE_INV = 2.0**-512
_RESCALE_LOG = 512.0 * math.log(2.0)
_RESCALE_TRIGGER = 2.0**500


def log_hermite_scalar(y: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Scalar-argument variant of `log_hermite_recurrence`.

    Runs the plain three-term recurrence on floats with power-of-two
    rescaling against overflow (numerically identical to the float
    recurrence), then converts to (log|H|, sign) arrays.  Much faster than
    carrying logs through each step; used by the threshold solver where
    millions of single-point evaluations occur.
    """
    mant = np.empty(order + 1)
    expo = np.zeros(order + 1)
    mant[0] = 1.0
    if order >= 1:
        mant[1] = 2.0 * y
    h_prev, h = 1.0, 2.0 * y
    scale = 0
    y2 = 2.0 * y
    for m in range(1, order):
        nxt = y2 * h - (2.0 * m) * h_prev
        h_prev, h = h, nxt
        if h > _RESCALE_TRIGGER or h < -_RESCALE_TRIGGER:
            h *= _RESCALE_INV
            h_prev *= _RESCALE_INV
            scale += 1
        mant[m + 1] = h
        expo[m + 1] = scale
    with np.errstate(divide="ignore"):
        logh = np.log(np.abs(mant)) + expo * _RESCALE_LOG
    sgn = np.sign(mant)
    return logh, sgn


def log_hermite_product(order: int, y: float) -> tuple[float, float]:
    """(log|H_order(y)|, sign) through the factored form 2^m prod(y - z_i).

    Near a zero of H_order the three-term recurrence cancels catastrophically
    while this form keeps full relative precision in the small factor; the
    solver uses it to refine exactly those values.
    """
    if order == 0:
        return 0.0, 1.0
    zeros = hermite_nonneg_zeros(order)
    logm = order * math.log(2.0)
    sign = 1.0
    for z in zeros:
        if z == 0.0:
            d = y
            if d == 0.0:
                return -math.inf, 0.0
            logm += math.log(abs(d))
            sign *= math.copysign(1.0, d)
        else:
            for d in (y - z, y + z):
                if d == 0.0:
                    return -math.inf, 0.0
                logm += math.log(abs(d))
                sign *= math.copysign(1.0, d)
    return logm, sign


_REFINE_ORDER_CAP = 40  # beyond this a dipped H_m only occurs deep in tails


def refine_log_hermite(y: float, logh, sgn=None) -> None:
    """Replace recurrence values that show cancellation (a deep relative dip
    against their neighbour) with the factored-form evaluation, in place."""
    kmax = min(len(logh) - 1, _REFINE_ORDER_CAP)
    for m in range(1, kmax + 1):
        prev = logh[m - 1]
        if prev == -math.inf:
            continue
        if logh[m] - prev < -16.0:
            lm, sm = log_hermite_product(m, y)
            logh[m] = lm
            if sgn is not None:
                sgn[m] = sm


@lru_cache(maxsize=256)
def hermite_nonneg_zeros(order: int) -> np.ndarray:
    """Non-negative zeros of H_order, ascending, by bisection on sign changes.

    Zeros of H_order lie inside [0, sqrt(4*order + 2)]; the scan grid is fine
    enough to separate neighbouring zeros for order <= ~40.  Cached; the
    returned array is read-only.
    """
    if order < 0:
        raise DomainError(f"order must be >= 0, got {order}")
    if order == 0:
        return np.array([])
    upper = math.sqrt(4.0 * order + 2.0)
    grid = np.linspace(0.0, upper, 80 * (order + 2))
    vals = np.array([_signed_value(order, x) for x in grid])
    zeros = []
    if order % 2 == 1:
        zeros.append(0.0)  # odd order: exact zero at the origin
    for j in range(len(grid) - 1):
        a, b = vals[j], vals[j + 1]
        if a == 0.0 and grid[j] > 0.0:
            zeros.append(grid[j])
        elif a * b < 0.0:
            zeros.append(_bisect_zero(order, grid[j], grid[j + 1]))
    zeros = np.unique(np.round(np.array(zeros), 15))
    expected = (order + 1) // 2
    if len(zeros) != expected:
        raise SolverError(
            f"found {len(zeros)} non-negative zeros of H_{order}, expected {expected}"
        )
    zeros.setflags(write=False)
    return zeros


def _signed_value(order, x):
    # only the sign matters for the scan; the scaled recurrence never
    # overflows and is cheap
    h_prev, h = 1.0, 2.0 * x
    if order == 0:
        return 1.0
    for m in range(1, order):
        h_prev, h = h, 2.0 * x * h - (2.0 * m) * h_prev
        if h > _RESCALE_TRIGGER or h < -_RESCALE_TRIGGER:
            h *= _RESCALE_INV
            h_prev *= _RESCALE_INV
    return math.copysign(1.0, h) if h != 0.0 else 0.0


def _bisect_zero(order, a, b):
    fa = _signed_value(order, a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = _signed_value(order, mid)
        if fm == 0.0:
            return mid
        if fm == fa:
            a = mid
        else:
            b = mid
        if b - a <= 1e-15 * max(1.0, abs(b)):
            break
    return 0.5 * (a + b)


@dataclass(frozen=True)
class HermiteAnchor:
    """The zero of H_{n+1} at which |H_n| is largest, plus H_n(x)^2 there."""

    order: int
    x_star: float
    h_n_sq: float


def hermite_anchor(order: int) -> HermiteAnchor:
    """Anchor point for the order-n approximations.

    Among all x with H_{order+1}(x) = 0, selects the one with the greatest
    |H_order(x)| (ties broken toward the largest root; for Hermite zeros the
    winner is always the largest non-negative root, where H_order > 0).
    """
    if order < 0:
        raise DomainError(f"order must be >= 0, got {order}")
    zeros = hermite_nonneg_zeros(order + 1)
    best = None
    for z in zeros:
        logm, _ = hermite_eval(order, z)
        if best is None or logm > best[0] + 1e-12 or (
            abs(logm - best[0]) <= 1e-12 and z > best[1]
        ):
            best = (logm, z)
    logm, z = best
    h = math.exp(logm)
    return HermiteAnchor(order=order, x_star=float(z), h_n_sq=float(h * h))
