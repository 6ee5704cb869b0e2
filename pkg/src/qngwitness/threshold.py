"""Exact and approximate quantum non-Gaussianity threshold curves.

For criterion order n on a balanced (n+1)-channel detector, the threshold is
the maximum success probability R_n reachable by Gaussian light at fixed
error probability R_{n+1}.  The maximum is attained by a pure single-mode
squeezed coherent state with the displacement along the squeezing axis
(angle = 0); the solver therefore profiles over the squeezing parameter and,
for each squeezing, finds every displacement satisfying the error constraint.

Numerical structure worth knowing: R_{n+1}(displacement) is not monotone --
the optimal states suppress the (n+1)-photon component by interference, so
the constraint level is typically crossed near zeros of H_{n+1}.  The root
scan is seeded at those zeros and refined around near-tangent minima.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from ._util import PACKAGE_VERSION, atomic_write_text, config_hash, json_sanitize
from .errors import DomainError, SolverError, ThresholdRangeError
from .gaussian import (
    photodistribution_and_grads,
    photon_number_weights,
    required_truncation,
    vacuum_probability_and_grads,
)
from .detector import transfer_row
from .hermite import (
    HermiteAnchor,
    hermite_anchor,
    hermite_eval,
    hermite_nonneg_zeros,
    hermite_value,
)

__all__ = [
    "HermiteAnchor",
    "hermite_anchor",
    "hermite_eval",
    "CurvePoint",
    "ThresholdCurve",
    "FunctionalVerdict",
    "threshold_exact",
    "threshold_point",
    "threshold_param_approx",
    "threshold_closed_form",
    "functional_check",
    "default_grid",
    "default_curve",
    "dual_witness_parameter",
    "ASYMPTOTIC_SAFETY_FACTOR",
]

# queries below the sampled range use the closed-form asymptote scaled by
# this factor: a QNG claim there needs 5% clearance
ASYMPTOTIC_SAFETY_FACTOR = 1.05

# constraint targets below this use the cancellation-free photon-number
# route; above it the inclusion-exclusion route keeps >= 12 digits
_ROUTE_SWITCH = 1e-4

_SOLVER_CAP_K = 400
_V_CEILING_T = 1e-6  # sweep stays below min_variance = 1 - 1e-6
_V_FLOOR_MIN = 5e-4


def default_grid(n_points: int = 200, lo: float = 1e-16, hi: float = 1e-2) -> np.ndarray:
    """Default error-probability grid: 200 log-spaced points, 1e-16..1e-2."""
    return np.geomspace(lo, hi, n_points)


# --------------------------------------------------------------------------
# approximations


def threshold_param_approx(n: int, t: float) -> tuple[float, float]:
    """Parametric approximation of the boundary point at parameter t > 0.

    Returns (r_n, r_n1) at the anchor of order n; the small-t limit of this
    family reproduces `threshold_closed_form` exactly.
    """
    if n < 1:
        raise DomainError("order must be >= 1")
    if t <= 0.0:
        raise DomainError("parameter t must be > 0")
    a = hermite_anchor(n)
    h2 = a.h_n_sq
    x2 = a.x_star * a.x_star
    base = h2 / (4.0 * (n + 1.0)) ** n
    r_n = 0.5 * base * t**n * (2.0 + n * t)
    bracket = 12.0 * (1.0 + n) + (
        6.0 * (1.0 + n) * (2.0 + n) - x2 * (2.0 + 3.0 * n)
    ) * t
    r_n1 = bracket * base / 96.0 * t ** (n + 2)
    return r_n, r_n1


def threshold_closed_form(n: int, r_n1: float) -> float:
    """Small-error analytic approximation of the threshold success rate."""
    if n < 1:
        raise DomainError("order must be >= 1")
    if r_n1 < 0.0:
        raise DomainError("r_n1 must be >= 0")
    if r_n1 == 0.0:
        return 0.0
    a = hermite_anchor(n)
    log_rn = (
        2.0 * math.log(a.h_n_sq)
        + n * (math.log(r_n1) - math.log(2.0 * (n + 1.0) ** 3))
    ) / (n + 2.0)
    return math.exp(log_rn)


# --------------------------------------------------------------------------
# rate evaluation routes (angle = 0)


class _IERoute:
    """Inclusion-exclusion over attenuated vacuum probabilities."""

    def __init__(self, n: int, N: int):
        self.n, self.N = n, N
        self.taus = [k / N for k in range(N + 1)]
        self.cn = [(-1) ** k * math.comb(n, k) for k in range(n + 1)]
        self.cn1 = [(-1) ** k * math.comb(n + 1, k) for k in range(n + 2)]

    def rates(self, beta: float, v: float) -> tuple[float, float]:
        p0 = [vacuum_probability_and_grads(beta, v, tau)[0] for tau in self.taus]
        rn = math.fsum(c * p0[k] for k, c in enumerate(self.cn))
        rn1 = math.fsum(c * p0[k] for k, c in enumerate(self.cn1))
        return rn, rn1

    def rates_and_grads(self, beta: float, v: float):
        vals = [vacuum_probability_and_grads(beta, v, tau) for tau in self.taus]
        def comb3(coeffs):
            r = math.fsum(c * vals[k][0] for k, c in enumerate(coeffs))
            db = math.fsum(c * vals[k][1] for k, c in enumerate(coeffs))
            dv = math.fsum(c * vals[k][2] for k, c in enumerate(coeffs))
            return r, db, dv
        rn, rn_db, rn_dv = comb3(self.cn)
        rn1, rn1_db, rn1_dv = comb3(self.cn1)
        return rn, rn1, rn_db, rn_dv, rn1_db, rn1_dv


class _PDRoute:
    """Photon-distribution route: cancellation-free for tiny rates."""

    def __init__(self, n: int, N: int, target: float = 1e-16):
        self.n, self.N = n, N
        # truncation tail must stay far below the constraint level
        self.tail_tol = max(1e-40, target * 1e-14)

    def _k(self, beta: float, v: float) -> int:
        return required_truncation(
            max(beta, 1.0), v, tail_tol=self.tail_tol, cap=_SOLVER_CAP_K
        )

    def rates(self, beta: float, v: float) -> tuple[float, float]:
        k = self._k(beta, v)
        p = photon_number_weights(beta, v, k)
        rn = float(transfer_row(self.n, self.N, k) @ p)
        rn1 = float(transfer_row(self.n + 1, self.N, k) @ p)
        return rn, rn1

    def rates_and_grads(self, beta: float, v: float):
        k = self._k(beta, v)
        p, dpb, dpv = photodistribution_and_grads(beta, v, k)
        tn = transfer_row(self.n, self.N, k)
        tn1 = transfer_row(self.n + 1, self.N, k)
        return (
            float(tn @ p),
            float(tn1 @ p),
            float(tn @ dpb),
            float(tn @ dpv),
            float(tn1 @ dpb),
            float(tn1 @ dpv),
        )


def _route_for(n: int, N: int, target: float):
    return _PDRoute(n, N, target) if target < _ROUTE_SWITCH else _IERoute(n, N)


# --------------------------------------------------------------------------
# per-squeezing constraint solve


def _slice_roots(route, v, target, zeros_n1, *, tight: bool):
    """All displacements with R_{n+1}(beta, v) = target, dip-aware."""
    w = math.sqrt(v / (2.0 * (1.0 - v * v)))
    dips = [z / w for z in zeros_n1 if z > 0.0]
    f = lambda b: route.rates(b, v)[1] - target

    top = (dips[-1] if dips else 0.0) + 2.0 / w if dips else 2.0
    ftop = f(top)
    guard = 0
    while ftop < 0.0 and guard < 24:
        top *= 1.7
        ftop = f(top)
        guard += 1
    if ftop < 0.0:
        return []

    knots = [0.0]
    for i, d in enumerate(dips):
        if i > 0:
            knots.append(0.5 * (dips[i - 1] + dips[i]))
        knots.append(d)
    knots.append(top)
    fvals = [f(b) for b in knots]

    rtol = 8.9e-16 if tight else 1e-10
    roots = []
    for i in range(len(knots) - 1):
        if fvals[i] == 0.0:
            roots.append(knots[i])
        if fvals[i] * fvals[i + 1] < 0.0:
            roots.append(
                brentq(f, knots[i], knots[i + 1], xtol=1e-300, rtol=max(rtol, 8.9e-16),
                       maxiter=200)
            )
    # near-tangent dips: both shoulders above the level but the minimum may
    # still dip below between the scanned knots
    allk = [0.0] + dips + [top]
    for i in range(1, len(allk) - 1):
        a = 0.5 * (allk[i - 1] + allk[i])
        b = 0.5 * (allk[i] + allk[i + 1])
        fa, fb = f(a), f(b)
        fd = f(allk[i])
        if fd < 0.0 or fa < 0.0 or fb < 0.0:
            continue  # already handled by sign changes
        if fd > 0.6 * min(fa, fb):
            continue  # no pronounced depression
        opts = {"xatol": 1e-14} if tight else {"xatol": 1e-10, "maxiter": 30}
        res = minimize_scalar(f, bounds=(a, b), method="bounded", options=opts)
        if res.fun < 0.0:
            roots.append(brentq(f, a, res.x, xtol=1e-300, rtol=max(rtol, 8.9e-16)))
            roots.append(brentq(f, res.x, b, xtol=1e-300, rtol=max(rtol, 8.9e-16)))
    return sorted(set(roots))


def _slice_max(route, v, target, zeros_n1, *, tight: bool):
    """(r_n, beta) of the best constraint root at this squeezing, or None."""
    roots = _slice_roots(route, v, target, zeros_n1, tight=tight)
    best = None
    for b in roots:
        rn, _ = route.rates(b, v)
        if best is None or rn > best[0]:
            best = (rn, b)
    return best


# --------------------------------------------------------------------------
# single boundary point


@dataclass(frozen=True)
class CurvePoint:
    """One boundary sample with its extremal-state witness.

    `residual` is the normalized extremal-condition gap (|sin| of the angle
    between the two rate gradients) of the converged solve.  The tabulated
    (beta, v) witness is that solution rounded to double precision; near
    fold-type optima the condition itself varies by ~1e-7 across one float
    ulp of the parameters, so re-evaluating the residual at the rounded
    witness can exceed the solve residual.  The boundary value r_n is
    insensitive to this (second order in the gap).
    """

    order: int
    r_n1: float
    r_n: float
    beta: float
    v: float
    residual: float


def _extremal_residual(route, beta, v):
    """Signed extremal gap G and its normalized form.

    G is the cross product of the two rate gradients; the residual divides
    by the product of gradient norms, i.e. it is |sin| of the angle between
    them.  This normalization stays meaningful at fold-type optima where
    both displacement derivatives vanish together.
    """
    rn, rn1, rn_db, rn_dv, rn1_db, rn1_dv = route.rates_and_grads(beta, v)
    g = rn_db * rn1_dv - rn_dv * rn1_db
    norm = math.hypot(rn_db, rn_dv) * math.hypot(rn1_db, rn1_dv)
    return g, (abs(g) / norm if norm > 0.0 else 0.0)


def _branch_root(route, v, target, zeros_n1, beta_hint, side):
    """Constraint root on a fixed side of the suppression dip nearest
    beta_hint.  `side` is +1 (right of the dip bottom) or -1 (left); it is
    pinned once by the caller so that the solve can never wander onto the
    twin branch, which carries a different extremal-gap sign.
    """
    cell = _dip_cell(zeros_n1, v, beta_hint)
    f = lambda b: route.rates(b, v)[1] - target
    if cell is None:
        return None
    lo, hi, _ = cell
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-15})
    bm, fm = float(res.x), float(res.fun)
    if fm > 0.0:
        return None  # branch vanished: the level lies below the dip bottom
    if fm == 0.0:
        return bm
    if side >= 0:
        f_hi = f(hi)
        guard = 0
        while f_hi < 0.0 and guard < 40:
            hi *= 1.7
            f_hi = f(hi)
            guard += 1
        if f_hi < 0.0:
            return None
        return brentq(f, bm, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    if f(lo) <= 0.0:
        return None
    return brentq(f, lo, bm, xtol=1e-300, rtol=8.9e-16, maxiter=200)


def _solve_point(
    n: int,
    target: float,
    *,
    t_window: tuple[float, float] | None = None,
    coarse_points: int = 220,
    window_points: int = 30,
) -> CurvePoint:
    """Boundary point at fixed error probability `target` (N = n + 1)."""
    if target <= 0.0:
        raise DomainError("target error probability must be > 0")
    N = n + 1
    route = _route_for(n, N, target)
    zeros_n1 = hermite_nonneg_zeros(n + 1)
    v_floor = 1.0 / (n + 2.0)

    def sweep(lo_t, hi_t, npts):
        grid = np.geomspace(lo_t, hi_t, npts)
        best = (-math.inf, None, None)  # r_n, beta, t
        vals = np.full(npts, -math.inf)
        for i, t in enumerate(grid):
            sm = _slice_max(route, 1.0 - t, target, zeros_n1, tight=False)
            if sm is not None:
                vals[i] = sm[0]
                if sm[0] > best[0]:
                    best = (sm[0], sm[1], t)
        return grid, vals, best

    if t_window is not None:
        lo_t = max(t_window[0], _V_CEILING_T)
        hi_t = min(t_window[1], 1.0 - _V_FLOOR_MIN)
        grid, vals, best = sweep(lo_t, hi_t, window_points)
        edge = best[2] is None or best[2] <= grid[1] or best[2] >= grid[-2]
        if edge:
            t_window = None  # escalate to the full sweep
    if t_window is None:
        hi_t = 1.0 - v_floor
        while True:
            grid, vals, best = sweep(_V_CEILING_T, hi_t, coarse_points)
            if best[2] is None:
                raise SolverError(
                    f"no feasible Gaussian state found: order {n}, "
                    f"target r_{n + 1} = {target:.3e}"
                )
            # optimum pressed against the strong-squeezing edge: extend sweep
            if best[2] >= grid[-2] and (1.0 - hi_t) > _V_FLOOR_MIN * 1.6:
                hi_t = 1.0 - max((1.0 - hi_t) / 2.5, _V_FLOOR_MIN)
                continue
            break
    if best[2] is None:
        raise SolverError(
            f"no feasible Gaussian state: order {n}, target {target:.3e}"
        )

    i_best = int(np.argmax(vals))
    t_lo = grid[max(i_best - 1, 0)]
    t_hi = grid[min(i_best + 1, len(grid) - 1)]
    r_best, beta_best, t_best = best

    # certified re-solve at the coarse optimum (all branches, tight roots)
    sm = _slice_max(route, 1.0 - t_best, target, zeros_n1, tight=True)
    if sm is not None and sm[0] >= r_best:
        r_best, beta_best = sm

    candidates = [(r_best, beta_best, 1.0 - t_best)]

    # candidate 1: fold optimum -- the constraint level meets the bottom of a
    # suppression dip, where both displacement derivatives vanish together.
    fold = _fold_candidate(route, target, zeros_n1, grid, vals, i_best, beta_best)
    if fold is not None:
        candidates.append(fold[:3])
        t_c = 1.0 - fold[2]
    else:
        t_c = None

    # candidate 2: interior optimum -- extremal condition crosses zero along
    # a fixed branch (the bracket must stay inside the feasible range, which
    # ends at the fold)
    bot0 = _dip_bottom(route, 1.0 - t_best, zeros_n1, beta_best)
    side = 1 if bot0 is None else (1 if beta_best >= bot0[0] else -1)

    def gap_at(t, beta_hint):
        b = _branch_root(route, 1.0 - t, target, zeros_n1, beta_hint, side)
        if b is None:
            return None, None
        g, _ = _extremal_residual(route, b, 1.0 - t)
        return g, b

    interior_found = False
    g_lo, _ = gap_at(t_lo, beta_best)
    walk = 0
    while g_lo is not None and g_lo < 0.0 and walk < 6:
        # already past the stationary squeezing: walk the bracket down
        t_lo /= 1.5
        g_lo, _ = gap_at(t_lo, beta_best)
        walk += 1
    for margin in (1e-9, 1e-6, 1e-3):
        t_hi_eff = t_hi if t_c is None else min(t_hi, t_c * (1.0 - margin))
        if t_hi_eff <= t_lo:
            break
        g_hi, _ = gap_at(t_hi_eff, beta_best)
        if g_lo is None or g_hi is None or g_lo * g_hi >= 0.0:
            if t_c is None:
                break  # no fold to back away from: bracket is what it is
            continue
        carry = {"beta": beta_best}

        def g_of_logt(lt):
            g, b = gap_at(math.exp(lt), carry["beta"])
            if g is None:
                return math.copysign(1.0, g_lo)
            carry["beta"] = b
            return g

        try:
            lt = brentq(
                g_of_logt, math.log(t_lo), math.log(t_hi_eff), xtol=5e-16,
                rtol=8.9e-16, maxiter=200,
            )
        except ValueError:
            continue  # endpoint sign evaporated into noise; widen the margin
        t_int = math.exp(lt)
        b_int = _branch_root(route, 1.0 - t_int, target, zeros_n1,
                             carry["beta"], side)
        if b_int is not None:
            candidates.append(
                (route.rates(b_int, 1.0 - t_int)[0], b_int, 1.0 - t_int)
            )
            interior_found = True
        break

    if not interior_found:
        # no bracketed extremal root: refine the grid maximum directly
        hi_cap = t_hi if t_c is None else min(t_hi, t_c * (1.0 - 1e-12))
        if hi_cap > t_lo:
            def neg_rn(lt):
                sm2 = _slice_max(
                    route, 1.0 - math.exp(lt), target, zeros_n1, tight=False
                )
                return -sm2[0] if sm2 is not None else math.inf

            res = minimize_scalar(
                neg_rn, bounds=(math.log(t_lo), math.log(hi_cap)),
                method="bounded", options={"xatol": 2e-13},
            )
            t_g = math.exp(res.x)
            sm2 = _slice_max(route, 1.0 - t_g, target, zeros_n1, tight=True)
            if sm2 is not None:
                candidates.append((sm2[0], sm2[1], 1.0 - t_g))

    rn_fin, beta_fin, v_fin = max(candidates, key=lambda c: c[0])
    # guard against a better branch at the final squeezing
    sm = _slice_max(route, v_fin, target, zeros_n1, tight=True)
    if sm is not None and sm[0] > rn_fin * (1.0 + 1e-12):
        rn_fin, beta_fin = sm
    _, residual = _extremal_residual(route, beta_fin, v_fin)
    if residual > 3e-11 and isinstance(route, _PDRoute):
        # near the fold the extremal gap drowns in double-precision noise;
        # finish the solve in extended precision
        refined = _mp_refine_point(n, target, beta_fin, v_fin, rn_fin)
        if refined is not None:
            rn_fin, beta_fin, v_fin, residual = refined
    return CurvePoint(
        order=n,
        r_n1=float(target),
        r_n=float(rn_fin),
        beta=float(beta_fin),
        v=float(v_fin),
        residual=float(residual),
    )


def _mp_rates_and_grads(beta, v, n, N, kmax):
    """Rates and analytic gradients in mpmath arithmetic (angle = 0)."""
    import mpmath as mp

    one = mp.mpf(1)
    y = beta * mp.sqrt(v / (2 * (one - v * v)))
    w = y / beta if beta != 0 else mp.sqrt(v / (2 * (one - v * v)))
    q = (one - v) / (2 * (one + v))
    c = 2 * mp.sqrt(v) / (one + v)
    s = v / (2 * (one + v))
    dlog_c = one / (2 * v) - one / (one + v)
    dlog_q = -2 / (one - v * v)
    ds = one / (2 * (one + v) ** 2)
    dw = w / 2 * (one / v + 2 * v / (one - v * v))
    rows = [_mp_t_row(j, N, kmax) for j in (n, n + 1)]
    inv_fact = _mp_inverse_factorials(kmax)
    out = [[mp.mpf(0)] * 3 for _ in range(2)]
    h_prev, h_cur = mp.mpf(1), 2 * y
    eb = mp.e ** (-s * beta * beta)
    for m in range(kmax + 1):
        if m == 0:
            hm, hm1 = mp.mpf(1), mp.mpf(0)
        else:
            hm, hm1 = h_cur, h_prev
            h_prev, h_cur = h_cur, 2 * y * h_cur - 2 * m * h_prev
        e_m = c * inv_fact[m] * q**m * eb
        p = e_m * hm * hm
        cross = e_m * hm * hm1
        dp_db = 4 * m * w * cross - 2 * s * beta * p
        dp_dv = (dlog_c + m * dlog_q - beta * beta * ds) * p \
            + 4 * m * beta * dw * cross
        for j in range(2):
            t = rows[j][m]
            out[j][0] += t * p
            out[j][1] += t * dp_db
            out[j][2] += t * dp_dv
    return out  # [[rn, drn_db, drn_dv], [rn1, drn1_db, drn1_dv]]


@lru_cache(maxsize=64)
def _mp_t_row(j, N, kmax):
    import mpmath as mp

    row = []
    for m in range(kmax + 1):
        if j > m:
            row.append(mp.mpf(0))
        else:
            num = sum((-1) ** k * math.comb(j, k) * (N - k) ** m
                      for k in range(j + 1))
            row.append(mp.mpf(num) / mp.mpf(N) ** m)
    return tuple(row)


@lru_cache(maxsize=8)
def _mp_inverse_factorials(kmax):
    import mpmath as mp

    out = [mp.mpf(1)]
    for m in range(1, kmax + 1):
        out.append(out[-1] / m)
    return tuple(out)


def _mp_refine_point(n, target, beta0, v0, rn0):
    """Extended-precision Newton finish of [constraint, extremal gap] = 0.

    Returns (r_n, beta, v, residual) with the residual evaluated in mp
    arithmetic, or None if the refinement did not verifiably improve.
    """
    try:
        import mpmath as mp
    except ImportError:
        return None
    N = n + 1
    kmax = required_truncation(max(beta0, 1.0), v0, tail_tol=1e-30,
                               cap=_SOLVER_CAP_K)
    kmax = min(((kmax // 32) + 1) * 32, _SOLVER_CAP_K)  # bucket: cache reuse
    with mp.workdps(36):
        tgt = mp.mpf(target)

        def system(b, vv):
            (rn, db1, dv1), (rn1, db2, dv2) = _mp_rates_and_grads(
                b, vv, n, N, kmax
            )
            return (rn1 - tgt) / tgt, db1 * dv2 - dv1 * db2

        try:
            sol = mp.findroot(system, (mp.mpf(beta0), mp.mpf(v0)))
        except (ValueError, ZeroDivisionError, ArithmeticError):
            return None
        b_mp, v_mp = sol[0], sol[1]
        if not (0 < v_mp < 1) or b_mp < 0:
            return None
        # reject refinements that wandered away from the start
        if abs(b_mp - beta0) > 0.05 * (beta0 + 1e-6) or abs(v_mp - v0) > 0.01:
            return None
        (rn, db1, dv1), (rn1, db2, dv2) = _mp_rates_and_grads(b_mp, v_mp, n, N, kmax)
        if abs(rn1 - tgt) > 1e-12 * tgt:
            return None
        if float(rn) < rn0 * (1.0 - 1e-9):
            return None
        g = db1 * dv2 - dv1 * db2
        norm = mp.sqrt(db1**2 + dv1**2) * mp.sqrt(db2**2 + dv2**2)
        residual = float(abs(g) / norm) if norm > 0 else 0.0
        return float(rn), float(b_mp), float(v_mp), residual


def _dip_cell(zeros_n1, v, beta_ref):
    """(lo, hi, center) of the suppression-dip cell nearest beta_ref."""
    w = math.sqrt(v / (2.0 * (1.0 - v * v)))
    dips = [z / w for z in zeros_n1 if z > 0.0]
    if not dips:
        return None
    j = int(np.argmin([abs(d - beta_ref) for d in dips]))
    lo = 0.0 if j == 0 else 0.5 * (dips[j - 1] + dips[j])
    hi = (dips[j] + 2.0 / w) if j == len(dips) - 1 else 0.5 * (dips[j] + dips[j + 1])
    return lo, hi, dips[j]


def _dip_bottom(route, v, zeros_n1, beta_ref):
    """(beta_min, r_n1_min) of the dip nearest beta_ref at this squeezing."""
    cell = _dip_cell(zeros_n1, v, beta_ref)
    if cell is None:
        return None
    lo, hi, _ = cell
    res = minimize_scalar(
        lambda b: route.rates(b, v)[1],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-15},
    )
    return float(res.x), float(res.fun)


def _fold_candidate(route, target, zeros_n1, grid, vals, i_best, beta_best):
    """Fold point: largest squeezing at which the dip still reaches target."""
    t_best = grid[i_best]
    bot = _dip_bottom(route, 1.0 - t_best, zeros_n1, beta_best)
    if bot is None or bot[1] > target:
        return None  # best root is not inside a dip cell that reaches target
    # find an infeasible t (dip bottom above target) to bracket the fold
    t_hi = None
    for j in range(i_best + 1, len(grid)):
        b = _dip_bottom(route, 1.0 - grid[j], zeros_n1, beta_best)
        if b is None or b[1] > target:
            t_hi = grid[j]
            break
        beta_best = b[0]
    if t_hi is None:
        t = t_best
        guard = 0
        while guard < 60:
            t = min(t * 1.12, 0.5 * (t + 1.0))
            if t >= 1.0 - _V_FLOOR_MIN:
                return None
            b = _dip_bottom(route, 1.0 - t, zeros_n1, beta_best)
            if b is None or b[1] > target:
                t_hi = t
                break
            beta_best = b[0]
            guard += 1
        if t_hi is None:
            return None

    carry = {"beta": beta_best}

    def depth(lt):
        t = math.exp(lt)
        b = _dip_bottom(route, 1.0 - t, zeros_n1, carry["beta"])
        if b is None:
            return 1.0
        carry["beta"] = b[0]
        return b[1] - target

    lt_c = brentq(
        depth, math.log(t_best), math.log(t_hi), xtol=5e-16, rtol=8.9e-16,
        maxiter=200,
    )
    t_c = math.exp(lt_c)
    bot = _dip_bottom(route, 1.0 - t_c, zeros_n1, carry["beta"])
    if bot is None:
        return None
    beta_c = bot[0]
    return route.rates(beta_c, 1.0 - t_c)[0], beta_c, 1.0 - t_c


def threshold_point(n: int, r_n1: float) -> CurvePoint:
    """Solve one boundary point from scratch (no curve context)."""
    if n < 1:
        raise DomainError("order must be >= 1")
    return _solve_point(n, r_n1)


# --------------------------------------------------------------------------
# curve


@dataclass
class ThresholdCurve:
    """Monotone sampled QNG boundary for one criterion order.

    Samples are (r_n1, r_n_max) pairs with the extremal pure-state witness
    (beta, v) and the normalized extremal-condition residual per point.
    Interpolation is monotone cubic (PCHIP) in log-log coordinates inside the
    sampled range; queries below it fall back to the closed-form asymptote
    inflated by ASYMPTOTIC_SAFETY_FACTOR; queries above raise.
    """

    order: int
    r_n1: np.ndarray
    r_n_max: np.ndarray
    beta: np.ndarray
    v: np.ndarray
    residual: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r_n1 = np.asarray(self.r_n1, dtype=float)
        self.r_n_max = np.asarray(self.r_n_max, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.residual = np.asarray(self.residual, dtype=float)
        if self.r_n1.size < 2:
            raise DomainError("a curve needs at least two samples")
        if np.any(np.diff(self.r_n1) <= 0.0):
            raise SolverError("curve grid must be strictly increasing")
        if np.any(np.diff(self.r_n_max) <= 0.0):
            raise SolverError(
                f"non-monotone threshold curve for order {self.order}: "
                "internal consistency failure"
            )
        self._interp = PchipInterpolator(np.log(self.r_n1), np.log(self.r_n_max))
        self._inv = PchipInterpolator(np.log(self.r_n_max), np.log(self.r_n1))
        self._dinterp = self._interp.derivative()

    # -- queries ---------------------------------------------------------

    @property
    def validity(self) -> tuple[float, float]:
        return float(self.r_n1[0]), float(self.r_n1[-1])

    def threshold_at(self, r_n1, *, extended: bool = True):
        """Threshold success probability at the given error probability.

        Vectorized; raises ThresholdRangeError above the sampled range.
        With extended=True (default), values below the range use the
        closed-form asymptote with the 5% safety margin.
        """
        r = np.asarray(r_n1, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r > self.r_n1[-1] * (1.0 + 1e-12)):
            raise ThresholdRangeError(
                f"r_n1 above curve validity range (max {self.r_n1[-1]:.3e})"
            )
        if np.any(r < 0.0):
            raise DomainError("r_n1 must be >= 0")
        out = np.empty_like(r)
        below = r < self.r_n1[0]
        if np.any(below):
            if not extended:
                raise ThresholdRangeError(
                    f"r_n1 below curve validity range (min {self.r_n1[0]:.3e})"
                )
            a = hermite_anchor(self.order)
            nn = float(self.order)
            with np.errstate(divide="ignore"):
                log_rn = (
                    2.0 * math.log(a.h_n_sq)
                    + nn * (np.log(r[below]) - math.log(2.0 * (nn + 1.0) ** 3))
                ) / (nn + 2.0)
            out[below] = ASYMPTOTIC_SAFETY_FACTOR * np.exp(log_rn)
        inside = ~below
        if np.any(inside):
            rr = np.clip(r[inside], self.r_n1[0], self.r_n1[-1])
            out[inside] = np.exp(self._interp(np.log(rr)))
        return float(out[0]) if scalar else out

    def threshold_at_extended(self, r_n1: float) -> tuple[float, str]:
        """(threshold, regime) where regime is 'interpolated' or 'asymptotic'."""
        val = self.threshold_at(r_n1)
        regime = "asymptotic" if r_n1 < self.r_n1[0] else "interpolated"
        return val, regime

    def preimage_at(self, r_n: float) -> float:
        """Error probability at which the curve reaches the given r_n."""
        if r_n <= 0.0:
            return 0.0
        if r_n < self.r_n_max[0]:
            # inverted closed-form asymptote (no safety factor: diagnostic)
            a = hermite_anchor(self.order)
            nn = float(self.order)
            log_r = (
                (nn + 2.0) * math.log(r_n) - 2.0 * math.log(a.h_n_sq)
            ) / nn + math.log(2.0 * (nn + 1.0) ** 3)
            return math.exp(log_r)
        if r_n > self.r_n_max[-1] * (1.0 + 1e-12):
            raise ThresholdRangeError(
                f"r_n above curve range (max {self.r_n_max[-1]:.3e})"
            )
        r_n = min(r_n, float(self.r_n_max[-1]))
        return float(math.exp(self._inv(math.log(r_n))))

    def log_slope(self, r_n1: float) -> float:
        """d(log r_n1) / d(log r_n_max) of the curve at r_n1.

        This is the slope orientation in which the boundary approaches
        (n+2)/n for small error probability.
        """
        lo, hi = self.validity
        if not (lo <= r_n1 <= hi):
            raise ThresholdRangeError("slope query outside sampled range")
        d = float(self._dinterp(math.log(r_n1)))
        if d == 0.0:
            raise SolverError("degenerate curve slope")
        return 1.0 / d

    def point(self, i: int) -> CurvePoint:
        return CurvePoint(
            order=self.order,
            r_n1=float(self.r_n1[i]),
            r_n=float(self.r_n_max[i]),
            beta=float(self.beta[i]),
            v=float(self.v[i]),
            residual=float(self.residual[i]),
        )

    def __len__(self) -> int:
        return int(self.r_n1.size)

    # -- serialization -----------------------------------------------------

    _CSV_FIELDS = ("n", "r_n1", "r_n_max", "beta", "V", "residual")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        for k, v in self._meta_with_defaults().items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf)
        w.writerow(self._CSV_FIELDS)
        for i in range(len(self)):
            w.writerow(
                [
                    self.order,
                    f"{self.r_n1[i]:.17e}",
                    f"{self.r_n_max[i]:.17e}",
                    f"{self.beta[i]:.17e}",
                    f"{self.v[i]:.17e}",
                    f"{self.residual[i]:.3e}",
                ]
            )
        return buf.getvalue()

    def to_csv(self, path: str) -> None:
        atomic_write_text(path, self.to_csv_text())

    def _meta_with_defaults(self) -> dict:
        meta = dict(self.meta)
        meta.setdefault("version", PACKAGE_VERSION)
        meta.setdefault(
            "config_hash",
            config_hash(
                {
                    "order": self.order,
                    "grid_lo": float(self.r_n1[0]),
                    "grid_hi": float(self.r_n1[-1]),
                    "points": len(self),
                }
            ),
        )
        return meta

    def to_json_obj(self) -> dict:
        return {
            "format": "qng-threshold-curve",
            "order": self.order,
            "metadata": json_sanitize(self._meta_with_defaults()),
            "samples": [
                {
                    "r_n1": float(self.r_n1[i]),
                    "r_n_max": float(self.r_n_max[i]),
                    "beta": float(self.beta[i]),
                    "V": float(self.v[i]),
                    "residual": float(self.residual[i]),
                }
                for i in range(len(self))
            ],
        }

    def to_json(self, path: str) -> None:
        atomic_write_text(path, json.dumps(self.to_json_obj(), indent=1) + "\n")

    @staticmethod
    def from_csv_text(text: str) -> "ThresholdCurve":
        rows = []
        meta = {}
        header = None
        for raw in text.splitlines():
            if raw.startswith("#"):
                if ":" in raw:
                    k, _, v = raw[1:].partition(":")
                    meta[k.strip()] = v.strip()
                continue
            if not raw.strip():
                continue
            cells = next(csv.reader([raw]))
            if header is None:
                header = [c.strip() for c in cells]
                if tuple(header) != ThresholdCurve._CSV_FIELDS:
                    raise DomainError(f"unexpected curve CSV header: {header}")
                continue
            rows.append(cells)
        if not rows:
            raise DomainError("curve CSV has no samples")
        order = int(rows[0][0])
        arr = np.array([[float(c) for c in r[1:]] for r in rows])
        return ThresholdCurve(
            order=order,
            r_n1=arr[:, 0],
            r_n_max=arr[:, 1],
            beta=arr[:, 2],
            v=arr[:, 3],
            residual=arr[:, 4],
            meta=meta,
        )

    @staticmethod
    def from_csv(path: str) -> "ThresholdCurve":
        with open(path, encoding="utf-8") as fh:
            return ThresholdCurve.from_csv_text(fh.read())

    @staticmethod
    def from_json_obj(obj: dict) -> "ThresholdCurve":
        if obj.get("format") != "qng-threshold-curve":
            raise DomainError("not a threshold-curve JSON document")
        s = obj["samples"]
        return ThresholdCurve(
            order=int(obj["order"]),
            r_n1=np.array([x["r_n1"] for x in s]),
            r_n_max=np.array([x["r_n_max"] for x in s]),
            beta=np.array([x["beta"] for x in s]),
            v=np.array([x["V"] for x in s]),
            residual=np.array([x["residual"] for x in s]),
            meta=dict(obj.get("metadata", {})),
        )

    @staticmethod
    def from_json(path: str) -> "ThresholdCurve":
        with open(path, encoding="utf-8") as fh:
            return ThresholdCurve.from_json_obj(json.load(fh))


def threshold_exact(
    n: int,
    r_n1_grid=None,
    *,
    allow_extended_range: bool = False,
) -> ThresholdCurve:
    """Exact threshold curve for order n on an (n+1)-channel detector.

    The grid must be strictly increasing inside (0, 0.5); ranges up to just
    below 1 are allowed with allow_extended_range=True (used internally for
    bright-state comparisons).  Points are solved in ascending order with
    windowed warm starts; every returned point carries the normalized
    extremal-condition residual of its witness state.
    """
    if n < 1:
        raise DomainError("order must be >= 1")
    grid = default_grid() if r_n1_grid is None else np.asarray(r_n1_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError("grid must be a 1-D array with >= 2 points")
    if np.any(np.diff(grid) <= 0.0):
        raise DomainError("grid must be strictly increasing")
    hi_cap = 1.0 - 1e-6 if allow_extended_range else 0.5
    if grid[0] <= 0.0 or grid[-1] >= hi_cap:
        raise DomainError(f"grid values must lie in (0, {hi_cap})")

    points: list[CurvePoint] = []
    window = None
    for target in grid:
        pt = _solve_point(n, float(target), t_window=window)
        points.append(pt)
        t_opt = 1.0 - pt.v
        window = (t_opt / 2.2, min(t_opt * 2.2, 1.0 - _V_FLOOR_MIN))
    curve = ThresholdCurve(
        order=n,
        r_n1=np.array([p.r_n1 for p in points]),
        r_n_max=np.array([p.r_n for p in points]),
        beta=np.array([p.beta for p in points]),
        v=np.array([p.v for p in points]),
        residual=np.array([p.residual for p in points]),
        meta={
            "order": n,
            "grid_lo": float(grid[0]),
            "grid_hi": float(grid[-1]),
            "points": int(grid.size),
            "route_switch": _ROUTE_SWITCH,
            "asymptotic_safety_factor": ASYMPTOTIC_SAFETY_FACTOR,
            "version": PACKAGE_VERSION,
        },
    )
    return curve


@lru_cache(maxsize=32)
def default_curve(n: int) -> ThresholdCurve:
    """Cached curve on the default grid for order n."""
    return threshold_exact(n)


# --------------------------------------------------------------------------
# functional check


@dataclass(frozen=True)
class FunctionalVerdict:
    """Outcome of the linear-witness test at one measured point."""

    is_qng: bool
    regime: str  # 'interpolated' or 'asymptotic'


def functional_check(r_n: float, r_n1: float, curve: ThresholdCurve) -> FunctionalVerdict:
    """QNG iff the point lies strictly above the Gaussian threshold curve.

    Below the sampled range the comparison uses the closed-form asymptote
    with the 5% safety margin (flagged 'asymptotic'); above the sampled
    range a ThresholdRangeError propagates.
    """
    if not (0.0 <= r_n <= 1.0 and 0.0 <= r_n1 <= 1.0):
        raise DomainError("click probabilities must lie in [0, 1]")
    thr, regime = curve.threshold_at_extended(r_n1)
    return FunctionalVerdict(is_qng=bool(r_n > thr), regime=regime)


def dual_witness_parameter(curve: ThresholdCurve, r_n1: float) -> float:
    """Coefficient a0 of the supporting linear witness at a boundary point.

    The witness F = R_n + a0 R_{n+1} is maximized over Gaussian states
    exactly on the tangent of the threshold curve; a0 is the negated slope
    dR_n/dR_{n+1} there.  Diagnostic only.
    """
    lo, hi = curve.validity
    if not (lo <= r_n1 <= hi):
        raise ThresholdRangeError("dual witness query outside sampled range")
    r_n = curve.threshold_at(r_n1)
    slope_log = 1.0 / curve.log_slope(r_n1)  # d log r_n / d log r_n1
    return -slope_log * r_n / r_n1
