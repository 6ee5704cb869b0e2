"""From measured counts to QNG verdicts: Bayesian intervals, classification
against a threshold curve, attenuation paths and the loss robustness (depth).

Count statistics follow the paper's convention: a trial is one heralded
detection unit; count_n is the number of trials where the n designated
channels all clicked, count_n1 where all n+1 clicked.  Interval estimates
are minimum-width 68% credible intervals of a Beta posterior with a uniform
prior, which stays meaningful down to zero counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import beta as beta_dist

from ._util import PACKAGE_VERSION, atomic_write_text, json_sanitize
from .detector import ClickPair, attenuate, click_probabilities, transfer_matrix_element
from .errors import DomainError, ThresholdRangeError
from .gaussian import PhotonDistribution
from .threshold import ThresholdCurve, threshold_point

__all__ = [
    "CountRecord",
    "IntervalEstimate",
    "VerdictState",
    "Verdict",
    "RateEstimates",
    "bayes_interval",
    "estimate_rates",
    "classify",
    "attenuation_path",
    "qng_depth",
    "qng_depth_from_point",
    "fock_single_criterion_transmittance",
    "CREDIBLE_MASS",
]

CREDIBLE_MASS = 0.68
DEPTH_RESOLUTION_DB = 0.01
_DEPTH_CAP_DB = 400.0


@dataclass(frozen=True)
class CountRecord:
    """Raw coincidence counts for one measurement at criterion order n."""

    order: int
    trials: int
    count_n: int
    count_n1: int
    subsets: tuple | None = None  # optional per-subset n-fold counts

    def __post_init__(self):
        if self.order < 1:
            raise DomainError("order must be >= 1")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if not (0 <= self.count_n1 <= self.count_n <= self.trials):
            raise DomainError(
                "counts must satisfy 0 <= count_n1 <= count_n <= trials"
            )
        if self.subsets is not None:
            subs = tuple(int(c) for c in self.subsets)
            if len(subs) != self.order + 1:
                raise DomainError(
                    f"expected {self.order + 1} subset counts, got {len(subs)}"
                )
            if any(c < self.count_n1 or c > self.trials for c in subs):
                raise DomainError("inconsistent per-subset totals")
            object.__setattr__(self, "subsets", subs)

    @staticmethod
    def from_json_obj(obj: dict) -> "CountRecord":
        return CountRecord(
            order=int(obj["order"]),
            trials=int(obj["trials"]),
            count_n=int(obj["count_n"]),
            count_n1=int(obj["count_n1"]),
            subsets=tuple(obj["subsets"]) if obj.get("subsets") else None,
        )

    @staticmethod
    def from_json(path: str) -> "CountRecord":
        with open(path, encoding="utf-8") as fh:
            return CountRecord.from_json_obj(json.load(fh))

    def to_json_obj(self) -> dict:
        obj = {
            "order": self.order,
            "trials": self.trials,
            "count_n": self.count_n,
            "count_n1": self.count_n1,
        }
        if self.subsets is not None:
            obj["subsets"] = list(self.subsets)
        return obj

    def to_json(self, path: str) -> None:
        atomic_write_text(path, json.dumps(self.to_json_obj(), indent=1) + "\n")

    @staticmethod
    def batch_from_csv(path: str) -> list["CountRecord"]:
        """CSV batch form: header 'order,trials,count_n,count_n1' required."""
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)
                    if r and not r[0].lstrip().startswith("#")]
        if not rows or [c.strip() for c in rows[0][:4]] != [
            "order", "trials", "count_n", "count_n1",
        ]:
            raise DomainError("count CSV must start with the standard header")
        return [
            CountRecord(int(r[0]), int(r[1]), int(r[2]), int(r[3]))
            for r in rows[1:]
        ]


@dataclass(frozen=True)
class IntervalEstimate:
    """Point estimate with a minimum-width 68% credible interval."""

    point: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise DomainError("interval bounds must satisfy 0 <= lo <= hi <= 1")


def bayes_interval(k: int, trials: int, mass: float = CREDIBLE_MASS) -> IntervalEstimate:
    """Minimum-width credible interval of the Beta(k+1, trials-k+1) posterior.

    The point estimate is the posterior mode k/trials.  For k = 0 the
    posterior is decreasing, so the interval pins to the left edge; k = trials
    mirrors it.
    """
    if trials < 1 or not (0 <= k <= trials):
        raise DomainError("need 0 <= k <= trials, trials >= 1")
    a, b = k + 1.0, trials - k + 1.0
    dist = beta_dist(a, b)
    if k == 0:
        return IntervalEstimate(0.0, 0.0, float(dist.ppf(mass)))
    if k == trials:
        return IntervalEstimate(1.0, float(dist.isf(mass)), 1.0)

    def width(u):
        return dist.ppf(u + mass) - dist.ppf(u)

    res = minimize_scalar(
        width, bounds=(0.0, 1.0 - mass), method="bounded",
        options={"xatol": 1e-12},
    )
    u = float(res.x)
    lo, hi = float(dist.ppf(u)), float(dist.ppf(u + mass))
    point = k / trials
    # numerical safety: the mode must lie inside a minimum-width interval
    lo = min(lo, point)
    hi = max(hi, point)
    return IntervalEstimate(point, lo, hi)


@dataclass(frozen=True)
class RateEstimates:
    """Click-pair estimate with per-component credible intervals."""

    order: int
    r_n: IntervalEstimate
    r_n1: IntervalEstimate
    meta: dict = field(default_factory=dict)

    def point_pair(self) -> ClickPair:
        return ClickPair(self.order, self.r_n.point, min(self.r_n1.point, self.r_n.point))


def estimate_rates(rec: CountRecord) -> RateEstimates:
    """Rates and intervals from a count record.

    With per-subset counts present, the success estimate is the mean over
    the n+1 designated subsets and its interval is computed from the pooled
    count at effective trials = trials * (n+1); the subsets share the same
    trials, so this pooling ignores their correlation (documented in meta).
    """
    meta = {"estimator": "designated-subset"}
    if rec.subsets is not None:
        pooled = int(sum(rec.subsets))
        eff_trials = rec.trials * len(rec.subsets)
        iv = bayes_interval(pooled, eff_trials)
        r_n = IntervalEstimate(pooled / eff_trials, iv.lo, iv.hi)
        meta = {
            "estimator": "subset-mean",
            "effective_trials": eff_trials,
            "note": "pooled interval ignores inter-subset correlation",
        }
    else:
        r_n = bayes_interval(rec.count_n, rec.trials)
    r_n1 = bayes_interval(rec.count_n1, rec.trials)
    return RateEstimates(order=rec.order, r_n=r_n, r_n1=r_n1, meta=meta)


class VerdictState(str, Enum):
    POSITIVE = "positive"
    INCONCLUSIVE = "inconclusive"
    NEGATIVE = "negative"
    NO_DATA = "no-data"


@dataclass(frozen=True)
class Verdict:
    """Classification of a measurement against a threshold curve.

    d_n / d_n1 are the horizontal and vertical signed log10 distances of the
    point estimate from the curve (positive above the boundary); depth_db is
    the estimated loss robustness in dB (math.inf for unbounded), None when
    not applicable, with a [lo, hi] bracket from the credible rectangle.
    """

    state: VerdictState
    d_n: float | None
    d_n1: float | None
    depth_db: float | None
    depth_bracket_db: tuple | None = None
    regime: str = "interpolated"

    def to_json_obj(self) -> dict:
        obj = {
            "state": self.state.value,
            "d_n": self.d_n,
            "d_n1": self.d_n1,
            "regime": self.regime,
        }
        if self.depth_db is None:
            obj["depth_db"] = None
        elif math.isinf(self.depth_db):
            obj["depth_db"] = "unbounded" if self.depth_db > 0 else "not-qng-at-source"
        else:
            obj["depth_db"] = self.depth_db
        if self.depth_bracket_db is not None:
            obj["depth_bracket_db"] = [
                "unbounded" if (b is not None and math.isinf(b) and b > 0) else b
                for b in self.depth_bracket_db
            ]
        return json_sanitize(obj)


def _compare(r_n: float, r_n1: float, curve: ThresholdCurve):
    """(side, regime): side > 0 above the boundary, < 0 below."""
    thr, regime = curve.threshold_at_extended(r_n1)
    return (r_n - thr), regime


def _log_distances(r_n: float, r_n1: float, curve: ThresholdCurve):
    """(d_n, d_n1): horizontal and vertical signed log10 distances.

    Positive on the QNG side for both, zero exactly on the curve.  d_n
    compares the curve preimage of the measured success rate with the
    measured error rate; undefined quantities come back as None.
    """
    d_n = d_n1 = None
    if r_n > 0.0:
        try:
            thr = curve.threshold_at(r_n1)
            d_n1 = math.log10(r_n) - math.log10(thr)
        except (ThresholdRangeError, ValueError):
            d_n1 = None
        try:
            pre = curve.preimage_at(r_n)
            if r_n1 > 0.0 and pre > 0.0:
                d_n = math.log10(pre) - math.log10(r_n1)
            elif r_n1 == 0.0:
                d_n = math.inf if pre > 0.0 else None
        except (ThresholdRangeError, ValueError):
            d_n = None
    return d_n, d_n1


def classify(rec: CountRecord, curve: ThresholdCurve) -> Verdict:
    """Verdict from a count record.

    Positive requires the whole credible rectangle above the curve; negative
    requires it entirely below; anything straddling is inconclusive.  A
    record with no coincidences at all is no-data.  Above the curve's
    sampled range no positive verdict is ever issued (the closed-form
    asymptote is not an upper bound there): such points come back negative
    when even their best corner stays below the asymptote, else inconclusive.
    """
    if rec.order != curve.order:
        raise DomainError(
            f"record order {rec.order} does not match curve order {curve.order}"
        )
    if rec.count_n == 0 and rec.count_n1 == 0:
        return Verdict(VerdictState.NO_DATA, None, None, None)
    est = estimate_rates(rec)
    r_n, r_n1 = est.r_n.point, est.r_n1.point

    hi_limit = curve.validity[1]
    if est.r_n1.hi > hi_limit:
        # beyond the exact curve: only a safe negative is decidable
        from .threshold import threshold_closed_form

        best_corner = est.r_n.hi - threshold_closed_form(rec.order, est.r_n1.lo)
        state = (
            VerdictState.NEGATIVE if best_corner < 0.0 else VerdictState.INCONCLUSIVE
        )
        return Verdict(state, None, None, None, regime="out-of-range")

    worst, regime_w = _compare(est.r_n.lo, est.r_n1.hi, curve)
    best, _ = _compare(est.r_n.hi, est.r_n1.lo, curve)
    d_n, d_n1 = _log_distances(r_n, r_n1, curve)
    point_side, regime = _compare(r_n, r_n1, curve)

    if worst > 0.0:
        state = VerdictState.POSITIVE
    elif best < 0.0:
        state = VerdictState.NEGATIVE
    else:
        state = VerdictState.INCONCLUSIVE

    depth = bracket = None
    if state in (VerdictState.POSITIVE, VerdictState.INCONCLUSIVE):
        if point_side > 0.0:
            depth = qng_depth_from_point(
                r_n, r_n1, rec.order, rec.order + 1, curve
            )
        lo_d = qng_depth_from_point(
            est.r_n.lo, est.r_n1.hi, rec.order, rec.order + 1, curve
        )
        hi_d = qng_depth_from_point(
            est.r_n.hi, est.r_n1.lo, rec.order, rec.order + 1, curve
        )
        bracket = (None if lo_d == -math.inf else lo_d,
                   None if hi_d == -math.inf else hi_d)
    return Verdict(state, d_n, d_n1, depth, bracket, regime)


def attenuation_path(
    dist: PhotonDistribution,
    n: int,
    N: int,
    step_db: float = 0.5,
    max_db: float = 30.0,
) -> list[ClickPair]:
    """Click pairs of the state attenuated in steps of step_db (k = 0, 1, ...).

    Transmittance at step k is 10**(-k*step_db/10); both coordinates of the
    path decrease monotonically.
    """
    if step_db <= 0.0:
        raise DomainError("step_db must be > 0")
    out = []
    k = 0
    while k * step_db <= max_db + 1e-12:
        eta = 10.0 ** (-(k * step_db) / 10.0)
        out.append(click_probabilities(attenuate(dist, eta), n, N))
        k += 1
    return out


def _is_qng_dist(dist: PhotonDistribution, n: int, N: int, curve: ThresholdCurve) -> bool:
    cp = click_probabilities(dist, n, N)
    if cp.r_n1 > curve.validity[1]:
        raise ThresholdRangeError(
            f"error rate {cp.r_n1:.3e} above curve range {curve.validity[1]:.3e}"
        )
    thr, _ = curve.threshold_at_extended(cp.r_n1)
    return cp.r_n > thr


def qng_depth(
    dist: PhotonDistribution, n: int, N: int, curve: ThresholdCurve
) -> float:
    """Maximum attenuation (dB) for which the state still witnesses QNG.

    Returns math.inf when the error rate vanishes identically (the witness
    then survives any loss) and -math.inf when the state is not QNG even
    unattenuated.  Resolution 0.01 dB.
    """
    cp = click_probabilities(dist, n, N)
    if not _is_qng_dist(dist, n, N, curve):
        return -math.inf
    if cp.r_n1 == 0.0:
        return math.inf
    lo = 0.0
    hi = 10.0
    while hi <= _DEPTH_CAP_DB:
        if not _is_qng_dist(attenuate(dist, 10.0 ** (-hi / 10.0)), n, N, curve):
            break
        lo = hi
        hi *= 2.0
    else:
        return math.inf  # beyond any physically meaningful attenuation
    while hi - lo > DEPTH_RESOLUTION_DB:
        mid = 0.5 * (lo + hi)
        if _is_qng_dist(attenuate(dist, 10.0 ** (-mid / 10.0)), n, N, curve):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _minimal_point_distribution(r_n: float, r_n1: float, n: int, N: int) -> PhotonDistribution | None:
    """Smallest-support distribution reproducing a measured click pair.

    Places weight on the n- and (n+1)-photon components only (plus vacuum),
    which matches the fast-decaying-tail regime that also underlies the
    attenuation-path slope; used to extrapolate depth from a single point.
    """
    t_nn = transfer_matrix_element(n, n, N)
    t_nn1 = transfer_matrix_element(n, n + 1, N)
    t_n1n1 = transfer_matrix_element(n + 1, n + 1, N)
    p_n1 = r_n1 / t_n1n1
    p_n = (r_n - t_nn1 * p_n1) / t_nn
    if p_n < 0.0 or p_n + p_n1 > 1.0:
        return None
    probs = np.zeros(n + 2)
    probs[0] = 1.0 - p_n - p_n1
    probs[n] = p_n
    probs[n + 1] = p_n1
    return PhotonDistribution(probs)


def qng_depth_from_point(
    r_n: float, r_n1: float, n: int, N: int, curve: ThresholdCurve
) -> float:
    """Depth extrapolated from a measured point via the two-component model."""
    dist = _minimal_point_distribution(r_n, r_n1, n, N)
    if dist is None:
        return -math.inf
    return qng_depth(dist, n, N, curve)


def fock_single_criterion_transmittance(m: int, *, resolution: float = 1e-3) -> float:
    """Critical transmittance below which an attenuated m-photon Fock state
    stops being recognized by the order-1 criterion on a 2-channel detector.

    The boundary comparison solves the exact threshold at each probed error
    rate rather than interpolating, because the relevant rates are far
    outside the default curve range for m >= 4.
    """
    if m < 2:
        raise DomainError("the comparison needs m >= 2")
    fock = PhotonDistribution.fock(m)

    def is_qng(eta: float) -> bool:
        cp = click_probabilities(attenuate(fock, eta), 1, 2)
        pt = threshold_point(1, cp.r_n1)
        return cp.r_n > pt.r_n

    lo, hi = 0.02, 0.98
    if is_qng(lo):
        return lo
    if not is_qng(hi):
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if is_qng(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)