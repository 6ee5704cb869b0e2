"""Closed-form physics of pure Gaussian modes.

A mode is parametrized by the displacement magnitude (in the frame aligned
with the squeezing axes), the minimal quadrature variance (vacuum = 1) and
the angle between the squeezing axis and the displacement.  Everything here
is phase-insensitive downstream: the two observables of interest are the
vacuum probability of the attenuated mode and the photon-number distribution.

Convention note: with the formulas used here, the coherent-state limit
(min_variance -> 1) has mean photon number displacement**2 / 4.  This is the
unique choice consistent between the attenuated vacuum probability and the
photon-number statistics; see `coherent_mean_photons`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, PrecisionError, UnsupportedParameterError
from .hermite import log_hermite_recurrence, log_hermite_scalar, refine_log_hermite

__all__ = [
    "GaussianModeParams",
    "MultimodeGaussianState",
    "PhotonDistribution",
    "vacuum_probability",
    "vacuum_probability_multimode",
    "gaussian_photodistribution",
    "coherent_limit_photodistribution",
    "coherent_mean_photons",
    "DEFAULT_TRUNCATION_CAP",
]

DEFAULT_TRUNCATION_CAP = 256
_COHERENT_VARIANCE_CUTOFF = 1.0 - 1e-6
# Cramer bound |H_m(y)| <= k * sqrt(2^m m!) * exp(y^2/2), k ~ 1.0865
_CRAMER_LOG_K2 = 2.0 * math.log(1.086435)


@dataclass(frozen=True)
class GaussianModeParams:
    """Pure single-mode Gaussian state: squeezed coherent light.

    displacement: non-negative amplitude in quadrature units (vacuum scale);
    min_variance: minimal quadrature variance in (0, 1], vacuum = 1;
    angle: angle between the squeezing axis and the displacement, wrapped
    into [0, 2*pi).
    """

    displacement: float
    min_variance: float
    angle: float = 0.0

    def __post_init__(self):
        if not (self.displacement >= 0.0):
            raise DomainError(f"displacement must be >= 0, got {self.displacement}")
        if not (0.0 < self.min_variance <= 1.0):
            raise DomainError(
                f"min_variance must be in (0, 1], got {self.min_variance}"
            )
        object.__setattr__(self, "angle", float(self.angle) % (2.0 * math.pi))

    @staticmethod
    def vacuum() -> "GaussianModeParams":
        return GaussianModeParams(0.0, 1.0, 0.0)

    @property
    def is_vacuum(self) -> bool:
        return self.displacement == 0.0 and self.min_variance == 1.0


@dataclass(frozen=True)
class MultimodeGaussianState:
    """Product of independent Gaussian modes (M >= 1)."""

    modes: tuple[GaussianModeParams, ...]

    def __post_init__(self):
        if len(self.modes) < 1:
            raise DomainError("a multimode state needs at least one mode")
        object.__setattr__(self, "modes", tuple(self.modes))

    def __len__(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class PhotonDistribution:
    """Truncated photon-number distribution with a rigorous tail bound.

    probs[m] = P_m for m = 0..K;  tail_bound >= sum_{m>K} P_m.
    """

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DomainError("probs must be a non-empty 1-D sequence")
        if np.any(p < -1e-15):
            raise DomainError("photon-number probabilities must be non-negative")
        p = np.maximum(p, 0.0)
        if self.tail_bound < 0.0:
            raise DomainError("tail_bound must be non-negative")
        total = float(p.sum()) + float(self.tail_bound)
        if not (1.0 - 1e-9 <= total <= 1.0 + 1e-9):
            raise DomainError(
                f"probabilities + tail bound must total 1 within 1e-9, got {total!r}"
            )
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_bound", float(self.tail_bound))

    @property
    def truncation(self) -> int:
        return self.probs.size - 1

    def mean_photons(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    @staticmethod
    def fock(m: int) -> "PhotonDistribution":
        if m < 0:
            raise DomainError("Fock index must be >= 0")
        p = np.zeros(m + 1)
        p[m] = 1.0
        return PhotonDistribution(p)

    @staticmethod
    def from_probs(seq, tail_bound: float = 0.0) -> "PhotonDistribution":
        return PhotonDistribution(np.asarray(seq, dtype=float), tail_bound)


def _mu(v: float, tau: float) -> float:
    return 2.0 * v + tau * (1.0 - v)


def vacuum_probability(state: GaussianModeParams, tau: float) -> float:
    """Vacuum probability of the mode after attenuation to transmittance tau.

    For tau = 0 this is exactly 1; for a vacuum mode it is 1 for every tau.
    """
    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"tau must be in [0, 1], got {tau}")
    b, v, phi = state.displacement, state.min_variance, state.angle
    mu_v = _mu(v, tau)
    mu_iv = _mu(1.0 / v, tau)
    expo = -(b * b * tau / 2.0) * (
        math.cos(phi) ** 2 / mu_iv + math.sin(phi) ** 2 / mu_v
    )
    return 2.0 * math.exp(expo) / math.sqrt(mu_v * mu_iv)


def vacuum_probability_multimode(state: MultimodeGaussianState, tau: float) -> float:
    """Product of per-mode vacuum probabilities at transmittance tau."""
    out = 1.0
    for mode in state.modes:
        out *= vacuum_probability(mode, tau)
    return out


def coherent_mean_photons(displacement: float) -> float:
    """Mean photon number of the coherent-state limit (min_variance -> 1).

    Derivation: at min_variance = 1 the attenuated vacuum probability is
    exp(-displacement**2 * tau / 4), while a Poisson state of mean mu gives
    exp(-mu * tau); matching the two fixes mu = displacement**2 / 4.  The
    same value makes the squeezed-coherent photon statistics converge to the
    Poisson law as min_variance -> 1 (checked to first order in 1 - V by the
    test suite).
    """
    return displacement * displacement / 4.0


def _log_photon_weights(beta: float, v: float, kmax: int):
    """log P_m, m = 0..kmax, for a squeezed coherent mode with angle = 0."""
    y = beta * math.sqrt(v / (2.0 * (1.0 - v * v)))
    q = (1.0 - v) / (2.0 * (1.0 + v))
    c = 2.0 * math.sqrt(v) / (1.0 + v)
    s = v / (2.0 * (1.0 + v))
    logh, _ = log_hermite_scalar(y, kmax)
    m = np.arange(kmax + 1)
    log_e = math.log(c) - gammaln(m + 1.0) + m * math.log(q) - s * beta * beta
    return log_e + 2.0 * logh, y, q


def _tail_bound_log(beta: float, v: float, k: int) -> float:
    """log of a rigorous bound on sum_{m>k} P_m (Cramer + geometric)."""
    y2 = beta * beta * v / (2.0 * (1.0 - v * v))
    q2 = (1.0 - v) / (1.0 + v)  # = 2q < 1
    c = 2.0 * math.sqrt(v) / (1.0 + v)
    # P_m <= c * k^2 * exp(y^2 * v) * (2q)^m  (y^2 - s*beta^2 == y^2 * v)
    return (
        math.log(c)
        + _CRAMER_LOG_K2
        + y2 * v
        + (k + 1) * math.log(q2)
        - math.log1p(-q2)
    )


def required_truncation(
    beta: float, v: float, tail_tol: float = 1e-10, cap: int = DEFAULT_TRUNCATION_CAP
) -> int:
    """Smallest truncation whose rigorous tail bound is below tail_tol."""
    q2 = (1.0 - v) / (1.0 + v)
    if q2 <= 0.0:
        return 1
    base = _tail_bound_log(beta, v, 0)
    # solve base + k*log(q2) < log(tol)
    k = int(math.ceil((math.log(tail_tol) - base) / math.log(q2))) + 1
    return max(4, min(cap, k))


def gaussian_photodistribution(
    state: GaussianModeParams,
    truncation: int | None = None,
    *,
    tail_tol: float = 1e-10,
) -> PhotonDistribution:
    """Photon-number distribution of a squeezed coherent mode (angle = 0).

    Evaluated in log space so the entries stay meaningful far below 1e-300
    in relative terms.  States with min_variance above 1 - 1e-6 are routed
    to the Poisson (coherent) limit, where the direct formula is singular.

    Raises UnsupportedParameterError for angle != 0 and PrecisionError if the
    truncation cap cannot push the rigorous tail bound below tail_tol.
    """
    if state.angle != 0.0:
        raise UnsupportedParameterError(
            "photon statistics are only implemented for angle = 0"
        )
    b, v = state.displacement, state.min_variance
    if v > _COHERENT_VARIANCE_CUTOFF:
        return coherent_limit_photodistribution(
            coherent_mean_photons(b), truncation, tail_tol=tail_tol
        )
    k = truncation if truncation is not None else required_truncation(b, v, tail_tol)
    logp, _, _ = _log_photon_weights(b, v, k)
    p = np.exp(logp)
    # two upper bounds on the true tail: the analytic geometric bound and the
    # observed normalization deficit padded by the summation rounding floor
    tail_analytic = math.exp(min(_tail_bound_log(b, v, k), 700.0))
    tail_observed = max(1.0 - float(p.sum()), 0.0) + 1e-13
    tail = min(tail_analytic, tail_observed)
    if tail >= tail_tol:
        raise PrecisionError(
            f"truncation {k} leaves tail bound {tail:.3e} >= {tail_tol:.1e} "
            f"(displacement={b}, min_variance={v})"
        )
    return PhotonDistribution(p, tail_bound=tail)


def coherent_limit_photodistribution(
    mean_photons: float,
    truncation: int | None = None,
    *,
    tail_tol: float = 1e-10,
) -> PhotonDistribution:
    """Poisson photon statistics for the coherent-state limit."""
    if mean_photons < 0.0:
        raise DomainError("mean_photons must be >= 0")
    if mean_photons == 0.0:
        return PhotonDistribution(np.array([1.0]))
    from scipy.stats import poisson

    if truncation is None:
        k = int(poisson.isf(tail_tol * 0.1, mean_photons)) + 2
        k = min(max(k, 4), DEFAULT_TRUNCATION_CAP)
    else:
        k = truncation
    m = np.arange(k + 1)
    p = poisson.pmf(m, mean_photons)
    tail = float(poisson.sf(k, mean_photons))
    if tail >= tail_tol:
        raise PrecisionError(
            f"truncation {k} leaves Poisson tail {tail:.3e} >= {tail_tol:.1e}"
        )
    return PhotonDistribution(p, tail_bound=tail)


# -- derivative helpers for the threshold solver (angle = 0 throughout) -----


def vacuum_probability_and_grads(beta: float, v: float, tau: float):
    """(P0, dP0/dbeta, dP0/dV) for angle = 0, analytic closed forms."""
    a = _mu(v, tau)  # 2V + tau(1-V)
    bb = _mu(1.0 / v, tau)
    p0 = 2.0 * math.exp(-(beta * beta * tau) / (2.0 * bb)) / math.sqrt(a * bb)
    da = 2.0 - tau
    dbb = -(2.0 - tau) / (v * v)
    dlog = -0.5 * (da / a + dbb / bb) + beta * beta * tau * dbb / (2.0 * bb * bb)
    return p0, p0 * (-beta * tau / bb), p0 * dlog


_GAMMALN_TABLE = gammaln(np.arange(1, 2050).astype(float))


def _lgamma_row(kmax: int) -> np.ndarray:
    """gammaln(m + 1) for m = 0..kmax, served from a cached table."""
    if kmax + 1 > _GAMMALN_TABLE.size:
        return gammaln(np.arange(kmax + 1) + 1.0)
    return _GAMMALN_TABLE[: kmax + 1]


def photon_number_weights(beta: float, v: float, kmax: int) -> np.ndarray:
    """P_m arrays for m = 0..kmax, angle = 0 (no derivatives)."""
    w = math.sqrt(v / (2.0 * (1.0 - v * v)))
    y = beta * w
    q = (1.0 - v) / (2.0 * (1.0 + v))
    c = 2.0 * math.sqrt(v) / (1.0 + v)
    s = v / (2.0 * (1.0 + v))
    logh, _ = log_hermite_scalar(y, kmax)
    refine_log_hermite(y, logh, None)
    m = np.arange(kmax + 1)
    log_e = math.log(c) - _lgamma_row(kmax) + m * math.log(q) - s * beta * beta
    return np.exp(log_e + 2.0 * logh)


def photodistribution_and_grads(beta: float, v: float, kmax: int):
    """(P_m, dP_m/dbeta, dP_m/dV) arrays for m = 0..kmax, angle = 0.

    Derivatives are assembled from log-space pieces; each P_m is a product
    E_m * H_m(y)^2 and the partials use H'_m = 2 m H_{m-1}.
    """
    w = math.sqrt(v / (2.0 * (1.0 - v * v)))  # dy/dbeta
    y = beta * w
    q = (1.0 - v) / (2.0 * (1.0 + v))
    c = 2.0 * math.sqrt(v) / (1.0 + v)
    s = v / (2.0 * (1.0 + v))
    logh, sgnh = log_hermite_scalar(y, kmax)
    refine_log_hermite(y, logh, sgnh)
    m = np.arange(kmax + 1)
    log_e = math.log(c) - _lgamma_row(kmax) + m * math.log(q) - s * beta * beta
    p = np.exp(log_e + 2.0 * logh)
    # cross term E_m * H_m * H_{m-1} (zero for m = 0)
    cross = np.zeros(kmax + 1)
    cross[1:] = (
        np.exp(log_e[1:] + logh[1:] + logh[:-1]) * sgnh[1:] * sgnh[:-1]
    )
    dp_db = 4.0 * m * w * cross - 2.0 * s * beta * p
    # d/dV pieces
    dlog_c = 1.0 / (2.0 * v) - 1.0 / (1.0 + v)
    dlog_q = -2.0 / (1.0 - v * v)
    ds = 1.0 / (2.0 * (1.0 + v) ** 2)
    dw = 0.5 * w * (1.0 / v + 2.0 * v / (1.0 - v * v))
    dp_dv = (dlog_c + m * dlog_q - beta * beta * ds) * p + 4.0 * m * beta * dw * cross
    return p, dp_db, dp_dv
