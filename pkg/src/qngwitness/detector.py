"""Click statistics of a balanced N-channel binary detector.

The transfer matrix element T[n, m] is the probability that m photons,
distributed uniformly and independently over N channels, produce clicks on
n designated channels (irrespective of the remaining ones).  Its alternating
inclusion-exclusion sum is evaluated in exact integer arithmetic, which is
both cheaper and tighter than compensated floating-point summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, TruncationError
from .gaussian import (
    GaussianModeParams,
    MultimodeGaussianState,
    PhotonDistribution,
    gaussian_photodistribution,
    vacuum_probability_multimode,
)

__all__ = [
    "DetectorConfig",
    "ClickPair",
    "transfer_matrix_element",
    "transfer_matrix_closed_form",
    "transfer_row",
    "click_probabilities",
    "click_probabilities_gaussian",
    "attenuate",
    "merge",
]

# below this, the inclusion-exclusion route has lost too many digits to
# cancellation; the photon-distribution route is cancellation-free
IE_CANCELLATION_FLOOR = 1e-10


@dataclass(frozen=True)
class DetectorConfig:
    """Balanced multiplex detector: channel count and per-channel efficiency.

    Efficiency is modelled as loss applied to the state before an ideal
    detector (channel balancing makes imbalance equivalent to extra uniform
    loss).
    """

    channels: int
    efficiency: float = 1.0

    def __post_init__(self):
        if self.channels < 1:
            raise DomainError("channels must be >= 1")
        if not (0.0 < self.efficiency <= 1.0):
            raise DomainError("efficiency must be in (0, 1]")


@dataclass(frozen=True)
class ClickPair:
    """Success/error probabilities (R_n, R_{n+1}) for criterion order n."""

    order: int
    r_n: float
    r_n1: float

    def __post_init__(self):
        if self.order < 1:
            raise DomainError("order must be >= 1")
        if not (0.0 <= self.r_n <= 1.0 and 0.0 <= self.r_n1 <= 1.0):
            raise DomainError("click probabilities must lie in [0, 1]")
        if self.r_n1 > self.r_n + 1e-12:
            raise DomainError("all-(n+1) coincidence cannot exceed the n-fold one")


@lru_cache(maxsize=4096)
def _t_exact(n: int, m: int, N: int) -> Fraction:
    num = sum(
        (-1) ** k * math.comb(n, k) * (N - k) ** m for k in range(n + 1)
    )
    return Fraction(num, N**m)


def transfer_matrix_element(n: int, m: int, N: int) -> float:
    """Probability of clicks on n designated channels given m photons.

    Exactly zero for n > m; exact rational arithmetic internally, so the
    result is correctly rounded and always inside [0, 1].
    """
    if n < 0 or m < 0:
        raise DomainError("n and m must be non-negative")
    if n > N:
        raise DomainError(f"cannot require {n} clicks from {N} channels")
    if n > m:
        return 0.0
    val = float(_t_exact(n, m, N))
    return min(1.0, max(0.0, val))


def transfer_matrix_closed_form(n: int, m: int, N: int) -> float:
    """Closed forms for m in {n, n+1, n+2}; errors otherwise."""
    if n > N or n < 0:
        raise DomainError(f"cannot require {n} clicks from {N} channels")
    if m == n:
        return math.factorial(n) / N**n
    if m == n + 1:
        return math.factorial(n + 1) / N**n * (1.0 - n / (2.0 * N))
    if m == n + 2:
        poly = n + 3 * n**2 - 12 * n * N + 12 * N**2
        return math.factorial(n + 2) / (24.0 * N ** (n + 2)) * poly
    raise DomainError(f"no closed form for m = {m} with n = {n}")


@lru_cache(maxsize=512)
def transfer_row(n: int, N: int, m_max: int) -> np.ndarray:
    """T[n, m] for m = 0..m_max as a read-only float array."""
    row = np.array([transfer_matrix_element(n, m, N) for m in range(m_max + 1)])
    row.setflags(write=False)
    return row


def click_probabilities(
    dist: PhotonDistribution, n: int, N: int, *, tail_tol: float = 1e-12
) -> ClickPair:
    """(R_n, R_{n+1}) of a diagonal state on a balanced N-channel detector."""
    if N < n + 1:
        raise DomainError(f"need at least n+1 = {n + 1} channels, got {N}")
    if dist.tail_bound > tail_tol:
        raise TruncationError(
            f"distribution tail bound {dist.tail_bound:.3e} exceeds {tail_tol:.1e}"
        )
    k = dist.truncation
    r_n = float(transfer_row(n, N, k) @ dist.probs)
    r_n1 = float(transfer_row(n + 1, N, k) @ dist.probs)
    return ClickPair(order=n, r_n=min(r_n, 1.0), r_n1=min(r_n1, min(r_n, 1.0)))


def _clicks_inclusion_exclusion(state: MultimodeGaussianState, n: int, N: int):
    p0 = [vacuum_probability_multimode(state, k / N) for k in range(N + 1)]
    r_n = math.fsum(
        (-1) ** k * math.comb(n, k) * p0[k] for k in range(n + 1)
    )
    r_n1 = math.fsum(
        (-1) ** k * math.comb(n + 1, k) * p0[k] for k in range(n + 2)
    )
    return r_n, r_n1


def click_probabilities_gaussian(
    state: MultimodeGaussianState | GaussianModeParams, n: int, N: int
) -> ClickPair:
    """(R_n, R_{n+1}) of a multimode Gaussian state on a balanced detector.

    Uses the inclusion-exclusion expansion over attenuated vacuum
    probabilities (compensated summation).  Values that small enough to be
    dominated by cancellation noise are recomputed through the
    photon-distribution route, which applies whenever every mode has
    angle = 0.
    """
    if isinstance(state, GaussianModeParams):
        state = MultimodeGaussianState((state,))
    if N < n + 1:
        raise DomainError(f"need at least n+1 = {n + 1} channels, got {N}")
    r_n, r_n1 = _clicks_inclusion_exclusion(state, n, N)
    if min(r_n, r_n1) < IE_CANCELLATION_FLOOR and all(
        m.angle == 0.0 for m in state.modes
    ):
        dist = merge([gaussian_photodistribution(m) for m in state.modes])
        exact = click_probabilities(dist, n, N, tail_tol=1e-9)
        r_n = exact.r_n if r_n < IE_CANCELLATION_FLOOR else r_n
        r_n1 = exact.r_n1 if r_n1 < IE_CANCELLATION_FLOOR else r_n1
    r_n = min(max(r_n, 0.0), 1.0)
    r_n1 = min(max(r_n1, 0.0), r_n)
    return ClickPair(order=n, r_n=r_n, r_n1=r_n1)


def attenuate(dist: PhotonDistribution, eta: float) -> PhotonDistribution:
    """Binomial loss map with transmittance eta.

    Photons above the truncation can only migrate downward, so the original
    tail bound remains valid.
    """
    if not (0.0 <= eta <= 1.0):
        raise DomainError(f"eta must be in [0, 1], got {eta}")
    if eta == 1.0:
        return dist
    k = dist.truncation
    if eta == 0.0:
        return PhotonDistribution(np.array([1.0 - dist.tail_bound]), dist.tail_bound)
    out = _loss_matrix(k, eta) @ dist.probs
    return PhotonDistribution(out, dist.tail_bound)


def _loss_matrix(k: int, eta: float) -> np.ndarray:
    """L[j, m] = C(m, j) eta^j (1-eta)^(m-j) for j <= m <= k, else 0."""
    from scipy.special import gammaln

    j = np.arange(k + 1)[:, None]
    m = np.arange(k + 1)[None, :]
    keep = j <= m
    with np.errstate(invalid="ignore"):
        logl = (
            gammaln(m + 1.0)
            - gammaln(j + 1.0)
            - gammaln(np.where(keep, m - j, 0) + 1.0)
            + j * math.log(eta)
            + (m - j) * math.log1p(-eta)
        )
    return np.where(keep, np.exp(np.where(keep, logl, -np.inf)), 0.0)


def merge(dists: list[PhotonDistribution]) -> PhotonDistribution:
    """Photon statistics of independently generated contributions combined
    into one detection unit: discrete convolution; tail bounds add."""
    if not dists:
        raise DomainError("merge needs at least one distribution")
    probs = dists[0].probs
    tail = dists[0].tail_bound
    for d in dists[1:]:
        probs = np.convolve(probs, d.probs)
        tail += d.tail_bound
    # convolution of sub-normalized vectors loses the cross-tail mass; fold
    # the deficit into the bound
    tail = max(tail, 1.0 - float(probs.sum()))
    return PhotonDistribution(probs, min(tail, 1.0))
