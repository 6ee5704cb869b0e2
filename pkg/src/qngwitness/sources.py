"""Model of the experiment's state preparation: heralded single-photon
windows merged in time, detected with uniform efficiency.

The per-window photon statistics are a short vector (vacuum, one photon,
two-photon noise, optional three-photon term); merging convolves the
windows, and detection efficiency acts as binomial loss before an ideal
binary multichannel detector.  An event-level sampler cross-validates the
analytic pipeline and produces synthetic count records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_text, json_sanitize
from .detector import DetectorConfig, ClickPair, attenuate, click_probabilities, merge
from .errors import DomainError
from .gaussian import PhotonDistribution
from .threshold import ThresholdCurve
from .witness import CountRecord, VerdictState, qng_depth, _log_distances

__all__ = [
    "HeraldedSourceModel",
    "ExperimentModel",
    "merged_state",
    "simulate_counts",
    "reproduce_experiment_suite",
    "SuiteEntry",
]


@dataclass(frozen=True)
class HeraldedSourceModel:
    """Photon statistics of one heralded window.

    p1 dominates for a good source; p2 (and optionally p3) model multiphoton
    noise.  The remainder is vacuum.
    """

    p1: float
    p2: float = 0.0
    p3: float = 0.0

    def __post_init__(self):
        probs = (self.p1, self.p2, self.p3)
        if any(p < 0.0 for p in probs):
            raise DomainError("window probabilities must be non-negative")
        if sum(probs) > 1.0 + 1e-12:
            raise DomainError("window probabilities exceed 1")

    @property
    def p0(self) -> float:
        return max(0.0, 1.0 - self.p1 - self.p2 - self.p3)

    def window_distribution(self) -> PhotonDistribution:
        probs = [self.p0, self.p1, self.p2, self.p3]
        while len(probs) > 1 and probs[-1] == 0.0:
            probs.pop()
        return PhotonDistribution(np.array(probs))


@dataclass(frozen=True)
class ExperimentModel:
    """Merge of n heralded windows measured on an (n+1)-channel detector."""

    source: HeraldedSourceModel
    merge_count: int
    detector: DetectorConfig
    trials: int = 1_000_000

    def __post_init__(self):
        if self.merge_count < 1:
            raise DomainError("merge_count must be >= 1")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")

    @staticmethod
    def from_json_obj(obj: dict) -> "ExperimentModel":
        n = int(obj["n"])
        return ExperimentModel(
            source=HeraldedSourceModel(
                p1=float(obj["p1"]),
                p2=float(obj.get("p2", 0.0)),
                p3=float(obj.get("p3", 0.0)),
            ),
            merge_count=n,
            detector=DetectorConfig(
                channels=int(obj.get("channels", n + 1)),
                efficiency=float(obj.get("efficiency", 1.0)),
            ),
            trials=int(obj.get("trials", 1_000_000)),
        )

    @staticmethod
    def from_json(path: str) -> "ExperimentModel":
        with open(path, encoding="utf-8") as fh:
            return ExperimentModel.from_json_obj(json.load(fh))

    def to_json_obj(self) -> dict:
        return {
            "p1": self.source.p1,
            "p2": self.source.p2,
            "p3": self.source.p3,
            "efficiency": self.detector.efficiency,
            "n": self.merge_count,
            "channels": self.detector.channels,
            "trials": self.trials,
        }


def merged_state(model: ExperimentModel) -> PhotonDistribution:
    """Photon distribution of the merged detection unit, after efficiency.

    Binary detectors need no further correction at distribution level; the
    click model downstream handles the channel statistics.
    """
    window = model.source.window_distribution()
    return attenuate(
        merge([window] * model.merge_count), model.detector.efficiency
    )


def analytic_click_pair(model: ExperimentModel, order: int | None = None) -> ClickPair:
    n = order if order is not None else model.merge_count
    return click_probabilities(merged_state(model), n, model.detector.channels)


def simulate_counts(
    model: ExperimentModel, seed: int, *, shard_size: int = 100_000,
    record_subsets: bool = False,
) -> CountRecord:
    """Event-level sampler: per trial, draw the merged photon number, thin by
    efficiency, scatter survivors uniformly over the channels, apply the
    binary click rule.  Philox key = (seed, shard); deterministic.
    """
    n = model.merge_count
    N = model.detector.channels
    pre_loss = merge([model.source.window_distribution()] * n)
    probs = pre_loss.probs / pre_loss.probs.sum()
    count_n = 0
    count_n1 = 0
    subset_counts = np.zeros(N, dtype=np.int64) if record_subsets else None
    done = 0
    shard = 0
    while done < model.trials:
        block = min(shard_size, model.trials - done)
        rng = np.random.Generator(np.random.Philox(key=[seed, shard]))
        photons = rng.choice(probs.size, size=block, p=probs)
        survivors = rng.binomial(photons, model.detector.efficiency)
        hits = rng.multinomial(survivors, np.full(N, 1.0 / N))
        clicked = hits > 0
        count_n += int(np.count_nonzero(clicked[:, :n].all(axis=1)))
        count_n1 += int(np.count_nonzero(clicked.all(axis=1)))
        if record_subsets:
            # the n+1 leave-one-out subsets of the first n+1 channels
            first = clicked[:, : n + 1]
            for j in range(min(n + 1, N)):
                mask = np.ones(n + 1, dtype=bool)
                mask[j] = False
                subset_counts[j] += int(
                    np.count_nonzero(first[:, mask].all(axis=1))
                )
        done += block
        shard += 1
    subsets = None
    if record_subsets:
        # keep the n+1 leave-one-out subsets of the first n+1 channels
        subsets = tuple(int(c) for c in subset_counts[: n + 1])
    return CountRecord(
        order=n,
        trials=model.trials,
        count_n=count_n,
        count_n1=count_n1,
        subsets=subsets,
    )


@dataclass(frozen=True)
class SuiteEntry:
    """One tile of the source-count x criterion-order table."""

    source_photons: int
    order: int
    r_n: float
    r_n1: float
    qng: bool
    depth_db: float
    d_n: float | None
    d_n1: float | None

    def to_json_obj(self) -> dict:
        obj = {
            "source_photons": self.source_photons,
            "order": self.order,
            "r_n": self.r_n,
            "r_n1": self.r_n1,
            "qng": self.qng,
            "d_n": self.d_n,
            "d_n1": self.d_n1,
        }
        if math.isinf(self.depth_db):
            obj["depth_db"] = "unbounded" if self.depth_db > 0 else "not-qng-at-source"
        else:
            obj["depth_db"] = self.depth_db
        return json_sanitize(obj)


def reproduce_experiment_suite(
    p1: float,
    p2: float,
    efficiency: float,
    n_range,
    trials: int = 1,
    *,
    curves: dict[int, ThresholdCurve] | None = None,
) -> list[SuiteEntry]:
    """Analytic verdict/depth table over source size and criterion order.

    For every source size j in n_range and every criterion order n in
    n_range, the state of j merged windows is classified with the order-n
    criterion on n+1 channels.  Entries whose error rate lies beyond the
    order's curve range are skipped (the exact curve is only certified on
    its sampled range).  `trials` is accepted for interface parity with the
    event-level pipeline; the table itself is analytic.
    """
    from .threshold import default_curve

    source = HeraldedSourceModel(p1=p1, p2=p2)
    out = []
    n_range = list(n_range)
    for j in n_range:
        window = source.window_distribution()
        state = attenuate(merge([window] * j), efficiency)
        for n in n_range:
            curve = (curves or {}).get(n) or default_curve(n)
            cp = click_probabilities(state, n, n + 1)
            if cp.r_n1 > curve.validity[1]:
                continue
            thr, _ = curve.threshold_at_extended(cp.r_n1)
            qng = cp.r_n > thr
            depth = qng_depth(state, n, n + 1, curve)
            d_n, d_n1 = _log_distances(cp.r_n, cp.r_n1, curve)
            out.append(
                SuiteEntry(
                    source_photons=j,
                    order=n,
                    r_n=cp.r_n,
                    r_n1=cp.r_n1,
                    qng=qng,
                    depth_db=depth,
                    d_n=d_n,
                    d_n1=d_n1,
                )
            )
    return out


def suite_to_csv(entries: list[SuiteEntry], path: str) -> None:
    lines = ["source_photons,order,r_n,r_n1,qng,depth_db,d_n,d_n1"]
    for e in entries:
        depth = (
            "unbounded" if math.isinf(e.depth_db) and e.depth_db > 0
            else ("not-qng-at-source" if math.isinf(e.depth_db) else f"{e.depth_db:.2f}")
        )
        lines.append(
            f"{e.source_photons},{e.order},{e.r_n:.10e},{e.r_n1:.10e},"
            f"{int(e.qng)},{depth},"
            f"{'' if e.d_n is None else f'{e.d_n:.6f}'},"
            f"{'' if e.d_n1 is None else f'{e.d_n1:.6f}'}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")