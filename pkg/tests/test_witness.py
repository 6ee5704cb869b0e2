import json
import math

import numpy as np
import pytest
from scipy.stats import beta as beta_dist

from qngwitness.detector import attenuate, click_probabilities
from qngwitness.errors import DomainError
from qngwitness.gaussian import PhotonDistribution
from qngwitness.witness import (
    CountRecord,
    VerdictState,
    attenuation_path,
    bayes_interval,
    classify,
    estimate_rates,
    fock_single_criterion_transmittance,
    qng_depth,
    qng_depth_from_point,
)
from oracles import beta_interval_quadrature


def test_interval_k0_pins_left():
    iv = bayes_interval(0, 10)
    assert iv.lo == 0.0 and iv.point == 0.0
    # Beta(1, 11): mass 0.68 reached at 1 - 0.32^(1/11)
    assert iv.hi == pytest.approx(1.0 - 0.32 ** (1.0 / 11.0), rel=1e-9)


def test_interval_k_equals_trials_pins_right():
    iv = bayes_interval(10, 10)
    assert iv.hi == 1.0 and iv.point == 1.0
    assert iv.lo == pytest.approx(0.32 ** (1.0 / 11.0), rel=1e-9)


def test_interval_against_quadrature_oracle():
    for k, trials in [(1, 10), (3, 25), (7, 9)]:
        iv = bayes_interval(k, trials)
        lo_o, hi_o = beta_interval_quadrature(k, trials)
        assert iv.lo == pytest.approx(lo_o, abs=1e-6)
        assert iv.hi == pytest.approx(hi_o, abs=1e-6)
        # credible mass is exact by construction
        dist = beta_dist(k + 1, trials - k + 1)
        assert dist.cdf(iv.hi) - dist.cdf(iv.lo) == pytest.approx(0.68, abs=1e-9)


def test_interval_contains_mode():
    for k, trials in [(2, 12), (499, 1000), (1, 10**6)]:
        iv = bayes_interval(k, trials)
        assert iv.lo <= k / trials <= iv.hi


def test_interval_domain():
    with pytest.raises(DomainError):
        bayes_interval(5, 4)
    with pytest.raises(DomainError):
        bayes_interval(0, 0)


def test_estimate_rates_simple():
    rec = CountRecord(order=1, trials=1000, count_n=100, count_n1=0)
    est = estimate_rates(rec)
    assert est.r_n.point == pytest.approx(0.1)
    assert est.r_n1.point == 0.0
    assert est.r_n1.hi == pytest.approx(1.0 - 0.32 ** (1.0 / 1001.0), rel=1e-6)
    assert est.r_n1.hi == pytest.approx(1.15e-3, rel=0.02)


def test_estimate_rates_large_record():
    rec = CountRecord(order=1, trials=10**6, count_n=10**5, count_n1=10)
    est = estimate_rates(rec)
    assert est.r_n1.point == pytest.approx(1e-5)
    dist = beta_dist(11, 10**6 - 9)
    assert dist.cdf(est.r_n1.hi) - dist.cdf(est.r_n1.lo) == pytest.approx(
        0.68, abs=1e-6
    )
    lo_o, hi_o = beta_interval_quadrature(10, 10**6)
    assert est.r_n1.lo == pytest.approx(lo_o, abs=1e-7)
    assert est.r_n1.hi == pytest.approx(hi_o, abs=1e-7)


def test_estimate_rates_subsets_pooled():
    rec = CountRecord(
        order=1, trials=1000, count_n=100, count_n1=5, subsets=(100, 104)
    )
    est = estimate_rates(rec)
    assert est.meta["estimator"] == "subset-mean"
    assert est.meta["effective_trials"] == 2000
    assert est.r_n.point == pytest.approx(204 / 2000)


def test_count_record_validation():
    with pytest.raises(DomainError):
        CountRecord(order=1, trials=10, count_n=3, count_n1=5)
    with pytest.raises(DomainError):
        CountRecord(order=0, trials=10, count_n=1, count_n1=0)
    with pytest.raises(DomainError):
        CountRecord(order=1, trials=0, count_n=0, count_n1=0)
    with pytest.raises(DomainError):
        CountRecord(order=1, trials=10, count_n=5, count_n1=1, subsets=(5,))


def test_count_record_json_roundtrip(tmp_path):
    rec = CountRecord(order=2, trials=500, count_n=20, count_n1=1)
    p = tmp_path / "rec.json"
    rec.to_json(str(p))
    assert CountRecord.from_json(str(p)) == rec


def test_count_record_csv_batch(tmp_path):
    p = tmp_path / "batch.csv"
    p.write_text("order,trials,count_n,count_n1\n1,100,10,0\n2,400,5,1\n")
    recs = CountRecord.batch_from_csv(str(p))
    assert len(recs) == 2 and recs[1].order == 2


def test_coverage_is_two_thirds():
    # frequentist coverage of the 68% credible interval at p = 0.3
    rng = np.random.default_rng(7)
    trials, p, reps = 1000, 0.3, 4000
    ks = rng.binomial(trials, p, size=reps)
    cache = {}
    hits = 0
    for k in ks:
        if k not in cache:
            cache[k] = bayes_interval(int(k), trials)
        iv = cache[k]
        hits += iv.lo <= p <= iv.hi
    assert hits / reps == pytest.approx(0.68, abs=0.03)


@pytest.fixture(scope="module")
def curve2(curve_cache):
    return curve_cache(2)


def test_classify_positive_negative_inconclusive(curve2):
    # a rate pair safely above the curve with tight statistics
    thr = curve2.threshold_at(1e-4)
    trials = 4_000_000
    rec = CountRecord(
        order=2,
        trials=trials,
        count_n=int(thr * 3.0 * trials),
        count_n1=int(1e-4 * trials),
    )
    assert classify(rec, curve2).state == VerdictState.POSITIVE

    rec = CountRecord(
        order=2,
        trials=trials,
        count_n=int(thr * 0.3 * trials),
        count_n1=int(1e-4 * trials),
    )
    assert classify(rec, curve2).state == VerdictState.NEGATIVE

    # a point sitting on the curve with only a handful of counts straddles it
    trials = 3000
    rec = CountRecord(
        order=2,
        trials=trials,
        count_n=max(int(thr * trials), 1),
        count_n1=1,
    )
    assert classify(rec, curve2).state == VerdictState.INCONCLUSIVE


def test_classify_no_data(curve2):
    rec = CountRecord(order=2, trials=1000, count_n=0, count_n1=0)
    v = classify(rec, curve2)
    assert v.state == VerdictState.NO_DATA
    assert v.depth_db is None


def test_classify_order_mismatch(curve2):
    with pytest.raises(DomainError):
        classify(CountRecord(order=1, trials=10, count_n=1, count_n1=0), curve2)


def test_distances_zero_on_curve(curve2):
    from qngwitness.witness import _log_distances

    r = 3e-5
    thr = curve2.threshold_at(r)
    d_n, d_n1 = _log_distances(thr, r, curve2)
    assert abs(d_n1) < 1e-9
    assert abs(d_n) < 1e-6  # preimage roundtrip through interpolation
    d_n, d_n1 = _log_distances(thr * 2.0, r, curve2)
    assert d_n > 0.0 and d_n1 > 0.0
    d_n, d_n1 = _log_distances(thr * 0.5, r, curve2)
    assert d_n < 0.0 and d_n1 < 0.0


def test_verdict_json(curve2):
    rec = CountRecord(order=2, trials=10**6, count_n=40000, count_n1=10)
    v = classify(rec, curve2)
    obj = v.to_json_obj()
    assert obj["state"] in {s.value for s in VerdictState}
    json.dumps(obj)  # serializable


def test_attenuation_path_endpoints():
    d = PhotonDistribution.from_probs([0.2, 0.7, 0.08, 0.02])
    path = attenuation_path(d, 1, 2, step_db=0.5, max_db=10.0)
    assert len(path) == 21
    direct = click_probabilities(d, 1, 2)
    assert path[0].r_n == pytest.approx(direct.r_n, rel=1e-12)
    r_n = [p.r_n for p in path]
    r_n1 = [p.r_n1 for p in path]
    assert all(a >= b for a, b in zip(r_n, r_n[1:]))
    assert all(a >= b for a, b in zip(r_n1, r_n1[1:]))


def test_attenuation_path_fock_error_free():
    path = attenuation_path(PhotonDistribution.fock(2), 2, 3, max_db=5.0)
    assert all(p.r_n1 == 0.0 for p in path)


def test_attenuation_path_slope_approaches_limit():
    # with a small (n+1)-photon admixture the path slope in log-log tends to
    # (n+1)/n as the attenuation grows
    n = 2
    probs = np.zeros(n + 2)
    probs[n] = 0.98
    probs[n + 1] = 1e-3
    probs[0] = 1.0 - probs.sum()
    d = PhotonDistribution(probs)
    path = attenuation_path(d, n, n + 1, step_db=0.5, max_db=40.0)
    r_n = np.array([p.r_n for p in path])
    r_n1 = np.array([p.r_n1 for p in path])
    slope_tail = (np.log(r_n1[-1]) - np.log(r_n1[-3])) / (
        np.log(r_n[-1]) - np.log(r_n[-3])
    )
    assert slope_tail == pytest.approx((n + 1.0) / n, rel=1e-3)


def test_depth_unbounded_for_fock(curve_cache):
    for n in (1, 2):
        curve = curve_cache(n)
        assert qng_depth(PhotonDistribution.fock(n), n, n + 1, curve) == math.inf


def test_depth_not_qng_at_source(curve2):
    # two-photon-dominated state far below the order-2 boundary
    d = PhotonDistribution.from_probs([0.989, 0.0, 0.001, 0.01])
    assert qng_depth(d, 2, 3, curve2) == -math.inf


def test_depth_finite_band_for_merged_model(curve_cache):
    from qngwitness.sources import HeraldedSourceModel, merged_state, ExperimentModel
    from qngwitness.detector import DetectorConfig

    model = ExperimentModel(
        HeraldedSourceModel(p1=0.95, p2=0.01),
        merge_count=1,
        detector=DetectorConfig(2, 0.5),
    )
    curve = curve_cache(1)
    depth = qng_depth(merged_state(model), 1, 2, curve)
    assert 5.0 < depth < 20.0
    # bisection resolution contract
    eta_low = 10.0 ** (-(depth + 0.02) / 10.0)
    eta_high = 10.0 ** (-(depth - 0.02) / 10.0)
    from qngwitness.witness import _is_qng_dist

    assert _is_qng_dist(attenuate(merged_state(model), eta_high), 1, 2, curve)
    assert not _is_qng_dist(attenuate(merged_state(model), eta_low), 1, 2, curve)


def test_depth_from_point_matches_two_level_model(curve2):
    d = PhotonDistribution.from_probs([0.9, 0.0, 0.099, 0.001])
    cp = click_probabilities(d, 2, 3)
    from_dist = qng_depth(d, 2, 3, curve2)
    from_point = qng_depth_from_point(cp.r_n, cp.r_n1, 2, 3, curve2)
    assert from_point == pytest.approx(from_dist, abs=0.05)


def test_depth_monotone_in_verdict(curve2):
    # attenuation never flips a negative verdict back to positive for the
    # fast-decaying family
    d = PhotonDistribution.from_probs([0.9, 0.0, 0.099, 0.001])
    from qngwitness.witness import _is_qng_dist

    path_state = [
        _is_qng_dist(attenuate(d, 10 ** (-db / 10.0)), 2, 3, curve2)
        for db in np.arange(0.0, 30.0, 0.5)
    ]
    # once it turns negative it stays negative
    first_false = path_state.index(False) if False in path_state else len(path_state)
    assert all(not s for s in path_state[first_false:])


def test_fock_transmittance_m2(curve_cache):
    eta = fock_single_criterion_transmittance(2)
    assert eta == pytest.approx(0.2960, abs=5e-3)


def test_fock_transmittance_rejects_small_m():
    with pytest.raises(DomainError):
        fock_single_criterion_transmittance(1)