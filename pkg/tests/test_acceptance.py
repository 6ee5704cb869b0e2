"""Acceptance criteria, one test per criterion.

Each test prints `ACCEPTANCE <k> <name>: PASS|FAIL` with measured values
before asserting, so a full run documents every criterion regardless of
which ones hold.  Run with `pytest tests/test_acceptance.py -v -s`.

The 10^7-run three-mode Monte-Carlo tier is enabled with --full-mc or
QNG_FULL_MC=1; the continuous-integration tier covers one and two modes.
"""

import math
import time

import numpy as np
import pytest

import qngwitness as q
from qngwitness.detector import attenuate, click_probabilities, transfer_row
from qngwitness.gaussian import PhotonDistribution
from qngwitness.sources import (
    DetectorConfig,
    ExperimentModel,
    HeraldedSourceModel,
    merged_state,
    reproduce_experiment_suite,
    simulate_counts,
)
from qngwitness.threshold import (
    threshold_closed_form,
    threshold_param_approx,
    threshold_point,
)
from qngwitness.witness import bayes_interval, fock_single_criterion_transmittance, qng_depth
from oracles import transfer_counting_dp


def report(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print("\n" + line)
    return ok


PAPER_TRANSMITTANCES = {2: 0.30, 3: 0.42, 4: 0.50, 5: 0.53, 6: 0.63}


def test_acceptance_1_fock_transmittances():
    t0 = time.time()
    results = {}
    for m, eta_ref in PAPER_TRANSMITTANCES.items():
        eta = fock_single_criterion_transmittance(m)
        results[m] = (eta, abs(eta - eta_ref) <= 0.01)
    elapsed = time.time() - t0
    detail = ", ".join(
        f"m={m}: {eta:.4f} vs {PAPER_TRANSMITTANCES[m]:.2f} "
        f"{'ok' if ok else 'OFF'}"
        for m, (eta, ok) in results.items()
    )
    ok = all(ok for _, ok in results.values()) and elapsed < 60.0
    report(1, "fock-transmittance-reproduction", ok, f"{detail}; {elapsed:.0f}s")
    assert ok, detail


@pytest.mark.parametrize("n", [1, 2, 3])
def test_acceptance_2_montecarlo_tier_m1(n):
    t0 = time.time()
    rep = q.verify(n, 1, 10**5, seed=100 + n)
    ok = rep.violations == 0
    report(
        2, f"mc-certificate-n{n}-m1-1e5", ok,
        f"violations={rep.violations}; {time.time() - t0:.0f}s",
    )
    assert ok


@pytest.mark.parametrize("n", [1, 2, 3])
def test_acceptance_2_montecarlo_tier_m2(n):
    t0 = time.time()
    rep = q.verify(n, 2, 10**6, seed=200 + n)
    ok = rep.violations == 0
    report(
        2, f"mc-certificate-n{n}-m2-1e6", ok,
        f"violations={rep.violations}; {time.time() - t0:.0f}s",
    )
    assert ok


@pytest.mark.parametrize("n", [1, 2, 3])
def test_acceptance_2_montecarlo_tier_m3(n, full_mc):
    if not full_mc:
        pytest.skip("10^7-run tier: enable with --full-mc or QNG_FULL_MC=1")
    t0 = time.time()
    rep = q.verify(n, 3, 10**7, seed=300 + n)
    ok = rep.violations == 0
    report(
        2, f"mc-certificate-n{n}-m3-1e7", ok,
        f"violations={rep.violations}; {time.time() - t0:.0f}s",
    )
    assert ok


def test_acceptance_3_transfer_matrix_equivalence():
    t0 = time.time()
    worst = 0.0
    for N in range(2, 9):
        for n in range(1, min(N, 7)):
            for m in range(0, 9):
                t_sum = q.transfer_matrix_element(n, m, N)
                t_dp = float(transfer_counting_dp(n, m, N))
                worst = max(worst, abs(t_sum - t_dp))
                if m in (n, n + 1, n + 2):
                    t_cf = q.transfer_matrix_closed_form(n, m, N)
                    worst = max(worst, abs(t_sum - t_cf))
    ok = worst < 1e-12
    report(3, "transfer-matrix-equivalence", ok,
           f"max dev {worst:.2e}; {time.time() - t0:.1f}s")
    assert ok


def test_acceptance_4_threshold_asymptotics():
    t0 = time.time()
    lines = []
    all_ok = True
    for n in range(1, 10):
        r_mid = 1e-12
        pts = [threshold_point(n, r_mid / 1.35), threshold_point(n, r_mid),
               threshold_point(n, r_mid * 1.35)]
        slope = (math.log(pts[2].r_n1) - math.log(pts[0].r_n1)) / (
            math.log(pts[2].r_n) - math.log(pts[0].r_n)
        )
        slope_ref = (n + 2.0) / n
        slope_ok = abs(slope / slope_ref - 1.0) <= 0.01
        closed = threshold_closed_form(n, r_mid)
        closed_ok = abs(pts[1].r_n / closed - 1.0) <= 0.05
        all_ok &= slope_ok and closed_ok
        lines.append(
            f"n={n}: slope {slope:.4f}/{slope_ref:.4f}"
            f"({'ok' if slope_ok else 'OFF'}), closed-form gap "
            f"{pts[1].r_n / closed - 1.0:+.3f} ({'ok' if closed_ok else 'OFF'})"
        )
    elapsed = time.time() - t0
    all_ok &= elapsed < 600.0
    report(4, "threshold-asymptotics", all_ok,
           "; ".join(lines) + f"; {elapsed:.0f}s")
    assert all_ok, "\n".join(lines)


def test_acceptance_5_parametric_approximation():
    t0 = time.time()
    lines = []
    all_ok = True
    for n in range(4, 10):
        for t in (0.1, 0.5, 1.0):
            r_n_a, r_n1_a = threshold_param_approx(n, t)
            exact = threshold_point(n, r_n1_a).r_n
            gap = r_n_a / exact - 1.0
            ok = abs(gap) <= 0.10
            all_ok &= ok
            lines.append(f"n={n},t={t}: {gap:+.3f}{'' if ok else ' OFF'}")
    elapsed = time.time() - t0
    report(5, "parametric-approximation", all_ok,
           "; ".join(lines) + f"; {elapsed:.0f}s")
    assert all_ok, "\n".join(lines)


def test_acceptance_6_experiment_shaped_reproduction(curve_cache):
    t0 = time.time()
    orders = range(1, 10)
    curves = {n: curve_cache(n) for n in orders}
    entries = reproduce_experiment_suite(
        0.99, 0.002, 0.5, orders, curves=curves
    )
    by_key = {(e.source_photons, e.order): e for e in entries}
    problems = []
    for j in orders:
        diag = by_key.get((j, j))
        if diag is None or not diag.qng:
            problems.append(f"diagonal j={j} not positive")
            continue
        if not (math.isfinite(diag.depth_db) and diag.depth_db > 0.0):
            problems.append(f"diagonal j={j} depth not finite ({diag.depth_db})")
        for n in orders:
            if n <= j:
                continue
            e = by_key.get((j, n))
            if e is None:
                continue
            higher = e.depth_db if math.isfinite(e.depth_db) else -math.inf
            if not diag.depth_db > higher:
                problems.append(
                    f"depth(j={j},n={j})={diag.depth_db:.2f} not above "
                    f"depth(j={j},n={n})={higher:.2f}"
                )
    elapsed = time.time() - t0
    ok = not problems and elapsed < 300.0
    diag_depths = ", ".join(
        f"{j}:{by_key[(j, j)].depth_db:.1f}dB" for j in orders if (j, j) in by_key
    )
    report(6, "experiment-shaped-reproduction", ok,
           f"diagonal depths {diag_depths}; "
           + ("; ".join(problems) if problems else "ordering ok")
           + f"; {elapsed:.0f}s")
    assert ok, problems


def test_acceptance_7_ideal_fock_invariance(curve_cache):
    t0 = time.time()
    problems = []
    for n in range(1, 10):
        curve = curve_cache(n)
        fock = PhotonDistribution.fock(n)
        for eta in (1.0, 0.5, 0.1, 0.01):
            state = attenuate(fock, eta)
            cp = click_probabilities(state, n, n + 1)
            verdict = q.functional_check(cp.r_n, cp.r_n1, curve)
            if not verdict.is_qng:
                problems.append(f"n={n}, eta={eta} not positive")
        if qng_depth(fock, n, n + 1, curve) != math.inf:
            problems.append(f"n={n} depth not unbounded")
    elapsed = time.time() - t0
    ok = not problems
    report(7, "ideal-fock-invariance", ok,
           ("; ".join(problems) if problems else "all positive, unbounded")
           + f"; {elapsed:.1f}s")
    assert ok, problems


def test_acceptance_8_statistical_coverage():
    t0 = time.time()
    cases = [(1e-4, 10**6), (0.01, 10**4), (0.3, 10**3)]
    reps = 10**4
    lines = []
    all_ok = True
    rng = np.random.default_rng(90210)
    for p, trials in cases:
        ks = rng.binomial(trials, p, size=reps)
        cache = {}
        hits = 0
        for k in ks:
            k = int(k)
            if k not in cache:
                iv = bayes_interval(k, trials)
                cache[k] = (iv.lo, iv.hi)
            lo, hi = cache[k]
            hits += lo <= p <= hi
        cov = hits / reps
        ok = abs(cov - 0.68) <= 0.03
        all_ok &= ok
        lines.append(f"p={p:g}: {cov:.3f}{'' if ok else ' OFF'}")
    elapsed = time.time() - t0
    all_ok &= elapsed < 60.0
    report(8, "statistical-coverage", all_ok,
           "; ".join(lines) + f"; {elapsed:.0f}s")
    assert all_ok, lines


def test_acceptance_9_event_analytic_agreement():
    t0 = time.time()
    models = [(0.99, 0.002, 0.5), (0.9, 0.01, 0.6), (0.7, 0.05, 0.5)]
    trials = 10**6
    problems = []
    for p1, p2, eff in models:
        for n in (1, 2, 3):
            model = ExperimentModel(
                HeraldedSourceModel(p1=p1, p2=p2),
                merge_count=n,
                detector=DetectorConfig(n + 1, eff),
                trials=trials,
            )
            rec = simulate_counts(model, seed=hash((n, p1)) % 2**31)
            cp = click_probabilities(merged_state(model), n, n + 1)
            for label, k_obs, p_true in [
                ("r_n", rec.count_n, cp.r_n),
                ("r_n1", rec.count_n1, cp.r_n1),
            ]:
                sigma = math.sqrt(max(p_true * (1.0 - p_true), 1e-16) / trials)
                dev = abs(k_obs / trials - p_true)
                if dev > 5.0 * sigma + 1e-12:
                    problems.append(
                        f"p1={p1},n={n},{label}: dev {dev:.2e} > 5 sigma"
                    )
    elapsed = time.time() - t0
    ok = not problems and elapsed < 120.0
    report(9, "event-analytic-agreement", ok,
           ("; ".join(problems) if problems else "all within 5 sigma")
           + f"; {elapsed:.0f}s")
    assert ok, problems