"""Release acceptance gate.

One test per release criterion, each printing a single [PASS]/[FAIL]
line with the measured evidence (run with `pytest tests/test_acceptance.py -s`
to see the lines stream). Every check drives the public API end to end
at the stated scale and tolerance; nothing here is mocked or stubbed.
"""

import math
import time

import numpy as np
import pytest

from bdcert.certify import ldp_lower_bound
from bdcert.conformal import CalibrationSet, conformal_pvalue
from bdcert.experiments import (
    ExperimentConfig,
    run_certification_pipeline,
    run_fpr_validation,
    run_ldp_monotonicity,
)
from bdcert.fpr import asymptotic_fpr_level, fpr_beta_bound
from bdcert.models import (
    BayesBoundarySpec,
    TrainingConfig,
    make_bayes_classifier,
    make_blob_dataset,
    make_linear_classifier,
    train_feedforward,
)
from bdcert.smoothing import NoiseStream, estimate_slpv, ldp_from_slpvs
from bdcert.statfun import (
    gaussian_cdf,
    gaussian_quantile,
    regularized_incomplete_beta,
)


def _report(number, label, ok, detail, elapsed, budget):
    within = elapsed <= budget
    status = "PASS" if (ok and within) else "FAIL"
    line = (f"[{status}] criterion {number:2d}: {label} "
            f"({detail}; {elapsed:.1f}s of {budget:.0f}s budget)")
    print(line)
    assert ok and within, line


# -------------------------------------------------- criterion 1: LDP floor


def test_criterion_01_ldp_floor():
    start = time.perf_counter()
    gen = np.random.default_rng(101)
    evaluations = 0
    low = math.inf
    high = -math.inf

    def evaluate(model, K, dim, tag):
        nonlocal evaluations, low, high
        for sample_set in range(2):
            xs = gen.standard_normal((K, dim))
            for sigma in (0.4, 1.3):
                slpvs = [
                    estimate_slpv(model, xs[k], sigma, 192,
                                  stream=NoiseStream(11, (tag, sample_set,
                                                          int(sigma * 10), k)))
                    for k in range(K)
                ]
                ldp = ldp_from_slpvs(slpvs)
                assert 1.0 / K <= ldp.value <= 1.0, (tag, ldp.value, K)
                evaluations += 1
                low = min(low, ldp.value)
                high = max(high, ldp.value)

    tag = 0
    for _ in range(60):  # random linear models
        K = int(gen.integers(2, 7))
        dim = int(gen.integers(2, 10))
        model = make_linear_classifier(gen.standard_normal((K, dim)),
                                       gen.standard_normal(K))
        evaluate(model, K, dim, tag)
        tag += 1
    for _ in range(50):  # two-Gaussian density-ratio models
        dim = int(gen.integers(1, 5))
        spec = BayesBoundarySpec(
            mean_a=gen.standard_normal(dim), mean_b=gen.standard_normal(dim),
            cov_a=np.eye(dim) * float(gen.uniform(0.5, 2.0)),
            cov_b=np.eye(dim) * float(gen.uniform(0.5, 2.0)),
            boundary_ratio=float(gen.uniform(1.0, 3.0)),
        )
        evaluate(make_bayes_classifier(spec), 2, dim, tag)
        tag += 1
    for i in range(25):  # constant classifiers: LDP exactly 1
        K = int(gen.integers(2, 7))
        dim = int(gen.integers(2, 8))
        label = int(gen.integers(1, K + 1))
        biases = np.zeros(K)
        biases[label - 1] = 1.0
        model = make_linear_classifier(np.zeros((K, dim)), biases)
        xs = gen.standard_normal((K, dim))
        slpvs = [estimate_slpv(model, xs[k], 0.9, 192,
                               stream=NoiseStream(12, (i, k)))
                 for k in range(K)]
        ldp = ldp_from_slpvs(slpvs)
        assert ldp.value == 1.0 and ldp.dominant_class == label
        evaluations += 1
        high = max(high, ldp.value)
    for i in range(10):  # trained nets, plus their exact one-hot limit
        K, dim = 4, 8
        data = make_blob_dataset(K, dim, 30, 0.3, seed=900 + i)
        model = train_feedforward(
            data, TrainingConfig(hidden_sizes=(8,), epochs=15,
                                 learning_rate=0.1, batch_size=16),
            seed=i,
        )
        evaluate(model, K, dim, 1000 + i)
        # sigma = 0 with one sample of each predicted class: every SLPV is
        # an exact one-hot, so the averaged maximum is exactly 1/K
        per_class = [data.features[data.labels == k + 1][0] for k in range(K)]
        preds = [model.classify(x) for x in per_class]
        if sorted(preds) == [1, 2, 3, 4]:
            slpvs = [estimate_slpv(model, per_class[np.argmax(
                np.array(preds) == k + 1)], 0.0, 192,
                stream=NoiseStream(13, (i, k))) for k in range(K)]
            ldp = ldp_from_slpvs(slpvs)
            assert ldp.value == 1.0 / K, ldp.value
            evaluations += 1
            low = min(low, ldp.value)

    _report(1, "LDP statistic floor", evaluations >= 500 and low >= 0.0,
            f"{evaluations} evaluations, range [{low:.4f}, {high:.4f}]",
            time.perf_counter() - start, 60)


# ---------------------------------------- criterion 2: conformal validity


def test_criterion_02_conformal_validity():
    start = time.perf_counter()
    trials = 10_000
    alpha = 0.05
    gen = np.random.default_rng(202)
    alarms = 0
    for _ in range(trials):
        draws = gen.uniform(0.1, 1.0, 101)
        cal = CalibrationSet(values=draws[1:], m=0)
        alarms += conformal_pvalue(cal, draws[0]) <= alpha
    rate = alarms / trials
    exact = 6.0 / 101.0
    band = exact + 3.0 * math.sqrt(exact * (1 - exact) / trials)
    _report(2, "conformal validity at N=100, m=0, alpha=0.05",
            0.0 <= rate <= band,
            f"empirical FPR {rate:.4f}, band [0, {band:.4f}]",
            time.perf_counter() - start, 60)


# ------------------------------------- criterion 3: FPR bound dominance


def test_criterion_03_fpr_dominance_grid():
    start = time.perf_counter()
    report = run_fpr_validation(ExperimentConfig(seed=3))
    cells = {(r["calibration_size"], r["beta_ratio"]): r["holds"]
             for r in report.rows}
    expected = {(n, b) for n in (25, 50, 100) for b in (0.0, 0.1, 0.2)}
    ok = set(cells) == expected and all(cells.values())
    worst = min(r["worst_gap"] for r in report.rows)
    _report(3, "FPR Beta-bound dominance over the 9-cell grid",
            ok, f"all {len(cells)} cells hold, worst gap {worst:.4f}",
            time.perf_counter() - start, 300)


# ------------------------------ criteria 4 + 5: certification soundness


@pytest.fixture(scope="module")
def attack_cohort():
    config = ExperimentConfig(seed=0, shadow_count=100, benign_count=20,
                              attack_count=55)
    started = time.perf_counter()
    report = run_certification_pipeline(config)
    return report, config, time.perf_counter() - started


def test_criterion_04_certification_soundness(attack_cohort):
    report, config, elapsed = attack_cohort
    start = time.perf_counter()
    attacked = [r for r in report.rows if r["role"] == "attacked" and "ldp" in r]
    strong = [r for r in attacked if r["asr"] >= 0.9]
    violations = sum(r["certified"] and not r["alarm"] for r in attacked)
    report.assert_invariants()
    agg = report.aggregates
    ok = (len(strong) >= 50 and violations == 0
          and agg["ctpr"] <= agg["tpr_alarm_only"] + 1e-12
          and agg["soundness_violations"] == 0)
    _report(4, "certification soundness over the attack cohort", ok,
            f"{len(strong)} attacks at ASR >= 0.9, {violations} certified"
            f"-without-alarm, CTPR {agg['ctpr']:.2f} <= alarm TPR "
            f"{agg['tpr_alarm_only']:.2f}",
            elapsed + time.perf_counter() - start, 900)


def test_criterion_05_guaranteed_lower_bound(attack_cohort):
    report, config, _ = attack_cohort
    start = time.perf_counter()
    sigma = report.aggregates["sigma"]
    J = config.sample_count
    checked = 0
    holds = 0
    margin = math.inf
    for row in report.rows:
        if row["role"] != "attacked" or "ldp" not in row:
            continue
        s = row["ldp_value"]
        pi = row["pi"]
        bound = ldp_lower_bound(pi, row["delta"], sigma)
        noise = (3.0 * math.sqrt(s * (1 - s) / J)
                 + 3.0 * math.sqrt(pi * (1 - pi) / J))
        checked += 1
        holds += s >= bound - noise
        margin = min(margin, s - (bound - noise))
    _report(5, "measured LDP respects the guaranteed lower bound",
            checked >= 50 and holds == checked,
            f"{holds}/{checked} within the Monte Carlo band, "
            f"slackest margin {margin:.4f}",
            time.perf_counter() - start, 900)


# ----------------------------- criterion 6: smoothing closed-form oracle


def test_criterion_06_smoothing_oracle_agreement():
    start = time.perf_counter()
    gen = np.random.default_rng(606)
    cases = 200
    J = 1024
    within = 0
    for i in range(cases):
        dim = int(gen.integers(2, 16))
        weights = gen.standard_normal((2, dim))
        biases = gen.standard_normal(2)
        model = make_linear_classifier(weights, biases)
        x = gen.standard_normal(dim)
        sigma = float(gen.uniform(0.3, 2.5))
        w = weights[0] - weights[1]
        b = biases[0] - biases[1]
        exact = gaussian_cdf((w @ x + b) / (sigma * np.linalg.norm(w)))
        est = estimate_slpv(model, x, sigma, J,
                            stream=NoiseStream(66, (i,))).probs[0]
        within += abs(est - exact) <= 4.0 * math.sqrt(exact * (1 - exact) / J)
    _report(6, "Monte Carlo smoothing matches the linear closed form",
            within >= 0.99 * cases, f"{within}/{cases} inside the 4-sigma band",
            time.perf_counter() - start, 60)


# --------------------------------- criterion 7: special-function oracles


def test_criterion_07_special_function_oracles():
    start = time.perf_counter()
    ps = np.concatenate([
        np.geomspace(1e-12, 0.5, 3000),
        1.0 - np.geomspace(1e-12, 0.5, 3000),
    ])
    round_trip = max(abs(gaussian_cdf(gaussian_quantile(p)) - p) for p in ps)

    worst_beta = 0.0
    grid_x = np.linspace(0.0, 1.0, 200_001)
    for a in (1, 2, 5, 10, 50, 100, 200):
        for b in (1, 2, 5, 10, 50, 100, 200):
            log_norm = (math.lgamma(a + b) - math.lgamma(a)
                        - math.lgamma(b))
            density = (np.power(grid_x, a - 1)
                       * np.power(1.0 - grid_x, b - 1) * math.exp(log_norm))
            cumulative = 0.0
            cut = 0
            for z in (0.1, 0.5, 0.9):
                nxt = int(z * (grid_x.size - 1))
                cumulative += np.trapezoid(density[cut:nxt + 1],
                                           grid_x[cut:nxt + 1])
                cut = nxt
                err = abs(regularized_incomplete_beta(a, b, z) - cumulative)
                worst_beta = max(worst_beta, err)

    ok = round_trip <= 1e-8 and worst_beta <= 1e-7
    _report(7, "quantile round trip and incomplete-beta integration", ok,
            f"round-trip error {round_trip:.2e}, beta error {worst_beta:.2e}",
            time.perf_counter() - start, 60)


# ------------------------------------ criterion 8: p-value rank counting


def test_criterion_08_pvalue_rank_oracle():
    start = time.perf_counter()
    gen = np.random.default_rng(808)
    instances = 10_000
    exact = 0
    zero_cases = 0
    for i in range(instances):
        n = int(gen.integers(5, 151))
        m = int(gen.integers(0, n))
        values = np.round(gen.uniform(0.0, 1.0, n), 2)  # coarse: forces ties
        if i % 4 == 0:
            s = float(values[gen.integers(0, n)])  # exact tie with the pool
        elif i % 7 == 0:
            s = 2.0  # strictly above the calibration maximum
        else:
            s = float(gen.uniform(0.0, 1.1))
        cal = CalibrationSet(values=values, m=m)
        kept = n - m
        expected = 1.0 - (1.0 + min(int(np.sum(values < s)), kept)) / (kept + 1.0)
        got = conformal_pvalue(cal, s)
        exact += got == expected
        if s > values.max():
            zero_cases += got == 0.0
    _report(8, "adjusted p-value equals brute-force rank counting",
            exact == instances and zero_cases > 0,
            f"{exact}/{instances} exact, {zero_cases} above-maximum cases at 0",
            time.perf_counter() - start, 10)


# ------------------------------- criterion 9: expected-LDP monotonicity


def test_criterion_09_expected_ldp_monotonicity():
    start = time.perf_counter()
    report = run_ldp_monotonicity([1.0, 1.5, 2.0, 3.0], sigma=1.0,
                                  trials=100_000, seed=9)
    estimates = [row["expected_ldp"] for row in report.rows]
    diffs = report.aggregates["differences"]
    ok = report.aggregates["monotone"] and all(d["nondecreasing"] for d in diffs)
    _report(9, "expected LDP nondecreasing in boundary deviation", ok,
            "estimates " + " -> ".join(f"{e:.4f}" for e in estimates),
            time.perf_counter() - start, 120)


# ----------------------------- criterion 10: FPR probability convergence


def test_criterion_10_bound_probability_convergence():
    start = time.perf_counter()
    tau = asymptotic_fpr_level(0.05, 0.1, 0.02)
    pinned = {
        100: 0.6973202583427592,
        1000: 0.9534487879691014,
        10_000: 0.999999976683775,
    }
    chain = []
    for n, expected in pinned.items():
        bound = fpr_beta_bound(n, round(0.1 * n), 0.05)
        value = float(bound.cdf(tau))
        assert value == pytest.approx(expected, abs=1e-9)
        chain.append(value)
    ok = (all(b >= a for a, b in zip(chain, chain[1:]))
          and chain[-1] >= 0.99)
    _report(10, "P(bound <= tau) grows with calibration size", ok,
            " -> ".join(f"{v:.6f}" for v in chain),
            time.perf_counter() - start, 1)
