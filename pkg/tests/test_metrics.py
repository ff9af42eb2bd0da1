from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy import integrate, stats
from sklearn.metrics import normalized_mutual_info_score

from resample_kernel.errors import ConfigError, ContractError
from resample_kernel.metrics import MetricsReport, RunMetrics, accuracy, nmi, optimal_assignment, two_tailed_ttest


def _nmi_oracle(a: list[int], b: list[int], average: str = "geometric") -> float:
    n = len(a)
    pa = {x: a.count(x) / n for x in set(a)}
    pb = {y: b.count(y) / n for y in set(b)}
    pab: dict[tuple[int, int], float] = {}
    for x, y in zip(a, b):
        pab[(x, y)] = pab.get((x, y), 0.0) + 1.0 / n
    h_a = -sum(p * math.log(p) for p in pa.values())
    h_b = -sum(p * math.log(p) for p in pb.values())
    if h_a == 0 and h_b == 0:
        return 1.0
    if h_a == 0 or h_b == 0:
        return 0.0
    mi = sum(p * math.log(p / (pa[x] * pb[y])) for (x, y), p in pab.items())
    return mi / (math.sqrt(h_a * h_b) if average == "geometric" else (h_a + h_b) / 2)


def _acc_oracle(pred: list[int], truth: list[int]) -> float:
    size = max(max(pred), max(truth)) + 1
    best = 0
    for perm in itertools.permutations(range(size)):
        best = max(best, sum(1 for p, t in zip(pred, truth) if perm[p] == t))
    return best / len(pred)


def test_metrics_match_oracles_on_all_small_labelings() -> None:
    labelings = [list(v) for v in itertools.product(range(3), repeat=4)]
    for a in labelings:
        for b in labelings:
            assert abs(nmi(a, b) - _nmi_oracle(a, b)) <= 1e-12
            assert abs(accuracy(a, b) - _acc_oracle(a, b)) <= 1e-12


def test_metrics_match_oracles_on_random_labelings() -> None:
    rng = np.random.default_rng(99)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        a = rng.integers(0, 3, n).tolist()
        b = rng.integers(0, 3, n).tolist()
        assert abs(nmi(a, b, average="arithmetic") - _nmi_oracle(a, b, "arithmetic")) <= 1e-12
        assert abs(accuracy(a, b) - _acc_oracle(a, b)) <= 1e-12


def test_nmi_agrees_with_sklearn() -> None:
    rng = np.random.default_rng(5)
    a = rng.integers(0, 4, 200)
    b = rng.integers(0, 3, 200)
    assert nmi(a, b) == pytest.approx(normalized_mutual_info_score(a, b, average_method="geometric"), abs=1e-12)
    assert nmi(a, b, "arithmetic") == pytest.approx(
        normalized_mutual_info_score(a, b, average_method="arithmetic"), abs=1e-12
    )


def test_nmi_is_exactly_symmetric_and_permutation_invariant() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.integers(0, 5, 40)
        b = rng.integers(0, 4, 40)
        assert nmi(a, b) == nmi(b, a)
        assert nmi(a, b) == pytest.approx(nmi((a + 2) % 5, b), abs=1e-12)
    assert nmi([0, 0, 1, 1], [5, 5, 9, 9]) == pytest.approx(1.0)


def test_nmi_trivial_partitions() -> None:
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert nmi([0, 0, 0], [0, 1, 1]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)


def test_metric_inputs_must_align() -> None:
    with pytest.raises(ContractError):
        nmi([0, 1], [0, 1, 1])
    with pytest.raises(ContractError):
        accuracy([0, 1], [0])


def test_accuracy_examples() -> None:
    assert accuracy([0, 0, 1, 1, 1], [0, 0, 0, 1, 1]) == pytest.approx(0.8)
    assert accuracy([0, 1, 2], [0, 0, 0]) == pytest.approx(1 / 3)
    assert accuracy([2, 2, 0, 0], [0, 0, 1, 1]) == 1.0


def test_assignment_matches_exhaustive_search() -> None:
    rng = np.random.default_rng(7)
    for _ in range(500):
        rows, cols = (int(x) for x in rng.integers(1, 8, 2))
        cost = rng.integers(0, 4, (rows, cols)).astype(float)
        size = max(rows, cols)
        square = np.zeros((size, size))
        square[:rows, :cols] = cost
        perms = np.array(list(itertools.permutations(range(size))))
        totals = square[np.arange(size), perms].sum(axis=1)
        best = totals.min()
        # permutations() enumerates in lexicographic order
        first = tuple(int(c) for c in perms[int(np.flatnonzero(totals == best)[0])])

        result = optimal_assignment(cost)
        assert abs(result.cost - best) <= 1e-12
        assert result.columns == first
        assert abs(optimal_assignment(cost, canonical=False).cost - best) <= 1e-12


def test_assignment_mapping_drops_padding_rows() -> None:
    result = optimal_assignment(np.array([[5.0, 1.0, 3.0]]))
    assert result.mapping(rows=1) == {0: 1}
    assert result.cost == 1.0


def _welch_oracle(a: np.ndarray, b: np.ndarray) -> float:
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    tail, _ = integrate.quad(lambda x: stats.t.pdf(x, df), abs(t), np.inf, epsabs=1e-13, epsrel=1e-12)
    return 2 * tail


def test_ttest_matches_integrated_t_distribution() -> None:
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.normal(0.6, 0.05, int(rng.integers(2, 12)))
        b = rng.normal(0.62, 0.08, int(rng.integers(2, 12)))
        result = two_tailed_ttest(a, b)
        assert result.p_value == pytest.approx(_welch_oracle(a, b), rel=1e-6, abs=1e-10)
        assert result.significant == (result.p_value < 0.05)


def test_ttest_zero_variance_cases() -> None:
    same = two_tailed_ttest([0.5] * 10, [0.5] * 10)
    assert same.p_value == 1.0 and not same.significant
    apart = two_tailed_ttest([0.6394] * 10, [0.4288] * 10)
    assert apart.p_value == 0.0 and apart.significant


def test_ttest_needs_two_values_per_sample() -> None:
    with pytest.raises(ConfigError):
        two_tailed_ttest([0.5], [0.4, 0.6])


def test_metrics_report_statistics() -> None:
    report = MetricsReport.from_runs([RunMetrics(0.5, 0.7), RunMetrics(0.7, 0.9)], failures=[(2, "boom")])
    assert report.nmi_mean == pytest.approx(0.6)
    assert report.nmi_sd == pytest.approx(math.sqrt(0.02))
    assert report.runs == 2
    assert report.summary()["failed"] == 1
    single = MetricsReport.from_runs([RunMetrics(0.4, 0.5)])
    assert single.single_run and single.acc_sd == 0.0
    assert math.isnan(MetricsReport.from_runs([]).nmi_mean)
