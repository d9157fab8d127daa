import math
import random
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reveal.domain import FactorAssessment, GroundTruth, HolisticVerdict, canonical_factors
from reveal.errors import DegenerateRocError
from reveal.metrics import (
    ConfusionCounts,
    classification_metrics,
    confusion_counts,
    roc_curve,
    tampering_score,
    tampering_score_from_scores,
    trapezoid_area,
)

from .oracles import concordance, count_oracle

T, A = GroundTruth.TAMPERED, GroundTruth.AUTHENTIC


def verdict(scores):
    return HolisticVerdict(
        tuple(FactorAssessment(f, s, "x") for f, s in zip(canonical_factors(), scores)), T
    )


@pytest.mark.parametrize(
    "scores, expected",
    [((1,) * 8, 0.0), ((5,) * 8, 1.0), ((1, 2, 3, 4, 5, 1, 2, 3), 0.40625), ((3,) * 8, 0.5)],
)
def test_tampering_score_examples(scores, expected):
    assert tampering_score(verdict(scores)) == expected


def test_tampering_score_rejects_bad_vectors():
    with pytest.raises(ValueError):
        tampering_score_from_scores([3] * 7)
    with pytest.raises(ValueError):
        tampering_score_from_scores([3] * 7 + [6])


@given(st.lists(st.integers(1, 5), min_size=8, max_size=8), st.lists(st.integers(0, 4), min_size=8, max_size=8))
def test_tampering_score_monotone(base, bumps):
    higher = [min(5, b + d) for b, d in zip(base, bumps)]
    assert tampering_score_from_scores(higher) >= tampering_score_from_scores(base)


def test_tampering_score_matches_mean_formula_everywhere():
    for scores in product(range(1, 6), repeat=4):
        full = scores + scores[::-1]
        assert tampering_score_from_scores(full) == (sum(full) / 8 - 1) / 4


def test_classification_examples():
    perfect = [(T, T), (A, A), (T, T)]
    assert classification_metrics(perfect)[1:] == (1.0, 1.0)

    mixed = [(T, T)] * 2 + [(A, T)] + [(T, A)] + [(A, A)] * 2
    counts, acc, f1 = classification_metrics(mixed)
    assert counts == ConfusionCounts(tp=2, fp=1, tn=2, fn=1, unparsed=0)
    assert acc == pytest.approx(4 / 6) and f1 == pytest.approx(4 / 6)

    all_authentic = [(T, A), (A, A), (T, A)]
    assert classification_metrics(all_authentic)[2] == 0.0


def test_unparsed_counts_against_accuracy_only():
    counts, acc, f1 = classification_metrics([(T, T), (A, A), (T, None), (A, None)])
    assert counts.unparsed == 2 and counts.total == 4
    assert acc == 0.5
    assert f1 == 1.0


def test_empty_records_rejected():
    with pytest.raises(ValueError):
        classification_metrics([])


def test_counts_merge_is_fieldwise():
    a, b = ConfusionCounts(1, 2, 3, 4, 5), ConfusionCounts(10, 20, 30, 40, 50)
    assert a + b == ConfusionCounts(11, 22, 33, 44, 55)


def _random_records(rng, n):
    return [(rng.choice([T, A]), rng.choice([T, A, None])) for _ in range(n)]


def test_classification_matches_counting_oracle():
    rng = random.Random(3)
    for _ in range(300):
        records = _random_records(rng, rng.randint(1, 1000))
        counts, acc, f1 = classification_metrics(records)
        cells, o_acc, o_f1 = count_oracle(records)
        assert (counts.tp, counts.fp, counts.tn, counts.fn, counts.unparsed) == tuple(cells.values())
        assert acc == pytest.approx(float(o_acc), abs=1e-12)
        assert f1 == pytest.approx(float(o_f1), abs=1e-12)


def test_partition_merge_equals_whole():
    rng = random.Random(4)
    records = _random_records(rng, 500)
    parts = [records[:100], records[100:333], records[333:]]
    merged = sum((confusion_counts(p) for p in parts), ConfusionCounts())
    assert merged == confusion_counts(records)


@pytest.mark.parametrize(
    "pos, neg, expected",
    [([0.9, 0.8], [0.1, 0.2], 1.0), ([0.5, 0.5], [0.5, 0.5], 0.5), ([0.8, 0.4], [0.6, 0.2], 0.75)],
)
def test_auc_examples(pos, neg, expected):
    curve = roc_curve([(T, s) for s in pos] + [(A, s) for s in neg])
    assert curve.auc == pytest.approx(expected, abs=1e-12)


def test_curve_shape():
    rng = random.Random(8)
    scored = [(rng.choice([T, A]), rng.randint(0, 32) / 32) for _ in range(150)] + [(T, 0.5), (A, 0.5)]
    curve = roc_curve(scored)
    assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    assert xs == sorted(xs) and ys == sorted(ys)
    assert curve.auc == trapezoid_area(curve.points)


def test_auc_matches_concordance():
    rng = random.Random(9)
    for _ in range(200):
        n = rng.randint(2, 200)
        scored = [(T, rng.randint(0, 32) / 32), (A, rng.randint(0, 32) / 32)]
        scored += [(rng.choice([T, A]), rng.choice([rng.random(), rng.randint(0, 32) / 32])) for _ in range(n - 2)]
        assert abs(roc_curve(scored).auc - float(concordance(scored))) < 1e-9


@given(
    st.lists(st.tuples(st.sampled_from([T, A]), st.integers(0, 32)), min_size=2, max_size=80).filter(
        lambda xs: {t for t, _ in xs} == {T, A}
    )
)
def test_auc_invariant_under_increasing_transform(pairs):
    raw = [(t, s / 32) for t, s in pairs]
    warped = [(t, math.exp(3 * s) - 7) for t, s in raw]
    assert roc_curve(raw).auc == pytest.approx(roc_curve(warped).auc, abs=1e-12)


@pytest.mark.parametrize("scored", [[(T, 0.3), (T, 0.9)], [(A, 0.1)], []])
def test_single_class_is_degenerate(scored):
    with pytest.raises(DegenerateRocError):
        roc_curve(scored)


def test_roc_csv(tmp_path):
    curve = roc_curve([(T, 0.8), (T, 0.4), (A, 0.6), (A, 0.2)])
    path = tmp_path / "roc.csv"
    curve.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "fpr,tpr"
    assert lines[1] == "0.0,0.0" and lines[-1] == "1.0,1.0"
    assert len(lines) == 1 + len(curve.points)
