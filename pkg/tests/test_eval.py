import json
import re
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from vocotrace.errors import ConfigError, LabelError
from vocotrace.eval import (ConfusionMatrix, MetricsReport, confusion, emit_report, format_summary, macro_f1,
                            metrics, read_confusion_csv, read_metrics_json, render_svg, silhouette, tsne)
from vocotrace.eval.report import SummaryRow
from vocotrace.eval.tsne import Embedding2D, joint_probabilities


def test_confusion_examples():
    cm = confusion(list("AABB"), list("ABBB"), ["A", "B"])
    assert cm.counts.tolist() == [[1, 1], [0, 2]]
    assert confusion(list("ABCA"), list("ABCA"), "ABC").counts.tolist() == np.diag([2, 1, 1]).tolist()
    zero = confusion(list("ABCA"), list("AAAA"), "ABC").counts
    assert np.count_nonzero(zero.sum(axis=0)) == 1
    with pytest.raises(LabelError):
        confusion(["A", "Z"], ["A", "A"], "AB")


def test_hand_computed_metrics():
    rep = metrics(ConfusionMatrix(np.array([[1, 1], [0, 2]]), ("A", "B")))
    a, b = rep.per_class["A"], rep.per_class["B"]
    assert (a.precision, a.recall) == (1.0, 0.5)
    assert a.f1 == pytest.approx(2 / 3, abs=1e-15)
    assert b.precision == pytest.approx(2 / 3, abs=1e-15) and b.recall == 1.0
    assert b.f1 == pytest.approx(0.8, abs=1e-15)
    # exact rational oracle
    f1 = lambda p, r: 2 * p * r / (p + r)  # noqa: E731
    want = (f1(Fraction(1), Fraction(1, 2)) + f1(Fraction(2, 3), Fraction(1))) / 2
    assert want == Fraction(11, 15)
    assert abs(rep.macro.f1 - 11 / 15) < 1e-12
    assert rep.macro.support == 4 and not rep.undefined


def test_zero_denominators_flagged():
    rep = metrics(confusion(list("AAB"), list("AAA"), "AB"))
    assert rep.per_class["B"].precision == 0.0 and rep.per_class["B"].f1 == 0.0
    assert rep.undefined == ["B"]


def test_random_predictions_monte_carlo():
    rng = np.random.default_rng(5)
    y = np.repeat(np.arange(4), 2500)
    pred = rng.integers(0, 4, y.size)
    assert abs(macro_f1(y.tolist(), pred.tolist(), range(4)) - 0.25) <= 0.05


@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=60))
def test_perfect_predictions(y):
    classes = sorted(set(y))
    rep = metrics(confusion(y, y, classes))
    assert rep.macro.f1 == rep.macro.precision == rep.macro.recall == 1.0


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=80), st.permutations(range(4)))
def test_macro_f1_relabel_invariant(pairs, perm):
    t, p = zip(*pairs)
    a = macro_f1(t, p, range(4))
    b = macro_f1([perm[v] for v in t], [perm[v] for v in p], range(4))
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 1.0


def test_silhouette_matches_sklearn(rng):
    X = rng.standard_normal((60, 5)) + np.repeat(np.eye(5)[:3] * 3, 20, axis=0)
    lab = np.repeat([0, 1, 2], 20)
    assert silhouette(X, lab) == pytest.approx(silhouette_score(X, lab), abs=1e-10)


def clusters(rng, n_per=40, dim=256, sep=30.0):
    centres = rng.standard_normal((3, dim)) * sep
    X = np.concatenate([c + rng.standard_normal((n_per, dim)) for c in centres])
    return X, np.repeat(["a", "b", "c"], n_per)


def test_tsne_recovers_clusters(rng):
    X, lab = clusters(rng)
    emb = tsne(X, lab, perplexity=30, iters=1000, seed=0)
    assert emb.coords.shape == (120, 2)
    assert silhouette(emb.coords, lab) > 0.5
    tail = np.array(emb.kl_history[-100:])
    assert np.all(np.diff(tail) <= 1e-6)
    again = tsne(X, lab, perplexity=30, iters=1000, seed=0)
    assert again.coords.tobytes() == emb.coords.tobytes()
    assert emb.kl == pytest.approx(emb.kl_history[-1])


def test_tsne_preconditions(rng):
    with pytest.raises(ConfigError):
        tsne(rng.standard_normal((20, 4)), perplexity=30)
    with pytest.raises(ConfigError):
        tsne(rng.standard_normal((100, 4)), perplexity=10, iters=300)
    with pytest.raises(ValueError):
        Embedding2D(np.array([[np.nan, 0.0]]), ["a"], 0.0)


def test_joint_probabilities_perplexity(rng):
    from vocotrace import _kernels
    X = rng.standard_normal((50, 6))
    P = joint_probabilities(X, 10.0)
    assert P.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(P, P.T)
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    cond = _kernels.conditional_affinities(d2, 10.0)
    np.testing.assert_allclose(cond.sum(axis=1), 1.0, atol=1e-12)
    for row in cond:
        p = row[row > 0]
        assert 2 ** (-(p * np.log2(p)).sum()) == pytest.approx(10.0, rel=1e-3)


def test_report_files(tmp_path, rng):
    y_true = list("PHMS" * 5)
    y_pred = list("PHMS" * 4 + "PPMS")
    cm = confusion(y_true, y_pred, "PHMS")
    rep = metrics(cm)
    X, _ = clusters(rng, n_per=10, dim=8)
    emb = tsne(np.concatenate([X[:20], X[:10] + 5, X[:10] - 5])[:20], y_true, perplexity=5, iters=400)
    paths = emit_report(tmp_path, rep, cm, emb, "V1", {"experiment_id": "V1"}, note="x")
    svg = paths["tsne"].read_text()
    assert svg.count('class="legend-entry"') == 4
    assert 'width="800" height="800"' in svg
    back = read_metrics_json(paths["metrics"])
    assert back.to_dict() == rep.to_dict()
    raw = json.loads(paths["metrics"].read_text())
    assert raw["experiment_id"] == "V1" and set(raw) >= {"classes", "per_class", "macro"}
    cm2 = read_confusion_csv(paths["confusion"])
    assert np.array_equal(cm2.counts, cm.counts) and cm2.classes == cm.classes
    for name, row in zip(cm2.classes, cm2.counts):
        assert row.sum() == raw["per_class"][name]["support"]
    summary = paths["summary"].read_text()
    assert re.search(r"V1\s+\d+\.\d\d\s+\d+\.\d\d\s+\d+\.\d\d\s+x", summary)
    assert MetricsReport.from_dict(rep.to_dict()) == rep


def test_svg_escapes_and_colours(rng):
    emb = Embedding2D(rng.standard_normal((6, 2)), ["<a>", "b&c", "<a>", "d", "e", "f"], 0.1)
    svg = render_svg(emb)
    assert "&lt;a&gt;" in svg and "b&amp;c" in svg
    assert svg.count('class="legend-entry"') == 5


def test_summary_format():
    text = format_summary([SummaryRow("V1", 0.9844, 0.9844, 0.9844), SummaryRow("N3", 0.9, 0.91, 0.9107, "0.9x")])
    lines = text.splitlines()
    assert lines[1].split()[:4] == ["Exp.", "Precision", "Recall", "F1"]
    assert lines[2].split() == ["V1", "98.44", "98.44", "98.44"]
    assert lines[3].split() == ["N3", "90.00", "91.00", "91.07", "0.9x"]
