"""Span- and token-level scoring, an error taxonomy, and model clustering.

Strict scores follow the CoNLL-2003 convention: a predicted span counts
only when start, end and type all match a gold span.  Relaxed scores
grant fractional credit for the overlapping portion of same-type spans.
Cross entropy is the mean negative log posterior of the gold label per
token, with probabilities floored at 1e-12.

The error taxonomy pairs predicted and gold spans greedily by maximal
token overlap (one to one, ties to the earlier gold span, then the
earlier predicted span) and classifies each pair.  Unmatched gold spans
with no overlapping prediction are missed; unmatched gold spans covered
by a prediction that is matched elsewhere are absorbed by that fused
prediction.  Unmatched predictions are counted symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from .scheme import LabelScheme, Span, decode_spans

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ScoreReport:
    """Precision/recall/F1 as percentages plus optional cross entropy."""

    precision: float
    recall: float
    f1: float
    cee: float | None = None


@dataclass(frozen=True)
class ErrorReport:
    exact_match: int = 0
    wrong_type: int = 0
    partial_match: int = 0
    missed_span: int = 0
    false_positive: int = 0
    late_start: int = 0
    early_start: int = 0
    late_finish: int = 0
    early_finish: int = 0
    fused_spans: int = 0
    splits: int = 0
    invalid: int = 0
    length_error: float = 0.0


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _check_aligned(pred: Sequence[np.ndarray], gold: Sequence[np.ndarray]) -> None:
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predicted documents vs {len(gold)} gold")
    for n, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise ValueError(f"length mismatch in document {n}: "
                             f"{len(p)} predicted vs {len(g)} gold tokens")


def _doc_spans(labels_by_doc: Sequence[np.ndarray],
               scheme: LabelScheme) -> tuple[list[list[Span]], int]:
    spans = []
    violations = 0
    for n, labels in enumerate(labels_by_doc):
        doc_spans, bad = decode_spans(labels, scheme, doc_id=str(n))
        spans.append(doc_spans)
        violations += len(bad)
    return spans, violations


def strict_f1(pred: Sequence[np.ndarray], gold: Sequence[np.ndarray],
              scheme: LabelScheme) -> ScoreReport:
    """Exact span matching over aligned label sequences."""
    _check_aligned(pred, gold)
    pred_spans, _ = _doc_spans(pred, scheme)
    gold_spans, _ = _doc_spans(gold, scheme)
    tp = 0
    for p_doc, g_doc in zip(pred_spans, gold_spans):
        gold_set = {(s.start, s.end, s.span_type) for s in g_doc}
        tp += sum((s.start, s.end, s.span_type) in gold_set for s in p_doc)
    num_pred = sum(len(d) for d in pred_spans)
    num_gold = sum(len(d) for d in gold_spans)
    precision = 100.0 * tp / num_pred if num_pred else 0.0
    recall = 100.0 * tp / num_gold if num_gold else 0.0
    return ScoreReport(precision, recall, _f1(precision, recall))


def _overlap(a: Span, b: Span) -> int:
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def _typed_credit(span: Span, others: list[Span]) -> float:
    """Fraction of ``span`` covered by same-type spans from ``others``."""
    covered = np.zeros(span.length, dtype=bool)
    for other in others:
        if other.span_type != span.span_type:
            continue
        lo = max(span.start, other.start)
        hi = min(span.end, other.end)
        if hi > lo:
            covered[lo - span.start:hi - span.start] = True
    return float(covered.sum()) / span.length


def relaxed_f1(pred: Sequence[np.ndarray], gold: Sequence[np.ndarray],
               scheme: LabelScheme) -> ScoreReport:
    """Fractional-overlap span matching over aligned label sequences."""
    _check_aligned(pred, gold)
    pred_spans, _ = _doc_spans(pred, scheme)
    gold_spans, _ = _doc_spans(gold, scheme)
    pred_credit: list[float] = []
    gold_credit: list[float] = []
    for p_doc, g_doc in zip(pred_spans, gold_spans):
        pred_credit.extend(_typed_credit(s, g_doc) for s in p_doc)
        gold_credit.extend(_typed_credit(s, p_doc) for s in g_doc)
    precision = 100.0 * float(np.mean(pred_credit)) if pred_credit else 0.0
    recall = 100.0 * float(np.mean(gold_credit)) if gold_credit else 0.0
    return ScoreReport(precision, recall, _f1(precision, recall))


def cross_entropy(posteriors: Sequence[np.ndarray],
                  gold: Sequence[np.ndarray]) -> float:
    """Mean per-token negative log posterior of the gold label, in nats."""
    _check_aligned(posteriors, gold)
    total = 0.0
    count = 0
    for rows, labels in zip(posteriors, gold):
        probs = np.maximum(rows[np.arange(len(labels)), labels], _PROB_FLOOR)
        total += float(-np.log(probs).sum())
        count += len(labels)
    return total / count if count else 0.0


def token_accuracy(pred: Sequence[np.ndarray],
                   gold: Sequence[np.ndarray]) -> float:
    _check_aligned(pred, gold)
    hits = sum(int(np.sum(np.asarray(p) == np.asarray(g)))
               for p, g in zip(pred, gold))
    total = sum(len(g) for g in gold)
    return hits / total if total else 0.0


def _match_doc(pred: list[Span], gold: list[Span]) -> dict:
    """Greedy one-to-one span matching and classification for one document."""
    out = {key: 0 for key in ("exact_match", "wrong_type", "partial_match",
                              "missed_span", "false_positive", "late_start",
                              "early_start", "late_finish", "early_finish",
                              "fused_spans", "splits")}
    lengths: list[int] = []

    overlaps = []
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred):
            ov = _overlap(p, g)
            if ov > 0:
                overlaps.append((ov, gi, pi))
    overlaps.sort(key=lambda t: (-t[0], t[1], t[2]))

    matched_gold: dict[int, int] = {}
    matched_pred: dict[int, int] = {}
    for ov, gi, pi in overlaps:
        if gi in matched_gold or pi in matched_pred:
            continue
        matched_gold[gi] = pi
        matched_pred[pi] = gi

    gold_touched = {gi for _, gi, _ in overlaps}
    pred_touched = {pi for _, _, pi in overlaps}

    for gi, pi in matched_gold.items():
        g, p = gold[gi], pred[pi]
        lengths.append(abs(p.length - g.length))
        if (p.start, p.end) == (g.start, g.end):
            if p.span_type == g.span_type:
                out["exact_match"] += 1
            else:
                out["wrong_type"] += 1
            continue
        out["partial_match"] += 1
        if p.start > g.start:
            out["late_start"] += 1
        elif p.start < g.start:
            out["early_start"] += 1
        if p.end < g.end:
            out["early_finish"] += 1
        elif p.end > g.end:
            out["late_finish"] += 1

    for gi in range(len(gold)):
        if gi not in matched_gold and gi not in gold_touched:
            out["missed_span"] += 1
    for pi in range(len(pred)):
        if pi not in matched_pred and pi not in pred_touched:
            out["false_positive"] += 1

    for pi, p in enumerate(pred):
        if sum(_overlap(p, g) > 0 for g in gold) >= 2:
            out["fused_spans"] += 1
    for gi, g in enumerate(gold):
        if sum(_overlap(p, g) > 0 for p in pred) >= 2:
            out["splits"] += 1

    out["lengths"] = lengths
    return out


def error_report(pred: Sequence[np.ndarray], gold: Sequence[np.ndarray],
                 scheme: LabelScheme) -> ErrorReport:
    """Classify every span discrepancy between aligned label sequences."""
    _check_aligned(pred, gold)
    pred_spans, violations = _doc_spans(pred, scheme)
    gold_spans, _ = _doc_spans(gold, scheme)

    totals = {key: 0 for key in ("exact_match", "wrong_type", "partial_match",
                                 "missed_span", "false_positive", "late_start",
                                 "early_start", "late_finish", "early_finish",
                                 "fused_spans", "splits")}
    lengths: list[int] = []
    for p_doc, g_doc in zip(pred_spans, gold_spans):
        doc = _match_doc(p_doc, g_doc)
        lengths.extend(doc.pop("lengths"))
        for key, value in doc.items():
            totals[key] += value

    return ErrorReport(length_error=float(np.mean(lengths)) if lengths else 0.0,
                       invalid=violations, **totals)


def cluster_annotators(means: Sequence[np.ndarray], k: int,
                       seed: int = 0) -> tuple[np.ndarray, list[np.ndarray]]:
    """K-means over flattened posterior-mean tensors.

    Returns cluster assignments per annotator plus the mean confusion
    tensor of each cluster, reshaped back to the input shape.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(means):
        raise ValueError(f"k={k} exceeds the {len(means)} annotators")
    shape = np.asarray(means[0]).shape
    features = np.stack([np.asarray(m, dtype=float).ravel() for m in means])
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=100,
                random_state=seed)
    assignments = km.fit_predict(features)
    centers = [features[assignments == c].mean(axis=0).reshape(shape)
               for c in range(k)]
    return assignments, centers
