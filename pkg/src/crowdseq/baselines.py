"""Non-sequential aggregation baselines: majority vote, EM, and VB.

All three treat tokens independently.  They share output shape (per-token
posterior rows plus a decoded sequence per document) with the sequence
engine so that evaluation is method agnostic.  Ties always break toward
the lower label index, i.e. toward ``O``.

Smoothing in the EM baseline applies to confusion-matrix rows only; class
proportions are plain maximum likelihood.  In the large-smoothing limit
every confusion matrix flattens to uniform and the token posteriors
collapse onto the corpus-level class proportions of the initialising vote
fractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .corpus import AnnotationSet, Corpus
from .scheme import LabelScheme


def _num_labels(scheme: LabelScheme | int) -> int:
    return scheme if isinstance(scheme, int) else scheme.J


@dataclass
class TokenPosteriorTable:
    """Per-token posterior rows and decoded labels, one entry per document."""

    doc_ids: tuple[str, ...]
    rows: list[np.ndarray]
    decoded: list[np.ndarray]

    def row(self, doc_id: str) -> np.ndarray:
        return self.rows[self.doc_ids.index(doc_id)]


@dataclass
class DawidSkeneResult:
    table: TokenPosteriorTable
    confusions: np.ndarray        # (K, J, J) rows over observed labels
    class_proportions: np.ndarray
    converged: bool


@dataclass
class IbccResult:
    table: TokenPosteriorTable
    converged: bool


def _stacked_votes(corpus: Corpus, annotations: AnnotationSet,
                   num_labels: int):
    """Vote-count matrices and per-annotator stacked views of the corpus.

    Returns per-document (L, J) vote counts, plus for every annotator the
    (token offsets, labels) of everything they annotated after per-document
    token sequences are concatenated corpus-wide.
    """
    offsets = np.cumsum([0] + [len(d) for d in corpus.docs])
    total = offsets[-1]
    votes = np.zeros((total, num_labels))
    per_annotator: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(annotations.num_annotators):
        spans = []
        labels = []
        for (kk, doc_id), seq in sorted(annotations.entries.items()):
            if kk != k:
                continue
            i = corpus.doc_index(doc_id)
            spans.append(np.arange(offsets[i], offsets[i + 1]))
            labels.append(seq)
        if spans:
            pos = np.concatenate(spans)
            lab = np.concatenate(labels)
        else:
            pos = np.empty(0, dtype=int)
            lab = np.empty(0, dtype=int)
        per_annotator.append((pos, lab))
        np.add.at(votes, (pos, lab), 1.0)
    return offsets, votes, per_annotator


def _split_rows(corpus: Corpus, offsets: np.ndarray,
                flat: np.ndarray) -> list[np.ndarray]:
    return [flat[offsets[i]:offsets[i + 1]] for i in range(len(corpus.docs))]


def _as_table(corpus: Corpus, offsets: np.ndarray,
              flat: np.ndarray) -> TokenPosteriorTable:
    rows = _split_rows(corpus, offsets, flat)
    decoded = [row.argmax(axis=1) for row in rows]
    return TokenPosteriorTable(doc_ids=corpus.doc_ids, rows=rows, decoded=decoded)


def majority_vote(corpus: Corpus, annotations: AnnotationSet,
                  scheme: LabelScheme | int) -> TokenPosteriorTable:
    """Vote-fraction posteriors among the annotators of each document."""
    j = _num_labels(scheme)
    offsets, votes, _ = _stacked_votes(corpus, annotations, j)
    totals = votes.sum(axis=1)
    if np.any(totals == 0):
        bad = int(np.flatnonzero(totals == 0)[0])
        doc = int(np.searchsorted(offsets, bad, side="right")) - 1
        raise ValueError(f"no annotations for document "
                         f"{corpus.docs[doc].doc_id!r}, token {bad - offsets[doc]}")
    return _as_table(corpus, offsets, votes / totals[:, None])


def dawid_skene_em(corpus: Corpus, annotations: AnnotationSet,
                   scheme: LabelScheme | int, smoothing: float = 0.1,
                   max_iters: int = 100, tol: float = 1e-6) -> DawidSkeneResult:
    """Classic confusion-matrix EM initialised from vote fractions."""
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    j = _num_labels(scheme)
    offsets, votes, per_annotator = _stacked_votes(corpus, annotations, j)
    num_k = annotations.num_annotators

    r = votes / votes.sum(axis=1, keepdims=True)
    confusions = np.empty((num_k, j, j))
    proportions = np.empty(j)
    converged = False

    for _ in range(max_iters):
        # M step: ML class proportions, smoothed confusion rows.
        proportions = r.mean(axis=0)
        for k, (pos, lab) in enumerate(per_annotator):
            mass = np.full((j, j), smoothing)
            np.add.at(mass.T, lab, r[pos])
            row_sums = mass.sum(axis=1, keepdims=True)
            uniform = np.full(j, 1.0 / j)
            confusions[k] = np.where(row_sums > 0, mass / np.where(
                row_sums > 0, row_sums, 1.0), uniform)
        # E step: independent per-token Bayes rule.
        scores = np.tile(proportions, (r.shape[0], 1))
        for k, (pos, lab) in enumerate(per_annotator):
            scores[pos] *= confusions[k][:, lab].T
        sums = scores.sum(axis=1, keepdims=True)
        new_r = np.where(sums > 0, scores / np.where(sums > 0, sums, 1.0),
                         np.full(j, 1.0 / j))
        delta = float(np.abs(new_r - r).max())
        r = new_r
        if delta < tol:
            converged = True
            break

    return DawidSkeneResult(table=_as_table(corpus, offsets, r),
                            confusions=confusions,
                            class_proportions=proportions,
                            converged=converged)


def ibcc_vb(corpus: Corpus, annotations: AnnotationSet,
            scheme: LabelScheme | int, alpha0: float = 1.0,
            epsilon0: float = 1.0, class_prior0: float = 1.0,
            max_iters: int = 200, tol: float = 1e-4) -> IbccResult:
    """Fully Bayesian confusion-matrix aggregation by coordinate ascent.

    Dirichlet priors sit on the class proportions (symmetric
    ``class_prior0``) and on every per-annotator confusion row (``alpha0``
    everywhere plus ``epsilon0`` on the diagonal).  Expectations enter via
    digammas; iteration stops when token posteriors move less than ``tol``.
    """
    if min(alpha0, class_prior0) <= 0 or epsilon0 < 0:
        raise ValueError("priors must be positive (epsilon0 may be zero)")
    j = _num_labels(scheme)
    offsets, _, per_annotator = _stacked_votes(corpus, annotations, j)
    num_k = annotations.num_annotators
    num_tokens = offsets[-1]

    prop_prior = np.full(j, class_prior0)
    cm_prior = np.full((j, j), alpha0)
    cm_prior[np.arange(j), np.arange(j)] += epsilon0

    prop_counts = prop_prior.copy()
    cm_counts = np.tile(cm_prior, (num_k, 1, 1))

    def expectations():
        eln_p = digamma(prop_counts) - digamma(prop_counts.sum())
        eln_cm = digamma(cm_counts) - digamma(cm_counts.sum(axis=2))[:, :, None]
        return eln_p, eln_cm

    def e_step(eln_p, eln_cm):
        log_scores = np.tile(eln_p, (num_tokens, 1))
        for k, (pos, lab) in enumerate(per_annotator):
            log_scores[pos] += eln_cm[k][:, lab].T
        peak = log_scores.max(axis=1, keepdims=True)
        exp = np.exp(log_scores - peak)
        return exp / exp.sum(axis=1, keepdims=True)

    eln_p, eln_cm = expectations()
    r_prev = None
    converged = False
    r = None
    for _ in range(max_iters):
        r = e_step(eln_p, eln_cm)
        delta = np.inf if r_prev is None else float(np.abs(r - r_prev).max())
        if delta < tol:
            converged = True
            break
        r_prev = r
        prop_counts = prop_prior + r.sum(axis=0)
        for k, (pos, lab) in enumerate(per_annotator):
            cm_counts[k] = cm_prior.copy()
            np.add.at(cm_counts[k].T, lab, r[pos])
        eln_p, eln_cm = expectations()

    if not converged:
        r = e_step(eln_p, eln_cm)
        converged = float(np.abs(r - r_prev).max()) < tol

    return IbccResult(table=_as_table(corpus, offsets, r), converged=converged)
