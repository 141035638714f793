"""Synthetic corpora sampled from the generative model.

Draws a transition matrix and per-label word distributions from fixed
Dirichlets (with disallowed transitions forced to zero), samples each
annotator's noise parameters around a target accuracy, then samples true
labels, tokens and annotations ancestrally.  Deterministic for a fixed
seed; used heavily by the tests and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from .annotators import ModelKind
from .corpus import AnnotationSet, Corpus, Document, GoldLabels
from .scheme import LabelScheme

# Dirichlet concentrations for the corpus-level parameters and the spread
# of per-annotator parameters around the requested accuracy.
_TRANSITION_CONC = 3.0
_OBSERVATION_CONC = 1.0
_ANNOTATOR_CONC = 250.0


def synth_generate(scheme: LabelScheme, num_docs: int, doc_len: int,
                   num_annotators: int, model_kind: ModelKind | str,
                   diag_mass: float, seed: int,
                   vocab_size: int = 25) -> tuple[Corpus, AnnotationSet, GoldLabels]:
    """Sample a corpus, full annotation pool and gold labels.

    ``diag_mass`` is each annotator's expected probability of emitting the
    correct label; ``diag_mass`` of exactly 1.0 yields noiseless annotators.
    """
    kind = ModelKind(model_kind)
    if min(num_docs, doc_len, num_annotators) < 1:
        raise ValueError("num_docs, doc_len and num_annotators must be >= 1")
    j = scheme.J
    if diag_mass != 1.0 and not (1.0 / j < diag_mass < 1.0):
        raise ValueError(f"diag_mass must lie in (1/{j}, 1]")
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")

    rng = np.random.default_rng(seed)
    transition = _sample_transitions(rng, scheme)
    observation = rng.dirichlet(np.full(vocab_size, _OBSERVATION_CONC), size=j)
    emitters = [_sample_annotator(rng, kind, scheme, diag_mass)
                for _ in range(num_annotators)]

    docs = []
    gold: dict[str, np.ndarray] = {}
    entries: dict[tuple[int, str], np.ndarray] = {}
    width = len(str(num_docs - 1))
    for n in range(num_docs):
        doc_id = f"d{n:0{width}d}"
        labels = np.empty(doc_len, dtype=int)
        prev = scheme.outside_index
        for tau in range(doc_len):
            prev = _choice(rng, transition[prev])
            labels[tau] = prev
        tokens = np.array([_choice(rng, observation[t]) for t in labels])
        docs.append(Document(doc_id, tokens))
        gold[doc_id] = labels
        for k, emit in enumerate(emitters):
            entries[(k, doc_id)] = emit(rng, labels)

    vocab = {f"w{i}": i for i in range(vocab_size)}
    corpus = Corpus(docs=tuple(docs), vocab=vocab)
    annotations = AnnotationSet(num_annotators=num_annotators, entries=entries)
    return corpus, annotations, GoldLabels(labels=gold)


def _choice(rng: np.random.Generator, probs: np.ndarray) -> int:
    return int(rng.choice(probs.size, p=probs))


def _sample_transitions(rng: np.random.Generator,
                        scheme: LabelScheme) -> np.ndarray:
    """Rows of the true-label transition matrix; disallowed cells are 0."""
    j = scheme.J
    rows = np.zeros((j, j))
    for frm in range(j):
        allowed = np.flatnonzero(scheme.allowed_mask[frm])
        rows[frm, allowed] = rng.dirichlet(np.full(allowed.size, _TRANSITION_CONC))
    return rows


def _row_around(rng: np.random.Generator, mean: np.ndarray) -> np.ndarray:
    """A Dirichlet sample with the given mean; degenerate means pass through."""
    support = mean > 0
    if support.sum() <= 1:
        return mean.copy()
    out = np.zeros_like(mean)
    out[support] = rng.dirichlet(mean[support] * _ANNOTATOR_CONC)
    return out


def _beta_around(rng: np.random.Generator, mean: float) -> float:
    if mean >= 1.0:
        return 1.0
    return float(rng.beta(mean * _ANNOTATOR_CONC, (1.0 - mean) * _ANNOTATOR_CONC))


def _sample_annotator(rng: np.random.Generator, kind: ModelKind,
                      scheme: LabelScheme, diag_mass: float):
    """Returns emit(rng, gold_labels) -> annotation sequence for one worker."""
    j = scheme.J
    outside = scheme.outside_index

    if kind is ModelKind.ACC:
        pi = _beta_around(rng, diag_mass)

        def emit(rng, labels):
            out = labels.copy()
            wrong = rng.random(labels.size) >= pi
            for tau in np.flatnonzero(wrong):
                others = [i for i in range(j) if i != labels[tau]]
                out[tau] = others[rng.integers(len(others))]
            return out

    elif kind is ModelKind.SPAM:
        pi = _beta_around(rng, diag_mass)
        xi = rng.dirichlet(np.ones(j))

        def emit(rng, labels):
            out = labels.copy()
            spam = rng.random(labels.size) >= pi
            for tau in np.flatnonzero(spam):
                out[tau] = _choice(rng, xi)
            return out

    elif kind is ModelKind.CV:
        pi = np.array([_beta_around(rng, diag_mass) for _ in range(j)])

        def emit(rng, labels):
            out = labels.copy()
            wrong = rng.random(labels.size) >= pi[labels]
            for tau in np.flatnonzero(wrong):
                others = [i for i in range(j) if i != labels[tau]]
                out[tau] = others[rng.integers(len(others))]
            return out

    elif kind is ModelKind.CM:
        rows = np.empty((j, j))
        for true in range(j):
            mean = np.full(j, (1.0 - diag_mass) / (j - 1) if j > 1 else 0.0)
            mean[true] = diag_mass
            rows[true] = _row_around(rng, mean)

        def emit(rng, labels):
            return np.array([_choice(rng, rows[t]) for t in labels])

    elif kind is ModelKind.SEQ:
        # One categorical row per (true label, previous annotation).  Mass
        # diag_mass sits on the true label when reachable from the previous
        # annotation, otherwise on its B- counterpart; disallowed targets
        # stay at exactly zero.
        rows = np.zeros((j, j, j))
        for true in range(j):
            for prev in range(j):
                allowed = scheme.allowed_mask[prev]
                target = true
                if not allowed[target]:
                    target = scheme.begin_index(scheme.span_type_of(true))
                mean = np.zeros(j)
                others = [i for i in range(j) if allowed[i] and i != target]
                if others:
                    mean[others] = (1.0 - diag_mass) / len(others)
                mean[target] = diag_mass if others else 1.0
                rows[true, prev] = _row_around(rng, mean)

        def emit(rng, labels):
            out = np.empty(labels.size, dtype=int)
            prev = outside
            for tau, true in enumerate(labels):
                prev = _choice(rng, rows[true, prev])
                out[tau] = prev
            return out

    else:  # pragma: no cover - exhaustive over ModelKind
        raise ValueError(f"unsupported model kind {kind!r}")

    return emit
