"""Shared test utilities: brute-force oracles and tiny fixture builders.

The enumeration oracle scores every one of the J^L label sequences of a
document directly from the expected-log parameters, so it shares no code
path with the forward-backward or Viterbi implementations it checks.
"""

from __future__ import annotations

import itertools

import numpy as np

from crowdseq.corpus import AnnotationSet, Corpus, Document
from crowdseq.scheme import LabelScheme


def enumerate_chain(eln_t: np.ndarray, ll: np.ndarray, outside: int = 0):
    """Exact posterior of a start-anchored chain by full enumeration.

    Returns (r, s, log_partition, best_path, best_score).  The best path
    breaks score ties exactly like backtracking Viterbi with lowest-index
    preference: among optimal sequences it minimises the reversed label
    tuple.
    """
    length, j = ll.shape
    seqs = list(itertools.product(range(j), repeat=length))
    scores = np.empty(len(seqs))
    for i, seq in enumerate(seqs):
        score = eln_t[outside, seq[0]] + ll[0, seq[0]]
        for tau in range(1, length):
            score += eln_t[seq[tau - 1], seq[tau]] + ll[tau, seq[tau]]
        scores[i] = score

    peak = scores.max()
    weights = np.exp(scores - peak)
    logz = peak + np.log(weights.sum())
    probs = weights / weights.sum()

    r = np.zeros((length, j))
    s = np.zeros((length - 1, j, j)) if length > 1 else np.zeros((0, j, j))
    for seq, p in zip(seqs, probs):
        for tau, label in enumerate(seq):
            r[tau, label] += p
        for tau in range(1, length):
            s[tau - 1, seq[tau - 1], seq[tau]] += p

    best_score = scores.max()
    optimal = [seq for seq, sc in zip(seqs, scores) if sc == best_score]
    best = min(optimal, key=lambda seq: tuple(reversed(seq)))
    return r, s, logz, np.array(best), best_score


def enumerate_independent(eln_p: np.ndarray, ll: np.ndarray):
    """Exact posterior for the independent-token (no transitions) model."""
    scores = eln_p[None, :] + ll
    peak = scores.max(axis=1, keepdims=True)
    weights = np.exp(scores - peak)
    r = weights / weights.sum(axis=1, keepdims=True)
    logz = float((peak[:, 0] + np.log(weights.sum(axis=1))).sum())
    best = scores.argmax(axis=1)
    best_score = float(scores.max(axis=1).sum())
    return r, logz, best, best_score


def tiny_corpus(doc_lengths, vocab_size=5, seed=0) -> Corpus:
    rng = np.random.default_rng(seed)
    docs = tuple(Document(f"d{i}", rng.integers(0, vocab_size, size=length))
                 for i, length in enumerate(doc_lengths))
    vocab = {f"w{i}": i for i in range(vocab_size)}
    return Corpus(docs=docs, vocab=vocab)


def random_annotations(corpus: Corpus, scheme: LabelScheme, num_annotators,
                       seed=0, coverage=1.0) -> AnnotationSet:
    rng = np.random.default_rng(seed)
    entries = {}
    for doc in corpus.docs:
        ks = [k for k in range(num_annotators) if rng.random() < coverage]
        if not ks:
            ks = [int(rng.integers(num_annotators))]
        for k in ks:
            entries[(k, doc.doc_id)] = rng.integers(0, scheme.J, size=len(doc))
    return AnnotationSet(num_annotators=num_annotators, entries=entries)


def degenerate_scheme() -> LabelScheme:
    """A single-label scheme (J=1), constructible only directly."""
    return LabelScheme(span_types=(), labels=("O",), disallowed=frozenset())
