"""Least-confidence active-learning simulation over a pre-collected pool.

Each iteration trains the chosen aggregator on the annotations acquired so
far, scores the decoded output against gold, then requests one additional
annotator's labels for each of the ``batch_size`` documents the model is
least confident about.  Documents whose pool annotations are exhausted are
ignored when choosing new batches.  Curves are averaged over seeded
repeats; retraining is from scratch each iteration so runs are exactly
reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import baselines
from .corpus import AnnotationSet, Corpus, GoldLabels
from .evaluation import cross_entropy, relaxed_f1, strict_f1, token_accuracy
from .inference import SequencePosterior, VbConfig, run_vb
from .scheme import LabelScheme


@dataclass(frozen=True)
class ALConfig:
    initial_set_size: int = 100
    batch_size: int = 10
    max_no_labels: int = 0
    selector: str = "least_confidence"
    repeats: int = 1
    seed: int = 0

    def validate(self, pool_size: int) -> None:
        if self.initial_set_size < 1 or self.batch_size < 1:
            raise ValueError("initial_set_size and batch_size must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.selector not in ("least_confidence", "random"):
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.initial_set_size > pool_size:
            raise ValueError("initial_set_size exceeds the annotation pool")
        if self.max_no_labels > pool_size:
            raise ValueError("max_no_labels exceeds the annotation pool")


@dataclass
class LearningCurve:
    """Mean per-iteration scores over all repeats."""

    n_labels: np.ndarray
    strict: np.ndarray
    relaxed: np.ndarray
    cee: np.ndarray
    accuracy: np.ndarray

    def __len__(self) -> int:
        return len(self.n_labels)


@dataclass
class AggregationOutput:
    """What the simulator needs from one trained aggregator."""

    rows: Mapping[str, np.ndarray]        # doc id -> (L, J) posterior rows
    decoded: Mapping[str, np.ndarray]     # doc id -> label sequence
    confidence: Mapping[str, float]       # doc id -> P(decoded sequence)


Aggregator = Callable[[Corpus, AnnotationSet], AggregationOutput]


def least_confidence_rank(posterior: SequencePosterior,
                          candidates: Sequence[str]) -> list[str]:
    """Candidates ordered by descending 1 - P(decoded sequence).

    Ties break toward the smaller document id.
    """
    index = {doc_id: n for n, doc_id in enumerate(posterior.doc_ids)}
    lc = {doc_id: 1.0 - posterior.sequence_confidence(index[doc_id])
          for doc_id in candidates}
    return sorted(candidates, key=lambda d: (-lc[d], d))


def _rank(confidence: Mapping[str, float], candidates: Sequence[str]) -> list[str]:
    return sorted(candidates, key=lambda d: (confidence[d], d))


def vb_aggregator(scheme: LabelScheme, config: VbConfig) -> Aggregator:
    """Sequence-model aggregator; unannotated documents are handled natively."""

    def run(corpus: Corpus, annotations: AnnotationSet) -> AggregationOutput:
        result = run_vb(corpus, annotations, scheme, config)
        seq = result.sequence
        ids = seq.doc_ids
        return AggregationOutput(
            rows={d: seq.r[n] for n, d in enumerate(ids)},
            decoded={d: seq.viterbi_paths[n] for n, d in enumerate(ids)},
            confidence={d: seq.sequence_confidence(n) for n, d in enumerate(ids)})

    return run


def baseline_aggregator(name: str, scheme: LabelScheme, **params) -> Aggregator:
    """Token-independent aggregator (``mv``, ``ds`` or ``ibcc``).

    Documents without any acquired annotation fall back to uniform
    posteriors; sequence confidence is the product of per-token maxima,
    which is exact for these models.
    """
    if name not in ("mv", "ds", "ibcc"):
        raise ValueError(f"unknown baseline {name!r}")

    def run(corpus: Corpus, annotations: AnnotationSet) -> AggregationOutput:
        annotated = {d for (_, d) in annotations.entries}
        sub_docs = tuple(doc for doc in corpus.docs if doc.doc_id in annotated)
        rows: dict[str, np.ndarray] = {}
        decoded: dict[str, np.ndarray] = {}
        if sub_docs:
            sub = Corpus(docs=sub_docs, vocab=corpus.vocab)
            if name == "mv":
                table = baselines.majority_vote(sub, annotations, scheme)
            elif name == "ds":
                table = baselines.dawid_skene_em(sub, annotations, scheme,
                                                 **params).table
            else:
                table = baselines.ibcc_vb(sub, annotations, scheme, **params).table
            for n, doc_id in enumerate(table.doc_ids):
                rows[doc_id] = table.rows[n]
                decoded[doc_id] = table.decoded[n]
        for doc in corpus.docs:
            if doc.doc_id not in rows:
                rows[doc.doc_id] = np.full((len(doc), scheme.J), 1.0 / scheme.J)
                decoded[doc.doc_id] = np.zeros(len(doc), dtype=int)
        confidence = {d: float(np.prod(rows[d].max(axis=1)))
                      for d in corpus.doc_ids}
        return AggregationOutput(rows=rows, decoded=decoded, confidence=confidence)

    return run


def _score(out: AggregationOutput, gold: GoldLabels, scheme: LabelScheme):
    ids = gold.doc_ids()
    pred = [out.decoded[d] for d in ids]
    rows = [out.rows[d] for d in ids]
    truth = [gold[d] for d in ids]
    return (strict_f1(pred, truth, scheme).f1,
            relaxed_f1(pred, truth, scheme).f1,
            cross_entropy(rows, truth),
            token_accuracy(pred, truth))


def _initial_set(units: list[tuple[int, str]], size: int,
                 rng: np.random.Generator) -> set[tuple[int, str]]:
    """Document-stratified random draw: sweep documents in random order,
    acquiring one random unused annotation per document per sweep, so the
    initial set spreads over as many documents as its size allows."""
    remaining: dict[str, list[int]] = {}
    for k, doc_id in units:
        remaining.setdefault(doc_id, []).append(k)
    doc_ids = sorted(remaining)
    acquired: set[tuple[int, str]] = set()
    while len(acquired) < size:
        order = rng.permutation(len(doc_ids))
        progressed = False
        for i in order:
            doc_id = doc_ids[i]
            if not remaining[doc_id]:
                continue
            ks = remaining[doc_id]
            k = ks.pop(int(rng.integers(len(ks))))
            acquired.add((k, doc_id))
            progressed = True
            if len(acquired) == size:
                break
        if not progressed:
            break
    return acquired


def _one_repeat(corpus: Corpus, pool: AnnotationSet, gold: GoldLabels,
                scheme: LabelScheme, cfg: ALConfig, aggregator: Aggregator,
                repeat: int) -> list[tuple[float, ...]]:
    units = sorted(pool.entries, key=lambda e: (corpus.doc_index(e[1]), e[0]))
    rng = np.random.default_rng([cfg.seed, repeat])
    acquired = _initial_set(units, cfg.initial_set_size, rng)
    records: list[tuple[float, ...]] = []

    while True:
        current = AnnotationSet(
            num_annotators=pool.num_annotators,
            entries={unit: pool.entries[unit] for unit in acquired})
        out = aggregator(corpus, current)
        records.append((len(acquired),) + _score(out, gold, scheme))

        if len(acquired) >= cfg.max_no_labels or len(acquired) == len(units):
            break
        unused: dict[str, list[int]] = {}
        for k, doc_id in units:
            if (k, doc_id) not in acquired:
                unused.setdefault(doc_id, []).append(k)
        candidates = sorted(unused)
        if cfg.selector == "least_confidence":
            ordered = _rank(out.confidence, candidates)
        else:
            ordered = [candidates[i] for i in rng.permutation(len(candidates))]
        budget = min(cfg.batch_size, cfg.max_no_labels - len(acquired))
        for doc_id in ordered[:budget]:
            acquired.add((min(unused[doc_id]), doc_id))
    return records


def simulate(corpus: Corpus, pool: AnnotationSet, gold: GoldLabels,
             scheme: LabelScheme, cfg: ALConfig, aggregator: Aggregator,
             n_workers: int = 1) -> LearningCurve:
    """Run the simulation for every repeat and average the curves."""
    cfg.validate(len(pool.entries))
    if cfg.max_no_labels < 1:
        cfg = replace(cfg, max_no_labels=len(pool.entries))

    def job(rep: int):
        return _one_repeat(corpus, pool, gold, scheme, cfg, aggregator, rep)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool_exec:
            all_records = list(pool_exec.map(job, range(cfg.repeats)))
    else:
        all_records = [job(rep) for rep in range(cfg.repeats)]

    length = min(len(rec) for rec in all_records)
    stacked = np.array([rec[:length] for rec in all_records])  # (R, T, 5)
    mean = stacked.mean(axis=0)
    return LearningCurve(n_labels=mean[:, 0], strict=mean[:, 1],
                         relaxed=mean[:, 2], cee=mean[:, 3],
                         accuracy=mean[:, 4])
