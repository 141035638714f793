"""Variational Bayes aggregation of crowd sequence labels.

The model couples a hidden Markov model over true token labels (Dirichlet
priors on transition rows and, optionally, per-label word distributions)
with one annotator noise model per worker.  Coordinate ascent alternates
a log-space forward-backward pass over every document with exact
conjugate count updates for all parameter factors.  The evidence lower
bound is evaluated after each pass as the sum of document log-partitions
minus the KL divergence of every parameter factor from its prior, which
is exact for this family and therefore non-decreasing across iterations.

Two ablations are supported: ``use_text=False`` drops the word model and
``use_transitions=False`` replaces the Markov chain with independent
class proportions under a single Dirichlet, collapsing the forward-
backward pass to per-token normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import digamma

from .annotators import (AnnotatorPosterior, AnnotatorPriorConfig, ModelKind,
                         dirichlet_kl, init_prior)
from .corpus import AnnotationSet, Corpus
from .scheme import LabelScheme

_DISALLOWED_MASS = 1e-6


class NumericDegeneracyError(RuntimeError):
    """A document position where every label has vanished likelihood."""

    def __init__(self, doc_id: str, position: int):
        super().__init__(f"degenerate posterior at document {doc_id!r}, "
                         f"token {position}")
        self.doc_id = doc_id
        self.position = position


@dataclass
class TransitionPosterior:
    """Dirichlet rows over next-label given current label."""

    counts: np.ndarray
    prior: np.ndarray

    @classmethod
    def from_scheme(cls, scheme: LabelScheme, gamma0: float,
                    disallowed_mass: float = _DISALLOWED_MASS) -> "TransitionPosterior":
        if gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        prior = np.full((scheme.J, scheme.J), gamma0)
        for frm, to in scheme.disallowed:
            prior[frm, to] = disallowed_mass
        return cls(counts=prior.copy(), prior=prior)

    def expected_log(self) -> np.ndarray:
        return digamma(self.counts) - digamma(self.counts.sum(axis=1))[:, None]

    def mean(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def kl_to_prior(self) -> float:
        return sum(dirichlet_kl(c, p) for c, p in zip(self.counts, self.prior))


@dataclass
class ProportionPosterior:
    """Single Dirichlet over class proportions (no-transitions ablation)."""

    counts: np.ndarray
    prior: np.ndarray

    @classmethod
    def from_scheme(cls, scheme: LabelScheme, gamma0: float) -> "ProportionPosterior":
        if gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        prior = np.full(scheme.J, gamma0)
        return cls(counts=prior.copy(), prior=prior)

    def expected_log(self) -> np.ndarray:
        return digamma(self.counts) - digamma(self.counts.sum())

    def mean(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def kl_to_prior(self) -> float:
        return dirichlet_kl(self.counts, self.prior)


@dataclass
class ObservationPosterior:
    """Dirichlet rows over the vocabulary for each true label."""

    counts: np.ndarray
    kappa0: float

    @classmethod
    def create(cls, num_labels: int, vocab_size: int,
               kappa0: float) -> "ObservationPosterior":
        if kappa0 <= 0:
            raise ValueError("kappa0 must be positive")
        return cls(counts=np.full((num_labels, vocab_size), kappa0), kappa0=kappa0)

    def expected_log(self) -> np.ndarray:
        return digamma(self.counts) - digamma(self.counts.sum(axis=1))[:, None]

    def kl_to_prior(self) -> float:
        prior = np.full(self.counts.shape[1], self.kappa0)
        return sum(dirichlet_kl(row, prior) for row in self.counts)


@dataclass(frozen=True)
class VbConfig:
    """Knobs of one aggregation run; defaults are safe general choices."""

    kind: ModelKind = ModelKind.SEQ
    gamma0: float = 1.0
    kappa0: float = 0.1
    prior: AnnotatorPriorConfig = field(default_factory=AnnotatorPriorConfig)
    use_text: bool = True
    use_transitions: bool = True
    convergence_tol: float = 1e-4
    max_iters: int = 200

    def validate(self) -> None:
        self.prior.validate()
        if self.gamma0 <= 0 or self.kappa0 <= 0:
            raise ValueError("gamma0 and kappa0 must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    max_delta_r: float
    elbo: float


@dataclass
class SequencePosterior:
    """Per-document label posteriors and decoded sequences.

    ``s`` holds, per document, the (L-1, J, J) transition posteriors
    between consecutive tokens (``None`` in the no-transitions ablation).
    """

    doc_ids: tuple[str, ...]
    r: list[np.ndarray]
    s: list[np.ndarray] | None
    log_partition: np.ndarray
    viterbi_paths: list[np.ndarray]
    viterbi_scores: np.ndarray

    def sequence_confidence(self, n: int) -> float:
        """Posterior probability of the decoded sequence, clamped to [0, 1]."""
        conf = float(np.exp(self.viterbi_scores[n] - self.log_partition[n]))
        return min(1.0, max(0.0, conf))

    def confidences(self) -> np.ndarray:
        return np.array([self.sequence_confidence(n) for n in range(len(self.r))])


@dataclass
class VbResult:
    sequence: SequencePosterior
    annotators: list[AnnotatorPosterior]
    transitions: TransitionPosterior | None
    proportions: ProportionPosterior | None
    observations: ObservationPosterior | None
    trace: list[IterationRecord]
    converged: bool


def _lse(values: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp that tolerates all -inf slices."""
    peak = values.max(axis=axis)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.exp(values - np.expand_dims(safe, axis)).sum(axis=axis))
    return np.where(np.isfinite(peak), out, -np.inf)


def _softmax(values: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    peak = values.max(axis=axes, keepdims=True)
    exp = np.exp(values - peak)
    return exp / exp.sum(axis=axes, keepdims=True)


@dataclass
class _Group:
    """All documents of one length, stacked for batched recursions."""

    length: int
    doc_indices: np.ndarray          # positions in the corpus
    tokens: np.ndarray               # (B, L) int
    # annotator -> (rows within group, labels (Bk, L), previous labels (Bk, L))
    annos: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]


class VbSequenceAggregator:
    """Coordinate-ascent engine over one corpus and annotation set."""

    def __init__(self, corpus: Corpus, annotations: AnnotationSet,
                 scheme: LabelScheme, config: VbConfig):
        config.validate()
        annotations.validate(corpus, scheme, require_coverage=False)
        self.corpus = corpus
        self.annotations = annotations
        self.scheme = scheme
        self.config = config
        j = scheme.J

        self._groups = self._build_groups()
        self._doc_slot: dict[int, tuple[int, int]] = {}
        for g, group in enumerate(self._groups):
            for row, doc_idx in enumerate(group.doc_indices):
                self._doc_slot[int(doc_idx)] = (g, row)

        self._docs_of_annotator: list[list[tuple[int, np.ndarray]]] = [
            [] for _ in range(annotations.num_annotators)]
        for (k, doc_id), labels in sorted(annotations.entries.items()):
            self._docs_of_annotator[k].append((corpus.doc_index(doc_id), labels))

        self.annotators = init_prior(config.kind, scheme, config.prior,
                                     annotations.num_annotators)
        if config.use_transitions:
            self.transitions: TransitionPosterior | None = \
                TransitionPosterior.from_scheme(scheme, config.gamma0,
                                                config.prior.disallowed_mass)
            self.proportions: ProportionPosterior | None = None
        else:
            self.transitions = None
            self.proportions = ProportionPosterior.from_scheme(scheme, config.gamma0)
        if config.use_text:
            self.observations: ObservationPosterior | None = \
                ObservationPosterior.create(j, corpus.V, config.kappa0)
        else:
            self.observations = None

        self._eln_t: np.ndarray | None = None
        self._eln_p: np.ndarray | None = None
        self._eln_rho: np.ndarray | None = None
        self._last_logz: np.ndarray | None = None
        self.refresh_expectations()

    # -- setup -------------------------------------------------------------

    def _build_groups(self) -> list[_Group]:
        by_len: dict[int, list[int]] = {}
        for idx, doc in enumerate(self.corpus.docs):
            by_len.setdefault(len(doc), []).append(idx)
        doc_row: dict[int, tuple[int, int]] = {}
        groups = []
        for g, length in enumerate(sorted(by_len)):
            indices = np.array(by_len[length], dtype=int)
            tokens = np.stack([self.corpus.docs[i].tokens for i in indices])
            groups.append(_Group(length=length, doc_indices=indices,
                                 tokens=tokens, annos={}))
            for row, idx in enumerate(indices):
                doc_row[int(idx)] = (g, row)

        staged: dict[tuple[int, int], list[tuple[int, np.ndarray]]] = {}
        for (k, doc_id), labels in self.annotations.entries.items():
            g, row = doc_row[self.corpus.doc_index(doc_id)]
            staged.setdefault((g, k), []).append((row, labels))
        for (g, k), items in staged.items():
            items.sort(key=lambda t: t[0])
            rows = np.array([row for row, _ in items], dtype=int)
            labels = np.stack([lab for _, lab in items])
            prev = np.concatenate(
                [np.zeros((rows.size, 1), dtype=int), labels[:, :-1]], axis=1)
            groups[g].annos[k] = (rows, labels, prev)
        return groups

    # -- expectations --------------------------------------------------------

    def refresh_expectations(self) -> None:
        """Rebuild every cached expected-log table from the current counts."""
        for post in self.annotators:
            post.refresh()
        if self.transitions is not None:
            self._eln_t = self.transitions.expected_log()
        if self.proportions is not None:
            self._eln_p = self.proportions.expected_log()
        if self.observations is not None:
            self._eln_rho = self.observations.expected_log()

    # -- batched recursions ----------------------------------------------------

    def _group_ll(self, group: _Group) -> np.ndarray:
        b, length = group.tokens.shape
        j = self.scheme.J
        ll = np.zeros((b, length, j))
        for k in sorted(group.annos):
            rows, labels, prev = group.annos[k]
            table = self.annotators[k].log_table()
            if table.ndim == 3:
                add = table[:, prev, labels]
            else:
                add = table[:, labels]
            ll[rows] += np.moveaxis(add, 0, -1)
        if self.config.use_text:
            ll += np.moveaxis(self._eln_rho[:, group.tokens], 0, -1)
        return ll

    def _check_finite(self, group: _Group, values: np.ndarray) -> None:
        if np.isfinite(values).all():
            return
        bad = ~np.isfinite(values)
        row, tau = np.argwhere(bad.any(axis=2))[0]
        doc_id = self.corpus.docs[int(group.doc_indices[row])].doc_id
        raise NumericDegeneracyError(doc_id, int(tau))

    def _group_forward(self, group: _Group, ll: np.ndarray) -> np.ndarray:
        fwd = np.empty_like(ll)
        fwd[:, 0] = self._eln_t[0][None, :] + ll[:, 0]
        for tau in range(1, ll.shape[1]):
            inner = fwd[:, tau - 1, :, None] + self._eln_t[None, :, :]
            fwd[:, tau] = _lse(inner, axis=1) + ll[:, tau]
        self._check_finite(group, fwd)
        return fwd

    def _group_backward(self, group: _Group, ll: np.ndarray) -> np.ndarray:
        bwd = np.zeros_like(ll)
        for tau in range(ll.shape[1] - 2, -1, -1):
            inner = self._eln_t[None, :, :] + \
                (bwd[:, tau + 1] + ll[:, tau + 1])[:, None, :]
            bwd[:, tau] = _lse(inner, axis=2)
        self._check_finite(group, bwd)
        return bwd

    def _group_posteriors(self, group: _Group, ll: np.ndarray):
        b, length, j = ll.shape
        if not self.config.use_transitions:
            scores = self._eln_p[None, None, :] + ll
            self._check_finite(group, scores)
            r = _softmax(scores, axes=(2,))
            logz = _lse(scores, axis=2).sum(axis=1)
            return r, None, logz
        fwd = self._group_forward(group, ll)
        bwd = self._group_backward(group, ll)
        r = _softmax(fwd + bwd, axes=(2,))
        logz = _lse(fwd[:, -1], axis=1)
        s = np.empty((b, length - 1, j, j))
        for tau in range(1, length):
            slab = fwd[:, tau - 1, :, None] + self._eln_t[None, :, :] + \
                (bwd[:, tau] + ll[:, tau])[:, None, :]
            s[:, tau - 1] = _softmax(slab, axes=(1, 2))
        return r, s, logz

    def _group_viterbi(self, group: _Group, ll: np.ndarray):
        b, length, j = ll.shape
        if not self.config.use_transitions:
            scores = self._eln_p[None, None, :] + ll
            paths = scores.argmax(axis=2)
            best = scores.max(axis=2).sum(axis=1)
            return paths, best
        score = np.empty_like(ll)
        back = np.zeros((b, length, j), dtype=int)
        score[:, 0] = self._eln_t[0][None, :] + ll[:, 0]
        for tau in range(1, length):
            inner = score[:, tau - 1, :, None] + self._eln_t[None, :, :]
            back[:, tau] = inner.argmax(axis=1)
            score[:, tau] = inner.max(axis=1) + ll[:, tau]
        paths = np.empty((b, length), dtype=int)
        paths[:, -1] = score[:, -1].argmax(axis=1)
        for tau in range(length - 1, 0, -1):
            paths[:, tau - 1] = back[np.arange(b), tau, paths[:, tau]]
        best = score[:, -1].max(axis=1)
        return paths, best

    # -- per-document operations -------------------------------------------

    def _doc_ll(self, n: int) -> np.ndarray:
        g, row = self._doc_slot[n]
        group = self._groups[g]
        j = self.scheme.J
        ll = np.zeros((group.length, j))
        for k in sorted(group.annos):
            rows, labels, prev = group.annos[k]
            hit = np.flatnonzero(rows == row)
            if hit.size == 0:
                continue
            i = int(hit[0])
            table = self.annotators[k].log_table()
            if table.ndim == 3:
                ll += table[:, prev[i], labels[i]].T
            else:
                ll += table[:, labels[i]].T
        if self.config.use_text:
            ll += self._eln_rho[:, group.tokens[row]].T
        return ll

    def _doc_group_view(self, n: int) -> tuple[_Group, np.ndarray]:
        g, row = self._doc_slot[n]
        group = self._groups[g]
        single = _Group(length=group.length,
                        doc_indices=group.doc_indices[row:row + 1],
                        tokens=group.tokens[row:row + 1], annos={})
        return single, self._doc_ll(n)[None, :, :]

    def log_likelihood_matrix(self, n: int) -> np.ndarray:
        """Summed annotator and text expected log likelihoods, (L, J)."""
        return self._doc_ll(n)

    def token_log_likelihood(self, n: int, tau: int, j: int) -> float:
        return float(self._doc_ll(n)[tau, j])

    def forward(self, n: int) -> np.ndarray:
        """Log-space forward lattice of one document, (L, J)."""
        single, ll = self._doc_group_view(n)
        return self._group_forward(single, ll)[0]

    def backward(self, n: int) -> np.ndarray:
        """Log-space backward lattice of one document, (L, J)."""
        single, ll = self._doc_group_view(n)
        return self._group_backward(single, ll)[0]

    def e_step(self, n: int) -> tuple[np.ndarray, np.ndarray | None, float]:
        """Token and transition posteriors plus log partition for one doc."""
        single, ll = self._doc_group_view(n)
        r, s, logz = self._group_posteriors(single, ll)
        return r[0], None if s is None else s[0], float(logz[0])

    def viterbi(self, n: int) -> tuple[np.ndarray, float]:
        """Most probable label sequence and its log score."""
        single, ll = self._doc_group_view(n)
        paths, best = self._group_viterbi(single, ll)
        return paths[0], float(best[0])

    # -- sweeps --------------------------------------------------------------

    def _e_step_all(self):
        num_docs = len(self.corpus.docs)
        r_by_doc: list[np.ndarray] = [None] * num_docs
        s_by_doc: list[np.ndarray | None] = [None] * num_docs
        logz = np.empty(num_docs)
        for group in self._groups:
            ll = self._group_ll(group)
            r, s, z = self._group_posteriors(group, ll)
            for row, idx in enumerate(group.doc_indices):
                r_by_doc[idx] = r[row]
                s_by_doc[idx] = None if s is None else s[row]
                logz[idx] = z[row]
        return r_by_doc, s_by_doc, logz

    def _reestimate(self, r_by_doc, s_by_doc) -> None:
        for k, post in enumerate(self.annotators):
            post.reset_to_prior()
            for doc_idx, labels in self._docs_of_annotator[k]:
                post.accumulate(labels, r_by_doc[doc_idx])
        if self.transitions is not None:
            self.transitions = m_step_transitions(
                r_by_doc, s_by_doc, self.scheme, self.config.gamma0,
                self.config.prior.disallowed_mass)
        if self.proportions is not None:
            counts = self.proportions.prior.copy()
            for r in r_by_doc:
                counts += r.sum(axis=0)
            self.proportions.counts = counts
        if self.observations is not None:
            self.observations = m_step_observations(
                r_by_doc, [doc.tokens for doc in self.corpus.docs],
                self.scheme.J, self.corpus.V, self.config.kappa0)

    def total_kl(self) -> float:
        kl = sum(post.kl_to_prior() for post in self.annotators)
        if self.transitions is not None:
            kl += self.transitions.kl_to_prior()
        if self.proportions is not None:
            kl += self.proportions.kl_to_prior()
        if self.observations is not None:
            kl += self.observations.kl_to_prior()
        return kl

    def elbo(self) -> float:
        """Evidence lower bound of the most recent pass."""
        if self._last_logz is None:
            raise RuntimeError("run at least one pass before requesting the ELBO")
        return float(self._last_logz.sum()) - self.total_kl()

    def run(self) -> VbResult:
        """Iterate to convergence and decode; see the module docstring."""
        tol = self.config.convergence_tol
        trace: list[IterationRecord] = []
        converged = False
        flat_prev: np.ndarray | None = None
        r_by_doc = s_by_doc = logz = None

        for iteration in range(self.config.max_iters):
            r_by_doc, s_by_doc, logz = self._e_step_all()
            self._last_logz = logz
            flat = np.concatenate([r.ravel() for r in r_by_doc])
            delta = np.inf if flat_prev is None else float(
                np.abs(flat - flat_prev).max())
            trace.append(IterationRecord(iteration, delta, self.elbo()))
            if delta < tol:
                converged = True
                break
            flat_prev = flat
            self._reestimate(r_by_doc, s_by_doc)
            self.refresh_expectations()

        if not converged:
            # Readout pass so the returned posteriors, decoded paths and
            # factor counts all reflect the same expectations.
            r_by_doc, s_by_doc, logz = self._e_step_all()
            self._last_logz = logz
            flat = np.concatenate([r.ravel() for r in r_by_doc])
            delta = float(np.abs(flat - flat_prev).max())
            trace.append(IterationRecord(len(trace), delta, self.elbo()))
            converged = delta < tol

        num_docs = len(self.corpus.docs)
        paths: list[np.ndarray] = [None] * num_docs
        scores = np.empty(num_docs)
        for group in self._groups:
            ll = self._group_ll(group)
            p, sc = self._group_viterbi(group, ll)
            for row, idx in enumerate(group.doc_indices):
                paths[idx] = p[row]
                scores[idx] = sc[row]

        sequence = SequencePosterior(
            doc_ids=self.corpus.doc_ids,
            r=r_by_doc,
            s=None if not self.config.use_transitions else s_by_doc,
            log_partition=logz,
            viterbi_paths=paths,
            viterbi_scores=scores)
        return VbResult(sequence=sequence,
                        annotators=self.annotators,
                        transitions=self.transitions,
                        proportions=self.proportions,
                        observations=self.observations,
                        trace=trace,
                        converged=converged)


def run_vb(corpus: Corpus, annotations: AnnotationSet, scheme: LabelScheme,
           config: VbConfig) -> VbResult:
    """Aggregate one annotation set; convenience wrapper over the engine."""
    return VbSequenceAggregator(corpus, annotations, scheme, config).run()


def m_step_transitions(r_by_doc: Sequence[np.ndarray],
                       s_by_doc: Sequence[np.ndarray],
                       scheme: LabelScheme, gamma0: float,
                       disallowed_mass: float = _DISALLOWED_MASS) -> TransitionPosterior:
    """Transition posterior from expected transition counts.

    The expected count of the virtual start transition (outside label to
    each document's first token) is included alongside the pairwise
    posteriors ``s``.
    """
    post = TransitionPosterior.from_scheme(scheme, gamma0, disallowed_mass)
    counts = post.prior.copy()
    for r, s in zip(r_by_doc, s_by_doc):
        counts[0] += r[0]
        if s.shape[0]:
            counts += s.sum(axis=0)
    post.counts = counts
    return post


def m_step_observations(r_by_doc: Sequence[np.ndarray],
                        token_ids_by_doc: Sequence[np.ndarray],
                        num_labels: int, vocab_size: int,
                        kappa0: float) -> ObservationPosterior:
    """Observation posterior from expected word-label co-occurrence counts."""
    post = ObservationPosterior.create(num_labels, vocab_size, kappa0)
    target = post.counts.T
    for r, tokens in zip(r_by_doc, token_ids_by_doc):
        np.add.at(target, np.asarray(tokens, dtype=int), r)
    return post
