"""Annotator noise models as Beta/Dirichlet pseudo-count posteriors.

Five interchangeable models of how an annotator corrupts true labels:

* ``acc``  - a single accuracy probability; errors are uniform over the
  remaining labels.
* ``spam`` - an accuracy probability plus a label-independent spamming
  distribution drawn when the annotator is incorrect.  A per-annotation
  latent correctness indicator carries the credit assignment; its
  responsibilities live in the refreshed expectation tables.
* ``cv``   - one accuracy probability per true label.
* ``cm``   - a full (true, observed) confusion matrix.
* ``seq``  - a confusion matrix additionally conditioned on the
  annotator's previous label; cells whose (previous, current) pair is a
  disallowed transition are pinned to a tiny prior and receive no
  pseudo-count mass from the prior side (observed data may still land
  there).

Each posterior stores pseudo-counts (prior plus expected observation
mass).  Expected-log tables are rebuilt only by :meth:`refresh`, so all
count updates within one inference sweep see the same frozen
expectations; this also makes ``update_counts`` exactly additive.
"""

from __future__ import annotations

import copy
import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .scheme import LabelScheme

#: Previous-annotation placeholder for the first token of a document; it is
#: mapped to the outside label, matching the forward pass initialisation.
SENTINEL_PREV = -1

_ROW_TOL = 1e-9


class ModelKind(enum.Enum):
    ACC = "acc"
    SPAM = "spam"
    CV = "cv"
    CM = "cm"
    SEQ = "seq"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True)
class AnnotatorPriorConfig:
    """Hyperparameters shared by all annotator priors.

    ``alpha0`` goes on every cell, ``epsilon0`` is added on cells that
    correspond to correct annotations, and disallowed seq cells are pinned
    at ``disallowed_mass``.
    """

    alpha0: float = 1.0
    epsilon0: float = 1.0
    disallowed_mass: float = 1e-6

    def validate(self) -> None:
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.epsilon0 < 0:
            raise ValueError("epsilon0 must be non-negative")
        if self.disallowed_mass <= 0:
            raise ValueError("disallowed_mass must be positive")


def dirichlet_kl(counts: np.ndarray, prior: np.ndarray) -> float:
    """KL(Dir(counts) || Dir(prior)) for one parameter row."""
    a = np.asarray(counts, dtype=float)
    b = np.asarray(prior, dtype=float)
    a_sum = a.sum()
    kl = gammaln(a_sum) - gammaln(b.sum())
    kl -= gammaln(a).sum() - gammaln(b).sum()
    kl += np.sum((a - b) * (digamma(a) - digamma(a_sum)))
    return float(kl)


class AnnotatorPosterior(ABC):
    """Pseudo-count state and expected-log tables for one annotator."""

    kind: ModelKind

    def __init__(self, num_labels: int):
        if num_labels < 1:
            raise ValueError("num_labels must be >= 1")
        self.num_labels = int(num_labels)

    # -- counts ----------------------------------------------------------

    @abstractmethod
    def count_arrays(self) -> tuple[np.ndarray, ...]:
        """Live pseudo-count arrays, in a fixed documented order."""

    @abstractmethod
    def prior_arrays(self) -> tuple[np.ndarray, ...]:
        """Prior pseudo-count arrays, aligned with :meth:`count_arrays`."""

    def clone(self) -> "AnnotatorPosterior":
        return copy.deepcopy(self)

    def reset_to_prior(self) -> None:
        for counts, prior in zip(self.count_arrays(), self.prior_arrays()):
            counts[...] = prior

    def set_counts(self, arrays: Sequence[np.ndarray]) -> None:
        own = self.count_arrays()
        if len(arrays) != len(own):
            raise ValueError("wrong number of count arrays")
        for counts, new in zip(own, arrays):
            new = np.asarray(new, dtype=float)
            if new.shape != counts.shape:
                raise ValueError(f"count shape {new.shape} != {counts.shape}")
            counts[...] = new

    # -- expectations ------------------------------------------------------

    @abstractmethod
    def refresh(self) -> None:
        """Rebuild the cached expected-log tables from the current counts."""

    @abstractmethod
    def log_table(self) -> np.ndarray:
        """Expected log likelihood of an annotation given the true label.

        Shape (J, J) indexed by (true, observed); the seq model returns
        (J, J, J) indexed by (true, previous observed, observed).
        """

    def expected_log_a(self, true_label: int, prev_annotation: int,
                       annotation: int) -> float:
        """E[ln A(true, previous annotation, annotation)] as of the last
        refresh.  ``prev_annotation`` may be ``SENTINEL_PREV`` at the first
        token, which maps to the outside label."""
        j = self.num_labels
        if not 0 <= true_label < j:
            raise ValueError(f"true label {true_label} outside [0, {j})")
        if not 0 <= annotation < j:
            raise ValueError(f"annotation {annotation} outside [0, {j})")
        if prev_annotation == SENTINEL_PREV:
            prev_annotation = 0
        if not 0 <= prev_annotation < j:
            raise ValueError(f"previous annotation {prev_annotation} outside [0, {j})")
        table = self.log_table()
        if table.ndim == 3:
            return float(table[true_label, prev_annotation, annotation])
        return float(table[true_label, annotation])

    # -- updates -----------------------------------------------------------

    def accumulate(self, labels: Sequence[int], r: np.ndarray) -> None:
        """Add expected co-occurrence mass for one document in place.

        ``r`` holds the token-label posteriors of the document; each row
        must sum to one within 1e-9.
        """
        labels = np.asarray(labels, dtype=int)
        r = np.asarray(r, dtype=float)
        if r.ndim != 2 or r.shape != (labels.size, self.num_labels):
            raise ValueError(f"posterior shape {r.shape} does not match "
                             f"{labels.size} tokens x {self.num_labels} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_labels):
            raise ValueError("annotation label outside range")
        sums = r.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > _ROW_TOL):
            raise ValueError("token posterior rows must sum to 1 within 1e-9")
        prev = np.concatenate(([0], labels[:-1]))
        self._accumulate(labels, prev, r)

    @abstractmethod
    def _accumulate(self, labels: np.ndarray, prev: np.ndarray,
                    r: np.ndarray) -> None: ...

    # -- summaries -----------------------------------------------------------

    @abstractmethod
    def posterior_mean(self) -> np.ndarray:
        """Confusion tensor of posterior-mean probabilities; rows sum to 1."""

    @abstractmethod
    def _dirichlet_rows(self) -> Iterable[tuple[np.ndarray, np.ndarray]]:
        """(counts row, prior row) pairs for every conjugate factor."""

    def kl_to_prior(self) -> float:
        return sum(dirichlet_kl(c, p) for c, p in self._dirichlet_rows())


class AccuracyModel(AnnotatorPosterior):
    """Single shared accuracy; a (correct, incorrect) Beta."""

    kind = ModelKind.ACC

    def __init__(self, num_labels: int, prior: np.ndarray):
        super().__init__(num_labels)
        self.prior = np.asarray(prior, dtype=float).copy()
        self.beta = self.prior.copy()
        self._table: np.ndarray | None = None
        self.refresh()

    @classmethod
    def from_config(cls, num_labels: int, cfg: AnnotatorPriorConfig) -> "AccuracyModel":
        return cls(num_labels, np.array([cfg.alpha0 + cfg.epsilon0, cfg.alpha0]))

    def count_arrays(self):
        return (self.beta,)

    def prior_arrays(self):
        return (self.prior,)

    def refresh(self) -> None:
        a, b = self.beta
        total = digamma(a + b)
        eln_pi = digamma(a) - total
        eln_miss = digamma(b) - total
        j = self.num_labels
        off = eln_miss - np.log(j - 1) if j > 1 else -np.inf
        table = np.full((j, j), off)
        np.fill_diagonal(table, eln_pi)
        self._table = table

    def log_table(self) -> np.ndarray:
        return self._table

    def _accumulate(self, labels, prev, r):
        correct = float(r[np.arange(labels.size), labels].sum())
        self.beta[0] += correct
        self.beta[1] += labels.size - correct

    def posterior_mean(self) -> np.ndarray:
        a, b = self.beta
        p = a / (a + b)
        j = self.num_labels
        mean = np.full((j, j), (1.0 - p) / (j - 1) if j > 1 else 0.0)
        np.fill_diagonal(mean, p)
        return mean

    def _dirichlet_rows(self):
        yield self.beta, self.prior


class SpamModel(AnnotatorPosterior):
    """Accuracy Beta plus a spamming Dirichlet over emitted labels.

    The correct-label likelihood sums a "genuinely correct" branch and a
    "spammed onto the right answer" branch; the cached responsibilities
    split observed agreement between the two when counts are updated.
    """

    kind = ModelKind.SPAM

    def __init__(self, num_labels: int, pi_prior: np.ndarray, xi_prior: np.ndarray):
        super().__init__(num_labels)
        self.pi_prior = np.asarray(pi_prior, dtype=float).copy()
        self.xi_prior = np.asarray(xi_prior, dtype=float).copy()
        self.pi = self.pi_prior.copy()
        self.xi = self.xi_prior.copy()
        self._table: np.ndarray | None = None
        self._responsibility: np.ndarray | None = None
        self.refresh()

    @classmethod
    def from_config(cls, num_labels: int, cfg: AnnotatorPriorConfig) -> "SpamModel":
        return cls(num_labels,
                   np.array([cfg.alpha0 + cfg.epsilon0, cfg.alpha0]),
                   np.full(num_labels, cfg.alpha0))

    def count_arrays(self):
        return (self.pi, self.xi)

    def prior_arrays(self):
        return (self.pi_prior, self.xi_prior)

    def refresh(self) -> None:
        a, b = self.pi
        total = digamma(a + b)
        eln_pi = digamma(a) - total
        eln_miss = digamma(b) - total
        eln_xi = digamma(self.xi) - digamma(self.xi.sum())
        spam_branch = eln_miss + eln_xi
        table = np.tile(spam_branch, (self.num_labels, 1))
        diag = np.logaddexp(eln_pi, spam_branch)
        table[np.arange(self.num_labels), np.arange(self.num_labels)] = diag
        self._table = table
        self._responsibility = np.exp(eln_pi - diag)

    def log_table(self) -> np.ndarray:
        return self._table

    def _accumulate(self, labels, prev, r):
        resp = self._responsibility[labels]
        agree = r[np.arange(labels.size), labels]
        correct_mass = agree * resp
        spam_mass = 1.0 - correct_mass  # rows sum to 1
        self.pi[0] += correct_mass.sum()
        self.pi[1] += spam_mass.sum()
        np.add.at(self.xi, labels, spam_mass)

    def posterior_mean(self) -> np.ndarray:
        p = self.pi[0] / self.pi.sum()
        xi_mean = self.xi / self.xi.sum()
        mean = np.tile((1.0 - p) * xi_mean, (self.num_labels, 1))
        mean[np.arange(self.num_labels), np.arange(self.num_labels)] += p
        return mean

    def _dirichlet_rows(self):
        yield self.pi, self.pi_prior
        yield self.xi, self.xi_prior


class ConfusionVectorModel(AnnotatorPosterior):
    """One accuracy Beta per true label; errors uniform over the rest."""

    kind = ModelKind.CV

    def __init__(self, num_labels: int, prior: np.ndarray):
        super().__init__(num_labels)
        self.prior = np.asarray(prior, dtype=float).copy()
        self.betas = self.prior.copy()  # (J, 2)
        self._table: np.ndarray | None = None
        self.refresh()

    @classmethod
    def from_config(cls, num_labels: int, cfg: AnnotatorPriorConfig) -> "ConfusionVectorModel":
        prior = np.tile([cfg.alpha0 + cfg.epsilon0, cfg.alpha0], (num_labels, 1))
        return cls(num_labels, prior)

    def count_arrays(self):
        return (self.betas,)

    def prior_arrays(self):
        return (self.prior,)

    def refresh(self) -> None:
        totals = digamma(self.betas.sum(axis=1))
        eln_pi = digamma(self.betas[:, 0]) - totals
        eln_miss = digamma(self.betas[:, 1]) - totals
        j = self.num_labels
        off = eln_miss - np.log(j - 1) if j > 1 else np.full(j, -np.inf)
        table = np.tile(off[:, None], (1, j))
        table[np.arange(j), np.arange(j)] = eln_pi
        self._table = table

    def log_table(self) -> np.ndarray:
        return self._table

    def _accumulate(self, labels, prev, r):
        col = r.sum(axis=0)
        correct = np.zeros(self.num_labels)
        np.add.at(correct, labels, r[np.arange(labels.size), labels])
        self.betas[:, 0] += correct
        self.betas[:, 1] += col - correct

    def posterior_mean(self) -> np.ndarray:
        p = self.betas[:, 0] / self.betas.sum(axis=1)
        j = self.num_labels
        off = (1.0 - p) / (j - 1) if j > 1 else np.zeros(j)
        mean = np.tile(off[:, None], (1, j))
        mean[np.arange(j), np.arange(j)] = p
        return mean

    def _dirichlet_rows(self):
        for row, prior_row in zip(self.betas, self.prior):
            yield row, prior_row


class ConfusionMatrixModel(AnnotatorPosterior):
    """Full (true, observed) confusion matrix with Dirichlet rows."""

    kind = ModelKind.CM

    def __init__(self, num_labels: int, prior: np.ndarray):
        super().__init__(num_labels)
        self.prior = np.asarray(prior, dtype=float).copy()
        self.matrix = self.prior.copy()
        self._table: np.ndarray | None = None
        self.refresh()

    @classmethod
    def from_config(cls, num_labels: int, cfg: AnnotatorPriorConfig) -> "ConfusionMatrixModel":
        prior = np.full((num_labels, num_labels), cfg.alpha0)
        prior[np.arange(num_labels), np.arange(num_labels)] += cfg.epsilon0
        return cls(num_labels, prior)

    def count_arrays(self):
        return (self.matrix,)

    def prior_arrays(self):
        return (self.prior,)

    def refresh(self) -> None:
        self._table = digamma(self.matrix) - digamma(self.matrix.sum(axis=1))[:, None]

    def log_table(self) -> np.ndarray:
        return self._table

    def _accumulate(self, labels, prev, r):
        np.add.at(self.matrix.T, labels, r)

    def posterior_mean(self) -> np.ndarray:
        return self.matrix / self.matrix.sum(axis=1, keepdims=True)

    def _dirichlet_rows(self):
        for row, prior_row in zip(self.matrix, self.prior):
            yield row, prior_row


class SequentialConfusionModel(AnnotatorPosterior):
    """Confusion matrix conditioned on the annotator's previous label.

    The count tensor is (true, previous observed, observed).  Cells whose
    (previous, observed) pair is a disallowed transition start at a tiny
    pinned prior; expected mass can still land there if an annotator
    actually emits such a pair.
    """

    kind = ModelKind.SEQ

    def __init__(self, num_labels: int, prior: np.ndarray):
        super().__init__(num_labels)
        self.prior = np.asarray(prior, dtype=float).copy()
        self.tensor = self.prior.copy()
        self._table: np.ndarray | None = None
        self.refresh()

    @classmethod
    def from_config(cls, scheme: LabelScheme,
                    cfg: AnnotatorPriorConfig) -> "SequentialConfusionModel":
        j = scheme.J
        prior = np.full((j, j, j), cfg.alpha0)
        for frm, to in scheme.disallowed:
            prior[:, frm, to] = cfg.disallowed_mass
        for true in range(j):
            for prev in range(j):
                if scheme.allowed_mask[prev, true]:
                    prior[true, prev, true] += cfg.epsilon0
        return cls(j, prior)

    def count_arrays(self):
        return (self.tensor,)

    def prior_arrays(self):
        return (self.prior,)

    def refresh(self) -> None:
        self._table = digamma(self.tensor) - digamma(
            self.tensor.sum(axis=2))[:, :, None]

    def log_table(self) -> np.ndarray:
        return self._table

    def _accumulate(self, labels, prev, r):
        np.add.at(self.tensor.transpose(1, 2, 0), (prev, labels), r)

    def posterior_mean(self) -> np.ndarray:
        return self.tensor / self.tensor.sum(axis=2, keepdims=True)

    def _dirichlet_rows(self):
        for true in range(self.num_labels):
            for prev in range(self.num_labels):
                yield self.tensor[true, prev], self.prior[true, prev]


def init_prior(kind: ModelKind | str, scheme: LabelScheme,
               cfg: AnnotatorPriorConfig,
               num_annotators: int) -> list[AnnotatorPosterior]:
    """Fresh, identical posteriors at the prior for ``num_annotators`` workers."""
    kind = ModelKind(kind)
    cfg.validate()
    if num_annotators < 1:
        raise ValueError("num_annotators must be >= 1")
    j = scheme.J

    def make() -> AnnotatorPosterior:
        if kind is ModelKind.ACC:
            return AccuracyModel.from_config(j, cfg)
        if kind is ModelKind.SPAM:
            return SpamModel.from_config(j, cfg)
        if kind is ModelKind.CV:
            return ConfusionVectorModel.from_config(j, cfg)
        if kind is ModelKind.CM:
            return ConfusionMatrixModel.from_config(j, cfg)
        return SequentialConfusionModel.from_config(scheme, cfg)

    return [make() for _ in range(num_annotators)]


def update_counts(post: AnnotatorPosterior,
                  docs: Iterable[tuple[Sequence[int], np.ndarray]]) -> AnnotatorPosterior:
    """Posterior with expected co-occurrence mass added for the given docs.

    ``docs`` pairs one annotator's label sequence with the corresponding
    token posteriors.  The returned posterior keeps the input's expectation
    tables (refresh explicitly when a new sweep starts), which makes the
    update additive: accumulating two sets of documents in sequence equals
    accumulating their concatenation.
    """
    out = post.clone()
    for labels, r in docs:
        out.accumulate(labels, r)
    return out
