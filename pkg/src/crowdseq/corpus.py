"""Corpus containers plus the crowd-annotation and CoNLL file formats.

The crowd file is UTF-8, tab separated, one token per row::

    doc_id <TAB> token <TAB> a_1 <TAB> ... <TAB> a_K

where each ``a_k`` is a BIO label string or ``-`` for missing, and a blank
line separates documents.  An annotator labels a document completely or
not at all: mixing labels and ``-`` for one annotator within one document
is a parse error.  Gold and decoded label files are CoNLL style
(``token <TAB> label``, blank-line document separators) with documents in
the same order as the crowd file.

All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scheme import LabelScheme

MISSING = "-"


class ParseError(ValueError):
    """A malformed input file; the message names the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Document:
    """One document: a stable id and its token-id sequence."""

    doc_id: str
    tokens: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.tokens, dtype=int)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"document {self.doc_id!r} must have length >= 1")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    def __len__(self) -> int:
        return int(self.tokens.size)


@dataclass(frozen=True)
class Corpus:
    """Documents plus the token vocabulary built from their union."""

    docs: tuple[Document, ...]
    vocab: Mapping[str, int]

    def __post_init__(self) -> None:
        ids = [d.doc_id for d in self.docs]
        if len(set(ids)) != len(ids):
            raise ValueError("document ids must be unique")
        v = len(self.vocab)
        for d in self.docs:
            if d.tokens.size and (d.tokens.min() < 0 or d.tokens.max() >= v):
                raise ValueError(f"token id outside [0, {v}) in {d.doc_id!r}")

    @property
    def V(self) -> int:
        return len(self.vocab)

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d.doc_id for d in self.docs)

    def doc_index(self, doc_id: str) -> int:
        try:
            return self._index[doc_id]
        except KeyError:
            raise ValueError(f"unknown document {doc_id!r}") from None

    @property
    def _index(self) -> dict[str, int]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {d.doc_id: i for i, d in enumerate(self.docs)}
            self.__dict__["_index_cache"] = cached
        return cached

    @property
    def token_strings(self) -> tuple[str, ...]:
        cached = self.__dict__.get("_strings_cache")
        if cached is None:
            rev = [""] * self.V
            for tok, i in self.vocab.items():
                rev[i] = tok
            cached = tuple(rev)
            self.__dict__["_strings_cache"] = cached
        return cached

    def doc_tokens(self, doc_id: str) -> list[str]:
        strings = self.token_strings
        return [strings[t] for t in self.docs[self.doc_index(doc_id)].tokens]

    @classmethod
    def from_token_lists(cls, docs: Iterable[tuple[str, Sequence[str]]]) -> "Corpus":
        """Build a corpus and its vocabulary in token first-appearance order."""
        vocab: dict[str, int] = {}
        built = []
        for doc_id, tokens in docs:
            ids = []
            for tok in tokens:
                if tok not in vocab:
                    vocab[tok] = len(vocab)
                ids.append(vocab[tok])
            built.append(Document(doc_id, np.asarray(ids, dtype=int)))
        return cls(docs=tuple(built), vocab=vocab)


@dataclass(frozen=True)
class AnnotationSet:
    """Sparse annotator -> document -> label-sequence map.

    ``entries`` is keyed by ``(annotator, doc_id)``; a missing key means
    the annotator did not label that document.
    """

    num_annotators: int
    entries: Mapping[tuple[int, str], np.ndarray]

    def __post_init__(self) -> None:
        if self.num_annotators < 1:
            raise ValueError("num_annotators must be >= 1")
        frozen: dict[tuple[int, str], np.ndarray] = {}
        for (k, doc_id), seq in self.entries.items():
            if not 0 <= k < self.num_annotators:
                raise ValueError(f"annotator index {k} outside [0, {self.num_annotators})")
            arr = np.asarray(seq, dtype=int)
            arr.setflags(write=False)
            frozen[(k, doc_id)] = arr
        object.__setattr__(self, "entries", frozen)

    def __len__(self) -> int:
        return len(self.entries)

    def annotators_of(self, doc_id: str) -> list[int]:
        return sorted(k for (k, d) in self.entries if d == doc_id)

    def docs_of(self, annotator: int) -> list[str]:
        return [d for (k, d) in self.entries if k == annotator]

    def validate(self, corpus: Corpus, scheme: LabelScheme,
                 require_coverage: bool = True) -> None:
        """Check lengths and label ranges against a corpus.

        With ``require_coverage`` every document must carry at least one
        annotation; relax this for partially acquired pools.
        """
        covered = set()
        for (k, doc_id), seq in self.entries.items():
            doc = corpus.docs[corpus.doc_index(doc_id)]
            if seq.size != len(doc):
                raise ValueError(
                    f"annotator {k} labels for {doc_id!r} have length "
                    f"{seq.size}, expected {len(doc)}")
            scheme.validate_sequence(seq)
            covered.add(doc_id)
        if require_coverage:
            missing = [d.doc_id for d in corpus.docs if d.doc_id not in covered]
            if missing:
                raise ValueError(f"documents without annotations: {missing[:5]}")


@dataclass(frozen=True)
class GoldLabels:
    """Gold label sequences for a (possibly partial) set of documents."""

    labels: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        frozen = {}
        for doc_id, seq in self.labels.items():
            arr = np.asarray(seq, dtype=int)
            arr.setflags(write=False)
            frozen[doc_id] = arr
        object.__setattr__(self, "labels", frozen)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.labels

    def __getitem__(self, doc_id: str) -> np.ndarray:
        return self.labels[doc_id]

    def doc_ids(self) -> list[str]:
        return list(self.labels)


def load_crowd_annotations(path: str | Path,
                           scheme: LabelScheme) -> tuple[Corpus, AnnotationSet]:
    """Parse a crowd-annotation file into a corpus and sparse annotations."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()

    docs: list[tuple[str, list[str]]] = []
    entries: dict[tuple[int, str], np.ndarray] = {}
    seen_ids: set[str] = set()
    num_annotators: int | None = None

    block: list[tuple[int, list[str]]] = []  # (line_no, columns)

    def flush(end_line: int) -> None:
        nonlocal num_annotators
        if not block:
            return
        first_no, first_cols = block[0]
        doc_id = first_cols[0]
        if doc_id in seen_ids:
            raise ParseError(first_no, f"duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        k_count = len(first_cols) - 2
        if num_annotators is None:
            if k_count < 1:
                raise ParseError(first_no, "expected at least one annotator column")
            num_annotators = k_count

        tokens = []
        columns: list[list[str]] = [[] for _ in range(num_annotators)]
        for line_no, cols in block:
            if len(cols) != num_annotators + 2:
                raise ParseError(line_no,
                                 f"expected {num_annotators + 2} columns, got {len(cols)}")
            if cols[0] != doc_id:
                raise ParseError(line_no,
                                 f"document id changed from {doc_id!r} to {cols[0]!r} "
                                 "without a blank separator line")
            tokens.append(cols[1])
            for k in range(num_annotators):
                cell = cols[2 + k]
                if cell != MISSING:
                    scheme_check(line_no, cell)
                columns[k].append(cell)

        any_annotation = False
        for k, cells in enumerate(columns):
            missing = sum(c == MISSING for c in cells)
            if missing == len(cells):
                continue
            if missing:
                raise ParseError(block[0][0],
                                 f"annotator {k + 1} labelled document {doc_id!r} "
                                 "only partially")
            entries[(k, doc_id)] = np.array(
                [scheme.label_index(c) for c in cells], dtype=int)
            any_annotation = True
        if not any_annotation:
            raise ParseError(block[0][0],
                             f"document {doc_id!r} has no annotations")
        docs.append((doc_id, tokens))
        block.clear()

    def scheme_check(line_no: int, cell: str) -> None:
        try:
            scheme.label_index(cell)
        except ValueError:
            raise ParseError(line_no, f"unknown label {cell!r}") from None

    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            flush(line_no)
            continue
        cols = raw.split("\t")
        if len(cols) < 3:
            raise ParseError(line_no, "expected doc_id, token and annotator columns")
        block.append((line_no, cols))
    flush(len(lines) + 1)

    if not docs:
        raise ParseError(1, "file contains no documents")

    corpus = Corpus.from_token_lists(docs)
    annotations = AnnotationSet(num_annotators=num_annotators, entries=entries)
    annotations.validate(corpus, scheme)
    return corpus, annotations


def save_crowd_annotations(path: str | Path, corpus: Corpus,
                           annotations: AnnotationSet,
                           scheme: LabelScheme) -> None:
    """Write a crowd-annotation file; inverse of ``load_crowd_annotations``."""
    strings = corpus.token_strings
    rows = []
    for doc in corpus.docs:
        per_k = [annotations.entries.get((k, doc.doc_id))
                 for k in range(annotations.num_annotators)]
        for tau, tok in enumerate(doc.tokens):
            cells = [doc.doc_id, strings[tok]]
            for seq in per_k:
                cells.append(MISSING if seq is None else scheme.labels[seq[tau]])
            rows.append("\t".join(cells))
        rows.append("")
    Path(path).write_text("\n".join(rows), encoding="utf-8")


def load_conll_labels(path: str | Path,
                      scheme: LabelScheme) -> tuple[list[list[str]], list[np.ndarray]]:
    """Parse a CoNLL-style file into per-document token strings and labels."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    token_docs: list[list[str]] = []
    label_docs: list[np.ndarray] = []
    tokens: list[str] = []
    labels: list[int] = []

    def flush() -> None:
        if tokens:
            token_docs.append(list(tokens))
            label_docs.append(np.array(labels, dtype=int))
            tokens.clear()
            labels.clear()

    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            flush()
            continue
        cols = raw.split("\t")
        if len(cols) != 2:
            raise ParseError(line_no, f"expected 2 columns, got {len(cols)}")
        try:
            idx = scheme.label_index(cols[1])
        except ValueError:
            raise ParseError(line_no, f"unknown label {cols[1]!r}") from None
        tokens.append(cols[0])
        labels.append(idx)
    flush()
    return token_docs, label_docs


def save_conll_labels(path: str | Path, corpus: Corpus,
                      labels_by_doc: Sequence[np.ndarray],
                      scheme: LabelScheme) -> None:
    """Write per-document labels in CoNLL style, aligned with the corpus."""
    if len(labels_by_doc) != len(corpus.docs):
        raise ValueError("one label sequence per document is required")
    strings = corpus.token_strings
    rows = []
    for doc, labels in zip(corpus.docs, labels_by_doc):
        if len(labels) != len(doc):
            raise ValueError(f"label length mismatch for {doc.doc_id!r}")
        for tok, lab in zip(doc.tokens, labels):
            rows.append(f"{strings[tok]}\t{scheme.labels[lab]}")
        rows.append("")
    Path(path).write_text("\n".join(rows), encoding="utf-8")


def load_gold_labels(path: str | Path, corpus: Corpus,
                     scheme: LabelScheme) -> GoldLabels:
    """Parse a gold file and align it with a corpus document by document."""
    token_docs, label_docs = load_conll_labels(path, scheme)
    if len(token_docs) != len(corpus.docs):
        raise ParseError(1, f"gold file has {len(token_docs)} documents, "
                            f"corpus has {len(corpus.docs)}")
    gold: dict[str, np.ndarray] = {}
    for doc, toks, labels in zip(corpus.docs, token_docs, label_docs):
        if len(toks) != len(doc):
            raise ParseError(1, f"gold length mismatch for document {doc.doc_id!r}")
        if toks != corpus.doc_tokens(doc.doc_id):
            raise ParseError(1, f"gold tokens do not match document {doc.doc_id!r}")
        if scheme.count_disallowed(labels):
            raise ParseError(1, f"gold labels for {doc.doc_id!r} contain a "
                             "disallowed transition")
        gold[doc.doc_id] = labels
    return GoldLabels(labels=gold)
