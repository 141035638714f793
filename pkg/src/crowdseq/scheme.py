"""BIO label schemes: label universes, transition constraints, span codecs.

A scheme fixes the token-label vocabulary for a tagging task: the outside
label ``O`` plus a ``B-x``/``I-x`` pair per span type, together with the
set of transitions that a well-formed sequence never contains
(``O -> I-x`` and any transition into ``I-y`` from a ``B-x``/``I-x`` of a
different type).  Everything downstream indexes labels as integers in
``[0, J)`` with ``O`` always at index 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

OUTSIDE = "O"


class Span(NamedTuple):
    """A typed token range ``[start, end)`` within one document."""

    start: int
    end: int
    span_type: str
    doc_id: str = ""

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LabelScheme:
    """The BIO label universe for a task.

    ``labels[0]`` is always ``O`` and each span type contributes a ``B-x``
    and an ``I-x`` label, so ``J == 2 * len(span_types) + 1``.
    ``disallowed`` holds (from, to) label-index pairs.
    """

    span_types: tuple[str, ...]
    labels: tuple[str, ...]
    disallowed: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if len(self.labels) != 2 * len(self.span_types) + 1:
            raise ValueError("label count must equal 2 * span types + 1")
        if not self.labels or self.labels[0] != OUTSIDE:
            raise ValueError(f"label index 0 must be {OUTSIDE!r}")
        for i, t in enumerate(self.span_types):
            if self.labels[2 * i + 1] != f"B-{t}" or self.labels[2 * i + 2] != f"I-{t}":
                raise ValueError(f"labels for type {t!r} must be B-{t}, I-{t}")
        j = len(self.labels)
        for pair in self.disallowed:
            if not all(0 <= idx < j for idx in pair):
                raise ValueError(f"disallowed pair {pair} outside [0, {j})")

    @property
    def J(self) -> int:
        return len(self.labels)

    @property
    def outside_index(self) -> int:
        return 0

    @cached_property
    def _label_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.labels)}

    def label_index(self, name: str) -> int:
        try:
            return self._label_index[name]
        except KeyError:
            raise ValueError(f"unknown label {name!r}") from None

    def begin_index(self, span_type: str) -> int:
        return self.label_index(f"B-{span_type}")

    def inside_index(self, span_type: str) -> int:
        return self.label_index(f"I-{span_type}")

    def is_begin(self, idx: int) -> bool:
        return idx > 0 and (idx - 1) % 2 == 0

    def is_inside(self, idx: int) -> bool:
        return idx > 0 and (idx - 1) % 2 == 1

    def span_type_of(self, idx: int) -> str | None:
        """Span type of a B/I label, or None for ``O``."""
        if idx == 0:
            return None
        return self.span_types[(idx - 1) // 2]

    @cached_property
    def allowed_mask(self) -> np.ndarray:
        """Boolean (J, J) matrix, True where ``from -> to`` is allowed."""
        mask = np.ones((self.J, self.J), dtype=bool)
        for frm, to in self.disallowed:
            mask[frm, to] = False
        mask.setflags(write=False)
        return mask

    def validate_sequence(self, seq: Sequence[int]) -> np.ndarray:
        arr = np.asarray(seq, dtype=int)
        if arr.ndim != 1:
            raise ValueError("label sequence must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= self.J):
            raise ValueError(f"label index outside [0, {self.J})")
        return arr

    def count_disallowed(self, seq: Sequence[int]) -> int:
        """Number of disallowed transitions in a sequence, counting the
        virtual ``O`` before the first token."""
        arr = self.validate_sequence(seq)
        prev = np.concatenate(([self.outside_index], arr[:-1]))
        return int(np.sum(~self.allowed_mask[prev, arr]))


def expand_scheme(span_types: Sequence[str]) -> LabelScheme:
    """Build the BIO scheme for an ordered list of span-type names."""
    types = tuple(span_types)
    if not types:
        raise ValueError("at least one span type is required")
    if len(set(types)) != len(types):
        raise ValueError("span type names must be unique")
    if any(not t for t in types):
        raise ValueError("span type names must be non-empty")

    labels = [OUTSIDE]
    for t in types:
        labels.extend((f"B-{t}", f"I-{t}"))
    scheme_labels = tuple(labels)

    index = {name: i for i, name in enumerate(scheme_labels)}
    disallowed: set[tuple[int, int]] = set()
    for t in types:
        disallowed.add((0, index[f"I-{t}"]))
    for x in types:
        for y in types:
            if x == y:
                continue
            disallowed.add((index[f"B-{x}"], index[f"I-{y}"]))
            disallowed.add((index[f"I-{x}"], index[f"I-{y}"]))

    return LabelScheme(span_types=types, labels=scheme_labels,
                       disallowed=frozenset(disallowed))


def decode_spans(seq: Sequence[int], scheme: LabelScheme,
                 doc_id: str = "") -> tuple[list[Span], list[int]]:
    """Lenient BIO decode: extract spans and invalid-transition positions.

    A span opens at each ``B-x``.  An ``I-x`` extends the current span only
    when a span of type x is open; otherwise it opens a new span and the
    position is recorded as a violation.  Spans close before ``O``, before
    any ``B`` and before ``I`` of a different type.
    """
    arr = scheme.validate_sequence(seq)
    spans: list[Span] = []
    violations: list[int] = []
    open_start: int | None = None
    open_type: str | None = None

    def close(end: int) -> None:
        nonlocal open_start, open_type
        if open_start is not None:
            spans.append(Span(open_start, end, open_type, doc_id))
            open_start, open_type = None, None

    for pos, idx in enumerate(arr):
        if idx == scheme.outside_index:
            close(pos)
        elif scheme.is_begin(idx):
            close(pos)
            open_start, open_type = pos, scheme.span_type_of(idx)
        else:
            t = scheme.span_type_of(idx)
            if open_type == t:
                continue
            close(pos)
            violations.append(pos)
            open_start, open_type = pos, t
    close(len(arr))
    return spans, violations


def spans_from_labels(seq: Sequence[int], scheme: LabelScheme,
                      doc_id: str = "") -> list[Span]:
    """Spans of a label sequence under the lenient decoding rule."""
    spans, _ = decode_spans(seq, scheme, doc_id)
    return spans


def labels_from_spans(spans: Sequence[Span], length: int,
                      scheme: LabelScheme) -> np.ndarray:
    """Inverse of span decoding: ``B`` at each span start, ``I`` after."""
    seq = np.zeros(length, dtype=int)
    prev_end = 0
    for span in sorted(spans, key=lambda s: s.start):
        if not 0 <= span.start < span.end <= length:
            raise ValueError(f"span {span} outside [0, {length})")
        if span.start < prev_end:
            raise ValueError(f"span {span} overlaps a previous span")
        seq[span.start] = scheme.begin_index(span.span_type)
        seq[span.start + 1:span.end] = scheme.inside_index(span.span_type)
        prev_end = span.end
    return seq
