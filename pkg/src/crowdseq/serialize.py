"""Flat text serialisation: posterior tables and full model dumps.

The posterior file is TSV with one row per token: document id, token
position, then J probabilities.  The model dump is a line-oriented text
format holding the run hyperparameters and every pseudo-count tensor;
annotator tensors are written annotator-major and flattened in C order
(true label, then previous label, then observed label).  Floats are
written with ``repr`` and therefore round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotators import (AnnotatorPosterior, AnnotatorPriorConfig, ModelKind,
                         init_prior)
from .inference import VbResult
from .scheme import LabelScheme, expand_scheme

_MAGIC = "crowdseq-model 1"


def save_posteriors(path: str | Path, doc_ids: Sequence[str],
                    rows: Sequence[np.ndarray]) -> None:
    lines = []
    for doc_id, r in zip(doc_ids, rows):
        for tau, row in enumerate(r):
            cells = [doc_id, str(tau)] + [repr(float(v)) for v in row]
            lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_posteriors(path: str | Path) -> tuple[list[str], list[np.ndarray]]:
    doc_ids: list[str] = []
    rows: list[list[list[float]]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        cells = raw.split("\t")
        doc_id = cells[0]
        if not doc_ids or doc_ids[-1] != doc_id:
            doc_ids.append(doc_id)
            rows.append([])
        rows[-1].append([float(v) for v in cells[2:]])
    return doc_ids, [np.array(r) for r in rows]


@dataclass
class ModelDump:
    """A deserialised model state, sufficient for clustering and restarts."""

    kind: ModelKind
    span_types: tuple[str, ...]
    prior: AnnotatorPriorConfig
    gamma0: float
    kappa0: float
    use_text: bool
    use_transitions: bool
    annotators: list[AnnotatorPosterior]
    transitions: np.ndarray | None
    proportions: np.ndarray | None
    observations: np.ndarray | None

    @property
    def scheme(self) -> LabelScheme:
        return expand_scheme(self.span_types)


def _write_array(lines: list[str], name: str, arr: np.ndarray) -> None:
    shape = " ".join(str(d) for d in arr.shape)
    lines.append(f"array {name} {shape}")
    lines.append(" ".join(repr(float(v)) for v in arr.ravel()))


def save_model_dump(path: str | Path, result: VbResult,
                    scheme: LabelScheme, kind: ModelKind,
                    prior: AnnotatorPriorConfig, gamma0: float,
                    kappa0: float) -> None:
    lines = [_MAGIC,
             f"kind {kind.value}",
             "span_types " + " ".join(scheme.span_types),
             f"num_annotators {len(result.annotators)}",
             f"alpha0 {prior.alpha0!r}",
             f"epsilon0 {prior.epsilon0!r}",
             f"disallowed_mass {prior.disallowed_mass!r}",
             f"gamma0 {gamma0!r}",
             f"kappa0 {kappa0!r}",
             f"use_text {int(result.observations is not None)}",
             f"use_transitions {int(result.transitions is not None)}"]
    for k, post in enumerate(result.annotators):
        for i, arr in enumerate(post.count_arrays()):
            _write_array(lines, f"annotator{k}.{i}", arr)
    if result.transitions is not None:
        _write_array(lines, "transitions", result.transitions.counts)
    if result.proportions is not None:
        _write_array(lines, "proportions", result.proportions.counts)
    if result.observations is not None:
        _write_array(lines, "observations", result.observations.counts)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model_dump(path: str | Path) -> ModelDump:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a model dump")
    fields: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("array "):
            _, name, *shape = line.split(" ")
            values = np.array([float(v) for v in lines[i + 1].split(" ")])
            arrays[name] = values.reshape([int(d) for d in shape])
            i += 2
        else:
            key, _, value = line.partition(" ")
            fields[key] = value
            i += 1

    kind = ModelKind(fields["kind"])
    span_types = tuple(t for t in fields["span_types"].split(" ") if t)
    prior = AnnotatorPriorConfig(alpha0=float(fields["alpha0"]),
                                 epsilon0=float(fields["epsilon0"]),
                                 disallowed_mass=float(fields["disallowed_mass"]))
    scheme = expand_scheme(span_types)
    num_annotators = int(fields["num_annotators"])
    annotators = init_prior(kind, scheme, prior, num_annotators)
    for k, post in enumerate(annotators):
        counts = []
        for i in range(len(post.count_arrays())):
            counts.append(arrays[f"annotator{k}.{i}"])
        post.set_counts(counts)
        post.refresh()
    return ModelDump(kind=kind, span_types=span_types, prior=prior,
                     gamma0=float(fields["gamma0"]),
                     kappa0=float(fields["kappa0"]),
                     use_text=fields["use_text"] == "1",
                     use_transitions=fields["use_transitions"] == "1",
                     annotators=annotators,
                     transitions=arrays.get("transitions"),
                     proportions=arrays.get("proportions"),
                     observations=arrays.get("observations"))
