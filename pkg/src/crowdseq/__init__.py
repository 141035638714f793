"""Bayesian aggregation of crowdsourced BIO sequence labels."""

from .annotators import (AnnotatorPosterior, AnnotatorPriorConfig, ModelKind,
                         SENTINEL_PREV, init_prior, update_counts)
from .corpus import (AnnotationSet, Corpus, Document, GoldLabels, ParseError,
                     load_crowd_annotations, load_gold_labels,
                     save_crowd_annotations)
from .inference import (NumericDegeneracyError, SequencePosterior,
                        VbConfig, VbResult, VbSequenceAggregator, run_vb)
from .scheme import (LabelScheme, Span, decode_spans, expand_scheme,
                     labels_from_spans, spans_from_labels)
from .synth import synth_generate

__all__ = [
    "AnnotationSet", "AnnotatorPosterior", "AnnotatorPriorConfig", "Corpus",
    "Document", "GoldLabels", "LabelScheme", "ModelKind",
    "NumericDegeneracyError", "ParseError", "SENTINEL_PREV",
    "SequencePosterior", "Span", "VbConfig", "VbResult",
    "VbSequenceAggregator", "decode_spans", "expand_scheme", "init_prior",
    "labels_from_spans", "load_crowd_annotations", "load_gold_labels",
    "run_vb", "save_crowd_annotations", "spans_from_labels", "synth_generate",
    "update_counts",
]

__version__ = "0.1.0"
