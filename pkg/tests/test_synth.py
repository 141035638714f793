"""Generative sampler: determinism, noise calibration, constraints."""

import numpy as np
import pytest

from crowdseq.annotators import ModelKind
from crowdseq.scheme import expand_scheme
from crowdseq.synth import synth_generate

SCHEME = expand_scheme(["X"])
ALL_KINDS = list(ModelKind)


class TestSynthGenerate:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_noiseless_annotations_equal_gold(self, kind):
        corpus, annotations, gold = synth_generate(SCHEME, 10, 8, 3, kind,
                                                   1.0, seed=0)
        for (k, doc_id), seq in annotations.entries.items():
            assert np.array_equal(seq, gold[doc_id]), (kind, k, doc_id)

    def test_deterministic(self):
        a = synth_generate(SCHEME, 6, 5, 2, "seq", 0.8, seed=123)
        b = synth_generate(SCHEME, 6, 5, 2, "seq", 0.8, seed=123)
        for doc_a, doc_b in zip(a[0].docs, b[0].docs):
            assert np.array_equal(doc_a.tokens, doc_b.tokens)
        for key in a[1].entries:
            assert np.array_equal(a[1].entries[key], b[1].entries[key])
        for doc_id in a[2].doc_ids():
            assert np.array_equal(a[2][doc_id], b[2][doc_id])

    def test_seed_changes_output(self):
        a = synth_generate(SCHEME, 6, 5, 2, "seq", 0.8, seed=1)
        b = synth_generate(SCHEME, 6, 5, 2, "seq", 0.8, seed=2)
        assert any(not np.array_equal(a[2][d], b[2][d]) for d in a[2].doc_ids())

    def test_diag_mass_bounds(self):
        with pytest.raises(ValueError, match="diag_mass"):
            synth_generate(SCHEME, 2, 2, 1, "cm", 0.2, seed=0)  # <= 1/J
        with pytest.raises(ValueError, match="diag_mass"):
            synth_generate(SCHEME, 2, 2, 1, "cm", 1.2, seed=0)

    def test_size_validation(self):
        with pytest.raises(ValueError):
            synth_generate(SCHEME, 0, 5, 2, "cm", 0.8, seed=0)

    def test_gold_respects_disallowed_transitions(self):
        scheme = expand_scheme(["A", "B"])
        for seed in range(10):
            _, _, gold = synth_generate(scheme, 10, 12, 1, "cm", 0.9, seed=seed)
            for doc_id in gold.doc_ids():
                assert scheme.count_disallowed(gold[doc_id]) == 0

    @pytest.mark.parametrize("kind", [ModelKind.CM, ModelKind.SEQ])
    def test_empirical_accuracy_tracks_diag_mass(self, kind):
        corpus, annotations, gold = synth_generate(SCHEME, 200, 10, 5, kind,
                                                   0.8, seed=42)
        hits = total = 0
        for (k, doc_id), seq in annotations.entries.items():
            hits += int(np.sum(seq == gold[doc_id]))
            total += seq.size
        assert 0.75 <= hits / total <= 0.85

    def test_all_annotators_label_all_docs(self):
        corpus, annotations, _ = synth_generate(SCHEME, 7, 4, 3, "acc",
                                                0.9, seed=5)
        assert len(annotations) == 21

    def test_seq_annotations_respect_disallowed_when_clean(self):
        # the seq emitter zeroes disallowed pairs, so annotations never
        # contain them regardless of noise level
        scheme = expand_scheme(["A", "B"])
        _, annotations, _ = synth_generate(scheme, 20, 10, 3, "seq",
                                           0.6, seed=6)
        for seq in annotations.entries.values():
            assert scheme.count_disallowed(seq) == 0

    def test_vocab_size_controls_tokens(self):
        corpus, _, _ = synth_generate(SCHEME, 5, 5, 1, "cm", 0.9, seed=7,
                                      vocab_size=4)
        assert corpus.V == 4
        assert all(doc.tokens.max() < 4 for doc in corpus.docs)
