"""Posterior table and model dump round trips."""

import numpy as np
import pytest

from crowdseq.annotators import ModelKind
from crowdseq.inference import VbConfig, run_vb
from crowdseq.scheme import expand_scheme
from crowdseq.serialize import (load_model_dump, load_posteriors,
                                save_model_dump, save_posteriors)
from crowdseq.synth import synth_generate

SCHEME = expand_scheme(["X"])


class TestPosteriors:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        doc_ids = ["d0", "d1"]
        rows = [rng.dirichlet(np.ones(3), size=4), rng.dirichlet(np.ones(3), size=2)]
        path = tmp_path / "posteriors.tsv"
        save_posteriors(path, doc_ids, rows)
        ids2, rows2 = load_posteriors(path)
        assert ids2 == doc_ids
        for a, b in zip(rows, rows2):
            assert np.array_equal(a, b)  # repr round-trips floats exactly


class TestModelDump:
    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_round_trip_counts(self, tmp_path, kind):
        corpus, annotations, _ = synth_generate(SCHEME, 6, 5, 3, kind,
                                                0.8, seed=1)
        cfg = VbConfig(kind=kind, max_iters=4)
        result = run_vb(corpus, annotations, SCHEME, cfg)
        path = tmp_path / "model.dump"
        save_model_dump(path, result, SCHEME, kind, cfg.prior, cfg.gamma0,
                        cfg.kappa0)
        dump = load_model_dump(path)
        assert dump.kind == kind
        assert dump.scheme.labels == SCHEME.labels
        assert len(dump.annotators) == 3
        for orig, loaded in zip(result.annotators, dump.annotators):
            for a, b in zip(orig.count_arrays(), loaded.count_arrays()):
                assert np.array_equal(a, b)
        assert np.array_equal(dump.transitions, result.transitions.counts)
        assert np.array_equal(dump.observations, result.observations.counts)
        assert dump.proportions is None

    def test_posterior_means_survive_round_trip(self, tmp_path):
        corpus, annotations, _ = synth_generate(SCHEME, 6, 5, 3,
                                                ModelKind.SEQ, 0.8, seed=2)
        cfg = VbConfig(kind=ModelKind.SEQ, max_iters=4)
        result = run_vb(corpus, annotations, SCHEME, cfg)
        path = tmp_path / "model.dump"
        save_model_dump(path, result, SCHEME, ModelKind.SEQ, cfg.prior,
                        cfg.gamma0, cfg.kappa0)
        dump = load_model_dump(path)
        for orig, loaded in zip(result.annotators, dump.annotators):
            assert np.array_equal(orig.posterior_mean(), loaded.posterior_mean())

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a dump\n")
        with pytest.raises(ValueError, match="not a model dump"):
            load_model_dump(path)

    def test_no_transitions_dump(self, tmp_path):
        corpus, annotations, _ = synth_generate(SCHEME, 5, 4, 2,
                                                ModelKind.CM, 0.8, seed=3)
        cfg = VbConfig(kind=ModelKind.CM, use_transitions=False, max_iters=3)
        result = run_vb(corpus, annotations, SCHEME, cfg)
        path = tmp_path / "model.dump"
        save_model_dump(path, result, SCHEME, ModelKind.CM, cfg.prior,
                        cfg.gamma0, cfg.kappa0)
        dump = load_model_dump(path)
        assert dump.transitions is None
        assert np.array_equal(dump.proportions, result.proportions.counts)
