"""Sequence-engine correctness: oracle equivalence, ELBO, decoding."""

import numpy as np
import pytest

from crowdseq.annotators import AnnotatorPriorConfig, ModelKind
from crowdseq.corpus import AnnotationSet, Corpus
from crowdseq.inference import (NumericDegeneracyError, TransitionPosterior,
                                VbConfig, VbSequenceAggregator,
                                m_step_observations, m_step_transitions,
                                run_vb)
from crowdseq.scheme import expand_scheme
from crowdseq.synth import synth_generate

from helpers import (degenerate_scheme, enumerate_chain,
                     enumerate_independent, random_annotations, tiny_corpus)

SCHEME = expand_scheme(["X"])
ALL_KINDS = list(ModelKind)


def _small_model(seed=0, kind=ModelKind.SEQ, doc_lengths=(3, 2, 4), num_annotators=2,
                 use_text=True, use_transitions=True, warmed=True, coverage=1.0):
    corpus = tiny_corpus(doc_lengths, seed=seed)
    annotations = random_annotations(corpus, SCHEME, num_annotators,
                                     seed=seed + 1, coverage=coverage)
    config = VbConfig(kind=kind, use_text=use_text,
                      use_transitions=use_transitions,
                      prior=AnnotatorPriorConfig(alpha0=0.8, epsilon0=1.2))
    model = VbSequenceAggregator(corpus, annotations, SCHEME, config)
    if warmed:
        # two coordinate sweeps so the expectations carry real count mass
        for _ in range(2):
            r, s, _ = model._e_step_all()
            model._reestimate(r, s)
            model.refresh_expectations()
    return model


class TestTokenLogLikelihood:
    def test_zero_annotators_no_text_is_zero(self):
        # d1 carries no annotations at all
        corpus = tiny_corpus([3, 2], seed=0)
        annotations = AnnotationSet(num_annotators=1,
                                    entries={(0, "d0"): np.array([0, 1, 2])})
        config = VbConfig(kind=ModelKind.CM, use_text=False)
        model = VbSequenceAggregator(corpus, annotations, SCHEME, config)
        assert np.array_equal(model.log_likelihood_matrix(1), np.zeros((2, 3)))

    def test_single_annotator_matches_table_lookup(self):
        model = _small_model(kind=ModelKind.CM, num_annotators=1, use_text=False)
        k = 0
        doc_idx = 0
        doc_id = model.corpus.docs[doc_idx].doc_id
        labels = model.annotations.entries[(k, doc_id)]
        post = model.annotators[k]
        for tau, lab in enumerate(labels):
            for j in range(3):
                expected = post.expected_log_a(j, -1 if tau == 0 else labels[tau - 1], lab)
                assert model.token_log_likelihood(doc_idx, tau, j) == pytest.approx(expected, abs=1e-12)

    def test_uniform_text_is_constant_shift(self):
        with_text = _small_model(seed=3, use_text=True, warmed=False)
        without = _small_model(seed=3, use_text=False, warmed=False)
        ll_with = with_text.log_likelihood_matrix(0)
        ll_without = without.log_likelihood_matrix(0)
        diff = ll_with - ll_without
        # fresh uniform observation counts: the shift cannot depend on j
        assert np.allclose(diff, diff[:, :1], atol=1e-12)


class TestForwardBackwardOracle:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_e_step_matches_enumeration(self, kind):
        model = _small_model(seed=hash(kind.value) % 100, kind=kind)
        eln_t = model.transitions.expected_log()
        for n in range(len(model.corpus.docs)):
            ll = model.log_likelihood_matrix(n)
            r_ref, s_ref, logz_ref, _, _ = enumerate_chain(eln_t, ll)
            r, s, logz = model.e_step(n)
            assert np.allclose(r, r_ref, atol=1e-10)
            assert np.allclose(s, s_ref, atol=1e-10)
            assert logz == pytest.approx(logz_ref, abs=1e-10)

    def test_forward_single_token(self):
        model = _small_model(doc_lengths=(1,), warmed=False)
        ll = model.log_likelihood_matrix(0)
        eln_t = model.transitions.expected_log()
        assert np.allclose(model.forward(0), eln_t[0] + ll[0], atol=1e-12)

    def test_forward_two_tokens_brute_force(self):
        model = _small_model(doc_lengths=(2,))
        ll = model.log_likelihood_matrix(0)
        eln_t = model.transitions.expected_log()
        fwd = model.forward(0)
        for j in range(3):
            paths = [eln_t[0, i] + ll[0, i] + eln_t[i, j] + ll[1, j]
                     for i in range(3)]
            assert fwd[1, j] == pytest.approx(
                np.log(np.sum(np.exp(paths))), abs=1e-10)

    def test_backward_terminal_row_zero(self):
        model = _small_model(doc_lengths=(4,))
        assert np.array_equal(model.backward(0)[-1], np.zeros(3))

    def test_backward_two_tokens_brute_force(self):
        model = _small_model(doc_lengths=(2,))
        ll = model.log_likelihood_matrix(0)
        eln_t = model.transitions.expected_log()
        bwd = model.backward(0)
        for j in range(3):
            paths = [eln_t[j, i] + ll[1, i] for i in range(3)]
            assert bwd[0, j] == pytest.approx(
                np.log(np.sum(np.exp(paths))), abs=1e-10)

    def test_degenerate_single_label_backward_zero(self):
        # with one label the transition expectation and the confusion table
        # are exactly zero, so every backward entry collapses to zero
        scheme = degenerate_scheme()
        corpus = tiny_corpus([3], seed=1)
        annotations = AnnotationSet(num_annotators=1,
                                    entries={(0, "d0"): np.zeros(3, dtype=int)})
        model = VbSequenceAggregator(corpus, annotations, scheme,
                                     VbConfig(kind=ModelKind.CM, use_text=False))
        assert np.array_equal(model.backward(0), np.zeros((3, 1)))

    def test_disallowed_edge_carries_negligible_mass(self):
        model = _small_model(kind=ModelKind.SEQ, doc_lengths=(3,))
        n = 0
        _, s, _ = model.e_step(n)
        i = SCHEME.inside_index("X")
        assert np.all(s[:, 0, i] < 1e-4)  # O -> I-X transitions

    def test_marginal_consistency(self):
        model = _small_model(doc_lengths=(5, 3))
        for n in range(2):
            r, s, _ = model.e_step(n)
            for tau in range(s.shape[0]):
                assert np.allclose(s[tau].sum(axis=0), r[tau + 1], atol=1e-6)
                assert np.allclose(s[tau].sum(axis=1), r[tau], atol=1e-6)

    def test_rows_normalized(self):
        model = _small_model(doc_lengths=(4, 2, 6))
        for n in range(3):
            r, s, _ = model.e_step(n)
            assert np.allclose(r.sum(axis=1), 1.0, atol=1e-9)
            assert np.allclose(s.sum(axis=(1, 2)), 1.0, atol=1e-9)

    def test_dominant_annotator_pins_posterior(self):
        corpus = tiny_corpus([4], seed=2)
        labels = np.array([0, 1, 2, 0])
        annotations = AnnotationSet(num_annotators=1, entries={(0, "d0"): labels})
        config = VbConfig(kind=ModelKind.CM, use_text=False)
        model = VbSequenceAggregator(corpus, annotations, SCHEME, config)
        post = model.annotators[0]
        post.matrix[...] = np.eye(3) * 1e12 + 1e-3
        post.refresh()
        r, _, _ = model.e_step(0)
        assert np.allclose(r, np.eye(3)[labels], atol=1e-9)

    def test_no_transitions_matches_independent_oracle(self):
        model = _small_model(use_transitions=False, doc_lengths=(3, 2))
        for n in range(2):
            ll = model.log_likelihood_matrix(n)
            r_ref, logz_ref, best_ref, best_score_ref = enumerate_independent(
                model.proportions.expected_log(), ll)
            r, s, logz = model.e_step(n)
            assert s is None
            assert np.allclose(r, r_ref, atol=1e-10)
            assert logz == pytest.approx(logz_ref, abs=1e-10)
            path, score = model.viterbi(n)
            assert np.array_equal(path, best_ref)
            assert score == pytest.approx(best_score_ref, abs=1e-10)


class TestViterbi:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_enumeration(self, kind):
        model = _small_model(seed=(hash(kind.value) + 7) % 100, kind=kind)
        eln_t = model.transitions.expected_log()
        for n in range(len(model.corpus.docs)):
            ll = model.log_likelihood_matrix(n)
            _, _, logz, best, best_score = enumerate_chain(eln_t, ll)
            path, score = model.viterbi(n)
            assert np.array_equal(path, best)
            assert score == pytest.approx(best_score, abs=1e-10)
            conf = np.exp(score - logz)
            assert 0.0 <= conf <= 1.0 + 1e-9

    def test_all_tied_parameters_prefer_low_labels(self):
        corpus = tiny_corpus([3], seed=5)
        annotations = AnnotationSet(num_annotators=1,
                                    entries={(0, "d0"): np.array([0, 1, 2])})
        config = VbConfig(kind=ModelKind.CM, use_text=False,
                          prior=AnnotatorPriorConfig(alpha0=1.0, epsilon0=0.0))
        model = VbSequenceAggregator(corpus, annotations, SCHEME, config)
        model.transitions.counts = np.ones((3, 3))
        model.refresh_expectations()
        path, _ = model.viterbi(0)
        assert np.array_equal(path, [0, 0, 0])

    def test_degenerate_single_label_confidence_one(self):
        scheme = degenerate_scheme()
        corpus = tiny_corpus([4], seed=1)
        annotations = AnnotationSet(num_annotators=1,
                                    entries={(0, "d0"): np.zeros(4, dtype=int)})
        result = run_vb(corpus, annotations, scheme,
                        VbConfig(kind=ModelKind.CM, max_iters=3))
        assert result.sequence.sequence_confidence(0) == pytest.approx(1.0, abs=1e-12)

    def test_one_hot_posterior_high_confidence(self):
        corpus = tiny_corpus([5], seed=8)
        labels = np.array([0, 1, 2, 2, 0])
        entries = {(k, "d0"): labels for k in range(6)}
        annotations = AnnotationSet(num_annotators=6, entries=entries)
        result = run_vb(corpus, annotations, SCHEME,
                        VbConfig(kind=ModelKind.CM, use_text=False, max_iters=50))
        assert result.sequence.sequence_confidence(0) >= 0.99

    def test_paths_respect_disallowed_transitions(self):
        for seed in range(5):
            corpus, annotations, _ = synth_generate(SCHEME, 10, 8, 3,
                                                    ModelKind.CM, 0.6, seed=seed)
            result = run_vb(corpus, annotations, SCHEME,
                            VbConfig(kind=ModelKind.CM, max_iters=10))
            for path in result.sequence.viterbi_paths:
                assert SCHEME.count_disallowed(path) == 0


class TestMSteps:
    def test_transition_counts_from_hard_posteriors(self):
        # one doc labelled [O, B, I]: virtual start->O, O->B, B->I
        r = [np.eye(3)[[0, 1, 2]]]
        s = [np.zeros((2, 3, 3))]
        s[0][0, 0, 1] = 1.0
        s[0][1, 1, 2] = 1.0
        post = m_step_transitions(r, s, SCHEME, gamma0=1.0)
        expected = post.prior.copy()
        expected[0, 0] += 1.0
        expected[0, 1] += 1.0
        expected[1, 2] += 1.0
        assert np.allclose(post.counts, expected)

    def test_expected_log_symmetric_row(self):
        post = TransitionPosterior(counts=np.ones((2, 2)), prior=np.ones((2, 2)))
        assert np.allclose(post.expected_log(), -1.0, atol=1e-12)

    def test_observation_counts_absent_word(self):
        r = [np.eye(3)[[0, 1]]]
        tokens = [np.array([2, 2])]
        post = m_step_observations(r, tokens, num_labels=3, vocab_size=4, kappa0=0.5)
        assert post.counts[0, 0] == 0.5  # no mass: prior only
        assert post.counts[0, 2] == 1.5
        assert post.counts[1, 2] == 1.5

    def test_forced_prior_on_disallowed(self):
        post = TransitionPosterior.from_scheme(SCHEME, gamma0=2.0)
        i = SCHEME.inside_index("X")
        assert post.prior[0, i] == 1e-6
        assert post.counts[0, i] == 1e-6


class TestRunVb:
    def test_noiseless_recovers_gold(self):
        for kind in ALL_KINDS:
            corpus, annotations, gold = synth_generate(
                SCHEME, 15, 8, 5, kind, 1.0, seed=3)
            result = run_vb(corpus, annotations, SCHEME,
                            VbConfig(kind=kind, max_iters=30))
            for n, doc_id in enumerate(corpus.doc_ids):
                assert np.array_equal(result.sequence.viterbi_paths[n], gold[doc_id]), kind

    def test_deterministic(self):
        corpus, annotations, _ = synth_generate(SCHEME, 10, 6, 3,
                                                ModelKind.SEQ, 0.8, seed=4)
        cfg = VbConfig(kind=ModelKind.SEQ, max_iters=5)
        res1 = run_vb(corpus, annotations, SCHEME, cfg)
        res2 = run_vb(corpus, annotations, SCHEME, cfg)
        for a, b in zip(res1.sequence.r, res2.sequence.r):
            assert np.array_equal(a, b)
        assert res1.trace[-1].elbo == res2.trace[-1].elbo

    def test_max_iters_one(self):
        corpus, annotations, _ = synth_generate(SCHEME, 5, 5, 2,
                                                ModelKind.CM, 0.8, seed=5)
        cfg = VbConfig(kind=ModelKind.CM, max_iters=1)
        result = run_vb(corpus, annotations, SCHEME, cfg)
        assert len(result.trace) == 2  # one sweep plus the readout pass

    def test_nonconvergence_is_flagged_not_raised(self):
        corpus, annotations, _ = synth_generate(SCHEME, 8, 6, 3,
                                                ModelKind.SEQ, 0.7, seed=6)
        cfg = VbConfig(kind=ModelKind.SEQ, max_iters=2, convergence_tol=1e-12)
        result = run_vb(corpus, annotations, SCHEME, cfg)
        assert result.converged is False

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_elbo_non_decreasing(self, kind):
        for seed in range(3):
            corpus, annotations, _ = synth_generate(SCHEME, 12, 7, 3, kind,
                                                    0.75, seed=seed)
            result = run_vb(corpus, annotations, SCHEME,
                            VbConfig(kind=kind, max_iters=15))
            elbos = [t.elbo for t in result.trace]
            for prev, curr in zip(elbos, elbos[1:]):
                assert curr >= prev - 1e-6 * abs(prev)

    def test_elbo_kl_zero_at_prior(self):
        model = _small_model(warmed=False)
        assert model.total_kl() == pytest.approx(0.0, abs=1e-10)
        r, s, logz = model._e_step_all()
        model._last_logz = logz
        assert model.elbo() == pytest.approx(float(logz.sum()), abs=1e-10)

    def test_duplicate_annotator_changes_elbo_finitely(self):
        corpus, annotations, _ = synth_generate(SCHEME, 6, 5, 2,
                                                ModelKind.CM, 0.8, seed=9)
        doubled = dict(annotations.entries)
        for doc_id in corpus.doc_ids:
            doubled[(2, doc_id)] = annotations.entries[(0, doc_id)]
        more = AnnotationSet(num_annotators=3, entries=doubled)
        cfg = VbConfig(kind=ModelKind.CM, max_iters=5)
        r1 = run_vb(corpus, annotations, SCHEME, cfg)
        r2 = run_vb(corpus, more, SCHEME, cfg)
        assert np.isfinite(r2.trace[-1].elbo)
        assert r1.trace[-1].elbo != r2.trace[-1].elbo

    def test_document_permutation_invariance(self):
        corpus, annotations, _ = synth_generate(SCHEME, 6, 5, 3,
                                                ModelKind.SEQ, 0.8, seed=10)
        perm = [3, 0, 5, 1, 4, 2]
        docs = tuple(corpus.docs[i] for i in perm)
        corpus2 = Corpus(docs=docs, vocab=corpus.vocab)
        cfg = VbConfig(kind=ModelKind.SEQ, max_iters=3)
        res1 = run_vb(corpus, annotations, SCHEME, cfg)
        res2 = run_vb(corpus2, annotations, SCHEME, cfg)
        for new_pos, old_pos in enumerate(perm):
            assert np.allclose(res1.sequence.r[old_pos], res2.sequence.r[new_pos],
                               atol=1e-12)

    def test_long_document_many_annotators_stays_finite(self):
        corpus, annotations, _ = synth_generate(SCHEME, 1, 1000, 40,
                                                ModelKind.SEQ, 0.8, seed=11)
        result = run_vb(corpus, annotations, SCHEME,
                        VbConfig(kind=ModelKind.SEQ, max_iters=2))
        assert np.isfinite(result.sequence.r[0]).all()
        assert np.isfinite(result.sequence.log_partition).all()
        assert np.isfinite(result.trace[-1].elbo)

    def test_degeneracy_error_names_position(self):
        model = _small_model(kind=ModelKind.CM, doc_lengths=(3,), warmed=False)
        model.transitions.counts = np.full((3, 3), np.nan)
        model.refresh_expectations()
        with pytest.raises(NumericDegeneracyError, match="token"):
            model.e_step(0)


class TestAblationCollapse:
    def test_cm_ablations_match_ibcc(self):
        from crowdseq.baselines import ibcc_vb
        for seed in range(3):
            corpus, annotations, _ = synth_generate(SCHEME, 8, 6, 3,
                                                    ModelKind.CM, 0.75, seed=seed)
            cfg = VbConfig(kind=ModelKind.CM, use_text=False,
                           use_transitions=False, convergence_tol=1e-12,
                           max_iters=300,
                           prior=AnnotatorPriorConfig(alpha0=1.0, epsilon0=1.0))
            bsc = run_vb(corpus, annotations, SCHEME, cfg)
            ibcc = ibcc_vb(corpus, annotations, SCHEME, alpha0=1.0,
                           epsilon0=1.0, class_prior0=cfg.gamma0,
                           max_iters=300, tol=1e-12)
            for n in range(len(corpus.docs)):
                assert np.allclose(bsc.sequence.r[n], ibcc.table.rows[n],
                                   atol=1e-8)
