import math
import random

import numpy as np
import pytest

import actgram as ag
from actgram.decoder import DecoderError, NoGrammaticalParseError
from actgram.grammar import Pcfg

from conftest import random_grammar, random_stochastic_matrix
from oracles import best_grammatical_sentence, gep_brute_force


def mat(rows, names=None):
    return ag.ProbMatrix.from_rows(np.asarray(rows, dtype=float), names)


# ---------------------------------------------------------------------------
# ProbMatrix


def test_matrix_validates_row_sums():
    with pytest.raises(DecoderError, match="row 0"):
        mat([[0.5, 0.3]])


def test_matrix_needs_two_classes():
    with pytest.raises(DecoderError):
        mat([[1.0]])


def test_matrix_rejects_nan():
    with pytest.raises(DecoderError):
        mat([[np.nan, 1.0]])


def test_matrix_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = mat(random_stochastic_matrix(rng, 7, 3))
    path = tmp_path / "m.csv"
    ag.save_matrix_csv(m, path)
    m2 = ag.load_matrix_csv(path)
    assert np.allclose(m.values, m2.values, atol=1e-15, rtol=0)


def test_matrix_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = mat(random_stochastic_matrix(rng, 5, 4))
    path = tmp_path / "m.pmat"
    ag.save_matrix_binary(m, path)
    m2 = ag.load_matrix_binary(path)
    assert m.values.tobytes() == m2.values.tobytes()


def test_matrix_binary_bad_magic(tmp_path):
    path = tmp_path / "m.pmat"
    path.write_bytes(b"JUNK" + b"\x00" * 16)
    with pytest.raises(DecoderError, match="magic"):
        ag.load_matrix_binary(path)


# ---------------------------------------------------------------------------
# softmax


def test_softmax_symmetry():
    assert np.allclose(ag.softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_large_scores_stable():
    out = ag.softmax([1000.0, 0.0])
    assert np.isfinite(out).all()
    assert out[0] == pytest.approx(1.0, abs=1e-12)


def test_softmax_direct_values():
    out = ag.softmax([1.0, 2.0, 3.0])
    assert out == pytest.approx([0.09003, 0.24473, 0.66524], abs=1e-5)


def test_softmax_shift_invariance():
    a = ag.softmax([0.3, -1.2, 2.0])
    b = ag.softmax([0.3 + 17.5, -1.2 + 17.5, 2.0 + 17.5])
    assert np.allclose(a, b)


def test_softmax_nan_error():
    with pytest.raises(DecoderError):
        ag.softmax([np.nan, 0.0])


# ---------------------------------------------------------------------------
# prefix probabilities


def test_prefix_derived_two_frames():
    m = mat([[0.6, 0.4], [0.6, 0.4]])
    ps = ag.prefix_probabilities(m, (0, 1))
    assert ps.f_row[2] == pytest.approx(0.24, rel=1e-12)
    assert ps.g == pytest.approx(0.24, rel=1e-12)
    ps_a = ag.prefix_probabilities(m, (0,))
    assert ps_a.g == pytest.approx(0.6, rel=1e-12)
    assert ps_a.f_row[1] == pytest.approx(0.6, rel=1e-12)
    assert ps_a.f_row[2] == pytest.approx(0.36, rel=1e-12)


def test_prefix_one_hot():
    m = mat([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ps = ag.prefix_probabilities(m, (0, 1))
    assert ps.f_row[3] == pytest.approx(1.0, rel=1e-6)
    other = ag.prefix_probabilities(m, (1, 0))
    assert other.f_row[3] == pytest.approx(0.0, abs=1e-9)


def test_prefix_total_probability():
    rng = np.random.default_rng(3)
    for _ in range(10):
        t, k = rng.integers(1, 7), rng.integers(2, 5)
        m = mat(random_stochastic_matrix(rng, int(t), int(k)))
        total = sum(ag.prefix_probabilities(m, (c,)).g for c in range(int(k)))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_prefix_adjacent_equal_rejected():
    m = mat([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(DecoderError, match="adjacent"):
        ag.prefix_probabilities(m, (0, 0))


def test_prefix_unknown_token():
    m = mat([[0.5, 0.5]])
    with pytest.raises(DecoderError, match="out of range"):
        ag.prefix_probabilities(m, (3,))


def test_prefix_conservation_random():
    # g(l) = f(l, T) + sum_{k != last(l)} g(l.k)
    rng = np.random.default_rng(4)
    for _ in range(10):
        t, k = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        m = mat(random_stochastic_matrix(rng, t, k))
        for c in range(k):
            ps = ag.prefix_probabilities(m, (c,))
            ext = sum(
                ag.prefix_probabilities(m, (c, d)).g for d in range(k) if d != c
            )
            assert ps.g == pytest.approx(ps.f_row[t] + ext, abs=1e-9)


def test_prefix_monotone_extension():
    rng = np.random.default_rng(5)
    m = mat(random_stochastic_matrix(rng, 6, 3))
    for c in range(3):
        g0 = ag.prefix_probabilities(m, (c,)).g
        for d in range(3):
            if d == c:
                continue
            assert ag.prefix_probabilities(m, (c, d)).g <= g0 + 1e-12


# ---------------------------------------------------------------------------
# align_frames


def test_align_derived_three_frames():
    m = mat([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
    labels = ag.align_frames((0, 1), m)
    assert labels.tolist() == [0, 1, 1]  # 0.9*0.8*0.4 beats 0.9*0.2*0.4


def test_align_exact_length():
    m = mat([[0.9, 0.1], [0.1, 0.9]])
    assert ag.align_frames((0, 1), m).tolist() == [0, 1]


def test_align_one_hot_recovery():
    m = mat([[1, 0], [1, 0], [0, 1], [1, 0]])
    assert ag.align_frames((0, 1, 0), m).tolist() == [0, 0, 1, 0]


def test_align_too_many_segments():
    m = mat([[0.5, 0.5]])
    with pytest.raises(DecoderError, match="segments"):
        ag.align_frames((0, 1), m)


def test_align_tie_latest_boundary():
    m = mat([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
    # all feasible labelings tie; boundaries resolve as late as possible
    assert ag.align_frames((0, 1), m).tolist() == [0, 0, 1]
    assert ag.align_frames((1, 0), m).tolist() == [1, 1, 0]


def test_align_matches_brute_force_best():
    rng = np.random.default_rng(6)
    for _ in range(20):
        t, k = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        m = mat(random_stochastic_matrix(rng, t, k))
        _, _, sentence_mass = gep_brute_force(m.values)
        # pick the most massive sentence and check alignment optimality
        sent = max(sentence_mass, key=sentence_mass.get)
        labels = ag.align_frames(sent, m)
        got = float(np.prod(m.values[np.arange(t), labels]))
        best = 0.0
        import itertools

        for labeling in itertools.product(range(k), repeat=t):
            if tuple(ag.collapse_segments(labeling)) != sent:
                continue
            best = max(best, float(np.prod(m.values[np.arange(t), labeling])))
        assert got == pytest.approx(best, rel=1e-9)


# ---------------------------------------------------------------------------
# gep_parse / refine


def test_gep_prefers_grammatical_over_argmax():
    m = mat([[0.6, 0.4], [0.6, 0.4]], ["a", "b"])
    g = Pcfg.from_rules("S", [("S", "a b", 1.0)])
    res = ag.refine(m, g)
    assert res.sentence == (0, 1)
    assert res.frame_labels.tolist() == [0, 1]
    assert res.data_prob == pytest.approx(0.24, rel=1e-9)
    assert not res.fallback_used


def test_gep_single_frame_forced():
    m = mat([[0.3, 0.7]], ["a", "b"])
    g = Pcfg.from_rules("S", [("S", "a", 1.0)])
    res = ag.refine(m, g)
    assert res.sentence == (0,)
    assert res.frame_labels.tolist() == [0]
    assert res.data_prob == pytest.approx(0.3, rel=1e-9)


def test_gep_one_hot_identity():
    g = Pcfg.from_rules("S", [("S", "a b a", 1.0)])
    m = mat([[1, 0], [1, 0], [0, 1], [1, 0]], ["a", "b"])
    res = ag.refine(m, g)
    assert res.sentence == (0, 1, 0)
    assert res.frame_labels.tolist() == [0, 0, 1, 0]
    assert res.data_prob == pytest.approx(1.0, rel=1e-6)


def test_gep_restores_interrupted_run():
    # argmax flips one frame inside a long run; the grammar forbids it
    g = Pcfg.from_rules("S", [("S", "a b", 1.0)])
    rows = [[0.9, 0.1]] * 5 + [[0.1, 0.9]] * 5
    rows[3] = [0.2, 0.8]  # intermittent error
    m = mat(rows, ["a", "b"])
    argmax = m.values.argmax(axis=1)
    assert tuple(ag.collapse_segments(argmax.tolist())) != (0, 1)
    res = ag.refine(m, g)
    assert res.sentence == (0, 1)
    assert res.frame_labels.tolist() == [0] * 5 + [1] * 5
    # brute-force check that this is the best grammatical labeling
    _, _, sentence_mass = gep_brute_force(m.values)
    b = best_grammatical_sentence(sentence_mass, g, ["a", "b"], 1.0)
    assert b[0] == (0, 1)


def test_gep_keeps_grammatical_argmax():
    g = Pcfg.from_rules("S", [("S", "a b", 0.5), ("S", "b a", 0.5)])
    m = mat([[0.8, 0.2]] * 3 + [[0.3, 0.7]] * 3, ["a", "b"])
    res = ag.refine(m, g)
    argmax = m.values.argmax(axis=1)
    assert res.frame_labels.tolist() == argmax.tolist()
    _, _, sentence_mass = gep_brute_force(m.values)
    b = best_grammatical_sentence(sentence_mass, g, ["a", "b"], 1.0)
    assert res.sentence == b[0]


def test_gep_fallback_when_no_sentence_fits():
    # grammar needs 2 segments, matrix has 1 frame
    g = Pcfg.from_rules("S", [("S", "a b", 1.0)])
    m = mat([[0.3, 0.7]], ["a", "b"])
    res = ag.refine(m, g)
    assert res.fallback_used
    assert res.frame_labels.tolist() == [1]
    with pytest.raises(NoGrammaticalParseError):
        ag.refine(m, g, ag.GepConfig(fallback_on_failure=False))


def test_gep_sil_wrapped_grammar():
    g = Pcfg.from_rules("S", [("S", "SIL a b SIL", 1.0)])
    m = mat([[0.6, 0.4], [0.6, 0.4]], ["a", "b"])
    res = ag.refine(m, g)
    assert res.sentence == (0, 1)
    assert res.grammar_prob == pytest.approx(1.0)


def test_gep_unknown_class_never_in_sentence():
    # matrix has a class the grammar does not know; it can appear in the
    # fallback only
    g = Pcfg.from_rules("S", [("S", "a b", 1.0)])
    m = mat([[0.2, 0.2, 0.6], [0.2, 0.6, 0.2]], ["a", "b", "zz"])
    res = ag.refine(m, g)
    assert res.sentence == (0, 1)


def test_gep_grammar_prior_breaks_ties():
    g = Pcfg.from_rules("S", [("S", "a b", 0.9), ("S", "b a", 0.1)])
    m = mat([[0.5, 0.5], [0.5, 0.5]], ["a", "b"])
    res = ag.refine(m, g, ag.GepConfig(prior_weight=1.0))
    assert res.sentence == (0, 1)
    # with the prior disabled both sentences score equally; the tie breaks
    # to the lexicographically smaller one
    res0 = ag.refine(m, g, ag.GepConfig(use_grammar_prior=False))
    assert res0.sentence == (0, 1)


def test_gep_prior_weight_changes_argmax():
    # data slightly prefers "b a"; a strong prior prefers "a b"
    g = Pcfg.from_rules("S", [("S", "a b", 0.99), ("S", "b a", 0.01)])
    m = mat([[0.45, 0.55], [0.55, 0.45]], ["a", "b"])
    res_no_prior = ag.refine(m, g, ag.GepConfig(use_grammar_prior=False))
    assert res_no_prior.sentence == (1, 0)
    res_prior = ag.refine(m, g, ag.GepConfig(prior_weight=1.0))
    assert res_prior.sentence == (0, 1)


def test_gep_brute_force_master_property():
    rng_np = np.random.default_rng(7)
    rng = random.Random(7)
    for trial in range(30):
        k = int(rng_np.integers(2, 5))
        t = int(rng_np.integers(2, 7))
        g = random_grammar(rng, n_terminals=k)
        class_names = [f"k{i}" for i in range(k)]
        m = mat(random_stochastic_matrix(rng_np, t, k), class_names)
        f_bf, g_bf, sentence_mass = gep_brute_force(m.values)
        # prefix quantities
        for c in range(k):
            ps = ag.prefix_probabilities(m, (c,))
            assert ps.g == pytest.approx(g_bf.get((c,), 0.0), abs=1e-9)
            for tt in range(1, t + 1):
                assert ps.f_row[tt] == pytest.approx(
                    f_bf.get(((c,), tt), 0.0), abs=1e-9
                )
        # returned sentence matches the exhaustive argmax
        best = best_grammatical_sentence(sentence_mass, g, class_names, 1.0)
        res = ag.refine(m, g)
        if best is None:
            assert res.fallback_used
        else:
            assert not res.fallback_used
            got_score = res.data_prob * res.grammar_prob
            assert got_score == pytest.approx(best[1], rel=1e-9)
            assert res.sentence == best[0]


def test_gep_queue_cap_sets_pruned_flag():
    rng = np.random.default_rng(8)
    g = Pcfg.from_rules(
        "S",
        [("S", "a b a b", 0.25), ("S", "b a b a", 0.25), ("S", "a b", 0.25), ("S", "b a", 0.25)],
    )
    m = mat(random_stochastic_matrix(rng, 8, 2), ["a", "b"])
    res = ag.refine(m, g, ag.GepConfig(max_queue=2))
    assert res.pruned


def test_refine_batch_order_and_jobs():
    rng = np.random.default_rng(9)
    g = Pcfg.from_rules("S", [("S", "a b", 0.5), ("S", "b a", 0.5)])
    ms = [mat(random_stochastic_matrix(rng, 5, 2), ["a", "b"]) for _ in range(4)]
    serial = ag.refine_batch(ms, g, jobs=1)
    parallel = ag.refine_batch(ms, g, jobs=2)
    for a, b in zip(serial, parallel):
        assert a.sentence == b.sentence
        assert a.frame_labels.tolist() == b.frame_labels.tolist()
        assert a.log_data_prob == b.log_data_prob


def test_gep_long_matrix_log_space():
    # 10k frames must not underflow the search or produce NaN
    g = Pcfg.from_rules("S", [("S", "a b", 1.0)])
    rng = np.random.default_rng(10)
    t = 10_000
    rows = np.full((t, 2), 0.25)
    rows[: t // 2, 0] = 0.75
    rows[t // 2 :, 1] = 0.75
    rows /= rows.sum(axis=1, keepdims=True)
    m = mat(rows, ["a", "b"])
    res = ag.refine(m, g)
    assert res.sentence == (0, 1)
    assert math.isfinite(res.log_data_prob)
    assert res.data_prob == 0.0  # linear value underflows; log value is the record
