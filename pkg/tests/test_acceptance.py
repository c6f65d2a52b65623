"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

import actgram as ag
from actgram.grammar import NEG_INF, Pcfg

from conftest import random_grammar, random_stochastic_matrix
from oracles import (
    best_grammatical_sentence,
    gep_brute_force,
    inside_by_enumeration,
    viterbi_by_enumeration,
)


@contextmanager
def criterion(name: str):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL  {name}  ({time.perf_counter() - t0:.1f} s)")
        raise
    print(f"PASS  {name}  ({time.perf_counter() - t0:.1f} s)")


def surgical_grammar() -> Pcfg:
    """Six-class activity grammar with shared segments across orderings."""
    return Pcfg.from_rules(
        "S",
        [
            ("S", "SIL PI0 PI2 PI3 PI2 SIL", 0.35),
            ("S", "SIL PI0 PI2 PI3 PI4 PI2 SIL", 0.25),
            ("S", "SIL PI5 PI0 PI2 PI4 PI2 SIL", 0.20),
            ("S", "SIL PI0 PI1 PI2 PI3 PI2 SIL", 0.10),
            ("S", "SIL PI5 PI0 PI2 SIL", 0.10),
        ],
        name="surgical-gt",
    )


# ---------------------------------------------------------------------------
# shared GEP instances (criteria 1 and 2)


def _gep_instances():
    """100 random decoder instances: K <= 4, T <= 8, grammars of <= 8 rules."""
    instances = []
    for idx in range(100):
        rng = random.Random(1000 + idx)
        nprng = np.random.default_rng(1000 + idx)
        k = rng.randint(2, 4)
        t = rng.randint(2, 8)
        while True:
            g = random_grammar(rng, n_terminals=k)
            if len(g.rules) <= 8:
                break
        names = [f"k{i}" for i in range(k)]
        m = ag.ProbMatrix.from_rows(random_stochastic_matrix(nprng, t, k), names)
        instances.append((g, m, names))
    return instances


@pytest.fixture(scope="module")
def gep_oracle_run():
    t0 = time.perf_counter()
    checked_prefixes = []
    for g, m, names in _gep_instances():
        t_len, k = m.t, m.k
        f_bf, g_bf, mass = gep_brute_force(m.values)
        prefixes = sorted(p for p in g_bf if len(p) <= 2)
        long_ones = sorted(p for p in g_bf if len(p) > 2)
        prefixes += long_ones[:: max(1, len(long_ones) // 20)]
        per_instance = []
        for l in prefixes:
            ps = ag.prefix_probabilities(m, l)
            assert ps.g == pytest.approx(g_bf.get(l, 0.0), abs=1e-9)
            for tt in range(0, t_len + 1):
                assert ps.f_row[tt] == pytest.approx(
                    f_bf.get((l, tt), 1.0 if (tt == 0 and not l) else 0.0), abs=1e-9
                )
            per_instance.append((l, ps))
        best = best_grammatical_sentence(mass, g, names, 1.0)
        res = ag.refine(m, g)
        if best is None:
            assert res.fallback_used
        else:
            assert not res.fallback_used
            assert res.sentence == best[0]
            assert res.data_prob * res.grammar_prob == pytest.approx(best[1], rel=1e-9)
        checked_prefixes.append((m, per_instance))
    return time.perf_counter() - t0, checked_prefixes


def test_gep_oracle_equivalence(gep_oracle_run):
    with criterion("GEP oracle equivalence (100 instances, K<=4, T<=8)"):
        elapsed, checked = gep_oracle_run
        print(f"      brute-force comparison over 100 instances ran in {elapsed:.1f} s")
        assert len(checked) == 100
        assert elapsed < 60.0, f"oracle run took {elapsed:.1f} s (budget 60 s)"


def test_prefix_conservation(gep_oracle_run):
    with criterion("prefix conservation and unit total mass"):
        _, checked = gep_oracle_run
        for m, per_instance in checked:
            t_len, k = m.t, m.k
            total = sum(ag.prefix_probabilities(m, (c,)).g for c in range(k))
            assert total == pytest.approx(1.0, abs=1e-9)
            for l, ps in per_instance:
                if len(l) > 2:
                    continue
                ext = sum(
                    ag.prefix_probabilities(m, l + (c,)).g
                    for c in range(k)
                    if c != l[-1]
                )
                assert ps.g == pytest.approx(ps.f_row[t_len] + ext, abs=1e-9)


# ---------------------------------------------------------------------------
# inside/Viterbi oracle (criterion 3)


def random_cnf_grammar(rng: random.Random, n_terminals: int) -> Pcfg:
    terms = [f"t{i}" for i in range(n_terminals)]
    n_pre = rng.randint(2, min(4, n_terminals))
    rules = []
    for p in range(n_pre):
        alts = rng.sample(terms, rng.randint(1, min(2, n_terminals)))
        probs = [rng.uniform(0.3, 1.0) for _ in alts]
        z = sum(probs)
        for a, pr in zip(alts, probs):
            rules.append((f"P{p}", [a], pr / z))
    lower = [f"P{p}" for p in range(n_pre)]
    n_comp = rng.randint(0, 2)
    for c in range(n_comp):
        n_branch = rng.randint(1, 2)
        probs = [rng.uniform(0.3, 1.0) for _ in range(n_branch)]
        z = sum(probs)
        for b in range(n_branch):
            rules.append((f"C{c}", [rng.choice(lower), rng.choice(lower)], probs[b] / z))
        lower.append(f"C{c}")
    n_root = rng.randint(1, 3)
    probs = [rng.uniform(0.3, 1.0) for _ in range(n_root)]
    z = sum(probs)
    for b in range(n_root):
        rules.append(("S", [rng.choice(lower), rng.choice(lower)], probs[b] / z))
    return Pcfg.from_rules("S", rules)


def test_inside_viterbi_oracle():
    with criterion("inside/Viterbi vs derivation enumeration (50 CNF grammars)"):
        t0 = time.perf_counter()
        done = 0
        seed = 0
        while done < 50:
            seed += 1
            rng = random.Random(seed)
            g = random_cnf_grammar(rng, rng.randint(2, 6))
            assert ag.validate(g) == []
            assert ag.is_cnf(g)
            sentences = []
            for i in range(30):
                s = ag.sample(g, seed=i)
                if len(s) <= 6 and s not in sentences:
                    sentences.append(s)
                if len(sentences) == 5:
                    break
            if not sentences:
                continue
            for s in sentences:
                want_sum = inside_by_enumeration(g, s)
                assert ag.inside(g, s) == pytest.approx(want_sum, rel=1e-9)
                want_max = viterbi_by_enumeration(g, s)
                _, got_max = ag.viterbi(g, s)
                assert got_max == pytest.approx(want_max, rel=1e-9)
            done += 1
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"oracle run took {elapsed:.1f} s (budget 30 s)"


# ---------------------------------------------------------------------------
# CNF preservation (criterion 4)


def test_cnf_preservation():
    with criterion("CNF conversion preserves inside (100 grammars x 10 sentences)"):
        rng = random.Random(77)
        for trial in range(100):
            g = random_grammar(rng, n_terminals=rng.randint(2, 6))
            cnf = ag.to_cnf(g)
            for i in range(10):
                s = ag.sample(g, seed=trial * 100 + i)
                want = inside_by_enumeration(g, s)
                assert ag.inside(cnf, s) == pytest.approx(want, rel=1e-9)


# ---------------------------------------------------------------------------
# induction coverage (criterion 5)


def induction_ground_truth() -> Pcfg:
    return Pcfg.from_rules(
        "S",
        [
            ("S", "p q R s", 0.6),
            ("S", "p R s", 0.4),
            ("R", "u", 0.5),
            ("R", "v", 0.3),
            ("R", "w", 0.2),
        ],
    )


def test_induction_coverage():
    with criterion("induction coverage on 10- and 20-sentence corpora"):
        t0 = time.perf_counter()
        gt = induction_ground_truth()
        for n_train, base_seed in ((10, 0), (20, 5000)):
            corpus = [
                ag.wrap_sil(gt.tokens_to_names(ag.sample(gt, seed=base_seed + i)))
                for i in range(n_train)
            ]
            g = ag.induce(corpus, ag.AdiosParams())
            g = ag.estimate_probs(g, corpus)
            assert ag.validate(g) == []
            cnf = ag.to_cnf(g)
            for s in corpus:
                assert ag.inside_log(cnf, g.names_to_tokens(s)) > NEG_INF
            held = [
                ag.wrap_sil(gt.tokens_to_names(ag.sample(gt, seed=9000 + i)))
                for i in range(100)
            ]
            hits = sum(
                1 for s in held if ag.inside_log(cnf, g.names_to_tokens(s)) > NEG_INF
            )
            assert hits >= 90, f"{n_train}-sentence corpus covers only {hits}/100 held-out"
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"induction run took {elapsed:.1f} s (budget 10 s)"


# ---------------------------------------------------------------------------
# directional benchmark (criterion 6)


def test_directional_benchmark():
    with criterion("directional benchmark: refined beats calibrated 0.40 baseline by >= 2 points"):
        t0 = time.perf_counter()
        g = surgical_grammar()
        dur = ag.DurationModel.proportional(ag.DEFAULT_FRAME_SHARES, scale=0.6)
        eps = ag.calibrate_epsilon(g, dur, target_baseline=0.40, pilot=30, seed=1)
        rep = ag.run_benchmark(g, 200, dur, [ag.NoiseModel(epsilon=eps)], seed=2)
        row = rep.rows[0]
        print(f"      noise={row.noise:.3f} baseline={row.baseline_micro:.4f} "
              f"refined={row.refined_micro:.4f} delta={row.delta:+.4f} "
              f"ci95=[{row.ci95[0]:+.4f},{row.ci95[1]:+.4f}]")
        assert abs(row.baseline_micro - 0.40) <= 0.03
        assert row.delta >= 0.02
        elapsed = time.perf_counter() - t0
        assert elapsed < 300.0, f"benchmark took {elapsed:.1f} s (budget 300 s)"


# ---------------------------------------------------------------------------
# metrics hand-check (criterion 7)


def test_metrics_hand_check():
    with criterion("metrics hand-check (4-frame example and perfect prediction)"):
        rep = ag.evaluate(ag.confusion([0, 1, 1, 2], [0, 0, 1, 2], 3))
        assert rep.micro_pr == 0.75
        assert abs(rep.weighted_f1 - 0.75) < 1e-12
        perfect = ag.evaluate(ag.confusion([0, 1, 2], [0, 1, 2], 3))
        for value in (
            perfect.micro_pr,
            perfect.macro_precision,
            perfect.macro_recall,
            perfect.macro_f1,
            perfect.weighted_f1,
        ):
            assert value == 1.0


# ---------------------------------------------------------------------------
# scale and parallel determinism (criterion 8)


def _big_matrix(seed: int = 0) -> ag.ProbMatrix:
    rng = np.random.default_rng(seed)
    sentence = (0, 2, 3, 2)
    t_len, k = 10_000, 6
    bounds = [0, 2500, 5000, 7500, 10_000]
    gt = np.empty(t_len, dtype=np.int64)
    for (a, b), c in zip(zip(bounds, bounds[1:]), sentence):
        gt[a:b] = c
    rows = np.zeros((t_len, k))
    rows[np.arange(t_len), gt] = 1.0
    rows = 0.4 * rows + 0.6 * rng.dirichlet(np.ones(k), size=t_len)
    return ag.ProbMatrix.from_rows(rows)


def test_scale_and_parallel_determinism(tmp_path):
    with criterion("10k-frame parse under 10 s; --jobs 1 == --jobs N"):
        g = surgical_grammar()
        m = _big_matrix()
        t0 = time.perf_counter()
        res = ag.refine(m, g)
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"10k-frame parse took {elapsed:.1f} s (budget 10 s)"
        assert not res.fallback_used
        assert math.isfinite(res.log_data_prob)
        assert math.isfinite(res.log_grammar_prob)

        # CLI batch determinism across worker counts
        from test_cli import run_cli

        gpath = tmp_path / "g.pcfg"
        ag.save_grammar(g, gpath)
        mdir = tmp_path / "mats"
        mdir.mkdir()
        ag.save_matrix_binary(m, mdir / "big.pmat")
        ag.save_matrix_binary(_big_matrix(seed=5), mdir / "big2.pmat")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        code1, _ = run_cli(
            "parse", str(mdir), str(gpath), "--batch", "--jobs", "1", "-o", str(out1)
        )
        code2, _ = run_cli(
            "parse", str(mdir), str(gpath), "--batch", "--jobs", "4", "-o", str(out2)
        )
        assert code1 == 0 and code2 == 0
        for name in ("big.parse.json", "big2.parse.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
