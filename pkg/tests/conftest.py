import random
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from actgram.grammar import Pcfg


def random_grammar(rng: random.Random, n_terminals: int = 4) -> Pcfg:
    """Small random And-Or grammar over terminals k0..k{n-1}.

    Two-level structure (a root Or over short sequences that may reference
    shared Or-nodes), which keeps derivation enumeration finite and cheap.
    """
    terms = [f"k{i}" for i in range(n_terminals)]
    n_or = rng.randint(0, 2)
    or_defs = {}
    for i in range(n_or):
        size = rng.randint(2, min(3, len(terms)))
        alts = rng.sample(terms, size)
        probs = [rng.uniform(0.2, 1.0) for _ in alts]
        total = sum(probs)
        or_defs[f"O{i}"] = [(a, p / total) for a, p in zip(alts, probs)]
    symbols = terms + list(or_defs)
    n_branch = rng.randint(1, 3)
    rules = []
    root_probs = [rng.uniform(0.2, 1.0) for _ in range(n_branch)]
    total = sum(root_probs)
    for b in range(n_branch):
        length = rng.randint(1, 4)
        seq = [rng.choice(symbols) for _ in range(length)]
        rules.append(("S", seq, root_probs[b] / total))
    for name, alts in or_defs.items():
        for a, p in alts:
            rules.append((name, [a], p))
    return Pcfg.from_rules("S", rules)


def random_stochastic_matrix(rng: np.random.Generator, t: int, k: int) -> np.ndarray:
    v = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3.0), size=t)
    return v


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)
