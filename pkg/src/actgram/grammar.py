"""Probabilistic context-free grammars with And/Or structure.

The grammar model distinguishes two kinds of nonterminals: an And-node
expands to all of its children in a fixed order (exactly one rule, with
probability 1), while an Or-node picks one of several branches according
to branch probabilities that sum to 1.  Terminals are the observable
action tokens.  All probability-carrying computations (inside, Viterbi)
run in log space internally and return linear-space values.

Grammars are immutable after construction; every operation here is a pure
function and safe to call concurrently.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TERMINAL = "T"
NONTERMINAL = "N"

AND = "and"
OR = "or"

NEG_INF = float("-inf")

#: Reserved silence token that delimits activity sentences built from corpora.
SIL = "SIL"


class GrammarError(Exception):
    """Base class for grammar-level failures."""


class NoParseError(GrammarError):
    """Raised when a sentence has no derivation under the grammar."""


class DerivationDepthError(GrammarError):
    """Raised when top-down sampling exceeds its recursion budget."""


class Sym(NamedTuple):
    """Reference to a symbol: ``kind`` is TERMINAL or NONTERMINAL, ``idx`` the
    dense id inside that kind's table."""

    kind: str
    idx: int

    def is_terminal(self) -> bool:
        return self.kind == TERMINAL


def term(idx: int) -> Sym:
    return Sym(TERMINAL, idx)


def nonterm(idx: int) -> Sym:
    return Sym(NONTERMINAL, idx)


@dataclass(frozen=True)
class Symbol:
    """Row of a symbol table."""

    id: int
    kind: str
    name: str


@dataclass(frozen=True)
class Rule:
    """Production rule ``lhs -> rhs`` with probability ``prob``.

    ``kind`` is "and" for the single rule of an And-node and "or-branch"
    for each alternative of an Or-node.  ``origin`` tracks the indices of
    the source rules a transformed rule was derived from (used by the CNF
    conversion so Viterbi counts can be mapped back); it is empty for
    hand-built rules.
    """

    lhs: int
    rhs: tuple[Sym, ...]
    prob: float
    kind: str = "or-branch"
    origin: tuple[int, ...] = ()


# A sentence is a tuple of terminal ids.
Sentence = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Pcfg:
    """A stochastic And-Or grammar.

    ``terminals`` and ``nonterminals`` are the symbol tables (index = id).
    ``nt_kinds[i]`` is "and" or "or" for nonterminal i.  ``start`` is the
    nonterminal id of the root.  ``metadata`` is a free-form record (name,
    induction parameters, ...) that never affects semantics.
    """

    terminals: tuple[str, ...]
    nonterminals: tuple[str, ...]
    nt_kinds: tuple[str, ...]
    rules: tuple[Rule, ...]
    start: int
    name: str = "pcfg"
    metadata: dict = field(default_factory=dict)

    @cached_property
    def rules_by_lhs(self) -> dict[int, tuple[int, ...]]:
        by: dict[int, list[int]] = {}
        for i, r in enumerate(self.rules):
            by.setdefault(r.lhs, []).append(i)
        return {k: tuple(v) for k, v in by.items()}

    @cached_property
    def terminal_ids(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.terminals)}

    @cached_property
    def nonterminal_ids(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.nonterminals)}

    def sym_name(self, sym: Sym) -> str:
        table = self.terminals if sym.kind == TERMINAL else self.nonterminals
        return table[sym.idx]

    def symbols(self) -> list[Symbol]:
        """Both symbol tables as a flat list (terminals first)."""
        out = [Symbol(i, TERMINAL, s) for i, s in enumerate(self.terminals)]
        out += [Symbol(i, NONTERMINAL, s) for i, s in enumerate(self.nonterminals)]
        return out

    def tokens_to_names(self, s: Sequence[int]) -> tuple[str, ...]:
        return tuple(self.terminals[t] for t in s)

    def names_to_tokens(self, names: Sequence[str]) -> Sentence:
        ids = self.terminal_ids
        missing = [w for w in names if w not in ids]
        if missing:
            raise GrammarError(f"unknown terminal name(s): {missing}")
        return tuple(ids[w] for w in names)

    @property
    def sil_id(self) -> int | None:
        return self.terminal_ids.get(SIL)

    @classmethod
    def from_rules(
        cls,
        start: str,
        rules: Iterable[tuple[str, str | Sequence[str], float]],
        name: str = "pcfg",
    ) -> "Pcfg":
        """Build a grammar from (lhs, rhs, prob) triples.

        ``rhs`` may be a whitespace-separated string or a sequence of token
        names.  Any name that appears as a lhs is a nonterminal; everything
        else is a terminal.  A nonterminal with a single rule of probability
        1 becomes an And-node, otherwise an Or-node.
        """
        triples = []
        for lhs, rhs, prob in rules:
            toks = tuple(rhs.split()) if isinstance(rhs, str) else tuple(rhs)
            triples.append((lhs, toks, float(prob)))
        nt_names: list[str] = []
        for lhs, _, _ in triples:
            if lhs not in nt_names:
                nt_names.append(lhs)
        if start not in nt_names:
            raise GrammarError(f"start symbol {start!r} has no rules")
        t_names: list[str] = []
        for _, toks, _ in triples:
            for w in toks:
                if w not in nt_names and w not in t_names:
                    t_names.append(w)
        nt_ids = {s: i for i, s in enumerate(nt_names)}
        t_ids = {s: i for i, s in enumerate(t_names)}
        per_lhs: dict[str, int] = {}
        for lhs, _, _ in triples:
            per_lhs[lhs] = per_lhs.get(lhs, 0) + 1
        kinds = tuple(
            AND
            if per_lhs[s] == 1
            and abs(next(p for l, _, p in triples if l == s) - 1.0) < 1e-12
            else OR
            for s in nt_names
        )
        out_rules = []
        for lhs, toks, prob in triples:
            rhs_syms = tuple(
                nonterm(nt_ids[w]) if w in nt_ids else term(t_ids[w]) for w in toks
            )
            kind = AND if kinds[nt_ids[lhs]] == AND else "or-branch"
            out_rules.append(Rule(nt_ids[lhs], rhs_syms, prob, kind))
        return cls(
            terminals=tuple(t_names),
            nonterminals=tuple(nt_names),
            nt_kinds=kinds,
            rules=tuple(out_rules),
            start=nt_ids[start],
            name=name,
        )


# ---------------------------------------------------------------------------
# validation


def validate(g: Pcfg) -> list[str]:
    """Check all grammar invariants; returns a list of violation messages
    (empty iff the grammar is valid).

    Beyond structural checks this verifies that every nonterminal reachable
    from the start symbol has at least one rule and can derive some terminal
    string, so the generated language is non-empty.
    """
    out: list[str] = []
    n_t, n_n = len(g.terminals), len(g.nonterminals)
    if not (0 <= g.start < n_n):
        out.append(f"start id {g.start} out of range")
        return out
    if len(set(g.terminals)) != n_t:
        out.append("duplicate terminal names")
    if len(set(g.nonterminals)) != n_n:
        out.append("duplicate nonterminal names")
    if len(g.nt_kinds) != n_n:
        out.append("nt_kinds length does not match nonterminal table")
        return out

    for i, r in enumerate(g.rules):
        if not (0 <= r.lhs < n_n):
            out.append(f"rule {i}: lhs id {r.lhs} out of range")
            continue
        if len(r.rhs) == 0:
            out.append(f"rule {i}: empty rhs (epsilon rules are not allowed)")
        for sym in r.rhs:
            limit = n_t if sym.kind == TERMINAL else n_n
            if not (0 <= sym.idx < limit):
                out.append(f"rule {i}: rhs symbol {sym} out of range")
        if not (0.0 < r.prob <= 1.0 + 1e-12):
            out.append(f"rule {i}: prob {r.prob} outside (0, 1]")

    for a in range(n_n):
        idxs = g.rules_by_lhs.get(a, ())
        name = g.nonterminals[a]
        if not idxs:
            continue  # only a problem if reachable; checked below
        if g.nt_kinds[a] == AND:
            if len(idxs) != 1:
                out.append(f"and-node {name} has {len(idxs)} rules (must be 1)")
            elif abs(g.rules[idxs[0]].prob - 1.0) > 1e-9:
                out.append(f"and-node {name} rule prob {g.rules[idxs[0]].prob} != 1")
        else:
            total = sum(g.rules[i].prob for i in idxs)
            if abs(total - 1.0) > 1e-9:
                out.append(f"or-node {name} branch probs sum {total:.10g} != 1")

    # reachability from start
    reach = {g.start}
    frontier = [g.start]
    while frontier:
        a = frontier.pop()
        for i in g.rules_by_lhs.get(a, ()):
            for sym in g.rules[i].rhs:
                if sym.kind == NONTERMINAL and 0 <= sym.idx < n_n and sym.idx not in reach:
                    reach.add(sym.idx)
                    frontier.append(sym.idx)

    # productivity fixpoint: a nonterminal is productive if some rule has an
    # all-productive rhs (terminals count as productive)
    productive: set[int] = set()
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.lhs in productive or not (0 <= r.lhs < n_n):
                continue
            if all(
                sym.kind == TERMINAL or sym.idx in productive
                for sym in r.rhs
                if not (sym.kind == NONTERMINAL and not (0 <= sym.idx < n_n))
            ):
                productive.add(r.lhs)
                changed = True
    # report only root causes: ruleless nonterminals first, then cyclic
    # non-productive ones not explained by an already-reported symbol
    reported: set[int] = set()
    for a in sorted(reach):
        if not g.rules_by_lhs.get(a, ()):
            reported.add(a)
            out.append(f"nonterminal {g.nonterminals[a]} is reachable but has no rules (non-productive)")
    for a in sorted(reach):
        if a in productive or a in reported or not g.rules_by_lhs.get(a, ()):
            continue
        explained = all(
            any(
                sym.kind == NONTERMINAL and sym.idx in reported
                for sym in g.rules[i].rhs
            )
            for i in g.rules_by_lhs[a]
        )
        if not explained:
            reported.add(a)
            out.append(f"nonterminal {g.nonterminals[a]} is non-productive")
    return out


def _require_valid(g: Pcfg) -> None:
    bad = validate(g)
    if bad:
        raise GrammarError("invalid grammar: " + "; ".join(bad))


# ---------------------------------------------------------------------------
# Chomsky normal form


def is_cnf(g: Pcfg) -> bool:
    for r in g.rules:
        if len(r.rhs) == 1 and r.rhs[0].kind == TERMINAL:
            continue
        if len(r.rhs) == 2 and all(s.kind == NONTERMINAL for s in r.rhs):
            continue
        return False
    return True


def _fresh_namer(taken: set[str]):
    counter = [0]

    def fresh() -> str:
        while True:
            cand = f"X{counter[0]}"
            counter[0] += 1
            if cand not in taken:
                taken.add(cand)
                return cand

    return fresh


def to_cnf(g: Pcfg) -> Pcfg:
    """Convert to Chomsky normal form (rules A -> B C or A -> a).

    The conversion preserves inside probabilities of every sentence.  Unit
    chains are collapsed with probability products; generated nonterminals
    are named ``X<n>`` in rule order.  Each output rule records the original
    rule indices it was derived from in ``Rule.origin``.

    There are no epsilon rules in this model, so no nullable handling is
    needed.  Grammars containing a cycle of unit rules are collapsed via a
    geometric-series solve, in which case origin tracking is dropped for
    the affected rules.
    """
    _require_valid(g)
    nt_names = list(g.nonterminals)
    taken = set(nt_names) | set(g.terminals)
    fresh = _fresh_namer(taken)

    # working rule form: (lhs, rhs, prob, origins)
    work: list[tuple[int, tuple[Sym, ...], float, tuple[int, ...]]] = []

    # TERM: one shared preterminal per terminal appearing in long rules
    preterm: dict[int, int] = {}

    def preterminal_for(tid: int) -> int:
        if tid not in preterm:
            nt_names.append(fresh())
            preterm[tid] = len(nt_names) - 1
        return preterm[tid]

    for ridx, r in enumerate(g.rules):
        origin = r.origin if r.origin else (ridx,)
        rhs = r.rhs
        if len(rhs) >= 2:
            rhs = tuple(
                nonterm(preterminal_for(s.idx)) if s.kind == TERMINAL else s
                for s in rhs
            )
        work.append((r.lhs, rhs, r.prob, origin))

    # BIN: left-fold sequences longer than 2
    binned: list[tuple[int, tuple[Sym, ...], float, tuple[int, ...]]] = []
    for lhs, rhs, prob, origin in work:
        while len(rhs) > 2:
            nt_names.append(fresh())
            helper = len(nt_names) - 1
            binned.append((helper, rhs[:2], 1.0, ()))
            rhs = (nonterm(helper),) + rhs[2:]
        binned.append((lhs, rhs, prob, origin))
    for tid, a in preterm.items():
        binned.append((a, (term(tid),), 1.0, ()))

    # UNIT: collapse chains A -> B
    n = len(nt_names)
    unit = [(lhs, rhs[0].idx, prob, origin) for lhs, rhs, prob, origin in binned
            if len(rhs) == 1 and rhs[0].kind == NONTERMINAL]
    non_unit = [w for w in binned
                if not (len(w[1]) == 1 and w[1][0].kind == NONTERMINAL)]

    final: list[tuple[int, tuple[Sym, ...], float, tuple[int, ...]]] = []
    if not unit:
        final = non_unit
    else:
        # unit dependency graph; acyclic case enumerates chains exactly so
        # that rule origins stay attached
        adj: dict[int, list[tuple[int, float, tuple[int, ...]]]] = {}
        for a, b, p, o in unit:
            adj.setdefault(a, []).append((b, p, o))
        if _unit_acyclic(adj, n):
            # closure(a) = list of (b, weight, origins) over all unit paths a =>* b
            memo: dict[int, list[tuple[int, float, tuple[int, ...]]]] = {}

            def closure(a: int) -> list[tuple[int, float, tuple[int, ...]]]:
                if a in memo:
                    return memo[a]
                acc: list[tuple[int, float, tuple[int, ...]]] = []
                for b, p, o in adj.get(a, ()):
                    acc.append((b, p, o))
                    for c, q, o2 in closure(b):
                        acc.append((c, p * q, o + o2))
                memo[a] = acc
                return acc

            final = list(non_unit)
            by_lhs: dict[int, list[tuple[tuple[Sym, ...], float, tuple[int, ...]]]] = {}
            for lhs, rhs, prob, origin in non_unit:
                by_lhs.setdefault(lhs, []).append((rhs, prob, origin))
            for a in range(n):
                for b, w, o in closure(a):
                    for rhs, prob, origin in by_lhs.get(b, ()):
                        final.append((a, rhs, w * prob, o + origin))
        else:
            # cyclic unit mass: solve W = (I - U)^-1, drop origin detail
            u_mat = np.zeros((n, n))
            for a, b, p, _ in unit:
                u_mat[a, b] += p
            try:
                w_mat = np.linalg.inv(np.eye(n) - u_mat)
            except np.linalg.LinAlgError as e:
                raise GrammarError(f"divergent unit-rule cycle: {e}") from None
            by_lhs = {}
            for lhs, rhs, prob, origin in non_unit:
                by_lhs.setdefault(lhs, []).append((rhs, prob, origin))
            for a in range(n):
                for b in range(n):
                    w = w_mat[a, b]
                    if abs(w) < 1e-15:
                        continue
                    for rhs, prob, origin in by_lhs.get(b, ()):
                        o = origin if a == b and abs(w - 1.0) < 1e-15 else ()
                        final.append((a, rhs, w * prob, o))

    kinds = _infer_kinds(len(nt_names), final)
    rules = tuple(
        Rule(lhs, rhs, prob, AND if kinds[lhs] == AND else "or-branch", origin)
        for lhs, rhs, prob, origin in final
    )
    out = Pcfg(
        terminals=g.terminals,
        nonterminals=tuple(nt_names),
        nt_kinds=kinds,
        rules=rules,
        start=g.start,
        name=g.name,
        metadata=dict(g.metadata, cnf=True),
    )
    return out


def _unit_acyclic(adj: dict[int, list[tuple[int, float, tuple[int, ...]]]], n: int) -> bool:
    state = [0] * n  # 0 unvisited, 1 in stack, 2 done

    def visit(a: int) -> bool:
        state[a] = 1
        for b, _, _ in adj.get(a, ()):
            if state[b] == 1:
                return False
            if state[b] == 0 and not visit(b):
                return False
        state[a] = 2
        return True

    return all(visit(a) for a in list(adj) if state[a] == 0)


def _infer_kinds(n: int, rules: list[tuple[int, tuple[Sym, ...], float, tuple[int, ...]]]) -> tuple[str, ...]:
    per: dict[int, list[float]] = {}
    for lhs, _, prob, _ in rules:
        per.setdefault(lhs, []).append(prob)
    kinds = []
    for a in range(n):
        probs = per.get(a, [])
        kinds.append(AND if len(probs) == 1 and abs(probs[0] - 1.0) < 1e-9 else OR)
    return tuple(kinds)


# ---------------------------------------------------------------------------
# inside / Viterbi (CYK over CNF, log space)


def _check_sentence(g: Pcfg, s: Sequence[int]) -> Sentence:
    s = tuple(s)
    if not s:
        raise GrammarError("empty sentence")
    for tok in s:
        if not (0 <= tok < len(g.terminals)):
            raise GrammarError(f"unknown terminal id {tok} in sentence")
    return s


def _cnf_tables(g: Pcfg):
    term_rules: dict[int, list[tuple[int, float, int]]] = {}
    bin_rules: list[tuple[int, int, int, float, int]] = []
    for i, r in enumerate(g.rules):
        if len(r.rhs) == 1:
            term_rules.setdefault(r.rhs[0].idx, []).append(
                (r.lhs, math.log(r.prob), i)
            )
        else:
            bin_rules.append(
                (r.lhs, r.rhs[0].idx, r.rhs[1].idx, math.log(r.prob), i)
            )
    return term_rules, bin_rules


def inside_log(g: Pcfg, s: Sequence[int]) -> float:
    """Log of the total probability of all parse trees of ``s`` (``-inf`` if
    the sentence is not in the language).  ``g`` must be in CNF."""
    if not is_cnf(g):
        raise GrammarError("inside requires a CNF grammar (use to_cnf first)")
    s = _check_sentence(g, s)
    n = len(s)
    n_nt = len(g.nonterminals)
    term_rules, bin_rules = _cnf_tables(g)
    chart = np.full((n, n + 1, n_nt), NEG_INF)
    for i, tok in enumerate(s):
        for a, logp, _ in term_rules.get(tok, ()):
            chart[i, i + 1, a] = np.logaddexp(chart[i, i + 1, a], logp)
    for width in range(2, n + 1):
        for i in range(0, n - width + 1):
            j = i + width
            cell = chart[i, j]
            for a, b, c, logp, _ in bin_rules:
                acc = NEG_INF
                for k in range(i + 1, j):
                    lp = chart[i, k, b] + chart[k, j, c]
                    if lp > NEG_INF:
                        acc = np.logaddexp(acc, lp)
                if acc > NEG_INF:
                    cell[a] = np.logaddexp(cell[a], acc + logp)
    return float(chart[0, n, g.start])


def inside(g: Pcfg, s: Sequence[int]) -> float:
    """Probability of ``s`` under ``g``: the sum over all parse trees."""
    lp = inside_log(g, s)
    return math.exp(lp) if lp > NEG_INF else 0.0


@dataclass(frozen=True)
class ParseTree:
    """Derivation tree node.  ``rule`` indexes ``Pcfg.rules`` (None at
    terminal leaves); ``prob`` is the product of rule probabilities in the
    subtree."""

    sym: Sym
    rule: int | None
    children: tuple["ParseTree", ...]
    prob: float

    def leaves(self) -> Sentence:
        if self.sym.kind == TERMINAL:
            return (self.sym.idx,)
        out: tuple[int, ...] = ()
        for c in self.children:
            out += c.leaves()
        return out

    def rule_indices(self) -> list[int]:
        out = [] if self.rule is None else [self.rule]
        for c in self.children:
            out.extend(c.rule_indices())
        return out


def viterbi(g: Pcfg, s: Sequence[int]) -> tuple[ParseTree, float]:
    """Most probable parse tree of ``s`` and its probability.

    Ties are broken toward the smaller split point, then the lower rule
    index, so results are deterministic.  Raises NoParseError when the
    sentence is not in the language.
    """
    if not is_cnf(g):
        raise GrammarError("viterbi requires a CNF grammar (use to_cnf first)")
    s = _check_sentence(g, s)
    n = len(s)
    n_nt = len(g.nonterminals)
    term_rules, bin_rules = _cnf_tables(g)
    best = np.full((n, n + 1, n_nt), NEG_INF)
    back: dict[tuple[int, int, int], tuple[int, int]] = {}
    for i, tok in enumerate(s):
        for a, logp, ridx in term_rules.get(tok, ()):
            if logp > best[i, i + 1, a]:
                best[i, i + 1, a] = logp
                back[(i, i + 1, a)] = (ridx, -1)
    for width in range(2, n + 1):
        for i in range(0, n - width + 1):
            j = i + width
            for k in range(i + 1, j):
                for a, b, c, logp, ridx in bin_rules:
                    lp = best[i, k, b] + best[k, j, c]
                    if lp == NEG_INF:
                        continue
                    cand = lp + logp
                    if cand > best[i, j, a]:
                        best[i, j, a] = cand
                        back[(i, j, a)] = (ridx, k)
    if best[0, n, g.start] == NEG_INF:
        raise NoParseError(
            f"no parse for sentence {g.tokens_to_names(s)} from start symbol"
        )

    def build(i: int, j: int, a: int) -> ParseTree:
        ridx, k = back[(i, j, a)]
        r = g.rules[ridx]
        if k == -1:
            leaf = ParseTree(r.rhs[0], None, (), 1.0)
            return ParseTree(nonterm(a), ridx, (leaf,), r.prob)
        left = build(i, k, r.rhs[0].idx)
        right = build(k, j, r.rhs[1].idx)
        return ParseTree(nonterm(a), ridx, (left, right), r.prob * left.prob * right.prob)

    tree = build(0, n, g.start)
    return tree, math.exp(float(best[0, n, g.start]))


# ---------------------------------------------------------------------------
# corpus likelihood


def sentence_log_probs(g: Pcfg, corpus: Sequence[Sequence[int]]) -> list[float]:
    """Per-sentence inside log probabilities (diagnostics for log_likelihood)."""
    if len(corpus) == 0:
        raise GrammarError("empty corpus")
    cnf = g if is_cnf(g) else to_cnf(g)
    return [inside_log(cnf, s) for s in corpus]


def log_likelihood(g: Pcfg, corpus: Sequence[Sequence[int]]) -> float:
    """Sum of log inside probabilities over the corpus.

    Returns ``-inf`` when any sentence is outside the language.  The
    grammar is converted to CNF internally if needed.
    """
    lps = sentence_log_probs(g, corpus)
    if any(lp == NEG_INF for lp in lps):
        return NEG_INF
    return float(sum(lps))


# ---------------------------------------------------------------------------
# sampling


def sample(g: Pcfg, seed: int = 0, max_depth: int = 64) -> Sentence:
    """Draw one sentence by top-down expansion.

    And-nodes expand all children in recorded order; Or-nodes choose one
    branch with its branch probability.  Deterministic for a given seed.
    Raises DerivationDepthError when expansion nests deeper than
    ``max_depth`` (recursion guard for ill-behaved grammars).
    """
    _require_valid(g)
    rng = random.Random(seed)
    out: list[int] = []

    def expand(a: int, depth: int) -> None:
        if depth > max_depth:
            raise DerivationDepthError(
                f"derivation exceeded max_depth={max_depth} at {g.nonterminals[a]}"
            )
        idxs = g.rules_by_lhs[a]
        if len(idxs) == 1:
            rule = g.rules[idxs[0]]
        else:
            u = rng.random()
            acc = 0.0
            rule = g.rules[idxs[-1]]
            for i in idxs:
                acc += g.rules[i].prob
                if u < acc:
                    rule = g.rules[i]
                    break
        for sym in rule.rhs:
            if sym.kind == TERMINAL:
                out.append(sym.idx)
            else:
                expand(sym.idx, depth + 1)

    expand(g.start, 0)
    return tuple(out)


# ---------------------------------------------------------------------------
# DOT export


def to_dot(g: Pcfg) -> str:
    """Graphviz DOT text for the grammar.

    And-nodes render as filled boxes and Or-nodes as filled ellipses.
    Or-node out-edges carry the branch probability (3 decimals); And-node
    out-edges carry the bracketed expansion order.  Or branches with more
    than one rhs symbol get an intermediate sequence box.  Output is
    byte-deterministic: nodes are emitted in id order, edges in rule order.
    """
    lines = [f'digraph "{g.name}" {{']
    lines.append("  rankdir=TB;")
    for i, name in enumerate(g.nonterminals):
        if not g.rules_by_lhs.get(i):
            continue
        if g.nt_kinds[i] == AND:
            lines.append(
                f'  n{i} [label="{name}", shape=box, style=filled, fillcolor="#f2c4cf"];'
            )
        else:
            lines.append(
                f'  n{i} [label="{name}", shape=ellipse, style=filled, fillcolor="#d9c7ee"];'
            )
    used_terms = sorted(
        {s.idx for r in g.rules for s in r.rhs if s.kind == TERMINAL}
    )
    for i in used_terms:
        lines.append(f'  t{i} [label="{g.terminals[i]}", shape=plaintext];')

    def node_ref(sym: Sym) -> str:
        return f"t{sym.idx}" if sym.kind == TERMINAL else f"n{sym.idx}"

    branch_counter: dict[int, int] = {}
    for ridx, r in enumerate(g.rules):
        if g.nt_kinds[r.lhs] == AND:
            for order, sym in enumerate(r.rhs, start=1):
                lines.append(f'  n{r.lhs} -> {node_ref(sym)} [label="[{order}]"];')
        else:
            if len(r.rhs) == 1:
                lines.append(
                    f'  n{r.lhs} -> {node_ref(r.rhs[0])} [label="{r.prob:.3f}"];'
                )
            else:
                b = branch_counter.get(r.lhs, 0)
                branch_counter[r.lhs] = b + 1
                bname = f"n{r.lhs}b{b}"
                lines.append(
                    f'  {bname} [label="", shape=box, style=filled, fillcolor="#f2c4cf"];'
                )
                lines.append(f'  n{r.lhs} -> {bname} [label="{r.prob:.3f}"];')
                for order, sym in enumerate(r.rhs, start=1):
                    lines.append(f'  {bname} -> {node_ref(sym)} [label="[{order}]"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# text serialization

_FLOAT_FMT = "%.17g"


def format_grammar(g: Pcfg) -> str:
    """Canonical line-oriented text form.

    Header ``pcfg <name>``, then terminal lines ``T <id> <name>``,
    nonterminal lines ``N <id> <name> <and|or>``, rule lines
    ``R <lhs-id> <prob> <rhs>...`` where each rhs entry is ``T<i>`` or
    ``N<i>`` (terminal and nonterminal id spaces overlap, so entries are
    kind-tagged), and finally ``S <start-id>``.  Parsing then serializing
    is byte-identical modulo comments.
    """
    lines = [f"pcfg {g.name}"]
    for i, name in enumerate(g.terminals):
        lines.append(f"T {i} {name}")
    for i, name in enumerate(g.nonterminals):
        lines.append(f"N {i} {name} {g.nt_kinds[i]}")
    for r in g.rules:
        rhs = " ".join(f"{s.kind}{s.idx}" for s in r.rhs)
        lines.append(f"R {r.lhs} {_FLOAT_FMT % r.prob} {rhs}")
    lines.append(f"S {g.start}")
    return "\n".join(lines) + "\n"


def parse_grammar(text: str) -> Pcfg:
    """Parse the text form produced by :func:`format_grammar`.

    Lines starting with ``#`` and blank lines are ignored.  Raises
    GrammarError with a line number on malformed input.
    """
    name = "pcfg"
    terms: dict[int, str] = {}
    nts: dict[int, str] = {}
    kinds: dict[int, str] = {}
    rules: list[tuple[int, float, list[str]]] = []
    start: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "pcfg":
                name = parts[1] if len(parts) > 1 else "pcfg"
            elif parts[0] == "T":
                terms[int(parts[1])] = parts[2]
            elif parts[0] == "N":
                nts[int(parts[1])] = parts[2]
                kinds[int(parts[1])] = parts[3]
            elif parts[0] == "R":
                rules.append((int(parts[1]), float(parts[2]), parts[3:]))
            elif parts[0] == "S":
                start = int(parts[1])
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as e:
            raise GrammarError(f"line {lineno}: malformed grammar line ({e})") from None
    if start is None:
        raise GrammarError("missing start line 'S <id>'")
    n_t = len(terms)
    n_n = len(nts)
    if sorted(terms) != list(range(n_t)) or sorted(nts) != list(range(n_n)):
        raise GrammarError("symbol ids must be dense starting at 0")
    out_rules = []
    for lhs, prob, rhs_tags in rules:
        rhs = []
        for tag in rhs_tags:
            if not tag or tag[0] not in (TERMINAL, NONTERMINAL):
                raise GrammarError(f"malformed rhs entry {tag!r}")
            rhs.append(Sym(tag[0], int(tag[1:])))
        kind = AND if kinds.get(lhs) == AND else "or-branch"
        out_rules.append(Rule(lhs, tuple(rhs), prob, kind))
    return Pcfg(
        terminals=tuple(terms[i] for i in range(n_t)),
        nonterminals=tuple(nts[i] for i in range(n_n)),
        nt_kinds=tuple(kinds[i] for i in range(n_n)),
        rules=tuple(out_rules),
        start=start,
        name=name,
    )


def save_grammar(g: Pcfg, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_grammar(g))


def load_grammar(path) -> Pcfg:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read())
