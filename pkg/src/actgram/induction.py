"""Grammar induction from activity sentence corpora.

The learner follows the pattern-distillation recipe: corpus sentences are
held as paths over a growing lexicon of units in an RDS graph; a motif
scan flags sub-paths whose boundary transition probabilities drop sharply
(both directions below eta, one-sided binomial significance at alpha);
the best candidate is adopted as a new composite (And) unit and rewired
into the paths; a context-window pass then groups interchangeable units
into equivalence (Or) classes.  The loop repeats until no candidate
survives, and a root Or-node over the distilled sentence forms guarantees
the training corpus stays inside the language.

Counting conventions the scan depends on (they make the degenerate cases
behave):

* paths carry explicit begin/end markers, and a scan window may include
  them: nothing ever continues past a marker, so the continuation count
  beyond a sentence boundary is honestly zero (maximal drop);
* occurrence counts are position counts across all paths, not path
  counts, so repeats inside one sentence add support.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from scipy.stats import binom

from .grammar import AND, OR, Pcfg, Rule, Sym, nonterm, term

BEGIN = 0
END = 1
_N_MARKERS = 2


class InductionError(Exception):
    pass


@dataclass(frozen=True)
class AdiosParams:
    """Induction hyperparameters.

    eta: divergence threshold on the boundary decrease ratios.
    alpha: one-sided significance level for the boundary drop test.
    context_window: window width for equivalence-class bootstrapping.
    bootstrap_threshold: Jaccard overlap needed to group two units.
    max_iterations: cap on pattern adoptions (0 = pure memorization).
    """

    eta: float = 0.9
    alpha: float = 0.08
    context_window: int = 3
    bootstrap_threshold: float = 0.65
    max_iterations: int = 50

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise InductionError(f"eta must lie in (0, 1), got {self.eta}")
        if not (0.0 < self.alpha < 1.0):
            raise InductionError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.context_window < 2:
            raise InductionError("context_window must be >= 2")
        if not (0.0 < self.bootstrap_threshold <= 1.0):
            raise InductionError("bootstrap_threshold must lie in (0, 1]")
        if self.max_iterations < 0:
            raise InductionError("max_iterations must be >= 0")


@dataclass(frozen=True)
class Unit:
    """Lexicon unit: a terminal token, an adopted pattern (And), or an
    equivalence class (Or)."""

    name: str
    kind: str  # "marker" | "terminal" | "pattern" | "class"
    parts: tuple[int, ...] = ()  # pattern: ordered sub-units; class: members


@dataclass
class RdsGraph:
    """Corpus sentences as paths over the current lexicon.

    Paths always start with the begin marker and end with the end marker.
    The occurrence index maps a unit to its (path, position) sites and is
    rebuilt after every rewiring.
    """

    units: list[Unit]
    paths: list[list[int]]

    def __post_init__(self):
        self._occ_cache: dict[tuple[int, ...], int] = {}
        self.reindex()

    def reindex(self) -> None:
        self.index: dict[int, list[tuple[int, int]]] = {}
        for pi, path in enumerate(self.paths):
            for pos, u in enumerate(path):
                self.index.setdefault(u, []).append((pi, pos))
        self._occ_cache = {}

    def occurrences(self, seq: Sequence[int]) -> list[tuple[int, int]]:
        """All (path, position) sites where ``seq`` occurs contiguously."""
        seq = tuple(seq)
        out = []
        for pi, pos in self.index.get(seq[0], ()):
            path = self.paths[pi]
            if pos + len(seq) <= len(path) and tuple(path[pos : pos + len(seq)]) == seq:
                out.append((pi, pos))
        return out

    def occ(self, seq: Sequence[int]) -> int:
        seq = tuple(seq)
        hit = self._occ_cache.get(seq)
        if hit is None:
            hit = len(self.occurrences(seq))
            self._occ_cache[seq] = hit
        return hit

    def total_tokens(self) -> int:
        return sum(len(p) for p in self.paths)

    def add_pattern(self, parts: Sequence[int]) -> int:
        """Adopt a pattern unit and rewire every occurrence (left-to-right,
        non-overlapping).  Total path token count strictly decreases."""
        parts = tuple(parts)
        if len(parts) < 2:
            raise InductionError("patterns must span at least two units")
        uid = len(self.units)
        self.units.append(Unit(name=f"P{sum(1 for u in self.units if u.kind == 'pattern')}",
                               kind="pattern", parts=parts))
        n = len(parts)
        for pi, path in enumerate(self.paths):
            out: list[int] = []
            i = 0
            while i < len(path):
                if tuple(path[i : i + n]) == parts:
                    out.append(uid)
                    i += n
                else:
                    out.append(path[i])
                    i += 1
            self.paths[pi] = out
        self.reindex()
        return uid

    def add_class(self, members: Sequence[int]) -> int:
        """Adopt an equivalence class and replace every path occurrence of a
        member with the class unit.  Token count is unchanged.

        When the member set contains existing class units, the lowest such
        class is extended in place and the others merge into it (patterns
        that referenced a merged-away class are repointed).  Extension only
        ever adds members, so the grammar language grows monotonically and
        training coverage is preserved.
        """
        members = set(members)
        if len(members) < 2:
            raise InductionError("equivalence classes need at least two members")
        class_ids = sorted(u for u in members if self.units[u].kind == "class")
        flat: set[int] = set()
        for u in members:
            if self.units[u].kind == "class":
                flat.update(self.units[u].parts)
            else:
                flat.add(u)
        if class_ids:
            target = class_ids[0]
            merged_away = class_ids[1:]
            new_parts = tuple(sorted(set(self.units[target].parts) | flat))
            if new_parts == self.units[target].parts and not merged_away:
                return target  # nothing new
            self.units[target] = Unit(self.units[target].name, "class", new_parts)
        else:
            target = len(self.units)
            merged_away = []
            n_class = sum(1 for u in self.units if u.kind in ("class", "dead-class"))
            self.units.append(
                Unit(name=f"E{n_class}", kind="class", parts=tuple(sorted(flat)))
            )
        replace = (flat | set(merged_away)) - {target}
        for pi, path in enumerate(self.paths):
            self.paths[pi] = [target if u in replace else u for u in path]
        if merged_away:
            for i, u in enumerate(self.units):
                if u.kind == "pattern" and any(p in merged_away for p in u.parts):
                    self.units[i] = Unit(
                        u.name, "pattern",
                        tuple(target if p in merged_away else p for p in u.parts),
                    )
            for c in merged_away:
                self.units[c] = Unit(self.units[c].name, "dead-class", ())
        self.reindex()
        return target


@dataclass(frozen=True)
class PatternCandidate:
    units: tuple[int, ...]  # marker-stripped sub-path
    d_left: float
    d_right: float
    significance: float  # max of the two boundary p-values
    support: int
    first_site: tuple[int, int]


@dataclass(frozen=True)
class EquivalenceClass:
    members: tuple[int, ...]
    context: tuple[tuple[int, ...], tuple[int, ...]]  # fixed flanks around the slot
    overlap: float  # smallest pairwise Jaccard that licensed the class


# ---------------------------------------------------------------------------
# graph construction


def build_rds(corpus: Sequence[Sequence[str]]) -> RdsGraph:
    """One marker-delimited path per corpus sentence over the terminal
    lexicon (token names in order of first appearance)."""
    if len(corpus) == 0:
        raise InductionError("empty corpus")
    units: list[Unit] = [Unit("<", "marker"), Unit(">", "marker")]
    ids: dict[str, int] = {}
    paths: list[list[int]] = []
    for si, sent in enumerate(corpus):
        if len(sent) == 0:
            raise InductionError(f"sentence {si} is empty")
        path = [BEGIN]
        for w in sent:
            if w not in ids:
                ids[w] = len(units)
                units.append(Unit(w, "terminal"))
            path.append(ids[w])
        path.append(END)
        paths.append(path)
    return RdsGraph(units=units, paths=paths)


# ---------------------------------------------------------------------------
# motif extraction


def _boundary_stats(graph: RdsGraph, path: list[int], i: int, j: int, eta: float):
    """Decrease ratios and p-values for window path[i..j] (inclusive).

    Rightward probabilities are anchored at i: P_R(k -> k+1) =
    occ(path[i..k+1]) / occ(path[i..k]); the drop at the right boundary
    compares the continuation past j with the last in-window transition.
    Continuations beyond the path end count zero.  Leftward is symmetric.
    """
    w = tuple(path[i : j + 1])
    n = graph.occ(w)

    prev_r = graph.occ(w) / graph.occ(w[:-1])
    if j + 1 < len(path):
        k_r = graph.occ(w + (path[j + 1],))
    else:
        k_r = 0
    d_r = (k_r / n) / prev_r
    p0_r = min(1.0, eta * prev_r)
    pval_r = float(binom.cdf(k_r, n, p0_r))

    prev_l = graph.occ(w) / graph.occ(w[1:])
    if i - 1 >= 0:
        k_l = graph.occ((path[i - 1],) + w)
    else:
        k_l = 0
    d_l = (k_l / n) / prev_l
    p0_l = min(1.0, eta * prev_l)
    pval_l = float(binom.cdf(k_l, n, p0_l))

    return d_r, d_l, pval_r, pval_l, n


def mex_scan(graph: RdsGraph, params: AdiosParams) -> list[PatternCandidate]:
    """Flag sub-paths whose boundary transition probabilities drop sharply.

    A window is a candidate when both decrease ratios fall below eta and
    the one-sided binomial test on the continuation counts is significant
    on both boundaries.  ``alpha`` is a familywise level: the per-window
    threshold is alpha divided by the number of distinct windows tested in
    this scan, so a null corpus stays candidate-free no matter how many
    windows it offers.  Candidates are deduplicated by content and ordered
    by significance, then support, then leftmost occurrence.
    """
    scored: dict[tuple[int, ...], tuple] = {}
    tested: set[tuple[int, ...]] = set()
    for pi, path in enumerate(graph.paths):
        m = len(path)
        for i in range(0, m - 1):
            for j in range(i + 1, m):
                w = tuple(path[i : j + 1])
                if w in tested:
                    continue
                # strip markers from the stored pattern
                core = w
                if core and core[0] == BEGIN:
                    core = core[1:]
                if core and core[-1] == END:
                    core = core[:-1]
                if len(core) < 2 or BEGIN in core or END in core:
                    continue
                tested.add(w)
                d_r, d_l, pval_r, pval_l, n = _boundary_stats(graph, path, i, j, params.eta)
                if d_r >= params.eta or d_l >= params.eta:
                    continue
                sig = max(pval_r, pval_l)
                site = graph.occurrences(w)[0]
                cand = PatternCandidate(
                    units=core, d_left=d_l, d_right=d_r,
                    significance=sig, support=n, first_site=site,
                )
                cur = scored.get(core)
                if cur is None or (cand.significance, -cand.support, cand.first_site) < (
                    cur.significance, -cur.support, cur.first_site
                ):
                    scored[core] = cand
    threshold = params.alpha / max(1, len(tested))
    return sorted(
        (c for c in scored.values() if c.significance <= threshold),
        key=lambda c: (c.significance, -c.support, c.first_site, c.units),
    )


# ---------------------------------------------------------------------------
# equivalence classes


def _slot_contexts(graph: RdsGraph, window: int) -> dict[int, set]:
    """Context sets per unit: a window of ``window`` consecutive slots slides
    along each path; each interior slot in turn is the variable one and the
    fixed flanks around it form the context."""
    ctx: dict[int, set] = {}
    for path in graph.paths:
        m = len(path)
        for start in range(0, m - window + 1):
            chunk = path[start : start + window]
            for v in range(1, window - 1):
                u = chunk[v]
                if u in (BEGIN, END):
                    continue
                key = (tuple(chunk[:v]), tuple(chunk[v + 1 :]))
                ctx.setdefault(u, set()).add(key)
    return ctx


def bootstrap_generalize(graph: RdsGraph, params: AdiosParams) -> list[EquivalenceClass]:
    """Group units that fill the same variable slot in shared fixed contexts.

    Two units join when the Jaccard overlap of their context sets reaches
    the bootstrap threshold; classes are the connected components of that
    relation (at least two members).  Returned classes are not yet adopted
    into the graph.
    """
    ctx = _slot_contexts(graph, params.context_window)
    units = sorted(u for u in ctx if graph.units[u].kind != "marker")
    parent = {u: u for u in units}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    overlaps: dict[tuple[int, int], float] = {}
    for ai in range(len(units)):
        for bi in range(ai + 1, len(units)):
            a, b = units[ai], units[bi]
            inter = len(ctx[a] & ctx[b])
            if inter == 0:
                continue
            jac = inter / len(ctx[a] | ctx[b])
            if jac >= params.bootstrap_threshold:
                overlaps[(a, b)] = jac
                parent[find(a)] = find(b)

    groups: dict[int, list[int]] = {}
    for u in units:
        groups.setdefault(find(u), []).append(u)
    out = []
    for members in groups.values():
        if len(members) < 2:
            continue
        members = tuple(sorted(members))
        shared = set.intersection(*(ctx[u] for u in members))
        context = min(shared) if shared else ((), ())
        lo = min(
            overlaps.get((a, b), overlaps.get((b, a), 1.0))
            for ii, a in enumerate(members)
            for b in members[ii + 1 :]
            if (a, b) in overlaps or (b, a) in overlaps
        )
        out.append(EquivalenceClass(members=members, context=context, overlap=lo))
    out.sort(key=lambda c: c.members)
    return out


# ---------------------------------------------------------------------------
# induction driver


def induce(corpus: Sequence[Sequence[str]], params: AdiosParams | None = None,
           name: str = "induced") -> Pcfg:
    """Learn an And-Or grammar from a corpus of token-name sentences.

    Iterates motif scan -> adopt the best candidate -> rewire ->
    bootstrap equivalence classes, until no candidate survives or
    ``max_iterations`` adoptions happened.  Patterns become And-nodes,
    classes become Or-nodes, and a root Or-node over the distilled
    sentence forms guarantees inside(g, c) > 0 for every training
    sentence.
    """
    params = params or AdiosParams()
    graph = build_rds(corpus)
    for _ in range(params.max_iterations):
        cands = mex_scan(graph, params)
        if not cands:
            break
        before = graph.total_tokens()
        graph.add_pattern(cands[0].units)
        assert graph.total_tokens() < before
        for ec in bootstrap_generalize(graph, params):
            graph.add_class(ec.members)
    return grammar_from_graph(graph, corpus_size=len(corpus), name=name,
                              params=params)


def grammar_from_graph(graph: RdsGraph, corpus_size: int, name: str = "induced",
                       params: AdiosParams | None = None) -> Pcfg:
    """Emit the Pcfg for the current graph state: root Or over distilled
    sentence forms, And rules for patterns, Or rules for classes."""
    # terminal table: unit order restricted to terminals
    term_ids: dict[int, int] = {}
    terminals: list[str] = []
    for uid, u in enumerate(graph.units):
        if u.kind == "terminal":
            term_ids[uid] = len(terminals)
            terminals.append(u.name)

    # distilled sentence forms in first-appearance order
    forms: list[tuple[int, ...]] = []
    counts: dict[tuple[int, ...], int] = {}
    for path in graph.paths:
        form = tuple(path[1:-1])
        if form not in counts:
            forms.append(form)
        counts[form] = counts.get(form, 0) + 1

    # nonterminal table: root first, then live composite units in adoption order
    nonterminals = ["S"]
    nt_kinds = [OR]
    nt_of_unit: dict[int, int] = {}
    for uid, u in enumerate(graph.units):
        if u.kind in ("pattern", "class"):
            nt_of_unit[uid] = len(nonterminals)
            nonterminals.append(u.name)
            nt_kinds.append(AND if u.kind == "pattern" else OR)

    def unit_sym(uid: int) -> Sym:
        if uid in term_ids:
            return term(term_ids[uid])
        return nonterm(nt_of_unit[uid])

    rules: list[Rule] = []
    total = sum(counts.values())
    for form in forms:
        rules.append(
            Rule(0, tuple(unit_sym(u) for u in form), counts[form] / total, "or-branch")
        )
    for uid, u in enumerate(graph.units):
        if u.kind == "pattern":
            rules.append(Rule(nt_of_unit[uid], tuple(unit_sym(p) for p in u.parts), 1.0, AND))
        elif u.kind == "class":
            p = 1.0 / len(u.parts)
            for mem in u.parts:
                rules.append(Rule(nt_of_unit[uid], (unit_sym(mem),), p, "or-branch"))

    meta = {"corpus_size": corpus_size}
    if params is not None:
        meta.update(
            eta=params.eta, alpha=params.alpha, context_window=params.context_window,
            bootstrap_threshold=params.bootstrap_threshold,
            max_iterations=params.max_iterations,
        )
    return Pcfg(
        terminals=tuple(terminals),
        nonterminals=tuple(nonterminals),
        nt_kinds=tuple(nt_kinds),
        rules=tuple(rules),
        start=0,
        name=name,
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# branch probability estimation


def estimate_probs(g: Pcfg, corpus: Sequence[Sequence[str]]) -> Pcfg:
    """Re-estimate Or-branch probabilities from Viterbi parses of the corpus.

    Each sentence is parsed once (via the CNF form, whose rules remember
    their source rules); branch counts get add-one smoothing:
    prob = (count + 1) / sum over siblings (count + 1).  And rules keep
    probability 1.  Sentences outside the language raise InductionError.
    """
    from . import grammar as gr

    if len(corpus) == 0:
        raise InductionError("empty corpus")
    cnf = gr.to_cnf(g)
    counts = [0] * len(g.rules)
    bad = []
    for si, sent in enumerate(corpus):
        try:
            toks = g.names_to_tokens(sent)
            tree, _ = gr.viterbi(cnf, toks)
        except gr.GrammarError:
            bad.append(si)
            continue
        for ridx in tree.rule_indices():
            for orig in cnf.rules[ridx].origin:
                counts[orig] += 1
    if bad:
        raise InductionError(
            f"sentence(s) outside the grammar language at indices {bad}"
        )
    new_rules = []
    for i, r in enumerate(g.rules):
        if g.nt_kinds[r.lhs] == AND:
            new_rules.append(r)
            continue
        siblings = g.rules_by_lhs[r.lhs]
        denom = sum(counts[j] + 1 for j in siblings)
        new_rules.append(replace(r, prob=(counts[i] + 1) / denom))
    return Pcfg(
        terminals=g.terminals,
        nonterminals=g.nonterminals,
        nt_kinds=g.nt_kinds,
        rules=tuple(new_rules),
        start=g.start,
        name=g.name,
        metadata=dict(g.metadata, estimated=True),
    )
