"""Grammar-guided decoding of frame-wise class probability matrices.

Given a T x K row-stochastic matrix of per-frame class probabilities and a
grammar over the class tokens, the parser searches the prefix tree of
segment sentences best-first and returns the most probable sentence whose
segment collapse the grammar accepts, together with the per-frame
alignment of that sentence.

The prefix probability of a sentence prefix l is the total probability
mass of frame labelings whose segment collapse begins with l:

    f(l, t) = sum over labelings of frames 1..t collapsing exactly to l
              of the product of per-frame probabilities
    g(l)    = sum over full labelings whose collapse has l as a prefix

computed with the recurrences

    f(eps, 0) = 1;  f(eps, t >= 1) = 0;  f(l != eps, 0) = 0
    f(l, t) = y_t[k] * (f(l, t-1) + f(l-, t-1)),  k = last(l)
    g(l)    = sum_t f(l-, t-1) * y_t[k]

All mass bookkeeping runs in log space so matrices with tens of thousands
of frames do not underflow; returned probabilities are linear-space.

Prefixes may only be extended by terminals some Earley state of the
grammar allows next, so the search explores grammatical prefixes only.
When the grammar declares a SIL terminal, sentences are matched with SIL
attached logically at both ends (classifier matrices never carry SIL).
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import grammar as G
from .corpus import collapse_segments
from .grammar import NEG_INF, Pcfg, Sentence

#: probability floor applied to matrix entries before the log transform; a
#: hard zero would erase every hypothesis containing that frame label
PROB_FLOOR = 1e-12


class DecoderError(Exception):
    pass


class NoGrammaticalParseError(DecoderError):
    """No grammatical sentence has positive data probability and fallback
    is disabled."""


@dataclass(frozen=True)
class ProbMatrix:
    """T x K per-frame class probabilities; every row sums to 1 (1e-6)."""

    values: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DecoderError("matrix must be 2-dimensional (T x K)")
        t, k = v.shape
        if t < 1 or k < 2:
            raise DecoderError(f"matrix needs T >= 1 and K >= 2, got {t} x {k}")
        if np.isnan(v).any():
            raise DecoderError("matrix contains NaN")
        if (v < 0).any() or (v > 1).any():
            raise DecoderError("matrix entries must lie in [0, 1]")
        sums = v.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > 1e-6)[0]
        if bad.size:
            raise DecoderError(
                f"row {int(bad[0])} sums to {sums[bad[0]]:.8f}, not 1 (1e-6)"
            )
        if len(self.class_names) != k:
            raise DecoderError("class name table size does not match K")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_rows(cls, rows, class_names: Sequence[str] | None = None) -> "ProbMatrix":
        v = np.asarray(rows, dtype=np.float64)
        if class_names is None:
            class_names = tuple(f"PI{i}" for i in range(v.shape[1]))
        return cls(values=v, class_names=tuple(class_names))


@dataclass(frozen=True)
class GepConfig:
    use_grammar_prior: bool = True
    prior_weight: float = 1.0
    max_queue: int = 100_000
    fallback_on_failure: bool = True

    def __post_init__(self):
        if self.prior_weight < 0:
            raise DecoderError("prior_weight must be >= 0")
        if self.max_queue < 1:
            raise DecoderError("max_queue must be >= 1")

    @property
    def effective_weight(self) -> float:
        return self.prior_weight if self.use_grammar_prior else 0.0


@dataclass(frozen=True)
class PrefixScore:
    """Prefix probabilities of one sentence prefix: ``f_row[t]`` is f(l, t)
    for t = 0..T (linear space) and ``g`` the prefix probability g(l).
    ``log_f_row``/``log_g`` carry the same values in log space."""

    prefix: Sentence
    f_row: np.ndarray
    g: float
    log_f_row: np.ndarray
    log_g: float


@dataclass(frozen=True)
class ParseResult:
    sentence: Sentence
    frame_labels: np.ndarray
    data_prob: float
    grammar_prob: float
    combined_score: float
    fallback_used: bool
    log_data_prob: float
    log_grammar_prob: float
    pruned: bool = False

    def to_dict(self, class_names: Sequence[str] | None = None) -> dict:
        names = list(class_names) if class_names is not None else None
        return {
            "sentence": [names[i] for i in self.sentence] if names else list(self.sentence),
            "frame_labels": [int(x) for x in self.frame_labels],
            "data_prob": self.data_prob,
            "grammar_prob": self.grammar_prob,
            "combined_score": self.combined_score,
            "fallback_used": self.fallback_used,
            "log_data_prob": self.log_data_prob,
            "log_grammar_prob": self.log_grammar_prob,
            "pruned": self.pruned,
        }


# ---------------------------------------------------------------------------
# softmax


def softmax(scores: Sequence[float]) -> np.ndarray:
    """Numerically stable softmax: subtracts the max before exponentiating,
    so adding a constant to every score leaves the output unchanged."""
    x = np.asarray(scores, dtype=np.float64)
    if np.isnan(x).any():
        raise DecoderError("softmax input contains NaN")
    x = x - x.max()
    e = np.exp(x)
    return e / e.sum()


# ---------------------------------------------------------------------------
# prefix probabilities


def _log_matrix(m: ProbMatrix) -> np.ndarray:
    return np.log(np.maximum(m.values, PROB_FLOOR))


def _check_prefix(m: ProbMatrix, l: Sequence[int]) -> Sentence:
    l = tuple(l)
    if not l:
        raise DecoderError("prefix must be non-empty")
    for a, b in zip(l, l[1:]):
        if a == b:
            raise DecoderError(
                f"adjacent equal tokens {a} in prefix: segment collapse cannot produce them"
            )
    for tok in l:
        if not (0 <= tok < m.k):
            raise DecoderError(f"token {tok} out of range for K={m.k}")
    return l


def _extend_f(log_f_parent: np.ndarray, log_y_col: np.ndarray) -> np.ndarray:
    """One token extension of the f recurrence, vectorized.

    f(l, t) = y_t[k] * (f(l, t-1) + f(l-, t-1)) unrolls to
    f(l, t) = C_t * sum_{tau<=t} f(l-, tau-1) / C_{tau-1} with the
    cumulative products C_t of y[:, k], evaluated with log-cumsum-exp.
    """
    t_len = log_y_col.shape[0]
    log_c = np.concatenate(([0.0], np.cumsum(log_y_col)))  # C_0..C_T
    a = log_f_parent[:t_len] - log_c[:t_len]
    cums = np.logaddexp.accumulate(a)
    out = np.full(t_len + 1, NEG_INF)
    out[1:] = log_c[1:] + cums
    return out


def _log_g(log_f_parent: np.ndarray, log_y_col: np.ndarray) -> float:
    with np.errstate(invalid="ignore"):
        vals = log_f_parent[:-1] + log_y_col
    finite = vals[vals > NEG_INF]
    if finite.size == 0:
        return NEG_INF
    mx = finite.max()
    return float(mx + np.log(np.exp(finite - mx).sum()))


def prefix_probabilities(m: ProbMatrix, l: Sequence[int]) -> PrefixScore:
    """Compute f(l, t) for t = 0..T and the prefix probability g(l)."""
    l = _check_prefix(m, l)
    log_y = _log_matrix(m)
    t_len = m.t
    log_f = np.full(t_len + 1, NEG_INF)
    log_f[0] = 0.0  # f(eps, 0) = 1
    log_g_val = 0.0
    for tok in l:
        log_g_val = _log_g(log_f, log_y[:, tok])
        log_f = _extend_f(log_f, log_y[:, tok])
    f_row = np.exp(log_f, where=log_f > NEG_INF, out=np.zeros_like(log_f))
    np.minimum(f_row, 1.0, out=f_row)  # guard rounding just above 1
    g_val = min(1.0, math.exp(log_g_val)) if log_g_val > NEG_INF else 0.0
    return PrefixScore(prefix=l, f_row=f_row, g=g_val, log_f_row=log_f, log_g=log_g_val)


# ---------------------------------------------------------------------------
# frame alignment


def align_frames(l: Sequence[int], m: ProbMatrix) -> np.ndarray:
    """Frame labeling maximizing the per-frame probability product among
    labelings whose segment collapse equals ``l``.

    Ties are broken toward the latest possible segment boundaries, resolved
    from the last segment backward.
    """
    l = _check_prefix(m, l)
    n_seg = len(l)
    t_len = m.t
    if n_seg > t_len:
        raise DecoderError(f"sentence has {n_seg} segments but only {t_len} frames")
    log_y = _log_matrix(m)
    v = np.full((n_seg, t_len), NEG_INF)
    switch = np.zeros((n_seg, t_len), dtype=bool)
    v[0, 0] = log_y[0, l[0]]
    for t in range(1, t_len):
        v[0, t] = v[0, t - 1] + log_y[t, l[0]]
        for s in range(1, n_seg):
            stay = v[s, t - 1]
            enter = v[s - 1, t - 1]
            # prefer entering the segment later on exact ties
            if enter >= stay:
                v[s, t] = enter + log_y[t, l[s]]
                switch[s, t] = True
            else:
                v[s, t] = stay + log_y[t, l[s]]
    if v[n_seg - 1, t_len - 1] == NEG_INF:
        raise DecoderError("no feasible alignment")
    labels = np.empty(t_len, dtype=np.int64)
    s = n_seg - 1
    for t in range(t_len - 1, -1, -1):
        labels[t] = l[s]
        if t > 0 and s > 0 and switch[s, t]:
            s -= 1
    return labels


# ---------------------------------------------------------------------------
# Earley recognizer on the original (non-CNF) grammar

_Item = tuple[int, int, int]  # (rule index, dot, origin column)


class _Earley:
    """Incremental Earley recognizer used to compute the set of terminals
    that may extend a token sequence, and acceptance of complete sequences.
    Charts are tuples of item frozensets so prefix states can be shared
    between search nodes."""

    def __init__(self, g: Pcfg):
        self.g = g

    def _closure(self, cols: list[set[_Item]]) -> None:
        k = len(cols) - 1
        g = self.g
        agenda = list(cols[k])
        while agenda:
            item = agenda.pop()
            ridx, dot, org = item
            rule = g.rules[ridx]
            if dot < len(rule.rhs):
                sym = rule.rhs[dot]
                if sym.kind == G.NONTERMINAL:
                    for r2 in g.rules_by_lhs.get(sym.idx, ()):
                        new = (r2, 0, k)
                        if new not in cols[k]:
                            cols[k].add(new)
                            agenda.append(new)
            else:
                # complete: advance items in the origin column waiting on lhs
                for r2, d2, o2 in list(cols[org]):
                    rule2 = g.rules[r2]
                    if d2 < len(rule2.rhs):
                        sym2 = rule2.rhs[d2]
                        if sym2.kind == G.NONTERMINAL and sym2.idx == rule.lhs:
                            new = (r2, d2 + 1, o2)
                            if new not in cols[k]:
                                cols[k].add(new)
                                agenda.append(new)

    def start_chart(self) -> tuple[frozenset, ...]:
        cols: list[set[_Item]] = [set()]
        for r in self.g.rules_by_lhs.get(self.g.start, ()):
            cols[0].add((r, 0, 0))
        self._closure(cols)
        return (frozenset(cols[0]),)

    def advance(self, chart: tuple[frozenset, ...], tok: int) -> tuple[frozenset, ...] | None:
        """Scan terminal ``tok``; returns the extended chart or None when no
        state can consume it."""
        k = len(chart) - 1
        new: set[_Item] = set()
        for ridx, dot, org in chart[k]:
            rule = self.g.rules[ridx]
            if dot < len(rule.rhs):
                sym = rule.rhs[dot]
                if sym.kind == G.TERMINAL and sym.idx == tok:
                    new.add((ridx, dot + 1, org))
        if not new:
            return None
        cols = [set(c) for c in chart] + [new]
        self._closure(cols)
        return tuple(frozenset(c) for c in cols)

    def allowed(self, chart: tuple[frozenset, ...]) -> set[int]:
        out = set()
        for ridx, dot, _ in chart[-1]:
            rule = self.g.rules[ridx]
            if dot < len(rule.rhs) and rule.rhs[dot].kind == G.TERMINAL:
                out.add(rule.rhs[dot].idx)
        return out

    def accepts(self, chart: tuple[frozenset, ...]) -> bool:
        for ridx, dot, org in chart[-1]:
            rule = self.g.rules[ridx]
            if rule.lhs == self.g.start and org == 0 and dot == len(rule.rhs):
                return True
        return False


# ---------------------------------------------------------------------------
# best-first search


@dataclass
class _Node:
    prefix: Sentence
    log_f: np.ndarray
    log_g: float
    chart: tuple


_OPEN, _CLOSED = 1, 0  # closed entries win score ties


def gep_parse(m: ProbMatrix, g: Pcfg, cfg: GepConfig | None = None) -> ParseResult:
    """Best-first search for the grammatical sentence maximizing
    f(l, T) * P(l | g)^prior_weight, with frame labels from align_frames.

    Open prefixes are ranked by g(l) (times a trivial admissible grammar
    bound of 1 when the prior is enabled), so with an unbounded queue the
    returned sentence is the exact argmax.  Equal scores break toward the
    lexicographically smallest token sequence.  When no grammatical
    sentence has positive data probability the per-frame argmax labeling
    is returned with ``fallback_used`` set (or NoGrammaticalParseError is
    raised when fallback is disabled).
    """
    cfg = cfg or GepConfig()
    bad = G.validate(g)
    if bad:
        raise DecoderError("invalid grammar: " + "; ".join(bad))
    w = cfg.effective_weight

    # map grammar terminals onto matrix classes by name; SIL never maps
    term_of_class: dict[int, int] = {}
    for k, name in enumerate(m.class_names):
        tid = g.terminal_ids.get(name)
        if tid is not None and name != G.SIL:
            term_of_class[k] = tid
    class_of_term = {tid: k for k, tid in term_of_class.items()}

    sil = g.sil_id
    earley = _Earley(g)
    cnf = G.to_cnf(g)
    log_y = _log_matrix(m)
    t_len = m.t

    root_chart = earley.start_chart()
    if sil is not None:
        root_chart = earley.advance(root_chart, sil)

    def complete_log_prior(prefix: Sentence) -> float:
        toks = tuple(term_of_class[k] for k in prefix)
        if sil is not None:
            toks = (sil,) + toks + (sil,)
        return G.inside_log(cnf, toks)

    def is_complete(chart) -> bool:
        if sil is None:
            return earley.accepts(chart)
        nxt = earley.advance(chart, sil)
        return nxt is not None and earley.accepts(nxt)

    result: tuple | None = None
    pruned = False
    if root_chart is not None:
        heap: list = []
        counter = 0
        root_log_f = np.full(t_len + 1, NEG_INF)
        root_log_f[0] = 0.0
        root = _Node((), root_log_f, 0.0, root_chart)
        heap.append((-0.0, (), _OPEN, counter, root))
        heapq.heapify(heap)

        while heap:
            neg_score, prefix, flag, _, node = heapq.heappop(heap)
            if flag == _CLOSED:
                result = (prefix, node)  # node is (log_data, log_prior)
                break
            allowed_terms = earley.allowed(node.chart)
            last = prefix[-1] if prefix else None
            for tid in sorted(allowed_terms):
                k = class_of_term.get(tid)
                if k is None or k == last:
                    continue
                chart2 = earley.advance(node.chart, tid)
                if chart2 is None:
                    continue
                log_g_val = _log_g(node.log_f, log_y[:, k])
                if log_g_val == NEG_INF:
                    continue
                log_f2 = _extend_f(node.log_f, log_y[:, k])
                child = _Node(prefix + (k,), log_f2, log_g_val, chart2)
                counter += 1
                heapq.heappush(heap, (-log_g_val, child.prefix, _OPEN, counter, child))
                if len(prefix) + 1 <= t_len and is_complete(chart2):
                    log_data = float(log_f2[t_len])
                    if log_data > NEG_INF:
                        log_prior = complete_log_prior(child.prefix) if w > 0 else 0.0
                        score = log_data + w * log_prior
                        if score > NEG_INF:
                            counter += 1
                            heapq.heappush(
                                heap,
                                (-score, child.prefix, _CLOSED, counter,
                                 (log_data, log_prior)),
                            )
            if len(heap) > cfg.max_queue:
                heap = heapq.nsmallest(cfg.max_queue, heap)
                heapq.heapify(heap)
                pruned = True

    if result is None:
        if not cfg.fallback_on_failure:
            raise NoGrammaticalParseError(
                "no grammatical sentence has positive data probability"
            )
        labels = np.asarray(m.values.argmax(axis=1), dtype=np.int64)
        log_data = float(log_y[np.arange(t_len), labels].sum())
        return ParseResult(
            sentence=tuple(collapse_segments(labels.tolist())),
            frame_labels=labels,
            data_prob=math.exp(log_data) if log_data > NEG_INF else 0.0,
            grammar_prob=0.0,
            combined_score=0.0,
            fallback_used=True,
            log_data_prob=log_data,
            log_grammar_prob=NEG_INF,
            pruned=pruned,
        )

    prefix, (log_data, log_prior) = result
    if w > 0:
        log_prior_full = log_prior
    else:
        log_prior_full = complete_log_prior(prefix)
    labels = align_frames(prefix, m)
    log_combined = log_data + w * log_prior_full
    return ParseResult(
        sentence=prefix,
        frame_labels=labels,
        data_prob=math.exp(log_data) if log_data > NEG_INF else 0.0,
        grammar_prob=math.exp(log_prior_full) if log_prior_full > NEG_INF else 0.0,
        combined_score=math.exp(log_combined) if log_combined > NEG_INF else 0.0,
        fallback_used=False,
        log_data_prob=log_data,
        log_grammar_prob=log_prior_full,
        pruned=pruned,
    )


def refine(m: ProbMatrix, g: Pcfg, cfg: GepConfig | None = None) -> ParseResult:
    """Top-level entry point: grammar-refined sentence and frame labels for
    one probability matrix."""
    return gep_parse(m, g, cfg)


def refine_batch(
    matrices: Sequence[ProbMatrix],
    g: Pcfg,
    cfg: GepConfig | None = None,
    jobs: int | None = None,
) -> list[ParseResult]:
    """Parse several matrices; results are ordered by input index regardless
    of completion order.  ``jobs`` > 1 uses a process pool."""
    if jobs is None or jobs <= 1 or len(matrices) <= 1:
        return [gep_parse(m, g, cfg) for m in matrices]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(gep_parse, m, g, cfg) for m in matrices]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# matrix file I/O

_PMAT_MAGIC = b"PMAT"
_PMAT_VERSION = 1


def save_matrix_csv(m: ProbMatrix, path) -> None:
    """CSV form: header ``y0..y{K-1}``, one row per frame, full precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(f"y{i}" for i in range(m.k)) + "\n")
        for row in m.values:
            f.write(",".join("%.17g" % x for x in row) + "\n")


def load_matrix_csv(path, class_names: Sequence[str] | None = None) -> ProbMatrix:
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        cols = header.split(",")
        if not all(c.strip().startswith("y") for c in cols):
            raise DecoderError("matrix CSV must start with header y0..y{K-1}")
        rows = []
        for lineno, raw in enumerate(f, start=2):
            line = raw.strip()
            if not line:
                continue
            vals = line.split(",")
            if len(vals) != len(cols):
                raise DecoderError(f"line {lineno}: expected {len(cols)} columns")
            rows.append([float(x) for x in vals])
    return ProbMatrix.from_rows(np.asarray(rows), class_names)


def save_matrix_binary(m: ProbMatrix, path) -> None:
    """Binary form: magic PMAT, version byte, little-endian u32 T and K,
    then T*K little-endian float64 values row-major."""
    with open(path, "wb") as f:
        f.write(_PMAT_MAGIC)
        f.write(struct.pack("<B", _PMAT_VERSION))
        f.write(struct.pack("<II", m.t, m.k))
        f.write(np.ascontiguousarray(m.values, dtype="<f8").tobytes())


def load_matrix_binary(path, class_names: Sequence[str] | None = None) -> ProbMatrix:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _PMAT_MAGIC:
            raise DecoderError(f"bad magic {magic!r}: not a PMAT file")
        (version,) = struct.unpack("<B", f.read(1))
        if version != _PMAT_VERSION:
            raise DecoderError(f"unsupported PMAT version {version}")
        t, k = struct.unpack("<II", f.read(8))
        data = f.read(t * k * 8)
        if len(data) != t * k * 8:
            raise DecoderError("truncated PMAT payload")
        v = np.frombuffer(data, dtype="<f8").reshape(t, k)
    return ProbMatrix.from_rows(v, class_names)
