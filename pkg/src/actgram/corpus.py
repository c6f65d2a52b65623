"""Building activity-label corpora from frame-level annotations.

A corpus sentence is a sequence of class tokens produced by collapsing a
run of per-frame labels into segments and wrapping the result in the SIL
silence delimiter.  Token names follow the stable ``PI<k>`` convention so
corpora survive class-map edits; a class map carries the sidecar
(verb, target) names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .grammar import SIL


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class PiClass:
    """One primary-intention class: a (verb, target) pair with a dense id."""

    id: int
    verb: str
    target: str

    @property
    def token(self) -> str:
        return f"PI{self.id}"


@dataclass(frozen=True)
class FrameAnnotation:
    frame_index: int
    verb: str
    target: str


@dataclass(frozen=True)
class ClassMap:
    """Total mapping from (verb, target) pairs to class ids.

    Several raw pairs may merge into one class; ``classes`` holds the
    canonical (verb, target) name per id.
    """

    classes: tuple[PiClass, ...]
    pairs: tuple[tuple[str, str, int], ...]  # (verb, target, class_id), may merge

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise CorpusError("class ids must be dense starting at 0")
        if len({(c.verb, c.target) for c in self.classes}) != len(self.classes):
            raise CorpusError("duplicate (verb, target) among classes")
        for v, t, cid in self.pairs:
            if not (0 <= cid < len(self.classes)):
                raise CorpusError(f"pair ({v}, {t}) maps to unknown class id {cid}")

    @property
    def lookup(self) -> dict[tuple[str, str], int]:
        return {(v, t): cid for v, t, cid in self.pairs}

    @property
    def k(self) -> int:
        return len(self.classes)

    def tokens(self) -> tuple[str, ...]:
        return tuple(c.token for c in self.classes)


# Default schema for the Calot-triangle dissection phase of laparoscopic
# cholecystectomy: six verb-target classes; dissect/peritoneum,
# dissect/omentum and cut/peritoneum all merge into dissect/fat.
_DEFAULT_CLASSES = (
    PiClass(0, "dissect", "cystic_duct"),
    PiClass(1, "aspirate", "fluid"),
    PiClass(2, "dissect", "gallbladder"),
    PiClass(3, "dissect", "cystic_artery"),
    PiClass(4, "dissect", "cystic_plate"),
    PiClass(5, "dissect", "fat"),
)

#: Observed frame share (percent) per default class id; useful as a prior
#: for duration models in synthetic data.
DEFAULT_FRAME_SHARES = (30.25, 2.07, 41.21, 12.05, 11.44, 2.98)


def default_class_map() -> ClassMap:
    pairs = [(c.verb, c.target, c.id) for c in _DEFAULT_CLASSES]
    pairs += [
        ("dissect", "peritoneum", 5),
        ("dissect", "omentum", 5),
        ("cut", "peritoneum", 5),
    ]
    return ClassMap(classes=_DEFAULT_CLASSES, pairs=tuple(pairs))


# ---------------------------------------------------------------------------
# operations


def map_classes(frames: Sequence[FrameAnnotation], cmap: ClassMap) -> list[int]:
    """Map annotations to class ids, order-preserving.

    Raises CorpusError naming the pair and frame index when a (verb, target)
    pair is missing from the map.
    """
    table = cmap.lookup
    out = []
    for fa in frames:
        key = (fa.verb, fa.target)
        if key not in table:
            raise CorpusError(
                f"unmapped pair ({fa.verb}, {fa.target}) at frame {fa.frame_index}"
            )
        out.append(table[key])
    return out


def collapse_segments(frame_ids: Sequence) -> tuple:
    """Run-length collapse of a frame label sequence into a segment sentence.

    Works on any token type (class ids or names).  Empty input gives the
    empty sentence.
    """
    out = []
    for x in frame_ids:
        if not out or out[-1] != x:
            out.append(x)
    return tuple(out)


def wrap_sil(s: Sequence[str]) -> tuple[str, ...]:
    """Add the SIL delimiter at both ends of a token-name sentence."""
    s = tuple(s)
    if SIL in s:
        raise CorpusError("sentence already contains SIL tokens")
    return (SIL,) + s + (SIL,)


def strip_sil(s: Sequence[str]) -> tuple[str, ...]:
    """Remove leading and trailing SIL delimiters (inverse of wrap_sil)."""
    s = list(s)
    while s and s[0] == SIL:
        s.pop(0)
    while s and s[-1] == SIL:
        s.pop()
    return tuple(s)


# ---------------------------------------------------------------------------
# file I/O

Corpus = list[tuple[str, ...]]


def load_corpus(path, class_table: Iterable[str] | None = None) -> Corpus:
    """Read a corpus text file: one sentence per line, whitespace-separated
    token names, ``#`` comments; blank (including tab-only) lines skipped.

    When ``class_table`` is given, every non-SIL token must appear in it;
    violations raise CorpusError with the line number.
    """
    allowed = None if class_table is None else set(class_table) | {SIL}
    out: Corpus = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = tuple(line.split())
            if allowed is not None:
                bad = [t for t in toks if t not in allowed]
                if bad:
                    raise CorpusError(f"line {lineno}: unknown token(s) {bad}")
            out.append(toks)
    return out


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus:
            f.write(" ".join(s) + "\n")


def load_frame_annotations(path) -> list[FrameAnnotation]:
    """Read a JSON array of {"frame": int, "verb": str, "target": str}
    records; result is sorted by frame index, duplicates rejected."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise CorpusError("annotation file must contain a JSON array")
    out = []
    for i, rec in enumerate(data):
        try:
            out.append(
                FrameAnnotation(
                    frame_index=int(rec["frame"]),
                    verb=str(rec["verb"]),
                    target=str(rec["target"]),
                )
            )
        except (KeyError, TypeError) as e:
            raise CorpusError(f"record {i}: missing or malformed field ({e})") from None
    out.sort(key=lambda fa: fa.frame_index)
    for a, b in zip(out, out[1:]):
        if a.frame_index == b.frame_index:
            raise CorpusError(f"duplicate frame index {a.frame_index}")
    return out


def frames_to_sentence(frames: Sequence[FrameAnnotation], cmap: ClassMap) -> tuple[str, ...]:
    """Full per-video pipeline: map to class ids, collapse runs, emit SIL-wrapped
    token names.  Frames without a primary-intention annotation are expected
    to be absent from ``frames`` (they are dropped upstream, not mapped)."""
    ids = map_classes(frames, cmap)
    segs = collapse_segments(ids)
    return wrap_sil(tuple(cmap.classes[i].token for i in segs))


def save_class_map(cmap: ClassMap, path) -> None:
    """CSV with columns verb,target,class_id,class_name."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("verb,target,class_id,class_name\n")
        for v, t, cid in cmap.pairs:
            c = cmap.classes[cid]
            f.write(f"{v},{t},{cid},{c.verb}_{c.target}\n")


def load_class_map(path) -> ClassMap:
    pairs: list[tuple[str, str, int]] = []
    canonical: dict[int, tuple[str, str]] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.lower().startswith("verb,target,class_id"):
            raise CorpusError("class map must start with header verb,target,class_id,class_name")
        for lineno, raw in enumerate(f, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 4:
                raise CorpusError(f"line {lineno}: expected 4 columns")
            v, t, cid_s, cname = parts[0], parts[1], parts[2], parts[3]
            try:
                cid = int(cid_s)
            except ValueError:
                raise CorpusError(f"line {lineno}: bad class id {cid_s!r}") from None
            pairs.append((v, t, cid))
            if "_" in cname:
                cv, ct = cname.split("_", 1)
            else:
                cv, ct = v, t
            canonical.setdefault(cid, (cv, ct))
    k = max(canonical) + 1 if canonical else 0
    if sorted(canonical) != list(range(k)):
        raise CorpusError("class ids in map are not dense")
    classes = tuple(PiClass(i, canonical[i][0], canonical[i][1]) for i in range(k))
    return ClassMap(classes=classes, pairs=tuple(pairs))
