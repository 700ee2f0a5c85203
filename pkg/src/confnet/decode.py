"""Hypothesis selection and error measures.

Consensus extraction from confusion networks, Levenshtein word error,
multiple-alignment word error, N-best posteriors and the N-best center
hypothesis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

from confnet.lattice import DELETION, LatticeFormatError, logsumexp

log = logging.getLogger(__name__)


def ranked_tokens(slot: dict[str, float]) -> list[tuple[str, float]]:
    """Slot entries by descending posterior, ties by token string."""
    return sorted(slot.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass
class ConfusionNetwork:
    utterance_id: str
    slots: list[dict[str, float]]
    # originating equivalence class id and member link ids per slot; empty
    # when the network was read from a file
    slot_class_map: list[int] = field(default_factory=list)
    slot_links: list[tuple[int, ...]] = field(default_factory=list)
    # posterior mass kept by pruning, per slot (None when never pruned)
    retained_mass: list[float] | None = None

    def __len__(self) -> int:
        return len(self.slots)

    @cached_property
    def link_slot(self) -> dict[int, int]:
        return {lid: i for i, links in enumerate(self.slot_links) for lid in links}

    def num_paths(self) -> int:
        return math.prod(len(s) for s in self.slots)

    def format(self) -> str:
        lines = [f"UTT={self.utterance_id}"]
        for i, slot in enumerate(self.slots):
            entries = " ".join(f"{w}:{p:.6f}" for w, p in ranked_tokens(slot))
            lines.append(f"slot {i} {entries}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, source: str | None = None) -> "ConfusionNetwork":
        utt = None
        slots = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("UTT="):
                utt = line[4:]
                continue
            parts = line.split()
            if parts[0] != "slot" or len(parts) < 3:
                raise LatticeFormatError(f"malformed slot line {line!r}", lineno, source)
            if int(parts[1]) != len(slots):
                raise LatticeFormatError(f"slot index {parts[1]} out of sequence", lineno, source)
            slot = {}
            for entry in parts[2:]:
                word, sep, p = entry.rpartition(":")
                if not sep or not word:
                    raise LatticeFormatError(f"malformed entry {entry!r}", lineno, source)
                try:
                    slot[word] = float(p)
                except ValueError:
                    raise LatticeFormatError(f"bad posterior in {entry!r}", lineno, source) from None
            slots.append(slot)
        if utt is None:
            raise LatticeFormatError("missing UTT= header", None, source)
        return cls(utt, slots)

    @classmethod
    def from_file(cls, path: str | Path) -> "ConfusionNetwork":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------------------
# Consensus


def expected_slot_error(slot: dict[str, float], choice: str) -> float:
    """Expected word error contributed by choosing ``choice`` in ``slot``."""
    if choice == DELETION:
        return 1.0 - slot.get(DELETION, 0.0)
    if choice not in slot:
        raise ValueError(f"token {choice!r} not in slot")
    return 1.0 - slot[choice]


def _slot_best(slot: dict[str, float]) -> str:
    # highest posterior; on ties a real word beats deletion, then word order
    return min(slot, key=lambda w: (-slot[w], w == DELETION, w))


def consensus_path(cn: ConfusionNetwork) -> list[str]:
    """Argmax token per slot, including deletions."""
    return [_slot_best(s) for s in cn.slots]


def consensus_hypothesis(cn: ConfusionNetwork) -> tuple[list[str], float]:
    """Consensus word sequence and its expected (multiple-alignment) word error."""
    tokens = consensus_path(cn)
    err = sum(expected_slot_error(s, t) for s, t in zip(cn.slots, tokens))
    return [t for t in tokens if t != DELETION], err


def path_expected_error(cn: ConfusionNetwork, tokens: Sequence[str]) -> float:
    if len(tokens) != len(cn.slots):
        raise ValueError("path length does not match number of slots")
    return sum(expected_slot_error(s, t) for s, t in zip(cn.slots, tokens))


# ---------------------------------------------------------------------------
# Word error


@dataclass(frozen=True)
class ErrorCounts:
    errors: int
    subs: int
    dels: int
    ins: int

    def __iter__(self):
        return iter((self.errors, self.subs, self.dels, self.ins))


def word_error(hyp: Sequence[str], ref: Sequence[str]) -> ErrorCounts:
    """Levenshtein alignment of ``hyp`` against ``ref`` with unit costs.

    The back-trace prefers match, then substitution, deletion, insertion.
    """
    n, m = len(hyp), len(ref)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        hi = hyp[i - 1]
        prev, row = d[i - 1], d[i]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (hi != ref[j - 1]), row[j - 1] + 1, prev[j] + 1)
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and hyp[i - 1] == ref[j - 1] and d[i][j] == d[i - 1][j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif j > 0 and d[i][j] == d[i][j - 1] + 1:
            dels += 1
            j -= 1
        else:
            ins += 1
            i -= 1
    return ErrorCounts(d[n][m], subs, dels, ins)


def mwe(cn: ConfusionNetwork, path1: Sequence[str], path2: Sequence[str]) -> int:
    """Word errors between two network paths under the network's own alignment."""
    if not len(path1) == len(path2) == len(cn.slots):
        raise ValueError("paths must assign one token to every slot")
    errors = 0
    for slot, a, b in zip(cn.slots, path1, path2):
        for t in (a, b):
            if t not in slot:
                raise ValueError(f"token {t!r} is not valid for its slot")
        if a != b:
            errors += 1
    return errors


def lattice_path_to_cn_path(cn: ConfusionNetwork, words_by_link: dict[int, str],
                            path: Sequence[int]) -> list[str]:
    """Map a lattice path (link ids) to slot-indexed tokens.

    ``words_by_link`` maps link id to word (``{l.link_id: l.word ...}``).
    Slots the path does not visit get the deletion token.
    """
    tokens = [DELETION] * len(cn.slots)
    last = -1
    for lid in path:
        try:
            s = cn.link_slot[lid]
        except KeyError:
            raise ValueError(f"link {lid} does not belong to any slot") from None
        if s <= last:
            raise ValueError("path visits slots out of order")
        last = s
        tokens[s] = words_by_link[lid]
    return tokens


def match_words_to_cn(cn: ConfusionNetwork, words: Sequence[str]) -> list[str] | None:
    """Greedy left-to-right embedding of ``words`` into the network.

    Each word takes the next slot that offers it; skipped slots take ``-``.
    Returns None when some word cannot be placed.
    """
    tokens = []
    pos = 0
    for w in words:
        while pos < len(cn.slots) and w not in cn.slots[pos]:
            tokens.append(DELETION)
            pos += 1
        if pos == len(cn.slots):
            return None
        tokens.append(w)
        pos += 1
    tokens.extend([DELETION] * (len(cn.slots) - pos))
    return tokens


# ---------------------------------------------------------------------------
# N-best lists


@dataclass(frozen=True)
class NBestEntry:
    words: tuple[str, ...]
    ac_logscore: float = 0.0
    lm_logscore: float = 0.0
    pron_logscore: float = 0.0


@dataclass(frozen=True)
class NBestList:
    utterance_id: str
    hypotheses: tuple[NBestEntry, ...]
    posteriors: tuple[float, ...] | None = None

    def __len__(self) -> int:
        return len(self.hypotheses)

    def format(self) -> str:
        lines = [f"UTT={self.utterance_id}"]
        for h in self.hypotheses:
            lines.append(f"ac={h.ac_logscore!r} lm={h.lm_logscore!r} pron={h.pron_logscore!r} :: "
                         + " ".join(h.words))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, source: str | None = None) -> "NBestList":
        utt = None
        hyps = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("UTT="):
                utt = line[4:]
                continue
            head, sep, tail = line.partition("::")
            if not sep:
                raise LatticeFormatError("hypothesis line lacks '::'", lineno, source)
            scores = {}
            for tok in head.split():
                key, eq, value = tok.partition("=")
                if not eq or key not in ("ac", "lm", "pron"):
                    raise LatticeFormatError(f"malformed score {tok!r}", lineno, source)
                try:
                    scores[key] = float(value)
                except ValueError:
                    raise LatticeFormatError(f"bad score {tok!r}", lineno, source) from None
            hyps.append(NBestEntry(tuple(tail.split()), scores.get("ac", 0.0),
                                   scores.get("lm", 0.0), scores.get("pron", 0.0)))
        if utt is None:
            raise LatticeFormatError("missing UTT= header", None, source)
        if not hyps:
            raise LatticeFormatError("N-best list is empty", None, source)
        return cls(utt, tuple(hyps))

    @classmethod
    def from_file(cls, path: str | Path) -> "NBestList":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), str(path))


def nbest_posteriors(nb: NBestList, lmscale: float) -> NBestList:
    """Normalize ``lm + pron + ac / lmscale`` over the list."""
    if not nb.hypotheses:
        raise ValueError("empty N-best list")
    if not lmscale > 0:
        raise ValueError(f"language model weight must be positive, got {lmscale}")
    scores = [h.lm_logscore + h.pron_logscore + h.ac_logscore / lmscale for h in nb.hypotheses]
    z = logsumexp(scores)
    return replace(nb, posteriors=tuple(math.exp(s - z) for s in scores))


def _require_posteriors(nb: NBestList) -> tuple[float, ...]:
    if nb.posteriors is None:
        raise ValueError("N-best posteriors have not been computed")
    return nb.posteriors


def expected_word_error(hyp: Sequence[str], nb: NBestList) -> float:
    post = _require_posteriors(nb)
    return sum(p * word_error(h.words, hyp).errors for p, h in zip(post, nb.hypotheses))


def center_hypothesis(nb: NBestList, return_iterations: bool = False):
    """N-best entry with least posterior-weighted word error to the others.

    Accumulation over references stops as soon as the running sum reaches
    the best total found so far; ties go to the lowest index. Returns
    ``(index, words, expected_error)``, plus the number of inner-loop
    iterations when ``return_iterations`` is set.
    """
    post = _require_posteriors(nb)
    hyps = [h.words for h in nb.hypotheses]
    best_i, best_err = 0, math.inf
    inner = 0
    cache: dict[tuple[int, int], int] = {}
    for i, wi in enumerate(hyps):
        err = 0.0
        for k, wk in enumerate(hyps):
            inner += 1
            key = (min(i, k), max(i, k))
            if key not in cache:
                cache[key] = word_error(wk, wi).errors
            err += post[k] * cache[key]
            if err >= best_err:
                break
        else:
            best_i, best_err = i, err
    result = (best_i, list(hyps[best_i]), best_err)
    return result + (inner,) if return_iterations else result


def nbest_consensus(cn: ConfusionNetwork, nb: NBestList) -> list[str]:
    """N-best entry whose network path has least expected slot error."""
    best = None
    for idx, h in enumerate(nb.hypotheses):
        tokens = match_words_to_cn(cn, h.words)
        if tokens is None:
            log.warning("%s: N-best entry %d is not expressible in the network",
                        nb.utterance_id, idx)
            continue
        err = path_expected_error(cn, tokens)
        if best is None or err < best[0]:
            best = (err, idx)
    if best is None:
        raise ValueError("no N-best entry is expressible as a confusion network path")
    return list(nb.hypotheses[best[1]].words)
