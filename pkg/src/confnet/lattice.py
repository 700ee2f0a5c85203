"""Word lattice model: parsing, link order, posteriors, pruning, path counting.

Scores are natural-log throughout. A path's scaled log score is

    sum over links of  lm + log P(variant | word) + ac / lmscale

and link posteriors are the normalized sum over all complete paths through
the link, computed by forward-backward with log-sum-exp.
"""

from __future__ import annotations

import heapq
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DELETION = "-"
DEFAULT_LMSCALE = 12.0
DEFAULT_PRUNE_THRESHOLD = 1e-3

_TIE_TOL = 1e-9


class LatticeFormatError(ValueError):
    """Malformed or invalid lattice, lexicon, or related input."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class InvariantError(RuntimeError):
    """An internal consistency check failed (signals a bug upstream)."""


def logsumexp(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        return -math.inf
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in vals))


# ---------------------------------------------------------------------------
# Pronunciation lexicon


class PronLexicon:
    """Word -> ordered pronunciation variants, first listed is the baseform.

    Variant probabilities are uniform: 1 / number of variants of the word.
    With ``allow_missing`` an unknown word gets a synthesized single variant
    whose phones are the word's letters; such words are reported by
    :meth:`is_synthesized`.
    """

    def __init__(self, entries: Mapping[str, Sequence[Sequence[str]]] | None = None,
                 allow_missing: bool = False):
        self._entries: dict[str, list[tuple[str, ...]]] = {}
        for word, prons in (entries or {}).items():
            for pron in prons:
                self.add(word, pron)
        self.allow_missing = allow_missing

    def add(self, word: str, phones: Sequence[str]) -> None:
        phones = tuple(phones)
        if not phones:
            raise ValueError(f"empty pronunciation for {word!r}")
        variants = self._entries.setdefault(word, [])
        if phones not in variants:
            variants.append(phones)

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def words(self) -> list[str]:
        return sorted(self._entries)

    def is_synthesized(self, word: str) -> bool:
        return word not in self._entries and self.allow_missing

    def variants(self, word: str) -> list[tuple[str, ...]]:
        try:
            return self._entries[word]
        except KeyError:
            if self.allow_missing:
                return [tuple(word.lower())]
            raise KeyError(f"word {word!r} missing from lexicon") from None

    def baseform(self, word: str) -> tuple[str, ...]:
        return self.variants(word)[0]

    def phones(self, word: str, variant: int = 0) -> tuple[str, ...]:
        prons = self.variants(word)
        if 0 <= variant < len(prons):
            return prons[variant]
        return prons[0]

    def variant_logprob(self, word: str) -> float:
        return -math.log(len(self.variants(word)))

    @classmethod
    def parse(cls, text: str, allow_missing: bool = False, source: str | None = None) -> "PronLexicon":
        lex = cls(allow_missing=allow_missing)
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise LatticeFormatError(f"lexicon entry without phones: {line!r}", lineno, source)
            lex.add(parts[0], parts[1:])
        return lex

    @classmethod
    def from_file(cls, path: str | Path, allow_missing: bool = False) -> "PronLexicon":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), allow_missing, str(path))

    def format(self) -> str:
        lines = []
        for word in self.words():
            for pron in self._entries[word]:
                lines.append(" ".join((word,) + pron))
        return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Lattice


@dataclass(frozen=True)
class Link:
    link_id: int
    inode: int
    fnode: int
    word: str
    itime: float
    ftime: float
    ac_logscore: float = 0.0
    lm_logscore: float = 0.0
    pron_variant: int = 0
    posterior: float | None = None
    # posterior before the most recent pruning, kept for diagnostics
    prior_posterior: float | None = None


@dataclass(frozen=True)
class Lattice:
    utterance_id: str
    node_times: Mapping[int, float]
    links: tuple[Link, ...]
    initial_node: int
    final_node: int
    lm_weight_hint: float | None = None
    # scoring used for the stored posteriors
    scale: float | None = None
    lexicon: PronLexicon | None = field(default=None, compare=False, repr=False)
    fallback_words: tuple[str, ...] = ()

    @classmethod
    def build(cls, utterance_id: str, node_times: Mapping[int, float],
              links: Iterable[Link], lm_weight_hint: float | None = None,
              *, _lines: Mapping[tuple[str, int], int] | None = None,
              _source: str | None = None) -> "Lattice":
        """Validate the graph and return a lattice with links sorted by id.

        Link times are re-derived from node times.
        """
        lines = _lines or {}
        node_times = dict(node_times)
        fixed = []
        seen = set()
        for link in links:
            ln = lines.get(("link", link.link_id))
            if link.link_id in seen:
                raise LatticeFormatError(f"duplicate link id {link.link_id}", ln, _source)
            seen.add(link.link_id)
            for node in (link.inode, link.fnode):
                if node not in node_times:
                    raise LatticeFormatError(
                        f"link {link.link_id} references undefined node {node}", ln, _source)
            if not link.word or link.word == DELETION:
                raise LatticeFormatError(f"link {link.link_id} has invalid word {link.word!r}", ln, _source)
            it, ft = node_times[link.inode], node_times[link.fnode]
            if ft < it:
                raise LatticeFormatError(
                    f"link {link.link_id} ends (t={ft}) before it starts (t={it})", ln, _source)
            fixed.append(replace(link, itime=it, ftime=ft))
        if not fixed:
            raise LatticeFormatError("lattice has no links", None, _source)
        fixed.sort(key=lambda l: l.link_id)

        indeg = {n: 0 for n in node_times}
        outdeg = {n: 0 for n in node_times}
        for link in fixed:
            outdeg[link.inode] += 1
            indeg[link.fnode] += 1
        _topological_order(node_times, fixed, lines, _source)
        initials = sorted(n for n, d in indeg.items() if d == 0)
        finals = sorted(n for n, d in outdeg.items() if d == 0)
        if len(initials) != 1:
            raise LatticeFormatError(
                f"expected exactly one initial node, found {initials}",
                lines.get(("node", initials[-1])) if initials else None, _source)
        if len(finals) != 1:
            raise LatticeFormatError(
                f"expected exactly one final node, found {finals}",
                lines.get(("node", finals[-1])) if finals else None, _source)
        return cls(utterance_id, node_times, tuple(fixed), initials[0], finals[0], lm_weight_hint)

    # -- derived structure (cached; the lattice is immutable) --

    @cached_property
    def link_by_id(self) -> dict[int, Link]:
        return {l.link_id: l for l in self.links}

    @cached_property
    def out_links(self) -> dict[int, list[Link]]:
        out: dict[int, list[Link]] = {n: [] for n in self.node_times}
        for l in self.links:
            out[l.inode].append(l)
        return out

    @cached_property
    def in_links(self) -> dict[int, list[Link]]:
        inc: dict[int, list[Link]] = {n: [] for n in self.node_times}
        for l in self.links:
            inc[l.fnode].append(l)
        return inc

    @cached_property
    def topo_order(self) -> list[int]:
        return _topological_order(self.node_times, self.links)

    @cached_property
    def _reach(self) -> dict[int, int]:
        # bitset over topological positions of nodes reachable from each node
        pos = {n: i for i, n in enumerate(self.topo_order)}
        reach: dict[int, int] = {}
        for n in reversed(self.topo_order):
            bits = 1 << pos[n]
            for l in self.out_links[n]:
                bits |= reach[l.fnode]
            reach[n] = bits
        return reach

    @cached_property
    def _node_pos(self) -> dict[int, int]:
        return {n: i for i, n in enumerate(self.topo_order)}

    def node_reaches(self, u: int, v: int) -> bool:
        return bool(self._reach[u] >> self._node_pos[v] & 1)

    @property
    def num_nodes(self) -> int:
        return len(self.node_times)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def has_posteriors(self) -> bool:
        return all(l.posterior is not None for l in self.links)

    def words_of(self, link_ids: Iterable[int]) -> list[str]:
        return [self.link_by_id[i].word for i in link_ids]


def _topological_order(node_times: Mapping[int, float], links: Sequence[Link],
                       lines: Mapping[tuple[str, int], int] | None = None,
                       source: str | None = None) -> list[int]:
    """Kahn's algorithm with smallest-id-first tie-break; raises on cycles."""
    indeg = {n: 0 for n in node_times}
    succ: dict[int, list[int]] = defaultdict(list)
    for l in links:
        indeg[l.fnode] += 1
        succ[l.inode].append(l.fnode)
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, m)
    if len(order) != len(node_times):
        remaining = {n for n, d in indeg.items() if d > 0}
        pred: dict[int, int] = {}
        for l in links:
            if l.inode in remaining and l.fnode in remaining:
                pred.setdefault(l.fnode, l.inode)
        node = min(remaining)
        visited = set()
        while node not in visited:
            visited.add(node)
            node = pred[node]
        raise LatticeFormatError(f"cycle detected through node {node}",
                                 (lines or {}).get(("node", node)), source)
    return order


# ---------------------------------------------------------------------------
# Text format

_KV = re.compile(r"(\w+)=(\S*)")


def parse_lattice(text: str, source: str | None = None) -> Lattice:
    """Parse the line-oriented lattice format.

    Header ``UTT=``, ``N=``, ``L=``, optional ``lmscale=``; node lines
    ``I=<id> t=<sec>``; link lines ``J=<id> S=<node> E=<node> W=<word>
    a=<ac> l=<lm> v=<variant>``. Blank lines and ``#`` comments are ignored.
    """
    utt = None
    n_nodes = n_links = None
    lmscale = None
    node_times: dict[int, float] = {}
    links: list[Link] = []
    lines: dict[tuple[str, int], int] = {}

    def num(kind, value, lineno):
        try:
            return kind(value)
        except ValueError:
            raise LatticeFormatError(f"bad numeric value {value!r}", lineno, source) from None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        fields = {}
        for tok in tokens:
            m = _KV.fullmatch(tok)
            if not m:
                raise LatticeFormatError(f"malformed token {tok!r}", lineno, source)
            if m.group(1) in fields:
                raise LatticeFormatError(f"repeated field {m.group(1)!r}", lineno, source)
            fields[m.group(1)] = m.group(2)
        first = tokens[0].split("=", 1)[0]
        if first == "I":
            if set(fields) - {"I", "t"} or "t" not in fields:
                raise LatticeFormatError("node line needs exactly I= and t=", lineno, source)
            nid = num(int, fields["I"], lineno)
            t = num(float, fields["t"], lineno)
            if nid in node_times:
                raise LatticeFormatError(f"duplicate node id {nid}", lineno, source)
            if not (t >= 0 and math.isfinite(t)):
                raise LatticeFormatError(f"node {nid} has invalid time {t}", lineno, source)
            node_times[nid] = t
            lines[("node", nid)] = lineno
        elif first == "J":
            missing = {"J", "S", "E", "W"} - set(fields)
            if missing:
                raise LatticeFormatError(f"link line missing {sorted(missing)}", lineno, source)
            extra = set(fields) - {"J", "S", "E", "W", "a", "l", "v"}
            if extra:
                raise LatticeFormatError(f"unknown link fields {sorted(extra)}", lineno, source)
            lid = num(int, fields["J"], lineno)
            if ("link", lid) in lines:
                raise LatticeFormatError(f"duplicate link id {lid}", lineno, source)
            ac = num(float, fields.get("a", "0"), lineno)
            lm = num(float, fields.get("l", "0"), lineno)
            if not (math.isfinite(ac) and math.isfinite(lm)):
                raise LatticeFormatError("scores must be finite", lineno, source)
            v = num(int, fields.get("v", "0"), lineno)
            if v < 0:
                raise LatticeFormatError("pronunciation variant must be >= 0", lineno, source)
            links.append(Link(lid, num(int, fields["S"], lineno), num(int, fields["E"], lineno),
                              fields["W"], 0.0, 0.0, ac, lm, v))
            lines[("link", lid)] = lineno
        else:
            for key, value in fields.items():
                if key == "UTT":
                    utt = value
                elif key == "N":
                    n_nodes = num(int, value, lineno)
                elif key == "L":
                    n_links = num(int, value, lineno)
                elif key == "lmscale":
                    lmscale = num(float, value, lineno)
                    if not lmscale > 0:
                        raise LatticeFormatError("lmscale must be positive", lineno, source)
                else:
                    raise LatticeFormatError(f"unknown header field {key!r}", lineno, source)
    if utt is None:
        raise LatticeFormatError("missing UTT= header", None, source)
    if n_nodes is None or n_links is None:
        raise LatticeFormatError("missing N= or L= header", None, source)
    if n_nodes != len(node_times):
        raise LatticeFormatError(f"header N={n_nodes} but {len(node_times)} node lines", None, source)
    if n_links != len(links):
        raise LatticeFormatError(f"header L={n_links} but {len(links)} link lines", None, source)
    return Lattice.build(utt, node_times, links, lmscale, _lines=lines, _source=source)


def read_lattice(path: str | Path) -> Lattice:
    path = Path(path)
    return parse_lattice(path.read_text(encoding="utf-8"), str(path))


def format_lattice(lat: Lattice) -> str:
    out = [f"UTT={lat.utterance_id}", f"N={lat.num_nodes}", f"L={lat.num_links}"]
    if lat.lm_weight_hint is not None:
        out.append(f"lmscale={lat.lm_weight_hint!r}")
    for n in sorted(lat.node_times):
        out.append(f"I={n} t={lat.node_times[n]!r}")
    for l in lat.links:
        out.append(f"J={l.link_id} S={l.inode} E={l.fnode} W={l.word} "
                   f"a={l.ac_logscore!r} l={l.lm_logscore!r} v={l.pron_variant}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Order


def link_precedes(lat: Lattice, e: int, f: int) -> bool:
    """True iff link ``e`` comes before (or is) link ``f`` in the lattice."""
    try:
        le, lf = lat.link_by_id[e], lat.link_by_id[f]
    except KeyError as exc:
        raise KeyError(f"unknown link id {exc.args[0]}") from None
    return e == f or lat.node_reaches(le.fnode, lf.inode)


# ---------------------------------------------------------------------------
# Scores and posteriors


def _link_logweights(lat: Lattice, lmscale: float, lex: PronLexicon | None) -> dict[int, float]:
    weights = {}
    for l in lat.links:
        pron = lex.variant_logprob(l.word) if lex is not None else 0.0
        weights[l.link_id] = l.lm_logscore + pron + l.ac_logscore / lmscale
    return weights


def _scoring(lat: Lattice, lmscale: float | None, lex: PronLexicon | None):
    if lmscale is None:
        lmscale = lat.scale if lat.scale is not None else (lat.lm_weight_hint or DEFAULT_LMSCALE)
    if lex is None:
        lex = lat.lexicon
    if not lmscale > 0:
        raise ValueError(f"language model weight must be positive, got {lmscale}")
    return lmscale, lex


def _forward_backward(lat: Lattice, weights: Mapping[int, float]):
    alpha = {n: -math.inf for n in lat.node_times}
    beta = dict(alpha)
    alpha[lat.initial_node] = 0.0
    for n in lat.topo_order:
        if n != lat.initial_node:
            alpha[n] = logsumexp(alpha[l.inode] + weights[l.link_id] for l in lat.in_links[n])
    beta[lat.final_node] = 0.0
    for n in reversed(lat.topo_order):
        if n != lat.final_node:
            beta[n] = logsumexp(weights[l.link_id] + beta[l.fnode] for l in lat.out_links[n])
    return alpha, beta


def compute_link_posteriors(lat: Lattice, lmscale: float | None = None,
                            lex: PronLexicon | None = None) -> Lattice:
    """Return a copy of ``lat`` whose links carry posterior probabilities.

    ``lmscale`` defaults to the lattice header's value, else 12. Without a
    lexicon every link gets pronunciation log-probability 0.
    """
    if not lat.links:
        raise ValueError("empty lattice")
    lmscale, lex = _scoring(lat, lmscale, lex)
    fallback = ()
    if lex is not None:
        fallback = tuple(sorted({l.word for l in lat.links if lex.is_synthesized(l.word)}))
        # raises KeyError for missing words when fallback is disabled
        for l in lat.links:
            lex.variants(l.word)
    weights = _link_logweights(lat, lmscale, lex)
    alpha, beta = _forward_backward(lat, weights)
    total = alpha[lat.final_node]
    if total == -math.inf:
        raise ValueError("lattice has zero total probability")
    links = []
    for l in lat.links:
        p = math.exp(alpha[l.inode] + weights[l.link_id] + beta[l.fnode] - total)
        links.append(replace(l, posterior=min(1.0, max(0.0, p))))
    return replace(lat, links=tuple(links), scale=lmscale, lexicon=lex, fallback_words=fallback)


def map_path(lat: Lattice, lmscale: float | None = None,
             lex: PronLexicon | None = None) -> list[int]:
    """Link ids of the highest-scoring path; ties go to lowest link ids."""
    lmscale, lex = _scoring(lat, lmscale, lex)
    weights = _link_logweights(lat, lmscale, lex)
    best: dict[int, float] = {lat.final_node: 0.0}
    choice: dict[int, int] = {}
    for n in reversed(lat.topo_order):
        if n == lat.final_node:
            continue
        top = -math.inf
        arg = None
        for l in lat.out_links[n]:  # ascending link id
            s = weights[l.link_id] + best[l.fnode]
            if arg is None or s > top + _TIE_TOL * max(1.0, abs(top)):
                top, arg = s, l.link_id
        best[n] = top
        choice[n] = arg
    path = []
    n = lat.initial_node
    while n != lat.final_node:
        lid = choice[n]
        path.append(lid)
        n = lat.link_by_id[lid].fnode
    return path


def map_hypothesis(lat: Lattice, lmscale: float | None = None,
                   lex: PronLexicon | None = None) -> list[str]:
    return lat.words_of(map_path(lat, lmscale, lex))


def path_logscore(lat: Lattice, path: Sequence[int], lmscale: float | None = None,
                  lex: PronLexicon | None = None) -> float:
    lmscale, lex = _scoring(lat, lmscale, lex)
    weights = _link_logweights(lat, lmscale, lex)
    return sum(weights[i] for i in path)


def sample_path(lat: Lattice, rng, lmscale: float | None = None,
                lex: PronLexicon | None = None) -> list[int]:
    """Draw one path from the posterior distribution over paths.

    ``rng`` is a ``numpy.random.Generator`` or ``random.Random``.
    """
    lmscale, lex = _scoring(lat, lmscale, lex)
    weights = _link_logweights(lat, lmscale, lex)
    _, beta = _forward_backward(lat, weights)
    path = []
    n = lat.initial_node
    while n != lat.final_node:
        outs = lat.out_links[n]
        probs = [math.exp(weights[l.link_id] + beta[l.fnode] - beta[n]) for l in outs]
        r = rng.random() * sum(probs)
        acc = 0.0
        pick = outs[-1]
        for l, p in zip(outs, probs):
            acc += p
            if r < acc:
                pick = l
                break
        path.append(pick.link_id)
        n = pick.fnode
    return path


# ---------------------------------------------------------------------------
# Pruning and trimming


def trim(lat: Lattice, keep: Iterable[int]) -> Lattice:
    """Restrict ``lat`` to the kept links that lie on an initial->final path."""
    keep = set(keep)
    kept = [l for l in lat.links if l.link_id in keep]
    fwd = {lat.initial_node}
    for n in lat.topo_order:
        if n in fwd:
            for l in lat.out_links[n]:
                if l.link_id in keep:
                    fwd.add(l.fnode)
    bwd = {lat.final_node}
    for n in reversed(lat.topo_order):
        if n in bwd:
            for l in lat.in_links[n]:
                if l.link_id in keep:
                    bwd.add(l.inode)
    live = fwd & bwd
    kept = [l for l in kept if l.inode in live and l.fnode in live]
    if not kept:
        raise ValueError("trimming removed every path")
    node_times = {n: t for n, t in lat.node_times.items() if n in live}
    return replace(lat, node_times=node_times, links=tuple(kept))


def prune_links(lat: Lattice, threshold: float = DEFAULT_PRUNE_THRESHOLD) -> Lattice:
    """Drop links with posterior below ``threshold`` and renormalize.

    The MAP path is never pruned. Surviving links keep their pre-pruning
    posterior in ``prior_posterior``.
    """
    if not lat.has_posteriors:
        raise ValueError("prune_links needs link posteriors")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    protected = set(map_path(lat))
    keep = [l.link_id for l in lat.links if l.posterior >= threshold or l.link_id in protected]
    if len(keep) == lat.num_links:
        return lat
    pruned = trim(lat, keep)
    before = {l.link_id: l.posterior for l in lat.links}
    pruned = compute_link_posteriors(pruned, lat.scale, lat.lexicon)
    links = tuple(replace(l, prior_posterior=before[l.link_id]) for l in pruned.links)
    return replace(pruned, links=links)


# ---------------------------------------------------------------------------
# Counting and oracle scoring


def count_paths(lat: Lattice) -> int:
    counts = {n: 0 for n in lat.node_times}
    counts[lat.initial_node] = 1
    for n in lat.topo_order:
        c = counts[n]
        if c:
            for l in lat.out_links[n]:
                counts[l.fnode] += c
    return counts[lat.final_node]


def oracle_wer(lat: Lattice, ref: Sequence[str]) -> tuple[int, list[str]]:
    """Minimum word errors of any lattice path against ``ref``, and that path.

    Dynamic programming over (node, reference position).
    """
    m = len(ref)
    INF = math.inf
    cost = {n: [INF] * (m + 1) for n in lat.node_times}
    back: dict[int, list] = {n: [None] * (m + 1) for n in lat.node_times}
    cost[lat.initial_node][0] = 0
    for n in lat.topo_order:
        row, brow = cost[n], back[n]
        # skipping reference words (deletions) without consuming a link
        for j in range(m):
            if row[j] + 1 < row[j + 1]:
                row[j + 1] = row[j] + 1
                brow[j + 1] = (n, j, None)
        for l in lat.out_links[n]:
            dst, bdst = cost[l.fnode], back[l.fnode]
            for j in range(m + 1):
                c = row[j]
                if c == INF:
                    continue
                if j < m:
                    c2 = c + (l.word != ref[j])
                    if c2 < dst[j + 1]:
                        dst[j + 1] = c2
                        bdst[j + 1] = (n, j, l.link_id)
                if c + 1 < dst[j]:
                    dst[j] = c + 1
                    bdst[j] = (n, j, l.link_id)
    best = cost[lat.final_node][m]
    path = []
    n, j = lat.final_node, m
    while (n, j) != (lat.initial_node, 0):
        pn, pj, lid = back[n][j]
        if lid is not None:
            path.append(lid)
        n, j = pn, pj
    path.reverse()
    return int(best), lat.words_of(path)
