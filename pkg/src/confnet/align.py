"""Multiple alignment of lattice links into a confusion network.

Links are partitioned into equivalence classes that are merged greedily,
first among instances of the same word (time overlap), then across words
(phonetic similarity), while a partial order over classes is kept
consistent with the lattice. Merging stops once the order is total; the
ordered classes become the slots of the confusion network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from confnet.decode import ConfusionNetwork
from confnet.lattice import DELETION, InvariantError, Lattice, PronLexicon

METRICS = ("default", "no-time", "phone-time", "no-phonetic", "no-posterior")
_METRIC_ALIASES = {"phone-count-time": "phone-time"}

INITIAL, INTRA_DONE, TOTAL_ORDER = "initial", "intra-done", "total-order"


def canonical_metric(name: str) -> str:
    name = _METRIC_ALIASES.get(name, name)
    if name not in METRICS:
        raise ValueError(f"unknown metric variant {name!r}; choose from {', '.join(METRICS)}")
    return name


class Member(NamedTuple):
    link_id: int
    word: str
    start: float
    end: float
    posterior: float


@dataclass(frozen=True)
class EquivalenceClass:
    class_id: int
    members: tuple[Member, ...]

    @property
    def link_ids(self) -> tuple[int, ...]:
        return tuple(m.link_id for m in self.members)

    @property
    def words(self) -> frozenset[str]:
        return frozenset(m.word for m in self.members)

    @property
    def posterior(self) -> float:
        return math.fsum(m.posterior for m in self.members)

    def word_posteriors(self) -> dict[str, float]:
        acc: dict[str, list[float]] = {}
        for m in self.members:
            acc.setdefault(m.word, []).append(m.posterior)
        return {w: math.fsum(ps) for w, ps in sorted(acc.items())}

    @property
    def span(self) -> tuple[float, float]:
        return min(m.start for m in self.members), max(m.end for m in self.members)


# ---------------------------------------------------------------------------
# Similarity measures


def time_overlap(a: Member, b: Member) -> float:
    """Overlap of two links normalized by the sum of their lengths."""
    length = (a.end - a.start) + (b.end - b.start)
    if length <= 0:
        return 0.0
    return max(0.0, min(a.end, b.end) - max(a.start, b.start)) / length


def sim_intra(e1: EquivalenceClass, e2: EquivalenceClass, metric: str = "default") -> float:
    if e1.words != e2.words or len(e1.words) != 1:
        raise ValueError("intra-word similarity needs classes of one and the same word")
    metric = canonical_metric(metric)
    best = 0.0
    for a in e1.members:
        for b in e2.members:
            if metric == "no-time":
                s = a.posterior * b.posterior
            elif metric == "no-posterior":
                s = time_overlap(a, b)
            else:
                s = time_overlap(a, b) * a.posterior * b.posterior
            best = max(best, s)
    return best


def phone_edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def phonetic_similarity(w1: str, w2: str, lex: PronLexicon) -> float:
    """1 - phone edit distance / total length, on the most likely baseforms."""
    if w1 == w2:
        return 1.0
    p1, p2 = lex.baseform(w1), lex.baseform(w2)
    return 1.0 - phone_edit_distance(p1, p2) / (len(p1) + len(p2))


def sim_inter(f1: EquivalenceClass, f2: EquivalenceClass, lex: PronLexicon | None,
              metric: str = "default", _cache: dict | None = None) -> float:
    metric = canonical_metric(metric)
    p1, p2 = f1.word_posteriors(), f2.word_posteriors()
    total = 0.0
    for w1, q1 in p1.items():
        for w2, q2 in p2.items():
            if metric == "no-phonetic":
                total += q1 * q2
                continue
            key = (w1, w2) if w1 <= w2 else (w2, w1)
            if _cache is not None and key in _cache:
                sim = _cache[key]
            else:
                if lex is None:
                    raise ValueError("phonetic similarity needs a pronunciation lexicon")
                sim = phonetic_similarity(w1, w2, lex)
                if _cache is not None:
                    _cache[key] = sim
            total += sim if metric == "no-posterior" else sim * q1 * q2
    return total / (len(p1) * len(p2))


# ---------------------------------------------------------------------------
# Times


def estimate_times_from_phone_counts(lat: Lattice, lex: PronLexicon) -> dict[int, float]:
    """Node pseudo-times: longest path from the initial node, counted in phones."""
    t = {lat.initial_node: 0.0}
    for n in lat.topo_order:
        if n == lat.initial_node:
            continue
        t[n] = max(t[l.inode] + len(lex.phones(l.word, l.pron_variant)) for l in lat.in_links[n])
    return t


# ---------------------------------------------------------------------------
# Alignment state


class AlignmentState:
    """Equivalence classes plus their precedence matrix.

    ``precedes[i, j]`` is True when class ``classes[i]`` comes before (or is)
    ``classes[j]``. Mutated in place by :func:`merge_classes`.
    """

    def __init__(self, lattice: Lattice, classes: list[EquivalenceClass],
                 precedes: np.ndarray, stage: str = INITIAL):
        self.lattice = lattice
        self.classes = classes
        self.precedes = precedes
        self.stage = stage
        self.next_id = max((c.class_id for c in classes), default=-1) + 1

    def copy(self) -> "AlignmentState":
        st = AlignmentState(self.lattice, list(self.classes), self.precedes.copy(), self.stage)
        st.next_id = self.next_id
        return st

    def index_of(self, class_id: int) -> int:
        for i, c in enumerate(self.classes):
            if c.class_id == class_id:
                return i
        raise KeyError(f"no class with id {class_id}")

    def unordered_pairs(self) -> int:
        p = self.precedes
        return int(np.count_nonzero(~(p | p.T))) // 2

    def is_total(self) -> bool:
        return self.unordered_pairs() == 0

    def class_of_link(self) -> dict[int, int]:
        return {lid: i for i, c in enumerate(self.classes) for lid in c.link_ids}

    def check_invariants(self) -> None:
        """Raise InvariantError unless ``precedes`` is a consistent partial order."""
        p = self.precedes
        k = len(self.classes)
        if not p.diagonal().all():
            raise InvariantError("class order is not reflexive")
        if np.any(p & p.T & ~np.eye(k, dtype=bool)):
            raise InvariantError("class order is not antisymmetric")
        pi = p.astype(np.int64)
        if np.any((pi @ pi > 0) & ~p):
            raise InvariantError("class order is not transitive")
        owner = self.class_of_link()
        lat = self.lattice
        for e in lat.links:
            if e.link_id not in owner:
                continue
            ce = owner[e.link_id]
            for f in lat.links:
                if f.link_id in owner and lat.node_reaches(e.fnode, f.inode):
                    if not p[ce, owner[f.link_id]]:
                        raise InvariantError(
                            f"order inconsistent with lattice: link {e.link_id} precedes {f.link_id}")


def link_order_matrix(lat: Lattice, link_ids: Sequence[int]) -> np.ndarray:
    """Boolean matrix of the lattice link order restricted to ``link_ids``."""
    links = [lat.link_by_id[i] for i in link_ids]
    m = np.zeros((len(links), len(links)), dtype=bool)
    for a, e in enumerate(links):
        for b, f in enumerate(links):
            m[a, b] = a == b or lat.node_reaches(e.fnode, f.inode)
    return m


def transitive_closure(rel: np.ndarray) -> np.ndarray:
    c = rel.copy()
    for k in range(c.shape[0]):
        c |= np.outer(c[:, k], c[k, :])
    return c


def _link_times(lat: Lattice, metric: str, lex: PronLexicon | None) -> dict[int, tuple[float, float]]:
    if metric == "phone-time":
        if lex is None:
            raise ValueError("phone-time metric needs a pronunciation lexicon")
        nt = estimate_times_from_phone_counts(lat, lex)
    else:
        nt = lat.node_times
    return {l.link_id: (nt[l.inode], nt[l.fnode]) for l in lat.links}


def init_classes(lat: Lattice, metric: str = "default", lex: PronLexicon | None = None) -> AlignmentState:
    """Group links by (word, start, end) and order the groups.

    Zero-length links get classes of their own: two such links with equal
    key can be ordered along a path, which a shared class would contradict.
    """
    metric = canonical_metric(metric)
    if not lat.has_posteriors:
        raise ValueError("alignment needs link posteriors")
    times = _link_times(lat, metric, lex)
    groups: dict[tuple, list[Member]] = {}
    for l in lat.links:
        s, e = times[l.link_id]
        key = (l.word, s, e) if e > s else (l.word, s, e, l.link_id)
        groups.setdefault(key, []).append(Member(l.link_id, l.word, s, e, l.posterior))
    ordered = sorted(groups.values(), key=lambda ms: (ms[0].start, ms[0].end, ms[0].word, ms[0].link_id))
    classes = [EquivalenceClass(i, tuple(ms)) for i, ms in enumerate(ordered)]

    link_ids = [m.link_id for c in classes for m in c.members]
    owner = np.array([i for i, c in enumerate(classes) for _ in c.members])
    lo = link_order_matrix(lat, link_ids)
    k = len(classes)
    member = np.zeros((len(link_ids), k), dtype=np.int64)
    member[np.arange(len(link_ids)), owner] = 1
    rel = (member.T @ lo.astype(np.int64) @ member) > 0
    prec = transitive_closure(rel)
    if np.any(prec & prec.T & ~np.eye(k, dtype=bool)):
        raise InvariantError("initial class order is cyclic")
    return AlignmentState(lat, classes, prec, INITIAL)


def merge_classes(state: AlignmentState, id1: int, id2: int) -> AlignmentState:
    """Merge two unordered classes and update the order minimally.

    New relations: everything before either class precedes the union,
    the union precedes everything after either, and whatever precedes one
    of the pair now precedes whatever follows the other.
    """
    i, j = state.index_of(id1), state.index_of(id2)
    p = state.precedes
    if i == j or p[i, j] or p[j, i]:
        raise ValueError(f"classes {id1} and {id2} are ordered and cannot be merged")
    new = p | np.outer(p[:, i], p[j, :]) | np.outer(p[:, j], p[i, :])
    new[:, i] = p[:, i] | p[:, j]
    new[i, :] = p[i, :] | p[j, :]
    new[i, i] = True
    new = np.delete(np.delete(new, j, axis=0), j, axis=1)
    a, b = state.classes[i], state.classes[j]
    merged = EquivalenceClass(state.next_id, tuple(sorted(a.members + b.members)))
    state.next_id += 1
    classes = list(state.classes)
    classes[i] = merged
    del classes[j]
    state.classes = classes
    state.precedes = new
    return state


# ---------------------------------------------------------------------------
# Greedy clustering


MergeHook = Callable[[AlignmentState, int], None]


def _tie_key(a: EquivalenceClass, b: EquivalenceClass):
    return (min(a.span[0], b.span[0]), tuple(sorted(a.words | b.words)),
            min(a.class_id, b.class_id), max(a.class_id, b.class_id))


def _greedy(state: AlignmentState, sim: Callable[[EquivalenceClass, EquivalenceClass], float],
            same_word: bool, allow_zero: bool, on_merge: MergeHook | None, debug: bool) -> None:
    k = len(state.classes)
    def eligible(x: int, y: int) -> bool:
        if same_word:
            cx, cy = state.classes[x], state.classes[y]
            return len(cx.words) == 1 and cx.words == cy.words
        return True

    sims = np.full((k, k), -1.0)
    p = state.precedes
    for x in range(k):
        for y in range(x + 1, k):
            if not p[x, y] and not p[y, x] and eligible(x, y):
                sims[x, y] = sims[y, x] = sim(state.classes[x], state.classes[y])

    while True:
        p = state.precedes
        k = len(state.classes)
        cand = ~(p | p.T) & (sims >= 0)
        cand &= np.triu(np.ones((k, k), dtype=bool), 1)
        if not cand.any():
            break
        vals = np.where(cand, sims, -1.0)
        top = vals.max()
        if top <= 0 and not allow_zero:
            break
        xs, ys = np.nonzero(cand & (vals == top))
        x, y = min(zip(xs.tolist(), ys.tolist()),
                   key=lambda xy: _tie_key(state.classes[xy[0]], state.classes[xy[1]]))
        merge_classes(state, state.classes[x].class_id, state.classes[y].class_id)
        # x keeps its index (x < y); drop y and refresh row/col x
        sims = np.delete(np.delete(sims, y, axis=0), y, axis=1)
        p = state.precedes
        for z in range(len(state.classes)):
            if z == x:
                continue
            if not p[x, z] and not p[z, x] and eligible(x, z):
                sims[x, z] = sims[z, x] = sim(state.classes[x], state.classes[z])
            else:
                sims[x, z] = sims[z, x] = -1.0
        if debug:
            state.check_invariants()
        if on_merge is not None:
            on_merge(state, state.classes[x].class_id)


def intra_word_cluster(state: AlignmentState, metric: str = "default",
                       on_merge: MergeHook | None = None, debug: bool = False) -> AlignmentState:
    """Merge unordered classes of the same word while similarity is positive."""
    metric = canonical_metric(metric)
    if state.stage != INITIAL:
        raise ValueError(f"intra-word clustering expects stage {INITIAL!r}, got {state.stage!r}")
    _greedy(state, lambda a, b: sim_intra(a, b, metric), same_word=True,
            allow_zero=(metric == "no-time"), on_merge=on_merge, debug=debug)
    state.stage = INTRA_DONE
    return state


def inter_word_cluster(state: AlignmentState, lex: PronLexicon | None, metric: str = "default",
                       on_merge: MergeHook | None = None, debug: bool = False) -> AlignmentState:
    """Merge unordered classes of any words until the order is total."""
    metric = canonical_metric(metric)
    if state.stage != INTRA_DONE:
        raise ValueError(f"inter-word clustering expects stage {INTRA_DONE!r}, got {state.stage!r}")
    cache: dict = {}
    _greedy(state, lambda a, b: sim_inter(a, b, lex, metric, cache), same_word=False,
            allow_zero=True, on_merge=on_merge, debug=debug)
    if not state.is_total():
        raise InvariantError("inter-word clustering ended without a total order")
    state.stage = TOTAL_ORDER
    return state


def build_confusion_network(state: AlignmentState, total_mass: float = 1.0) -> ConfusionNetwork:
    if state.stage != TOTAL_ORDER:
        raise ValueError("confusion network needs a totally ordered alignment")
    # in a total order the number of predecessors is the position
    rank = state.precedes.sum(axis=0)
    order = np.argsort(rank, kind="stable")
    slots, class_ids, slot_links = [], [], []
    for idx in order:
        c = state.classes[idx]
        slot = c.word_posteriors()
        deletion = total_mass - c.posterior
        if deletion < -1e-6:
            raise InvariantError(
                f"class {c.class_id} carries posterior {c.posterior:.9f} > {total_mass}")
        if deletion > 1e-9:
            slot[DELETION] = deletion
        if abs(math.fsum(slot.values()) - total_mass) > 1e-6:
            raise InvariantError(f"slot of class {c.class_id} does not sum to {total_mass}")
        slots.append(slot)
        class_ids.append(c.class_id)
        slot_links.append(c.link_ids)
    return ConfusionNetwork(state.lattice.utterance_id, slots, class_ids, slot_links)


def align_lattice(lat: Lattice, lex: PronLexicon | None = None, metric: str = "default",
                  on_merge: MergeHook | None = None, debug: bool = False):
    """Full alignment of a lattice with posteriors. Returns ``(cn, state)``."""
    metric = canonical_metric(metric)
    if lex is None:
        lex = lat.lexicon
    state = init_classes(lat, metric, lex)
    if debug:
        state.check_invariants()
    intra_word_cluster(state, metric, on_merge, debug)
    inter_word_cluster(state, lex, metric, on_merge, debug)
    return build_confusion_network(state), state
