"""Uses of confusion networks beyond the consensus transcript.

Network pruning, consensus-based lattice pruning (intersection with a
pruned network), likelihood-beam pruning for comparison, network oracle
accuracy, rank statistics of the correct word and confidence annotation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

from confnet.decode import (
    ConfusionNetwork,
    consensus_hypothesis,
    consensus_path,
    match_words_to_cn,
    ranked_tokens,
)
from confnet.lattice import (
    DELETION,
    Lattice,
    Link,
    _link_logweights,
    _scoring,
    compute_link_posteriors,
    trim,
)


def prune_confusion_network(cn: ConfusionNetwork, max_candidates: int | None = None,
                            min_posterior: float = 0.0) -> ConfusionNetwork:
    """Keep at most ``max_candidates`` tokens per slot, none below ``min_posterior``.

    The top token of each slot always survives. Posteriors are left as they
    were (not renormalized); ``retained_mass`` records what each slot kept.
    """
    if max_candidates is not None and max_candidates < 1:
        raise ValueError("max_candidates must be at least 1")
    slots, kept_mass = [], []
    for slot in cn.slots:
        ranked = ranked_tokens(slot)
        if max_candidates is not None:
            ranked = ranked[:max_candidates]
        kept = [ranked[0]] + [(w, p) for w, p in ranked[1:] if p >= min_posterior]
        slots.append(dict(kept))
        kept_mass.append(math.fsum(p for _, p in kept))
    return replace(cn, slots=slots, retained_mass=kept_mass)


def cn_paths_count(cn: ConfusionNetwork) -> int:
    return cn.num_paths()


# ---------------------------------------------------------------------------
# Oracle accuracy and reference alignment


def _align_reference(cn: ConfusionNetwork, ref: Sequence[str]):
    """Best network path against ``ref``: (errors, tokens, aligned ref per slot).

    Moves from each cell are tried in the order match, skip via ``-``,
    substitution, reference deletion, insertion; the first minimum wins.
    """
    n, m = len(cn.slots), len(ref)
    INF = math.inf
    d = [[INF] * (m + 1) for _ in range(n + 1)]
    back: list[list] = [[None] * (m + 1) for _ in range(n + 1)]
    d[0][0] = 0
    for j in range(1, m + 1):
        d[0][j] = j
        back[0][j] = ("del", None)
    for i in range(1, n + 1):
        slot = cn.slots[i - 1]
        words = [w for w, _ in ranked_tokens(slot) if w != DELETION]
        has_del = DELETION in slot
        for j in range(m + 1):
            cands = []
            if j > 0 and ref[j - 1] in slot and ref[j - 1] != DELETION:
                cands.append((d[i - 1][j - 1], ("match", ref[j - 1])))
            if has_del:
                cands.append((d[i - 1][j], ("skip", DELETION)))
            if j > 0 and words:
                cands.append((d[i - 1][j - 1] + 1, ("sub", words[0])))
            if j > 0:
                cands.append((d[i][j - 1] + 1, ("del", None)))
            if words:
                cands.append((d[i - 1][j] + 1, ("ins", words[0])))
            best = INF
            for c, mv in cands:
                if c < best:
                    best, back[i][j] = c, mv
            d[i][j] = best
    tokens = [DELETION] * n
    aligned: list[str | None] = [None] * n
    i, j = n, m
    while i > 0 or j > 0:
        kind, tok = back[i][j]
        if kind == "del":
            j -= 1
            continue
        tokens[i - 1] = tok
        if kind in ("match", "sub"):
            aligned[i - 1] = ref[j - 1]
            j -= 1
        i -= 1
    return int(d[n][m]), tokens, aligned


def cn_accuracy(cn: ConfusionNetwork, ref: Sequence[str]) -> tuple[int, list[str]]:
    """Least word errors of any network path against ``ref``, and that path's tokens."""
    errors, tokens, _ = _align_reference(cn, ref)
    return errors, tokens


@dataclass
class SlotStatistics:
    rank_histogram: Counter = field(default_factory=Counter)
    # reference token absent from its slot
    missing_count: int = 0
    singleton_count: int = 0
    singleton_correct: int = 0
    pair_count: int = 0
    pair_top1_correct: int = 0
    total_slots: int = 0

    def update(self, other: "SlotStatistics") -> "SlotStatistics":
        self.rank_histogram.update(other.rank_histogram)
        self.missing_count += other.missing_count
        self.singleton_count += other.singleton_count
        self.singleton_correct += other.singleton_correct
        self.pair_count += other.pair_count
        self.pair_top1_correct += other.pair_top1_correct
        self.total_slots += other.total_slots
        return self

    def summary_rows(self) -> list[tuple[str, float | int]]:
        ranked = sum(self.rank_histogram.values())
        top1 = self.rank_histogram.get(1, 0)
        top2 = top1 + self.rank_histogram.get(2, 0)

        def frac(a, b):
            return a / b if b else 0.0

        return [
            ("total_slots", self.total_slots),
            ("ranked_slots", ranked),
            ("missing_reference", self.missing_count),
            ("top1_rate", frac(top1, ranked)),
            ("top2_rate", frac(top2, ranked)),
            ("singleton_count", self.singleton_count),
            ("singleton_correct", self.singleton_correct),
            ("singleton_fraction", frac(self.singleton_count, self.total_slots)),
            ("singleton_accuracy", frac(self.singleton_correct, self.singleton_count)),
            ("pair_count", self.pair_count),
            ("pair_top1_correct", self.pair_top1_correct),
            ("pair_fraction", frac(self.pair_count, self.total_slots)),
            ("pair_top1_accuracy", frac(self.pair_top1_correct, self.pair_count)),
            # share of slots whose error a perfect top-2 discriminator would fix
            ("rank2_gain_bound", frac(self.rank_histogram.get(2, 0), self.total_slots)),
        ]


def correct_rank_statistics(cn: ConfusionNetwork, ref: Sequence[str]) -> SlotStatistics:
    """Rank of the reference token in every slot, after aligning ``ref`` to ``cn``.

    Slots without an aligned reference word have ``-`` as their reference
    token. Reference words the alignment leaves out contribute nothing.
    """
    _, _, aligned = _align_reference(cn, ref)
    stats = SlotStatistics()
    for slot, truth in zip(cn.slots, aligned):
        truth = DELETION if truth is None else truth
        order = [w for w, _ in ranked_tokens(slot)]
        stats.total_slots += 1
        if truth in slot:
            stats.rank_histogram[order.index(truth) + 1] += 1
        else:
            stats.missing_count += 1
        if len(order) == 1:
            stats.singleton_count += 1
            stats.singleton_correct += order[0] == truth
        elif len(order) == 2:
            stats.pair_count += 1
            stats.pair_top1_correct += order[0] == truth
    return stats


def confidence_annotate(cn: ConfusionNetwork, hyp: Sequence[str]) -> list[tuple[str, float]]:
    """Pair each hypothesis word with the posterior of the slot it occupies."""
    if list(hyp) == consensus_hypothesis(cn)[0]:
        tokens = consensus_path(cn)
    else:
        tokens = match_words_to_cn(cn, hyp)
        if tokens is None:
            raise ValueError("hypothesis is not expressible in the confusion network")
    return [(t, cn.slots[i][t]) for i, t in enumerate(tokens) if t != DELETION]


# ---------------------------------------------------------------------------
# Lattice pruning


def _rescore(src: Lattice, out: Lattice) -> Lattice:
    if src.has_posteriors:
        return compute_link_posteriors(out, src.scale, src.lexicon)
    return out


def _protected_path(lat: Lattice, slots, slot_of, L) -> tuple[list[int], list[int]]:
    """Lattice path with least expected slot error; returns (links, skipped slots).

    Tokens missing from the pruned slots count as posterior zero.
    """
    def tok_cost(s, tok):
        return 1.0 - slots[s].get(tok, 0.0)

    INF = math.inf
    best: dict[tuple[int, int], float] = {(lat.initial_node, 0): 0.0}
    back: dict[tuple[int, int], tuple] = {}
    by_node: dict[int, list[int]] = {lat.initial_node: [0]}
    for u in lat.topo_order:
        for k in sorted(by_node.get(u, ())):
            c0 = best[(u, k)]
            for e in lat.out_links[u]:
                s = slot_of.get(e.link_id)
                if s is None or s < k:
                    continue
                c = c0 + sum(tok_cost(t, DELETION) for t in range(k, s)) + tok_cost(s, e.word)
                key = (e.fnode, s + 1)
                if c < best.get(key, INF):
                    if key not in best:
                        by_node.setdefault(e.fnode, []).append(s + 1)
                    best[key] = c
                    back[key] = (u, k, e.link_id)
    final = None
    for k in sorted(by_node.get(lat.final_node, ())):
        c = best[(lat.final_node, k)] + sum(tok_cost(t, DELETION) for t in range(k, L))
        if final is None or c < final[0]:
            final = (c, k)
    if final is None:
        raise ValueError("no lattice path maps onto the confusion network")
    links, skipped = [], list(range(final[1], L))
    key = (lat.final_node, final[1])
    while key != (lat.initial_node, 0):
        u, k, lid = back[key]
        links.append(lid)
        skipped.extend(range(k, slot_of[lid]))
        key = (u, k)
    links.reverse()
    return links, skipped


def consensus_prune_lattice(lat: Lattice, pruned_cn: ConfusionNetwork,
                            slot_links: Sequence[Sequence[int]] | None = None) -> Lattice:
    """Keep only the lattice paths that are also paths of the pruned network.

    A lattice path maps to a network path by sending each link to its slot
    and filling unvisited slots with ``-``; the path survives if every
    token it produces is still in the pruned network. The lattice path of
    least expected slot error always survives. Nodes are split when their
    surviving paths reach them at different slot positions; otherwise node
    and link ids are preserved.
    """
    slot_links = slot_links if slot_links is not None else pruned_cn.slot_links
    if not slot_links:
        raise ValueError("the network carries no slot-to-link mapping")
    slot_of = {lid: s for s, ls in enumerate(slot_links) for lid in ls}
    slots = [dict(s) for s in pruned_cn.slots]
    L = len(slots)

    protect_links, protect_skips = _protected_path(lat, slots, slot_of, L)
    allowed = {(slot_of[e.link_id], e.word) for e in lat.links
               if e.link_id in slot_of and e.word in slots[slot_of[e.link_id]]}
    allowed.update((slot_of[lid], lat.link_by_id[lid].word) for lid in protect_links)
    del_ok = [DELETION in s for s in slots]
    for s in protect_skips:
        del_ok[s] = True
    # first slot >= k that cannot be skipped
    next_block = [L] * (L + 1)
    for k in range(L - 1, -1, -1):
        next_block[k] = next_block[k + 1] if del_ok[k] else k

    def step(e: Link, k: int) -> int | None:
        s = slot_of.get(e.link_id)
        if s is None or s < k or next_block[k] < s or (s, e.word) not in allowed:
            return None
        return s + 1

    fwd: dict[int, set[int]] = {lat.initial_node: {0}}
    for u in lat.topo_order:
        for k in fwd.get(u, ()):
            for e in lat.out_links[u]:
                nk = step(e, k)
                if nk is not None:
                    fwd.setdefault(e.fnode, set()).add(nk)
    live: dict[int, set[int]] = {lat.final_node: {k for k in fwd.get(lat.final_node, ())
                                                   if next_block[k] == L}}
    transitions = []
    for u in reversed(lat.topo_order):
        if u == lat.final_node:
            continue
        for k in sorted(fwd.get(u, ())):
            for e in lat.out_links[u]:
                nk = step(e, k)
                if nk is not None and nk in live.get(e.fnode, ()):
                    live.setdefault(u, set()).add(k)
                    transitions.append((u, k, e, nk))
    if not transitions:
        raise ValueError("intersection is empty")

    # output node per live state; the final node absorbs all accepting states
    next_node = max(lat.node_times) + 1
    state_node: dict[tuple[int, int], int] = {}
    node_times = {}
    for u in lat.topo_order:
        for idx, k in enumerate(sorted(live.get(u, ()))):
            if u == lat.final_node or idx == 0:
                nid = u
            else:
                nid, next_node = next_node, next_node + 1
            state_node[(u, k)] = nid
            node_times[nid] = lat.node_times[u]
    next_link = max(l.link_id for l in lat.links) + 1
    used: set[int] = set()
    links = []
    for u, k, e, nk in sorted(transitions, key=lambda t: (t[2].link_id, t[1])):
        lid = e.link_id
        if lid in used:
            lid, next_link = next_link, next_link + 1
        used.add(lid)
        links.append(replace(e, link_id=lid, inode=state_node[(u, k)],
                             fnode=state_node[(e.fnode, nk)], posterior=None, prior_posterior=None))
    out = Lattice.build(lat.utterance_id, node_times, links, lat.lm_weight_hint)
    return _rescore(lat, out)


def likelihood_prune_lattice(lat: Lattice, beam: float, lmscale: float | None = None,
                             lex=None) -> Lattice:
    """Remove links whose best path scores more than ``beam`` below the best path."""
    if beam < 0:
        raise ValueError("beam must be non-negative")
    lmscale, lex = _scoring(lat, lmscale, lex)
    w = _link_logweights(lat, lmscale, lex)
    fwd = {lat.initial_node: 0.0}
    for n in lat.topo_order:
        if n != lat.initial_node:
            fwd[n] = max(fwd[l.inode] + w[l.link_id] for l in lat.in_links[n])
    bwd = {lat.final_node: 0.0}
    for n in reversed(lat.topo_order):
        if n != lat.final_node:
            bwd[n] = max(w[l.link_id] + bwd[l.fnode] for l in lat.out_links[n])
    best = fwd[lat.final_node]
    tol = 1e-9 * max(1.0, abs(best))
    keep = [l.link_id for l in lat.links
            if fwd[l.inode] + w[l.link_id] + bwd[l.fnode] >= best - beam - tol]
    if len(keep) == lat.num_links:
        return lat
    return _rescore(lat, trim(lat, keep))


def densities(lat: Lattice, ref_len: int) -> tuple[float, float]:
    """(node density, link density): counts per reference word."""
    denom = max(ref_len, 1)
    return lat.num_nodes / denom, lat.num_links / denom
