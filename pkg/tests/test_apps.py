import math
from collections import Counter

import numpy as np
import pytest

from confnet.align import align_lattice
from confnet.apps import (
    cn_accuracy,
    confidence_annotate,
    consensus_prune_lattice,
    correct_rank_statistics,
    densities,
    likelihood_prune_lattice,
    prune_confusion_network,
)
from confnet.decode import ConfusionNetwork, consensus_hypothesis, word_error
from confnet.lattice import (
    Lattice,
    Link,
    compute_link_posteriors,
    count_paths,
    oracle_wer,
    prune_links,
)
from confnet.synth import SyntheticSpec, generate_corpus, random_lattice, simple_lexicon

import oracles


def cn_of(*slots):
    return ConfusionNetwork("u", [dict(s) for s in slots])


def path_key(p):
    return tuple((l.word, l.itime, l.ftime, l.ac_logscore, l.lm_logscore) for l in p)


def aligned_random(seed, **kw):
    rng = np.random.default_rng(seed)
    raw = random_lattice(rng, **kw)
    lex = simple_lexicon({l.word for l in raw.links}, rng)
    lat = prune_links(compute_link_posteriors(raw, 1.0, lex), 1e-3)
    cn, _ = align_lattice(lat, lex)
    return rng, lat, cn


# ---------------------------------------------------------------------------
# network pruning


def test_prune_cn_examples():
    cn = cn_of({"A": 0.5, "B": 0.3, "C": 0.2})
    assert prune_confusion_network(cn, 5).slots == cn.slots
    assert prune_confusion_network(cn, 2).slots == [{"A": 0.5, "B": 0.3}]
    tight = prune_confusion_network(cn_of({"A": 0.35, "B": 0.33, "C": 0.32}), None, 0.4)
    assert tight.slots == [{"A": 0.35}]
    assert tight.retained_mass == [pytest.approx(0.35)]
    with pytest.raises(ValueError):
        prune_confusion_network(cn, 0)


# ---------------------------------------------------------------------------
# consensus-based lattice pruning


def test_consensus_prune_diamond():
    nodes = {0: 0.0, 1: 1.0}
    links = [Link(0, 0, 1, "A", 0, 0, math.log(0.6), 0), Link(1, 0, 1, "B", 0, 0, math.log(0.4), 0)]
    lat = compute_link_posteriors(Lattice.build("d", nodes, links), 1.0)
    cn, _ = align_lattice(lat, simple_lexicon(["A", "B"]))
    out = consensus_prune_lattice(lat, prune_confusion_network(cn, 1))
    assert [l.word for l in out.links] == ["A"]
    assert out.links[0].posterior == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_consensus_prune_unpruned_keeps_paths(seed):
    _, lat, cn = aligned_random(seed)
    out = consensus_prune_lattice(lat, cn)
    assert {path_key(p) for p in oracles.enumerate_paths(out)} == \
        {path_key(p) for p in oracles.enumerate_paths(lat)}


@pytest.mark.parametrize("seed", range(40))
def test_consensus_prune_path_sets(seed):
    rng, lat, cn = aligned_random(seed, n_nodes=8, extra_links=8)
    pruned = prune_confusion_network(cn, int(rng.integers(1, 3)), float(rng.uniform(0, 0.4)))
    out = consensus_prune_lattice(lat, pruned)
    before = {path_key(p): p for p in oracles.enumerate_paths(lat)}
    after = {path_key(p) for p in oracles.enumerate_paths(out)}
    assert after <= set(before)
    assert count_paths(out) == len(after) <= count_paths(lat)
    slot = cn.link_slot

    def tokens(p):
        t = ["-"] * len(cn.slots)
        for l in p:
            t[slot[l.link_id]] = l.word
        return t

    # every path the pruned network still spells survives
    for key, p in before.items():
        if all(t in s for t, s in zip(tokens(p), pruned.slots)):
            assert key in after
    # and so does a path of least expected error under the pruned network
    best = min(oracles.expected_slot_error(pruned.slots, tokens(p)) for p in before.values())
    assert any(abs(oracles.expected_slot_error(pruned.slots, tokens(before[k])) - best) < 1e-12
               for k in after)


# ---------------------------------------------------------------------------
# accuracy and statistics


def test_cn_accuracy_examples():
    assert cn_accuracy(cn_of({"A": 0.5, "B": 0.5}), ["B"]) == (0, ["B"])
    cn = cn_of({"A": 0.6, "-": 0.4}, {"B": 1.0})
    assert cn_accuracy(cn, ["B"]) == (0, ["-", "B"])
    assert cn_accuracy(cn, ["A", "B"])[0] == 0
    assert cn_accuracy(cn, ["C", "A", "B", "D"])[0] == 2


@pytest.mark.parametrize("seed", range(30))
def test_cn_accuracy_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    slots = []
    for _ in range(int(rng.integers(1, 6))):
        k = int(rng.integers(1, 4))
        toks = rng.choice(["A", "B", "C", "-"], size=k, replace=False)
        slots.append({str(t): 1 / k for t in toks})
    cn = ConfusionNetwork("r", slots)
    ref = [str(w) for w in rng.choice(["A", "B", "C"], size=int(rng.integers(0, 5)))]
    errs, toks = cn_accuracy(cn, ref)
    best = min(oracles.levenshtein(oracles.strip(p), ref) for p in oracles.cn_paths(slots))
    assert errs == best
    assert oracles.levenshtein(oracles.strip(toks), ref) == errs
    assert errs <= word_error(consensus_hypothesis(cn)[0], ref).errors


@pytest.mark.parametrize("seed", range(15))
def test_cn_accuracy_not_worse_than_lattice(seed):
    rng, lat, cn = aligned_random(seed, n_nodes=8, extra_links=8)
    ref = [str(w) for w in rng.choice(list("ABCD"), size=5)]
    assert cn_accuracy(cn, ref)[0] <= oracle_wer(lat, ref)[0]


def test_rank_statistics_examples():
    st = correct_rank_statistics(cn_of({"A": 1.0}, {"B": 1.0}), ["A", "B"])
    assert dict(st.rank_histogram) == {1: 2}
    assert st.singleton_count == st.singleton_correct == 2
    st = correct_rank_statistics(cn_of({"A": 0.6, "B": 0.4}), ["B"])
    assert dict(st.rank_histogram) == {2: 1}
    assert (st.pair_count, st.pair_top1_correct) == (1, 0)


def test_rank_statistics_deletion_rank():
    st = correct_rank_statistics(cn_of({"A": 0.7, "-": 0.3}, {"B": 1.0}), ["B"])
    assert dict(st.rank_histogram) == {2: 1, 1: 1}


def test_rank_histogram_recount_on_corpus():
    corpus = generate_corpus(SyntheticSpec(utterance_count=15), seed=11)
    for lat in corpus.lattices:
        cn, _ = align_lattice(prune_links(compute_link_posteriors(lat, None, corpus.lexicon)),
                              corpus.lexicon)
        ref = corpus.references[lat.utterance_id]
        st = correct_rank_statistics(cn, ref)
        errs, toks = cn_accuracy(cn, ref)
        # the reference is a lattice path, so the oracle path spells it exactly
        # and its tokens are the per-slot truth
        assert errs == 0
        recount = Counter()
        for s, t in zip(cn.slots, toks):
            ranked = sorted(s.items(), key=lambda kv: (-kv[1], kv[0]))
            recount[[w for w, _ in ranked].index(t) + 1] += 1
        assert st.rank_histogram == recount
        assert st.total_slots == len(cn.slots) and st.missing_count == 0
        assert st.singleton_correct <= st.singleton_count
        assert st.pair_top1_correct <= st.pair_count


def test_confidence_annotate():
    cn = cn_of({"A": 0.7, "-": 0.3})
    assert confidence_annotate(cn, ["A"]) == [("A", 0.7)]
    single = cn_of({"A": 1.0}, {"B": 1.0})
    assert confidence_annotate(single, ["A", "B"]) == [("A", 1.0), ("B", 1.0)]
    with pytest.raises(ValueError):
        confidence_annotate(single, ["Q"])


# ---------------------------------------------------------------------------
# likelihood pruning and densities


@pytest.mark.parametrize("seed", range(15))
def test_likelihood_prune_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    lat = compute_link_posteriors(random_lattice(rng), 2.0)
    beam = float(rng.uniform(0, 4))
    out = likelihood_prune_lattice(lat, beam)
    scored = [(sum(oracles.link_score(l, 2.0, None) for l in p), p)
              for p in oracles.enumerate_paths(lat)]
    best = max(s for s, _ in scored)
    keep = {l.link_id for s, p in scored if s >= best - beam - 1e-9 for l in p}
    assert {l.link_id for l in out.links} == keep


def test_densities():
    lat = Lattice.build("x", {0: 0, 1: 1, 2: 2}, [Link(0, 0, 1, "A", 0, 0, 0, 0),
                                                  Link(1, 1, 2, "B", 0, 0, 0, 0),
                                                  Link(2, 1, 2, "C", 0, 0, 0, 0)])
    assert densities(lat, 2) == (1.5, 1.5)
