import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confnet.align import align_lattice
from confnet.decode import (
    ConfusionNetwork,
    NBestEntry,
    NBestList,
    center_hypothesis,
    consensus_hypothesis,
    expected_slot_error,
    expected_word_error,
    lattice_path_to_cn_path,
    match_words_to_cn,
    mwe,
    nbest_consensus,
    nbest_posteriors,
    path_expected_error,
    word_error,
)
from confnet.lattice import LatticeFormatError, compute_link_posteriors, map_path
from confnet.synth import random_lattice, simple_lexicon

import oracles

words = st.lists(st.sampled_from("ABCD"), max_size=6)


def cn_of(*slots):
    return ConfusionNetwork("u", [dict(s) for s in slots])


def random_cn(rng, n_slots, max_width=3):
    slots = []
    for _ in range(n_slots):
        k = int(rng.integers(1, max_width + 1))
        toks = list(rng.choice(["A", "B", "C", "D", "-"], size=k, replace=False))
        p = rng.dirichlet(np.ones(k))
        slots.append({str(t): float(x) for t, x in zip(toks, p)})
    return ConfusionNetwork("r", slots)


def random_nbest(rng, n, vocab=10, max_len=8):
    hyps = []
    for _ in range(n):
        length = int(rng.integers(0, max_len + 1))
        hyps.append(NBestEntry(tuple(f"W{int(x)}" for x in rng.integers(0, vocab, size=length)),
                               float(rng.normal(0, 20)), float(rng.normal(-5, 2)), 0.0))
    return nbest_posteriors(NBestList("nb", tuple(hyps)), 12.0)


# ---------------------------------------------------------------------------
# consensus


def test_consensus_examples():
    assert consensus_hypothesis(cn_of({"A": 0.7, "-": 0.3})) == (["A"], pytest.approx(0.3))
    assert consensus_hypothesis(cn_of({"-": 0.5, "A": 0.5}))[0] == ["A"]
    assert consensus_hypothesis(cn_of({"B": 0.5, "A": 0.5}))[0] == ["A"]
    assert consensus_hypothesis(cn_of({"-": 0.8, "A": 0.2}, {"B": 1.0})) == (["B"], pytest.approx(0.2))


def test_consensus_ten_best_slots():
    slots = [{"I": 0.34, "BY": 0.45}, {"DO": 0.29, "DOING": 0.49, "DON'T": 0.01},
             {"FINE": 0.28, "INSIDE": 0.16, "WELL": 0.11, "SIGHT": 0.10, "BYE": 0.07,
              "THOUGHT": 0.05, "BUY": 0.01, "FUN": 0.01}]
    cn = ConfusionNetwork("tb", [{w: p / 0.79 for w, p in s.items()} for s in slots])
    words_, err = consensus_hypothesis(cn)
    assert words_ == ["BY", "DOING", "FINE"]
    assert 3 - err == pytest.approx(1.22 / 0.79)


def test_expected_slot_error():
    assert expected_slot_error({"A": 1.0}, "A") == 0.0
    assert expected_slot_error({"A": 0.45, "B": 0.49, "-": 0.06}, "A") == pytest.approx(0.55)
    assert expected_slot_error({"A": 1.0}, "-") == 1.0
    with pytest.raises(ValueError):
        expected_slot_error({"A": 1.0}, "B")


@pytest.mark.parametrize("seed", range(30))
def test_consensus_is_min_expected_error(seed):
    rng = np.random.default_rng(seed)
    cn = random_cn(rng, int(rng.integers(1, 7)))
    words_, err = consensus_hypothesis(cn)
    best = min(oracles.expected_slot_error(cn.slots, p) for p in oracles.cn_paths(cn.slots))
    assert err == pytest.approx(best, abs=1e-12)


# ---------------------------------------------------------------------------
# word error


def test_word_error_examples():
    ref = "I'M DOING FINE".split()
    assert word_error("I DO INSIDE".split(), ref).errors == 3
    e = word_error("BY DOING FINE".split(), ref)
    assert (e.errors, e.subs, e.dels, e.ins) == (1, 1, 0, 0)
    assert tuple(word_error([], ["A", "B"])) == (2, 0, 2, 0)
    assert tuple(word_error(["A", "B"], [])) == (2, 0, 0, 2)
    assert word_error(["A"], ["A"]).errors == 0


@settings(max_examples=200, deadline=None)
@given(a=words, b=words, c=words)
def test_word_error_is_metric(a, b, c):
    ab = word_error(a, b).errors
    assert ab == oracles.levenshtein(a, b)
    assert ab == word_error(b, a).errors
    assert ab <= word_error(a, c).errors + word_error(c, b).errors
    e = word_error(a, b)
    assert e.subs + e.dels + e.ins == e.errors


# ---------------------------------------------------------------------------
# MWE


def test_mwe_examples():
    cn = cn_of({"A": 0.6, "-": 0.4}, {"B": 1.0})
    assert mwe(cn, ["A", "B"], ["A", "B"]) == 0
    assert mwe(cn, ["A", "B"], ["-", "B"]) == 1
    assert mwe(cn, ["-", "B"], ["-", "B"]) == 0
    with pytest.raises(ValueError):
        mwe(cn, ["C", "B"], ["A", "B"])
    with pytest.raises(ValueError):
        mwe(cn, ["A"], ["A"])


@pytest.mark.parametrize("seed", range(30))
def test_mwe_bounds_word_error(seed):
    rng = np.random.default_rng(seed)
    cn = random_cn(rng, int(rng.integers(1, 8)), 4)
    for _ in range(20):
        p1 = [str(rng.choice(sorted(s))) for s in cn.slots]
        p2 = [str(rng.choice(sorted(s))) for s in cn.slots]
        assert mwe(cn, p1, p2) >= oracles.levenshtein(oracles.strip(p1), oracles.strip(p2))


@pytest.mark.parametrize("seed", range(10))
def test_all_lattice_paths_map_into_cn(seed):
    rng = np.random.default_rng(seed)
    raw = random_lattice(rng)
    lex = simple_lexicon({l.word for l in raw.links}, rng)
    lat = compute_link_posteriors(raw, 1.0, lex)
    cn, _ = align_lattice(lat, lex)
    wb = {l.link_id: l.word for l in lat.links}
    for p in oracles.enumerate_paths(lat):
        tokens = lattice_path_to_cn_path(cn, wb, [l.link_id for l in p])
        assert oracles.strip(tokens) == [l.word for l in p]
    with pytest.raises(ValueError):
        lattice_path_to_cn_path(cn, wb, [999])
    # consensus never loses to the MAP path in expected slot error
    map_tokens = lattice_path_to_cn_path(cn, wb, map_path(lat))
    assert consensus_hypothesis(cn)[1] <= path_expected_error(cn, map_tokens) + 1e-12


def test_cn_format_roundtrip():
    cn = ConfusionNetwork("u7", [{"B": 0.25, "A": 0.25, "-": 0.5}, {"C": 1.0}])
    text = cn.format()
    assert text.splitlines() == ["UTT=u7", "slot 0 -:0.500000 A:0.250000 B:0.250000",
                                 "slot 1 C:1.000000"]
    back = ConfusionNetwork.parse(text)
    assert back.slots == cn.slots and back.utterance_id == "u7"
    with pytest.raises(LatticeFormatError):
        ConfusionNetwork.parse("UTT=x\nslot 0 A:zz\n")


# ---------------------------------------------------------------------------
# N-best


def test_nbest_posteriors_examples():
    one = nbest_posteriors(NBestList("a", (NBestEntry(("A",), -3.0, -1.0),)), 12.0)
    assert one.posteriors == (1.0,)
    two = nbest_posteriors(NBestList("b", (NBestEntry(("A",), -12.0, 0.0),
                                           NBestEntry(("B",), 0.0, -1.0))), 12.0)
    assert two.posteriors == pytest.approx((0.5, 0.5))
    with pytest.raises(ValueError):
        nbest_posteriors(NBestList("c", ()), 12.0)
    with pytest.raises(ValueError):
        nbest_posteriors(one, 0.0)


def test_nbest_ten_best_posteriors():
    hyps = tuple(NBestEntry(tuple(w.split()), math.log(p), 0.0) for w, p in oracles.TEN_BEST)
    nb = nbest_posteriors(NBestList("tb", hyps), 1.0)
    for (_, p), got in zip(oracles.TEN_BEST, nb.posteriors):
        assert abs(got - p / 0.79) < 1e-6


def test_nbest_file_roundtrip():
    nb = NBestList("z", (NBestEntry(("A", "B"), -1.5, -2.0, -0.5), NBestEntry((), 0.0, 0.0, 0.0)))
    back = NBestList.parse(nb.format())
    assert back == nb
    with pytest.raises(LatticeFormatError):
        NBestList.parse("UTT=z\n")
    with pytest.raises(LatticeFormatError):
        NBestList.parse("UTT=z\nac=1 lm=2 A B\n")


def test_center_examples():
    single = nbest_posteriors(NBestList("s", (NBestEntry(("A", "B")),)), 12.0)
    assert center_hypothesis(single) == (0, ["A", "B"], 0.0)
    same = nbest_posteriors(NBestList("s", tuple(NBestEntry(("A",), float(i)) for i in range(4))), 1)
    assert center_hypothesis(same)[0] == 0


def test_expected_word_error_examples():
    nb = nbest_posteriors(NBestList("e", (NBestEntry(("A", "B")), NBestEntry(("A", "C")))), 1.0)
    assert expected_word_error(["A", "B"], nb) == pytest.approx(0.5)
    sure = nbest_posteriors(NBestList("e", (NBestEntry(("A",), 0.0), NBestEntry(("B",), -1e4))), 1)
    assert expected_word_error(["A"], sure) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_center_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    nb = random_nbest(rng, int(rng.integers(1, 51)))
    idx, words_, err = center_hypothesis(nb)
    hyps = [h.words for h in nb.hypotheses]
    want_i, want_err = oracles.brute_center(hyps, nb.posteriors)
    assert (idx, err) == (want_i, want_err)
    assert words_ == list(hyps[idx])
    assert err == pytest.approx(expected_word_error(words_, nb))
    assert all(err <= expected_word_error(h, nb) + 1e-12 for h in hyps)


def test_nbest_consensus():
    cn = cn_of({"A": 0.6, "B": 0.4}, {"C": 0.7, "-": 0.3})
    nb = NBestList("n", (NBestEntry(("B", "C")), NBestEntry(("A", "C")), NBestEntry(("Q",))))
    assert nbest_consensus(cn, nb) == ["A", "C"]
    assert match_words_to_cn(cn, ["C"]) == ["-", "C"]
    assert match_words_to_cn(cn, ["Q"]) is None
    with pytest.raises(ValueError):
        nbest_consensus(cn, NBestList("n", (NBestEntry(("Q",)),)))


@pytest.mark.parametrize("seed", range(10))
def test_nbest_consensus_matches_scoring(seed):
    rng = np.random.default_rng(seed)
    cn = random_cn(rng, 4)
    paths = list(oracles.cn_paths(cn.slots))
    pick = rng.choice(len(paths), size=min(6, len(paths)), replace=False)
    hyps = tuple(NBestEntry(tuple(oracles.strip(paths[i]))) for i in pick)
    got = nbest_consensus(cn, NBestList("n", hyps))
    scores = []
    for h in hyps:
        tokens = match_words_to_cn(cn, h.words)
        scores.append(oracles.expected_slot_error(cn.slots, tokens))
    assert got == list(hyps[int(np.argmin(scores))].words)
