"""Seeded synthetic corpora and random lattices.

Every generated utterance lattice contains its reference transcription as
one of its paths. Competing paths are edit variants of the reference built
from phonetically close decoy words, with noisy scores that make the MAP
path wrong now and then while word posteriors still lean to the truth.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from confnet.align import phonetic_similarity
from confnet.lattice import Lattice, Link, PronLexicon, count_paths

PHONES = ("aa", "ae", "ah", "b", "d", "eh", "f", "g", "ih", "iy", "k", "l",
          "m", "n", "ow", "p", "r", "s", "t", "uw", "v", "z")


@dataclass
class SyntheticSpec:
    utterance_count: int = 20
    vocab_size: int = 40
    min_length: int = 2
    max_length: int = 6
    hypotheses: int = 8
    decoys_per_word: int = 3
    substitution_rate: float = 0.3
    deletion_rate: float = 0.05
    insertion_rate: float = 0.05
    error_penalty: float = 1.0
    score_noise: float = 1.5
    multi_variant_rate: float = 0.2
    lmscale: float = 12.0

    def validate(self) -> None:
        if self.utterance_count < 0:
            raise ValueError("utterance_count must be >= 0")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")
        if self.hypotheses < 1:
            raise ValueError("hypotheses must be >= 1")
        if not 1 <= self.decoys_per_word < self.vocab_size:
            raise ValueError("decoys_per_word must lie in [1, vocab_size)")
        for name in ("substitution_rate", "deletion_rate", "insertion_rate", "multi_variant_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.error_penalty < 0 or self.score_noise < 0:
            raise ValueError("error_penalty and score_noise must be >= 0")
        if not self.lmscale > 0:
            raise ValueError("lmscale must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec fields: {sorted(unknown)}")
        spec = cls(**data)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Corpus:
    lattices: list[Lattice]
    references: dict[str, list[str]]
    lexicon: PronLexicon


def random_lexicon(rng: np.random.Generator, size: int, multi_variant_rate: float = 0.0) -> PronLexicon:
    """Random words built from clusters of phonetically close pronunciations."""
    lex = PronLexicon()
    names: set[str] = set()
    while len(names) < size:
        base = list(rng.choice(PHONES, size=int(rng.integers(1, 5))))
        # a small family of neighbours, each one phone edit away
        family = [base]
        for _ in range(int(rng.integers(0, 3))):
            v = list(base)
            pos = int(rng.integers(0, len(v)))
            v[pos] = str(rng.choice(PHONES))
            family.append(v)
        for phones in family:
            name = "".join(phones).upper()
            if name in names or len(names) >= size:
                continue
            names.add(name)
            lex.add(name, phones)
            if rng.random() < multi_variant_rate:
                alt = list(phones) + [str(rng.choice(PHONES))]
                lex.add(name, alt)
    return lex


def _decoys(lex: PronLexicon, k: int) -> dict[str, list[str]]:
    words = lex.words()
    out = {}
    for w in words:
        scored = sorted((-phonetic_similarity(w, v, lex), v) for v in words if v != w)
        out[w] = [v for _, v in scored[:k]]
    return out


def _variant(rng, ref_timed, decoys, spec, vocab):
    """One edit variant of the timed reference: list of (word, start, end)."""
    out: list[list] = []
    carry = None  # start time of a leading deleted span
    for word, s, e in ref_timed:
        r = rng.random()
        if r < spec.deletion_rate:
            if out:
                out[-1][2] = e
            elif carry is None:
                carry = s
            continue
        if r < spec.deletion_rate + spec.substitution_rate:
            word = str(rng.choice(decoys[word]))
        out.append([word, s if carry is None else carry, e])
        carry = None
        if rng.random() < spec.insertion_rate:
            mid = round((out[-1][1] + out[-1][2]) / 2, 6)
            out.append([str(rng.choice(vocab)), mid, out[-1][2]])
            out[-2][2] = mid
    return [tuple(x) for x in out]


def generate_utterance(rng: np.random.Generator, utt: str, spec: SyntheticSpec,
                       lex: PronLexicon, decoys: dict[str, list[str]]):
    vocab = lex.words()
    n = int(rng.integers(spec.min_length, spec.max_length + 1))
    ref = [str(w) for w in rng.choice(vocab, size=n)]
    t = 0.0
    ref_timed = []
    for w in ref:
        dur = round(0.15 + 0.06 * len(lex.baseform(w)) + float(rng.uniform(0, 0.1)), 3)
        ref_timed.append((w, round(t, 6), round(t + dur, 6)))
        t += dur

    hyps = {tuple(ref_timed)}
    ordered = [tuple(ref_timed)]
    for _ in range(spec.hypotheses - 1):
        h = tuple(_variant(rng, ref_timed, decoys, spec, vocab))
        if h and h not in hyps:
            hyps.add(h)
            ordered.append(h)

    ref_words = [w for w, _, _ in ref_timed]
    targets = []
    for h in ordered:
        errs = _edit_distance([w for w, _, _ in h], ref_words)
        targets.append(-spec.error_penalty * errs + spec.score_noise * float(rng.standard_normal()))

    lam = spec.lmscale
    node_times = {0: 0.0}
    trie: dict[tuple, int] = {}
    links: list[Link] = []
    pending = []
    for h, target in zip(ordered, targets):
        u = 0
        scaled = 0.0
        for k, (w, s, e) in enumerate(h):
            variant = int(rng.integers(0, len(lex.variants(w))))
            if k < len(h) - 1:
                key = (u, w, e, variant)
                if key not in trie:
                    nid = len(node_times)
                    node_times[nid] = e
                    trie[key] = nid
                    lm = -float(rng.uniform(1.0, 4.0))
                    ac = -lam * float(rng.uniform(0.0, 2.0))
                    links.append(Link(len(links), u, nid, w, 0.0, 0.0, round(ac, 6), round(lm, 6), variant))
                link = next(l for l in links if l.inode == u and l.fnode == trie[key])
                scaled += link.lm_logscore + lex.variant_logprob(w) + link.ac_logscore / lam
                u = trie[key]
            else:
                lm = round(-float(rng.uniform(1.0, 4.0)), 6)
                ac = round(lam * (target - scaled - lm - lex.variant_logprob(w)), 6)
                pending.append((u, w, lm, ac, variant))
    final = len(node_times)
    node_times[final] = round(t, 6)
    for u, w, lm, ac, variant in pending:
        links.append(Link(len(links), u, final, w, 0.0, 0.0, ac, lm, variant))
    lat = Lattice.build(utt, node_times, links, lam)
    return lat, ref_words


def _edit_distance(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def generate_corpus(spec: SyntheticSpec, seed: int) -> Corpus:
    spec.validate()
    rng = np.random.default_rng(seed)
    lex = random_lexicon(rng, spec.vocab_size, spec.multi_variant_rate)
    decoys = _decoys(lex, spec.decoys_per_word)
    width = max(4, len(str(spec.utterance_count)))
    lattices, refs = [], {}
    for i in range(spec.utterance_count):
        utt = f"utt{i:0{width}d}"
        lat, ref = generate_utterance(rng, utt, spec, lex, decoys)
        lattices.append(lat)
        refs[utt] = ref
    return Corpus(lattices, refs, lex)


def random_lattice(rng: np.random.Generator, n_nodes: int = 6, extra_links: int = 5,
                   vocab: tuple[str, ...] = ("A", "B", "C", "D"), max_paths: int = 5000,
                   parallel_rate: float = 0.2, utt: str = "rand") -> Lattice:
    """Random lattice with strictly increasing node times (for property tests).

    A backbone chain keeps every node on an initial->final path; extra
    forward links (span <= 3 nodes) and parallel duplicates add branching.
    """
    while True:
        times = np.cumsum(rng.uniform(0.1, 0.5, size=n_nodes))
        node_times = {i: round(float(times[i]) - float(times[0]), 4) for i in range(n_nodes)}
        spans = [(i, i + 1) for i in range(n_nodes - 1)]
        for _ in range(extra_links):
            i = int(rng.integers(0, n_nodes - 1))
            j = int(min(n_nodes - 1, i + rng.integers(1, 4)))
            spans.append((i, j))
        links = []
        for i, j in spans:
            word = str(rng.choice(vocab))
            copies = 2 if rng.random() < parallel_rate else 1
            for c in range(copies):
                links.append(Link(len(links), i, j, word, 0.0, 0.0,
                                  round(float(rng.normal(0, 3.0)), 4),
                                  round(-float(rng.uniform(0, 3.0)), 4), c))
        lat = Lattice.build(utt, node_times, links, 1.0)
        if count_paths(lat) <= max_paths:
            return lat
        extra_links = max(0, extra_links - 1)


def simple_lexicon(words, rng: np.random.Generator | None = None) -> PronLexicon:
    """Lexicon giving each word a short pronunciation (random if ``rng`` given)."""
    lex = PronLexicon()
    for i, w in enumerate(sorted(words)):
        if rng is None:
            phones = [PHONES[i % len(PHONES)], PHONES[(3 * i + 1) % len(PHONES)]]
        else:
            phones = list(rng.choice(PHONES, size=int(rng.integers(1, 4))))
        lex.add(w, [str(p) for p in phones])
        lex.add(w, [str(p) for p in phones] + ["ah"])
    return lex


def corpus_log_size(corpus: Corpus) -> float:
    return sum(math.log10(count_paths(l)) for l in corpus.lattices)
