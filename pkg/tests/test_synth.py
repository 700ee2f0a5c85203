import numpy as np
import pytest

from confnet.lattice import count_paths, format_lattice, oracle_wer, parse_lattice
from confnet.synth import SyntheticSpec, generate_corpus, random_lattice


def test_empty_corpus():
    corpus = generate_corpus(SyntheticSpec(utterance_count=0), seed=1)
    assert corpus.lattices == [] and corpus.references == {}


def test_same_seed_same_bytes():
    a = generate_corpus(SyntheticSpec(utterance_count=5), seed=42)
    b = generate_corpus(SyntheticSpec(utterance_count=5), seed=42)
    assert [format_lattice(l) for l in a.lattices] == [format_lattice(l) for l in b.lattices]
    assert a.lexicon.format() == b.lexicon.format()
    c = generate_corpus(SyntheticSpec(utterance_count=5), seed=43)
    assert [format_lattice(l) for l in a.lattices] != [format_lattice(l) for l in c.lattices]


@pytest.mark.parametrize("seed", range(3))
def test_reference_is_a_lattice_path(seed):
    corpus = generate_corpus(SyntheticSpec(utterance_count=40), seed=seed)
    for lat in corpus.lattices:
        assert oracle_wer(lat, corpus.references[lat.utterance_id])[0] == 0
        assert parse_lattice(format_lattice(lat)) == lat
        assert all(w in corpus.lexicon for w in {l.word for l in lat.links})


@pytest.mark.parametrize("field, value", [("vocab_size", 1), ("min_length", 0),
                                          ("substitution_rate", 1.5), ("hypotheses", 0),
                                          ("lmscale", 0.0)])
def test_invalid_spec(field, value):
    with pytest.raises(ValueError):
        SyntheticSpec.from_dict({field: value})
    with pytest.raises(ValueError):
        SyntheticSpec.from_dict({"nonsense": 1})


def test_random_lattice_path_cap():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert count_paths(random_lattice(rng, n_nodes=12, extra_links=20, max_paths=500)) <= 500
