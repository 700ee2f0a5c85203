"""Confusion networks and minimum expected word error decoding for word lattices."""

from confnet.lattice import (
    Lattice,
    LatticeFormatError,
    Link,
    PronLexicon,
    compute_link_posteriors,
    count_paths,
    link_precedes,
    map_hypothesis,
    oracle_wer,
    parse_lattice,
    prune_links,
)
from confnet.decode import (
    ConfusionNetwork,
    NBestList,
    center_hypothesis,
    consensus_hypothesis,
    expected_word_error,
    word_error,
)
from confnet.align import align_lattice, build_confusion_network

__all__ = [
    "ConfusionNetwork",
    "Lattice",
    "LatticeFormatError",
    "Link",
    "NBestList",
    "PronLexicon",
    "align_lattice",
    "build_confusion_network",
    "center_hypothesis",
    "compute_link_posteriors",
    "consensus_hypothesis",
    "count_paths",
    "expected_word_error",
    "link_precedes",
    "map_hypothesis",
    "oracle_wer",
    "parse_lattice",
    "prune_links",
    "word_error",
]

__version__ = "0.1.0"
