"""Command-line interface: ``confnet <command> ...``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from confnet.align import METRICS, align_lattice, canonical_metric
from confnet.apps import (
    cn_accuracy,
    consensus_prune_lattice,
    correct_rank_statistics,
    densities,
    likelihood_prune_lattice,
    prune_confusion_network,
    SlotStatistics,
)
from confnet.decode import (
    ConfusionNetwork,
    NBestList,
    center_hypothesis,
    consensus_hypothesis,
    nbest_posteriors,
    word_error,
)
from confnet.lattice import (
    DEFAULT_LMSCALE,
    DEFAULT_PRUNE_THRESHOLD,
    InvariantError,
    Lattice,
    LatticeFormatError,
    PronLexicon,
    compute_link_posteriors,
    count_paths,
    format_lattice,
    map_hypothesis,
    oracle_wer,
    parse_lattice,
    prune_links,
)
from confnet.synth import SyntheticSpec, generate_corpus

log = logging.getLogger("confnet")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    lmscale: float | None = None  # None: lattice header, else 12
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    metric: str = "default"
    max_candidates: int | None = None
    seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        if self.lmscale is not None and not self.lmscale > 0:
            raise InputError("--lambda must be positive")
        if not 0.0 <= self.prune_threshold <= 1.0:
            raise InputError("--prune-threshold must lie in [0, 1]")
        try:
            self.metric = canonical_metric(self.metric)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if self.max_candidates is not None and self.max_candidates < 1:
            raise InputError("--max-candidates must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise InputError("--seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise InputError("--jobs must be >= 1")

    def effective_lmscale(self, lat: Lattice) -> float:
        if self.lmscale is not None:
            return self.lmscale
        return lat.lm_weight_hint or DEFAULT_LMSCALE

    def echo(self) -> dict:
        # parallelism is left out so the sidecar is identical for any --jobs
        d = asdict(self)
        d.pop("jobs")
        d["lambda"] = d.pop("lmscale")
        return d


_CONFIG_KEYS = {"lambda": "lmscale", "prune_threshold": "prune_threshold", "metric": "metric",
                "max_candidates": "max_candidates", "seed": "seed", "jobs": "jobs"}


def load_config(args: argparse.Namespace) -> RunConfig:
    """Flags override the config file, which overrides built-in defaults."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        for key, value in data.items():
            if key not in _CONFIG_KEYS:
                raise InputError(f"unknown config key {key!r}")
            setattr(cfg, _CONFIG_KEYS[key], value)
    for key, attr in _CONFIG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# helpers


def pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs`` > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def read_transcripts(path: str | Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] in out:
            raise InputError(f"{path}:{lineno}: duplicate utterance id {parts[0]}")
        out[parts[0]] = parts[1:]
    return out


def format_transcripts(hyps: dict[str, Sequence[str]]) -> str:
    return "".join(" ".join([utt, *hyps[utt]]) + "\n" for utt in sorted(hyps))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return "" if v is None else str(v)


def load_lexicon(path: str | None, allow_missing: bool) -> PronLexicon | None:
    if path is None:
        return PronLexicon(allow_missing=True) if allow_missing else None
    try:
        return PronLexicon.from_file(path, allow_missing)
    except OSError as exc:
        raise InputError(f"cannot read lexicon {path}: {exc}") from None


def out_dir(args) -> Path | None:
    if not args.out_dir:
        return None
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_sidecar(d: Path | None, command: str, cfg: RunConfig, extra: dict | None = None) -> None:
    if d is None:
        return
    data = {"command": command, **cfg.echo(), **(extra or {})}
    (d / "run_config.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_lattice(path: str) -> Lattice:
    return parse_lattice(Path(path).read_text(encoding="utf-8"), path)


# ---------------------------------------------------------------------------
# per-utterance workers (top level so they pickle)


def _consensus_worker(task):
    path, lex, cfg = task
    try:
        lat = _read_lattice(path)
        lat = compute_link_posteriors(lat, cfg.effective_lmscale(lat), lex)
        pruned = prune_links(lat, cfg.prune_threshold)
        cn, _ = align_lattice(pruned, lex, cfg.metric)
        words, _ = consensus_hypothesis(cn)
        if cfg.max_candidates is not None:
            cn = prune_confusion_network(cn, cfg.max_candidates)
        return path, lat.utterance_id, (words, cn.format(), lat.fallback_words), None
    except InvariantError as exc:
        return path, None, None, ("internal", str(exc))
    except (LatticeFormatError, OSError, KeyError, ValueError) as exc:
        return path, None, None, ("input", str(exc))


def _report(results) -> int:
    status = EXIT_OK
    for path, _, _, err in results:
        if err is not None:
            kind, msg = err
            print(f"error: {path}: {msg}", file=sys.stderr)
            status = max(status, EXIT_INTERNAL if kind == "internal" else EXIT_INPUT)
    return status


def _check_unique(results) -> None:
    seen = {}
    for path, utt, _, err in results:
        if err is None:
            if utt in seen:
                raise InputError(f"utterance id {utt} appears in both {seen[utt]} and {path}")
            seen[utt] = path


# ---------------------------------------------------------------------------
# commands


def cmd_consensus(args) -> int:
    cfg = load_config(args)
    lex = load_lexicon(args.lexicon, args.allow_missing_words)
    results = pmap(_consensus_worker, [(p, lex, cfg) for p in args.lattices], cfg.jobs)
    _check_unique(results)
    status = _report(results)
    ok = {utt: r for _, utt, r, err in results if err is None}
    hyps = {utt: r[0] for utt, r in ok.items()}
    for utt in sorted(ok):
        if ok[utt][2]:
            log.warning("%s: synthesized pronunciations for %s", utt, " ".join(ok[utt][2]))
    d = out_dir(args)
    if d is not None:
        cndir = d / "cn"
        cndir.mkdir(exist_ok=True)
        for utt in sorted(ok):
            (cndir / f"{utt}.cn").write_text(ok[utt][1], encoding="utf-8")
        (d / "consensus.txt").write_text(format_transcripts(hyps), encoding="utf-8")
        write_sidecar(d, "consensus", cfg)
    sys.stdout.write(format_transcripts(hyps))
    return status


def _center_worker(task):
    path, cfg = task
    try:
        nb = NBestList.from_file(path)
        nb = nbest_posteriors(nb, cfg.lmscale or DEFAULT_LMSCALE)
        idx, words, err = center_hypothesis(nb)
        return path, nb.utterance_id, (idx, words, err), None
    except (LatticeFormatError, OSError, ValueError) as exc:
        return path, None, None, ("input", str(exc))


def cmd_nbest_center(args) -> int:
    cfg = load_config(args)
    results = pmap(_center_worker, [(p, cfg) for p in args.nbest], cfg.jobs)
    _check_unique(results)
    status = _report(results)
    hyps = {utt: r[1] for _, utt, r, err in results if err is None}
    d = out_dir(args)
    if d is not None:
        (d / "center.txt").write_text(format_transcripts(hyps), encoding="utf-8")
        rows = sorted((utt, r[0], r[2]) for _, utt, r, err in results if err is None)
        (d / "center.csv").write_text(csv_text(["utterance", "index", "expected_word_error"], rows),
                                      encoding="utf-8")
        write_sidecar(d, "nbest-center", cfg)
    sys.stdout.write(format_transcripts(hyps))
    return status


def score_rows(hyps: dict[str, list[str]], refs: dict[str, list[str]]):
    if set(hyps) != set(refs):
        missing = sorted(set(refs) - set(hyps))
        extra = sorted(set(hyps) - set(refs))
        raise InputError(f"utterance ids differ: missing from hypotheses {missing}, "
                         f"unknown to reference {extra}")
    rows = []
    tot = [0, 0, 0, 0, 0]
    for utt in sorted(refs):
        e = word_error(hyps[utt], refs[utt])
        n = len(refs[utt])
        rows.append((utt, n, e.errors, e.subs, e.dels, e.ins, 100.0 * e.errors / n if n else 0.0))
        for i, v in enumerate((n, e.errors, e.subs, e.dels, e.ins)):
            tot[i] += v
    n = tot[0]
    rows.append(("TOTAL", *tot, 100.0 * tot[1] / n if n else 0.0))
    return rows


def cmd_score(args) -> int:
    cfg = load_config(args)
    rows = score_rows(read_transcripts(args.hyp), read_transcripts(args.ref))
    text = csv_text(["utterance", "ref_words", "errors", "subs", "dels", "ins", "wer_pct"], rows)
    d = out_dir(args)
    if d is not None:
        (d / "score.csv").write_text(text, encoding="utf-8")
        write_sidecar(d, "score", cfg)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args)
    data = {}
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read spec {args.spec}: {exc}") from None
    if args.utterances is not None:
        data["utterance_count"] = args.utterances
    try:
        spec = SyntheticSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    d = out_dir(args)
    if d is None:
        raise InputError("generate needs --out-dir")
    corpus = generate_corpus(spec, cfg.seed)
    latdir = d / "lattices"
    latdir.mkdir(exist_ok=True)
    for lat in corpus.lattices:
        (latdir / f"{lat.utterance_id}.lat").write_text(format_lattice(lat), encoding="utf-8")
    (d / "ref.txt").write_text(format_transcripts(corpus.references), encoding="utf-8")
    (d / "lexicon.txt").write_text(corpus.lexicon.format(), encoding="utf-8")
    (d / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    write_sidecar(d, "generate", cfg)
    print(f"wrote {len(corpus.lattices)} lattices")
    return EXIT_OK


def _sweep_worker(task):
    """All operating points for one lattice; returns per-point raw counts."""
    path, lex, cfg, ref, thresholds, beams, cn_thresholds = task
    try:
        lat = _read_lattice(path)
        lat = compute_link_posteriors(lat, cfg.effective_lmscale(lat), lex)
        n = len(ref)
        points = []
        map_err = word_error(map_hypothesis(lat), ref).errors
        base_oracle = oracle_wer(lat, ref)[0]
        points.append(("map", None, lat.num_links, lat.num_nodes, map_err, base_oracle, None))
        for t in thresholds:
            pruned = prune_links(lat, t)
            cn, _ = align_lattice(pruned, lex, cfg.metric)
            words, _ = consensus_hypothesis(cn)
            points.append(("consensus", t, pruned.num_links, pruned.num_nodes,
                           word_error(words, ref).errors, cn_accuracy(cn, ref)[0], words))
        for b in beams:
            pruned = likelihood_prune_lattice(lat, b)
            points.append(("likelihood", b, pruned.num_links, pruned.num_nodes,
                           word_error(map_hypothesis(pruned), ref).errors,
                           oracle_wer(pruned, ref)[0], None))
        if cn_thresholds:
            base = prune_links(lat, cfg.prune_threshold)
            cn, _ = align_lattice(base, lex, cfg.metric)
            for t in cn_thresholds:
                small = consensus_prune_lattice(base, prune_confusion_network(cn, None, t))
                points.append(("consensus-prune", t, small.num_links, small.num_nodes,
                               word_error(map_hypothesis(small), ref).errors,
                               oracle_wer(small, ref)[0], None))
        return path, lat.utterance_id, (lat.num_links, n, points), None
    except InvariantError as exc:
        return path, None, None, ("internal", str(exc))
    except (LatticeFormatError, OSError, KeyError, ValueError) as exc:
        return path, None, None, ("input", str(exc))


SWEEP_HEADER = ["method", "param", "retained_link_pct", "wer", "oracle_wer",
                "node_density", "link_density"]


def sweep_rows(results) -> tuple[list, dict]:
    """Aggregate per-lattice points into one CSV row per (method, param)."""
    agg: dict[tuple, list] = {}
    transcripts: dict[float, dict[str, list[str]]] = {}
    total_links = total_words = 0
    for _, utt, (n_links, n_words, points), _ in results:
        total_links += n_links
        total_words += n_words
        for method, param, links, nodes, err, orc, words in points:
            a = agg.setdefault((method, param), [0, 0, 0, 0])
            a[0] += links
            a[1] += nodes
            a[2] += err
            a[3] += orc
            if words is not None:
                transcripts.setdefault(param, {})[utt] = words
    order = {"map": 0, "consensus": 1, "likelihood": 2, "consensus-prune": 3}
    rows = []
    for (method, param), (links, nodes, err, orc) in sorted(
            agg.items(), key=lambda kv: (order[kv[0][0]], -1 if kv[0][1] is None else kv[0][1])):
        w = max(total_words, 1)
        rows.append((method, "" if param is None else repr(param),
                     100.0 * links / max(total_links, 1), 100.0 * err / w, 100.0 * orc / w,
                     nodes / w, links / w))
    return rows, transcripts


def _float_list(text: str | None) -> list[float]:
    if not text:
        return []
    try:
        return sorted({float(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise InputError(f"bad number list {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    lex = load_lexicon(args.lexicon, args.allow_missing_words)
    refs = read_transcripts(args.ref)
    thresholds = _float_list(args.thresholds)
    beams = _float_list(args.beams)
    cn_thresholds = _float_list(args.cn_thresholds)
    for t in thresholds + cn_thresholds:
        if not 0 <= t <= 1:
            raise InputError("thresholds must lie in [0, 1]")
    lats = []
    for p in args.lattices:
        try:
            lats.append((p, _read_lattice(p).utterance_id))
        except (LatticeFormatError, OSError) as exc:
            raise InputError(f"{p}: {exc}") from None
    for p, utt in lats:
        if utt not in refs:
            raise InputError(f"{p}: no reference for utterance {utt}")
    tasks = [(p, lex, cfg, refs[utt], thresholds, beams, cn_thresholds) for p, utt in lats]
    results = pmap(_sweep_worker, tasks, cfg.jobs)
    _check_unique(results)
    status = _report(results)
    if status != EXIT_OK:
        return status
    rows, transcripts = sweep_rows(results)
    text = csv_text(SWEEP_HEADER, rows)
    d = out_dir(args)
    if d is not None:
        (d / "sweep.csv").write_text(text, encoding="utf-8")
        for t, hyps in sorted(transcripts.items()):
            (d / f"consensus_{t!r}.txt").write_text(format_transcripts(hyps), encoding="utf-8")
        write_sidecar(d, "sweep", cfg, {"thresholds": thresholds, "beams": beams,
                                        "cn_thresholds": cn_thresholds})
    sys.stdout.write(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = load_config(args)
    refs = read_transcripts(args.ref)
    total = SlotStatistics()
    for p in args.cns:
        try:
            cn = ConfusionNetwork.from_file(p)
        except (LatticeFormatError, OSError) as exc:
            raise InputError(f"{p}: {exc}") from None
        if cn.utterance_id not in refs:
            raise InputError(f"{p}: no reference for utterance {cn.utterance_id}")
        total.update(correct_rank_statistics(cn, refs[cn.utterance_id]))
    ranks = csv_text(["rank", "count"], sorted(total.rank_histogram.items()))
    summary = csv_text(["metric", "value"], total.summary_rows())
    d = out_dir(args)
    if d is not None:
        (d / "ranks.csv").write_text(ranks, encoding="utf-8")
        (d / "summary.csv").write_text(summary, encoding="utf-8")
        write_sidecar(d, "stats", cfg)
    sys.stdout.write(ranks + "\n" + summary)
    return EXIT_OK


def path_count_row(path: str) -> tuple[str, str, int]:
    text = Path(path).read_text(encoding="utf-8")
    if any(line.startswith("slot ") for line in text.splitlines()):
        cn = ConfusionNetwork.parse(text, path)
        return cn.utterance_id, "cn", cn.num_paths()
    lat = parse_lattice(text, path)
    return lat.utterance_id, "lattice", count_paths(lat)


def log10_int(n: int) -> float:
    if n <= 0:
        return -math.inf
    digits = len(str(n))
    if digits < 300:
        return math.log10(n)
    # shift to avoid float overflow
    return math.log10(n // 10 ** (digits - 20)) + digits - 20


def cmd_paths(args) -> int:
    load_config(args)
    rows = []
    for p in args.files:
        try:
            utt, kind, n = path_count_row(p)
        except (LatticeFormatError, OSError) as exc:
            raise InputError(f"{p}: {exc}") from None
        rows.append((p, utt, kind, str(n), f"{log10_int(n):.6f}"))
    text = csv_text(["file", "utterance", "kind", "paths", "log10_paths"], rows)
    d = out_dir(args)
    if d is not None:
        (d / "paths.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _prune_worker(task):
    path, lex, cfg, method, beam, cn_threshold = task
    try:
        lat = _read_lattice(path)
        lat = compute_link_posteriors(lat, cfg.effective_lmscale(lat), lex)
        if method == "posterior":
            out = prune_links(lat, cfg.prune_threshold)
        elif method == "likelihood":
            out = likelihood_prune_lattice(lat, beam)
        else:
            base = prune_links(lat, cfg.prune_threshold)
            cn, _ = align_lattice(base, lex, cfg.metric)
            out = consensus_prune_lattice(base, prune_confusion_network(cn, cfg.max_candidates,
                                                                        cn_threshold))
        return path, lat.utterance_id, (format_lattice(out), lat.num_links, out.num_links), None
    except InvariantError as exc:
        return path, None, None, ("internal", str(exc))
    except (LatticeFormatError, OSError, KeyError, ValueError) as exc:
        return path, None, None, ("input", str(exc))


def cmd_prune_lattice(args) -> int:
    cfg = load_config(args)
    d = out_dir(args)
    if d is None:
        raise InputError("prune-lattice needs --out-dir")
    lex = load_lexicon(args.lexicon, args.allow_missing_words)
    tasks = [(p, lex, cfg, args.method, args.beam, args.cn_threshold) for p in args.lattices]
    results = pmap(_prune_worker, tasks, cfg.jobs)
    _check_unique(results)
    status = _report(results)
    rows = []
    for path, utt, r, err in sorted(results, key=lambda x: x[1] or ""):
        if err is None:
            (d / f"{utt}.lat").write_text(r[0], encoding="utf-8")
            rows.append((utt, r[1], r[2]))
    write_sidecar(d, "prune-lattice", cfg, {"method": args.method, "beam": args.beam,
                                            "cn_threshold": args.cn_threshold})
    sys.stdout.write(csv_text(["utterance", "links_before", "links_after"], rows))
    return status


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confnet", description="Confusion networks and consensus decoding for word lattices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, lattice=True):
        p.add_argument("--config", help="JSON file with defaults for the flags below")
        p.add_argument("--lambda", dest="lmscale", type=float,
                       help="language model weight; acoustic log scores are divided by it")
        p.add_argument("--prune-threshold", type=float, help="link posterior pruning threshold")
        p.add_argument("--metric", choices=METRICS + ("phone-count-time",))
        p.add_argument("--max-candidates", type=int, help="max tokens kept per confusion slot")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--out-dir")
        if lattice:
            p.add_argument("--lexicon", help="pronunciation lexicon (WORD ph1 ph2 ...)")
            p.add_argument("--allow-missing-words", action="store_true",
                           help="spell out pronunciations of words missing from the lexicon")

    p = sub.add_parser("consensus", help="consensus hypotheses and confusion networks")
    p.add_argument("lattices", nargs="+")
    common(p)
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("nbest-center", help="center hypothesis of N-best lists")
    p.add_argument("nbest", nargs="+")
    common(p, lattice=False)
    p.set_defaults(func=cmd_nbest_center)

    p = sub.add_parser("score", help="word error rate of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    common(p, lattice=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("generate", help="seeded synthetic lattice corpus")
    p.add_argument("--spec", help="JSON synthetic corpus spec")
    p.add_argument("--utterances", type=int)
    common(p, lattice=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="WER, oracle WER and densities across pruning levels")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--ref", required=True)
    p.add_argument("--thresholds", default="0,0.0001,0.001,0.01,0.1",
                   help="comma-separated link posterior thresholds")
    p.add_argument("--beams", default="", help="comma-separated likelihood beams")
    p.add_argument("--cn-thresholds", default="",
                   help="comma-separated slot posterior thresholds for consensus-based pruning")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="rank statistics of the correct word in confusion networks")
    p.add_argument("cns", nargs="+")
    p.add_argument("--ref", required=True)
    common(p, lattice=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("paths", help="exact path counts of lattices or confusion networks")
    p.add_argument("files", nargs="+")
    common(p, lattice=False)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("prune-lattice", help="posterior, likelihood or consensus-based pruning")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--method", choices=("posterior", "likelihood", "consensus"), default="posterior")
    p.add_argument("--beam", type=float, default=10.0)
    p.add_argument("--cn-threshold", type=float, default=0.1)
    common(p)
    p.set_defaults(func=cmd_prune_lattice)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
