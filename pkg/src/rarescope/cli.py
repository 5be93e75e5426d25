"""Command-line interface: ``rarescope <command> ...``.

Exit codes: 0 success (possibly with per-binary diagnostics), 1 usage or
configuration error, 2 total analysis failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import classified_records, corpus_fingerprints, mapped_records, rare_records
from .corpus import dumps_canonical, load_corpus, load_manifest, save_corpus, scan
from .errors import ManifestError, RarescopeError
from .fingerprint import match, save_registry, similarity
from .plot import rank_frequency_svg
from .report import build_report, rank_csv, read_subsets_csv, subsets_csv
from .stats import rank_distribution, subset_series

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


def _write(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load_db(path):
    try:
        return load_corpus(path)
    except (OSError, ValueError, KeyError, ManifestError) as exc:
        raise UsageError(f"cannot read corpus database {path}: {exc}") from None


def _bucket_table(summary) -> str:
    lines = ["Instruction freq.\tNumber\tRatio (fraction of unique tokens)"]
    for f, b in sorted(summary.buckets.items()):
        lines.append(f"{f}\t{b.count_of_tokens}\t{b.ratio:.3f}")
    return "\n".join(lines) + "\n"


def cmd_scan(args) -> int:
    try:
        manifest = load_manifest(args.manifest, args.config)
    except ManifestError as exc:
        raise UsageError(str(exc)) from None
    if not manifest.entries:
        raise UsageError("manifest has no entries")
    corpus = scan(manifest, jobs=args.jobs)
    for f in corpus.failures:
        print(f"warning: {f['binary_id']}: {f['error']}", file=sys.stderr)
    if not corpus.binaries:
        print("error: every binary failed to load", file=sys.stderr)
        return EXIT_FAILED
    save_corpus(corpus, args.db)
    if args.report:
        records, summary = rare_records(corpus)
        _write(dumps_canonical(build_report(corpus.summary(), summary, records)), args.report)
    print(corpus.headline())
    return EXIT_OK


def cmd_freq(args) -> int:
    corpus = _load_db(args.db)
    entries = rank_distribution(corpus.table)
    if args.top is not None:
        entries = entries[: args.top]
    _write(rank_csv(entries), args.csv)
    return EXIT_OK


def cmd_rare(args) -> int:
    corpus = _load_db(args.db)
    records, summary = rare_records(corpus, args.threshold)
    if args.json:
        _write(dumps_canonical(build_report(corpus.summary(), summary, records)), args.json)
    print(_bucket_table(summary), end="")
    return EXIT_OK


def cmd_map(args) -> int:
    corpus = _load_db(args.db)
    try:
        records, summary = mapped_records(corpus, args.threshold, args.binary, args.resolver, args.source_root)
    except KeyError:
        raise UsageError(f"unknown binary id {args.binary!r}") from None
    _write(dumps_canonical(build_report(corpus.summary(), summary, records)), args.json)
    return EXIT_OK


def cmd_classify(args) -> int:
    corpus = _load_db(args.db)
    records, summary = classified_records(corpus, args.threshold, args.source_root, not args.no_source)
    _write(dumps_canonical(build_report(corpus.summary(), summary, records)), args.json)
    return EXIT_OK


def cmd_subsets(args) -> int:
    corpus = _load_db(args.db)
    if not corpus.binaries:
        raise UsageError("corpus is empty")
    points = subset_series(corpus.ordered_tables(), args.k, args.threshold or corpus.threshold, args.disjoint)
    _write(subsets_csv(points), args.csv)
    return EXIT_OK


def cmd_fingerprint(args) -> int:
    corpus = _load_db(args.db)
    fps = {fp.binary_id: fp for fp in corpus_fingerprints(corpus, args.threshold, args.weighted)}
    if args.registry:
        save_registry(fps.values(), args.registry)

    def get(bid):
        if bid not in fps:
            raise UsageError(f"unknown binary id {bid!r}")
        return fps[bid]

    if args.compare:
        a, b = (get(x) for x in args.compare)
        out = {"pair": [a.binary_id, b.binary_id], "similarity": similarity(a, b, args.weighted)}
    elif args.match:
        q = get(args.match)
        ranked = match(q, [fp for bid, fp in fps.items() if bid != q.binary_id or args.include_self], args.top, args.weighted)
        out = {"query": q.binary_id, "matches": [{"binary_id": b, "score": s} for b, s in ranked]}
    elif args.binary:
        out = get(args.binary).to_dict()
    else:
        out = [fp.to_dict() for fp in sorted(fps.values(), key=lambda f: f.binary_id)]
    _write(dumps_canonical(out), "-")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        text = Path(args.csv).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None
    series = read_subsets_csv(text)
    if not series:
        raise UsageError(f"{args.csv} contains no series")
    _write(rank_frequency_svg(series), args.svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rarescope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rarescope {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="decode, normalize and count a corpus")
    s.add_argument("manifest")
    s.add_argument("--db", required=True, help="output corpus database (.json or .json.gz)")
    s.add_argument("--config", help="JSON file with 'normalization' and/or 'threshold'")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--report", help="also write the rare-instruction report JSON here")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("freq", help="rank-frequency table")
    s.add_argument("db")
    s.add_argument("--top", type=int)
    s.add_argument("--csv", help="write CSV here instead of stdout")
    s.set_defaults(func=cmd_freq)

    s = sub.add_parser("rare", help="rare records and per-frequency buckets")
    s.add_argument("db")
    s.add_argument("--threshold", type=int)
    s.add_argument("--json")
    s.set_defaults(func=cmd_rare)

    s = sub.add_parser("map", help="rare records with source locations")
    s.add_argument("db")
    s.add_argument("--binary")
    s.add_argument("--threshold", type=int)
    s.add_argument("--resolver", choices=("dwarf", "addr2line"), default="dwarf")
    s.add_argument("--source-root")
    s.add_argument("--json")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("classify", help="rare records with category labels and evidence")
    s.add_argument("db")
    s.add_argument("--threshold", type=int)
    s.add_argument("--source-root")
    s.add_argument("--no-source", action="store_true", help="skip source mapping")
    s.add_argument("--json")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("subsets", help="per-subset rank series and rare fractions")
    s.add_argument("db")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--threshold", type=int)
    s.add_argument("--disjoint", action="store_true")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_subsets)

    s = sub.add_parser("fingerprint", help="rare-token birthmarks")
    s.add_argument("db")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--binary")
    g.add_argument("--compare", nargs=2, metavar=("ID1", "ID2"))
    g.add_argument("--match")
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--include-self", action="store_true")
    s.add_argument("--threshold", type=int)
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--registry", help="write all fingerprints to this JSON registry")
    s.set_defaults(func=cmd_fingerprint)

    s = sub.add_parser("plot", help="log-scale rank-frequency SVG from a subsets CSV")
    s.add_argument("csv")
    s.add_argument("--svg", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RarescopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
