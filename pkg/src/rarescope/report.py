"""Serialization of pipeline results: report JSON, rank and subset CSVs."""

from __future__ import annotations

import csv
import io

from . import __version__
from .sourcemap import SourceLocation
from .stats import RankEntry, RareBucketSummary, RareRecord, SubsetPoint

RANK_COLUMNS = ("rank", "token", "count")
SUBSET_COLUMNS = ("subset", "subset_size", "rare_fraction", "rank", "token", "count")


def version_header() -> dict:
    return {"tool": "rarescope", "version": __version__}


def location_to_dict(loc: SourceLocation | None) -> dict | None:
    if loc is None:
        return None
    d = {"file": loc.file, "line": loc.line, "function": loc.function, "confidence": loc.confidence}
    if loc.inline_chain:
        d["inline_chain"] = [
            {"function": f.function, "call_file": f.call_file, "call_line": f.call_line} for f in loc.inline_chain
        ]
    if loc.excerpt is not None:
        d["excerpt"] = loc.excerpt
    return d


def record_to_dict(rec: RareRecord) -> dict:
    d = {
        "token": rec.token,
        "count": rec.count,
        "occurrences": [
            {"binary_id": o.binary_id, "function": o.function_name, "address": f"{o.address:#x}"}
            for o in rec.occurrences
        ],
    }
    if rec.instruction is not None:
        d["mnemonic"] = rec.instruction.mnemonic
        d["operands"] = list(rec.instruction.operand_tokens)
    if rec.locations:
        d["locations"] = [location_to_dict(loc) for loc in rec.locations]
    if rec.category is not None:
        d["category"] = rec.category
    if rec.evidence is not None:
        d["classification"] = rec.evidence.to_dict()
    return d


def build_report(summary: dict, buckets: RareBucketSummary, records, fingerprints=None) -> dict:
    """Assemble the report document.

    Only ``version`` varies between tool releases; every other section is a
    pure function of the corpus and settings.
    """
    report = {
        "summary": summary,
        "buckets": buckets.to_dict(),
        "rare": [record_to_dict(r) for r in records],
        "version": version_header(),
    }
    if fingerprints is not None:
        report["fingerprints"] = [fp.to_dict() for fp in fingerprints]
    return report


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def rank_csv(entries: list[RankEntry]) -> str:
    return _csv_text(RANK_COLUMNS, ((e.rank, e.token, e.count) for e in entries))


def subsets_csv(points: list[SubsetPoint]) -> str:
    rows = (
        (i, p.subset_size, f"{p.rare_fraction:.6f}", e.rank, e.token, e.count)
        for i, p in enumerate(points, 1)
        for e in p.ranks
    )
    return _csv_text(SUBSET_COLUMNS, rows)


def read_subsets_csv(text: str) -> list[dict]:
    """Group a subsets CSV back into ``{subset, subset_size, rare_fraction, counts}`` series."""
    series: dict[int, dict] = {}
    for row in csv.DictReader(io.StringIO(text)):
        idx = int(row["subset"])
        s = series.setdefault(idx, {
            "subset": idx,
            "subset_size": int(row["subset_size"]),
            "rare_fraction": float(row["rare_fraction"]),
            "counts": [],
        })
        s["counts"].append(int(row["count"]))
    return [series[i] for i in sorted(series)]
