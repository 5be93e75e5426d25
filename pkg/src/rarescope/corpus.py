"""Corpus manifests, the scan pipeline and the on-disk corpus database.

The database is one JSON document (gzip-compressed when the file name ends
in ``.gz``).  It keeps per-binary occurrence lists so every downstream
statistic (merged table, subsets, fingerprints) can be rebuilt from it
without touching the binaries again.
"""

from __future__ import annotations

import gzip
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from . import __version__
from .decode import BinaryMeta, load_binary
from .errors import ManifestError, RarescopeError
from .normalize import NormalizationConfig, NormalizedInstruction, normalize_instruction
from .stats import DEFAULT_THRESHOLD, FrequencyTable, Occurrence, count, merge_all

log = logging.getLogger(__name__)

DB_FORMAT = "rarescope-corpus"
DB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    binary_id: str
    compiler: str | None = None
    opt_level: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    normalization: NormalizationConfig = NormalizationConfig()
    threshold: int = DEFAULT_THRESHOLD

    def __post_init__(self):
        ids = [e.binary_id for e in self.entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ManifestError(f"duplicate binary_id(s): {', '.join(dupes)}")
        if self.threshold < 1:
            raise ManifestError("threshold must be >= 1")


def parse_manifest(data, base_dir=".", config: dict | None = None) -> CorpusManifest:
    """Build a manifest from parsed JSON.

    ``data`` is either an array of entries or an object with ``entries`` and
    optional ``normalization`` / ``threshold`` keys.  ``config`` (same keys)
    overrides the manifest's own settings.  Relative paths resolve against
    ``base_dir``.
    """
    if isinstance(data, list):
        data = {"entries": data}
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise ManifestError("manifest must be a JSON array of entries or an object with 'entries'")
    settings = {k: data[k] for k in ("normalization", "threshold") if k in data}
    settings.update({k: v for k, v in (config or {}).items() if k in ("normalization", "threshold")})
    entries = []
    for i, raw in enumerate(data["entries"]):
        if not isinstance(raw, dict) or "path" not in raw:
            raise ManifestError(f"entry {i} needs a 'path'")
        path = Path(raw["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        entries.append(ManifestEntry(
            path=str(path),
            binary_id=str(raw.get("binary_id") or Path(raw["path"]).name),
            compiler=raw.get("compiler"),
            opt_level=raw.get("opt_level"),
        ))
    try:
        norm = NormalizationConfig.from_dict(settings.get("normalization"))
    except (TypeError, ValueError) as exc:
        raise ManifestError(str(exc)) from None
    return CorpusManifest(tuple(entries), norm, int(settings.get("threshold", DEFAULT_THRESHOLD)))


def load_manifest(path, config_path=None) -> CorpusManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        config = json.loads(Path(config_path).read_text(encoding="utf-8")) if config_path else None
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(str(exc)) from None
    return parse_manifest(data, path.parent, config)


@dataclass
class BinaryRecord:
    meta: BinaryMeta
    functions: int
    instructions: int
    diagnostics: tuple[str, ...] = ()


@dataclass
class Corpus:
    """Scanned corpus: per-binary tables in manifest order plus settings."""

    binaries: list[BinaryRecord]
    tables: dict[str, FrequencyTable]
    normalization: NormalizationConfig = NormalizationConfig()
    threshold: int = DEFAULT_THRESHOLD
    failures: list[dict] = field(default_factory=list)

    @cached_property
    def table(self) -> FrequencyTable:
        return merge_all(self.tables[b.meta.binary_id] for b in self.binaries)

    def ordered_tables(self) -> list[FrequencyTable]:
        return [self.tables[b.meta.binary_id] for b in self.binaries]

    @property
    def compilers(self) -> dict[str, str]:
        return {b.meta.binary_id: b.meta.compiler for b in self.binaries}

    def binary(self, binary_id: str) -> BinaryRecord:
        for b in self.binaries:
            if b.meta.binary_id == binary_id:
                return b
        raise KeyError(binary_id)

    def summary(self) -> dict:
        return {
            "binaries": len(self.binaries),
            "functions": sum(b.functions for b in self.binaries),
            "total_instructions": self.table.total_occurrences,
            "unique_tokens": self.table.unique_tokens,
        }

    def headline(self) -> str:
        s = self.summary()
        return (
            f"{s['binaries']} binaries, which contains {s['functions']:,} functions, "
            f"{s['total_instructions']:,} instructions, and {s['unique_tokens']:,} unique normalized instructions"
        )


def analyze_binary(entry: ManifestEntry, cfg: NormalizationConfig) -> tuple[BinaryRecord, FrequencyTable]:
    """Decode, normalize and count one binary."""
    hints = {"binary_id": entry.binary_id, "compiler": entry.compiler, "opt_level": entry.opt_level}
    meta, functions = load_binary(entry.path, hints)
    stream = []
    seen = set()
    for fn in functions:
        for ins in fn.instructions:
            if ins.address in seen:
                continue
            seen.add(ins.address)
            stream.append((normalize_instruction(ins, cfg), Occurrence(meta.binary_id, fn.name, ins.address)))
    diagnostics = tuple(d for fn in functions for d in fn.diagnostics)
    return BinaryRecord(meta, len(functions), len(stream), diagnostics), count(stream)


def _analyze_safe(args):
    entry, cfg = args
    try:
        return analyze_binary(entry, cfg), None
    except (OSError, RarescopeError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def scan(manifest: CorpusManifest, jobs: int = 1) -> Corpus:
    """Analyze every manifest entry; per-binary failures are collected, not raised."""
    work = [(e, manifest.normalization) for e in manifest.entries]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_safe, work))
    else:
        results = [_analyze_safe(w) for w in work]
    binaries, tables, failures = [], {}, []
    for entry, (ok, err) in zip(manifest.entries, results):
        if err is not None:
            log.warning("%s: %s", entry.path, err)
            failures.append({"binary_id": entry.binary_id, "path": entry.path, "error": err})
            continue
        record, table = ok
        binaries.append(record)
        tables[record.meta.binary_id] = table
    return Corpus(binaries, tables, manifest.normalization, manifest.threshold, failures)


# -- persistence ---------------------------------------------------------


def corpus_to_dict(corpus: Corpus) -> dict:
    vocabulary = {}
    per_binary = {}
    for b in corpus.binaries:
        bid = b.meta.binary_id
        table = corpus.tables[bid]
        fn_names = sorted({o.function_name for occ in table.occurrences.values() for o in occ})
        fn_index = {n: i for i, n in enumerate(fn_names)}
        per_binary[bid] = {
            "functions": fn_names,
            "tokens": {
                tok: [[fn_index[o.function_name], o.address] for o in sorted(occ, key=lambda o: o.address)]
                for tok, occ in sorted(table.occurrences.items())
            },
        }
        for tok, ins in table.vocabulary.items():
            vocabulary[tok] = [ins.mnemonic, list(ins.operand_tokens)]
    return {
        "format": DB_FORMAT,
        "version": {"tool": __version__, "format": DB_FORMAT_VERSION},
        "config": {"normalization": corpus.normalization.to_dict(), "threshold": corpus.threshold},
        "binaries": [
            {
                "binary_id": b.meta.binary_id,
                "path": b.meta.path,
                "compiler": b.meta.compiler,
                "opt_level": b.meta.opt_level,
                "has_debug_info": b.meta.has_debug_info,
                "arch": b.meta.arch,
                "functions": b.functions,
                "instructions": b.instructions,
                "diagnostics": list(b.diagnostics),
            }
            for b in corpus.binaries
        ],
        "failures": corpus.failures,
        "vocabulary": dict(sorted(vocabulary.items())),
        "occurrences": per_binary,
    }


def corpus_from_dict(data: dict) -> Corpus:
    if data.get("format") != DB_FORMAT:
        raise ManifestError("not a corpus database")
    vocab = {tok: NormalizedInstruction.build(m, ops) for tok, (m, ops) in data["vocabulary"].items()}
    binaries, tables = [], {}
    for b in data["binaries"]:
        meta = BinaryMeta(b["binary_id"], b["path"], b["compiler"], b["opt_level"], b["has_debug_info"], b["arch"])
        binaries.append(BinaryRecord(meta, b["functions"], b["instructions"], tuple(b["diagnostics"])))
        occ_data = data["occurrences"][meta.binary_id]
        names = occ_data["functions"]
        occurrences = {
            tok: [Occurrence(meta.binary_id, names[fi], addr) for fi, addr in sites]
            for tok, sites in occ_data["tokens"].items()
        }
        counts = {tok: len(sites) for tok, sites in occurrences.items()}
        tables[meta.binary_id] = FrequencyTable(counts, occurrences, True, {t: vocab[t] for t in counts if t in vocab})
    cfg = data["config"]
    return Corpus(
        binaries,
        tables,
        NormalizationConfig.from_dict(cfg["normalization"]),
        cfg["threshold"],
        list(data.get("failures", [])),
    )


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    text = dumps_canonical(corpus_to_dict(corpus)).encode("utf-8")
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 keeps the compressed bytes reproducible
        with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
            gz.write(text)
    else:
        path.write_bytes(text)


def load_corpus(path) -> Corpus:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return corpus_from_dict(json.loads(raw.decode("utf-8")))
