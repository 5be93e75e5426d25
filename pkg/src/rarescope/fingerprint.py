"""Per-binary birthmarks built from corpus-rare tokens."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BinaryNotInCorpus
from .stats import DEFAULT_THRESHOLD, FrequencyTable


@dataclass(frozen=True)
class BinaryFingerprint:
    binary_id: str
    tokens: frozenset
    threshold: int = DEFAULT_THRESHOLD
    weights: dict = field(default=None, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {"binary_id": self.binary_id, "tokens": sorted(self.tokens), "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict) -> BinaryFingerprint:
        return cls(d["binary_id"], frozenset(d["tokens"]), int(d["threshold"]))


def fingerprint(
    binary_id: str,
    binary_table: FrequencyTable,
    corpus_table: FrequencyTable,
    threshold: int = DEFAULT_THRESHOLD,
    weighted: bool = False,
) -> BinaryFingerprint:
    """Tokens rare across the corpus (count < ``threshold``) that ``binary_id`` contains.

    ``binary_table`` holds this binary's own counts; every one of them must
    already be part of ``corpus_table``.
    """
    for tok, c in binary_table.counts.items():
        if corpus_table.counts.get(tok, 0) < c:
            raise BinaryNotInCorpus(f"{binary_id}: token {tok!r} is not fully counted in the corpus table")
    tokens = frozenset(t for t in binary_table.counts if corpus_table.counts[t] < threshold)
    weights = {t: 1.0 / corpus_table.counts[t] for t in tokens} if weighted else None
    return BinaryFingerprint(binary_id, tokens, threshold, weights)


def similarity(f1: BinaryFingerprint, f2: BinaryFingerprint, weighted: bool = False) -> float:
    """Jaccard index of two fingerprints (1.0 when both are empty).

    With ``weighted`` set, each token counts ``1 / corpus_count`` (weighted
    Jaccard); both fingerprints must have been built with ``weighted=True``.
    """
    a, b = f1.tokens, f2.tokens
    union = a | b
    if not union:
        return 1.0
    if not weighted:
        return len(a & b) / len(union)
    w = {**(f2.weights or {}), **(f1.weights or {})}
    return sum(w[t] for t in a & b) / sum(w[t] for t in union)


def match(query: BinaryFingerprint, registry, top_k: int = 10, weighted: bool = False) -> list[tuple[str, float]]:
    """Registry entries ranked by similarity to ``query`` (ties by binary_id)."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    scored = [(fp.binary_id, similarity(query, fp, weighted)) for fp in registry]
    scored.sort(key=lambda s: (-s[1], s[0]))
    return scored[:top_k]


def save_registry(fingerprints, path) -> None:
    data = [fp.to_dict() for fp in sorted(fingerprints, key=lambda f: f.binary_id)]
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_registry(path) -> list[BinaryFingerprint]:
    return [BinaryFingerprint.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]
