"""Seeded synthetic corpora for tests, demos and acceptance checks."""

from __future__ import annotations

import numpy as np

from .decode import BinaryMeta
from .corpus import BinaryRecord, Corpus
from .stats import FrequencyTable, Occurrence, count


def zipf_tokens(n: int, exponent: float = 1.6, seed: int | np.random.Generator = 0) -> list[str]:
    """``n`` tokens drawn from an unbounded Zipf law (``tok<k>`` has rank ``k``)."""
    rng = np.random.default_rng(seed)
    return [f"tok{k}" for k in rng.zipf(exponent, size=n)]


def table_from_tokens(tokens, binary_id: str = "bin000", base_address: int = 0x1000) -> FrequencyTable:
    return count((t, Occurrence(binary_id, "f", base_address + i)) for i, t in enumerate(tokens))


def zipf_binaries(
    n_binaries: int = 120,
    instructions: int = 2000,
    exponent: float = 1.6,
    seed: int = 0,
) -> list[FrequencyTable]:
    """Per-binary tracked tables drawn from one fixed Zipfian generator."""
    rng = np.random.default_rng(seed)
    return [
        table_from_tokens(zipf_tokens(instructions, exponent, rng), f"bin{i:03d}")
        for i in range(n_binaries)
    ]


def bucketed_counts(buckets=None, unique: int = 11929, head_count: int = 5) -> dict[str, int]:
    """Token counts with exactly ``buckets[f]`` tokens at frequency ``f``.

    Remaining tokens (up to ``unique``) get ``head_count`` occurrences, which
    must be at or above the rare threshold.
    """
    buckets = buckets or {1: 1133, 2: 1276, 3: 707, 4: 580}
    counts = {}
    for f, n in sorted(buckets.items()):
        for i in range(n):
            counts[f"rare{f}_{i:05d}"] = f
    for i in range(unique - len(counts)):
        counts[f"head{i:05d}"] = head_count
    return counts


def corpus_from_tables(tables: dict[str, FrequencyTable], compilers: dict[str, str] | None = None) -> Corpus:
    compilers = compilers or {}
    for bid, t in tables.items():
        if not t.binary_ids() <= {bid}:
            raise ValueError(f"table for {bid!r} holds occurrences of {sorted(t.binary_ids() - {bid})}")
    binaries = [
        BinaryRecord(
            BinaryMeta(bid, f"synthetic/{bid}", compilers.get(bid, "unknown")),
            functions=len({o.function_name for occ in t.occurrences.values() for o in occ}),
            instructions=t.total_occurrences,
        )
        for bid, t in tables.items()
    ]
    return Corpus(binaries, dict(tables))


def corpus_from_counts(counts: dict[str, int], binary_id: str = "bin000") -> Corpus:
    tokens = [t for t, c in sorted(counts.items()) for _ in range(c)]
    return corpus_from_tables({binary_id: table_from_tokens(tokens, binary_id)})
