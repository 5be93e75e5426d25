"""Frequency statistics over normalized tokens.

A :class:`FrequencyTable` is a mergeable multiset of tokens.  When
occurrence tracking is on, every counted element also remembers where it
came from (binary, function, address), which is what rare-instruction
extraction and source mapping need later.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import MixedTrackingMode, TrackingRequired
from .normalize import NormalizedInstruction

DEFAULT_THRESHOLD = 5


@dataclass(frozen=True, order=True)
class Occurrence:
    binary_id: str
    function_name: str
    address: int


class FrequencyTable:
    """Token counts plus (optionally) per-token occurrence lists.

    ``vocabulary`` maps a token to its :class:`NormalizedInstruction` when the
    counted stream carried one, so later stages can recover the mnemonic and
    operand tokens without re-splitting the joined string.
    """

    def __init__(self, counts=None, occurrences=None, tracking: bool = True, vocabulary=None):
        self.counts: dict[str, int] = {t: c for t, c in (counts or {}).items() if c > 0}
        self.tracking = tracking
        self.occurrences: dict[str, list[Occurrence]] = dict(occurrences or {}) if tracking else {}
        self.vocabulary: dict[str, NormalizedInstruction] = dict(vocabulary or {})
        if tracking:
            for t, c in self.counts.items():
                if len(self.occurrences.get(t, ())) != c:
                    raise ValueError(f"token {t!r}: {c} counted but {len(self.occurrences.get(t, ()))} occurrences")

    @property
    def total_occurrences(self) -> int:
        return sum(self.counts.values())

    @property
    def unique_tokens(self) -> int:
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, FrequencyTable):
            return NotImplemented
        return (
            self.counts == other.counts
            and self.tracking == other.tracking
            and {t: sorted(o) for t, o in self.occurrences.items()} == {t: sorted(o) for t, o in other.occurrences.items()}
        )

    def __repr__(self):
        return f"FrequencyTable(total={self.total_occurrences}, unique={self.unique_tokens}, tracking={self.tracking})"

    def binary_ids(self) -> set[str]:
        return {o.binary_id for occ in self.occurrences.values() for o in occ}


def count(stream: Iterable, track: bool = True) -> FrequencyTable:
    """Count a stream of ``(token, occurrence)`` pairs.

    ``token`` may be a plain string or a :class:`NormalizedInstruction`;
    ``occurrence`` is ignored (and may be ``None``) when ``track`` is false.
    """
    counts: Counter = Counter()
    occurrences: dict[str, list[Occurrence]] = {}
    vocab: dict[str, NormalizedInstruction] = {}
    for item, occ in stream:
        if isinstance(item, NormalizedInstruction):
            token = item.token
            vocab.setdefault(token, item)
        else:
            token = item
        counts[token] += 1
        if track:
            if occ is None:
                raise TrackingRequired(f"occurrence missing for token {token!r} in a tracked count")
            occurrences.setdefault(token, []).append(occ)
    return FrequencyTable(counts, occurrences, track, vocab)


def merge(t1: FrequencyTable, t2: FrequencyTable) -> FrequencyTable:
    if t1.tracking != t2.tracking:
        raise MixedTrackingMode("cannot merge a tracked table with an untracked one")
    counts = Counter(t1.counts)
    counts.update(t2.counts)
    occurrences = {}
    if t1.tracking:
        for t in counts:
            occurrences[t] = list(t1.occurrences.get(t, ())) + list(t2.occurrences.get(t, ()))
    vocab = dict(t1.vocabulary)
    for t, v in t2.vocabulary.items():
        vocab.setdefault(t, v)
    return FrequencyTable(counts, occurrences, t1.tracking, vocab)


def merge_all(tables: Iterable[FrequencyTable], tracking: bool = True) -> FrequencyTable:
    """Merge many tables at once; same result as folding :func:`merge`."""
    counts: Counter = Counter()
    occurrences: dict[str, list[Occurrence]] = {}
    vocab: dict[str, NormalizedInstruction] = {}
    for t in tables:
        if t.tracking != tracking:
            raise MixedTrackingMode("cannot merge a tracked table with an untracked one")
        counts.update(t.counts)
        for tok, occ in t.occurrences.items():
            occurrences.setdefault(tok, []).extend(occ)
        for tok, v in t.vocabulary.items():
            vocab.setdefault(tok, v)
    return FrequencyTable(counts, occurrences, tracking, vocab)


@dataclass(frozen=True)
class RankEntry:
    rank: int
    token: str
    count: int


def rank_distribution(t: FrequencyTable) -> list[RankEntry]:
    ordered = sorted(t.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [RankEntry(i, tok, c) for i, (tok, c) in enumerate(ordered, 1)]


def head_coverage(t: FrequencyTable, k: int) -> float:
    """Fraction of all occurrences covered by the ``k`` most frequent tokens."""
    if k < 0:
        raise ValueError("k must be >= 0")
    total = t.total_occurrences
    if total == 0:
        return 0.0
    top = sorted(t.counts.values(), reverse=True)[:k]
    return sum(top) / total


@dataclass
class RareRecord:
    token: str
    count: int
    occurrences: tuple[Occurrence, ...] = ()
    instruction: NormalizedInstruction | None = None
    locations: tuple = ()
    category: str | None = None
    evidence: object = None


@dataclass(frozen=True)
class BucketEntry:
    count_of_tokens: int
    ratio: float


@dataclass(frozen=True)
class RareBucketSummary:
    """Per-frequency bucket sizes below ``threshold``.

    ``ratio`` is a fraction of ``unique_tokens`` (not a percentage).
    """

    threshold: int
    unique_tokens: int
    buckets: dict[int, BucketEntry] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "unique_tokens": self.unique_tokens,
            "ratio_unit": "fraction_of_unique_tokens",
            "buckets": [
                {"frequency": f, "count_of_tokens": b.count_of_tokens, "ratio": b.ratio}
                for f, b in sorted(self.buckets.items())
            ],
        }


def bucket_summary(t: FrequencyTable, threshold: int = DEFAULT_THRESHOLD) -> RareBucketSummary:
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    sizes = Counter(c for c in t.counts.values() if c < threshold)
    unique = t.unique_tokens
    buckets = {
        f: BucketEntry(sizes.get(f, 0), sizes.get(f, 0) / unique if unique else 0.0) for f in range(1, threshold)
    }
    return RareBucketSummary(threshold, unique, buckets)


def rare(t: FrequencyTable, threshold: int = DEFAULT_THRESHOLD) -> tuple[list[RareRecord], RareBucketSummary]:
    """Every token seen fewer than ``threshold`` times, with its occurrences.

    Records come out ordered by (count, token).
    """
    if not t.tracking:
        raise TrackingRequired("rare extraction needs a table built with occurrence tracking")
    summary = bucket_summary(t, threshold)
    records = [
        RareRecord(tok, c, tuple(sorted(t.occurrences[tok])), t.vocabulary.get(tok))
        for tok, c in sorted(t.counts.items(), key=lambda kv: (kv[1], kv[0]))
        if c < threshold
    ]
    return records, summary


def rare_fraction(t: FrequencyTable, threshold: int = DEFAULT_THRESHOLD) -> float:
    unique = t.unique_tokens
    if unique == 0:
        return 0.0
    return sum(1 for c in t.counts.values() if c < threshold) / unique


@dataclass(frozen=True)
class SubsetPoint:
    subset_size: int
    ranks: tuple[RankEntry, ...]
    rare_fraction: float


def subset_bounds(n: int, k: int, disjoint: bool = False) -> list[tuple[int, int]]:
    """Index ranges of the ``k`` subsets of an ``n``-element corpus.

    Cumulative mode yields prefixes ``[0, ceil(n*i/k))``; disjoint mode yields
    the slices between consecutive prefix boundaries.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 1:
        raise ValueError("corpus must not be empty")
    ends = [math.ceil(n * i / k) for i in range(1, k + 1)]
    if not disjoint:
        return [(0, e) for e in ends]
    starts = [0] + ends[:-1]
    return list(zip(starts, ends))


def subset_series(
    corpus: Sequence[FrequencyTable],
    k: int = 10,
    threshold: int = DEFAULT_THRESHOLD,
    disjoint: bool = False,
) -> list[SubsetPoint]:
    """Rank distribution and rare fraction for ``k`` subsets of per-binary tables."""
    points = []
    untracked = [FrequencyTable(t.counts, tracking=False) for t in corpus]
    running: Counter = Counter()
    consumed = 0
    for lo, hi in subset_bounds(len(corpus), k, disjoint):
        if disjoint:
            table = merge_all(untracked[lo:hi], tracking=False)
        else:
            for t in untracked[consumed:hi]:
                running.update(t.counts)
            consumed = hi
            table = FrequencyTable(running, tracking=False)
        points.append(SubsetPoint(hi - lo, tuple(rank_distribution(table)), rare_fraction(table, threshold)))
    return points
