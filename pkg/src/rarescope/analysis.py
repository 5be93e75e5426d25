"""End-to-end helpers that chain the stages over a scanned :class:`Corpus`."""

from __future__ import annotations

import logging
from dataclasses import replace

from .classify import CorpusContext, classify_all
from .corpus import Corpus
from .errors import NoDebugInfo
from .fingerprint import fingerprint
from .sourcemap import Addr2lineResolver, DwarfResolver, enrich
from .stats import rare

log = logging.getLogger(__name__)


def rare_records(corpus: Corpus, threshold: int | None = None, binary_id: str | None = None):
    threshold = threshold or corpus.threshold
    records, summary = rare(corpus.table, threshold)
    if binary_id is not None:
        corpus.binary(binary_id)
        kept = []
        for r in records:
            occ = tuple(o for o in r.occurrences if o.binary_id == binary_id)
            if occ:
                kept.append(replace(r, occurrences=occ))
        records = kept
    return records, summary


def resolvers_for(corpus: Corpus, kind: str = "dwarf", binary_ids=None) -> dict:
    """One resolver per binary; ``None`` for binaries without usable debug info."""
    out = {}
    for b in corpus.binaries:
        bid = b.meta.binary_id
        if binary_ids is not None and bid not in binary_ids:
            continue
        if not b.meta.has_debug_info:
            out[bid] = None
            continue
        try:
            if kind == "addr2line":
                out[bid] = Addr2lineResolver(b.meta.path, lenient=True)
            else:
                out[bid] = DwarfResolver(b.meta.path, lenient=True)
        except (NoDebugInfo, OSError) as exc:
            log.warning("%s: %s; locations will be unknown", bid, exc)
            out[bid] = None
    return out


def mapped_records(corpus: Corpus, threshold=None, binary_id=None, resolver="dwarf", source_root=None, excerpts=True):
    records, summary = rare_records(corpus, threshold, binary_id)
    ids = {o.binary_id for r in records for o in r.occurrences}
    resolvers = resolvers_for(corpus, resolver, ids)
    return enrich(records, resolvers, source_root, with_excerpts=excerpts), summary


def aggregate_names(resolvers: dict) -> frozenset:
    names = set()
    for r in resolvers.values():
        names |= set(getattr(r, "aggregate_names", ()))
    return frozenset(names)


def classified_records(corpus: Corpus, threshold=None, source_root=None, use_source=True):
    records, summary = rare_records(corpus, threshold)
    names = frozenset()
    if use_source:
        ids = {o.binary_id for r in records for o in r.occurrences}
        resolvers = resolvers_for(corpus, "dwarf", ids)
        records = enrich(records, resolvers, source_root)
        names = aggregate_names(resolvers)
    ctx = CorpusContext(corpus.table, corpus.compilers, aggregate_names=names)
    return classify_all(records, ctx), summary


def corpus_fingerprints(corpus: Corpus, threshold=None, weighted: bool = False):
    threshold = threshold or corpus.threshold
    table = corpus.table
    return [
        fingerprint(b.meta.binary_id, corpus.tables[b.meta.binary_id], table, threshold, weighted)
        for b in corpus.binaries
    ]
