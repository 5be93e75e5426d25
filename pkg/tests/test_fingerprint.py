from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from rarescope.errors import BinaryNotInCorpus
from rarescope.fingerprint import BinaryFingerprint, fingerprint, load_registry, match, save_registry, similarity
from rarescope.stats import Occurrence, count, merge_all
from rarescope.synthetic import zipf_binaries

import oracles


def fp(bid, tokens):
    return BinaryFingerprint(bid, frozenset(tokens))


def tables_for(parts: dict[str, list[str]]):
    per = {b: count((t, Occurrence(b, "f", i)) for i, t in enumerate(toks)) for b, toks in parts.items()}
    return per, merge_all(per.values())


def test_examples():
    f = fp("a", "abc")
    assert similarity(f, f) == 1.0
    assert similarity(fp("a", "ab"), fp("b", "cd")) == 0.0
    assert similarity(fp("a", "abc"), fp("b", "bcd")) == 0.5
    assert similarity(fp("a", ""), fp("b", "")) == 1.0


def test_fingerprint_contents():
    per, corpus = tables_for({"A": ["x", "common"] * 1 + ["common"] * 5, "B": ["common"] * 5 + ["y"]})
    fa = fingerprint("A", per["A"], corpus)
    fb = fingerprint("B", per["B"], corpus)
    assert fa.tokens == {"x"} and fb.tokens == {"y"}
    assert all(corpus.counts[t] < 5 and per["A"].counts[t] >= 1 for t in fa.tokens)


def test_no_rare_tokens_gives_empty_fingerprint():
    per, corpus = tables_for({"A": ["a"] * 6})
    assert fingerprint("A", per["A"], corpus).tokens == frozenset()


def test_binary_not_in_corpus():
    per, corpus = tables_for({"A": ["a"]})
    other, _ = tables_for({"Z": ["q"]})
    with pytest.raises(BinaryNotInCorpus):
        fingerprint("Z", other["Z"], corpus)


def test_planted_token_only_in_its_binary():
    base = zipf_binaries(8, 200, seed=6)
    parts = {f"b{i}": [t for t, c in tb.counts.items() for _ in range(c)] for i, tb in enumerate(base)}
    parts["b3"].append("PLANTED")
    per, corpus = tables_for(parts)
    for bid, table in per.items():
        assert ("PLANTED" in fingerprint(bid, table, corpus).tokens) == (bid == "b3")


def test_weighted_similarity():
    per, corpus = tables_for({"A": ["x", "y", "y"], "B": ["y", "z"]})
    fa = fingerprint("A", per["A"], corpus, weighted=True)
    fb = fingerprint("B", per["B"], corpus, weighted=True)
    # weights: x=1, y=1/3, z=1 -> shared y only
    assert similarity(fa, fb, weighted=True) == pytest.approx((1 / 3) / (1 + 1 / 3 + 1))
    assert similarity(fa, fb, weighted=True) == similarity(fb, fa, weighted=True)


def test_registry_roundtrip(tmp_path):
    items = [fp("b", "xy"), fp("a", "z")]
    save_registry(items, tmp_path / "reg.json")
    assert sorted(load_registry(tmp_path / "reg.json"), key=lambda f: f.binary_id) == sorted(items, key=lambda f: f.binary_id)


def test_match_examples():
    q = fp("q", "abc")
    assert match(q, [fp("o", "xyz"), q])[0] == ("q", 1.0)
    assert match(q, []) == []
    with pytest.raises(ValueError):
        match(q, [q], top_k=0)


token_sets = st.frozensets(st.sampled_from("abcdefghijklmnop"), max_size=10)


@settings(max_examples=200, deadline=None)
@given(token_sets, token_sets)
def test_similarity_symmetric_and_bounded(a, b):
    s = similarity(fp("a", a), fp("b", b))
    assert s == similarity(fp("b", b), fp("a", a)) == oracles.jaccard(a, b)
    assert 0.0 <= s <= 1.0
    assert similarity(fp("a", a), fp("a2", a)) == 1.0
    if a and b and not (a & b):
        assert s == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**16))
def test_threshold_monotonicity(seed):
    tables = zipf_binaries(5, 100, seed=seed)
    corpus = merge_all(tables)
    for t in tables:
        bid = next(iter(t.binary_ids()))
        sets = [fingerprint(bid, t, corpus, th).tokens for th in range(1, 9)]
        assert all(x <= y for x, y in zip(sets, sets[1:]))


def test_order_independence():
    tables = zipf_binaries(6, 150, seed=12)
    a = merge_all(tables)
    b = merge_all(list(reversed(tables)))
    for t in tables:
        bid = next(iter(t.binary_ids()))
        assert fingerprint(bid, t, a) == fingerprint(bid, t, b)


def test_match_equals_exhaustive_sort():
    rng = random.Random(77)
    universe = [f"t{i}" for i in range(40)]
    registry = [fp(f"bin{i:02d}", rng.sample(universe, rng.randrange(0, 12))) for i in range(50)]
    for q in registry[:10]:
        brute = sorted(((f.binary_id, oracles.jaccard(q.tokens, f.tokens)) for f in registry), key=lambda x: (-x[1], x[0]))
        assert match(q, registry, top_k=50) == brute
        assert match(q, registry, top_k=7) == brute[:7]
