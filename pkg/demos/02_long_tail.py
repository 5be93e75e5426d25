"""
The long tail of a Zipfian instruction corpus
=============================================

A synthetic corpus of 120 "binaries" drawn from one Zipf law shows the
shape real corpora have: a few tokens cover most occurrences, while a large
share of the vocabulary appears fewer than five times.  Splitting the corpus
into ten growing subsets shows that the rare fraction barely moves.
"""

import sys
from pathlib import Path

import numpy as np

from rarescope.plot import rank_frequency_svg
from rarescope.stats import bucket_summary, head_coverage, merge_all, subset_series
from rarescope.synthetic import zipf_binaries

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out_dir.mkdir(exist_ok=True)

tables = zipf_binaries(120, 2000, exponent=1.6, seed=7)
corpus = merge_all(tables)
print(f"{corpus.total_occurrences:,} instructions, {corpus.unique_tokens:,} unique tokens")

# %%
# Head coverage: how much of the corpus the most common tokens explain.
for k in (10, 50, 144):
    print(f"top {k:>3} tokens cover {head_coverage(corpus, k):.1%}")

# %%
# Rare buckets.  Ratios are fractions of the unique-token count.
summary = bucket_summary(corpus, threshold=5)
for f, b in summary.buckets.items():
    print(f"seen {f}x: {b.count_of_tokens:>5} tokens  ratio {b.ratio:.3f}")

# %%
# Ten cumulative subsets (12, 24, ..., 120 binaries).
points = subset_series(tables, k=10)
fractions = np.array([p.rare_fraction for p in points])
print("rare fraction per subset:", np.round(fractions, 3))
print(f"max deviation from the full corpus: {np.abs(fractions - fractions[-1]).max():.3f}")

series = [
    {"subset": i, "subset_size": p.subset_size, "rare_fraction": p.rare_fraction, "counts": [e.count for e in p.ranks]}
    for i, p in enumerate(points, 1)
]
svg_path = out_dir / "rank_frequency.svg"
svg_path.write_text(rank_frequency_svg(series))
print("wrote", svg_path)
