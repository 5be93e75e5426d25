"""
End to end on a desk-scale corpus
=================================

Compile three small C programs with gcc and clang, scan them, and walk the
rare instructions back to their source lines.  Needs ``gcc`` (``clang`` is
optional) on the PATH.
"""

import json
import shutil
import subprocess
import sys
from collections import Counter
from pathlib import Path

from rarescope.analysis import classified_records, corpus_fingerprints
from rarescope.corpus import parse_manifest, save_corpus, scan
from rarescope.fingerprint import match

here = Path(__file__).resolve().parent
sources = here.parent / "tests" / "data"
out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out_dir.mkdir(exist_ok=True)

if not shutil.which("gcc"):
    sys.exit("gcc not found; nothing to demo")

# %%
# Build the corpus.  clang gets ``-gdwarf-4`` so older addr2line builds can
# read its line tables too.
entries = []
for prog in ("shapes", "prefetch", "fpcmp"):
    for cc, flags in (("gcc", ["-O0", "-g"]), ("clang", ["-O2", "-gdwarf-4"])):
        if not shutil.which(cc):
            continue
        exe = out_dir / f"{prog}-{cc}"
        subprocess.run([cc, *flags, "-o", str(exe), str(sources / f"{prog}.c")], check=True)
        entries.append({"path": str(exe), "binary_id": exe.name, "compiler": cc})

corpus = scan(parse_manifest(entries))
print(corpus.headline())
save_corpus(corpus, out_dir / "desk.json.gz")

# %%
# Classify every rare token.  The prefetch hidden in an ``asm`` statement is
# the hand-written case; struct field offsets show up as member accesses.
records, _ = classified_records(corpus)
print(Counter(r.category for r in records))
for r in records:
    if r.category == "HandWrittenAssembly":
        loc = r.locations[0]
        print(f"{r.token}: {Path(loc.file).name}:{loc.line}  {loc.excerpt}")

# %%
# Rare-token fingerprints: which binary looks most like shapes-gcc?
fps = corpus_fingerprints(corpus)
query = next(f for f in fps if f.binary_id == "shapes-gcc")
print(json.dumps(match(query, fps, top_k=3)))
