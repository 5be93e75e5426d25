"""
Normalizing x86-64 instructions
===============================

Registers collapse to width classes, small displacements stay literal and
large ones become ``disp``.  Opmask registers (``k0``..``k7``) survive as-is,
which is what makes AVX-512 mask instructions stand out in a corpus.
"""

from rarescope.decode import decode_bytes, parse_textual_disassembly
from rarescope.normalize import NormalizationConfig, normalize_instruction

# %%
# Decode raw bytes with the capstone-backed frontend.  These are
# ``kortestw k1, k0``, ``blsi ebp, ecx`` and ``adc rbp, qword ptr [rsp+0x120]``.
code = bytes.fromhex("c5f898c8" "c4e250f3d9" "4813ac2420010000")
for ins in decode_bytes(code, 0x401000):
    print(f"{ins.address:#x}  {normalize_instruction(ins).token}")

# %%
# The same pipeline accepts ``objdump -d -M intel`` text.
listing = """\
0000000000401000 <f>:
  401000:\tc5 fc 18 44 24 08    \tvbroadcastss ymm0,DWORD PTR [rsp+0x8]
  401006:\tc5 eb c2 4c 24 08 02 \tvcmplesd xmm1,xmm2,QWORD PTR [rsp+0x8]
  40100d:\tc3                   \tret
"""
(fn,) = parse_textual_disassembly(listing)
print([normalize_instruction(i).token for i in fn.instructions])

# %%
# The literal/``disp`` cutoff is configurable.  With a bound of 0 no
# displacement is kept literal.
strict = NormalizationConfig(disp_literal_bound=0)
print([normalize_instruction(i, strict).token for i in fn.instructions])
