"""Intel-syntax operand parsing and mnemonic canonicalization.

Both frontends (capstone via :func:`rarescope.decode.decode_bytes` and
``objdump -d -M intel`` text via
:func:`rarescope.decode.parse_textual_disassembly`) print instructions as
``mnemonic op1, op2, ...`` with slightly different spellings.  Everything
funnels through :func:`parse_instruction_text` so the two routes agree on
token identity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import UnknownRegister

SIZE_PREFIXES = {
    "byte": "byteptr",
    "word": "wordptr",
    "dword": "dwordptr",
    "fword": "fwordptr",
    "qword": "qwordptr",
    "tbyte": "tbyteptr",
    "xword": "tbyteptr",  # capstone's spelling of the 80-bit x87 operand
    "xmmword": "xmmwordptr",
    "oword": "xmmwordptr",
    "ymmword": "ymmwordptr",
    "zmmword": "zmmwordptr",
}
SIZE_SUFFIX = {"byteptr": "b", "wordptr": "w", "dwordptr": "d", "qwordptr": "q"}

OPERAND_KINDS = ("register", "immediate", "memory", "branch_target", "other")
_KIND_FIELDS = {
    "register": {"register_name"},
    "immediate": {"imm_value"},
    "branch_target": {"imm_value"},
    "memory": {"mem"},
    "other": {"text"},
}

# Prefix words that only affect encoding; dropped from the mnemonic.
ENCODING_PREFIXES = frozenset({
    "bnd", "notrack", "data16", "data32", "addr16", "addr32",
    "cs", "ds", "es", "ss", "fs", "gs",
    "{vex}", "{vex2}", "{vex3}", "{evex}", "{load}", "{store}", "{disp8}", "{disp32}",
})
# Prefix words that change behaviour; kept, joined to the mnemonic with '.'.
SEMANTIC_PREFIXES = frozenset({"lock", "rep", "repz", "repnz", "xacquire", "xrelease"})

STRING_OPS = ("movs", "stos", "lods", "scas", "cmps", "ins", "outs")
BRANCH_MNEMONICS = frozenset({
    "jmp", "call", "jrcxz", "jecxz", "loop", "loopz", "loopnz", "loope", "loopne", "xbegin",
})

_DECORATOR = re.compile(r"\{[^}]*\}")
_ANNOTATION = re.compile(r"<[^>]*>")
_NUMBER = re.compile(r"^-?(0x[0-9a-f]+|[0-9]+)$")
_BARE_HEX = re.compile(r"^[0-9a-f]+$")
_MEMORY = re.compile(
    r"^(?:(?P<size>[a-z]+)\s+ptr\s*)?(?:(?P<seg>[a-z]s):)?\s*(?:\[(?P<expr>[^\]]*)\]|(?P<abs>-?(?:0x)?[0-9a-f]+))$"
)


@dataclass(frozen=True)
class MemoryRef:
    size_prefix: str = "none"
    base: str | None = None
    index: str | None = None
    scale: int = 1
    displacement: int = 0
    segment: str | None = None


@dataclass(frozen=True)
class RawOperand:
    """One decoded operand; only the fields belonging to ``kind`` are set."""

    kind: str
    register_name: str | None = None
    imm_value: int | None = None
    mem: MemoryRef | None = None
    text: str | None = None

    def __post_init__(self):
        if self.kind not in OPERAND_KINDS:
            raise ValueError(f"unknown operand kind {self.kind!r}")
        populated = {
            name for name in ("register_name", "imm_value", "mem", "text") if getattr(self, name) is not None
        }
        if not populated <= _KIND_FIELDS[self.kind]:
            raise ValueError(f"{self.kind} operand must not set {sorted(populated - _KIND_FIELDS[self.kind])}")
        if self.kind == "register" and not self.register_name:
            raise ValueError("register operand without a name")
        if self.kind in ("immediate", "branch_target") and self.imm_value is None:
            raise ValueError(f"{self.kind} operand without a value")
        if self.kind == "memory":
            m = self.mem
            if m is None:
                raise ValueError("memory operand without a memory reference")
            if m.scale not in (1, 2, 4, 8):
                raise ValueError(f"bad scale {m.scale}")

    @classmethod
    def reg(cls, name: str) -> RawOperand:
        return cls("register", register_name=name)

    @classmethod
    def imm(cls, value: int) -> RawOperand:
        return cls("immediate", imm_value=value)

    @classmethod
    def target(cls, address: int) -> RawOperand:
        return cls("branch_target", imm_value=address)

    @classmethod
    def memory(cls, size_prefix="none", base=None, index=None, scale=1, displacement=0, segment=None) -> RawOperand:
        return cls("memory", mem=MemoryRef(size_prefix, base, index, scale, displacement, segment))


def _read_table(name: str) -> dict[str, str]:
    table = {}
    text = resources.files("rarescope").joinpath("data").joinpath(name).read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, value = line.split("\t")
            table[key] = value
    return table


@lru_cache(maxsize=None)
def register_table() -> dict[str, str]:
    """Register name -> class token, loaded from ``data/registers.tsv``."""
    return _read_table("registers.tsv")


@lru_cache(maxsize=None)
def mnemonic_aliases() -> dict[str, str]:
    return _read_table("mnemonic_aliases.tsv")


def is_register(name: str) -> bool:
    return name in register_table()


def _to_signed64(value: int) -> int:
    if value >= 1 << 63:
        value -= 1 << 64
    return value


def _parse_address(t: str) -> int:
    # objdump prints absolute addresses as bare hex
    if t.startswith(("0x", "-")):
        return int(t, 0)
    return int(t, 16)


def split_operands(op_str: str) -> list[str]:
    """Split on top-level commas (ignores commas inside brackets/parens/braces)."""
    parts, depth, cur = [], 0, []
    for ch in op_str:
        if ch in "[({<":
            depth += 1
        elif ch in "])}>":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur or parts:
        parts.append("".join(cur))
    return [p.strip() for p in parts]


# SIB encodings with index=100b print a pseudo "riz"/"eiz" index meaning "none"
_NO_INDEX = ("riz", "eiz")


def _parse_memory_expr(expr: str) -> tuple[str | None, str | None, int, int]:
    base = index = None
    scale, disp = 1, 0
    expr = expr.replace(" ", "")
    if not expr:
        return base, index, scale, disp
    terms = re.findall(r"[+-]?[^+-]+", expr)
    for term in terms:
        sign = -1 if term.startswith("-") else 1
        term = term.lstrip("+-")
        if "*" in term:
            a, b = term.split("*", 1)
            reg, factor = (a, b) if not _NUMBER.match(a) else (b, a)
            if reg in _NO_INDEX:
                continue
            if not is_register(reg):
                raise UnknownRegister(reg)
            index, scale = reg, int(factor, 0)
        elif term in _NO_INDEX:
            continue
        elif _NUMBER.match(term):
            disp += sign * int(term, 0)
        elif is_register(term):
            if base is None and index is None:
                base = term
            elif index is None:
                index = term
            else:
                raise UnknownRegister(term)
        else:
            raise UnknownRegister(term)
    return base, index, scale, _to_signed64(disp)


def parse_operand(text: str, branch: bool = False) -> RawOperand | None:
    """Parse one Intel-syntax operand string.

    Returns ``None`` for operands that vanish after stripping AVX-512
    decorators (``{sae}``, ``{rn-sae}``).  ``branch`` marks the operand of a
    jump/call so a bare address becomes a branch target; objdump prints such
    addresses as unprefixed hex.
    """
    t = _DECORATOR.sub("", text.lower())
    t = _ANNOTATION.sub("", t).strip()
    if not t:
        return None
    if is_register(t):
        return RawOperand.reg(t)
    if branch and (_NUMBER.match(t) or _BARE_HEX.match(t)):
        return RawOperand.target(_parse_address(t))
    if _NUMBER.match(t):
        return RawOperand.imm(_to_signed64(int(t, 0)))
    m = _MEMORY.match(t)
    if m and (m.group("size") or m.group("seg") or m.group("expr") is not None):
        size = m.group("size")
        if size is not None and size not in SIZE_PREFIXES:
            return RawOperand("other", text=t.replace(" ", ""))
        prefix = SIZE_PREFIXES.get(size, "none")
        seg = m.group("seg") if m.group("seg") in ("fs", "gs") else None
        if m.group("expr") is not None:
            base, index, scale, disp = _parse_memory_expr(m.group("expr"))
        else:
            base, index, scale = None, None, 1
            disp = _to_signed64(_parse_address(m.group("abs")))
        return RawOperand.memory(prefix, base, index, scale, disp, seg)
    if re.fullmatch(r"[a-z_][a-z0-9_()]*", t):
        raise UnknownRegister(t)
    return RawOperand("other", text=t.replace(" ", ""))


_WIDTH_BY_CLASS = {"reg8": 64, "sp8": 64, "bp8": 64, "reg4": 32, "sp4": 32, "bp4": 32, "reg2": 16, "reg1": 8}
_WIDTH_BY_SIZE = {"byteptr": 8, "wordptr": 16, "dwordptr": 32, "qwordptr": 64}


def _operand_width(op: RawOperand) -> int | None:
    if op.kind == "register":
        return _WIDTH_BY_CLASS.get(register_table()[op.register_name])
    if op.kind == "memory":
        return _WIDTH_BY_SIZE.get(op.mem.size_prefix)
    return None


def _sign_immediates(operands: list[RawOperand]) -> list[RawOperand]:
    # objdump prints "cmp eax,0xffffffff" where capstone prints "cmp eax, -1";
    # reading immediates as signed at the first operand's width unifies them
    if not operands or not any(o.kind == "immediate" for o in operands):
        return operands
    width = _operand_width(operands[0])
    if width is None:
        return operands
    out = []
    for o in operands:
        if o.kind == "immediate" and (1 << (width - 1)) <= o.imm_value < (1 << width):
            o = RawOperand.imm(o.imm_value - (1 << width))
        out.append(o)
    return out


def canonical_mnemonic(words: list[str], operands: list[RawOperand]) -> tuple[str, list[RawOperand]]:
    """Canonicalize a (possibly prefixed) mnemonic and drop implicit operands.

    - encoding-only prefixes (``bnd``, ``notrack``, ``cs``, ``data16``...) are dropped;
    - behavioural prefixes (``lock``, ``rep``...) are joined with ``.``;
    - aliases map through ``data/mnemonic_aliases.tsv``;
    - string instructions take their size suffix and lose their implicit
      ``[rdi]``/``[rsi]`` operands;
    - ``xchg ax, ax`` is the two-byte ``nop``.
    """
    aliases = mnemonic_aliases()
    words = [w.lower() for w in words if w]
    words = [aliases.get(w, w) for w in words if w not in ENCODING_PREFIXES and not w.startswith("rex")]
    if not words:
        raise ValueError("empty mnemonic")
    *prefixes, base = words
    prefixes = [p for p in prefixes if p in SEMANTIC_PREFIXES]

    if base in STRING_OPS:
        size = next((o.mem.size_prefix for o in operands if o.kind == "memory"), "none")
        base = base + SIZE_SUFFIX.get(size, "")
        operands = []
    elif base[:-1] in STRING_OPS and base[-1] in "bwdq":
        if not any(o.kind == "register" and o.register_name.startswith("xmm") for o in operands):
            operands = []
    elif base == "xchg" and len(operands) == 2 and all(o.kind == "register" and o.register_name == "ax" for o in operands):
        base, operands = "nop", []

    return ".".join(prefixes + [base]), _sign_immediates(operands)


def parse_instruction_text(mnemonic_field: str, op_str: str) -> tuple[str, list[RawOperand]]:
    """Turn a printed ``mnemonic`` + ``operands`` pair into canonical form."""
    words = mnemonic_field.lower().split()
    op_str = op_str.split("#", 1)[0].strip()
    base = next((w for w in reversed(words) if w not in ENCODING_PREFIXES), words[-1] if words else "")
    branch = base in BRANCH_MNEMONICS or base.startswith("j")
    operands = []
    for piece in split_operands(op_str) if op_str else []:
        op = parse_operand(piece, branch=branch)
        if op is not None:
            operands.append(op)
    return canonical_mnemonic(words, operands)
