"""Instruction normalization.

Registers collapse to width classes (``reg8``, ``regxmm`` ...), small
displacements and immediates stay literal, larger ones become ``disp`` /
``immval``, and branch targets become one ``target`` token.  The resulting
underscore-joined string is the unit every statistic counts::

    >>> from rarescope.decode import RawInstruction, RawOperand
    >>> ins = RawInstruction(0, 5, "vbroadcastss", (RawOperand.reg("ymm3"), RawOperand.reg("xmm0")))
    >>> normalize_instruction(ins).token
    'vbroadcastss_regymm_regxmm'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import UnknownRegister
from .syntax import RawOperand, register_table

GP_CLASSES = frozenset({"reg1", "reg2", "reg4", "reg8", "sp4", "sp8", "bp4", "bp8", "ip8", "ip4"})


@dataclass(frozen=True)
class NormalizationConfig:
    disp_literal_bound: int = 16
    imm_literal_bound: int = 16
    branch_target_token: str = "target"

    def __post_init__(self):
        if self.disp_literal_bound < 0 or self.imm_literal_bound < 0:
            raise ValueError("literal bounds must be >= 0")

    @classmethod
    def from_dict(cls, d: dict | None) -> NormalizationConfig:
        d = d or {}
        unknown = set(d) - {"disp_literal_bound", "imm_literal_bound", "branch_target_token"}
        if unknown:
            raise ValueError(f"unknown normalization options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "disp_literal_bound": self.disp_literal_bound,
            "imm_literal_bound": self.imm_literal_bound,
            "branch_target_token": self.branch_target_token,
        }


DEFAULT_CONFIG = NormalizationConfig()


@dataclass(frozen=True)
class NormalizedInstruction:
    token: str
    mnemonic: str
    operand_tokens: tuple[str, ...] = field(default=())

    @classmethod
    def build(cls, mnemonic: str, operand_tokens) -> NormalizedInstruction:
        operand_tokens = tuple(operand_tokens)
        return cls("_".join((mnemonic,) + operand_tokens), mnemonic, operand_tokens)


def normalize_register(name: str) -> str:
    try:
        return register_table()[name.lower()]
    except KeyError:
        raise UnknownRegister(name) from None


def _literal(value: int, bound: int, symbol: str) -> str:
    return str(value) if abs(value) < bound else symbol


def normalize_operand(op: RawOperand, cfg: NormalizationConfig = DEFAULT_CONFIG) -> str:
    if op.kind == "register":
        return normalize_register(op.register_name)
    if op.kind == "immediate":
        return _literal(op.imm_value, cfg.imm_literal_bound, "immval")
    if op.kind == "branch_target":
        return cfg.branch_target_token
    if op.kind == "memory":
        m = op.mem
        inner = ""
        if m.segment:
            inner = m.segment + ":"
        parts = []
        if m.base:
            parts.append(normalize_register(m.base))
        if m.index:
            parts.append(f"{normalize_register(m.index)}*{m.scale}")
        expr = "+".join(parts)
        d = m.displacement
        if d:
            if abs(d) >= cfg.disp_literal_bound:
                expr += "+disp" if expr else "disp"
            elif d < 0:
                expr += f"-{-d}"
            else:
                expr += f"+{d}" if expr else str(d)
        if not expr:
            # absolute address 0 (fs:0, ds:0x0)
            expr = "0"
        prefix = "" if m.size_prefix == "none" else m.size_prefix
        return f"{prefix}[{inner}{expr}]"
    return op.text or "other"


def normalize_instruction(ins, cfg: NormalizationConfig = DEFAULT_CONFIG) -> NormalizedInstruction:
    return NormalizedInstruction.build(ins.mnemonic, (normalize_operand(o, cfg) for o in ins.operands))


_MEM_TOKEN = re.compile(r"^(?P<size>[a-z]*)\[(?:(?P<seg>[fg]s):)?(?P<expr>[^\]]*)\]$")


def parse_memory_token(token: str) -> dict | None:
    """Split a normalized memory operand token back into its parts.

    ``'dwordptr[sp8+8]'`` -> ``{'size': 'dwordptr', 'base': 'sp8', 'index': None, 'disp': '8', ...}``.
    Returns ``None`` when ``token`` is not a memory operand.
    """
    m = _MEM_TOKEN.match(token)
    if not m:
        return None
    base = index = disp = None
    for part in re.findall(r"[+-]?[^+-]+", m.group("expr")):
        bare = part.lstrip("+")
        if "*" in bare:
            index = bare
        elif bare == "disp" or re.fullmatch(r"-?\d+", bare):
            disp = bare if bare != "0" else None
        elif base is None:
            base = bare
    return {"size": m.group("size") or "none", "segment": m.group("seg"), "base": base, "index": index, "disp": disp}
