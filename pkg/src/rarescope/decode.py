"""Frontends that turn ELF files or objdump text into raw instructions.

Two routes produce the same representation:

* :func:`load_binary` reads an ELF64 x86-64 file, splits it into functions
  using the symbol table and linear-sweeps each function with capstone.
* :func:`parse_textual_disassembly` reads ``objdump -d -M intel`` output.
"""

from __future__ import annotations

import hashlib
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import capstone
from elftools.elf.elffile import ELFFile
from elftools.elf.constants import SH_FLAGS

from .errors import DecodeFailure, DisassemblySyntaxError, NotAnElf, UnknownRegister, WrongArchitecture
from .syntax import ENCODING_PREFIXES, SEMANTIC_PREFIXES, MemoryRef, RawOperand, parse_instruction_text

__all__ = [
    "BinaryMeta",
    "FunctionRecord",
    "MemoryRef",
    "RawInstruction",
    "RawOperand",
    "decode_bytes",
    "load_binary",
    "parse_textual_disassembly",
]

log = logging.getLogger(__name__)

COMPILERS = ("gcc", "clang", "unknown")
OPT_LEVELS = ("O0", "O1", "O2", "O3", "unknown")
ELF_MAGIC = b"\x7fELF"


@dataclass(frozen=True)
class BinaryMeta:
    binary_id: str
    path: str
    compiler: str = "unknown"
    opt_level: str = "unknown"
    has_debug_info: bool = False
    arch: str = "x86-64"

    def __post_init__(self):
        if self.arch != "x86-64":
            raise WrongArchitecture(self.arch)
        if self.compiler not in COMPILERS:
            raise ValueError(f"compiler must be one of {COMPILERS}, got {self.compiler!r}")
        if self.opt_level not in OPT_LEVELS:
            raise ValueError(f"opt_level must be one of {OPT_LEVELS}, got {self.opt_level!r}")


@dataclass(frozen=True)
class RawInstruction:
    address: int
    length: int
    mnemonic: str
    operands: tuple[RawOperand, ...] = ()

    def __post_init__(self):
        if not 1 <= self.length <= 15:
            raise ValueError(f"instruction length {self.length} outside 1..15")
        if not self.mnemonic or self.mnemonic != self.mnemonic.lower() or any(c.isspace() for c in self.mnemonic):
            raise ValueError(f"bad mnemonic {self.mnemonic!r}")


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    start: int
    end: int
    instructions: tuple[RawInstruction, ...] = ()
    diagnostics: tuple[str, ...] = field(default=(), compare=False)


def _make_instruction(address: int, length: int, mnemonic: str, op_str: str) -> RawInstruction:
    mnem, operands = parse_instruction_text(mnemonic, op_str)
    return RawInstruction(address, length, mnem, tuple(operands))


def decode_bytes(data: bytes, base_address: int) -> list[RawInstruction]:
    """Linear-sweep decode ``data`` starting at ``base_address``.

    Raises :class:`DecodeFailure` at the first undecodable byte; the
    exception's ``partial`` attribute holds what was decoded before it.
    """
    if not data:
        raise ValueError("empty byte sequence")
    md = capstone.Cs(capstone.CS_ARCH_X86, capstone.CS_MODE_64)
    md.syntax = capstone.CS_OPT_SYNTAX_INTEL
    out: list[RawInstruction] = []
    offset = 0
    while offset < len(data):
        for address, size, mnemonic, op_str in md.disasm_lite(data[offset:], base_address + offset):
            out.append(_make_instruction(address, size, mnemonic, op_str))
            offset += size
        if offset < len(data):
            raise DecodeFailure(offset, out)
    return out


# -- ELF -----------------------------------------------------------------

_OPT_FLAG = re.compile(r"(?:^|\s)-O([0-3sgz]|fast)?(?=\s|$)")


def _producers(elf: ELFFile) -> list[str]:
    if not elf.has_dwarf_info():
        return []
    out = []
    for cu in elf.get_dwarf_info().iter_CUs():
        attr = cu.get_top_DIE().attributes.get("DW_AT_producer")
        if attr is not None:
            value = attr.value
            out.append(value.decode("utf-8", "replace") if isinstance(value, bytes) else str(value))
    return out


def _infer_compiler_opt(elf: ELFFile) -> tuple[str, str]:
    compiler, opt = "unknown", "unknown"
    producers = [p for p in _producers(elf) if not p.startswith("GNU AS")]
    if any("clang" in p for p in producers):
        compiler = "clang"
    elif any(p.startswith("GNU ") for p in producers):
        compiler = "gcc"
    else:
        comment = elf.get_section_by_name(".comment")
        if comment is not None:
            text = comment.data().decode("latin-1")
            if "clang" in text:
                compiler = "clang"
            elif "GCC:" in text:
                compiler = "gcc"
    for p in producers:
        flags = _OPT_FLAG.findall(p)
        if flags:
            level = flags[-1]
            opt = {"": "O1", "0": "O0", "1": "O1", "2": "O2", "3": "O3"}.get(level, "unknown")
        elif p.startswith("GNU ") and " -" in p:
            # gcc records its switches; no -O switch means the O0 default
            opt = "O0"
        if opt != "unknown":
            break
    return compiler, opt


def _function_symbols(elf: ELFFile) -> list[tuple[int, int, str]]:
    symtab = elf.get_section_by_name(".symtab")
    if symtab is None:
        return []
    sections = list(elf.iter_sections())
    found = {}
    for sym in symtab.iter_symbols():
        if sym["st_info"]["type"] != "STT_FUNC" or sym["st_size"] == 0:
            continue
        shndx = sym["st_shndx"]
        if not isinstance(shndx, int) or shndx >= len(sections):
            continue
        if not sections[shndx]["sh_flags"] & SH_FLAGS.SHF_EXECINSTR:
            continue
        start, size = sym["st_value"], sym["st_size"]
        rank = (0 if sym["st_info"]["bind"] == "STB_GLOBAL" else 1, sym.name)
        # aliases share a start address; keep the largest, then global, then by name
        key = (-size, rank)
        if start not in found or key < found[start][0]:
            found[start] = (key, size, sym.name)
    return sorted((start, size, name) for start, (_, size, name) in found.items())


def _exec_sections(elf: ELFFile):
    return [s for s in elf.iter_sections() if s["sh_flags"] & SH_FLAGS.SHF_EXECINSTR and s["sh_type"] == "SHT_PROGBITS"]


def _section_for(sections, address: int):
    for s in sections:
        if s["sh_addr"] <= address < s["sh_addr"] + s["sh_size"]:
            return s
    return None


def _decode_function(name: str, start: int, end: int, data: bytes) -> FunctionRecord:
    diagnostics = ()
    try:
        instructions = decode_bytes(data, start) if data else []
    except DecodeFailure as exc:
        instructions = list(exc.partial)
        msg = f"{name}: decoding stopped at {start + exc.offset:#x}; record truncated"
        log.warning(msg)
        diagnostics = (msg,)
    except UnknownRegister as exc:
        instructions = []
        msg = f"{name}: {exc}; record dropped"
        log.warning(msg)
        diagnostics = (msg,)
    return FunctionRecord(name, start, end, tuple(instructions), diagnostics)


def load_binary(path, meta_hints: dict | None = None) -> tuple[BinaryMeta, list[FunctionRecord]]:
    """Load an x86-64 ELF file and decode every function symbol.

    ``meta_hints`` may carry ``binary_id``, ``compiler`` and ``opt_level``;
    hints take precedence over what the file says about itself.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != ELF_MAGIC:
        raise NotAnElf(str(path))
    elf = ELFFile(io.BytesIO(raw))
    if elf["e_machine"] != "EM_X86_64" or elf.elfclass != 64:
        raise WrongArchitecture(f"{path}: {elf['e_machine']}")

    hints = {k: v for k, v in (meta_hints or {}).items() if v not in (None, "unknown")}
    compiler, opt = _infer_compiler_opt(elf)
    meta = BinaryMeta(
        binary_id=hints.get("binary_id") or hashlib.sha256(raw).hexdigest()[:16],
        path=str(path),
        compiler=hints.get("compiler", compiler),
        opt_level=hints.get("opt_level", opt),
        has_debug_info=elf.get_section_by_name(".debug_info") is not None
        and elf.get_section_by_name(".debug_line") is not None,
    )

    sections = _exec_sections(elf)
    functions = []
    symbols = _function_symbols(elf)
    if symbols:
        for i, (start, size, name) in enumerate(symbols):
            end = start + size
            if i + 1 < len(symbols):
                end = min(end, symbols[i + 1][0])
            sec = _section_for(sections, start)
            if sec is None:
                continue
            lo = start - sec["sh_addr"]
            hi = min(end - sec["sh_addr"], sec["sh_size"])
            functions.append(_decode_function(name, start, end, sec.data()[lo:hi]))
    else:
        for sec in sections:
            if sec["sh_size"]:
                start = sec["sh_addr"]
                functions.append(_decode_function(f"sub_{start:x}", start, start + sec["sh_size"], sec.data()))
    return meta, functions


# -- objdump text --------------------------------------------------------

_HEADER = re.compile(r"^([0-9a-f]+) <(.+)>:\s*$")
_INSN = re.compile(r"^\s*([0-9a-f]+):\t((?:[0-9a-f]{2} ?)+)\s*(?:\t(.*))?$")
_SKIP = re.compile(r"^(\s*$|Disassembly of section |\S+:\s+file format |\s*\.\.\.\s*$)")


def parse_textual_disassembly(text) -> list[FunctionRecord]:
    """Parse ``objdump -d -M intel`` output into function records.

    Accepts a string or an iterable of lines.  Instruction bytes must be
    present (they give the instruction length); byte continuation lines that
    objdump emits for long instructions are folded into the previous
    instruction.  A ``(bad)`` line truncates its function with a diagnostic,
    mirroring how :func:`load_binary` treats undecodable bytes.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    functions: list[FunctionRecord] = []
    name = None
    start = 0
    insns: list[list] = []
    diagnostics: list[str] = []
    truncated = False

    def flush():
        if name is None:
            return
        built = tuple(RawInstruction(a, n, m, ops) for a, n, m, ops in insns)
        end = built[-1].address + built[-1].length if built else start
        functions.append(FunctionRecord(name, start, end, built, tuple(diagnostics)))

    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if _SKIP.match(line):
            continue
        m = _HEADER.match(line)
        if m:
            flush()
            name, start = m.group(2), int(m.group(1), 16)
            insns, diagnostics, truncated = [], [], False
            continue
        m = _INSN.match(line)
        if not m:
            raise DisassemblySyntaxError(lineno, line)
        if name is None:
            raise DisassemblySyntaxError(lineno, line, "instruction before any function header")
        address = int(m.group(1), 16)
        nbytes = len(m.group(2).split())
        body = (m.group(3) or "").strip()
        if truncated:
            continue
        if not body:
            if not insns:
                raise DisassemblySyntaxError(lineno, line, "byte continuation without an instruction")
            insns[-1][1] += nbytes
            continue
        if body.startswith("(bad)"):
            truncated = True
            diagnostics.append(f"{name}: undecodable bytes at {address:#x}; record truncated")
            continue
        mnemonic_field, _, op_str = body.partition(" ")
        words = [mnemonic_field]
        rest = op_str.strip()
        # prefixes are separate words ("rep stos ...", "lock cmpxchg ...")
        while rest and parse_prefix_word(words[-1]):
            head, _, tail = rest.partition(" ")
            words.append(head)
            rest = tail.strip()
        mnem, operands = parse_instruction_text(" ".join(words), rest)
        insns.append([address, nbytes, mnem, tuple(operands)])
    flush()
    return functions


def parse_prefix_word(word: str) -> bool:
    w = word.lower()
    return w in ENCODING_PREFIXES or w in SEMANTIC_PREFIXES or w in ("repe", "repne") or w.startswith("rex")
