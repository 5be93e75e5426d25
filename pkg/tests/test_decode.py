from __future__ import annotations

import re
import shutil
import subprocess
from collections import Counter

import pytest
from elftools.elf.elffile import ELFFile
from hypothesis import given, settings, strategies as st

from rarescope.decode import decode_bytes, load_binary, parse_textual_disassembly
from rarescope.errors import DecodeFailure, DisassemblySyntaxError, NotAnElf, UnknownRegister, WrongArchitecture
from rarescope.syntax import MemoryRef, RawOperand

from conftest import DATA, compile_c, needs_gcc, needs_objdump, objdump


def assemble(tmp_path, text: str) -> bytes:
    if not shutil.which("as"):
        pytest.skip("GNU as not installed")
    src, obj = tmp_path / "x.s", tmp_path / "x.o"
    src.write_text(".intel_syntax noprefix\n" + text + "\n")
    subprocess.run(["as", "-o", str(obj), str(src)], check=True, capture_output=True)
    with open(obj, "rb") as fh:
        return ELFFile(fh).get_section_by_name(".text").data()


# -- decode_bytes ------------------------------------------------------------


def test_single_nop():
    (ins,) = decode_bytes(b"\x90", 0x1000)
    assert (ins.address, ins.length, ins.mnemonic, ins.operands) == (0x1000, 1, "nop", ())


def test_three_nops_are_consecutive():
    out = decode_bytes(b"\x90\x90\x90", 0x1000)
    assert [i.address for i in out] == [0x1000, 0x1001, 0x1002]
    assert {i.mnemonic for i in out} == {"nop"}


def test_empty_bytes_rejected():
    with pytest.raises(ValueError):
        decode_bytes(b"", 0)


def test_vbroadcastss_from_assembler(tmp_path):
    code = assemble(tmp_path, "vbroadcastss ymm0, xmm1")
    (ins,) = decode_bytes(code, 0)
    assert ins.mnemonic == "vbroadcastss"
    assert ins.operands == (RawOperand.reg("ymm0"), RawOperand.reg("xmm1"))


def test_memory_operand_structure(tmp_path):
    code = assemble(tmp_path, "adc rbp, qword ptr [rsp+0x120]")
    (ins,) = decode_bytes(code, 0)
    assert ins.mnemonic == "adc"
    assert ins.operands[1].mem == MemoryRef("qwordptr", "rsp", None, 1, 0x120)


def test_decode_failure_keeps_partial():
    with pytest.raises(DecodeFailure) as info:
        decode_bytes(b"\x90\x06", 0x400)  # 0x06 is invalid in 64-bit mode
    assert info.value.offset == 1
    assert [i.address for i in info.value.partial] == [0x400]


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.integers(0, 2**40))
def test_lengths_cover_consumed_bytes(data, base):
    try:
        out = decode_bytes(data, base)
        consumed = len(data)
    except DecodeFailure as exc:
        out, consumed = list(exc.partial), exc.offset
    assert sum(i.length for i in out) == consumed
    addrs = [i.address for i in out]
    assert addrs == sorted(set(addrs))
    assert all(a == base + sum(i.length for i in out[:k]) for k, a in enumerate(addrs))


# -- load_binary -------------------------------------------------------------


def test_not_an_elf(tmp_path):
    p = tmp_path / "junk"
    p.write_bytes(b"MZ\x90\x00" + bytes(60))
    with pytest.raises(NotAnElf):
        load_binary(p)


@needs_gcc
def test_wrong_architecture(tmp_path, gcc_binary):
    raw = bytearray(gcc_binary.read_bytes())
    raw[18:20] = (183).to_bytes(2, "little")  # EM_AARCH64
    p = tmp_path / "arm"
    p.write_bytes(bytes(raw))
    with pytest.raises(WrongArchitecture):
        load_binary(p)


@needs_gcc
def test_object_without_code_has_no_functions(tmp_path):
    src = tmp_path / "data.c"
    src.write_text("int x = 1;\n")
    obj = tmp_path / "data.o"
    subprocess.run(["gcc", "-c", "-o", str(obj), str(src)], check=True)
    meta, functions = load_binary(obj)
    assert functions == []
    assert meta.arch == "x86-64"


@needs_gcc
def test_metadata_inference_and_hints(gcc_binary):
    meta, _ = load_binary(gcc_binary)
    assert (meta.compiler, meta.opt_level, meta.has_debug_info) == ("gcc", "O2", True)
    meta, _ = load_binary(gcc_binary, {"binary_id": "x", "compiler": "clang", "opt_level": "O3"})
    assert (meta.binary_id, meta.compiler, meta.opt_level) == ("x", "clang", "O3")


@needs_gcc
def test_function_records_are_well_formed(gcc_binary):
    _, functions = load_binary(gcc_binary)
    assert "main" in {f.name for f in functions}
    for f in functions:
        addrs = [i.address for i in f.instructions]
        assert addrs == sorted(set(addrs))
        assert all(f.start <= a < f.end for a in addrs)


@needs_gcc
def test_stripped_binary_falls_back_to_sections(tmp_path):
    out = compile_c(DATA / "bits.c", tmp_path / "bits", "gcc", ("-O1", "-s"))
    _, functions = load_binary(out)
    assert functions and all(f.name.startswith("sub_") for f in functions)


def _objdump_functions(text):
    funcs, name = {}, None
    for line in text.splitlines():
        m = re.match(r"^[0-9a-f]+ <(.+)>:$", line)
        if m:
            name = m.group(1)
            funcs[name] = 0
        elif name and re.match(r"^\s*[0-9a-f]+:\t[0-9a-f ]+\t\S", line):
            funcs[name] += 1
    return funcs


@needs_gcc
@needs_objdump
def test_main_count_matches_objdump(gcc_binary):
    _, functions = load_binary(gcc_binary)
    main = next(f for f in functions if f.name == "main")
    # objdump lists trailing padding under the preceding label; count only the symbol's range
    lines = re.findall(r"^\s*([0-9a-f]+):\t[0-9a-f ]+\t\S", objdump(gcc_binary), re.M)
    expected = sum(1 for a in lines if main.start <= int(a, 16) < main.end)
    assert len(main.instructions) == expected


# -- textual frontend --------------------------------------------------------


def test_ret_line():
    (fn,) = parse_textual_disassembly("0000000000401000 <f>:\n  401000:\tc3                   \tret    \n")
    (ins,) = fn.instructions
    assert (ins.address, ins.length, ins.mnemonic, ins.operands) == (0x401000, 1, "ret", ())


def test_kortestw_operand_order():
    text = "0000000000401010 <q>:\n  401010:\tc5 f8 98 c8          \tkortestw k1,k0\n"
    (fn,) = parse_textual_disassembly(text)
    assert fn.instructions[0].operands == (RawOperand.reg("k1"), RawOperand.reg("k0"))


def test_memory_operand_from_text():
    text = "0000000000401000 <f>:\n  401000:\t48 13 ac 24 20 01 00 00 \tadc    rbp,QWORD PTR [rsp+0x120]\n"
    (fn,) = parse_textual_disassembly(text)
    assert fn.instructions[0].operands[1].mem == MemoryRef("qwordptr", "rsp", None, 1, 0x120)


def test_syntax_error_reports_line_number():
    text = "0000000000401000 <f>:\n  401000:\tc3 \tret\nthis is not disassembly\n"
    with pytest.raises(DisassemblySyntaxError) as info:
        parse_textual_disassembly(text)
    assert info.value.lineno == 3


def test_unknown_register():
    text = "0000000000401000 <f>:\n  401000:\t48 89 c0 \tmov    rax,bogus9\n"
    with pytest.raises(UnknownRegister) as info:
        parse_textual_disassembly(text)
    assert info.value.name == "bogus9"


def test_bad_bytes_truncate_function():
    text = (
        "0000000000401000 <f>:\n"
        "  401000:\t90 \tnop\n"
        "  401001:\t06 \t(bad)\n"
        "  401002:\tc3 \tret\n"
    )
    (fn,) = parse_textual_disassembly(text)
    assert [i.mnemonic for i in fn.instructions] == ["nop"]
    assert fn.diagnostics


def test_continuation_bytes_fold_into_length():
    text = (
        "0000000000401000 <f>:\n"
        "  401000:\t66 66 2e 0f 1f 84 00 \tdata16 cs nop WORD PTR [rax+rax*1+0x0]\n"
        "  401007:\t00 00 00 00 \n"
        "  40100b:\tc3 \tret\n"
    )
    (fn,) = parse_textual_disassembly(text)
    assert [(i.mnemonic, i.length) for i in fn.instructions] == [("nop", 11), ("ret", 1)]


@needs_gcc
@needs_objdump
def test_objdump_output_parses_with_matching_count(desk_corpus):
    root, _, entries = desk_corpus
    for e in entries:
        text = objdump(root / e["path"])
        parsed = parse_textual_disassembly(text)
        expected = _objdump_functions(text)
        assert {f.name: len(f.instructions) for f in parsed} == expected


@needs_gcc
@needs_objdump
def test_frontend_equivalence(desk_corpus):
    root, _, entries = desk_corpus
    for e in entries:
        path = root / e["path"]
        _, functions = load_binary(path)
        by_start = {f.start: f for f in parse_textual_disassembly(objdump(path))}
        for f in functions:
            text_insns = [i for i in by_start[f.start].instructions if f.start <= i.address < f.end]
            assert Counter((i.address, i.mnemonic) for i in f.instructions) == Counter(
                (i.address, i.mnemonic) for i in text_insns
            ), f.name
