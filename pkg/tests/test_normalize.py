from __future__ import annotations

import re
import shutil
import subprocess

import pytest
from elftools.elf.elffile import ELFFile
from hypothesis import given, settings, strategies as st

from rarescope.decode import RawInstruction, decode_bytes
from rarescope.errors import UnknownRegister
from rarescope.normalize import (
    GP_CLASSES,
    NormalizationConfig,
    normalize_instruction,
    normalize_operand,
    normalize_register,
    parse_memory_token,
)
from rarescope.syntax import RawOperand, parse_instruction_text, register_table

from goldens import GOLDEN_TOKENS

GP64 = ["rax", "rbx", "rcx", "rdx", "rsi", "rdi"] + [f"r{i}" for i in range(8, 16)]
GP32 = ["eax", "ebx", "ecx", "edx", "esi", "edi"] + [f"r{i}d" for i in range(8, 16)]
GP16 = ["ax", "bx", "cx", "dx", "si", "di", "sp", "bp"] + [f"r{i}w" for i in range(8, 16)]
GP8 = ["al", "bl", "cl", "dl", "ah", "bh", "ch", "dh", "sil", "dil", "spl", "bpl"] + [f"r{i}b" for i in range(8, 16)]


def ins(mnemonic, *operands):
    return RawInstruction(0x1000, 4, mnemonic, tuple(operands))


@pytest.mark.parametrize("mnemonic,ops,expected", GOLDEN_TOKENS)
def test_golden_tokens_from_text(mnemonic, ops, expected):
    mnem, operands = parse_instruction_text(mnemonic, ops)
    assert normalize_instruction(RawInstruction(0, 5, mnem, tuple(operands))).token == expected


@pytest.mark.skipif(not shutil.which("as"), reason="GNU as not installed")
def test_golden_tokens_through_assembler_and_decoder(tmp_path):
    # every golden except the last is a spelling GNU as and capstone share
    src, obj = tmp_path / "g.s", tmp_path / "g.o"
    lines = [f"{m} {o}" for m, o, _ in GOLDEN_TOKENS[:-1]]
    src.write_text(".intel_syntax noprefix\n" + "\n".join(lines) + "\n")
    subprocess.run(["as", "-o", str(obj), str(src)], check=True, capture_output=True)
    with open(obj, "rb") as fh:
        code = ELFFile(fh).get_section_by_name(".text").data()
    tokens = [normalize_instruction(i).token for i in decode_bytes(code, 0)]
    assert tokens == [t for _, _, t in GOLDEN_TOKENS[:-1]]


def test_decoder_spelling_of_the_scalar_eq_us_predicate():
    # c5 fa c2 05 f0 2e 00 00 18: vcmpeq_usss xmm0, xmm0, [rip+0x2ef0]
    (i,) = decode_bytes(bytes.fromhex("c5fac205f02e000018"), 0)
    assert normalize_instruction(i).token == "vcmpeq_usss_regxmm_regxmm_dwordptr[ip8+disp]"


@pytest.mark.parametrize(
    "name,token",
    [("k1", "k1"), ("ebp", "bp4"), ("r13", "reg8"), ("rsp", "sp8"), ("esp", "sp4"), ("rbp", "bp8"),
     ("rip", "ip8"), ("xmm17", "regxmm"), ("ymm2", "regymm"), ("zmm31", "regzmm"), ("mm3", "regmmx"),
     ("st0", "regst"), ("fs", "fs"), ("r9b", "reg1"), ("ax", "reg2")],
)
def test_register_classes(name, token):
    assert normalize_register(name) == token


def test_unknown_register():
    with pytest.raises(UnknownRegister):
        normalize_register("r99")


@pytest.mark.parametrize(
    "op,expected",
    [
        (RawOperand.memory("dwordptr", "rsp", displacement=8), "dwordptr[sp8+8]"),
        (RawOperand.memory("qwordptr", "rsp", displacement=0x120), "qwordptr[sp8+disp]"),
        (RawOperand.memory("qwordptr", "rip", displacement=0x2EF0), "qwordptr[ip8+disp]"),
        (RawOperand.memory("qwordptr", "rbp", displacement=-8), "qwordptr[bp8-8]"),
        (RawOperand.memory("qwordptr", "rbp", displacement=-0x40), "qwordptr[bp8+disp]"),
        (RawOperand.memory("byteptr", "rdi"), "byteptr[reg8]"),
        (RawOperand.memory("dwordptr", "rax", "rcx", 4, 12), "dwordptr[reg8+reg8*4+12]"),
        (RawOperand.memory("none", None, "rcx", 8, 0x4000), "[reg8*8+disp]"),
        (RawOperand.memory("qwordptr", displacement=0x28, segment="fs"), "qwordptr[fs:disp]"),
        (RawOperand.imm(1), "1"),
        (RawOperand.imm(-3), "-3"),
        (RawOperand.imm(4096), "immval"),
        (RawOperand.target(0x401000), "target"),
    ],
)
def test_operand_rules(op, expected):
    assert normalize_operand(op) == expected


def test_literal_bound_edges():
    cfg = NormalizationConfig()
    assert normalize_operand(RawOperand.memory("qwordptr", "rax", displacement=15), cfg) == "qwordptr[reg8+15]"
    assert normalize_operand(RawOperand.memory("qwordptr", "rax", displacement=16), cfg) == "qwordptr[reg8+disp]"
    zero = NormalizationConfig(disp_literal_bound=0, imm_literal_bound=0, branch_target_token="T")
    assert normalize_operand(RawOperand.memory("qwordptr", "rax", displacement=1), zero) == "qwordptr[reg8+disp]"
    assert normalize_operand(RawOperand.imm(0), zero) == "immval"
    assert normalize_operand(RawOperand.target(5), zero) == "T"
    with pytest.raises(ValueError):
        NormalizationConfig(disp_literal_bound=-1)


def test_instruction_examples():
    prefetch = ins("prefetcht0", RawOperand.memory("byteptr", "rdi"))
    assert normalize_instruction(prefetch).token == "prefetcht0_byteptr[reg8]"
    assert normalize_instruction(ins("ret")).token == "ret"


def test_memory_token_roundtrip():
    assert parse_memory_token("dwordptr[sp8+8]") == {
        "size": "dwordptr", "segment": None, "base": "sp8", "index": None, "disp": "8",
    }
    assert parse_memory_token("[reg8*8+disp]")["index"] == "reg8*8"
    assert parse_memory_token("reg8") is None


def test_class_soundness_over_gp_registers():
    for name in GP64 + GP32 + GP16 + GP8 + ["rsp", "esp", "rbp", "ebp", "rip"]:
        assert normalize_register(name) in GP_CLASSES, name


def test_register_table_is_lowercase_and_closed():
    for name, token in register_table().items():
        assert name == name.lower() and token == token.lower()
        assert not re.search(r"\s", token)


# -- properties --------------------------------------------------------------

REGISTERS = sorted(register_table())
ADDRESSABLE = GP64 + ["rsp", "rbp"]

registers = st.sampled_from(REGISTERS).map(RawOperand.reg)
immediates = st.integers(-(2**31), 2**31 - 1).map(RawOperand.imm)
targets = st.integers(0, 2**48).map(RawOperand.target)
memories = st.builds(
    RawOperand.memory,
    st.sampled_from(["byteptr", "wordptr", "dwordptr", "qwordptr", "xmmwordptr", "none"]),
    st.sampled_from(ADDRESSABLE + ["rip"]),
    st.one_of(st.none(), st.sampled_from(GP64)),
    st.sampled_from([1, 2, 4, 8]),
    st.integers(-(2**31), 2**31 - 1),
)
operands = st.one_of(registers, immediates, targets, memories)
instructions = st.builds(
    lambda m, ops, n: RawInstruction(0x1000, n, m, tuple(ops)),
    st.sampled_from(["mov", "add", "vaddps", "kortestw", "lea", "cmp", "jmp"]),
    st.lists(operands, max_size=3),
    st.integers(1, 15),
)
configs = st.builds(NormalizationConfig, st.integers(0, 64), st.integers(0, 64), st.sampled_from(["target", "tgt"]))


@settings(max_examples=300, deadline=None)
@given(instructions, configs)
def test_normalization_is_deterministic_and_well_formed(i, cfg):
    a = normalize_instruction(i, cfg)
    b = normalize_instruction(RawInstruction(i.address, i.length, i.mnemonic, tuple(i.operands)), cfg)
    assert a == b
    assert a.token == "_".join((a.mnemonic,) + a.operand_tokens)
    assert a.token == a.token.lower() and not re.search(r"\s", a.token)


def _raw_text(i: RawInstruction) -> str:
    return repr((i.mnemonic, i.operands))


@settings(max_examples=100, deadline=None)
@given(st.lists(instructions, max_size=60))
def test_vocabulary_reduction(stream):
    assert len({normalize_instruction(i).token for i in stream}) <= len({_raw_text(i) for i in stream})


@given(st.sampled_from(GP64 + GP32 + GP16 + GP8 + ["rsp", "esp", "rbp", "ebp", "rip"]))
def test_gp_class_soundness_property(name):
    assert normalize_register(name) in GP_CLASSES
