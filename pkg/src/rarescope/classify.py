"""Rule-based categorization of rare instructions.

Rules run in a fixed priority order and the first hit becomes the primary
label; every other rule that also holds is kept as secondary evidence.

===========  =====================  =========================================
rule         label                  fires when
===========  =====================  =========================================
R-ASM        HandWrittenAssembly    a mapped source line is an ``asm``
                                    statement, or the file is ``.s/.S/.asm``
R-INTRINSIC  CompilerIntrinsic      mnemonic is an opmask / BMI / EVEX-family
                                    intrinsic form and only one compiler in
                                    the corpus emitted the token
R-FP         FloatingPointSupport   mnemonic is a FP compare or convert
R-STRUCT     StructMemberAccess     a base+displacement memory operand, and
                                    (if source is known) the line touches a
                                    member or the function names an aggregate
===========  =====================  =========================================
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources

from .normalize import NormalizedInstruction, parse_memory_token
from .sourcemap import is_assembly_file
from .stats import FrequencyTable, RareRecord

LABELS = ("HandWrittenAssembly", "CompilerIntrinsic", "FloatingPointSupport", "StructMemberAccess", "Unclassified")
RULE_LABEL = {
    "R-ASM": "HandWrittenAssembly",
    "R-INTRINSIC": "CompilerIntrinsic",
    "R-FP": "FloatingPointSupport",
    "R-STRUCT": "StructMemberAccess",
}
PRIORITY = ("R-ASM", "R-INTRINSIC", "R-FP", "R-STRUCT")

ASM_STATEMENT = re.compile(r"\b(?:__asm__|__asm|asm)\b(?:\s+(?:volatile|__volatile__|goto|inline))*\s*\(")
MEMBER_ACCESS = re.compile(r"\b[A-Za-z_]\w*(?:\s*\[[^\]]*\])*\s*(?:\.|->)\s*[A-Za-z_]")
AGGREGATE_KEYWORD = re.compile(r"\b(?:struct|union|class)\s+([A-Za-z_]\w*)")
IDENTIFIER = re.compile(r"\b[A-Za-z_]\w*\b")


def _read_set(name: str) -> tuple[str, ...]:
    text = resources.files("rarescope").joinpath("data").joinpath("sets").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.split("#", 1)[0].strip() for line in text.splitlines() if line.split("#", 1)[0].strip())


class PatternSet:
    """A set of mnemonics; entries may be shell-style globs (``kortest*``)."""

    def __init__(self, patterns):
        self.patterns = tuple(patterns)

    def __contains__(self, mnemonic: str) -> bool:
        return any(fnmatch.fnmatchcase(mnemonic, p) for p in self.patterns)

    def overlaps(self, other: PatternSet) -> list[tuple[str, str]]:
        """Pattern pairs where one side, read literally, matches the other."""
        return [
            (a, b)
            for a in self.patterns
            for b in other.patterns
            if fnmatch.fnmatchcase(a, b) or fnmatch.fnmatchcase(b, a)
        ]


@dataclass(frozen=True)
class MnemonicSets:
    opmask: PatternSet
    evex_vector: PatternSet
    fp_compare_convert: PatternSet
    bmi: PatternSet
    prefetch: PatternSet

    @classmethod
    @lru_cache(maxsize=None)
    def default(cls) -> MnemonicSets:
        return cls(
            opmask=PatternSet(_read_set("opmask.txt")),
            evex_vector=PatternSet(_read_set("evex_vector.txt")),
            fp_compare_convert=PatternSet(_read_set("fp_compare_convert.txt")),
            bmi=PatternSet(_read_set("bmi.txt")),
            prefetch=PatternSet(_read_set("prefetch.txt")),
        )


@dataclass(frozen=True)
class ClassificationEvidence:
    rule_id: str
    facts: tuple[str, ...]
    source_excerpt: str | None = None

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "facts": list(self.facts), "source_excerpt": self.source_excerpt}


@dataclass(frozen=True)
class Classification:
    label: str
    evidence: ClassificationEvidence | None
    secondary: tuple[ClassificationEvidence, ...] = ()

    def __iter__(self):
        # allows ``label, evidence = classify(...)``
        yield self.label
        yield self.evidence

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "evidence": self.evidence.to_dict() if self.evidence else None,
            "secondary": [{"label": RULE_LABEL[e.rule_id], **e.to_dict()} for e in self.secondary],
        }


@dataclass
class CorpusContext:
    """What the classifier needs to know about the whole corpus."""

    table: FrequencyTable
    compilers: dict[str, str]
    sets: MnemonicSets = field(default_factory=MnemonicSets.default)
    aggregate_names: frozenset = frozenset()

    @property
    def single_compiler(self) -> bool:
        return len(set(self.compilers.values())) <= 1


def compiler_exclusivity(token: str, table: FrequencyTable, compilers: dict[str, str]) -> frozenset:
    """Compilers whose binaries contain ``token``."""
    return frozenset(compilers.get(o.binary_id, "unknown") for o in table.occurrences.get(token, ()))


def _instruction(record: RareRecord) -> NormalizedInstruction:
    if record.instruction is not None:
        return record.instruction
    # without a vocabulary entry, fall back to splitting at the first '_'
    mnemonic, _, rest = record.token.partition("_")
    return NormalizedInstruction.build(mnemonic, tuple(rest.split("_")) if rest else ())


def _has_opmask_operand(ins: NormalizedInstruction) -> bool:
    return any(re.fullmatch(r"k[0-7]", t) for t in ins.operand_tokens)


def _rule_asm(record: RareRecord, ins, ctx) -> ClassificationEvidence | None:
    for loc in record.locations:
        if loc is None:
            continue
        if loc.excerpt and ASM_STATEMENT.search(loc.excerpt):
            return ClassificationEvidence("R-ASM", ("source line matches asm-statement pattern",), loc.excerpt)
        if loc.confidence != "unknown" and is_assembly_file(loc.file):
            return ClassificationEvidence("R-ASM", (f"mapped file {loc.file} has an assembly extension",), loc.excerpt)
    return None


def _rule_intrinsic(record: RareRecord, ins, ctx: CorpusContext) -> ClassificationEvidence | None:
    sets = ctx.sets
    facts = []
    if ins.mnemonic in sets.opmask:
        facts.append(f"mnemonic {ins.mnemonic} in opmask set")
    elif ins.mnemonic in sets.bmi:
        facts.append(f"mnemonic {ins.mnemonic} in bmi set")
    elif ins.mnemonic in sets.evex_vector:
        facts.append(f"mnemonic {ins.mnemonic} in evex vector set")
    elif ins.mnemonic.startswith("v") and _has_opmask_operand(ins):
        facts.append(f"vector mnemonic {ins.mnemonic} with an opmask operand")
    else:
        return None
    owners = compiler_exclusivity(record.token, ctx.table, ctx.compilers)
    if ctx.single_compiler:
        facts.append("single-compiler corpus: exclusivity holds vacuously")
    elif len(owners) == 1:
        facts.append(f"token exclusive to {next(iter(owners))} binaries")
    else:
        return None
    return ClassificationEvidence("R-INTRINSIC", tuple(facts))


def _rule_fp(record: RareRecord, ins, ctx: CorpusContext) -> ClassificationEvidence | None:
    if ins.mnemonic in ctx.sets.fp_compare_convert:
        return ClassificationEvidence("R-FP", (f"mnemonic {ins.mnemonic} in fp compare/convert set",))
    return None


def _struct_memory_operand(ins: NormalizedInstruction) -> str | None:
    for tok in ins.operand_tokens:
        parts = parse_memory_token(tok)
        if parts and parts["base"] and parts["disp"]:
            return tok
    return None


def _mentions_aggregate(text: str, names: frozenset) -> str | None:
    m = AGGREGATE_KEYWORD.search(text)
    if m:
        return m.group(0)
    for ident in IDENTIFIER.findall(text):
        if ident in names:
            return ident
    return None


def _rule_struct(record: RareRecord, ins, ctx: CorpusContext) -> ClassificationEvidence | None:
    mem = _struct_memory_operand(ins)
    if mem is None:
        return None
    facts = [f"memory operand {mem} has a base register and nonzero displacement"]
    sourced = [loc for loc in record.locations if loc is not None and loc.excerpt is not None]
    if not sourced:
        facts.append("no source available; operand shape only")
        return ClassificationEvidence("R-STRUCT", tuple(facts))
    for loc in sourced:
        if MEMBER_ACCESS.search(loc.excerpt):
            facts.append("mapped line contains a member access")
            return ClassificationEvidence("R-STRUCT", tuple(facts), loc.excerpt)
        hit = _mentions_aggregate(loc.context or loc.excerpt, ctx.aggregate_names)
        if hit:
            facts.append(f"enclosing function references aggregate type {hit}")
            return ClassificationEvidence("R-STRUCT", tuple(facts), loc.excerpt)
    return None


RULES = {"R-ASM": _rule_asm, "R-INTRINSIC": _rule_intrinsic, "R-FP": _rule_fp, "R-STRUCT": _rule_struct}


def classify(record: RareRecord, ctx: CorpusContext) -> Classification:
    ins = _instruction(record)
    hits = []
    for rule_id in PRIORITY:
        ev = RULES[rule_id](record, ins, ctx)
        if ev is not None:
            hits.append(ev)
    if not hits:
        return Classification("Unclassified", None)
    primary, *secondary = hits
    return Classification(RULE_LABEL[primary.rule_id], primary, tuple(secondary))


def classify_all(records, ctx: CorpusContext) -> list[RareRecord]:
    out = []
    for rec in records:
        result = classify(rec, ctx)
        out.append(replace(rec, category=result.label, evidence=result))
    return out
