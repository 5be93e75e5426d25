"""rarescope: long-tail analysis of normalized x86-64 instructions."""

__version__ = "0.1.0"

from .decode import BinaryMeta, FunctionRecord, RawInstruction, RawOperand, decode_bytes, load_binary, parse_textual_disassembly
from .normalize import NormalizationConfig, NormalizedInstruction, normalize_instruction, normalize_operand, normalize_register
from .stats import (
    FrequencyTable,
    Occurrence,
    RareRecord,
    count,
    head_coverage,
    merge,
    rank_distribution,
    rare,
    subset_series,
)
from .fingerprint import BinaryFingerprint, fingerprint, match, similarity

__all__ = [
    "BinaryFingerprint",
    "BinaryMeta",
    "FrequencyTable",
    "FunctionRecord",
    "NormalizationConfig",
    "NormalizedInstruction",
    "Occurrence",
    "RareRecord",
    "RawInstruction",
    "RawOperand",
    "count",
    "decode_bytes",
    "fingerprint",
    "head_coverage",
    "load_binary",
    "match",
    "merge",
    "normalize_instruction",
    "normalize_operand",
    "normalize_register",
    "parse_textual_disassembly",
    "rank_distribution",
    "rare",
    "similarity",
    "subset_series",
]
