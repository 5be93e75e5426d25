"""Address-to-source mapping through DWARF line tables.

:class:`DwarfResolver` reads the line table and the subprogram / inlined
subroutine tree of one ELF file with pyelftools.  :class:`Addr2lineResolver`
shells out to an ``addr2line``-compatible tool instead; both return
:class:`SourceLocation` values and can be handed to :func:`enrich`.
"""

from __future__ import annotations

import bisect
import os
import posixpath
import re
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path

from elftools.elf.elffile import ELFFile

from .errors import AddressOutOfRange, NoDebugInfo

CONFIDENCES = ("exact", "inlined", "approximate", "unknown")
ASSEMBLY_SUFFIXES = (".s", ".S", ".asm")


@dataclass(frozen=True)
class InlineFrame:
    function: str
    call_file: str | None = None
    call_line: int | None = None


@dataclass(frozen=True)
class SourceLocation:
    file: str
    line: int
    function: str
    confidence: str = "exact"
    inline_chain: tuple[InlineFrame, ...] = ()
    decl_line: int | None = None
    excerpt: str | None = None
    context: str | None = None

    def __post_init__(self):
        if self.confidence not in CONFIDENCES:
            raise ValueError(f"bad confidence {self.confidence!r}")
        if self.confidence != "unknown" and self.line < 1:
            raise ValueError("line must be >= 1 unless confidence is unknown")

    @classmethod
    def unknown(cls, function: str = "??") -> SourceLocation:
        return cls("??", 0, function, "unknown")


def _text(value) -> str:
    return value.decode("utf-8", "replace") if isinstance(value, bytes) else str(value)


@dataclass(frozen=True)
class _Row:
    address: int
    file: str
    line: int


@dataclass
class _Sequence:
    start: int
    end: int
    addresses: list[int]
    rows: list[_Row]


@dataclass(frozen=True)
class _Scope:
    lo: int
    hi: int
    depth: int
    name: str
    inlined: bool
    decl_line: int | None
    call_file: str | None
    call_line: int | None
    parents: tuple[int, ...]


class DwarfResolver:
    """Resolve addresses of one ELF file via its embedded DWARF.

    ``strip_prefix`` removes a leading path prefix from reported files.
    With ``lenient`` set, addresses outside every line-table sequence map to
    an unknown-confidence location instead of raising.
    """

    def __init__(self, path, strip_prefix: str | None = None, lenient: bool = False):
        self.path = str(path)
        self.strip_prefix = strip_prefix
        self.lenient = lenient
        with open(self.path, "rb") as fh:
            elf = ELFFile(fh)
            if not elf.has_dwarf_info() or elf.get_section_by_name(".debug_line") is None:
                raise NoDebugInfo(self.path)
            dwarf = elf.get_dwarf_info()
            self._sequences = self._read_line_tables(dwarf)
            self._scopes, self.aggregate_names = self._read_scopes(dwarf)
        self._starts = [s.start for s in self._sequences]
        self._scopes.sort(key=lambda s: (s.lo, -s.hi))

    # -- parsing ---------------------------------------------------------

    def _file_name(self, lineprog, cu, index: int) -> str:
        version = lineprog.header["version"]
        entries = lineprog["file_entry"]
        entry = entries[index] if version >= 5 else entries[index - 1]
        name = _text(entry.name)
        dirs = lineprog["include_directory"]
        dir_index = entry.dir_index
        if version >= 5:
            directory = _text(dirs[dir_index]) if dir_index < len(dirs) else ""
            is_comp_dir = dir_index == 0
        else:
            directory = _text(dirs[dir_index - 1]) if dir_index > 0 else ""
            is_comp_dir = dir_index == 0
        comp_dir = cu.get_top_DIE().attributes.get("DW_AT_comp_dir")
        if comp_dir is not None and directory == _text(comp_dir.value):
            is_comp_dir = True
        if posixpath.isabs(name) or is_comp_dir or not directory:
            path = name
        else:
            path = posixpath.join(directory, name)
        if self.strip_prefix and path.startswith(self.strip_prefix):
            path = path[len(self.strip_prefix):].lstrip("/")
        return path

    def _read_line_tables(self, dwarf) -> list[_Sequence]:
        sequences = []
        for cu in dwarf.iter_CUs():
            lineprog = dwarf.line_program_for_CU(cu)
            if lineprog is None:
                continue
            names: dict[int, str] = {}
            rows: list[_Row] = []
            for entry in lineprog.get_entries():
                state = entry.state
                if state is None:
                    continue
                if state.end_sequence:
                    if rows:
                        sequences.append(_Sequence(rows[0].address, state.address, [r.address for r in rows], rows))
                    rows = []
                    continue
                if state.file not in names:
                    names[state.file] = self._file_name(lineprog, cu, state.file)
                row = _Row(state.address, names[state.file], state.line)
                # several rows at one address: the last one wins, as in addr2line
                if rows and rows[-1].address == row.address:
                    rows[-1] = row
                else:
                    rows.append(row)
        sequences.sort(key=lambda s: s.start)
        return sequences

    def _ranges(self, dwarf, die) -> list[tuple[int, int]]:
        attrs = die.attributes
        if "DW_AT_low_pc" in attrs and "DW_AT_high_pc" in attrs:
            lo = attrs["DW_AT_low_pc"].value
            hi_attr = attrs["DW_AT_high_pc"]
            hi = hi_attr.value if hi_attr.form == "DW_FORM_addr" else lo + hi_attr.value
            return [(lo, hi)]
        if "DW_AT_ranges" in attrs:
            rl = dwarf.range_lists()
            if rl is None:
                return []
            top = die.cu.get_top_DIE().attributes.get("DW_AT_low_pc")
            base = top.value if top is not None else 0
            out = []
            for r in rl.get_range_list_at_offset(attrs["DW_AT_ranges"].value, cu=die.cu):
                if hasattr(r, "base_address"):
                    base = r.base_address
                    continue
                if r.is_absolute:
                    out.append((r.begin_offset, r.end_offset))
                else:
                    out.append((base + r.begin_offset, base + r.end_offset))
            return out
        return []

    @staticmethod
    def _origin(die):
        seen = 0
        while seen < 8:
            attrs = die.attributes
            if "DW_AT_name" in attrs or not ({"DW_AT_abstract_origin", "DW_AT_specification"} & attrs.keys()):
                return die
            key = "DW_AT_abstract_origin" if "DW_AT_abstract_origin" in attrs else "DW_AT_specification"
            die = die.get_DIE_from_attribute(key)
            seen += 1
        return die

    def _read_scopes(self, dwarf) -> tuple[list[_Scope], frozenset]:
        scopes: list[_Scope] = []
        aggregates: set[str] = set()
        for cu in dwarf.iter_CUs():
            lineprog = dwarf.line_program_for_CU(cu)
            stack = [(cu.get_top_DIE(), 0, ())]
            while stack:
                die, depth, parents = stack.pop()
                tag = die.tag
                child_parents = parents
                if tag in ("DW_TAG_structure_type", "DW_TAG_union_type", "DW_TAG_class_type"):
                    if "DW_AT_name" in die.attributes:
                        aggregates.add(_text(die.attributes["DW_AT_name"].value))
                elif tag == "DW_TAG_typedef" and "DW_AT_name" in die.attributes and "DW_AT_type" in die.attributes:
                    target = die.get_DIE_from_attribute("DW_AT_type")
                    if target.tag in ("DW_TAG_structure_type", "DW_TAG_union_type", "DW_TAG_class_type"):
                        aggregates.add(_text(die.attributes["DW_AT_name"].value))
                elif tag in ("DW_TAG_subprogram", "DW_TAG_inlined_subroutine"):
                    origin = self._origin(die)
                    name_attr = origin.attributes.get("DW_AT_name")
                    name = _text(name_attr.value) if name_attr else "??"
                    decl = origin.attributes.get("DW_AT_decl_line")
                    call_file = call_line = None
                    if tag == "DW_TAG_inlined_subroutine" and lineprog is not None:
                        cf = die.attributes.get("DW_AT_call_file")
                        cl = die.attributes.get("DW_AT_call_line")
                        try:
                            call_file = self._file_name(lineprog, cu, cf.value) if cf else None
                        except IndexError:
                            call_file = None
                        call_line = cl.value if cl else None
                    idx = len(scopes)
                    for lo, hi in self._ranges(dwarf, die):
                        if hi > lo:
                            scopes.append(_Scope(lo, hi, depth, name, tag == "DW_TAG_inlined_subroutine",
                                                 decl.value if decl else None, call_file, call_line, parents))
                    if len(scopes) > idx:
                        child_parents = parents + (idx,)
                    depth += 1
                for child in die.iter_children():
                    stack.append((child, depth, child_parents))
        return scopes, frozenset(aggregates)

    # -- queries ---------------------------------------------------------

    def _row_for(self, address: int) -> tuple[_Row | None, bool]:
        i = bisect.bisect_right(self._starts, address) - 1
        # sequences may nest in pathological inputs; scan back a little
        for j in range(i, max(i - 4, -1), -1):
            seq = self._sequences[j]
            if seq.start <= address < seq.end:
                k = bisect.bisect_right(seq.addresses, address) - 1
                exact = True
                while k >= 0 and seq.rows[k].line == 0:
                    k -= 1
                    exact = False
                return (seq.rows[k] if k >= 0 else None), exact
        return None, False

    def _scope_chain(self, address: int) -> list[_Scope]:
        hits = [s for s in self._scopes if s.lo <= address < s.hi]
        hits.sort(key=lambda s: (s.depth, s.lo))
        return hits

    def map_address(self, address: int) -> SourceLocation:
        row, exact = self._row_for(address)
        chain = self._scope_chain(address)
        if row is None:
            if self.lenient:
                return SourceLocation.unknown(chain[-1].name if chain else "??")
            raise AddressOutOfRange(address)
        innermost = chain[-1] if chain else None
        frames = tuple(InlineFrame(s.name, s.call_file, s.call_line) for s in chain)
        if not exact:
            confidence = "approximate"
        elif innermost is not None and innermost.inlined:
            confidence = "inlined"
        else:
            confidence = "exact"
        return SourceLocation(
            file=row.file,
            line=row.line,
            function=innermost.name if innermost else "??",
            confidence=confidence,
            inline_chain=frames,
            decl_line=innermost.decl_line if innermost else None,
        )


_ADDR2LINE_LOC = re.compile(r"^(?P<file>.*?):(?P<line>\d+|\?)(?:\s+\(discriminator \d+\))?$")


class Addr2lineResolver:
    """Adapter over an external ``addr2line -f -e <binary> <addr>`` tool.

    The executable comes from ``RARESCOPE_ADDR2LINE`` when set.
    """

    def __init__(self, path, executable: str | None = None, lenient: bool = False):
        self.path = str(path)
        self.executable = executable or os.environ.get("RARESCOPE_ADDR2LINE", "addr2line")
        self.lenient = lenient

    def map_many(self, addresses) -> list[SourceLocation]:
        addresses = list(addresses)
        if not addresses:
            return []
        proc = subprocess.run(
            [self.executable, "-f", "-e", self.path] + [f"{a:#x}" for a in addresses],
            capture_output=True, text=True, check=True,
        )
        lines = proc.stdout.splitlines()
        out = []
        for i, address in enumerate(addresses):
            func, loc = lines[2 * i], lines[2 * i + 1]
            out.append(self._parse(address, func, loc))
        return out

    def _parse(self, address: int, func: str, loc: str) -> SourceLocation:
        m = _ADDR2LINE_LOC.match(loc.strip())
        if not m or m.group("file") == "??" or m.group("line") in ("?", "0"):
            if self.lenient:
                return SourceLocation.unknown(func.strip() or "??")
            raise AddressOutOfRange(address)
        return SourceLocation(m.group("file"), int(m.group("line")), func.strip(), "exact")

    def map_address(self, address: int) -> SourceLocation:
        return self.map_many([address])[0]


def map_address(binary, address: int, lenient: bool = False) -> SourceLocation:
    """Resolve one address of ``binary`` (a :class:`BinaryMeta` or a path)."""
    has_debug = getattr(binary, "has_debug_info", True)
    path = getattr(binary, "path", binary)
    if not has_debug:
        raise NoDebugInfo(str(path))
    return DwarfResolver(path, lenient=lenient).map_address(address)


def read_excerpt(location: SourceLocation, source_root=None) -> SourceLocation:
    """Attach the mapped source line and its function context when the file is readable.

    ``context`` spans from the function's declaration line to the mapped line.
    Missing files leave the location unchanged.
    """
    if location.confidence == "unknown" or location.excerpt is not None:
        return location
    candidates = [Path(location.file)]
    if source_root is not None:
        candidates.insert(0, Path(source_root) / location.file)
        candidates.append(Path(source_root) / Path(location.file).name)
    for candidate in candidates:
        try:
            lines = candidate.read_text(encoding="utf-8", errors="replace").splitlines()
        except OSError:
            continue
        if location.line > len(lines):
            return location
        excerpt = lines[location.line - 1].strip()
        start = location.decl_line if location.decl_line and location.decl_line <= location.line else location.line
        context = "\n".join(lines[start - 1:location.line])
        return replace(location, excerpt=excerpt, context=context)
    return location


def enrich(records, resolvers, source_root=None, with_excerpts: bool = True):
    """Attach a :class:`SourceLocation` to every occurrence of every record.

    ``resolvers`` maps ``binary_id`` to a resolver, or to ``None`` for a
    binary without debug info (its occurrences become unknown-confidence).
    Records that already carry one location per occurrence are returned
    unchanged, so applying ``enrich`` twice changes nothing.
    """
    out = []
    for rec in records:
        if len(rec.locations) == len(rec.occurrences):
            out.append(rec)
            continue
        locations = []
        for occ in rec.occurrences:
            resolver = resolvers.get(occ.binary_id) if isinstance(resolvers, dict) else resolvers
            if resolver is None:
                loc = SourceLocation.unknown(occ.function_name)
            else:
                try:
                    loc = resolver.map_address(occ.address)
                except (AddressOutOfRange, NoDebugInfo):
                    loc = SourceLocation.unknown(occ.function_name)
            if with_excerpts:
                loc = read_excerpt(loc, source_root)
            locations.append(loc)
        out.append(replace(rec, locations=tuple(locations)))
    return out


def is_assembly_file(path: str) -> bool:
    return path.endswith(ASSEMBLY_SUFFIXES)
