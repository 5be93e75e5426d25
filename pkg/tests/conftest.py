from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
PROGRAMS = ("shapes", "prefetch", "fpcmp")
# binutils addr2line cannot read clang's default DWARF 5 forms, so clang builds use v4
BUILDS = (("gcc", "O0", ["-O0", "-g"]), ("clang", "O2", ["-O2", "-gdwarf-4"]))


def have(tool: str) -> bool:
    return shutil.which(tool) is not None


needs_gcc = pytest.mark.skipif(not have("gcc"), reason="gcc not installed")
needs_objdump = pytest.mark.skipif(not have("objdump"), reason="objdump not installed")
needs_addr2line = pytest.mark.skipif(not have("addr2line"), reason="addr2line not installed")


def compile_c(source: Path, out: Path, compiler: str = "gcc", flags=("-O0", "-g")) -> Path:
    subprocess.run([compiler, *flags, "-o", str(out), str(source)], check=True, capture_output=True)
    return out


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Six tiny binaries (3 programs x {gcc -O0, clang -O2}) plus a manifest."""
    if not have("gcc"):
        pytest.skip("gcc not installed")
    root = tmp_path_factory.mktemp("desk")
    entries = []
    for prog in PROGRAMS:
        for compiler, opt, flags in BUILDS:
            if not have(compiler):
                continue
            name = f"{prog}-{compiler}-{opt}"
            compile_c(DATA / f"{prog}.c", root / name, compiler, flags)
            entries.append({"path": name, "binary_id": name, "compiler": compiler, "opt_level": opt})
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps(entries))
    return root, manifest, entries


@pytest.fixture(scope="session")
def gcc_binary(tmp_path_factory):
    if not have("gcc"):
        pytest.skip("gcc not installed")
    root = tmp_path_factory.mktemp("one")
    return compile_c(DATA / "shapes.c", root / "shapes", "gcc", ("-O2", "-g"))


def objdump(path) -> str:
    return subprocess.run(
        ["objdump", "-d", "-M", "intel", str(path)],
        check=True, capture_output=True, text=True,
    ).stdout


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed in sorted(test_acceptance.RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f}s)")
