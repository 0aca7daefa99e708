import shutil
import struct
import subprocess
from pathlib import Path

import pytest

from noxsim import ArchState, Bus, Core, CoreConfig, assemble, load_image
from noxsim.iss import run_until
from noxsim.state import reset

ORIGIN = 0x8000_0000


def build_core(source: str, **cfg) -> Core:
    img = assemble(source, ORIGIN).image()
    core = Core(CoreConfig(**cfg))
    load_image(core.bus, img)
    core.reset(img.entry)
    return core


def run_core(source: str, max_cycles: int = 100_000, **cfg) -> Core:
    core = build_core(source, **cfg)
    core.outcome = core.run(max_cycles, ebreak=True)
    return core


def run_iss(source: str, max_steps: int = 100_000, **kw):
    img = assemble(source, ORIGIN).image()
    bus = Bus()
    load_image(bus, img)
    state = reset(ArchState(), img.entry)
    return run_until(state, bus, max_steps=max_steps, **kw), bus


@pytest.fixture
def core_runner():
    return run_core


def make_elf(segments, entry, symbols=None, *, elf_class=1, machine=243, etype=2):
    """A minimal ELF32 executable written field by field.

    ``segments`` is a list of ``(paddr, data, memsz)``.  Symbols, if given,
    go into a .symtab/.strtab pair.
    """
    ehsize, phentsize, shentsize = 52, 32, 40
    phoff = ehsize
    body = bytearray()
    data_off = phoff + phentsize * len(segments)
    phdrs = b""
    for paddr, data, memsz in segments:
        off = data_off + len(body)
        phdrs += struct.pack("<8I", 1, off, paddr, paddr, len(data), memsz, 7, 4)
        body += data
    shdrs = b""
    shnum = shoff = 0
    tail = bytearray()
    if symbols:
        strtab = b"\0"
        symtab = bytes(16)
        for name, value in symbols.items():
            symtab += struct.pack("<IIIBBH", len(strtab), value, 0, 0x10, 0, 1)
            strtab += name.encode() + b"\0"
        base = data_off + len(body)
        sym_off, str_off = base, base + len(symtab)
        tail = bytearray(symtab + strtab)
        while (base + len(tail)) % 4:
            tail += b"\0"
        shoff = base + len(tail)
        shdrs = bytes(shentsize)
        shdrs += struct.pack("<10I", 0, 2, 0, 0, sym_off, len(symtab), 2, 1, 4, 16)
        shdrs += struct.pack("<10I", 0, 3, 0, 0, str_off, len(strtab), 0, 0, 1, 0)
        shnum = 3
    ident = b"\x7fELF" + bytes([elf_class, 1, 1]) + bytes(9)
    header = ident + struct.pack("<HHIIIIIHHHHHH", etype, machine, 1, entry, phoff, shoff, 0,
                                 ehsize, phentsize, len(segments), shentsize, shnum, 0)
    return bytes(header + phdrs + body + tail + shdrs)


LATENCIES = (0, 1, 3, (0, 4))
DEPTHS = (1, 2, 4)
GRID = [(lat, depth) for depth in DEPTHS for lat in LATENCIES]


def fixture_config(fx, latency, depth, seed=0):
    return CoreConfig(fifo_depth=depth, imem_latency=latency, dmem_latency=latency, seed=seed, **fx.settings)


def run_fixture(fx, config, max_cycles=2_000_000):
    """Run a fixture on the pipeline; return (outcome, core, retire events)."""
    img = fx.assemble().image()
    core = Core(config)
    load_image(core.bus, img)
    core.reset(img.entry)
    events = []
    outcome = core.run(max_cycles, on_retire=events.append)
    return outcome, core, events


BARE_METAL = Path(__file__).resolve().parent.parent / "demos" / "bare_metal"


def riscv_clang() -> str | None:
    clang = shutil.which("clang")
    if clang is None:
        return None
    targets = subprocess.run([clang, "--print-targets"], capture_output=True, text=True).stdout
    return clang if "riscv32" in targets and shutil.which("ld.lld") else None


def build_workload(out_dir, iterations=10):
    """Compile the bare-metal C workload for rv32i and natively.

    Returns ``(elf_path, expected_console_output)``, or None without a
    RISC-V capable clang.
    """
    clang = riscv_clang()
    if clang is None:
        return None
    out_dir = Path(out_dir)
    elf = out_dir / "workload.elf"
    host = out_dir / "workload_host"
    src = [str(BARE_METAL / "crt0.S"), str(BARE_METAL / "workload.c")]
    subprocess.run([clang, "--target=riscv32", "-march=rv32i", "-mabi=ilp32", "-O2", "-ffreestanding",
                    "-fno-builtin", "-nostdlib", "-fuse-ld=lld", f"-Wl,-T,{BARE_METAL / 'link.ld'}",
                    f"-DITERATIONS={iterations}", "-o", str(elf), *src], check=True)
    subprocess.run([clang, "-DHOST", "-O2", f"-DITERATIONS={iterations}", "-o", str(host), src[1]], check=True)
    expected = subprocess.run([str(host)], capture_output=True, check=True).stdout
    return elf, expected
