"""Seeded random test programs for lockstep co-simulation.

Each program is straight-line random code with forward-only control flow, so
it always terminates, wrapped in a prologue that installs a trap handler and
arms the machine timer.  The handler skips any faulting instruction and
re-arms the timer on interrupts, which keeps illegal words, misaligned or
faulting accesses, ECALL/EBREAK and interrupts all recoverable.

Reserved registers (never written by the random body):

    x28  exit-port base        x29  handler scratch
    x30  CLINT mtimecmp        x31  data window base (ram + 2048)
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .bus import MemoryMap
from .isa import IllegalEncoding, decode
from .pipeline import CoreConfig
from .program import AsmProgram, assemble

RAM_WINDOW = 0x8040_0000 + 2048
CLINT_MTIMECMP = 0x0200_4000
EXIT_BASE = 0x1000_0000

LATENCIES = (0, 1, 3, (0, 4))
FIFO_DEPTHS = (1, 2, 4)

_ALU_R = ("add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and")
_ALU_I = ("addi", "slti", "sltiu", "xori", "ori", "andi")
_SHIFT_I = ("slli", "srli", "srai")
_BRANCHES = ("beq", "bne", "blt", "bge", "bltu", "bgeu")
_LOADS = (("lb", 1), ("lh", 2), ("lw", 4), ("lbu", 1), ("lhu", 2))
_STORES = (("sb", 1), ("sh", 2), ("sw", 4))
# CSRs the body may write freely; mtvec, mie and the counters stay intact
_SCRATCH_CSRS = ("mscratch", "mepc", "mcause", "mtval")
_READ_CSRS = ("mstatus", "misa", "mie", "mtvec", "mscratch", "mepc", "mcause", "mtval", "mip",
              "mcycle", "minstret", "mcycleh", "minstreth", "mhartid")


@dataclass
class RandomProgram:
    seed: int
    source: str
    program: AsmProgram
    config: CoreConfig


def _reg(rng: random.Random) -> str:
    return f"x{rng.randrange(28)}"


def _illegal_word(rng: random.Random) -> int:
    while True:
        w = rng.getrandbits(32)
        if isinstance(decode(w), IllegalEncoding):
            return w


def _body(rng: random.Random, n: int) -> list[str]:
    # Build as a list of blocks; each block is one or more lines that must
    # run together, and forward branches may only target block starts.
    blocks: list[list[str]] = []
    while len(blocks) < n:
        r = rng.random()
        if r < 0.30:
            blocks.append([f"{rng.choice(_ALU_R)} {_reg(rng)}, {_reg(rng)}, {_reg(rng)}"])
        elif r < 0.45:
            blocks.append([f"{rng.choice(_ALU_I)} {_reg(rng)}, {_reg(rng)}, {rng.randint(-2048, 2047)}"])
        elif r < 0.50:
            blocks.append([f"{rng.choice(_SHIFT_I)} {_reg(rng)}, {_reg(rng)}, {rng.randrange(32)}"])
        elif r < 0.54:
            op = rng.choice(("lui", "auipc"))
            blocks.append([f"{op} {_reg(rng)}, {rng.randrange(1 << 20)}"])
        elif r < 0.66:
            name, size = rng.choice(_LOADS)
            off = rng.randint(-2048, 2047) if rng.random() < 0.5 else rng.randrange(-64, 64) * size
            blocks.append([f"{name} {_reg(rng)}, {off}(x31)"])
        elif r < 0.74:
            name, size = rng.choice(_STORES)
            off = rng.randint(-2048, 2047) if rng.random() < 0.5 else rng.randrange(-64, 64) * size
            blocks.append([f"{name} {_reg(rng)}, {off}(x31)"])
        elif r < 0.75:
            # device reads (replayed into the oracle) and unmapped accesses
            k = rng.randrange(3)
            if k == 0:
                blocks.append([f"lw {_reg(rng)}, {rng.choice((0, 4))}(x30)"])
            elif k == 1:
                blocks.append([f"lw {_reg(rng)}, {rng.randrange(0, 256, 4)}(x0)"])
            else:
                blocks.append([f"sb {_reg(rng)}, {rng.randrange(0, 256)}(x0)"])
        elif r < 0.84:
            blocks.append(["@branch"])
        elif r < 0.86:
            blocks.append(["@jal"])
        elif r < 0.88:
            blocks.append(["@jalr"])
        elif r < 0.93:
            op = rng.choice(("csrrw", "csrrs", "csrrc", "csrrwi", "csrrsi", "csrrci"))
            k = rng.random()
            if k < 0.5:
                csr = rng.choice(_SCRATCH_CSRS)
            elif k < 0.9:
                csr = rng.choice(_READ_CSRS)
                if op.startswith("csrrw"):
                    op = "csrrs" + op[5:]
                src = "0" if op.endswith("i") else "x0"
                blocks.append([f"{op} {_reg(rng)}, {csr}, {src}"])
                continue
            else:
                csr = rng.choice(("misa", "mhartid", "0x7c0", "mcycle"))
            src = str(rng.randrange(32)) if op.endswith("i") else _reg(rng)
            blocks.append([f"{op} {_reg(rng)}, {csr}, {src}"])
        elif r < 0.94:
            blocks.append([rng.choice(("csrsi mstatus, 8", "csrci mstatus, 8"))])
        elif r < 0.955:
            blocks.append([rng.choice(("ecall", "ebreak"))])
        elif r < 0.965:
            blocks.append([f".word {_illegal_word(rng):#010x}"])
        elif r < 0.975:
            blocks.append(["wfi"])
        elif r < 0.99:
            blocks.append([rng.choice(("fence", "fence.i", "nop", "fence rw, w"))])
        else:
            blocks.append(["mret"])

    lines: list[str] = []
    nblocks = len(blocks)
    for i, block in enumerate(blocks):
        lines.append(f"b{i}:")
        head = block[0]
        if head == "@branch":
            t = min(nblocks, i + 1 + rng.randrange(1, 12))
            lines.append(f"{rng.choice(_BRANCHES)} {_reg(rng)}, {_reg(rng)}, b{t}")
        elif head == "@jal":
            t = min(nblocks, i + 1 + rng.randrange(1, 12))
            lines.append(f"jal {_reg(rng)}, b{t}")
        elif head == "@jalr":
            # auipc/jalr pair; a small odd adjustment sometimes lands on a
            # misaligned target, which traps and gets skipped
            link = _reg(rng)
            tmp = f"x{rng.randrange(1, 28)}"
            skip = rng.randrange(0, 6)
            adj = 2 if rng.random() < 0.1 else 0
            lines.append(f"auipc {tmp}, 0")
            lines.append(f"jalr {link}, {8 + 4 * skip + adj}({tmp})")
            lines.extend("addi x0, x0, 0" for _ in range(skip))
        elif head == "mret":
            # mret to the following label, with interrupts masked so that
            # nothing can clobber mepc in between
            tmp = f"x{rng.randrange(1, 28)}"
            lines.append("csrci mstatus, 8")
            lines.append(f"la {tmp}, b{i}_next")
            lines.append(f"csrw mepc, {tmp}")
            lines.append("mret")
            lines.append(f"b{i}_next:")
        else:
            lines.extend(block)
    lines.append(f"b{nblocks}:")
    return lines


PROLOGUE = """\
    la x29, handler
    csrw mtvec, x29
    li x31, {ram:#x}
    li x30, {clint:#x}
    li x28, {exit:#x}
{inits}
    sw x0, 4(x30)
    li x29, {first}
    sw x29, 0(x30)
    li x29, 0x80
    csrw mie, x29
    csrsi mstatus, {mie}
"""

EPILOGUE = """\
    sw x0, 4(x28)
handler:
    csrr x29, mcause
    blt x29, x0, irq
    csrr x29, mepc
    addi x29, x29, 4
    csrw mepc, x29
    mret
irq:
    lw x29, 0(x30)
    addi x29, x29, {delta}
    sw x29, 0(x30)
    mret
"""


def generate(seed: int, n: int = 1000, config_index: int | None = None) -> RandomProgram:
    """Build random program number ``seed`` with about ``n`` body instructions.

    ``config_index`` picks one of the 12 latency/FIFO combinations; by default
    it cycles with the seed so consecutive seeds sweep the whole grid.
    """
    rng = random.Random(seed)
    inits = "\n".join(f"    li x{r}, {rng.getrandbits(32):#x}" for r in range(1, 28) if rng.random() < 0.7)
    src = PROLOGUE.format(ram=RAM_WINDOW, clint=CLINT_MTIMECMP, exit=EXIT_BASE, inits=inits,
                          first=rng.randint(50, 800), mie=rng.choice((0, 8)))
    src += "\n".join("    " + ln if not ln.endswith(":") else ln for ln in _body(rng, n))
    src += "\n" + EPILOGUE.format(delta=rng.randint(150, 600))

    idx = seed if config_index is None else config_index
    lat = LATENCIES[idx % len(LATENCIES)]
    depth = FIFO_DEPTHS[(idx // len(LATENCIES)) % len(FIFO_DEPTHS)]
    # a couple of injected bus errors inside the data window
    errors = frozenset(RAM_WINDOW + rng.randrange(-2048, 2048) for _ in range(rng.randrange(3)))
    config = CoreConfig(fifo_depth=depth, misaligned_trap=rng.random() < 0.5,
                        imem_latency=lat, dmem_latency=lat if rng.random() < 0.5 else LATENCIES[rng.randrange(4)],
                        memory_map=MemoryMap.default(), error_addresses=errors, seed=seed)
    return RandomProgram(seed, src, assemble(src), config)
