"""Lockstep co-simulation of the pipeline against the reference interpreter.

After every event the pipeline emits, the interpreter takes one step and the
two architectural states are compared, along with the memory access each
side performed (address, size, direction and value).  Asynchronous inputs are imposed on
the interpreter the way the pipeline saw them: the pipeline's sampled ``mip``
and ``mcycle`` are copied in before each step, and loads from device regions
replay the value the pipeline read.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from operator import attrgetter

from .bus import MMIO_KINDS, Bus
from .iss import StepResult, step
from .isa import disassemble
from .pipeline import Core, CoreConfig, RetireEvent
from .program import LoadedImage, load_image
from .state import ArchState, reset

# mcycle is timing-dependent; mip is an input the harness imposes.
COMPARED_CSRS = ("mstatus", "mie", "mtvec", "mepc", "mcause", "mtval", "mscratch",
                 "mhartid", "misa", "minstret")
_csr_tuple = attrgetter(*COMPARED_CSRS)


@dataclass
class Divergence:
    index: int
    cycle: int
    pc: int
    differences: dict[str, tuple]
    pipeline_trace: list[str] = field(default_factory=list)
    oracle_trace: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        lines = [f"divergence at retirement #{self.index} (cycle {self.cycle}, pc {self.pc:#010x})"]
        for name, (p, o) in self.differences.items():
            lines.append(f"  {name}: pipeline={_fmt(p)} oracle={_fmt(o)}")
        lines.append("  pipeline trace:")
        lines.extend("    " + t for t in self.pipeline_trace)
        lines.append("  oracle trace:")
        lines.extend("    " + t for t in self.oracle_trace)
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, tuple) and len(v) == 4:
            return f"{v[2]} {v[1]}B @{v[0]:#010x} = {v[3]:#x}"
        return str(v)
    return f"{v:#010x}"


@dataclass
class LockstepReport:
    ok: bool
    retirements: int
    cycles: int
    reason: str
    divergence: Divergence | None = None

    def __str__(self) -> str:
        if self.ok:
            return f"lockstep ok: {self.retirements} retirements, {self.cycles} cycles ({self.reason})"
        return str(self.divergence)


def _oracle_line(res: StepResult | None) -> str:
    if res is None:
        return "<asleep>"
    text = "<interrupt>" if res.is_interrupt else (disassemble(res.retired) if res.retired is not None else "<fetch fault>")
    line = f"{res.pc:08x} {text}"
    if res.writeback:
        line += f" x{res.writeback[0]}={res.writeback[1]:08x}"
    return line


def _compare(core: Core, ev: RetireEvent, oracle: ArchState, res: StepResult | None) -> dict:
    diffs = {}
    if res is None:
        diffs["oracle"] = ("retired", "asleep in wfi")
        return diffs
    if res.pc != ev.pc:
        diffs["pc"] = (ev.pc, res.pc)
    if ev.is_interrupt != res.is_interrupt:
        diffs["interrupt"] = (ev.is_interrupt, res.is_interrupt)
    if ev.mem_effect != res.mem_effect:
        diffs["mem"] = (ev.mem_effect, res.mem_effect)
    if ev.next_pc != oracle.pc:
        diffs["next_pc"] = (ev.next_pc, oracle.pc)
    px = core.state.regs.x
    ox = oracle.regs.x
    if px != ox:
        for i in range(32):
            if px[i] != ox[i]:
                diffs[f"x{i}"] = (px[i], ox[i])
    pcsr, ocsr = _csr_tuple(core.state.csrs), _csr_tuple(oracle.csrs)
    if pcsr != ocsr:
        for name, p, o in zip(COMPARED_CSRS, pcsr, ocsr):
            if p != o:
                diffs[name] = (p, o)
    return diffs


def lockstep_check(core: Core, oracle: ArchState, oracle_bus: Bus, *, max_cycles: int = 1_000_000,
                   history: int = 8) -> LockstepReport:
    """Run ``core`` to completion, checking every event against ``oracle``.

    Both sides must start from the same memory image and reset state.  Stops
    at the first divergence, at an exit-port write, at an EBREAK with no
    handler installed, or after ``max_cycles``.
    """
    misaligned_trap = core.config.misaligned_trap
    mmio = [r for r in oracle_bus.map if r.kind in MMIO_KINDS]
    oracle_bus.console = None
    p_hist: deque = deque(maxlen=history)
    o_hist: deque = deque(maxlen=history)
    count = 0
    state = {"div": None}

    def check(ev: RetireEvent) -> None:
        nonlocal count
        if state["div"] is not None:
            return
        oracle.csrs.mip = ev.mip
        oracle.csrs.mcycle = ev.mcycle
        load_value = None
        eff = ev.mem_effect
        if eff is not None and eff[2] == "read" and any(r.contains(eff[0], eff[1]) for r in mmio):
            load_value = eff[3]
        res = step(oracle, oracle_bus, misaligned_trap=misaligned_trap, load_value=load_value)
        p_hist.append(ev)
        o_hist.append(res)
        diffs = _compare(core, ev, oracle, res)
        if diffs:
            state["div"] = Divergence(count, ev.cycle, ev.pc, diffs, [e.trace_line() for e in p_hist],
                                      [_oracle_line(r) for r in o_hist])
        count += 1

    bus = core.bus
    reason = "max-cycles"
    while core.cycle < max_cycles and state["div"] is None:
        stop = None
        for ev in core.tick():
            check(ev)
            if bus.exit_code is not None:
                stop = "exit"
            elif (ev.trap is not None and not ev.trap.is_interrupt and ev.trap.code == 3
                  and core.state.csrs.mtvec == 0):
                stop = "ebreak"
        if stop is not None:
            reason = stop
            break
    div = state["div"]
    return LockstepReport(div is None, count, core.cycle, "divergence" if div else reason, div)


def lockstep(image: LoadedImage, config: CoreConfig | None = None, *, max_cycles: int = 1_000_000,
             bypass_fault: bool = False) -> LockstepReport:
    """Build a pipeline and an oracle from ``image`` and run them in lockstep."""
    config = config or CoreConfig()
    core = Core(config)
    load_image(core.bus, image)
    core.reset(image.entry)
    core.bypass_fault = bypass_fault
    oracle_bus = config.make_bus()
    load_image(oracle_bus, image)
    oracle = ArchState()
    reset(oracle, image.entry)
    return lockstep_check(core, oracle, oracle_bus, max_cycles=max_cycles)
