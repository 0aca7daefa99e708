"""Timing-free instruction-set interpreter: the golden model for the pipeline.

One :func:`step` fetches, decodes and executes one instruction against an
:class:`~noxsim.state.ArchState` and a :class:`~noxsim.bus.Bus`, using the
bus's zero-latency functional access.  Every instruction that reaches the
end of a step counts as retired in ``minstret``, including the ones that
raise a synchronous exception; interrupt entries do not.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .bus import MASK64, Bus, Port, aligned_pieces
from .isa import (BRANCHES, CSR_IMM_MNEMONICS, CSR_MNEMONICS, LOADS, MASK32, STORES,
                  DecodedInstruction, IllegalEncoding, Mnemonic, decode, sext)
from .state import (CYCLE_CSRS, INSTRET_CSRS, MTIP, ArchState, Cause, Trap, TrapCause, csr_access,
                    csr_writes, pending_interrupt, trap_enter, trap_return, wake_pending)

M = Mnemonic

LOAD_SIZE = {M.LB: 1, M.LBU: 1, M.LH: 2, M.LHU: 2, M.LW: 4}
STORE_SIZE = {M.SB: 1, M.SH: 2, M.SW: 4}


def alu_eval(m: Mnemonic, a: int, b: int) -> int:
    """Evaluate a register/immediate computational op on 32-bit operands."""
    if m is M.ADD or m is M.ADDI:
        return (a + b) & MASK32
    if m is M.SUB:
        return (a - b) & MASK32
    if m is M.AND or m is M.ANDI:
        return a & b & MASK32
    if m is M.OR or m is M.ORI:
        return (a | b) & MASK32
    if m is M.XOR or m is M.XORI:
        return (a ^ b) & MASK32
    if m is M.SLL or m is M.SLLI:
        return (a << (b & 31)) & MASK32
    if m is M.SRL or m is M.SRLI:
        return (a & MASK32) >> (b & 31)
    if m is M.SRA or m is M.SRAI:
        return (sext(a, 32) >> (b & 31)) & MASK32
    if m is M.SLT or m is M.SLTI:
        return int(sext(a, 32) < sext(b, 32))
    if m is M.SLTU or m is M.SLTIU:
        return int((a & MASK32) < (b & MASK32))
    raise ValueError(f"{m} is not a computational op")


def branch_taken(m: Mnemonic, a: int, b: int) -> bool:
    if m is M.BEQ:
        return a == b
    if m is M.BNE:
        return a != b
    if m is M.BLT:
        return sext(a, 32) < sext(b, 32)
    if m is M.BGE:
        return sext(a, 32) >= sext(b, 32)
    if m is M.BLTU:
        return a < b
    if m is M.BGEU:
        return a >= b
    raise ValueError(f"{m} is not a branch")


def load_extend(m: Mnemonic, value: int) -> int:
    if m is M.LB:
        return sext(value, 8) & MASK32
    if m is M.LH:
        return sext(value, 16) & MASK32
    return value


ALU_REG = frozenset({M.ADD, M.SUB, M.SLL, M.SLT, M.SLTU, M.XOR, M.SRL, M.SRA, M.OR, M.AND})
ALU_IMM = frozenset({M.ADDI, M.SLTI, M.SLTIU, M.XORI, M.ORI, M.ANDI, M.SLLI, M.SRLI, M.SRAI})
NOPS = frozenset({M.FENCE, M.FENCE_I})


@dataclass(slots=True)
class StepResult:
    pc: int
    raw: int | None
    retired: DecodedInstruction | IllegalEncoding | None
    next_pc: int
    writeback: tuple[int, int] | None = None
    trap: TrapCause | None = None
    mem_effect: tuple[int, int, str, int] | None = None

    @property
    def is_interrupt(self) -> bool:
        return self.trap is not None and self.trap.is_interrupt


def mem_load(bus: Bus, address: int, size: int) -> int | None:
    """Functional load through aligned pieces; ``None`` on a bus error."""
    value = 0
    for a, s in aligned_pieces(address, size):
        resp = bus.read(a, s)
        if not resp.ok:
            return None
        value |= resp.rdata << (8 * (a - address))
    return value


def mem_store(bus: Bus, address: int, size: int, value: int) -> bool:
    """Functional store through aligned pieces, stopping at the first error."""
    for a, s in aligned_pieces(address, size):
        if not bus.write(a, s, value >> (8 * (a - address))).ok:
            return False
    return True


def step(state: ArchState, bus: Bus, *, misaligned_trap: bool = False,
         load_value: int | None = None) -> StepResult | None:
    """Execute one instruction (or take one interrupt).

    Returns ``None`` while the hart sleeps in WFI.  ``load_value``, when given,
    replaces the data a load would read; the lockstep harness uses it to
    replay device reads observed by the pipeline.
    """
    if state.waiting_for_interrupt:
        if not wake_pending(state):
            return None
        state.waiting_for_interrupt = False
    pc = state.pc
    irq = pending_interrupt(state)
    if irq is not None:
        trap_enter(state, irq, pc)
        return StepResult(pc, None, None, state.pc, trap=irq)

    csrs = state.csrs
    resp = bus.read(pc, 4, Port.INSTRUCTION)
    raw = resp.rdata if resp.ok else None
    instr = decode(raw) if raw is not None else None
    try:
        if instr is None:
            raise Trap(TrapCause.exception(Cause.INSTRUCTION_ACCESS_FAULT, pc))
        if isinstance(instr, IllegalEncoding):
            raise Trap(TrapCause.exception(Cause.ILLEGAL_INSTRUCTION, raw))
        result = _execute(state, bus, pc, instr, misaligned_trap, load_value)
    except Trap as t:
        trap_enter(state, t.cause, pc)
        csrs.minstret = (csrs.minstret + 1) & MASK64
        return StepResult(pc, raw, instr, state.pc, trap=t.cause)
    # a CSR write to minstret replaces the instruction's own increment
    if not (instr.csr_addr in INSTRET_CSRS and instr.mnemonic in CSR_MNEMONICS and csr_writes(instr)):
        csrs.minstret = (csrs.minstret + 1) & MASK64
    return result


def _execute(state: ArchState, bus: Bus, pc: int, instr: DecodedInstruction,
             misaligned_trap: bool, load_value: int | None) -> StepResult:
    m = instr.mnemonic
    x = state.regs
    rd = instr.rd
    next_pc = (pc + 4) & MASK32
    value = None
    mem = None
    if m in ALU_REG:
        value = alu_eval(m, x[instr.rs1], x[instr.rs2])
    elif m in ALU_IMM:
        value = alu_eval(m, x[instr.rs1], instr.imm & MASK32)
    elif m is M.LUI:
        value = instr.imm & MASK32
    elif m is M.AUIPC:
        value = (pc + instr.imm) & MASK32
    elif m is M.JAL or m is M.JALR:
        if m is M.JAL:
            target = (pc + instr.imm) & MASK32
        else:
            target = (x[instr.rs1] + instr.imm) & MASK32 & ~1
        if target & 3:
            raise Trap(TrapCause.exception(Cause.INSTRUCTION_ADDRESS_MISALIGNED, target))
        value = next_pc
        next_pc = target
    elif m in BRANCHES:
        if branch_taken(m, x[instr.rs1], x[instr.rs2]):
            target = (pc + instr.imm) & MASK32
            if target & 3:
                raise Trap(TrapCause.exception(Cause.INSTRUCTION_ADDRESS_MISALIGNED, target))
            next_pc = target
    elif m in LOADS:
        addr = (x[instr.rs1] + instr.imm) & MASK32
        size = LOAD_SIZE[m]
        if addr % size and misaligned_trap:
            raise Trap(TrapCause.exception(Cause.LOAD_ADDRESS_MISALIGNED, addr))
        data = load_value if load_value is not None else mem_load(bus, addr, size)
        if data is None:
            raise Trap(TrapCause.exception(Cause.LOAD_ACCESS_FAULT, addr))
        data &= (1 << (8 * size)) - 1
        value = load_extend(m, data)
        mem = (addr, size, "read", data)
    elif m in STORES:
        addr = (x[instr.rs1] + instr.imm) & MASK32
        size = STORE_SIZE[m]
        if addr % size and misaligned_trap:
            raise Trap(TrapCause.exception(Cause.STORE_ADDRESS_MISALIGNED, addr))
        data = x[instr.rs2] & ((1 << (8 * size)) - 1)
        if not mem_store(bus, addr, size, data):
            raise Trap(TrapCause.exception(Cause.STORE_ACCESS_FAULT, addr))
        mem = (addr, size, "write", data)
    elif m in CSR_MNEMONICS:
        operand = instr.imm if m in CSR_IMM_MNEMONICS else x[instr.rs1]
        value = csr_access(state, m, instr.csr_addr, operand, rd, instr.rs1, instr.raw)
    elif m is M.ECALL:
        raise Trap(TrapCause.exception(Cause.ECALL_FROM_M))
    elif m is M.EBREAK:
        raise Trap(TrapCause.exception(Cause.BREAKPOINT))
    elif m is M.MRET:
        trap_return(state)
        next_pc = state.pc
    elif m is M.WFI:
        state.waiting_for_interrupt = True
    elif m in NOPS:
        pass
    else:  # pragma: no cover - decode only yields the mnemonics above
        raise AssertionError(m)

    wb = None
    if value is not None and rd:
        x[rd] = value
        wb = (rd, value)
    state.pc = next_pc
    return StepResult(pc, instr.raw, instr, next_pc, wb, None, mem)


def _writes_cycle(instr) -> bool:
    return (isinstance(instr, DecodedInstruction) and instr.csr_addr in CYCLE_CSRS
            and instr.mnemonic in CSR_MNEMONICS and csr_writes(instr))


class StopReason(str, enum.Enum):
    MAX_STEPS = "max-steps"
    ECALL = "ecall"
    EBREAK = "ebreak"
    PC = "pc"
    EXIT = "exit"
    WFI_DEADLOCK = "wfi-deadlock"


@dataclass
class RunResult:
    state: ArchState
    trace: list[StepResult] = field(default_factory=list)
    reason: StopReason = StopReason.MAX_STEPS

    @property
    def retired(self) -> int:
        return sum(1 for r in self.trace if not r.is_interrupt)


def run_until(state: ArchState, bus: Bus, *, max_steps: int = 1_000_000,
              ecall: bool = False, ebreak: bool = False, pc: int | None = None,
              exit_port: bool = True, misaligned_trap: bool = False) -> RunResult:
    """Step until a stop condition holds after a retirement.

    Time advances one tick of the bus timer per step.  A hart sleeping in WFI
    skips ahead to the timer compare value when the timer interrupt is
    enabled, and stops with ``WFI_DEADLOCK`` when nothing can wake it.
    """
    out = RunResult(state)
    trace = out.trace
    csrs = state.csrs
    while len(trace) < max_steps:
        csrs.mip = bus.interrupt_lines()
        if state.waiting_for_interrupt and not wake_pending(state):
            if csrs.mie & MTIP and bus.mtimecmp != MASK64 and bus.mtimecmp > bus.mtime:
                delta = bus.mtimecmp - bus.mtime
                bus.mtime = bus.mtimecmp
                csrs.mcycle = (csrs.mcycle + delta) & MASK64
                continue
            out.reason = StopReason.WFI_DEADLOCK
            return out
        res = step(state, bus, misaligned_trap=misaligned_trap)
        bus.mtime = (bus.mtime + 1) & MASK64
        if not (res is not None and res.trap is None and _writes_cycle(res.retired)):
            csrs.mcycle = (csrs.mcycle + 1) & MASK64
        if res is None:
            continue
        trace.append(res)
        r = res.retired
        if exit_port and bus.exit_code is not None:
            out.reason = StopReason.EXIT
            return out
        if res.trap is not None and isinstance(r, DecodedInstruction):
            if ebreak and r.mnemonic is M.EBREAK:
                out.reason = StopReason.EBREAK
                return out
            if ecall and r.mnemonic is M.ECALL:
                out.reason = StopReason.ECALL
                return out
        if pc is not None and res.next_pc == pc:
            out.reason = StopReason.PC
            return out
    out.reason = StopReason.MAX_STEPS
    return out
