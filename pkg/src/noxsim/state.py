"""Architectural state: register file, machine-mode CSRs, traps and interrupts.

Both the reference interpreter and the pipeline model mutate an
:class:`ArchState` through the functions below, so trap entry/return and the
Zicsr read-modify-write rules exist in exactly one place.  The functions
update the state in place and return it; take a snapshot with
:meth:`ArchState.copy` when a value is needed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .isa import CSR_IMM_MNEMONICS, MASK32, Mnemonic

MASK64 = (1 << 64) - 1

# mstatus bits
MSTATUS_MIE = 1 << 3
MSTATUS_MPIE = 1 << 7
MSTATUS_MPP = 0b11 << 11

# mip / mie bits
MSIP = 1 << 3
MTIP = 1 << 7
MEIP = 1 << 11
IRQ_MASK = MSIP | MTIP | MEIP

MISA_RV32I = (1 << 30) | (1 << 8)


class Cause(enum.IntEnum):
    INSTRUCTION_ADDRESS_MISALIGNED = 0
    INSTRUCTION_ACCESS_FAULT = 1
    ILLEGAL_INSTRUCTION = 2
    BREAKPOINT = 3
    LOAD_ADDRESS_MISALIGNED = 4
    LOAD_ACCESS_FAULT = 5
    STORE_ADDRESS_MISALIGNED = 6
    STORE_ACCESS_FAULT = 7
    ECALL_FROM_M = 11


class Interrupt(enum.IntEnum):
    MSI = 3
    MTI = 7
    MEI = 11


@dataclass(frozen=True, slots=True)
class TrapCause:
    is_interrupt: bool
    code: int
    tval: int = 0

    @property
    def mcause(self) -> int:
        return ((1 << 31) if self.is_interrupt else 0) | self.code

    @classmethod
    def exception(cls, code: Cause | int, tval: int = 0) -> TrapCause:
        return cls(False, int(code), tval & MASK32)

    @classmethod
    def interrupt(cls, code: Interrupt | int) -> TrapCause:
        return cls(True, int(code), 0)


class Trap(Exception):
    """Carries a synchronous exception out of an execute helper."""

    def __init__(self, cause: TrapCause):
        super().__init__(cause)
        self.cause = cause


class RegisterFile:
    """32 x 32-bit integer registers; x0 is hardwired to zero."""

    __slots__ = ("x",)

    def __init__(self, values=None):
        self.x = [0] * 32 if values is None else [v & MASK32 for v in values]
        self.x[0] = 0

    def __getitem__(self, i: int) -> int:
        return self.x[i]

    def __setitem__(self, i: int, value: int) -> None:
        if i:
            self.x[i] = value & MASK32

    def read2(self, rs1: int, rs2: int) -> tuple[int, int]:
        return self.x[rs1], self.x[rs2]

    def __eq__(self, other) -> bool:
        return isinstance(other, RegisterFile) and self.x == other.x

    def __repr__(self) -> str:
        return "RegisterFile(" + ", ".join(f"x{i}={v:#x}" for i, v in enumerate(self.x) if v) + ")"


# name -> (address, writable mask); None marks read-only
CSR_MAP: dict[str, tuple[int, int | None]] = {
    "mstatus": (0x300, MSTATUS_MIE | MSTATUS_MPIE),
    "misa": (0x301, None),
    "mie": (0x304, IRQ_MASK),
    "mtvec": (0x305, 0xFFFF_FFFC),
    "mscratch": (0x340, MASK32),
    "mepc": (0x341, 0xFFFF_FFFC),
    "mcause": (0x342, MASK32),
    "mtval": (0x343, MASK32),
    "mip": (0x344, 0),
    "mcycle": (0xB00, MASK32),
    "minstret": (0xB02, MASK32),
    "mcycleh": (0xB80, MASK32),
    "minstreth": (0xB82, MASK32),
    "mhartid": (0xF14, None),
}
CSR_NAMES = {addr: name for name, (addr, _) in CSR_MAP.items()}
CSR_ADDR = {name: addr for name, (addr, _) in CSR_MAP.items()}


@dataclass(slots=True)
class CsrFile:
    mstatus: int = MSTATUS_MPP
    mie: int = 0
    mip: int = 0
    mtvec: int = 0
    mepc: int = 0
    mcause: int = 0
    mtval: int = 0
    mscratch: int = 0
    mhartid: int = 0
    misa: int = MISA_RV32I
    mcycle: int = 0
    minstret: int = 0

    def read(self, addr: int) -> int:
        name = CSR_NAMES.get(addr)
        if name is None:
            raise KeyError(addr)
        if name == "mcycle":
            return self.mcycle & MASK32
        if name == "mcycleh":
            return self.mcycle >> 32
        if name == "minstret":
            return self.minstret & MASK32
        if name == "minstreth":
            return self.minstret >> 32
        return getattr(self, name)

    def write(self, addr: int, value: int) -> None:
        """Masked write; read-only CSRs raise ``PermissionError``."""
        name = CSR_NAMES.get(addr)
        if name is None:
            raise KeyError(addr)
        mask = CSR_MAP[name][1]
        if mask is None:
            raise PermissionError(name)
        value &= MASK32
        if name == "mcycle":
            self.mcycle = (self.mcycle & ~MASK32) | value
        elif name == "mcycleh":
            self.mcycle = (self.mcycle & MASK32) | (value << 32)
        elif name == "minstret":
            self.minstret = (self.minstret & ~MASK32) | value
        elif name == "minstreth":
            self.minstret = (self.minstret & MASK32) | (value << 32)
        elif name == "mstatus":
            self.mstatus = (value & mask) | MSTATUS_MPP
        else:
            setattr(self, name, (getattr(self, name) & ~mask) | (value & mask))

    def snapshot(self, exclude=("mcycle",)) -> dict[str, int]:
        return {f: getattr(self, f) for f in self.__slots__ if f not in exclude}


@dataclass(slots=True)
class ArchState:
    pc: int = 0
    regs: RegisterFile = field(default_factory=RegisterFile)
    csrs: CsrFile = field(default_factory=CsrFile)
    waiting_for_interrupt: bool = False

    def copy(self) -> ArchState:
        c = self.csrs
        return ArchState(self.pc, RegisterFile(self.regs.x),
                         CsrFile(c.mstatus, c.mie, c.mip, c.mtvec, c.mepc, c.mcause, c.mtval,
                                 c.mscratch, c.mhartid, c.misa, c.mcycle, c.minstret),
                         self.waiting_for_interrupt)

    def architectural(self) -> tuple:
        """Registers, pc and CSRs except the cycle counter, for comparisons."""
        return (self.pc, tuple(self.regs.x), tuple(sorted(self.csrs.snapshot().items())))


def reset(state: ArchState, reset_pc: int) -> ArchState:
    state.pc = reset_pc & MASK32
    state.regs = RegisterFile()
    state.csrs = CsrFile()
    state.waiting_for_interrupt = False
    return state


def csr_access(state: ArchState, op: Mnemonic, csr_addr: int, operand: int,
               rd: int = 0, rs1: int = 0, raw: int = 0) -> int:
    """Zicsr read-modify-write.  Returns the old CSR value destined for ``rd``.

    ``operand`` is the rs1 register value, or the 5-bit immediate for the
    ``*I`` forms.  Illegal accesses raise :class:`Trap` with the instruction
    word in mtval and leave the state untouched.
    """
    csrs = state.csrs
    illegal = Trap(TrapCause.exception(Cause.ILLEGAL_INSTRUCTION, raw))
    if csr_addr not in CSR_NAMES:
        raise illegal
    if op is Mnemonic.CSRRW or op is Mnemonic.CSRRWI:
        writes = True
    elif op in CSR_IMM_MNEMONICS:
        writes = operand != 0
    else:
        writes = rs1 != 0
    if writes and CSR_MAP[CSR_NAMES[csr_addr]][1] is None:
        raise illegal
    old = csrs.read(csr_addr) if (rd != 0 or op not in (Mnemonic.CSRRW, Mnemonic.CSRRWI)) else 0
    if writes:
        if op is Mnemonic.CSRRW or op is Mnemonic.CSRRWI:
            new = operand
        elif op is Mnemonic.CSRRS or op is Mnemonic.CSRRSI:
            new = csrs.read(csr_addr) | operand
        else:
            new = csrs.read(csr_addr) & ~operand
        csrs.write(csr_addr, new)
    return old


INSTRET_CSRS = frozenset({0xB02, 0xB82})
CYCLE_CSRS = frozenset({0xB00, 0xB80})


def csr_writes(instr) -> bool:
    """Whether a decoded CSR instruction performs a write (reads always happen)."""
    m = instr.mnemonic
    if m is Mnemonic.CSRRW or m is Mnemonic.CSRRWI:
        return True
    if m in CSR_IMM_MNEMONICS:
        return instr.imm != 0
    return instr.rs1 != 0


def trap_enter(state: ArchState, cause: TrapCause, faulting_pc: int) -> ArchState:
    csrs = state.csrs
    csrs.mepc = faulting_pc & 0xFFFF_FFFC
    csrs.mcause = cause.mcause
    csrs.mtval = cause.tval & MASK32
    mie = csrs.mstatus & MSTATUS_MIE
    csrs.mstatus = MSTATUS_MPP | (MSTATUS_MPIE if mie else 0)
    state.pc = csrs.mtvec & 0xFFFF_FFFC
    state.waiting_for_interrupt = False
    return state


def trap_return(state: ArchState) -> ArchState:
    csrs = state.csrs
    mpie = csrs.mstatus & MSTATUS_MPIE
    csrs.mstatus = MSTATUS_MPP | MSTATUS_MPIE | (MSTATUS_MIE if mpie else 0)
    state.pc = csrs.mepc
    return state


_PRIORITY = ((MEIP, Interrupt.MEI), (MSIP, Interrupt.MSI), (MTIP, Interrupt.MTI))


def pending_interrupt(state: ArchState) -> TrapCause | None:
    csrs = state.csrs
    if not csrs.mstatus & MSTATUS_MIE:
        return None
    pending = csrs.mip & csrs.mie
    if not pending:
        return None
    for bit, code in _PRIORITY:
        if pending & bit:
            return TrapCause.interrupt(code)
    return None


def wake_pending(state: ArchState) -> bool:
    """WFI wake condition: an enabled interrupt is pending, ignoring mstatus.MIE."""
    return bool(state.csrs.mip & state.csrs.mie)
