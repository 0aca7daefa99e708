"""Cycle-level model of the 4-stage NoX pipeline.

Stages, oldest first::

    LSU/WB   memory transactions, commit, register write-back (one stage)
    Execute  ALU, branch/jump resolution, address generation
    Decode   head of the L0 fetch FIFO; interlock, WFI gate, interrupt sampling
    Fetch    sequential prefetch into the FIFO through the instruction port

Each :meth:`Core.tick` first lets the LSU and the fetch unit issue on their
bus ports, advances the bus one cycle, then evaluates the stages from oldest
to youngest so that a younger stage always sees what an older one did in the
same cycle.

Bypassing: Execute only runs in a cycle in which LSU/WB is empty or
committing, so the single in-flight producer an operand can depend on is the
LSU/WB occupant.  Its result (ALU value, CSR read, link address or
``lsu_rd_data``) is forwarded straight into Execute; the register file is
written at the end of the cycle.  Nothing ever waits on a register hazard.

Stalls come only from back-pressure: the LSU holding a transaction in flight,
or an empty FIFO while the instruction port is busy.  Every cycle is charged
to exactly one :class:`StatsReport` category by looking at what occupies
LSU/WB: a committing instruction, an unfinished memory access, or a bubble
tagged with the reason it was created.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from .bus import MASK64, Bus, BusTransaction, Direction, MemoryMap, Port, aligned_pieces
from .isa import (BRANCHES, CSR_IMM_MNEMONICS, CSR_MNEMONICS, LOADS, MASK32, STORES,
                  DecodedInstruction, IllegalEncoding, Mnemonic, decode, disassemble)
from .iss import ALU_IMM, ALU_REG, LOAD_SIZE, NOPS, STORE_SIZE, alu_eval, branch_taken, load_extend
from .state import (CYCLE_CSRS, INSTRET_CSRS, ArchState, Cause, Trap, TrapCause, csr_access,
                    pending_interrupt, reset, trap_enter, trap_return)

M = Mnemonic

# instruction classes, resolved once per decoded word
(K_ALU_R, K_ALU_I, K_LUI, K_AUIPC, K_JAL, K_JALR, K_BRANCH, K_LOAD, K_STORE, K_CSR,
 K_ECALL, K_EBREAK, K_MRET, K_WFI, K_NOP, K_ILLEGAL, K_IFAULT) = range(17)

_KIND: dict[Mnemonic, int] = {}
for _m in ALU_REG:
    _KIND[_m] = K_ALU_R
for _m in ALU_IMM:
    _KIND[_m] = K_ALU_I
for _m in BRANCHES:
    _KIND[_m] = K_BRANCH
for _m in LOADS:
    _KIND[_m] = K_LOAD
for _m in STORES:
    _KIND[_m] = K_STORE
for _m in CSR_MNEMONICS:
    _KIND[_m] = K_CSR
for _m in NOPS:
    _KIND[_m] = K_NOP
_KIND.update({M.LUI: K_LUI, M.AUIPC: K_AUIPC, M.JAL: K_JAL, M.JALR: K_JALR, M.ECALL: K_ECALL,
              M.EBREAK: K_EBREAK, M.MRET: K_MRET, M.WFI: K_WFI})

_DECODED: dict[int, tuple] = {}


def _predecode(word: int) -> tuple:
    d = _DECODED.get(word)
    if d is None:
        instr = decode(word)
        kind = K_ILLEGAL if isinstance(instr, IllegalEncoding) else _KIND[instr.mnemonic]
        d = _DECODED[word] = (instr, kind)
    return d


# bubble tags -> StatsReport attribute
_CATEGORY = {
    "fill": "fill_cycles",
    "fetch": "stall_cycles_fetch",
    "lsu": "stall_cycles_lsu",
    "flush": "flush_bubbles",
    "serialize": "serialize_cycles",
    "wfi": "wfi_cycles",
    "irq": "irq_cycles",
}

PIPELINE_FILL = 3


@dataclass
class CoreConfig:
    """Core and bus configuration.  Defaults are the evaluated NoX setup:
    2-entry fetch FIFO, single-cycle buses."""

    fifo_depth: int = 2
    misaligned_trap: bool = False
    imem_latency: int | tuple[int, int] = 0
    dmem_latency: int | tuple[int, int] = 0
    reset_pc: int = 0x8000_0000
    memory_map: MemoryMap | None = None
    error_addresses: frozenset[int] = frozenset()
    seed: int | None = 0

    def __post_init__(self):
        if self.fifo_depth < 1:
            raise ValueError("fifo_depth must be >= 1")
        if self.reset_pc & 3:
            raise ValueError("reset_pc must be 4-byte aligned")

    def make_bus(self, console=None) -> Bus:
        return Bus(self.memory_map, imem_latency=self.imem_latency, dmem_latency=self.dmem_latency,
                   error_addresses=self.error_addresses, seed=self.seed, console=console)


@dataclass(slots=True)
class RetireEvent:
    """One commit (or interrupt entry) leaving the pipeline."""

    cycle: int
    pc: int
    raw: int | None
    instr: DecodedInstruction | IllegalEncoding | None
    next_pc: int
    writeback: tuple[int, int] | None
    trap: TrapCause | None
    mem_effect: tuple[int, int, str, int] | None
    mip: int
    mcycle: int

    @property
    def is_interrupt(self) -> bool:
        return self.trap is not None and self.trap.is_interrupt

    def trace_line(self) -> str:
        """``C<cycle> <pc> <raw> <disassembly> [x<rd>=<value>]``"""
        raw = "--------" if self.raw is None else f"{self.raw:08x}"
        if self.instr is None:
            text = f"<interrupt {self.trap.code}>" if self.is_interrupt else "<fetch fault>"
        else:
            text = disassemble(self.instr)
        line = f"C{self.cycle} {self.pc:08x} {raw} {text}"
        if self.writeback is not None:
            line += f" x{self.writeback[0]}={self.writeback[1]:08x}"
        return line


@dataclass
class StatsReport:
    cycles: int = 0
    instret: int = 0
    stall_cycles_fetch: int = 0
    stall_cycles_lsu: int = 0
    flush_count: int = 0
    fifo_occupancy_sum: int = 0
    fill_cycles: int = 0
    flush_bubbles: int = 0
    serialize_cycles: int = 0
    wfi_cycles: int = 0
    irq_cycles: int = 0
    split_transactions: int = 0
    iterations: int | None = None

    @property
    def cpi(self) -> float | None:
        return round(self.cycles / self.instret, 4) if self.instret else None

    @property
    def fifo_avg_occupancy(self) -> float:
        return round(self.fifo_occupancy_sum / self.cycles, 4) if self.cycles else 0.0

    @property
    def attributed_cycles(self) -> int:
        """Sum of every per-cycle category; always equals ``cycles``."""
        return (self.instret + self.fill_cycles + self.stall_cycles_fetch + self.stall_cycles_lsu
                + self.flush_bubbles + self.serialize_cycles + self.wfi_cycles + self.irq_cycles)

    @property
    def iterations_per_megacycle(self) -> float | None:
        if self.iterations is None or not self.cycles:
            return None
        return self.iterations * 1_000_000 / self.cycles


@lru_cache(maxsize=1 << 16)
def _fetch_txn(pc: int) -> BusTransaction:
    # transactions are immutable, so one per fetch address is enough
    return BusTransaction(pc, 4, Direction.READ, 0, Port.INSTRUCTION)


class _Slot:
    """An instruction travelling down the pipeline."""

    __slots__ = ("pc", "raw", "instr", "kind", "mip", "value", "trap", "next_pc", "redirect",
                 "operand", "serializing", "addr", "size", "store", "pieces", "idx", "acc", "issued")

    def __init__(self, pc, raw, instr, kind, mip):
        self.pc = pc
        self.raw = raw
        self.instr = instr
        self.kind = kind
        self.mip = mip
        self.value = None
        self.trap = None
        self.next_pc = (pc + 4) & MASK32
        self.redirect = None
        self.operand = 0
        self.serializing = False
        self.pieces = None


@dataclass
class RunOutcome:
    reason: str
    cycles: int
    exit_code: int | None = None


class Core:
    """One NoX hart plus its bus.

    ``bypass_fault`` is a test hook that disables forwarding, so Execute
    reads stale register-file values; the lockstep harness must catch it.
    """

    def __init__(self, config: CoreConfig | None = None, bus: Bus | None = None, console=None):
        self.config = config or CoreConfig()
        self.bus = bus if bus is not None else self.config.make_bus(console)
        self.state = ArchState()
        self.bypass_fault = False
        self.reset()

    def reset(self, pc: int | None = None) -> None:
        cfg = self.config
        pc = cfg.reset_pc if pc is None else pc
        reset(self.state, pc)
        self.fifo: deque = deque()
        self.fetch_pc = pc
        self.fetch_inflight = None
        self.fetch_discard = False
        self.ex: _Slot | None = None
        self.ex_tag = "fill"
        self.mem: _Slot | None = None
        self.mem_tag = "fill"
        self.front_tag = "fill"
        self.wfi_wait = False
        self.cycle = 0
        self.counter_written = False
        self.stats = StatsReport()

    # -- helpers ---------------------------------------------------------------

    def _next_program_pc(self) -> int:
        if self.fifo:
            return self.fifo[0][0]
        if self.fetch_inflight is not None and not self.fetch_discard:
            return self.fetch_inflight
        return self.fetch_pc

    def redirect(self, target: int, reason: str = "branch") -> None:
        """Flush the front end and refetch from ``target``."""
        self.fifo.clear()
        self.fetch_pc = target & MASK32
        self.fetch_discard = self.fetch_inflight is not None
        self.wfi_wait = False
        self.front_tag = "flush"
        self.stats.flush_count += 1

    @property
    def sleeping(self) -> bool:
        return self.wfi_wait and not (self.state.csrs.mip & self.state.csrs.mie)

    def _sleep_skip(self, limit: int) -> None:
        """Fast-forward through WFI sleep, cycle-exact.

        Only applies once the core is fully quiescent: nothing in E or M, the
        FIFO full, no bus transaction in flight and wfi bubbles already
        reaching commit.  Each such cycle changes nothing but the counters, so
        they are applied in bulk, stopping one cycle short of the timer
        compare (or at ``limit`` when nothing can wake the core).
        """
        if not (self.wfi_wait and self.ex is None and self.mem is None and self.fetch_inflight is None
                and self.ex_tag == "wfi" and self.mem_tag == "wfi" and not self.counter_written
                and len(self.fifo) >= self.config.fifo_depth):
            return
        bus = self.bus
        if any(p.in_flight is not None for p in bus.ports.values()):
            return
        csrs = self.state.csrs
        mie = csrs.mie
        if bus.interrupt_lines() & mie:
            return
        n = limit - self.cycle
        if mie & 0x80:
            n = min(n, bus.mtimecmp - bus.mtime - 1)
        if n <= 0:
            return
        self.cycle += n
        bus.mtime = (bus.mtime + n) & MASK64
        csrs.mip = bus.interrupt_lines()
        csrs.mcycle = (csrs.mcycle + n) & MASK64
        st = self.stats
        st.cycles += n
        st.wfi_cycles += n
        st.fifo_occupancy_sum += n * len(self.fifo)

    # -- one clock -------------------------------------------------------------

    def tick(self) -> list[RetireEvent]:
        bus = self.bus
        state = self.state
        csrs = state.csrs
        stats = self.stats
        fifo = self.fifo
        self.cycle += 1
        cycle = self.cycle
        live_mip = bus.interrupt_lines()
        csrs.mip = live_mip
        events: list[RetireEvent] = []

        # issue phase
        mem = self.mem
        if mem is not None and mem.pieces is not None and not mem.issued:
            a, s = mem.pieces[mem.idx]
            if mem.kind == K_STORE:
                txn = BusTransaction(a, s, Direction.WRITE, mem.store >> (8 * (a - mem.addr)), Port.DATA)
            else:
                txn = BusTransaction(a, s, Direction.READ, 0, Port.DATA)
            mem.issued = bus.issue(Port.DATA, txn)
        if self.fetch_inflight is None and len(fifo) < self.config.fifo_depth:
            pc_f = self.fetch_pc
            bus.issue(Port.INSTRUCTION, _fetch_txn(pc_f))
            self.fetch_inflight = pc_f
            self.fetch_pc = (pc_f + 4) & MASK32

        fetched = dresp = None
        for port, resp in bus.tick():
            if port is Port.INSTRUCTION:
                fetched = resp
            else:
                dresp = resp

        # LSU / Memory & Writeback
        wb = None
        redirect = None
        if mem is None:
            category = self.mem_tag
        else:
            done = True
            if mem.pieces is not None:
                if dresp is None:
                    done = False
                else:
                    mem.issued = False
                    if not dresp.ok:
                        code = Cause.STORE_ACCESS_FAULT if mem.kind == K_STORE else Cause.LOAD_ACCESS_FAULT
                        mem.trap = TrapCause.exception(code, mem.addr)
                    else:
                        a, s = mem.pieces[mem.idx]
                        mem.acc |= dresp.rdata << (8 * (a - mem.addr))
                        mem.idx += 1
                        done = mem.idx == len(mem.pieces)
            if not done:
                category = "lsu"
            else:
                category = None
                mcycle = csrs.mcycle
                wb, redirect, ev = self._commit(mem, cycle, live_mip, mcycle)
                events.append(ev)
                self.mem = None

        # Execute
        ex = self.ex
        if redirect is not None:
            self.ex = None
            self.mem_tag = "flush"
        elif self.mem is None:
            if ex is not None:
                self._execute(ex, wb)
                self.mem = ex
                self.ex = None
                redirect = ex.redirect
            else:
                self.mem_tag = self.ex_tag

        # Decode
        if redirect is not None:
            self.redirect(redirect)
            if self.ex is None:
                self.ex_tag = "flush"
        elif self.ex is None:
            tag = None
            m_slot = self.mem
            if m_slot is not None and m_slot.serializing:
                tag = "serialize"
            elif self.wfi_wait:
                if live_mip & csrs.mie:
                    self.wfi_wait = False
                else:
                    tag = "wfi"
            if tag is None:
                irq = pending_interrupt(state)
                if irq is not None:
                    if m_slot is None and not events:
                        epc = self._next_program_pc()
                        trap_enter(state, irq, epc)
                        events.append(RetireEvent(cycle, epc, None, None, state.pc, None, irq, None,
                                                  live_mip, csrs.mcycle))
                        self.redirect(state.pc, "trap")
                    tag = "irq"
                elif fifo:
                    pc_d, word = fifo.popleft()
                    if word is None:
                        slot = _Slot(pc_d, None, None, K_IFAULT, live_mip)
                    else:
                        instr, kind = _predecode(word)
                        slot = _Slot(pc_d, word, instr, kind, live_mip)
                        if kind == K_WFI:
                            self.wfi_wait = True
                    self.ex = slot
                else:
                    tag = self.front_tag
            if tag is not None:
                self.ex_tag = tag

        # Fetch response into the FIFO
        if fetched is not None:
            pc_f = self.fetch_inflight
            self.fetch_inflight = None
            if self.fetch_discard:
                self.fetch_discard = False
            else:
                fifo.append((pc_f, fetched.rdata if fetched.ok else None))
                self.front_tag = "fetch"
        if cycle == 1 and self.front_tag == "fill":
            self.front_tag = "fetch"

        if wb is not None:
            state.regs[wb[0]] = wb[1]
        if self.counter_written:
            self.counter_written = False
        else:
            csrs.mcycle = (csrs.mcycle + 1) & MASK64
        stats.cycles += 1
        stats.fifo_occupancy_sum += len(fifo)
        if category is not None:
            attr = _CATEGORY[category]
            setattr(stats, attr, getattr(stats, attr) + 1)
        return events

    def _execute(self, ex: _Slot, wb) -> None:
        kind = ex.kind
        if kind == K_IFAULT:
            ex.trap = TrapCause.exception(Cause.INSTRUCTION_ACCESS_FAULT, ex.pc)
            return
        if kind == K_ILLEGAL:
            ex.trap = TrapCause.exception(Cause.ILLEGAL_INSTRUCTION, ex.raw)
            return
        instr = ex.instr
        x = self.state.regs.x
        rs1, rs2 = instr.rs1, instr.rs2
        a = x[rs1]
        b = x[rs2]
        if wb is not None and not self.bypass_fault:
            if wb[0] == rs1:
                a = wb[1]
            if wb[0] == rs2:
                b = wb[1]
        m = instr.mnemonic
        pc = ex.pc
        if kind == K_ALU_I:
            ex.value = alu_eval(m, a, instr.imm & MASK32)
        elif kind == K_ALU_R:
            ex.value = alu_eval(m, a, b)
        elif kind == K_LOAD or kind == K_STORE:
            addr = (a + instr.imm) & MASK32
            size = LOAD_SIZE[m] if kind == K_LOAD else STORE_SIZE[m]
            ex.addr = addr
            ex.size = size
            if addr % size and self.config.misaligned_trap:
                code = Cause.LOAD_ADDRESS_MISALIGNED if kind == K_LOAD else Cause.STORE_ADDRESS_MISALIGNED
                ex.trap = TrapCause.exception(code, addr)
                return
            ex.pieces = aligned_pieces(addr, size)
            if len(ex.pieces) > 1:
                self.stats.split_transactions += len(ex.pieces)
            ex.idx = 0
            ex.acc = 0
            ex.issued = False
            if kind == K_STORE:
                ex.store = b & ((1 << (8 * size)) - 1)
        elif kind == K_BRANCH:
            if branch_taken(m, a, b):
                target = (pc + instr.imm) & MASK32
                if target & 3:
                    ex.trap = TrapCause.exception(Cause.INSTRUCTION_ADDRESS_MISALIGNED, target)
                else:
                    ex.next_pc = ex.redirect = target
        elif kind == K_JAL or kind == K_JALR:
            if kind == K_JAL:
                target = (pc + instr.imm) & MASK32
            else:
                target = (a + instr.imm) & MASK32 & ~1
            if target & 3:
                ex.trap = TrapCause.exception(Cause.INSTRUCTION_ADDRESS_MISALIGNED, target)
            else:
                ex.value = ex.next_pc
                ex.next_pc = ex.redirect = target
        elif kind == K_LUI:
            ex.value = instr.imm & MASK32
        elif kind == K_AUIPC:
            ex.value = (pc + instr.imm) & MASK32
        elif kind == K_CSR:
            if m in CSR_IMM_MNEMONICS:
                ex.operand = instr.imm
                ex.serializing = m is M.CSRRWI or instr.imm != 0
            else:
                ex.operand = a
                ex.serializing = m is M.CSRRW or rs1 != 0
        elif kind == K_ECALL:
            ex.trap = TrapCause.exception(Cause.ECALL_FROM_M)
        elif kind == K_EBREAK:
            ex.trap = TrapCause.exception(Cause.BREAKPOINT)
        elif kind == K_MRET:
            ex.next_pc = ex.redirect = self.state.csrs.mepc

    def _commit(self, mem: _Slot, cycle: int, live_mip: int, mcycle: int):
        state = self.state
        csrs = state.csrs
        trap = mem.trap
        value = mem.value
        effect = None
        redirect = None
        kind = mem.kind
        bump = True
        if trap is None:
            if kind == K_LOAD:
                value = load_extend(mem.instr.mnemonic, mem.acc)
                effect = (mem.addr, mem.size, "read", mem.acc)
            elif kind == K_STORE:
                effect = (mem.addr, mem.size, "write", mem.store)
            elif kind == K_CSR:
                instr = mem.instr
                csrs.mip = mem.mip
                try:
                    value = csr_access(state, instr.mnemonic, instr.csr_addr, mem.operand,
                                       instr.rd, instr.rs1, instr.raw)
                except Trap as t:
                    trap = t.cause
                else:
                    # counter writes replace that cycle's/instruction's increment
                    if mem.serializing and instr.csr_addr in CYCLE_CSRS:
                        self.counter_written = True
                    elif mem.serializing and instr.csr_addr in INSTRET_CSRS:
                        bump = False
                csrs.mip = live_mip
            elif kind == K_MRET:
                trap_return(state)
        if trap is not None:
            trap_enter(state, trap, mem.pc)
            next_pc = redirect = state.pc
            value = None
        else:
            next_pc = mem.next_pc
        state.pc = next_pc
        if bump:
            csrs.minstret = (csrs.minstret + 1) & MASK64
        self.stats.instret += 1
        rd = mem.instr.rd if mem.instr is not None and kind != K_ILLEGAL else 0
        wb = (rd, value) if value is not None and rd else None
        ev = RetireEvent(cycle, mem.pc, mem.raw, mem.instr, next_pc, wb, trap, effect, mem.mip, mcycle)
        return wb, redirect, ev

    # -- driving ----------------------------------------------------------------

    def run(self, max_cycles: int = 10_000_000, *, ebreak: bool | None = None,
            on_retire=None) -> RunOutcome:
        """Tick until the exit port is written, an EBREAK stops the run, or
        ``max_cycles`` elapse.

        ``ebreak=None`` stops on EBREAK only when no trap handler is installed
        (mtvec is zero); ``True`` always stops; ``False`` never does.
        """
        bus = self.bus
        while self.cycle < max_cycles:
            if self.wfi_wait:
                self._sleep_skip(max_cycles)
                if self.cycle >= max_cycles:
                    break
            for ev in self.tick():
                if on_retire is not None:
                    on_retire(ev)
                if bus.exit_code is not None:
                    return RunOutcome("exit", self.cycle, bus.exit_code)
                if (ebreak is not False and ev.trap is not None and ev.trap.code == Cause.BREAKPOINT
                        and not ev.trap.is_interrupt and (ebreak or self.state.csrs.mtvec == 0)):
                    return RunOutcome("ebreak", self.cycle, 0)
        return RunOutcome("wfi-sleep" if self.sleeping else "max-cycles", self.cycle)

    def collect_stats(self) -> StatsReport:
        self.stats.iterations = self.bus.iterations
        return self.stats
