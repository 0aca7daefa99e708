"""RV32I + Zicsr + machine-mode instruction decoding, encoding and disassembly.

Everything here is a pure function of its arguments.  ``decode`` never raises:
words that are not legal instructions come back as :class:`IllegalEncoding`,
which the simulators turn into illegal-instruction traps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "Mnemonic", "Format", "IllegalReason", "DecodedInstruction", "IllegalEncoding",
    "EncodeError", "decode", "encode", "encode_fields", "disassemble", "make",
    "RV32I_MNEMONICS", "CSR_MNEMONICS", "PRIVILEGED_MNEMONICS",
    "LOADS", "STORES", "BRANCHES", "sext", "MASK32",
]

MASK32 = 0xFFFF_FFFF


def sext(value: int, bits: int) -> int:
    """Sign-extend the low ``bits`` of ``value`` to a Python int."""
    value &= (1 << bits) - 1
    sign = 1 << (bits - 1)
    return (value ^ sign) - sign


class Mnemonic(str, enum.Enum):
    LUI = "lui"
    AUIPC = "auipc"
    JAL = "jal"
    JALR = "jalr"
    BEQ = "beq"
    BNE = "bne"
    BLT = "blt"
    BGE = "bge"
    BLTU = "bltu"
    BGEU = "bgeu"
    LB = "lb"
    LH = "lh"
    LW = "lw"
    LBU = "lbu"
    LHU = "lhu"
    SB = "sb"
    SH = "sh"
    SW = "sw"
    ADDI = "addi"
    SLTI = "slti"
    SLTIU = "sltiu"
    XORI = "xori"
    ORI = "ori"
    ANDI = "andi"
    SLLI = "slli"
    SRLI = "srli"
    SRAI = "srai"
    ADD = "add"
    SUB = "sub"
    SLL = "sll"
    SLT = "slt"
    SLTU = "sltu"
    XOR = "xor"
    SRL = "srl"
    SRA = "sra"
    OR = "or"
    AND = "and"
    FENCE = "fence"
    ECALL = "ecall"
    EBREAK = "ebreak"
    CSRRW = "csrrw"
    CSRRS = "csrrs"
    CSRRC = "csrrc"
    CSRRWI = "csrrwi"
    CSRRSI = "csrrsi"
    CSRRCI = "csrrci"
    MRET = "mret"
    WFI = "wfi"
    FENCE_I = "fence.i"

    def __str__(self) -> str:
        return self.value


class Format(str, enum.Enum):
    R = "R"
    I = "I"  # noqa: E741
    S = "S"
    B = "B"
    U = "U"
    J = "J"
    SYSTEM = "SYSTEM"


class IllegalReason(str, enum.Enum):
    UNKNOWN_OPCODE = "unknown-opcode"
    RESERVED_FUNCT = "reserved-funct"
    BAD_SHAMT = "bad-shamt"


M = Mnemonic

# The RV32I base set: 37 computational/control ops plus FENCE, ECALL, EBREAK.
RV32I_MNEMONICS = frozenset(list(Mnemonic)[:40])
CSR_MNEMONICS = frozenset({M.CSRRW, M.CSRRS, M.CSRRC, M.CSRRWI, M.CSRRSI, M.CSRRCI})
CSR_IMM_MNEMONICS = frozenset({M.CSRRWI, M.CSRRSI, M.CSRRCI})
PRIVILEGED_MNEMONICS = frozenset({M.MRET, M.WFI})
LOADS = frozenset({M.LB, M.LH, M.LW, M.LBU, M.LHU})
STORES = frozenset({M.SB, M.SH, M.SW})
BRANCHES = frozenset({M.BEQ, M.BNE, M.BLT, M.BGE, M.BLTU, M.BGEU})
SHIFT_IMM = frozenset({M.SLLI, M.SRLI, M.SRAI})

OP_LUI, OP_AUIPC, OP_JAL, OP_JALR = 0x37, 0x17, 0x6F, 0x67
OP_BRANCH, OP_LOAD, OP_STORE = 0x63, 0x03, 0x23
OP_IMM, OP_REG, OP_MISC_MEM, OP_SYSTEM = 0x13, 0x33, 0x0F, 0x73

# mnemonic -> (format, opcode, funct3, funct7)
_ENCODING: dict[Mnemonic, tuple[Format, int, int, int]] = {
    M.LUI: (Format.U, OP_LUI, 0, 0),
    M.AUIPC: (Format.U, OP_AUIPC, 0, 0),
    M.JAL: (Format.J, OP_JAL, 0, 0),
    M.JALR: (Format.I, OP_JALR, 0, 0),
    M.BEQ: (Format.B, OP_BRANCH, 0, 0),
    M.BNE: (Format.B, OP_BRANCH, 1, 0),
    M.BLT: (Format.B, OP_BRANCH, 4, 0),
    M.BGE: (Format.B, OP_BRANCH, 5, 0),
    M.BLTU: (Format.B, OP_BRANCH, 6, 0),
    M.BGEU: (Format.B, OP_BRANCH, 7, 0),
    M.LB: (Format.I, OP_LOAD, 0, 0),
    M.LH: (Format.I, OP_LOAD, 1, 0),
    M.LW: (Format.I, OP_LOAD, 2, 0),
    M.LBU: (Format.I, OP_LOAD, 4, 0),
    M.LHU: (Format.I, OP_LOAD, 5, 0),
    M.SB: (Format.S, OP_STORE, 0, 0),
    M.SH: (Format.S, OP_STORE, 1, 0),
    M.SW: (Format.S, OP_STORE, 2, 0),
    M.ADDI: (Format.I, OP_IMM, 0, 0),
    M.SLTI: (Format.I, OP_IMM, 2, 0),
    M.SLTIU: (Format.I, OP_IMM, 3, 0),
    M.XORI: (Format.I, OP_IMM, 4, 0),
    M.ORI: (Format.I, OP_IMM, 6, 0),
    M.ANDI: (Format.I, OP_IMM, 7, 0),
    M.SLLI: (Format.I, OP_IMM, 1, 0x00),
    M.SRLI: (Format.I, OP_IMM, 5, 0x00),
    M.SRAI: (Format.I, OP_IMM, 5, 0x20),
    M.ADD: (Format.R, OP_REG, 0, 0x00),
    M.SUB: (Format.R, OP_REG, 0, 0x20),
    M.SLL: (Format.R, OP_REG, 1, 0x00),
    M.SLT: (Format.R, OP_REG, 2, 0x00),
    M.SLTU: (Format.R, OP_REG, 3, 0x00),
    M.XOR: (Format.R, OP_REG, 4, 0x00),
    M.SRL: (Format.R, OP_REG, 5, 0x00),
    M.SRA: (Format.R, OP_REG, 5, 0x20),
    M.OR: (Format.R, OP_REG, 6, 0x00),
    M.AND: (Format.R, OP_REG, 7, 0x00),
    M.FENCE: (Format.I, OP_MISC_MEM, 0, 0),
    M.FENCE_I: (Format.I, OP_MISC_MEM, 1, 0),
    M.ECALL: (Format.SYSTEM, OP_SYSTEM, 0, 0),
    M.EBREAK: (Format.SYSTEM, OP_SYSTEM, 0, 0),
    M.MRET: (Format.SYSTEM, OP_SYSTEM, 0, 0),
    M.WFI: (Format.SYSTEM, OP_SYSTEM, 0, 0),
    M.CSRRW: (Format.SYSTEM, OP_SYSTEM, 1, 0),
    M.CSRRS: (Format.SYSTEM, OP_SYSTEM, 2, 0),
    M.CSRRC: (Format.SYSTEM, OP_SYSTEM, 3, 0),
    M.CSRRWI: (Format.SYSTEM, OP_SYSTEM, 5, 0),
    M.CSRRSI: (Format.SYSTEM, OP_SYSTEM, 6, 0),
    M.CSRRCI: (Format.SYSTEM, OP_SYSTEM, 7, 0),
}

# Fixed words for the no-operand SYSTEM instructions.
_SYSTEM_WORDS = {
    0x0000_0073: M.ECALL,
    0x0010_0073: M.EBREAK,
    0x3020_0073: M.MRET,
    0x1050_0073: M.WFI,
}
_SYSTEM_WORD_OF = {m: w for w, m in _SYSTEM_WORDS.items()}

_BY_OPCODE_F3: dict[tuple[int, int], Mnemonic] = {}
_OP_REG_TABLE: dict[tuple[int, int], Mnemonic] = {}
for _m, (_fmt, _op, _f3, _f7) in _ENCODING.items():
    if _op == OP_REG:
        _OP_REG_TABLE[(_f3, _f7)] = _m
    elif _op not in (OP_SYSTEM, OP_LUI, OP_AUIPC, OP_JAL) and _m not in (M.SRLI, M.SRAI):
        _BY_OPCODE_F3[(_op, _f3)] = _m
for _m in CSR_MNEMONICS:
    _BY_OPCODE_F3[(OP_SYSTEM, _ENCODING[_m][2])] = _m


@dataclass(frozen=True, slots=True)
class DecodedInstruction:
    mnemonic: Mnemonic
    format: Format
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    csr_addr: int = 0
    raw: int = 0

    def __str__(self) -> str:
        return disassemble(self)


@dataclass(frozen=True, slots=True)
class IllegalEncoding:
    raw: int
    reason: IllegalReason

    def __str__(self) -> str:
        return disassemble(self)


class EncodeError(ValueError):
    """Raised by :func:`encode` for operands outside their field ranges."""


def _i_imm(w: int) -> int:
    return sext(w >> 20, 12)


def _s_imm(w: int) -> int:
    return sext(((w >> 25) << 5) | ((w >> 7) & 0x1F), 12)


def _b_imm(w: int) -> int:
    v = (((w >> 31) & 1) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1)
    return sext(v, 13)


def _u_imm(w: int) -> int:
    return sext(w & 0xFFFF_F000, 32)


def _j_imm(w: int) -> int:
    v = (((w >> 31) & 1) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) | (((w >> 21) & 0x3FF) << 1)
    return sext(v, 21)


@lru_cache(maxsize=1 << 16)
def decode(word: int) -> DecodedInstruction | IllegalEncoding:
    """Decode one 32-bit instruction word."""
    word &= MASK32
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    f3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    f7 = word >> 25

    def bad(reason: IllegalReason) -> IllegalEncoding:
        return IllegalEncoding(word, reason)

    if opcode == OP_REG:
        m = _OP_REG_TABLE.get((f3, f7))
        if m is None:
            return bad(IllegalReason.RESERVED_FUNCT)
        return DecodedInstruction(m, Format.R, rd, rs1, rs2, 0, 0, word)
    if opcode == OP_IMM:
        if f3 == 1 or f3 == 5:
            top = f7 & ~1
            if f3 == 1:
                m = M.SLLI if top == 0 else None
            else:
                m = {0x00: M.SRLI, 0x20: M.SRAI}.get(top)
            if m is None:
                return bad(IllegalReason.RESERVED_FUNCT)
            if f7 & 1:
                return bad(IllegalReason.BAD_SHAMT)
            return DecodedInstruction(m, Format.I, rd, rs1, 0, rs2, 0, word)
        return DecodedInstruction(_BY_OPCODE_F3[(OP_IMM, f3)], Format.I, rd, rs1, 0, _i_imm(word), 0, word)
    if opcode == OP_LOAD or opcode == OP_JALR or opcode == OP_MISC_MEM:
        m = _BY_OPCODE_F3.get((opcode, f3))
        if m is None:
            return bad(IllegalReason.RESERVED_FUNCT)
        return DecodedInstruction(m, Format.I, rd, rs1, 0, _i_imm(word), 0, word)
    if opcode == OP_STORE:
        m = _BY_OPCODE_F3.get((opcode, f3))
        if m is None:
            return bad(IllegalReason.RESERVED_FUNCT)
        return DecodedInstruction(m, Format.S, 0, rs1, rs2, _s_imm(word), 0, word)
    if opcode == OP_BRANCH:
        m = _BY_OPCODE_F3.get((opcode, f3))
        if m is None:
            return bad(IllegalReason.RESERVED_FUNCT)
        return DecodedInstruction(m, Format.B, 0, rs1, rs2, _b_imm(word), 0, word)
    if opcode == OP_LUI:
        return DecodedInstruction(M.LUI, Format.U, rd, 0, 0, _u_imm(word), 0, word)
    if opcode == OP_AUIPC:
        return DecodedInstruction(M.AUIPC, Format.U, rd, 0, 0, _u_imm(word), 0, word)
    if opcode == OP_JAL:
        return DecodedInstruction(M.JAL, Format.J, rd, 0, 0, _j_imm(word), 0, word)
    if opcode == OP_SYSTEM:
        if f3 == 0:
            m = _SYSTEM_WORDS.get(word)
            if m is None:
                return bad(IllegalReason.RESERVED_FUNCT)
            return DecodedInstruction(m, Format.SYSTEM, raw=word)
        m = _BY_OPCODE_F3.get((OP_SYSTEM, f3))
        if m is None:
            return bad(IllegalReason.RESERVED_FUNCT)
        csr = word >> 20
        if m in CSR_IMM_MNEMONICS:
            return DecodedInstruction(m, Format.SYSTEM, rd, 0, 0, rs1, csr, word)
        return DecodedInstruction(m, Format.SYSTEM, rd, rs1, 0, 0, csr, word)
    return bad(IllegalReason.UNKNOWN_OPCODE)


def _check_reg(name: str, value: int) -> None:
    if not 0 <= value < 32:
        raise EncodeError(f"{name}={value} is not a register index")


def _check_signed(value: int, bits: int, what: str) -> None:
    if not -(1 << (bits - 1)) <= value < (1 << (bits - 1)):
        raise EncodeError(f"{what} immediate {value} does not fit in {bits} signed bits")


def encode(instr: DecodedInstruction) -> int:
    """Encode ``instr`` to its 32-bit word.  Inverse of :func:`decode`."""
    m = instr.mnemonic
    fmt, opcode, f3, f7 = _ENCODING[m]
    rd, rs1, rs2, imm = instr.rd, instr.rs1, instr.rs2, instr.imm
    for name in ("rd", "rs1", "rs2"):
        _check_reg(name, getattr(instr, name))

    if m in _SYSTEM_WORD_OF:
        return _SYSTEM_WORD_OF[m]
    if m in CSR_MNEMONICS:
        if not 0 <= instr.csr_addr <= 0xFFF:
            raise EncodeError(f"csr address {instr.csr_addr:#x} out of range")
        src = rs1
        if m in CSR_IMM_MNEMONICS:
            if not 0 <= imm < 32:
                raise EncodeError(f"csr immediate {imm} out of range 0..31")
            src = imm
        return (instr.csr_addr << 20) | (src << 15) | (f3 << 12) | (rd << 7) | opcode
    if m in SHIFT_IMM:
        if not 0 <= imm < 32:
            raise EncodeError(f"shift amount {imm} out of range 0..31")
        return (f7 << 25) | (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt is Format.R:
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt is Format.I:
        _check_signed(imm, 12, m.value)
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt is Format.S:
        _check_signed(imm, 12, m.value)
        v = imm & 0xFFF
        return ((v >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((v & 0x1F) << 7) | opcode
    if fmt is Format.B:
        _check_signed(imm, 13, m.value)
        if imm & 1:
            raise EncodeError(f"branch offset {imm} is odd")
        v = imm & 0x1FFF
        return ((((v >> 12) & 1) << 31) | (((v >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15)
                | (f3 << 12) | (((v >> 1) & 0xF) << 8) | (((v >> 11) & 1) << 7) | opcode)
    if fmt is Format.U:
        if not -(1 << 31) <= imm <= MASK32 or imm & 0xFFF:
            raise EncodeError(f"U immediate {imm:#x} must be a 32-bit value with bits 11:0 clear")
        return (imm & 0xFFFF_F000) | (rd << 7) | opcode
    if fmt is Format.J:
        _check_signed(imm, 21, m.value)
        if imm & 1:
            raise EncodeError(f"jump offset {imm} is odd")
        v = imm & 0x1F_FFFF
        return ((((v >> 20) & 1) << 31) | (((v >> 1) & 0x3FF) << 21) | (((v >> 11) & 1) << 20)
                | (((v >> 12) & 0xFF) << 12) | (rd << 7) | opcode)
    raise AssertionError(m)  # pragma: no cover


def encode_fields(mnemonic: Mnemonic, rd: int = 0, rs1: int = 0, rs2: int = 0,
                  imm: int = 0, csr_addr: int = 0) -> int:
    """Encode straight from fields; like ``encode(make(...))`` but one pass."""
    fmt = _ENCODING[mnemonic][0]
    if fmt is Format.U:
        imm = sext(imm, 32)
    return encode(DecodedInstruction(mnemonic, fmt, rd, rs1, rs2, imm, csr_addr, 0))


def make(mnemonic: Mnemonic | str, rd: int = 0, rs1: int = 0, rs2: int = 0,
         imm: int = 0, csr_addr: int = 0) -> DecodedInstruction:
    """Build a canonical DecodedInstruction (with ``raw`` filled in)."""
    m = Mnemonic(mnemonic)
    fmt = _ENCODING[m][0]
    if fmt is Format.U:
        imm = sext(imm, 32)
    proto = DecodedInstruction(m, fmt, rd, rs1, rs2, imm, csr_addr, 0)
    word = encode(proto)
    out = decode(word)
    assert isinstance(out, DecodedInstruction)
    return out


_FENCE_BITS = "iorw"


def _fence_set(bits: int) -> str:
    s = "".join(c for i, c in enumerate(_FENCE_BITS) if bits & (8 >> i))
    return s or "0"


def disassemble(instr: DecodedInstruction | IllegalEncoding) -> str:
    """Render one instruction in the trace syntax, e.g. ``addi x1, x0, 10``."""
    if isinstance(instr, IllegalEncoding):
        return f".word {instr.raw:#010x}"
    m = instr.mnemonic
    name = m.value
    fmt = instr.format
    rd, rs1, rs2, imm = instr.rd, instr.rs1, instr.rs2, instr.imm
    if m in _SYSTEM_WORD_OF:
        return name
    if m in CSR_MNEMONICS:
        src = str(imm) if m in CSR_IMM_MNEMONICS else f"x{rs1}"
        return f"{name} x{rd}, {instr.csr_addr:#x}, {src}"
    if m is M.FENCE:
        return f"fence {_fence_set((imm >> 4) & 0xF)}, {_fence_set(imm & 0xF)}"
    if m is M.FENCE_I:
        return "fence.i"
    if m in LOADS or m is M.JALR:
        return f"{name} x{rd}, {imm}(x{rs1})"
    if fmt is Format.S:
        return f"{name} x{rs2}, {imm}(x{rs1})"
    if fmt is Format.B:
        return f"{name} x{rs1}, x{rs2}, {imm}"
    if fmt is Format.R:
        return f"{name} x{rd}, x{rs1}, x{rs2}"
    if fmt is Format.U:
        return f"{name} x{rd}, {imm >> 12}"
    if fmt is Format.J:
        return f"{name} x{rd}, {imm}"
    return f"{name} x{rd}, x{rs1}, {imm}"
