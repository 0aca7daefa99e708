import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noxsim.isa import (BRANCHES, CSR_IMM_MNEMONICS, CSR_MNEMONICS, LOADS, SHIFT_IMM, STORES,
                        DecodedInstruction, EncodeError, Format, IllegalEncoding, IllegalReason,
                        Mnemonic, decode, disassemble, encode, make)
from noxsim.program import assemble

M = Mnemonic

# Words worked out by hand from the base-ISA encoding tables.
KNOWN = [
    (0x0000_0013, "addi x0, x0, 0"),
    (0x00A0_0093, "addi x1, x0, 10"),
    (0x0000_00EF, "jal x1, 0"),
    (0xDEAD_B2B7, f"lui x5, {0xDEADB - (1 << 20)}"),
    (0x0020_81B3, "add x3, x1, x2"),
    (0x4020_81B3, "sub x3, x1, x2"),
    (0x0030_2083, "lw x1, 3(x0)"),
    (0x0020_A023, "sw x2, 0(x1)"),
    (0xFE31_0CE3, "beq x2, x3, -8"),
    (0x3051_10F3, "csrrw x1, 0x305, x2"),
    (0x4031_5093, "srai x1, x2, 3"),
    (0x0000_8067, "jalr x0, 0(x1)"),
    (0x0FF0_000F, "fence iorw, iorw"),
    (0x0000_100F, "fence.i"),
    (0x0000_1297, "auipc x5, 1"),
    (0xFE53_0FA3, "sb x5, -1(x6)"),
    (0xFFDF_F06F, "jal x0, -4"),
    (0x0000_0073, "ecall"),
    (0x0010_0073, "ebreak"),
    (0x3020_0073, "mret"),
    (0x1050_0073, "wfi"),
    (0x3452_D073, "csrrwi x0, 0x345, 5"),
]


@pytest.mark.parametrize("word,text", KNOWN)
def test_known_words_decode_and_disassemble(word, text):
    d = decode(word)
    assert isinstance(d, DecodedInstruction)
    assert disassemble(d) == text
    assert encode(d) == word


def test_decode_fields():
    d = decode(0x00A0_0093)
    assert (d.mnemonic, d.format, d.rd, d.rs1, d.imm) == (M.ADDI, Format.I, 1, 0, 10)
    d = decode(0xFE31_0CE3)
    assert (d.mnemonic, d.rs1, d.rs2, d.imm) == (M.BEQ, 2, 3, -8)
    d = decode(0x3051_10F3)
    assert (d.mnemonic, d.rd, d.rs1, d.csr_addr) == (M.CSRRW, 1, 2, 0x305)


def test_make_matches_known_encodings():
    assert encode(make(M.ADDI)) == 0x13
    assert encode(make(M.JAL, rd=1, imm=0)) == 0xEF
    assert encode(make(M.LUI, rd=5, imm=0xDEADB << 12)) == 0xDEADB2B7


@pytest.mark.parametrize("word,reason", [
    (0xFFFF_FFFF, IllegalReason.UNKNOWN_OPCODE),
    (0x0000_0000, IllegalReason.UNKNOWN_OPCODE),
    (0x0200_0033, IllegalReason.RESERVED_FUNCT),   # mul: M extension is absent
    (0x0220_5093, IllegalReason.BAD_SHAMT),        # srli with shamt bit 5 set
    (0x0000_3003, IllegalReason.RESERVED_FUNCT),   # load funct3=3 (ld)
    (0x0000_2063, IllegalReason.RESERVED_FUNCT),   # branch funct3=2
    (0x0020_0073, IllegalReason.RESERVED_FUNCT),   # uret is not implemented
])
def test_illegal_words(word, reason):
    d = decode(word)
    assert isinstance(d, IllegalEncoding)
    assert d.reason is reason
    assert disassemble(d) == f".word {word:#010x}"


def test_decode_is_total_on_random_words():
    rng = random.Random(7)
    for _ in range(50_000):
        d = decode(rng.getrandbits(32))
        assert isinstance(d, (DecodedInstruction, IllegalEncoding))


@given(st.integers(0, 0xFFFF_FFFF))
def test_legal_words_are_canonical(word):
    d = decode(word)
    if isinstance(d, DecodedInstruction):
        assert encode(d) == word
        assert d.raw == word




def build_instruction(integer, choice):
    """A random legal instruction from ``integer(lo, hi)`` and ``choice(seq)``."""
    m = choice(list(Mnemonic))
    rd, rs1, rs2 = integer(0, 31), integer(0, 31), integer(0, 31)
    if m in (M.ECALL, M.EBREAK, M.MRET, M.WFI, M.FENCE_I):
        return make(m)
    if m is M.FENCE:
        return make(m, imm=integer(0, 0xFF))
    if m in CSR_MNEMONICS:
        csr = integer(0, 0xFFF)
        if m in CSR_IMM_MNEMONICS:
            return make(m, rd=rd, imm=integer(0, 31), csr_addr=csr)
        return make(m, rd=rd, rs1=rs1, csr_addr=csr)
    if m in SHIFT_IMM:
        return make(m, rd=rd, rs1=rs1, imm=integer(0, 31))
    if m in (M.LUI, M.AUIPC):
        return make(m, rd=rd, imm=integer(0, 0xFFFFF) << 12)
    if m is M.JAL:
        return make(m, rd=rd, imm=2 * integer(-(1 << 19), (1 << 19) - 1))
    if m in BRANCHES:
        return make(m, rs1=rs1, rs2=rs2, imm=2 * integer(-(1 << 11), (1 << 11) - 1))
    if m in STORES:
        return make(m, rs1=rs1, rs2=rs2, imm=integer(-2048, 2047))
    fmt = make(m).format
    if fmt is Format.R:
        return make(m, rd=rd, rs1=rs1, rs2=rs2)
    return make(m, rd=rd, rs1=rs1, imm=integer(-2048, 2047))


@st.composite
def instructions(draw):
    return build_instruction(lambda lo, hi: draw(st.integers(lo, hi)), lambda seq: draw(st.sampled_from(seq)))


def random_instruction(rng):
    return build_instruction(rng.randint, rng.choice)


@settings(max_examples=1000)
@given(instructions())
def test_decode_encode_round_trip(instr):
    assert decode(encode(instr)) == instr


@settings(max_examples=500)
@given(instructions())
def test_disassembly_reassembles(instr):
    # the assembler accepts exactly what the disassembler prints
    prog = assemble(disassemble(instr), origin=0x8000_0000)
    assert prog.words == [(0x8000_0000, instr.raw)]


@pytest.mark.parametrize("kwargs", [
    dict(mnemonic=M.ADDI, rd=32),
    dict(mnemonic=M.ADDI, imm=2048),
    dict(mnemonic=M.BEQ, imm=3),
    dict(mnemonic=M.BEQ, imm=4096),
    dict(mnemonic=M.JAL, imm=1 << 20),
    dict(mnemonic=M.SLLI, imm=32),
    dict(mnemonic=M.CSRRWI, imm=32),
    dict(mnemonic=M.CSRRW, csr_addr=0x1000),
])
def test_encode_rejects_out_of_range_fields(kwargs):
    with pytest.raises(EncodeError):
        make(**kwargs)


def test_mnemonic_inventory():
    base = [m for m in Mnemonic if m not in CSR_MNEMONICS and m not in (M.MRET, M.WFI, M.FENCE_I)]
    assert len(base) == 40
    assert len(CSR_MNEMONICS) == 6
    assert len(LOADS) == 5 and len(STORES) == 3 and len(BRANCHES) == 6
