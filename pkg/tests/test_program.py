import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_elf, run_iss
from noxsim import Bus, MemoryMap, load_image
from noxsim.isa import decode, disassemble as _dis
from noxsim.program import AsmError, LoadError, LoadedImage, assemble, load_elf, load_flat

ORIGIN = 0x8000_0000
RAM = 0x8040_0000


def disassemble(word):
    return _dis(decode(word))


def words(src, origin=ORIGIN):
    return [w for _, w in assemble(src, origin).words]


# -- assembler ---------------------------------------------------------------

def test_examples():
    assert words("nop") == [0x0000_0013]
    assert words("loop: beq x0, x0, loop") == [0x0000_0063]
    assert [disassemble(w) for w in words("li x5, 0x12345678")] == ["lui x5, 74565", "addi x5, x5, 1656"]
    assert words("li x5, -1") == [0xFFF0_0293]
    assert words("ecall\nebreak\nmret\nwfi") == [0x73, 0x0010_0073, 0x3020_0073, 0x1050_0073]


def test_labels_and_directives():
    prog = assemble("""
        start: j end      # forward reference
        .word 0xdeadbeef, 7
        .org 0x80000010
        end: jal start
    """)
    assert prog.labels == {"start": ORIGIN, "end": ORIGIN + 0x10}
    assert prog.words[1:3] == [(ORIGIN + 4, 0xDEADBEEF), (ORIGIN + 8, 7)]
    assert disassemble(prog.words[-1][1]) == "jal x1, -16"
    blob = prog.to_bytes()
    assert len(blob) == 0x14 and blob[12:16] == bytes(4)


def test_la_and_relocations():
    src = "la x1, d\nlui x2, %hi(d)\naddi x2, x2, %lo(d)\nla x3, d+8\nebreak\n.org 0x80000800\nd: .word 1"
    assert assemble(src).labels["d"] == 0x8000_0800
    res, _ = run_iss(src, ebreak=True)
    assert res.state.regs[1] == res.state.regs[2] == 0x8000_0800
    assert res.state.regs[3] == 0x8000_0808


@settings(max_examples=200, deadline=None)
@given(st.integers(-(1 << 31), (1 << 32) - 1))
def test_li_materializes_any_value(value):
    res, _ = run_iss(f"li x7, {value}\nebreak\n", ebreak=True)
    assert res.state.regs[7] == value & 0xFFFF_FFFF


@pytest.mark.parametrize("src, lineno, fragment", [
    ("nop\nj nowhere\n", 2, "undefined label"),
    ("beq x0, x0, far\n.org 0x80002000\nfar: nop\n", 1, "out of range"),
    ("nop\nnop\nfrobnicate x1\n", 3, "unknown mnemonic"),
    ("addi x1, x2\n", 1, "operand"),
    ("addi x32, x0, 1\n", 1, "register"),
    ("addi x1, x0, 4096\n", 1, ""),
    ("a: nop\na: nop\n", 2, "twice"),
    ("csrr x1, bogus\n", 1, ""),
])
def test_errors_carry_line_numbers(src, lineno, fragment):
    with pytest.raises(AsmError) as info:
        assemble(src)
    assert info.value.lineno == lineno
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"line {lineno}:")


def test_disassembly_reassembles():
    src = "add x1, x2, x3\nlw x4, -8(x5)\nsb x6, 3(x7)\ncsrrw x1, 0x305, x2\ncsrrsi x0, 0x300, 8\nfence iorw, iorw\nauipc x9, 1\n"
    ws = words(src)
    assert words("\n".join(disassemble(w) for w in ws)) == ws


# -- loaders -----------------------------------------------------------------

def test_flat_image():
    img = load_flat(b"\x13\x00\x00\x00", ORIGIN)
    assert img.entry == ORIGIN and img.segments == [(ORIGIN, b"\x13\x00\x00\x00")]
    assert load_flat(b"", ORIGIN).segments == [(ORIGIN, b"")]
    with pytest.raises(LoadError):
        load_flat(b"\0" * 16, 0x4000_0000)
    with pytest.raises(LoadError):
        load_flat(b"\0" * 8, ORIGIN + (4 << 20) - 4)
    with pytest.raises(LoadError):
        LoadedImage([], ORIGIN + 2)


def test_minimal_elf():
    code = assemble("addi x1, x0, 42\nebreak\n").to_bytes()
    img = load_elf(make_elf([(ORIGIN, code, len(code))], ORIGIN))
    assert img.entry == ORIGIN and img.segments == [(ORIGIN, code)]


def test_elf_bss_is_zero_filled_and_symbols_read():
    data = b"\x01\x02\x03\x04"
    blob = make_elf([(ORIGIN, b"\x13\0\0\0", 4), (RAM, data, 64)], ORIGIN,
                    symbols={"_start": ORIGIN, "buffer": RAM})
    img = load_elf(blob)
    assert img.segments[1] == (RAM, data + bytes(60))
    assert img.symbols == {"_start": ORIGIN, "buffer": RAM}
    bus = Bus()
    bus.load(RAM + 4, b"\xff" * 60)
    load_image(bus, img)
    assert bus.peek(RAM, 64) == data + bytes(60)


@pytest.mark.parametrize("kw, fragment", [
    (dict(elf_class=2), "ELFCLASS32"),
    (dict(machine=62), "RISC-V"),
    (dict(etype=3), "ET_EXEC"),
])
def test_elf_rejections(kw, fragment):
    with pytest.raises(LoadError, match=fragment):
        load_elf(make_elf([(ORIGIN, b"\x13\0\0\0", 4)], ORIGIN, **kw))


def test_elf_rejects_garbage_and_misplaced_segments():
    with pytest.raises(LoadError):
        load_elf(b"MZ" + bytes(100))
    with pytest.raises(LoadError):
        load_elf(make_elf([(0x1000, b"\x13\0\0\0", 4)], 0x1000))
    with pytest.raises(LoadError):
        load_elf(make_elf([(ORIGIN, b"\x13\0\0\0", 4)], ORIGIN + 1))


def test_elf_and_flat_give_identical_memory():
    code = assemble("li x1, 5\nsw x1, 0(x0)\nebreak\n").to_bytes()
    a, b = Bus(), Bus()
    load_image(a, load_elf(make_elf([(ORIGIN, code, len(code))], ORIGIN)))
    load_image(b, load_flat(code, ORIGIN))
    assert a.peek(ORIGIN, 4096) == b.peek(ORIGIN, 4096)


def test_loading_respects_a_custom_map():
    mm = MemoryMap.parse("rom:0x1000:0x1000:rom\nram:0x2000:0x1000:ram")
    assert load_flat(b"\0" * 8, 0x1000, mm).entry == 0x1000
    with pytest.raises(LoadError):
        load_flat(b"\0" * 8, ORIGIN, mm)
