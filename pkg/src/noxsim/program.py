"""Program images: flat binaries, static ELF32 executables, and a small assembler.

The assembler understands the same syntax :func:`noxsim.isa.disassemble`
prints (numeric register names only), labels, ``.word``/``.org`` and a few
pseudo-instructions, which is enough to write self-checking test programs
without a cross toolchain.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

from .bus import Bus, Kind, MemoryMap
from .isa import (BRANCHES, CSR_MNEMONICS, LOADS, STORES, EncodeError, Mnemonic, encode_fields, sext)
from .state import CSR_ADDR

M = Mnemonic


class LoadError(ValueError):
    pass


@dataclass
class LoadedImage:
    segments: list[tuple[int, bytes]]
    entry: int
    symbols: dict[str, int] | None = None

    def __post_init__(self):
        if self.entry & 3:
            raise LoadError(f"entry point {self.entry:#010x} is not 4-byte aligned")


def _check_placement(memory_map: MemoryMap, address: int, size: int) -> None:
    region = memory_map.find(address, max(size, 1))
    if region is None or region.kind not in (Kind.RAM, Kind.ROM):
        raise LoadError(f"{size} bytes at {address:#010x} do not fit inside a ram/rom region")


def load_flat(data: bytes, base: int, memory_map: MemoryMap | None = None) -> LoadedImage:
    memory_map = memory_map or MemoryMap.default()
    _check_placement(memory_map, base, len(data))
    return LoadedImage([(base, bytes(data))], base)


EM_RISCV = 243
ET_EXEC = 2
PT_LOAD = 1
SHT_SYMTAB = 2


def load_elf(data: bytes, memory_map: MemoryMap | None = None) -> LoadedImage:
    """Load a static little-endian ELF32 RISC-V executable."""
    memory_map = memory_map or MemoryMap.default()
    if len(data) < 52 or data[:4] != b"\x7fELF":
        raise LoadError("not an ELF file")
    if data[4] != 1:
        raise LoadError(f"unsupported ELF class {data[4]} (need ELFCLASS32)")
    if data[5] != 1:
        raise LoadError("unsupported ELF data encoding (need little-endian)")
    (e_type, e_machine, _ver, e_entry, e_phoff, e_shoff, _flags, _ehsize, e_phentsize, e_phnum,
     e_shentsize, e_shnum, _shstrndx) = struct.unpack_from("<HHIIIIIHHHHHH", data, 16)
    if e_machine != EM_RISCV:
        raise LoadError(f"ELF machine {e_machine} is not RISC-V ({EM_RISCV})")
    if e_type != ET_EXEC:
        raise LoadError(f"ELF type {e_type} is not ET_EXEC")

    segments = []
    for i in range(e_phnum):
        off = e_phoff + i * e_phentsize
        if off + 32 > len(data):
            raise LoadError("program header table truncated")
        p_type, p_offset, _vaddr, p_paddr, p_filesz, p_memsz, _pflags, _align = struct.unpack_from("<8I", data, off)
        if p_type != PT_LOAD:
            continue
        if p_offset + p_filesz > len(data) or p_memsz < p_filesz:
            raise LoadError(f"segment {i} has inconsistent sizes")
        payload = data[p_offset:p_offset + p_filesz] + bytes(p_memsz - p_filesz)
        _check_placement(memory_map, p_paddr, len(payload))
        segments.append((p_paddr, payload))

    symbols = {}
    for i in range(e_shnum):
        off = e_shoff + i * e_shentsize
        if off + 40 > len(data):
            break
        _name, sh_type, _f, _addr, sh_offset, sh_size, sh_link, _info, _al, sh_entsize = struct.unpack_from("<10I", data, off)
        if sh_type != SHT_SYMTAB or not sh_entsize:
            continue
        str_off, str_size = struct.unpack_from("<II", data, e_shoff + sh_link * e_shentsize + 16)
        strtab = data[str_off:str_off + str_size]
        for j in range(sh_size // sh_entsize):
            st_name, st_value = struct.unpack_from("<II", data, sh_offset + j * sh_entsize)
            if st_name:
                name = strtab[st_name:strtab.index(b"\0", st_name)].decode(errors="replace")
                symbols[name] = st_value
    return LoadedImage(segments, e_entry, symbols)


def load_image(bus: Bus, image: LoadedImage) -> None:
    for address, payload in image.segments:
        bus.load(address, payload)


# -- assembler ----------------------------------------------------------------


class AsmError(ValueError):
    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class AsmProgram:
    source: str
    origin: int
    labels: dict[str, int] = field(default_factory=dict)
    words: list[tuple[int, int]] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        if not self.words:
            return b""
        end = max(a for a, _ in self.words) + 4
        buf = bytearray(end - self.origin)
        for a, w in self.words:
            buf[a - self.origin:a - self.origin + 4] = w.to_bytes(4, "little")
        return bytes(buf)

    def image(self, memory_map: MemoryMap | None = None) -> LoadedImage:
        img = load_flat(self.to_bytes(), self.origin, memory_map)
        img.symbols = dict(self.labels)
        return img


_REG = re.compile(r"^x([0-9]|[12][0-9]|3[01])$")
_MEM = re.compile(r"^(.*)\((\s*x\d+\s*)\)$")
_LABEL = re.compile(r"^([A-Za-z_.$][\w.$]*)\s*:")
_SYMBOL = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_RELOC = re.compile(r"^%(hi|lo)\((.*)\)$")

_PSEUDO_SIZE = {"nop": 1, "mv": 1, "j": 1, "ret": 1, "la": 2, "csrr": 1, "csrw": 1, "csrs": 1,
                "csrc": 1, "csrwi": 1, "csrsi": 1, "csrci": 1}


class _Line:
    __slots__ = ("lineno", "addr", "op", "args")

    def __init__(self, lineno, addr, op, args):
        self.lineno, self.addr, self.op, self.args = lineno, addr, op, args


def _split_args(text: str) -> list[str]:
    return [a.strip() for a in text.split(",")] if text.strip() else []


def _strip_comment(line: str) -> str:
    if "#" not in line and "//" not in line:
        return line.strip()
    for marker in ("#", "//"):
        i = line.find(marker)
        if i >= 0:
            line = line[:i]
    return line.strip()


def assemble(source: str, origin: int = 0x8000_0000) -> AsmProgram:
    """Two-pass assembly of ``source`` placed at ``origin``."""
    prog = AsmProgram(source, origin)
    lines: list[_Line] = []
    addr = origin

    # pass 1: addresses and labels
    for lineno, raw in enumerate(source.splitlines(), 1):
        text = _strip_comment(raw)
        while True:
            m = _LABEL.match(text)
            if not m:
                break
            name = m.group(1)
            if name in prog.labels:
                raise AsmError(f"label {name!r} defined twice", lineno)
            prog.labels[name] = addr
            text = text[m.end():].strip()
        if not text:
            continue
        parts = text.split(None, 1)
        op = parts[0].lower()
        args = _split_args(parts[1] if len(parts) > 1 else "")
        if op == ".org":
            if len(args) != 1:
                raise AsmError(".org takes one address", lineno)
            target = _number(args[0], lineno)
            if target < addr:
                raise AsmError(f".org {target:#x} moves backwards from {addr:#x}", lineno)
            if target & 3:
                raise AsmError(".org address must be word aligned", lineno)
            addr = target
            continue
        if op == ".word":
            if not args:
                raise AsmError(".word needs at least one value", lineno)
            lines.append(_Line(lineno, addr, op, args))
            addr += 4 * len(args)
            continue
        if op == "li":
            if len(args) != 2:
                raise AsmError("li takes rd, value", lineno)
            try:
                v = _number(args[1], lineno)
            except AsmError:
                n = 2
            else:
                n = 1 if -2048 <= sext(v, 32) <= 2047 else 2
            lines.append(_Line(lineno, addr, op, args))
            addr += 4 * n
            continue
        if op in _PSEUDO_SIZE:
            lines.append(_Line(lineno, addr, op, args))
            addr += 4 * _PSEUDO_SIZE[op]
            continue
        if op not in _MNEMONICS:
            raise AsmError(f"unknown mnemonic {op!r}", lineno)
        lines.append(_Line(lineno, addr, op, args))
        addr += 4

    # pass 2: encode
    for ln in lines:
        for i, word in enumerate(_emit(ln, prog.labels)):
            prog.words.append((ln.addr + 4 * i, word))
    return prog


def _number(tok: str, lineno: int) -> int:
    try:
        return int(tok.replace("_", ""), 0)
    except ValueError:
        raise AsmError(f"bad number {tok!r}", lineno) from None


def _value(tok: str, labels: dict[str, int], lineno: int) -> int:
    tok = tok.strip()
    m = _RELOC.match(tok)
    if m:
        v = _value(m.group(2), labels, lineno)
        return ((v + 0x800) >> 12) & 0xFFFFF if m.group(1) == "hi" else sext(v, 12)
    m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*([+-])\s*(\S+)$", tok)
    if m and m.group(1) in labels:
        off = _number(m.group(3), lineno)
        return labels[m.group(1)] + (off if m.group(2) == "+" else -off)
    if _SYMBOL.match(tok):
        if tok in labels:
            return labels[tok]
        raise AsmError(f"undefined label {tok!r}", lineno)
    return _number(tok, lineno)


_REGS = {f"x{i}": i for i in range(32)}
_MNEMONICS = {m.value: m for m in Mnemonic}


def _reg(tok: str, lineno: int) -> int:
    r = _REGS.get(tok)
    if r is None:
        r = _REGS.get(tok.strip().lower())
        if r is None:
            raise AsmError(f"expected a register x0..x31, got {tok!r}", lineno)
    return r


def _csr(tok: str, labels, lineno: int) -> int:
    tok = tok.strip().lower()
    if tok in CSR_ADDR:
        return CSR_ADDR[tok]
    v = _number(tok, lineno)
    if not 0 <= v <= 0xFFF:
        raise AsmError(f"csr address {tok} out of range", lineno)
    return v


def _mem_operand(tok: str, labels, lineno: int) -> tuple[int, int]:
    m = _MEM.match(tok.strip())
    if not m:
        raise AsmError(f"expected offset(xN), got {tok!r}", lineno)
    off = m.group(1).strip()
    return (_value(off, labels, lineno) if off else 0), _reg(m.group(2), lineno)


def _target(tok: str, pc: int, labels, lineno: int) -> int:
    tok = tok.strip()
    if _SYMBOL.match(tok) or re.match(r"^[A-Za-z_.$][\w.$]*\s*[+-]", tok):
        return _value(tok, labels, lineno) - pc
    return _number(tok, lineno)


_FENCE_SET = {c: 8 >> i for i, c in enumerate("iorw")}


def _fence_bits(tok: str, lineno: int) -> int:
    tok = tok.strip().lower()
    if tok == "0":
        return 0
    bits = 0
    for c in tok:
        if c not in _FENCE_SET:
            raise AsmError(f"bad fence set {tok!r}", lineno)
        bits |= _FENCE_SET[c]
    return bits


def _nargs(ln: _Line, n: int) -> list[str]:
    if len(ln.args) != n:
        raise AsmError(f"{ln.op} takes {n} operand(s), got {len(ln.args)}", ln.lineno)
    return ln.args


def _emit(ln: _Line, labels: dict[str, int]) -> list[int]:
    try:
        return _expand(ln, labels)
    except EncodeError as exc:
        raise AsmError(str(exc), ln.lineno) from None


def _expand(ln: _Line, labels: dict[str, int]) -> list:
    op, lineno, pc = ln.op, ln.lineno, ln.addr
    A = ln.args
    R = lambda t: _reg(t, lineno)  # noqa: E731
    V = lambda t: _value(t, labels, lineno)  # noqa: E731

    if op == ".word":
        return [V(a) & 0xFFFF_FFFF for a in A]
    if op == "nop":
        _nargs(ln, 0)
        return [encode_fields(M.ADDI)]
    if op == "mv":
        rd, rs = _nargs(ln, 2)
        return [encode_fields(M.ADDI, rd=R(rd), rs1=R(rs))]
    if op == "j":
        (t,) = _nargs(ln, 1)
        return [encode_fields(M.JAL, imm=_target(t, pc, labels, lineno))]
    if op == "ret":
        _nargs(ln, 0)
        return [encode_fields(M.JALR, rs1=1)]
    if op == "li":
        rd, t = _nargs(ln, 2)
        rd = R(rd)
        v = V(t) & 0xFFFF_FFFF
        try:
            literal = True
            _number(t, lineno)
        except AsmError:
            literal = False
        if literal and -2048 <= sext(v, 32) <= 2047:
            return [encode_fields(M.ADDI, rd=rd, imm=sext(v, 32))]
        hi = ((v + 0x800) >> 12) & 0xFFFFF
        return [encode_fields(M.LUI, rd=rd, imm=hi << 12), encode_fields(M.ADDI, rd=rd, rs1=rd, imm=sext(v, 12))]
    if op == "la":
        rd, t = _nargs(ln, 2)
        rd = R(rd)
        off = (V(t) - pc) & 0xFFFF_FFFF
        hi = ((off + 0x800) >> 12) & 0xFFFFF
        return [encode_fields(M.AUIPC, rd=rd, imm=hi << 12), encode_fields(M.ADDI, rd=rd, rs1=rd, imm=sext(off, 12))]
    if op == "csrr":
        rd, c = _nargs(ln, 2)
        return [encode_fields(M.CSRRS, rd=R(rd), csr_addr=_csr(c, labels, lineno))]
    if op in ("csrw", "csrs", "csrc"):
        c, rs = _nargs(ln, 2)
        m = {"csrw": M.CSRRW, "csrs": M.CSRRS, "csrc": M.CSRRC}[op]
        return [encode_fields(m, rs1=R(rs), csr_addr=_csr(c, labels, lineno))]
    if op in ("csrwi", "csrsi", "csrci"):
        c, v = _nargs(ln, 2)
        m = {"csrwi": M.CSRRWI, "csrsi": M.CSRRSI, "csrci": M.CSRRCI}[op]
        return [encode_fields(m, imm=V(v), csr_addr=_csr(c, labels, lineno))]

    m = _MNEMONICS[op]
    if m in (M.ECALL, M.EBREAK, M.MRET, M.WFI, M.FENCE_I):
        _nargs(ln, 0)
        return [encode_fields(m)]
    if m is M.FENCE:
        if not A:
            return [encode_fields(m, imm=0x0FF)]
        p, s = _nargs(ln, 2)
        return [encode_fields(m, imm=(_fence_bits(p, lineno) << 4) | _fence_bits(s, lineno))]
    if m in CSR_MNEMONICS:
        rd, c, src = _nargs(ln, 3)
        if m.value.endswith("i"):
            return [encode_fields(m, rd=R(rd), imm=V(src), csr_addr=_csr(c, labels, lineno))]
        return [encode_fields(m, rd=R(rd), rs1=R(src), csr_addr=_csr(c, labels, lineno))]
    if m in (M.LUI, M.AUIPC):
        rd, v = _nargs(ln, 2)
        v = V(v)
        if not -(1 << 19) <= v < (1 << 20):
            raise AsmError(f"{op} immediate {v} does not fit in 20 bits", lineno)
        return [encode_fields(m, rd=R(rd), imm=(v & 0xFFFFF) << 12)]
    if m is M.JAL:
        if len(A) == 1:
            return [encode_fields(m, rd=1, imm=_target(A[0], pc, labels, lineno))]
        rd, t = _nargs(ln, 2)
        return [encode_fields(m, rd=R(rd), imm=_target(t, pc, labels, lineno))]
    if m is M.JALR:
        if len(A) == 1:
            return [encode_fields(m, rd=1, rs1=R(A[0]))]
        if len(A) == 2:
            imm, rs1 = _mem_operand(A[1], labels, lineno)
            return [encode_fields(m, rd=R(A[0]), rs1=rs1, imm=imm)]
        rd, rs1, imm = _nargs(ln, 3)
        return [encode_fields(m, rd=R(rd), rs1=R(rs1), imm=V(imm))]
    if m in BRANCHES:
        a, b, t = _nargs(ln, 3)
        off = _target(t, pc, labels, lineno)
        if not -4096 <= off < 4096:
            raise AsmError(f"branch target {t!r} out of range ({off} bytes)", lineno)
        return [encode_fields(m, rs1=R(a), rs2=R(b), imm=off)]
    if m in LOADS:
        rd, memop = _nargs(ln, 2)
        imm, rs1 = _mem_operand(memop, labels, lineno)
        return [encode_fields(m, rd=R(rd), rs1=rs1, imm=imm)]
    if m in STORES:
        rs2, memop = _nargs(ln, 2)
        imm, rs1 = _mem_operand(memop, labels, lineno)
        return [encode_fields(m, rs1=rs1, rs2=R(rs2), imm=imm)]
    if m in (M.SLLI, M.SRLI, M.SRAI, M.ADDI, M.SLTI, M.SLTIU, M.XORI, M.ORI, M.ANDI):
        rd, rs1, imm = _nargs(ln, 3)
        return [encode_fields(m, rd=R(rd), rs1=R(rs1), imm=V(imm))]
    rd, rs1, rs2 = _nargs(ln, 3)
    return [encode_fields(m, rd=R(rd), rs1=R(rs1), rs2=R(rs2))]
