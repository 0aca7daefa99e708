"""Valid/ready memory bus with per-port latency, RAM/ROM regions and MMIO devices.

The bus stands in for the AXI/AHB ports of the core.  Each port carries at
most one transaction; a transaction issued with latency ``L`` is answered on
the ``L``-th :meth:`Bus.tick` after the one in the cycle it was issued (``L=0``
answers in the same cycle).  While a transaction is in flight the port is not
ready, which is the back-pressure the pipeline stalls on.

:meth:`Bus.access` performs a transaction immediately; the reference
interpreter and the program loaders use it directly.
"""
from __future__ import annotations

import enum
import random
import sys
from dataclasses import dataclass
from typing import Callable, Iterable

from .isa import MASK32

MASK64 = (1 << 64) - 1


class Kind(str, enum.Enum):
    RAM = "ram"
    ROM = "rom"
    TIMER = "mmio-timer"
    CONSOLE = "mmio-console"
    EXIT = "mmio-exit"
    ITER = "mmio-iter"


class Port(enum.IntEnum):
    INSTRUCTION = 0
    DATA = 1


class Direction(str, enum.Enum):
    READ = "read"
    WRITE = "write"


class Status(str, enum.Enum):
    OKAY = "OKAY"
    ERROR = "ERROR"


# CLINT-compatible register offsets inside the timer region
MSIP_OFFSET = 0x0
MTIMECMP_OFFSET = 0x4000
MTIME_OFFSET = 0xBFF8

MMIO_KINDS = frozenset({Kind.TIMER, Kind.CONSOLE, Kind.EXIT, Kind.ITER})


@dataclass(frozen=True, slots=True)
class BusTransaction:
    address: int
    size: int
    direction: Direction = Direction.READ
    wdata: int = 0
    port: Port = Port.DATA

    def __post_init__(self):
        if self.size not in (1, 2, 4):
            raise ValueError(f"transaction size {self.size} not in {{1, 2, 4}}")
        if self.port is Port.INSTRUCTION and (self.size != 4 or self.direction is not Direction.READ):
            raise ValueError("instruction port issues only 4-byte reads")


@dataclass(frozen=True, slots=True)
class BusResponse:
    status: Status
    rdata: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OKAY


OKAY_EMPTY = BusResponse(Status.OKAY, 0)
ERROR = BusResponse(Status.ERROR, 0)


@dataclass(slots=True)
class Region:
    name: str
    base: int
    size: int
    kind: Kind
    latency: object = None  # overrides the port latency when set

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, address: int, size: int = 1) -> bool:
        return self.base <= address and address + size <= self.base + self.size


class MemoryMap:
    """Disjoint list of regions."""

    def __init__(self, regions: Iterable[Region]):
        self.regions = sorted(regions, key=lambda r: r.base)
        for a, b in zip(self.regions, self.regions[1:]):
            if a.end > b.base:
                raise ValueError(f"regions {a.name!r} and {b.name!r} overlap")
        for r in self.regions:
            r.kind = Kind(r.kind)
            if r.size <= 0 or r.base < 0 or r.end > 1 << 32:
                raise ValueError(f"region {r.name!r} has bad bounds")

    def __eq__(self, other) -> bool:
        return isinstance(other, MemoryMap) and self.regions == other.regions

    @classmethod
    def default(cls) -> MemoryMap:
        return cls([
            Region("rom", 0x8000_0000, 4 << 20, Kind.ROM),
            Region("ram", 0x8040_0000, 4 << 20, Kind.RAM),
            Region("clint", 0x0200_0000, 0x1_0000, Kind.TIMER),
            Region("console", 0x1000_0000, 4, Kind.CONSOLE),
            Region("exit", 0x1000_0004, 4, Kind.EXIT),
            Region("iterations", 0x1000_0008, 4, Kind.ITER),
        ])

    @classmethod
    def parse(cls, text: str) -> MemoryMap:
        """Parse ``name:base:size:kind`` lines (``#`` comments allowed)."""
        regions = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(":")]
            if len(parts) != 4:
                raise ValueError(f"memory map line {lineno}: expected name:base:size:kind")
            name, base, size, kind = parts
            try:
                regions.append(Region(name, int(base, 0), int(size, 0), Kind(kind)))
            except ValueError as exc:
                raise ValueError(f"memory map line {lineno}: {exc}") from None
        return cls(regions)

    def find(self, address: int, size: int = 1) -> Region | None:
        for r in self.regions:
            if r.base <= address and address + size <= r.base + r.size:
                return r
        return None

    def by_kind(self, kind: Kind) -> Region | None:
        for r in self.regions:
            if r.kind is kind:
                return r
        return None

    def __iter__(self):
        return iter(self.regions)


def aligned_pieces(address: int, size: int) -> list[tuple[int, int]]:
    """Split an access into the fewest naturally aligned (address, size) pieces."""
    if address % size == 0:
        return [(address, size)]
    pieces = []
    end = address + size
    while address < end:
        for s in (4, 2, 1):
            if address % s == 0 and address + s <= end:
                pieces.append((address, s))
                address += s
                break
    return pieces


@dataclass(slots=True)
class BusPort:
    latency: object = 0
    in_flight: list | None = None  # [transaction, cycles_remaining]

    @property
    def ready(self) -> bool:
        return self.in_flight is None


class Bus:
    def __init__(self, memory_map: MemoryMap | None = None, *,
                 imem_latency=0, dmem_latency=0,
                 error_addresses: Iterable[int] = (), seed: int | None = 0,
                 console: Callable[[bytes], None] | None = None):
        self.map = memory_map or MemoryMap.default()
        self.storage: dict[str, bytearray] = {
            r.name: bytearray(r.size) for r in self.map if r.kind in (Kind.RAM, Kind.ROM)
        }
        self.ports = {Port.INSTRUCTION: BusPort(imem_latency), Port.DATA: BusPort(dmem_latency)}
        self._port_items = tuple(self.ports.items())
        self._region_latency = any(r.latency is not None for r in self.map)
        self.error_addresses = frozenset(error_addresses)
        self.rng = random.Random(seed)
        self.console = console
        self.console_output = bytearray()
        self.mtime = 0
        self.mtimecmp = MASK64
        self.msip = 0
        self.external_irq = False
        self.exit_code: int | None = None
        self.iterations: int | None = None
        self._last = self.map.regions[0] if self.map.regions else None

    # -- functional access --------------------------------------------------

    def _region(self, address: int, size: int) -> Region | None:
        r = self._last
        if r is not None and r.base <= address and address + size <= r.base + r.size:
            return r
        r = self.map.find(address, size)
        if r is not None:
            self._last = r
        return r

    def access(self, txn: BusTransaction) -> BusResponse:
        """Perform ``txn`` now and return its response."""
        address, size = txn.address, txn.size
        if self.error_addresses and not self.error_addresses.isdisjoint(range(address, address + size)):
            return ERROR
        region = self._region(address, size)
        if region is None:
            return ERROR
        kind = region.kind
        offset = address - region.base
        write = txn.direction is Direction.WRITE
        if kind is Kind.RAM or kind is Kind.ROM:
            mem = self.storage[region.name]
            if write:
                if kind is Kind.ROM:
                    return ERROR
                mem[offset:offset + size] = (txn.wdata & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
                return OKAY_EMPTY
            return BusResponse(Status.OKAY, int.from_bytes(mem[offset:offset + size], "little"))
        if kind is Kind.TIMER:
            return self._timer_access(offset, size, write, txn.wdata)
        if write:
            if kind is Kind.CONSOLE:
                self._console_byte(txn.wdata & 0xFF)
            elif kind is Kind.EXIT:
                self.exit_code = txn.wdata & MASK32
            elif kind is Kind.ITER:
                self.iterations = txn.wdata & MASK32
        return OKAY_EMPTY

    def _console_byte(self, b: int) -> None:
        self.console_output.append(b)
        if self.console is not None:
            self.console(bytes((b,)))

    def _timer_regs(self):
        return ((MSIP_OFFSET, 4, "msip"), (MTIMECMP_OFFSET, 8, "mtimecmp"), (MTIME_OFFSET, 8, "mtime"))

    def _timer_access(self, offset: int, size: int, write: bool, wdata: int) -> BusResponse:
        rdata = 0
        for i in range(size):
            off = offset + i
            for base, width, name in self._timer_regs():
                if base <= off < base + width:
                    shift = 8 * (off - base)
                    value = getattr(self, name)
                    if write:
                        byte = (wdata >> (8 * i)) & 0xFF
                        value = (value & ~(0xFF << shift)) | (byte << shift)
                        if name == "msip":
                            value &= 1
                        setattr(self, name, value)
                    else:
                        rdata |= ((value >> shift) & 0xFF) << (8 * i)
                    break
        return BusResponse(Status.OKAY, rdata)

    def read(self, address: int, size: int, port: Port = Port.DATA) -> BusResponse:
        return self.access(BusTransaction(address, size, Direction.READ, 0, port))

    def write(self, address: int, size: int, value: int) -> BusResponse:
        return self.access(BusTransaction(address, size, Direction.WRITE, value, Port.DATA))

    # -- backdoor used by loaders and tests ---------------------------------

    def load(self, address: int, data: bytes) -> None:
        """Copy ``data`` into RAM/ROM storage, ignoring ROM write protection."""
        if not data:
            return
        region = self.map.find(address, len(data))
        if region is None or region.kind not in (Kind.RAM, Kind.ROM):
            raise ValueError(f"cannot place {len(data)} bytes at {address:#010x}: not inside one ram/rom region")
        off = address - region.base
        self.storage[region.name][off:off + len(data)] = data

    def peek(self, address: int, size: int) -> bytes:
        region = self.map.find(address, size)
        if region is None or region.kind not in (Kind.RAM, Kind.ROM):
            raise ValueError(f"{address:#010x} is not backed by memory")
        off = address - region.base
        return bytes(self.storage[region.name][off:off + size])

    # -- cycle-level handshake ----------------------------------------------

    def ready(self, port: Port) -> bool:
        return self.ports[port].in_flight is None

    def _latency(self, port: Port, address: int) -> int:
        lat = self.ports[port].latency
        if self._region_latency:
            region = self._region(address, 1)
            if region is not None and region.latency is not None:
                lat = region.latency
        if isinstance(lat, tuple):
            return self.rng.randint(lat[0], lat[1])
        return lat

    def issue(self, port: Port, txn: BusTransaction) -> bool:
        p = self.ports[port]
        if p.in_flight is not None:
            return False
        p.in_flight = [txn, self._latency(port, txn.address)]
        return True

    def tick(self) -> list[tuple[Port, BusResponse]]:
        """Advance one cycle; returns the responses completing in it."""
        out = []
        for port, p in self._port_items:
            f = p.in_flight
            if f is None:
                continue
            if f[1] == 0:
                p.in_flight = None
                out.append((port, self.access(f[0])))
            else:
                f[1] -= 1
        self.mtime = (self.mtime + 1) & MASK64
        return out

    def timer_check(self) -> bool:
        return self.mtime >= self.mtimecmp

    def interrupt_lines(self) -> int:
        """mip bits driven by the devices (MSIP, MTIP, MEIP)."""
        return ((8 if self.msip & 1 else 0) | (0x80 if self.mtime >= self.mtimecmp else 0)
                | (0x800 if self.external_irq else 0))


def stdout_console(data: bytes) -> None:
    sys.stdout.buffer.write(data)
    sys.stdout.flush()
