"""Command-line runner: ``noxsim run``, ``noxsim verify`` and ``noxsim bench``.

Exit codes of ``run`` and ``verify`` (a closed set):

    0        the program wrote 0 to the exit port, or stopped on EBREAK
    1..255   the low byte of a nonzero value written to the exit port
             (a nonzero value whose low byte is 0 maps to 1)
    2        command-line usage error
    201      the image could not be loaded (bad file, bad ELF, outside the map)
    202      --max-cycles elapsed without an exit
    203      lockstep divergence (--verify or the verify subcommand)
    204      the core went to sleep in WFI with no interrupt that could wake it

A program can itself write 2 or 201..204 to the exit port; these values are
reported unchanged, so scripts that need to tell them apart should read the
``stop_reason`` field of the JSON statistics.

``bench`` exits 0 when every timing claim holds and 1 otherwise.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import KERNELS, run_suite
from .bus import MemoryMap, stdout_console
from .lockstep import lockstep
from .pipeline import Core, CoreConfig, StatsReport
from .program import AsmError, LoadError, assemble, load_elf, load_flat, load_image

EXIT_LOAD_ERROR = 201
EXIT_MAX_CYCLES = 202
EXIT_DIVERGENCE = 203
EXIT_WFI_SLEEP = 204

MAP_ENV = "NOXSIM_MAP"


def _latency(text: str):
    """``N`` or ``LO-HI`` (inclusive range, drawn per transaction)."""
    try:
        if "-" in text:
            lo, hi = (int(t) for t in text.split("-", 1))
            if not 0 <= lo <= hi:
                raise ValueError
            return (lo, hi)
        v = int(text)
        if v < 0:
            raise ValueError
        return v
    except ValueError:
        raise argparse.ArgumentTypeError(f"latency must be N or LO-HI with 0 <= LO <= HI, got {text!r}") from None


def _hex(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex address: {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def memory_map_from_env(environ=os.environ) -> MemoryMap:
    """The default map, or the one described by ``$NOXSIM_MAP``.

    The variable holds either the map text itself (``name:base:size:kind``
    per line, ``;`` also separates entries) or ``@path`` to read it from a file.
    """
    text = environ.get(MAP_ENV)
    if not text:
        return MemoryMap.default()
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    return MemoryMap.parse(text.replace(";", "\n"))


def _core_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fifo-depth", type=_positive, default=2, metavar="N")
    p.add_argument("--imem-latency", type=_latency, default=0, metavar="N",
                   help="instruction port latency in cycles, or LO-HI for a random range")
    p.add_argument("--dmem-latency", type=_latency, default=0, metavar="N",
                   help="data port latency in cycles, or LO-HI for a random range")
    p.add_argument("--misaligned-trap", choices=("on", "off"), default="off",
                   help="trap on misaligned loads/stores (off: split into aligned pieces)")
    p.add_argument("--seed", type=int, default=None, metavar="N",
                   help="randomized-latency mode: each transaction draws its latency from 0..N "
                        "(or the given LO-HI range) with this seed")


def _image_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--bin", type=Path, metavar="PATH", help="flat binary, loaded at the reset pc")
    src.add_argument("--elf", type=Path, metavar="PATH", help="static ELF32 RISC-V executable")
    src.add_argument("--asm", type=Path, metavar="PATH", help="assembly source")
    p.add_argument("--reset-pc", type=_hex, default=None, metavar="HEX",
                   help="start address (default: ELF entry, or 80000000 for --bin/--asm)")
    p.add_argument("--max-cycles", type=_positive, default=10_000_000, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noxsim", description="Cycle-level NoX RV32I-Zicsr simulator.",
                                     epilog="Exit codes are listed in `python -m noxsim --help-exit-codes`.")
    parser.add_argument("--help-exit-codes", action="store_true", help="describe exit codes and quit")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="simulate a program")
    _image_args(run)
    _core_args(run)
    run.add_argument("--trace", metavar="PATH", help="retirement trace file ('-' for stdout)")
    run.add_argument("--stats", metavar="PATH", help="JSON statistics file ('-' for stdout)")
    run.add_argument("--verify", action="store_true", help="check every retirement against the reference model")

    ver = sub.add_parser("verify", help="lockstep-check a program against the reference model")
    _image_args(ver)
    _core_args(ver)

    bench = sub.add_parser("bench", help="run the microbenchmark suite and check the timing claims")
    _core_args(bench)
    bench.add_argument("-n", type=_positive, default=200, help="repetitions per kernel")
    bench.add_argument("--jobs", type=_positive, default=1, metavar="N", help="worker processes")
    bench.add_argument("--json", metavar="PATH", help="write results as JSON ('-' for stdout)")
    return parser


def _config(args, reset_pc: int, memory_map: MemoryMap) -> CoreConfig:
    imem, dmem = args.imem_latency, args.dmem_latency
    if args.seed is not None:
        imem = imem if isinstance(imem, tuple) else (0, imem)
        dmem = dmem if isinstance(dmem, tuple) else (0, dmem)
    return CoreConfig(fifo_depth=args.fifo_depth, misaligned_trap=args.misaligned_trap == "on",
                      imem_latency=imem, dmem_latency=dmem, reset_pc=reset_pc, memory_map=memory_map,
                      seed=args.seed if args.seed is not None else 0)


def _load(args, memory_map: MemoryMap):
    default_pc = 0x8000_0000 if args.reset_pc is None else args.reset_pc
    if args.elf is not None:
        image = load_elf(args.elf.read_bytes(), memory_map)
    elif args.bin is not None:
        image = load_flat(args.bin.read_bytes(), default_pc, memory_map)
    else:
        image = assemble(args.asm.read_text(), default_pc).image(memory_map)
    if args.reset_pc is not None:
        image.entry = args.reset_pc
    return image


def _exit_value(value: int) -> int:
    code = value & 0xFF
    return 1 if value and not code else code


def _open_out(path: str):
    return sys.stdout if path == "-" else open(path, "w")


def stats_dict(stats: StatsReport, reason: str, exit_code: int | None) -> dict:
    d = {
        "cycles": stats.cycles,
        "instret": stats.instret,
        "cpi": stats.cpi,
        "stall_cycles_fetch": stats.stall_cycles_fetch,
        "stall_cycles_lsu": stats.stall_cycles_lsu,
        "flush_count": stats.flush_count,
        "fifo_avg_occupancy": stats.fifo_avg_occupancy,
    }
    extra = asdict(stats)
    for k in ("cycles", "instret", "stall_cycles_fetch", "stall_cycles_lsu", "flush_count"):
        extra.pop(k)
    d.update(extra)
    d["iterations_per_megacycle"] = stats.iterations_per_megacycle
    d["stop_reason"] = reason
    d["exit_value"] = exit_code
    return d


def summary(stats: StatsReport, reason: str) -> str:
    cpi = "n/a" if stats.cpi is None else f"{stats.cpi:.4f}"
    line = (f"{reason}: {stats.cycles} cycles, {stats.instret} instret, CPI {cpi}, "
            f"stalls fetch {stats.stall_cycles_fetch} lsu {stats.stall_cycles_lsu}, "
            f"flushes {stats.flush_count}, fifo avg {stats.fifo_avg_occupancy:.4f}")
    if stats.iterations_per_megacycle is not None:
        line += f", {stats.iterations_per_megacycle:.4f} iterations/Mcycle"
    return line


def cmd_run(args) -> int:
    try:
        memory_map = memory_map_from_env()
        image = _load(args, memory_map)
    except (OSError, LoadError, AsmError, ValueError) as exc:
        print(f"noxsim: cannot load image: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    config = _config(args, image.entry, memory_map)

    if args.verify:
        report = lockstep(image, config, max_cycles=args.max_cycles)
        print(report, file=sys.stderr)
        if not report.ok:
            return EXIT_DIVERGENCE

    core = Core(config, console=stdout_console)
    try:
        load_image(core.bus, image)
    except ValueError as exc:
        print(f"noxsim: cannot load image: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    core.reset(image.entry)
    trace = _open_out(args.trace) if args.trace else None
    try:
        on_retire = (lambda ev: trace.write(ev.trace_line() + "\n")) if trace else None
        outcome = core.run(args.max_cycles, on_retire=on_retire)
    finally:
        if trace is not None and trace is not sys.stdout:
            trace.close()
    stats = core.collect_stats()
    print(summary(stats, outcome.reason), file=sys.stderr)
    if args.stats:
        out = _open_out(args.stats)
        json.dump(stats_dict(stats, outcome.reason, outcome.exit_code), out, indent=2)
        out.write("\n")
        if out is not sys.stdout:
            out.close()
    if outcome.reason == "exit":
        return _exit_value(outcome.exit_code)
    if outcome.reason == "ebreak":
        return 0
    if outcome.reason == "wfi-sleep":
        return EXIT_WFI_SLEEP
    return EXIT_MAX_CYCLES


def cmd_verify(args) -> int:
    try:
        memory_map = memory_map_from_env()
        image = _load(args, memory_map)
    except (OSError, LoadError, AsmError, ValueError) as exc:
        print(f"noxsim: cannot load image: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    report = lockstep(image, _config(args, image.entry, memory_map), max_cycles=args.max_cycles)
    print(report)
    if not report.ok:
        return EXIT_DIVERGENCE
    return EXIT_MAX_CYCLES if report.reason == "max-cycles" else 0


def cmd_bench(args) -> int:
    config = _config(args, 0x8000_0000, memory_map_from_env())
    results, claims = run_suite(args.n, config, jobs=args.jobs)
    width = max(len(k) for k in KERNELS)
    print(f"{'kernel':<{width}}  imem  dmem  cycles  instret     CPI")
    for r in results:
        print(f"{r.kernel:<{width}}  {str(r.config['imem_latency']):>4}  {str(r.config['dmem_latency']):>4}  "
              f"{r.cycles:>6}  {r.stats.instret:>7}  {r.cpi:.4f}")
    for c in claims:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.value} (expected {c.expected})")
    if args.json:
        from .bench import result_dict
        out = _open_out(args.json)
        json.dump({"kernels": [result_dict(r) for r in results],
                   "claims": [asdict(c) for c in claims]}, out, indent=2, default=str)
        out.write("\n")
        if out is not sys.stdout:
            out.close()
    return 0 if all(c.ok for c in claims) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.help_exit_codes:
        print(__doc__.split("Exit codes", 1)[1].split("\n", 1)[1].strip("\n").rstrip())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_bench(args)
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
