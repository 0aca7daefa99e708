"""Compile the C workload in bare_metal/ for rv32i and run it.

Needs clang with the RISC-V backend and ld.lld.  The workload writes its
iteration count to the iterations port, so the run reports
iterations per megacycle the same way a CoreMark port would.
"""
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

from noxsim import Core, CoreConfig, load_elf, load_image

HERE = Path(__file__).resolve().parent / "bare_metal"

if shutil.which("clang") is None or shutil.which("ld.lld") is None:
    sys.exit("clang and ld.lld are needed for this demo")

with tempfile.TemporaryDirectory() as tmp:
    elf = Path(tmp) / "workload.elf"
    subprocess.run(["clang", "--target=riscv32", "-march=rv32i", "-mabi=ilp32", "-O2", "-ffreestanding",
                    "-fno-builtin", "-nostdlib", "-fuse-ld=lld", f"-Wl,-T,{HERE / 'link.ld'}",
                    "-o", str(elf), str(HERE / "crt0.S"), str(HERE / "workload.c")], check=True)
    image = load_elf(elf.read_bytes())

print(f"entry {image.entry:#010x}, segments {[(hex(a), len(d)) for a, d in image.segments]}")
for depth, lat in ((2, 0), (2, 2), (4, 2)):
    out = bytearray()
    core = Core(CoreConfig(fifo_depth=depth, imem_latency=lat), console=out.extend)
    load_image(core.bus, image)
    core.reset(image.entry)
    outcome = core.run(50_000_000)
    s = core.collect_stats()
    print(f"depth {depth} imem {lat}: {out.decode().strip()!r}, {outcome.reason}, CPI {s.cpi:.3f}, "
          f"{s.iterations_per_megacycle:.2f} iterations/Mcycle")
