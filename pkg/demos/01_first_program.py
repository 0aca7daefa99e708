"""Assemble a tiny program, run it on the pipeline and read the results.

Run with ``python3 demos/01_first_program.py``.
"""
from noxsim import Core, CoreConfig, assemble, load_image

SOURCE = """
    li   x1, 10          # loop counter
    li   x2, 0           # running sum
loop:
    add  x2, x2, x1
    addi x1, x1, -1
    bne  x1, x0, loop
    li   x5, 0x10000000
    sw   x2, 4(x5)       # exit code = sum of 1..10
"""

program = assemble(SOURCE)
image = program.image()

core = Core(CoreConfig(fifo_depth=2, imem_latency=1))
load_image(core.bus, image)
core.reset(image.entry)

# print the first few retirements as they happen
shown = []


def show(ev):
    if len(shown) < 8:
        shown.append(ev)
        print(ev.trace_line())


outcome = core.run(10_000, on_retire=show)
stats = core.collect_stats()
print("...")
print(f"stopped: {outcome.reason}, exit value {outcome.exit_code}")
print(f"{stats.cycles} cycles for {stats.instret} instructions, CPI {stats.cpi:.3f}")
print(f"fetch stalls {stats.stall_cycles_fetch}, flushes {stats.flush_count}, "
      f"flush bubbles {stats.flush_bubbles}")
