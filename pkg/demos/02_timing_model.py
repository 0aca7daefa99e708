"""Measure the pipeline's timing rules with paired microbenchmarks.

Each pair of programs differs in one property, so the cycle difference
divided by the repetition count is the exact cost of that property.
"""
from noxsim import CoreConfig
from noxsim.bench import KERNELS, run_source

N = 200


def cycles(kernel, **cfg):
    return run_source(KERNELS[kernel](N), CoreConfig(**cfg)).cycles


print("taken branch penalty:", (cycles("branch_taken") - cycles("branch_not_taken")) / N)
print("load-use penalty at data latency 0:", (cycles("load_use") - cycles("load_indep")) / N)
print("dependent vs independent ADDs:", cycles("alu_chain"), "vs", cycles("alu_indep"))

base = cycles("load_dense")
for lat in (1, 2, 4):
    extra = (cycles("load_dense", dmem_latency=lat) - base) / N
    print(f"data latency {lat}: each load costs {extra:g} extra cycles")

print("\nmixed loop CPI as instruction latency grows, for several FIFO depths:")
for depth in (1, 2, 4):
    row = []
    for lat in range(5):
        s = run_source(KERNELS["mixed_loop"](N), CoreConfig(fifo_depth=depth, imem_latency=lat))
        row.append(f"{s.cpi:.3f}")
    print(f"  depth {depth}: " + "  ".join(row))
