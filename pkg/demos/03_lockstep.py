"""Co-simulate random programs against the reference interpreter.

The last part switches on a deliberate forwarding bug to show what a
divergence report looks like.
"""
from noxsim.lockstep import lockstep
from noxsim.randprog import generate

for seed in range(6):
    rp = generate(seed, n=500)
    cfg = rp.config
    report = lockstep(rp.program.image(), cfg)
    print(f"seed {seed}: imem {cfg.imem_latency}, dmem {cfg.dmem_latency}, depth {cfg.fifo_depth} -> {report}")

print("\nwith forwarding disabled:")
rp = generate(4, n=500)
print(lockstep(rp.program.image(), rp.config, bypass_fault=True))
