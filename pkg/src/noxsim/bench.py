"""Synthetic microbenchmarks that expose the pipeline's timing behaviour.

Each kernel is straight-line or simply looped assembly ending in EBREAK (no
handler installed, so the run stops there).  Pairs of kernels differ in one
property only, which turns cycle differences into exact per-instruction
penalties: taken versus not-taken branches, a load feeding the next
instruction versus an unrelated one, a dependent versus an independent ADD
stream.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

from .pipeline import Core, CoreConfig, StatsReport
from .program import assemble, load_image

DATA = 0x8040_0000


def _program(body: list[str], setup: tuple[str, ...] = ()) -> str:
    lines = [f"    li x1, {DATA:#x}", "    li x2, 3", "    li x3, 5", *setup]
    lines += ["    " + b if not b.endswith(":") else b for b in body]
    lines.append("    ebreak")
    return "\n".join(lines) + "\n"


def alu_indep(n: int) -> str:
    """``n`` ADDs with no register dependences between them."""
    return _program([f"add x{4 + i % 24}, x2, x3" for i in range(n)])


def alu_chain(n: int) -> str:
    """``n`` ADDs, each consuming the previous result."""
    return _program(["add x4, x4, x3" for _ in range(n)])


def branch_taken(n: int) -> str:
    """``n`` taken forward branches, each to the next instruction."""
    return _program(["beq x0, x0, 4" for _ in range(n)])


def branch_not_taken(n: int) -> str:
    return _program(["bne x0, x0, 4" for _ in range(n)])


def load_use(n: int) -> str:
    """Loads whose result the very next instruction consumes."""
    body = []
    for _ in range(n):
        body += ["lw x5, 0(x1)", "addi x6, x5, 1"]
    return _program(body)


def load_indep(n: int) -> str:
    body = []
    for _ in range(n):
        body += ["lw x5, 0(x1)", "addi x6, x7, 1"]
    return _program(body)


def load_dense(n: int) -> str:
    """Back-to-back loads, nothing else."""
    return _program([f"lw x{5 + i % 20}, {4 * (i % 64)}(x1)" for i in range(n)])


def mixed_loop(n: int) -> str:
    """A counted loop with ALU work, a load, a store and a backward branch."""
    body = [
        "loop:",
        "lw x5, 0(x1)",
        "add x6, x5, x2",
        "xor x7, x6, x3",
        "sw x7, 4(x1)",
        "addi x8, x8, 1",
        "slli x9, x8, 2",
        "bne x8, x10, loop",
    ]
    return _program(body, setup=(f"    li x10, {n}", "    li x8, 0"))


KERNELS = {
    "alu_indep": alu_indep,
    "alu_chain": alu_chain,
    "branch_taken": branch_taken,
    "branch_not_taken": branch_not_taken,
    "load_use": load_use,
    "load_indep": load_indep,
    "load_dense": load_dense,
    "mixed_loop": mixed_loop,
}


@dataclass
class KernelResult:
    kernel: str
    n: int
    config: dict
    stats: StatsReport

    @property
    def cycles(self) -> int:
        return self.stats.cycles

    @property
    def cpi(self) -> float | None:
        return self.stats.cpi


def run_source(source: str, config: CoreConfig | None = None, max_cycles: int = 10_000_000) -> StatsReport:
    """Assemble and run ``source`` until EBREAK; return its statistics."""
    config = config or CoreConfig()
    image = assemble(source, config.reset_pc).image(config.memory_map)
    core = Core(config)
    load_image(core.bus, image)
    core.reset(image.entry)
    outcome = core.run(max_cycles, ebreak=True)
    if outcome.reason != "ebreak":
        raise RuntimeError(f"kernel did not finish: {outcome.reason} after {outcome.cycles} cycles")
    return core.collect_stats()


def run_kernel(kernel: str, n: int, config: CoreConfig | None = None) -> KernelResult:
    config = config or CoreConfig()
    stats = run_source(KERNELS[kernel](n), config)
    cfg = {"fifo_depth": config.fifo_depth, "imem_latency": config.imem_latency,
           "dmem_latency": config.dmem_latency}
    return KernelResult(kernel, n, cfg, stats)


def _run_job(job):
    return run_kernel(*job)


@dataclass
class Claim:
    name: str
    value: object
    expected: str
    ok: bool


def run_suite(n: int = 200, config: CoreConfig | None = None, jobs: int = 1,
              imem_sweep=(0, 1, 2, 3, 4)) -> tuple[list[KernelResult], list[Claim]]:
    """Run every kernel under ``config`` and evaluate the timing claims.

    The claims are exact: a taken branch costs 2 cycles more than a not-taken
    one, a load feeding the next instruction costs nothing extra at data
    latency 0, and the mixed loop's CPI never drops as instruction latency
    grows.
    """
    config = config or CoreConfig()
    base0 = replace(config, imem_latency=0, dmem_latency=0)
    job_list = [(k, n, config) for k in KERNELS]
    job_list += [(k, n, base0) for k in ("branch_taken", "branch_not_taken", "load_use", "load_indep")]
    job_list += [("mixed_loop", n, replace(config, imem_latency=lat)) for lat in imem_sweep]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_job, job_list))
    else:
        results = [_run_job(j) for j in job_list]

    main = results[:len(KERNELS)]
    taken, not_taken, use, indep = results[len(KERNELS):len(KERNELS) + 4]
    sweep = results[len(KERNELS) + 4:]

    penalty = (taken.cycles - not_taken.cycles) / n
    load_use_penalty = (use.cycles - indep.cycles) / n
    cpis = [r.cpi for r in sweep]
    claims = [
        Claim("taken_branch_penalty", penalty, "== 2", penalty == 2),
        Claim("load_use_penalty_dmem0", load_use_penalty, "== 0", load_use_penalty == 0),
        Claim("cpi_vs_imem_latency", dict(zip(imem_sweep, cpis)), "non-decreasing",
              all(a <= b for a, b in zip(cpis, cpis[1:]))),
    ]
    return main + sweep, claims


def result_dict(r: KernelResult) -> dict:
    d = {"kernel": r.kernel, "n": r.n, **r.config}
    d.update(asdict(r.stats))
    d["cpi"] = r.cpi
    return d
