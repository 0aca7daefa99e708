"""Self-checking assembly programs bundled with the package.

Every fixture writes 0 to the exit port when all of its checks pass and the
number of the first failing check otherwise.  A ``# config:`` line in the
header lists ``key=value`` settings the fixture needs, currently only
``misaligned_trap=on|off``; ``default`` means none.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from ..program import AsmProgram, assemble


@dataclass
class Fixture:
    name: str
    source: str
    settings: dict[str, object] = field(default_factory=dict)

    def assemble(self) -> AsmProgram:
        return assemble(self.source)


def _parse_settings(source: str) -> dict[str, object]:
    out: dict[str, object] = {}
    for line in source.splitlines():
        line = line.strip()
        if not line.startswith("#"):
            break
        body = line.lstrip("#").strip()
        if not body.startswith("config:"):
            continue
        for item in body[len("config:"):].split():
            if item == "default":
                continue
            key, _, value = item.partition("=")
            if key != "misaligned_trap" or value not in ("on", "off"):
                raise ValueError(f"unknown fixture setting {item!r}")
            out[key] = value == "on"
    return out


def names() -> list[str]:
    return sorted(p.name[:-2] for p in resources.files(__name__).iterdir() if p.name.endswith(".s"))


def load(name: str) -> Fixture:
    source = resources.files(__name__).joinpath(name + ".s").read_text()
    return Fixture(name, source, _parse_settings(source))


def load_all() -> list[Fixture]:
    return [load(n) for n in names()]
