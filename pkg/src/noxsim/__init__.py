"""noxsim: a cycle-level model of the NoX RV32I-Zicsr core with a golden reference interpreter."""
from .bus import Bus, BusResponse, BusTransaction, Kind, MemoryMap, Region
from .isa import DecodedInstruction, IllegalEncoding, Mnemonic, decode, disassemble, encode, make
from .iss import RunResult, StepResult, alu_eval, run_until, step
from .lockstep import LockstepReport, lockstep, lockstep_check
from .pipeline import Core, CoreConfig, RetireEvent, StatsReport
from .program import AsmError, AsmProgram, LoadedImage, LoadError, assemble, load_elf, load_flat, load_image
from .state import ArchState, Trap, TrapCause

__version__ = "0.1.0"

__all__ = [
    "ArchState", "AsmError", "AsmProgram", "Bus", "BusResponse", "BusTransaction", "Core", "CoreConfig",
    "DecodedInstruction", "IllegalEncoding", "Kind", "LoadError", "LoadedImage", "LockstepReport",
    "MemoryMap", "Mnemonic", "Region", "RetireEvent", "RunResult", "StatsReport", "StepResult", "Trap",
    "TrapCause", "alu_eval", "assemble", "decode", "disassemble", "encode", "load_elf", "load_flat",
    "load_image", "lockstep", "lockstep_check", "make", "run_until", "step",
]
