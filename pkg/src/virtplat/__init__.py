"""Virtual platform for testing bare-metal RV32I software with fault injection."""

from .cpu import CpuState, Trap, TrapCause, reset, step
from .isa import DecodedInstruction, IllegalInstruction, decode
from .platform import PlatformConfig, instantiate, parse_platform, render_platform
from .sim import Simulator

__version__ = "0.1.0"

__all__ = [
    "CpuState",
    "DecodedInstruction",
    "IllegalInstruction",
    "PlatformConfig",
    "Simulator",
    "Trap",
    "TrapCause",
    "decode",
    "instantiate",
    "parse_platform",
    "render_platform",
    "reset",
    "step",
]
