"""Interpreting RV32I core: one fetch/decode/execute per :func:`step`.

Timing is additive: a retired instruction costs one cycle plus whatever
latency the interconnect reports for its fetch and data accesses. Traps
halt the core; there is no trap vectoring.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol

from .bus import Response, Status
from .isa import DecodedInstruction, IllegalInstruction, InstrClass, decode

M32 = 0xFFFFFFFF


class TrapCause(enum.Enum):
    ILLEGAL_INSTRUCTION = "illegal-instruction"
    MISALIGNED_FETCH = "misaligned-fetch"
    MISALIGNED_ACCESS = "misaligned-access"
    BUS_ERROR = "bus-error"
    ENVIRONMENT_CALL = "environment-call"
    BREAKPOINT = "breakpoint"


@dataclass(frozen=True)
class Trap:
    cause: TrapCause
    value: int
    pc: int = 0

    def __str__(self) -> str:
        return f"{self.cause.value} 0x{self.value:08x} at pc 0x{self.pc:08x}"


class MisalignedEntry(ValueError):
    pass


class CpuHalted(RuntimeError):
    pass


class Bus(Protocol):
    def fetch(self, address: int, now: int) -> Response: ...

    def read(self, address: int, width: int, now: int) -> Response: ...

    def write(self, address: int, width: int, value: int, now: int) -> Response: ...


class _Regs(list):
    """Register file whose slot 0 ignores writes."""

    __slots__ = ()

    def __setitem__(self, index, value):
        if index == 0:
            return
        super().__setitem__(index, value & M32)


@dataclass
class CpuState:
    pc: int = 0
    regs: list[int] = field(default_factory=lambda: _Regs([0] * 32))
    cycles: int = 0
    halted: bool = False
    pending_trap: Trap | None = None
    exit_code: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.regs, _Regs):
            regs = _Regs([0] * 32)
            for i, v in enumerate(self.regs):
                regs[i] = v
            self.regs = regs

    def copy(self) -> CpuState:
        return CpuState(self.pc, _Regs(self.regs), self.cycles, self.halted, self.pending_trap, self.exit_code)


def reset(entry: int) -> CpuState:
    if entry % 4 or not 0 <= entry <= M32:
        raise MisalignedEntry(f"entry point 0x{entry:x} is not 4-byte aligned")
    return CpuState(pc=entry)


@dataclass(frozen=True)
class MemOp:
    kind: str  # "R" or "W"
    address: int
    width: int
    value: int
    status: Status = Status.OK


@dataclass
class StepOutcome:
    kind: str  # retired | trap | halt
    pc: int
    cycle: int
    word: int | None = None
    instr: DecodedInstruction | None = None
    reg_write: tuple[int, int] | None = None
    mem_ops: list[MemOp] = field(default_factory=list)
    trap: Trap | None = None
    branch_taken: bool | None = None
    latency: int = 0


def _s32(x: int) -> int:
    return x - 0x100000000 if x & 0x80000000 else x


_ALU = {
    "add": lambda a, b: (a + b) & M32,
    "sub": lambda a, b: (a - b) & M32,
    "sll": lambda a, b: (a << (b & 31)) & M32,
    "slt": lambda a, b: int(_s32(a) < _s32(b)),
    "sltu": lambda a, b: int(a < b),
    "xor": lambda a, b: a ^ b,
    "srl": lambda a, b: a >> (b & 31),
    "sra": lambda a, b: (_s32(a) >> (b & 31)) & M32,
    "or": lambda a, b: a | b,
    "and": lambda a, b: a & b,
}
_ALU_IMM = {
    "addi": _ALU["add"],
    "slti": _ALU["slt"],
    "sltiu": _ALU["sltu"],
    "xori": _ALU["xor"],
    "ori": _ALU["or"],
    "andi": _ALU["and"],
    "slli": _ALU["sll"],
    "srli": _ALU["srl"],
    "srai": _ALU["sra"],
}
_BRANCH = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: _s32(a) < _s32(b),
    "bge": lambda a, b: _s32(a) >= _s32(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}
_LOAD = {"lb": (1, True), "lh": (2, True), "lw": (4, False), "lbu": (1, False), "lhu": (2, False)}
_STORE = {"sb": 1, "sh": 2, "sw": 4}
_SIGN_BIT = {1: 0x80, 2: 0x8000}


def _trap(state: CpuState, out: StepOutcome, cause: TrapCause, value: int, latency: int) -> StepOutcome:
    trap = Trap(cause, value & M32, out.pc)
    state.pending_trap = trap
    state.halted = True
    state.cycles += latency
    out.kind = "trap"
    out.trap = trap
    out.latency = latency
    return out


def step(state: CpuState, bus: Bus, exit_address: int | None = None) -> StepOutcome:
    """Execute exactly one instruction at ``state.pc``."""
    if state.halted:
        raise CpuHalted("step() on a halted core")
    pc = state.pc
    now = state.cycles
    out = StepOutcome("retired", pc, now)
    if pc & 3:
        return _trap(state, out, TrapCause.MISALIGNED_FETCH, pc, 0)
    resp = bus.fetch(pc, now)
    latency = resp.latency
    if resp.status is not Status.OK:
        return _trap(state, out, TrapCause.BUS_ERROR, pc, latency)
    word = resp.payload
    out.word = word
    try:
        ins = decode(word)
    except IllegalInstruction:
        return _trap(state, out, TrapCause.ILLEGAL_INSTRUCTION, word, latency)
    out.instr = ins

    regs = state.regs
    cls = ins.cls
    next_pc = (pc + 4) & M32
    rd_value: int | None = None

    if cls is InstrClass.ALU_IMM:
        rd_value = _ALU_IMM[ins.mnemonic](regs[ins.rs1], ins.imm & M32)
    elif cls is InstrClass.ALU_REG:
        rd_value = _ALU[ins.mnemonic](regs[ins.rs1], regs[ins.rs2])
    elif cls is InstrClass.LOAD:
        width, signed = _LOAD[ins.mnemonic]
        addr = (regs[ins.rs1] + ins.imm) & M32
        if addr % width:
            return _trap(state, out, TrapCause.MISALIGNED_ACCESS, addr, latency)
        resp = bus.read(addr, width, now + latency)
        latency += resp.latency
        if resp.status is not Status.OK or resp.payload is None:
            return _trap(state, out, TrapCause.BUS_ERROR, addr, latency)
        value = resp.payload
        out.mem_ops.append(MemOp("R", addr, width, value))
        if signed and value & _SIGN_BIT[width]:
            value |= M32 ^ ((_SIGN_BIT[width] << 1) - 1)
        rd_value = value
    elif cls is InstrClass.STORE:
        width = _STORE[ins.mnemonic]
        addr = (regs[ins.rs1] + ins.imm) & M32
        if addr % width:
            return _trap(state, out, TrapCause.MISALIGNED_ACCESS, addr, latency)
        value = regs[ins.rs2] & (0xFFFFFFFF >> (32 - 8 * width))
        if exit_address is not None and addr == exit_address:
            out.mem_ops.append(MemOp("W", addr, width, value))
            state.exit_code = value
            state.halted = True
            state.pc = next_pc
            state.cycles += 1 + latency
            out.kind = "halt"
            out.latency = latency
            return out
        resp = bus.write(addr, width, value, now + latency)
        latency += resp.latency
        if resp.status is Status.BUS_ERROR:
            return _trap(state, out, TrapCause.BUS_ERROR, addr, latency)
        out.mem_ops.append(MemOp("W", addr, width, value, resp.status))
    elif cls is InstrClass.BRANCH:
        taken = _BRANCH[ins.mnemonic](regs[ins.rs1], regs[ins.rs2])
        out.branch_taken = taken
        if taken:
            target = (pc + ins.imm) & M32
            if target & 3:
                return _trap(state, out, TrapCause.MISALIGNED_FETCH, target, latency)
            next_pc = target
    elif cls is InstrClass.JUMP:
        if ins.mnemonic == "jal":
            target = (pc + ins.imm) & M32
        else:
            target = (regs[ins.rs1] + ins.imm) & M32 & ~1
        if target & 3:
            return _trap(state, out, TrapCause.MISALIGNED_FETCH, target, latency)
        rd_value = next_pc
        next_pc = target
    elif cls is InstrClass.UPPER_IMM:
        rd_value = ins.imm & M32 if ins.mnemonic == "lui" else (pc + ins.imm) & M32
    else:
        cause = TrapCause.ENVIRONMENT_CALL if ins.mnemonic == "ecall" else TrapCause.BREAKPOINT
        return _trap(state, out, cause, pc, latency)

    if rd_value is not None and ins.rd != 0:
        regs[ins.rd] = rd_value
        out.reg_write = (ins.rd, rd_value & M32)
    state.pc = next_pc
    state.cycles += 1 + latency
    out.latency = latency
    return out
