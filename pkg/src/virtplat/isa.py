"""RV32I base integer instruction decoding.

Only the 37 user-level computational/control instructions plus ECALL and
EBREAK are recognised. Everything else, FENCE included, decodes as illegal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

XLEN_MASK = 0xFFFFFFFF


class InstrClass(enum.Enum):
    ALU_IMM = "alu-imm"
    ALU_REG = "alu-reg"
    LOAD = "load"
    STORE = "store"
    BRANCH = "branch"
    JUMP = "jump"
    UPPER_IMM = "upper-imm"
    SYSTEM = "system"


class IllegalInstruction(Exception):
    """Raised by :func:`decode` for undefined or reserved encodings."""

    def __init__(self, word: int) -> None:
        super().__init__(f"illegal instruction 0x{word:08x}")
        self.word = word


@dataclass(frozen=True, slots=True)
class DecodedInstruction:
    cls: InstrClass
    mnemonic: str
    rd: int
    rs1: int
    rs2: int
    imm: int
    raw: int

    def __str__(self) -> str:
        return format_instruction(self)


OP_LUI = 0b0110111
OP_AUIPC = 0b0010111
OP_JAL = 0b1101111
OP_JALR = 0b1100111
OP_BRANCH = 0b1100011
OP_LOAD = 0b0000011
OP_STORE = 0b0100011
OP_IMM = 0b0010011
OP_REG = 0b0110011
OP_SYSTEM = 0b1110011

BRANCH_F3 = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
LOAD_F3 = {0: "lb", 1: "lh", 2: "lw", 4: "lbu", 5: "lhu"}
STORE_F3 = {0: "sb", 1: "sh", 2: "sw"}
IMM_F3 = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
REG_F3_F7 = {
    (0, 0x00): "add",
    (0, 0x20): "sub",
    (1, 0x00): "sll",
    (2, 0x00): "slt",
    (3, 0x00): "sltu",
    (4, 0x00): "xor",
    (5, 0x00): "srl",
    (5, 0x20): "sra",
    (6, 0x00): "or",
    (7, 0x00): "and",
}

MNEMONICS = frozenset(
    ["lui", "auipc", "jal", "jalr", "ecall", "ebreak"]
    + list(BRANCH_F3.values())
    + list(LOAD_F3.values())
    + list(STORE_F3.values())
    + list(IMM_F3.values())
    + ["slli", "srli", "srai"]
    + list(REG_F3_F7.values())
)


def sign_extend(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def _imm_i(w: int) -> int:
    return sign_extend(w >> 20, 12)


def _imm_s(w: int) -> int:
    return sign_extend(((w >> 25) << 5) | ((w >> 7) & 0x1F), 12)


def _imm_b(w: int) -> int:
    v = (
        (((w >> 31) & 1) << 12)
        | (((w >> 7) & 1) << 11)
        | (((w >> 25) & 0x3F) << 5)
        | (((w >> 8) & 0xF) << 1)
    )
    return sign_extend(v, 13)


def _imm_j(w: int) -> int:
    v = (
        (((w >> 31) & 1) << 20)
        | (((w >> 12) & 0xFF) << 12)
        | (((w >> 20) & 1) << 11)
        | (((w >> 21) & 0x3FF) << 1)
    )
    return sign_extend(v, 21)


@lru_cache(maxsize=65536)
def decode(word: int) -> DecodedInstruction:
    """Decode one 32-bit instruction word.

    Pure function of ``word``; raises :class:`IllegalInstruction` for any
    encoding outside the supported subset.
    """
    w = word & XLEN_MASK
    opcode = w & 0x7F
    rd = (w >> 7) & 0x1F
    f3 = (w >> 12) & 0x7
    rs1 = (w >> 15) & 0x1F
    rs2 = (w >> 20) & 0x1F
    f7 = w >> 25

    if opcode == OP_IMM:
        if f3 == 1:
            if f7 != 0:
                raise IllegalInstruction(w)
            return DecodedInstruction(InstrClass.ALU_IMM, "slli", rd, rs1, 0, rs2, w)
        if f3 == 5:
            if f7 == 0x00:
                return DecodedInstruction(InstrClass.ALU_IMM, "srli", rd, rs1, 0, rs2, w)
            if f7 == 0x20:
                return DecodedInstruction(InstrClass.ALU_IMM, "srai", rd, rs1, 0, rs2, w)
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.ALU_IMM, IMM_F3[f3], rd, rs1, 0, _imm_i(w), w)
    if opcode == OP_REG:
        name = REG_F3_F7.get((f3, f7))
        if name is None:
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.ALU_REG, name, rd, rs1, rs2, 0, w)
    if opcode == OP_LOAD:
        name = LOAD_F3.get(f3)
        if name is None:
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.LOAD, name, rd, rs1, 0, _imm_i(w), w)
    if opcode == OP_STORE:
        name = STORE_F3.get(f3)
        if name is None:
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.STORE, name, 0, rs1, rs2, _imm_s(w), w)
    if opcode == OP_BRANCH:
        name = BRANCH_F3.get(f3)
        if name is None:
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.BRANCH, name, 0, rs1, rs2, _imm_b(w), w)
    if opcode == OP_JAL:
        return DecodedInstruction(InstrClass.JUMP, "jal", rd, 0, 0, _imm_j(w), w)
    if opcode == OP_JALR:
        if f3 != 0:
            raise IllegalInstruction(w)
        return DecodedInstruction(InstrClass.JUMP, "jalr", rd, rs1, 0, _imm_i(w), w)
    if opcode == OP_LUI:
        return DecodedInstruction(InstrClass.UPPER_IMM, "lui", rd, 0, 0, sign_extend(w & 0xFFFFF000, 32), w)
    if opcode == OP_AUIPC:
        return DecodedInstruction(InstrClass.UPPER_IMM, "auipc", rd, 0, 0, sign_extend(w & 0xFFFFF000, 32), w)
    if opcode == OP_SYSTEM:
        if w == 0x00000073:
            return DecodedInstruction(InstrClass.SYSTEM, "ecall", 0, 0, 0, 0, w)
        if w == 0x00100073:
            return DecodedInstruction(InstrClass.SYSTEM, "ebreak", 0, 0, 0, 0, w)
    raise IllegalInstruction(w)


def try_decode(word: int) -> DecodedInstruction | None:
    try:
        return decode(word)
    except IllegalInstruction:
        return None


def format_instruction(ins: DecodedInstruction) -> str:
    m = ins.mnemonic
    c = ins.cls
    if c is InstrClass.ALU_IMM or (c is InstrClass.JUMP and m == "jalr"):
        return f"{m} x{ins.rd}, x{ins.rs1}, {ins.imm}"
    if c is InstrClass.ALU_REG:
        return f"{m} x{ins.rd}, x{ins.rs1}, x{ins.rs2}"
    if c is InstrClass.LOAD:
        return f"{m} x{ins.rd}, {ins.imm}(x{ins.rs1})"
    if c is InstrClass.STORE:
        return f"{m} x{ins.rs2}, {ins.imm}(x{ins.rs1})"
    if c is InstrClass.BRANCH:
        return f"{m} x{ins.rs1}, x{ins.rs2}, {ins.imm}"
    if c is InstrClass.JUMP:
        return f"{m} x{ins.rd}, {ins.imm}"
    if c is InstrClass.UPPER_IMM:
        return f"{m} x{ins.rd}, 0x{(ins.imm >> 12) & 0xFFFFF:x}"
    return m
