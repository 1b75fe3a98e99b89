"""A small two-pass RV32I assembler for building test images.

Supports the base instruction set, common pseudo-instructions and a few
directives (``.org``, ``.word``, ``.half``, ``.byte``, ``.space``,
``.align``, ``.equ``). Output is a flat little-endian image starting at the
base address.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

from .isa import BRANCH_F3, IMM_F3, LOAD_F3, REG_F3_F7, STORE_F3, sign_extend

ABI_NAMES = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2",
    "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7",
    "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
]
REGISTERS = {f"x{i}": i for i in range(32)}
REGISTERS.update({name: i for i, name in enumerate(ABI_NAMES)})
REGISTERS["fp"] = 8


class AssemblerError(Exception):
    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Assembly:
    base: int
    image: bytes
    symbols: dict[str, int] = field(default_factory=dict)

    @property
    def end(self) -> int:
        return self.base + len(self.image)


def _hi(v: int) -> int:
    return ((v + 0x800) >> 12) & 0xFFFFF


def _lo(v: int) -> int:
    return sign_extend(v & 0xFFF, 12)


def enc_r(f7: int, rs2: int, rs1: int, f3: int, rd: int, op: int) -> int:
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_i(imm: int, rs1: int, f3: int, rd: int, op: int) -> int:
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_s(imm: int, rs2: int, rs1: int, f3: int, op: int) -> int:
    imm &= 0xFFF
    return ((imm >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1F) << 7) | op


def enc_b(imm: int, rs2: int, rs1: int, f3: int, op: int) -> int:
    imm &= 0x1FFF
    return (
        (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3F) << 25)
        | (rs2 << 20)
        | (rs1 << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xF) << 8)
        | (((imm >> 11) & 1) << 7)
        | op
    )


def enc_u(imm20: int, rd: int, op: int) -> int:
    return ((imm20 & 0xFFFFF) << 12) | (rd << 7) | op


def enc_j(imm: int, rd: int, op: int) -> int:
    imm &= 0x1FFFFF
    return (
        (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3FF) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xFF) << 12)
        | (rd << 7)
        | op
    )


_INV_IMM = {v: k for k, v in IMM_F3.items()}
_INV_REG = {v: k for k, v in REG_F3_F7.items()}
_INV_LOAD = {v: k for k, v in LOAD_F3.items()}
_INV_STORE = {v: k for k, v in STORE_F3.items()}
_INV_BRANCH = {v: k for k, v in BRANCH_F3.items()}
_MEM_OPERAND = re.compile(r"^(.*)\((\w+)\)$")
_SWAPPED_BRANCHES = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}


class _Ctx:
    def __init__(self, symbols: dict[str, int], final: bool, lineno: int) -> None:
        self.symbols = symbols
        self.final = final
        self.lineno = lineno

    def err(self, msg: str) -> AssemblerError:
        return AssemblerError(self.lineno, msg)

    def reg(self, tok: str) -> int:
        r = REGISTERS.get(tok.strip().lower())
        if r is None:
            raise self.err(f"unknown register {tok!r}")
        return r

    def value(self, tok: str) -> int | None:
        """Evaluate ``sym``, ``int``, ``%hi(x)``, ``%lo(x)`` or ``a+b-c`` sums."""
        tok = tok.strip()
        m = re.fullmatch(r"%(hi|lo)\((.+)\)", tok)
        if m:
            v = self.value(m.group(2))
            if v is None:
                return None
            return _hi(v) if m.group(1) == "hi" else _lo(v)
        if tok.startswith("'") and tok.endswith("'") and len(tok) == 3:
            return ord(tok[1])
        total = 0
        for sign, term in re.findall(r"([+-]?)\s*([^+\-\s]+)", tok):
            term = term.strip()
            try:
                v = int(term, 0)
            except ValueError:
                if term not in self.symbols:
                    if self.final:
                        raise self.err(f"undefined symbol {term!r}") from None
                    return None
                v = self.symbols[term]
            total += -v if sign == "-" else v
        if not tok:
            raise self.err("missing operand")
        return total

    def need(self, tok: str) -> int:
        v = self.value(tok)
        return 0 if v is None else v

    def imm(self, tok: str, bits: int, signed: bool = True) -> int:
        v = self.need(tok)
        if self.final:
            lo, hi = (-(1 << (bits - 1)), (1 << (bits - 1)) - 1) if signed else (0, (1 << bits) - 1)
            if not lo <= v <= hi:
                raise self.err(f"immediate {v} out of range for {bits} bits")
        return v

    def mem(self, tok: str) -> tuple[int, int]:
        m = _MEM_OPERAND.match(tok.strip())
        if not m:
            raise self.err(f"bad memory operand {tok!r}")
        off = m.group(1).strip() or "0"
        return self.imm(off, 12), self.reg(m.group(2))

    def rel(self, tok: str, pc: int, bits: int) -> int:
        off = self.need(tok) - pc if self.final else 0
        if self.final:
            if off & 1:
                raise self.err(f"odd branch offset {off}")
            if not -(1 << (bits - 1)) <= off < (1 << (bits - 1)):
                raise self.err(f"branch target out of range ({off})")
        return off


def _li_words(ctx: _Ctx, rd: int, value: int | None, wide: bool) -> list[int]:
    v = 0 if value is None else value
    if not wide:
        return [enc_i(v, 0, 0, rd, 0b0010011)]
    return [enc_u(_hi(v), rd, 0b0110111), enc_i(_lo(v), rd, 0, rd, 0b0010011)]


def _encode(ctx: _Ctx, mn: str, ops: list[str], pc: int, wide: bool) -> list[int]:
    n = len(ops)

    def want(k: int) -> None:
        if n != k:
            raise ctx.err(f"{mn} expects {k} operands, got {n}")

    if mn in _INV_REG:
        want(3)
        f3, f7 = _INV_REG[mn]
        return [enc_r(f7, ctx.reg(ops[2]), ctx.reg(ops[1]), f3, ctx.reg(ops[0]), 0b0110011)]
    if mn in _INV_IMM:
        want(3)
        return [enc_i(ctx.imm(ops[2], 12), ctx.reg(ops[1]), _INV_IMM[mn], ctx.reg(ops[0]), 0b0010011)]
    if mn in ("slli", "srli", "srai"):
        want(3)
        sh = ctx.imm(ops[2], 5, signed=False)
        f3 = 1 if mn == "slli" else 5
        f7 = 0x20 if mn == "srai" else 0
        return [enc_r(f7, sh, ctx.reg(ops[1]), f3, ctx.reg(ops[0]), 0b0010011)]
    if mn in _INV_LOAD:
        want(2)
        off, base = ctx.mem(ops[1])
        return [enc_i(off, base, _INV_LOAD[mn], ctx.reg(ops[0]), 0b0000011)]
    if mn in _INV_STORE:
        want(2)
        off, base = ctx.mem(ops[1])
        return [enc_s(off, ctx.reg(ops[0]), base, _INV_STORE[mn], 0b0100011)]
    if mn in _INV_BRANCH:
        want(3)
        off = ctx.rel(ops[2], pc, 13)
        return [enc_b(off, ctx.reg(ops[1]), ctx.reg(ops[0]), _INV_BRANCH[mn], 0b1100011)]
    if mn in _SWAPPED_BRANCHES:
        want(3)
        return _encode(ctx, _SWAPPED_BRANCHES[mn], [ops[1], ops[0], ops[2]], pc, wide)
    if mn in ("beqz", "bnez", "bltz", "bgez"):
        want(2)
        real = {"beqz": "beq", "bnez": "bne", "bltz": "blt", "bgez": "bge"}[mn]
        return _encode(ctx, real, [ops[0], "zero", ops[1]], pc, wide)
    if mn in ("blez", "bgtz"):
        want(2)
        real = "bge" if mn == "blez" else "blt"
        return _encode(ctx, real, ["zero", ops[0], ops[1]], pc, wide)
    if mn == "jal":
        if n == 1:
            ops = ["ra", ops[0]]
        elif n != 2:
            raise ctx.err("jal expects 1 or 2 operands")
        return [enc_j(ctx.rel(ops[1], pc, 21), ctx.reg(ops[0]), 0b1101111)]
    if mn == "jalr":
        if n == 1:
            return [enc_i(0, ctx.reg(ops[0]), 0, 1, 0b1100111)]
        if n == 2:
            off, base = ctx.mem(ops[1])
            return [enc_i(off, base, 0, ctx.reg(ops[0]), 0b1100111)]
        want(3)
        return [enc_i(ctx.imm(ops[2], 12), ctx.reg(ops[1]), 0, ctx.reg(ops[0]), 0b1100111)]
    if mn in ("lui", "auipc"):
        want(2)
        imm = ctx.imm(ops[1], 20, signed=False)
        return [enc_u(imm, ctx.reg(ops[0]), 0b0110111 if mn == "lui" else 0b0010111)]
    if mn == "ecall":
        want(0)
        return [0x00000073]
    if mn == "ebreak":
        want(0)
        return [0x00100073]
    # pseudo-instructions
    if mn == "nop":
        want(0)
        return [0x00000013]
    if mn == "li":
        want(2)
        return _li_words(ctx, ctx.reg(ops[0]), ctx.value(ops[1]), wide)
    if mn == "la":
        want(2)
        return _li_words(ctx, ctx.reg(ops[0]), ctx.value(ops[1]), True)
    if mn == "mv":
        want(2)
        return [enc_i(0, ctx.reg(ops[1]), 0, ctx.reg(ops[0]), 0b0010011)]
    if mn == "not":
        want(2)
        return [enc_i(-1, ctx.reg(ops[1]), 4, ctx.reg(ops[0]), 0b0010011)]
    if mn == "neg":
        want(2)
        return [enc_r(0x20, ctx.reg(ops[1]), 0, 0, ctx.reg(ops[0]), 0b0110011)]
    if mn == "seqz":
        want(2)
        return [enc_i(1, ctx.reg(ops[1]), 3, ctx.reg(ops[0]), 0b0010011)]
    if mn == "snez":
        want(2)
        return [enc_r(0, ctx.reg(ops[1]), 0, 3, ctx.reg(ops[0]), 0b0110011)]
    if mn == "j":
        want(1)
        return [enc_j(ctx.rel(ops[0], pc, 21), 0, 0b1101111)]
    if mn == "call":
        want(1)
        return [enc_j(ctx.rel(ops[0], pc, 21), 1, 0b1101111)]
    if mn == "jr":
        want(1)
        return [enc_i(0, ctx.reg(ops[0]), 0, 0, 0b1100111)]
    if mn == "ret":
        want(0)
        return [0x00008067]
    raise ctx.err(f"unknown mnemonic {mn!r}")


def _split_operands(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [t.strip() for t in text.split(",")]


def _strip_comment(line: str) -> str:
    for marker in ("#", ";", "//"):
        idx = line.find(marker)
        if idx >= 0:
            line = line[:idx]
    return line.strip()


def assemble(source: str, base: int = 0) -> Assembly:
    """Assemble ``source`` into a flat image located at ``base``."""
    lines = [(i + 1, _strip_comment(raw)) for i, raw in enumerate(source.splitlines())]
    symbols: dict[str, int] = {}
    wide_li: dict[int, bool] = {}

    for final in (False, True):
        pc = base
        out = bytearray()
        for lineno, line in lines:
            ctx = _Ctx(symbols, final, lineno)
            while True:
                m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*:\s*(.*)$", line)
                if not m:
                    break
                if not final:
                    if m.group(1) in symbols:
                        raise ctx.err(f"duplicate label {m.group(1)!r}")
                    symbols[m.group(1)] = pc
                line = m.group(2)
            if not line:
                continue
            parts = line.split(None, 1)
            mn = parts[0].lower()
            ops = _split_operands(parts[1] if len(parts) > 1 else "")

            if mn.startswith("."):
                raw_ops = parts[1].strip() if len(parts) > 1 else ""
                data = _directive(ctx, mn, ops, raw_ops, pc, symbols)
                out += data
                pc += len(data)
                continue

            if not final and mn == "li":
                v = ctx.value(ops[1]) if len(ops) == 2 else None
                wide_li[lineno] = v is None or not -2048 <= v <= 2047
            words = _encode(ctx, mn, ops, pc, wide_li.get(lineno, True))
            for w in words:
                out += struct.pack("<I", w & 0xFFFFFFFF)
            pc += 4 * len(words)
    return Assembly(base, bytes(out), dict(symbols))


def _directive(ctx: _Ctx, mn: str, ops: list[str], raw: str, pc: int, symbols: dict[str, int]) -> bytes:
    if mn == ".equ" or mn == ".set":
        if len(ops) != 2:
            raise ctx.err(".equ expects name, value")
        v = ctx.value(ops[1])
        if v is None:
            raise ctx.err(".equ value must be known at definition")
        symbols[ops[0]] = v
        return b""
    if mn == ".org":
        target = ctx.value(ops[0])
        if target is None or target < pc:
            raise ctx.err(".org cannot move backwards")
        return bytes(target - pc)
    if mn == ".align":
        n = 1 << ctx.need(ops[0])
        return bytes((-pc) % n)
    if mn == ".space" or mn == ".zero":
        return bytes(ctx.need(ops[0]))
    sizes = {".word": ("<I", 0xFFFFFFFF), ".half": ("<H", 0xFFFF), ".byte": ("<B", 0xFF)}
    if mn in sizes:
        fmt, mask = sizes[mn]
        return b"".join(struct.pack(fmt, ctx.need(o) & mask) for o in ops)
    if mn == ".ascii" or mn == ".asciz":
        text = raw
        if not (text.startswith('"') and text.endswith('"')):
            raise ctx.err(f"{mn} expects a quoted string")
        data = text[1:-1].encode().decode("unicode_escape").encode("latin-1")
        return data + (b"\0" if mn == ".asciz" else b"")
    raise ctx.err(f"unknown directive {mn}")
