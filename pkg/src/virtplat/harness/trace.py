"""Instruction traces: one text line per executed (or trapping) instruction.

Line layout, all numbers lowercase hex::

    <cycle:16> <pc:8> <word:8> <mnemonic> [x<rd>=<value>] [R<w>@<addr>=<value>]... [exit=<code>]

Trapping instructions end in ``trap:<cause>=<value>``; an unreadable word
prints as ``--------``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..cpu import StepOutcome
from ..bus import Status

_LINE = re.compile(r"^[0-9a-f]{16} [0-9a-f]{8} (?:[0-9a-f]{8}|-{8}) \S+(?: \S+)*$")
_FIELDS = ("cycle", "pc", "word", "mnemonic")


class MalformedTrace(ValueError):
    pass


def format_step(out: StepOutcome, exit_code: int | None = None) -> str:
    word = "--------" if out.word is None else f"{out.word:08x}"
    mnemonic = out.instr.mnemonic if out.instr is not None else "?"
    parts = [f"{out.cycle:016x}", f"{out.pc:08x}", word, mnemonic]
    if out.reg_write is not None:
        rd, value = out.reg_write
        parts.append(f"x{rd}={value:08x}")
    for op in out.mem_ops:
        tag = f"{op.kind}{op.width}@{op.address:08x}={op.value:0{2 * op.width}x}"
        if op.status is Status.DEVICE_BUSY:
            tag += "!busy"
        parts.append(tag)
    if out.kind == "halt" and exit_code is not None:
        parts.append(f"exit={exit_code:08x}")
    if out.trap is not None:
        parts.append(f"trap:{out.trap.cause.value}={out.trap.value:08x}")
    return " ".join(parts)


@dataclass(frozen=True)
class Divergence:
    index: int  # 0-based record number
    cycle: int | None
    field: str
    a: str | None
    b: str | None

    def __str__(self) -> str:
        where = f"cycle {self.cycle}" if self.cycle is not None else f"record {self.index}"
        return f"traces diverge at {where} ({self.field}): {self.a!r} != {self.b!r}"


def _lines(trace: str | list[str]) -> list[str]:
    lines = trace.splitlines() if isinstance(trace, str) else list(trace)
    for i, line in enumerate(lines):
        if not _LINE.match(line):
            raise MalformedTrace(f"record {i}: {line!r}")
    return lines


def _field_name(pos: int, token: str) -> str:
    if pos < len(_FIELDS):
        return _FIELDS[pos]
    if token.startswith("x") and "=" in token:
        return "reg " + token.split("=", 1)[0]
    if token[:1] in ("R", "W"):
        return "mem"
    return token.split("=", 1)[0].split(":", 1)[0]


def diff_traces(a: str | list[str], b: str | list[str]) -> Divergence | None:
    """Earliest differing record, or None when the traces are identical."""
    la, lb = _lines(a), _lines(b)
    for i, (x, y) in enumerate(zip(la, lb)):
        if x == y:
            continue
        tx, ty = x.split(" "), y.split(" ")
        cycle = int(tx[0], 16)
        for pos in range(max(len(tx), len(ty))):
            ta = tx[pos] if pos < len(tx) else None
            tb = ty[pos] if pos < len(ty) else None
            if ta != tb:
                return Divergence(i, cycle, _field_name(pos, ta or tb), ta, tb)
    if len(la) != len(lb):
        i = min(len(la), len(lb))
        longer = la if len(la) > len(lb) else lb
        cycle = int(longer[i].split(" ", 1)[0], 16)
        return Divergence(i, cycle, "length", la[i] if i < len(la) else None, lb[i] if i < len(lb) else None)
    return None


def executed_pcs(trace: str | list[str]) -> set[int]:
    """Addresses of retired instructions (trap records excluded)."""
    out = set()
    for line in _lines(trace):
        if " trap:" in line:
            continue
        out.add(int(line[17:25], 16))
    return out
