"""Shared builders for the test suite."""

from __future__ import annotations

import struct
from pathlib import Path

from virtplat.asm import assemble
from virtplat.harness.loader import load_binary
from virtplat.platform import instantiate, parse_platform

EXIT_ADDR = 0xF000_0000

CONFORMANCE_PLATFORM = """\
[platform]
name = conformance
clock_hz = 10000000
entry_point = 0x0
test_exit_address = 0xf0000000

[device.rom0]
kind = rom
base = 0x0
size = 0x4000

[device.ram0]
kind = ram
base = 0x80000000
size = 0x1000
"""

BOARD_PLATFORM = """\
[platform]
name = board
clock_hz = 10000000
entry_point = 0x0
test_exit_address = 0xf0000000

[device.rom0]
kind = rom
base = 0x0
size = 0x4000

[device.ram0]
kind = ram
base = 0x80000000
size = 0x1000

[device.eeprom0]
kind = eeprom
base = 0x40000000
size = 0x104
write_latency_ms = 1

[device.timer0]
kind = timer
base = 0x40001000
size = 0x10

[device.uart0]
kind = console
base = 0x40002000
size = 0x8
"""


def build(source: str, base: int = 0) -> bytes:
    return assemble(source, base).image


def boot(image: bytes, platform_text: str = CONFORMANCE_PLATFORM, campaign=None, seed=None, load_address: int = 0):
    sim = instantiate(parse_platform(platform_text), campaign, seed)
    load_binary(image, sim, load_address)
    return sim


def run_to_stop(sim, limit: int = 500_000) -> list:
    outs = sim.run(limit)
    assert sim.cpu.halted, "program did not stop within the instruction budget"
    return outs


def elf32(segments: list[tuple[int, bytes, bool]], entry: int, machine: int = 243, etype: int = 2) -> bytes:
    """Minimal little-endian ELF32 executable: one PT_LOAD per (vaddr, data, executable)."""
    ehsize, phentsize = 52, 32
    phoff = ehsize
    data_off = phoff + phentsize * len(segments)
    phdrs, blobs = [], []
    off = data_off
    for vaddr, data, x in segments:
        flags = 0x4 | (0x1 if x else 0x2)
        phdrs.append(struct.pack("<8I", 1, off, vaddr, vaddr, len(data), len(data), flags, 4))
        blobs.append(data)
        off += len(data)
    ident = b"\x7fELF" + bytes([1, 1, 1]) + bytes(9)
    header = ident + struct.pack(
        "<HHIIIIIHHHHHH", etype, machine, 1, entry, phoff, 0, 0, ehsize, phentsize, len(segments), 40, 0, 0
    )
    return header + b"".join(phdrs) + b"".join(blobs)


def write_scenario(dirpath: Path, sid: str, source: str, platform_text: str = BOARD_PLATFORM,
                   campaign_text: str | None = None, extra: str = "", asserts: str = "", seed: int | None = None) -> Path:
    """Write platform, binary, optional campaign and scenario files; return the scenario path."""
    dirpath.mkdir(parents=True, exist_ok=True)
    (dirpath / f"{sid}.platform.ini").write_text(platform_text)
    (dirpath / f"{sid}.bin").write_bytes(build(source))
    lines = [
        "[scenario]",
        f"id = {sid}",
        f"platform = {sid}.platform.ini",
        f"binary = {sid}.bin",
        "load_address = 0x0",
    ]
    if campaign_text is not None:
        (dirpath / f"{sid}.campaign.ini").write_text(campaign_text)
        lines.append(f"campaign = {sid}.campaign.ini")
    if seed is not None:
        lines.append(f"seed = {seed}")
    if extra:
        lines.append(extra.strip())
    if asserts:
        lines += ["", "[assert]", asserts.strip()]
    path = dirpath / f"{sid}.scenario.ini"
    path.write_text("\n".join(lines) + "\n")
    return path
