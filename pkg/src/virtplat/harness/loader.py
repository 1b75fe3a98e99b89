"""Placing unmodified images into simulated memory.

Accepts 32-bit little-endian RISC-V ELF executables (``PT_LOAD`` segments)
or raw byte images with an explicit load address. Bytes are copied into
the owning memory devices through their backdoor; the caller's image object
is only ever read.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

from elftools.common.exceptions import ELFError
from elftools.elf.constants import P_FLAGS
from elftools.elf.elffile import ELFFile

from ..devices import Memory
from ..isa import InstrClass, try_decode

EM_RISCV = 243
ELF_MAGIC = b"\x7fELF"


class LoadError(ValueError):
    pass


class UnsupportedImage(LoadError):
    pass


class SegmentOutsideMap(LoadError):
    def __init__(self, address: int, size: int) -> None:
        super().__init__(f"segment [0x{address:08x}, 0x{address + size:08x}) is not inside one memory region")
        self.address = address
        self.size = size


@dataclass(frozen=True)
class Segment:
    address: int
    data: bytes
    mem_size: int
    executable: bool


@dataclass(frozen=True)
class LoadedImage:
    entry: int
    segments: tuple[Segment, ...]
    sha256: str

    @property
    def code_ranges(self) -> tuple[tuple[int, int], ...]:
        return tuple((s.address, s.address + len(s.data)) for s in self.segments if s.executable)

    def code_words(self) -> list[tuple[int, int]]:
        """(address, word) for every aligned word in the executable segments."""
        out = []
        for s in self.segments:
            if not s.executable:
                continue
            start = (s.address + 3) & ~3
            for addr in range(start, s.address + len(s.data) - 3, 4):
                off = addr - s.address
                out.append((addr, int.from_bytes(s.data[off:off + 4], "little")))
        return out

    def branch_sites(self) -> frozenset[int]:
        sites = set()
        for addr, word in self.code_words():
            ins = try_decode(word)
            if ins is not None and ins.cls is InstrClass.BRANCH:
                sites.add(addr)
        return frozenset(sites)

    def layout_digest(self) -> str:
        h = hashlib.sha256()
        for s in self.segments:
            if s.executable:
                h.update(s.address.to_bytes(4, "little"))
                h.update(len(s.data).to_bytes(4, "little"))
                h.update(s.data)
        return h.hexdigest()[:16]


def parse_image(image: bytes, load_address: int | None = None, entry: int | None = None) -> LoadedImage:
    """Describe the segments of ``image`` without touching any platform."""
    digest = hashlib.sha256(image).hexdigest()
    if image[:4] == ELF_MAGIC:
        return _parse_elf(bytes(image), digest)
    if load_address is None:
        raise UnsupportedImage("raw image without an explicit load address")
    if not image:
        raise UnsupportedImage("empty raw image")
    seg = Segment(load_address, bytes(image), len(image), True)
    return LoadedImage(load_address if entry is None else entry, (seg,), digest)


def _parse_elf(image: bytes, digest: str) -> LoadedImage:
    try:
        elf = ELFFile(io.BytesIO(image))
        if elf.elfclass != 32 or not elf.little_endian:
            raise UnsupportedImage("only 32-bit little-endian ELF images are supported")
        if elf["e_machine"] not in ("EM_RISCV", EM_RISCV):
            raise UnsupportedImage(f"ELF machine {elf['e_machine']} is not RISC-V")
        if elf["e_type"] != "ET_EXEC":
            raise UnsupportedImage(f"ELF type {elf['e_type']} is not an executable")
        segs = []
        for ph in elf.iter_segments():
            if ph["p_type"] != "PT_LOAD" or ph["p_memsz"] == 0:
                continue
            data = ph.data()[: ph["p_filesz"]]
            segs.append(Segment(ph["p_paddr"], data, ph["p_memsz"], bool(ph["p_flags"] & P_FLAGS.PF_X)))
        entry = elf["e_entry"]
    except ELFError as exc:
        raise UnsupportedImage(f"malformed ELF: {exc}") from exc
    if not segs:
        raise UnsupportedImage("ELF has no loadable segments")
    return LoadedImage(entry, tuple(segs), digest)


def load_binary(image: bytes, sim, load_address: int | None = None, entry: int | None = None) -> LoadedImage:
    """Copy ``image`` into ``sim``'s memories and point the core at its entry."""
    loaded = parse_image(image, load_address, entry)
    placements = []
    for seg in loaded.segments:
        region = sim.bus.memory_map.find(seg.address, max(seg.mem_size, 1))
        device = sim.devices.get(region.device_id) if region else None
        if region is None or not isinstance(device, Memory):
            raise SegmentOutsideMap(seg.address, seg.mem_size)
        placements.append((device, seg.address - region.base, seg))
    for device, offset, seg in placements:
        device.load(offset, seg.data)
        if seg.mem_size > len(seg.data):
            device.load(offset + len(seg.data), bytes(seg.mem_size - len(seg.data)))
    if loaded.entry % 4:
        raise UnsupportedImage(f"entry point 0x{loaded.entry:08x} is not 4-byte aligned")
    sim.cpu.pc = loaded.entry
    return loaded
