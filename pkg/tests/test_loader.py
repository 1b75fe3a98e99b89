from __future__ import annotations

import hashlib

import pytest

from virtplat.harness.loader import SegmentOutsideMap, UnsupportedImage, load_binary, parse_image
from virtplat.platform import instantiate, parse_platform

from helpers import BOARD_PLATFORM, boot, build, elf32, run_to_stop

PROGRAM = """
    li   t0, 0x80000000
    lw   a0, 0(t0)
    li   t6, 0xf0000000
    sw   a0, 0(t6)
"""


def test_elf_with_code_and_data_segments():
    code = build(PROGRAM.replace("0x80000000", "0x80000010"))
    data = (0x1234).to_bytes(4, "little")
    image = elf32([(0x0, code, True), (0x80000010, data, False)], entry=0)
    sim = instantiate(parse_platform(BOARD_PLATFORM))
    loaded = load_binary(image, sim)
    assert loaded.entry == 0
    assert loaded.code_ranges == ((0, len(code)),)
    run_to_stop(sim)
    assert sim.cpu.exit_code == 0x1234


def test_elf_entry_sets_pc():
    code = build("nop\n" * 4 + "li a0, 3\nli t6, 0xf0000000\nsw a0, 0(t6)\n")
    sim = instantiate(parse_platform(BOARD_PLATFORM))
    load_binary(elf32([(0, code, True)], entry=16), sim)
    assert sim.cpu.pc == 16
    outs = run_to_stop(sim)
    assert outs[0].pc == 16 and sim.cpu.exit_code == 3


def test_raw_image_uses_load_address_as_entry():
    loaded = parse_image(b"\x13\x00\x00\x00" * 2, 0x100)
    assert loaded.entry == 0x100 and loaded.segments[0].executable
    assert parse_image(b"\x13\x00\x00\x00", 0x100, entry=0x104).entry == 0x104
    with pytest.raises(UnsupportedImage):
        parse_image(b"\x13\x00\x00\x00")
    with pytest.raises(UnsupportedImage):
        parse_image(b"", 0)


@pytest.mark.parametrize("kwargs", [dict(machine=62), dict(etype=3)])
def test_foreign_elf_rejected(kwargs):
    with pytest.raises(UnsupportedImage):
        parse_image(elf32([(0, b"\x13\0\0\0", True)], 0, **kwargs))


def test_elf64_rejected():
    image = bytearray(elf32([(0, b"\x13\0\0\0", True)], 0))
    image[4] = 2
    with pytest.raises(UnsupportedImage):
        parse_image(bytes(image))


def test_truncated_elf_rejected():
    with pytest.raises(UnsupportedImage):
        parse_image(elf32([(0, b"\x13\0\0\0", True)], 0)[:40])


def test_segment_outside_map():
    sim = instantiate(parse_platform(BOARD_PLATFORM))
    with pytest.raises(SegmentOutsideMap):
        load_binary(b"\0" * 8, sim, 0x20000000)
    with pytest.raises(SegmentOutsideMap):  # a timer is not a memory
        load_binary(b"\0" * 8, sim, 0x40001000)


def test_loading_never_mutates_the_input():
    image = bytearray(build(PROGRAM))
    before = hashlib.sha256(image).hexdigest()
    sim = boot(bytes(image), BOARD_PLATFORM)
    run_to_stop(sim)
    assert hashlib.sha256(image).hexdigest() == before
    assert parse_image(bytes(image), 0).sha256 == before


def test_branch_sites_and_layout_digest():
    img = build("beq a0, a1, 8\nnop\nbne a0, a1, -8\n.word 0\n")
    loaded = parse_image(img, 0)
    assert loaded.branch_sites() == {0, 8}
    assert len(loaded.code_words()) == 4
    assert parse_image(img, 0).layout_digest() == loaded.layout_digest()
    assert parse_image(img, 0x100).layout_digest() != loaded.layout_digest()
