from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtplat import inifile
from virtplat.bus import OverlappingRegions
from virtplat.devices import Eeprom, Timer
from virtplat.platform import (
    PlatformConfig, PlatformError, UnknownDeviceKind, builder, instantiate, parse_platform, render_platform,
)

from gen import random_platform
from helpers import BOARD_PLATFORM


def test_board_parses_with_defaults():
    cfg = parse_platform(BOARD_PLATFORM)
    assert cfg.clock_hz == 10_000_000
    assert [d.id for d in cfg.devices] == ["rom0", "ram0", "eeprom0", "timer0", "uart0"]
    assert cfg.device("eeprom0").write_latency_ms == Fraction(1)
    sim = instantiate(cfg)
    assert isinstance(sim.devices["eeprom0"], Eeprom) and sim.devices["eeprom0"].write_latency == 10_000
    assert isinstance(sim.devices["timer0"], Timer)


def test_clock_defaults_to_ten_megahertz():
    cfg = parse_platform("[platform]\nname = p\nentry_point = 0\n[device.r]\nkind = ram\nbase = 0\nsize = 16\n")
    assert cfg.clock_hz == 10_000_000 and cfg.test_exit_address is None


def _error(text):
    with pytest.raises(inifile.ConfigError) as info:
        parse_platform(text)
    return info.value


def test_unknown_kind_reports_line():
    err = _error("[platform]\nname = p\nentry_point = 0\n\n[device.x]\nkind = flux\nbase = 0\nsize = 4\n")
    assert isinstance(err, UnknownDeviceKind) and err.line == 6


def test_missing_field_reports_key():
    err = _error("[platform]\nname = p\nentry_point = 0\n[device.x]\nkind = ram\nsize = 4\n")
    assert isinstance(err, inifile.MissingField) and err.key == "base"


def test_unknown_key_rejected():
    err = _error("[platform]\nname = p\nentry_point = 0\ncolour = red\n[device.x]\nkind = ram\nbase = 0\nsize = 4\n")
    assert isinstance(err, inifile.UnknownKey) and err.line == 4


@pytest.mark.parametrize("text", [
    "[platform]\nname = p\nentry_point = 0\n",  # entry not mapped
    "[platform]\nname = p\nentry_point = 2\n[device.x]\nkind = ram\nbase = 0\nsize = 4\n",
    "[platform]\nname = p\nentry_point = 0\nclock_hz = 10\n[device.x]\nkind = ram\nbase = 0\nsize = 4\n",
    "[platform]\nname = p\nentry_point = 0\n[device.x]\nkind = timer\nbase = 0\nsize = 8\n",
    "[platform]\nname = p\nentry_point = 0\n[device.x]\nkind = ram\nbase = 0\nsize = 4\nwrite_latency_ms = 1\n",
    "[platform]\nname = p\nentry_point = 0\n[device.x]\nkind = ram\nbase = 0\nsize = 4\n[device.x]\nkind = ram\nbase = 4\nsize = 4\n",
    "[platform]\nname = p\nentry_point = 0\n[device.x]\nkind = ram\nbase = 0\nsize = zz\n",
    "[platform]\nname = p\nentry_point = 0\n[bogus]\n",
    "[platform]\nname = p\nname = q\nentry_point = 0\n",
    "just text\n",
])
def test_invalid_platforms(text):
    _error(text)


def test_overlap_rejected():
    with pytest.raises(OverlappingRegions):
        builder().add("a", "ram", 0, 16).add("b", "rom", 8, 16).build()
    with pytest.raises(PlatformError, match="a .* and b .* overlap"):
        parse_platform("[platform]\nname = p\nentry_point = 0\n[device.a]\nkind = ram\nbase = 0\nsize = 16\n"
                       "[device.b]\nkind = rom\nbase = 8\nsize = 16\n")


def test_builder():
    cfg = (builder(name="b", test_exit_address=0xF0000000)
           .add("rom0", "rom", 0, 0x100).add("ee", "eeprom", 0x1000, 0x20, write_latency_ms=Fraction(5, 2)).build())
    assert parse_platform(render_platform(cfg)) == cfg
    with pytest.raises(PlatformError):
        builder().add("t", "timer", 0, 16, write_latency_ms=1).build()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_render_parse_roundtrip(seed):
    cfg = random_platform(random.Random(seed))
    text = render_platform(cfg)
    assert parse_platform(text) == cfg
    assert render_platform(parse_platform(text)) == text


@given(st.text(min_size=1, max_size=30))
def test_names_with_any_characters_survive(name):
    cfg = PlatformConfig(name, 0, parse_platform(BOARD_PLATFORM).devices)
    assert parse_platform(render_platform(cfg)).name == name
