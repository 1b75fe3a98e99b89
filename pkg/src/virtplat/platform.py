"""Declarative platform descriptions and their instantiation.

A platform file looks like::

    [platform]
    name = demo
    clock_hz = 10000000
    entry_point = 0x00000000
    test_exit_address = 0xf0000000

    [device.rom0]
    kind = rom
    base = 0x00000000
    size = 0x4000

Each ``[device.<id>]`` section instantiates one device model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

from . import inifile
from .bus import MemoryMap, Region, validate_map
from .devices import DEFAULT_CLOCK_HZ, DEVICE_KINDS, Console, Device, Eeprom, Ram, Rom, Timer

if TYPE_CHECKING:
    from .faults import CompiledCampaign
    from .sim import Simulator

MIN_CLOCK_HZ = 1000

_COMMON_KEYS = frozenset({"kind", "base", "size", "wait_cycles"})
_KIND_KEYS = {
    "rom": frozenset(),
    "ram": frozenset(),
    "eeprom": frozenset({"write_latency_ms"}),
    "timer": frozenset({"compare"}),
    "console": frozenset(),
}
DEFAULT_EEPROM_LATENCY_MS = Fraction(1)


class PlatformError(inifile.ConfigError):
    pass


class UnknownDeviceKind(PlatformError):
    def __init__(self, kind: str, line: int | None = None) -> None:
        super().__init__(f"unknown device kind {kind!r} (expected one of {', '.join(sorted(DEVICE_KINDS))})", line, "kind")
        self.kind = kind


@dataclass(frozen=True)
class DeviceConfig:
    id: str
    kind: str
    base: int
    size: int
    wait_cycles: int = 0
    write_latency_ms: Fraction | None = None
    compare: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in DEVICE_KINDS:
            raise UnknownDeviceKind(self.kind)
        if self.kind == "eeprom":
            latency = DEFAULT_EEPROM_LATENCY_MS if self.write_latency_ms is None else Fraction(self.write_latency_ms)
            object.__setattr__(self, "write_latency_ms", latency)
        elif self.write_latency_ms is not None:
            raise PlatformError(f"device {self.id}: write_latency_ms only applies to eeprom")
        if self.compare is not None and self.kind != "timer":
            raise PlatformError(f"device {self.id}: compare only applies to timer")

    @property
    def region(self) -> Region:
        return Region(self.base, self.size, self.id)


@dataclass(frozen=True)
class PlatformConfig:
    name: str
    entry_point: int
    devices: tuple[DeviceConfig, ...] = ()
    clock_hz: int = DEFAULT_CLOCK_HZ
    test_exit_address: int | None = None

    @property
    def memory_map(self) -> MemoryMap:
        return MemoryMap(d.region for d in self.devices)

    def device(self, device_id: str) -> DeviceConfig | None:
        for d in self.devices:
            if d.id == device_id:
                return d
        return None


def validate_config(config: PlatformConfig) -> PlatformConfig:
    ids = [d.id for d in config.devices]
    if len(set(ids)) != len(ids):
        raise PlatformError("device instance ids must be unique")
    if config.clock_hz < MIN_CLOCK_HZ:
        raise PlatformError(f"clock_hz must be >= {MIN_CLOCK_HZ}, got {config.clock_hz}")
    mm = validate_map(config.memory_map)
    for d in config.devices:
        if d.wait_cycles < 0:
            raise PlatformError(f"device {d.id}: wait_cycles must be >= 0")
        if d.kind == "timer" and d.size < 16:
            raise PlatformError(f"device {d.id}: timer needs a 16-byte region")
        if d.kind == "console" and d.size < 8:
            raise PlatformError(f"device {d.id}: console needs an 8-byte region")
        if d.kind == "eeprom":
            if d.size < 8:
                raise PlatformError(f"device {d.id}: eeprom needs at least 8 bytes")
            if d.write_latency_ms < 0:
                raise PlatformError(f"device {d.id}: write_latency_ms must be >= 0")
    if config.entry_point % 4:
        raise PlatformError(f"entry_point 0x{config.entry_point:08x} is not 4-byte aligned")
    if mm.find(config.entry_point, 4) is None:
        raise PlatformError(f"entry_point 0x{config.entry_point:08x} is not inside a mapped region")
    return config


def parse_platform(text: str) -> PlatformConfig:
    sections = inifile.parse(text)
    platform_sec = None
    devices: list[DeviceConfig] = []
    for sec in sections:
        if sec.name == "platform":
            platform_sec = sec
        elif sec.name.startswith("device."):
            devices.append(_parse_device(sec))
        else:
            raise inifile.ConfigSyntaxError(f"unexpected section [{sec.name}]", sec.line)
    if platform_sec is None:
        raise inifile.MissingField("platform", "<document>")
    sec = platform_sec
    sec.check_keys({"name", "clock_hz", "entry_point", "test_exit_address"})
    config = PlatformConfig(
        name=sec.str("name"),
        entry_point=sec.int("entry_point"),
        devices=tuple(devices),
        clock_hz=sec.int("clock_hz", DEFAULT_CLOCK_HZ),
        test_exit_address=sec.int("test_exit_address") if "test_exit_address" in sec.entries else None,
    )
    try:
        return validate_config(config)
    except inifile.ConfigError:
        raise
    except ValueError as exc:
        raise PlatformError(str(exc)) from exc


def _parse_device(sec: inifile.Section) -> DeviceConfig:
    dev_id = sec.name[len("device."):]
    if not dev_id or any(c.isspace() for c in dev_id):
        raise inifile.ConfigSyntaxError(f"bad device id in [{sec.name}]", sec.line)
    kind_entry = sec.require("kind")
    kind = kind_entry.value
    if kind not in DEVICE_KINDS:
        raise UnknownDeviceKind(kind, kind_entry.line)
    sec.check_keys(_COMMON_KEYS | _KIND_KEYS[kind])
    e = sec.entries
    return DeviceConfig(
        id=dev_id,
        kind=kind,
        base=sec.int("base"),
        size=sec.int("size"),
        wait_cycles=sec.int("wait_cycles", 0),
        write_latency_ms=inifile.parse_fraction(e["write_latency_ms"], "write_latency_ms") if "write_latency_ms" in e else None,
        compare=sec.int("compare") if "compare" in e else None,
    )


def render_platform(config: PlatformConfig) -> str:
    """Canonical serialisation; ``parse_platform`` inverts it exactly."""
    head = [
        ("name", inifile.quote(config.name)),
        ("clock_hz", str(config.clock_hz)),
        ("entry_point", inifile.fmt_hex(config.entry_point)),
    ]
    if config.test_exit_address is not None:
        head.append(("test_exit_address", inifile.fmt_hex(config.test_exit_address)))
    sections = [("platform", head)]
    for d in config.devices:
        entries = [
            ("kind", d.kind),
            ("base", inifile.fmt_hex(d.base)),
            ("size", hex(d.size)),
            ("wait_cycles", str(d.wait_cycles)),
        ]
        if d.write_latency_ms is not None:
            entries.append(("write_latency_ms", str(d.write_latency_ms)))
        if d.compare is not None:
            entries.append(("compare", str(d.compare)))
        sections.append((f"device.{d.id}", entries))
    return inifile.render(sections)


def build_device(d: DeviceConfig, clock_hz: int) -> Device:
    if d.kind == "rom":
        return Rom(d.id, d.size, d.wait_cycles)
    if d.kind == "ram":
        return Ram(d.id, d.size, d.wait_cycles)
    if d.kind == "eeprom":
        return Eeprom(d.id, d.size, clock_hz, d.write_latency_ms, d.wait_cycles)
    if d.kind == "timer":
        return Timer(d.id, d.size, d.compare, d.wait_cycles)
    if d.kind == "console":
        return Console(d.id, d.size, d.wait_cycles)
    raise UnknownDeviceKind(d.kind)


def instantiate(
    config: PlatformConfig,
    campaign: CompiledCampaign | None = None,
    seed: int | None = None,
) -> Simulator:
    """Build a ready-to-step simulator, optionally with a compiled fault campaign."""
    from .sim import Simulator

    validate_config(config)
    return Simulator(config, campaign, seed)


@dataclass
class _Builder:
    """Convenience for assembling configs in code."""

    name: str = "platform"
    clock_hz: int = DEFAULT_CLOCK_HZ
    entry_point: int = 0
    test_exit_address: int | None = None
    devices: list[DeviceConfig] = field(default_factory=list)

    def add(self, dev_id: str, kind: str, base: int, size: int, **params) -> _Builder:
        self.devices.append(DeviceConfig(dev_id, kind, base, size, **params))
        return self

    def build(self) -> PlatformConfig:
        return validate_config(
            PlatformConfig(self.name, self.entry_point, tuple(self.devices), self.clock_hz, self.test_exit_address)
        )


def builder(**kwargs) -> _Builder:
    return _Builder(**kwargs)
