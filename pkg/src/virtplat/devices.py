"""Memory-mapped device models.

Every device answers reads and writes by offset within its region and keeps
its own notion of simulated time, advanced either lazily by an access
(``now`` is the issue cycle) or explicitly by :meth:`Device.tick`. Devices
may declare named internal faults in ``fault_registry``; the fault engine
attaches activations for them, and with no activation attached a device
runs its nominal code path only.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, ClassVar

from .bus import BUS_ERROR, Response, Status, WIDTH_MASK, ok

if TYPE_CHECKING:
    from .faults import DeviceFaultActivation

ERASED = 0xFF
DEFAULT_CLOCK_HZ = 10_000_000


def ms_to_cycles(ms: int | float | Fraction | str, clock_hz: int) -> int:
    """Milliseconds to whole cycles at ``clock_hz``, rounding down."""
    return int(Fraction(ms) * clock_hz // 1000)


@dataclass(frozen=True)
class DeviceEvent:
    cycle: int
    device_id: str
    kind: str
    detail: int | None = None


class Device:
    kind: ClassVar[str] = "device"
    # fault name -> required parameter names
    fault_registry: ClassVar[dict[str, tuple[str, ...]]] = {}

    def __init__(self, device_id: str, size: int, wait_cycles: int = 0) -> None:
        self.device_id = device_id
        self.size = size
        self.wait_cycles = wait_cycles
        self.activations: list[DeviceFaultActivation] = []
        self.now = 0

    def read(self, offset: int, width: int, now: int) -> Response:
        return BUS_ERROR

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        return BUS_ERROR

    def tick(self, now: int) -> list[DeviceEvent]:
        self._advance_clock(now)
        return []

    def peek(self, offset: int, width: int) -> int | None:
        """Side-effect-free read for observers; None where nothing is readable."""
        return None

    def poke(self, offset: int, width: int, value: int) -> bool:
        """Backdoor write used by loaders and state upsets; never times anything."""
        return False

    def activate(self, activation: DeviceFaultActivation) -> None:
        if activation.name not in self.fault_registry:
            raise KeyError(activation.name)
        self.activations.append(activation)

    def snapshot(self) -> tuple:
        return (self.now,)

    def _advance_clock(self, now: int) -> None:
        if now < self.now:
            raise ValueError(f"{self.device_id}: time moved backwards ({now} < {self.now})")
        self.now = now

    def _firing(self, name: str, now: int) -> DeviceFaultActivation | None:
        hit = None
        for act in self.activations:
            if act.name == name and act.should_fire(now) and hit is None:
                hit = act
        return hit


class Memory(Device):
    kind = "ram"

    def __init__(self, device_id: str, size: int, wait_cycles: int = 0, fill: int = 0) -> None:
        super().__init__(device_id, size, wait_cycles)
        self.data = bytearray([fill]) * size

    def read(self, offset: int, width: int, now: int) -> Response:
        if offset + width > self.size:
            return BUS_ERROR
        return ok(int.from_bytes(self.data[offset:offset + width], "little"), self.wait_cycles)

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        if offset + width > self.size:
            return BUS_ERROR
        self.data[offset:offset + width] = (value & WIDTH_MASK[width]).to_bytes(width, "little")
        return ok(None, self.wait_cycles)

    def peek(self, offset: int, width: int) -> int | None:
        if offset < 0 or offset + width > self.size:
            return None
        return int.from_bytes(self.data[offset:offset + width], "little")

    def poke(self, offset: int, width: int, value: int) -> bool:
        if offset < 0 or offset + width > self.size:
            return False
        self.data[offset:offset + width] = (value & WIDTH_MASK[width]).to_bytes(width, "little")
        return True

    def load(self, offset: int, blob: bytes) -> None:
        if offset < 0 or offset + len(blob) > self.size:
            raise ValueError(f"{self.device_id}: load of {len(blob)} bytes at +0x{offset:x} overflows")
        self.data[offset:offset + len(blob)] = blob

    def snapshot(self) -> tuple:
        return (self.now, bytes(self.data))


class Ram(Memory):
    kind = "ram"


class Rom(Memory):
    kind = "rom"

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        return BUS_ERROR


class Eeprom(Device):
    """Byte-programmable E2PROM with an asynchronous programming delay.

    Layout: data cells at ``[0, size - 4)``, status word at ``size - 4``
    (bit 0 = busy). Cell writes must be byte-wide. A write accepted while
    idle starts programming and completes ``write_latency`` cycles later;
    a write issued while programming is refused with ``device-busy``.
    """

    kind = "eeprom"
    fault_registry = {
        "slow-response": ("latency_ms_min", "latency_ms_max"),
        "lost-write": (),
    }

    def __init__(
        self,
        device_id: str,
        size: int,
        clock_hz: int = DEFAULT_CLOCK_HZ,
        write_latency_ms: Fraction | int | str = 1,
        wait_cycles: int = 0,
    ) -> None:
        if size < 8:
            raise ValueError("eeprom needs at least 4 cells plus the status word")
        super().__init__(device_id, size, wait_cycles)
        self.clock_hz = clock_hz
        self.write_latency_ms = Fraction(write_latency_ms)
        self.write_latency = ms_to_cycles(self.write_latency_ms, clock_hz)
        self.cells = bytearray([ERASED]) * (size - 4)
        self.status_offset = size - 4
        self.busy_until: int | None = None
        self.in_flight: tuple[int, int] | None = None
        self.commit_lost = False
        self.completed: list[DeviceEvent] = []

    @property
    def busy(self) -> bool:
        return self.busy_until is not None

    def _advance(self, now: int) -> None:
        self._advance_clock(now)
        if self.busy_until is not None and now >= self.busy_until:
            offset, value = self.in_flight
            if not self.commit_lost:
                self.cells[offset] = value
            self.completed.append(DeviceEvent(self.busy_until, self.device_id, "programming-complete", offset))
            self.busy_until = None
            self.in_flight = None
            self.commit_lost = False

    def programming_latency(self, now: int) -> int:
        act = self._firing("slow-response", now) if self.activations else None
        if act is None:
            return self.write_latency
        lo = ms_to_cycles(act.params["latency_ms_min"], self.clock_hz)
        hi = ms_to_cycles(act.params["latency_ms_max"], self.clock_hz)
        drawn = act.draw_cycles(lo, hi)
        act.record(now, self.write_latency, drawn)
        return drawn

    def read(self, offset: int, width: int, now: int) -> Response:
        self._advance(now)
        if offset == self.status_offset:
            return ok(int(self.busy), self.wait_cycles)
        if offset + width > len(self.cells):
            return BUS_ERROR
        return ok(int.from_bytes(self.cells[offset:offset + width], "little"), self.wait_cycles)

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        self._advance(now)
        if offset == self.status_offset:
            return ok(None, self.wait_cycles)
        if width != 1 or offset >= len(self.cells):
            return BUS_ERROR
        if self.busy:
            return Response(Status.DEVICE_BUSY, None, self.wait_cycles)
        latency = self.programming_latency(now)
        if self.activations:
            act = self._firing("lost-write", now)
            if act is not None:
                self.commit_lost = True
                act.record(now, value & 0xFF, self.cells[offset])
        self.in_flight = (offset, value & 0xFF)
        self.busy_until = now + latency
        return ok(None, self.wait_cycles)

    def tick(self, now: int) -> list[DeviceEvent]:
        if self.busy_until is None and not self.completed:
            self._advance_clock(now)
            return []
        self._advance(now)
        events, self.completed = self.completed, []
        return events

    def peek(self, offset: int, width: int) -> int | None:
        if offset == self.status_offset:
            return int(self.busy)
        if offset < 0 or offset + width > len(self.cells):
            return None
        return int.from_bytes(self.cells[offset:offset + width], "little")

    def poke(self, offset: int, width: int, value: int) -> bool:
        if offset < 0 or offset + width > len(self.cells):
            return False
        self.cells[offset:offset + width] = (value & WIDTH_MASK[width]).to_bytes(width, "little")
        return True

    def snapshot(self) -> tuple:
        return (self.now, bytes(self.cells), self.busy_until, self.in_flight, self.commit_lost, tuple(self.completed))


class Timer(Device):
    """Free-running cycle counter with a one-shot compare.

    Registers: 0x0 count low, 0x4 count high, 0x8 compare (write arms),
    0xC status (bit 0 interrupt pending; writing 1 acknowledges).
    """

    kind = "timer"
    fault_registry = {"missed-interrupt": ()}

    COUNT_LO, COUNT_HI, COMPARE, STATUS = 0x0, 0x4, 0x8, 0xC

    def __init__(self, device_id: str, size: int = 16, compare: int | None = None, wait_cycles: int = 0) -> None:
        super().__init__(device_id, size, wait_cycles)
        self.compare = compare if compare is not None else 0xFFFFFFFF
        self.armed = compare is not None
        self.pending = False
        self.events: list[DeviceEvent] = []

    def _advance(self, now: int) -> None:
        self._advance_clock(now)
        if self.armed and now >= self.compare:
            self.armed = False
            act = self._firing("missed-interrupt", now) if self.activations else None
            if act is not None:
                act.record(now, 1, 0)
                return
            self.pending = True
            self.events.append(DeviceEvent(now, self.device_id, "interrupt-pending", 1))

    def read(self, offset: int, width: int, now: int) -> Response:
        self._advance(now)
        value = self.peek(offset, width)
        if value is None:
            return BUS_ERROR
        return ok(value, self.wait_cycles)

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        self._advance(now)
        if width != 4:
            return BUS_ERROR
        if offset == self.COMPARE:
            self.compare = value
            self.armed = True
            self._advance(now)
        elif offset == self.STATUS:
            if value & 1 and self.pending:
                self.pending = False
                self.events.append(DeviceEvent(now, self.device_id, "interrupt-cleared", 0))
        elif offset in (self.COUNT_LO, self.COUNT_HI):
            pass
        else:
            return BUS_ERROR
        return ok(None, self.wait_cycles)

    def tick(self, now: int) -> list[DeviceEvent]:
        if not self.armed and not self.events:
            self._advance_clock(now)
            return []
        self._advance(now)
        events, self.events = self.events, []
        return events

    def peek(self, offset: int, width: int) -> int | None:
        if width != 4:
            return None
        if offset == self.COUNT_LO:
            return self.now & 0xFFFFFFFF
        if offset == self.COUNT_HI:
            return (self.now >> 32) & 0xFFFFFFFF
        if offset == self.COMPARE:
            return self.compare
        if offset == self.STATUS:
            return int(self.pending)
        return None

    def poke(self, offset: int, width: int, value: int) -> bool:
        if width == 4 and offset == self.COMPARE:
            self.compare = value & 0xFFFFFFFF
            return True
        return False

    def snapshot(self) -> tuple:
        return (self.now, self.compare, self.armed, self.pending, tuple(self.events))


class Console(Device):
    """Write-only character output. 0x0 transmit, 0x4 status (always ready)."""

    kind = "console"
    fault_registry = {"drop-byte": ()}

    TX, STATUS = 0x0, 0x4

    def __init__(self, device_id: str, size: int = 8, wait_cycles: int = 0) -> None:
        super().__init__(device_id, size, wait_cycles)
        self.output = bytearray()

    def read(self, offset: int, width: int, now: int) -> Response:
        value = self.peek(offset, width)
        if value is None:
            return BUS_ERROR
        return ok(value, self.wait_cycles)

    def write(self, offset: int, width: int, value: int, now: int) -> Response:
        if offset != self.TX:
            return BUS_ERROR if offset >= self.size else ok(None, self.wait_cycles)
        byte = value & 0xFF
        act = self._firing("drop-byte", now) if self.activations else None
        if act is not None:
            act.record(now, byte, None)
        else:
            self.output.append(byte)
        return ok(None, self.wait_cycles)

    def peek(self, offset: int, width: int) -> int | None:
        if offset == self.TX:
            return 0
        if offset == self.STATUS:
            return 1
        if 0 <= offset and offset + width <= self.size:
            return 0
        return None

    def snapshot(self) -> tuple:
        return (self.now, bytes(self.output))


DEVICE_KINDS: dict[str, type[Device]] = {
    "rom": Rom,
    "ram": Ram,
    "eeprom": Eeprom,
    "timer": Timer,
    "console": Console,
}


def eeprom_write(device: Eeprom, offset: int, value: int, now: int) -> Response:
    return device.write(offset, 1, value, now)


def eeprom_read(device: Eeprom, offset: int, now: int, width: int = 1) -> Response:
    return device.read(offset, width, now)
