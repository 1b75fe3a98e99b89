"""One simulation instance: core, interconnect, devices and optional faults."""

from __future__ import annotations

from typing import TYPE_CHECKING

from .bus import Interconnect
from .cpu import CpuState, StepOutcome, reset, step
from .devices import Device, DeviceEvent, Eeprom, Timer
from .faults import CompiledCampaign, FaultLog, FaultRuntime

if TYPE_CHECKING:
    from .platform import PlatformConfig


class Simulator:
    """Single-threaded simulation instance; never share across threads."""

    def __init__(
        self,
        config: PlatformConfig,
        campaign: CompiledCampaign | None = None,
        seed: int | None = None,
    ) -> None:
        from .platform import build_device

        self.config = config
        self.devices: dict[str, Device] = {d.id: build_device(d, config.clock_hz) for d in config.devices}
        self.bus = Interconnect(config.memory_map, self.devices)
        self.cpu: CpuState = reset(config.entry_point)
        self.exit_address = config.test_exit_address
        self.faults: FaultRuntime | None = None
        if campaign is not None:
            self.faults = FaultRuntime(campaign, seed)
            self.faults.attach(self.bus)
        self._timed = [d for d in self.devices.values() if isinstance(d, (Eeprom, Timer))]
        self.events: list[DeviceEvent] = []

    @property
    def fault_log(self) -> FaultLog:
        return self.faults.log if self.faults is not None else FaultLog()

    def tick(self) -> None:
        now = self.cpu.cycles
        for dev in self._timed:
            evs = dev.tick(now)
            if evs:
                self.events.extend(evs)

    def step(self) -> StepOutcome:
        self.tick()
        if self.faults is not None and self.faults.upsets:
            self.faults.before_step(self.cpu, self.bus, self.cpu.cycles)
        return step(self.cpu, self.bus, self.exit_address)

    def run(self, max_instructions: int) -> list[StepOutcome]:
        out = []
        for _ in range(max_instructions):
            if self.cpu.halted:
                break
            out.append(self.step())
        return out

    # observation: backdoor only, no transactions, no device time

    def peek(self, address: int, width: int = 4) -> int | None:
        found = self.bus.locate(address, width)
        if found is None:
            return None
        device, offset = found
        return device.peek(offset, width)

    def poke(self, address: int, width: int, value: int) -> bool:
        found = self.bus.locate(address, width)
        if found is None:
            return False
        device, offset = found
        return device.poke(offset, width, value)

    def read_bytes(self, address: int, length: int) -> bytes | None:
        out = bytearray()
        for a in range(address, address + length):
            v = self.peek(a, 1)
            if v is None:
                return None
            out.append(v)
        return bytes(out)

    def device_snapshots(self) -> dict[str, tuple]:
        return {k: d.snapshot() for k, d in self.devices.items()}
