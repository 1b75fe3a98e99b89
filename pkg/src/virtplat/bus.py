"""Transaction-level interconnect.

The CPU issues :class:`Transaction` objects; :func:`route` pushes each one
through the outbound interposer chain, hands it to the device owning the
address and pushes the :class:`Response` back through the inbound chain.
Every failure is encoded in the response status; nothing here raises for a
well-formed transaction.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Iterable, Mapping, Protocol, Sequence

if TYPE_CHECKING:
    from .devices import Device


class Kind(enum.Enum):
    READ = "read"
    WRITE = "write"


class Status(enum.Enum):
    OK = "ok"
    BUS_ERROR = "bus-error"
    DEVICE_BUSY = "device-busy"


VALID_WIDTHS = (1, 2, 4)
WIDTH_MASK = {1: 0xFF, 2: 0xFFFF, 4: 0xFFFFFFFF}


@dataclass(frozen=True, slots=True)
class Transaction:
    kind: Kind
    address: int
    width: int
    payload: int | None = None
    initiator: str = "cpu0"
    issue_cycle: int = 0
    fetch: bool = False

    def __post_init__(self) -> None:
        if self.width not in VALID_WIDTHS:
            raise ValueError(f"invalid width {self.width}")
        if not 0 <= self.address <= 0xFFFFFFFF or self.address + self.width - 1 > 0xFFFFFFFF:
            raise ValueError(f"address 0x{self.address:x} out of range")
        if self.address % self.width:
            raise ValueError(f"address 0x{self.address:08x} not aligned to {self.width}")
        if (self.kind is Kind.WRITE) != (self.payload is not None):
            raise ValueError("payload is required for writes and forbidden for reads")


@dataclass(frozen=True, slots=True)
class Response:
    status: Status
    payload: int | None = None
    latency: int = 0

    def __post_init__(self) -> None:
        if self.status is Status.BUS_ERROR and self.payload is not None:
            raise ValueError("bus-error responses carry no payload")
        if self.latency < 0:
            raise ValueError("negative latency")

    @property
    def ok(self) -> bool:
        return self.status is Status.OK


BUS_ERROR = Response(Status.BUS_ERROR)


@lru_cache(maxsize=8192)
def ok(payload: int | None = None, latency: int = 0) -> Response:
    """OK response; shared instances are safe because responses are immutable."""
    return Response(Status.OK, payload, latency)


@dataclass(frozen=True, slots=True)
class Region:
    base: int
    size: int
    device_id: str

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, address: int, width: int = 1) -> bool:
        return self.base <= address and address + width <= self.base + self.size


class MapError(ValueError):
    pass


class OverlappingRegions(MapError):
    def __init__(self, a: Region, b: Region) -> None:
        super().__init__(
            f"regions {a.device_id} [0x{a.base:08x}, 0x{a.end:08x}) and "
            f"{b.device_id} [0x{b.base:08x}, 0x{b.end:08x}) overlap"
        )
        self.a, self.b = a, b


class MisalignedRegion(MapError):
    def __init__(self, region: Region) -> None:
        super().__init__(
            f"region {region.device_id} base 0x{region.base:x} / size 0x{region.size:x} "
            "must be non-zero multiples of 4"
        )
        self.region = region


class MemoryMap:
    """Non-overlapping address regions sorted by base address."""

    def __init__(self, regions: Iterable[Region]) -> None:
        self.regions: tuple[Region, ...] = tuple(sorted(regions, key=lambda r: r.base))
        self._bases = [r.base for r in self.regions]

    def __iter__(self):
        return iter(self.regions)

    def __len__(self) -> int:
        return len(self.regions)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MemoryMap) and self.regions == other.regions

    def __repr__(self) -> str:
        return f"MemoryMap({list(self.regions)!r})"

    def find(self, address: int, width: int = 1) -> Region | None:
        """Region wholly containing ``[address, address + width)``, if any.

        Accesses straddling two regions yield ``None``.
        """
        i = bisect.bisect_right(self._bases, address) - 1
        if i < 0:
            return None
        region = self.regions[i]
        if region.contains(address, width):
            return region
        return None

    def region_of(self, device_id: str) -> Region | None:
        for r in self.regions:
            if r.device_id == device_id:
                return r
        return None


def validate_map(memory_map: MemoryMap | Sequence[Region]) -> MemoryMap:
    mm = memory_map if isinstance(memory_map, MemoryMap) else MemoryMap(memory_map)
    for r in mm.regions:
        if r.base % 4 or r.size % 4 or r.size <= 0:
            raise MisalignedRegion(r)
        if r.end > 1 << 32:
            raise MisalignedRegion(r)
    for a, b in zip(mm.regions, mm.regions[1:]):
        if b.base < a.end:
            raise OverlappingRegions(a, b)
    return mm


class Interposer(Protocol):
    """A fault hook sitting on the bus between initiator and device.

    ``outbound`` returns the (possibly altered) transaction, or a Response
    to short-circuit the device entirely. ``inbound`` may alter the
    response. ``select`` is called once per transaction, so one firing
    decision covers both directions.
    """

    def select(self, tx: Transaction) -> bool: ...

    def outbound(self, tx: Transaction) -> Transaction | Response: ...

    def inbound(self, tx: Transaction, resp: Response) -> Response: ...


def dispatch(tx: Transaction, region: Region | None, devices: Mapping[str, Device]) -> Response:
    if region is None:
        return BUS_ERROR
    device = devices[region.device_id]
    offset = tx.address - region.base
    if tx.kind is Kind.READ:
        return device.read(offset, tx.width, tx.issue_cycle)
    return device.write(offset, tx.width, tx.payload, tx.issue_cycle)


def route(
    tx: Transaction,
    memory_map: MemoryMap,
    interposers: Sequence[Interposer],
    devices: Mapping[str, Device],
) -> Response:
    """Deliver ``tx`` to its device through the interposer chain."""
    if not interposers:
        return dispatch(tx, memory_map.find(tx.address, tx.width), devices)

    active = [ip for ip in interposers if ip.select(tx)]
    cur = tx
    resp: Response | None = None
    passed: list[Interposer] = []
    for ip in active:
        passed.append(ip)
        altered = ip.outbound(cur)
        if isinstance(altered, Response):
            resp = altered
            break
        cur = altered
    if resp is None:
        resp = dispatch(cur, memory_map.find(cur.address, cur.width), devices)
    for ip in passed:
        resp = ip.inbound(cur, resp)
    return resp


class Interconnect:
    """Bus instance owned by one simulator: map, devices and fault chain."""

    def __init__(
        self,
        memory_map: MemoryMap,
        devices: Mapping[str, Device],
        interposers: Sequence[Interposer] = (),
    ) -> None:
        self.memory_map = validate_map(memory_map)
        self.devices = dict(devices)
        self.interposers: list[Interposer] = list(interposers)
        self.observer = None
        self._fetch_region: Region | None = None  # last code region, re-checked per fetch

    def access(self, tx: Transaction) -> Response:
        resp = route(tx, self.memory_map, self.interposers, self.devices)
        if self.observer is not None:
            self.observer(tx, resp)
        return resp

    def fetch(self, address: int, now: int) -> Response:
        """Instruction fetch; interposers see it only if they opted in."""
        region = self._fetch_region
        if region is None or not region.base <= address <= region.base + region.size - 4:
            region = self.memory_map.find(address, 4)
            if region is None:
                return BUS_ERROR
            self._fetch_region = region
        if self.interposers:
            chain = [ip for ip in self.interposers if getattr(ip, "include_fetch", False)]
            if chain:
                tx = Transaction(Kind.READ, address, 4, None, "cpu0", now, fetch=True)
                return route(tx, self.memory_map, chain, self.devices)
        return self.devices[region.device_id].read(address - region.base, 4, now)

    def read(self, address: int, width: int, now: int) -> Response:
        return self.access(Transaction(Kind.READ, address, width, None, "cpu0", now))

    def write(self, address: int, width: int, value: int, now: int) -> Response:
        return self.access(Transaction(Kind.WRITE, address, width, value & WIDTH_MASK[width], "cpu0", now))

    def locate(self, address: int, width: int = 1) -> tuple[Device, int] | None:
        """Backdoor lookup for non-intrusive observation (no transaction)."""
        region = self.memory_map.find(address, width)
        if region is None:
            return None
        return self.devices[region.device_id], address - region.base


def with_payload(tx: Transaction, payload: int) -> Transaction:
    return replace(tx, payload=payload & WIDTH_MASK[tx.width])
