"""Fault campaigns: specification, scheduling, compilation and runtime.

A campaign is an ordered list of :class:`FaultSpec`. Compiling it against a
platform yields an immutable :class:`CompiledCampaign`; each simulator then
builds its own :class:`FaultRuntime` holding the mutable per-instance state
(hit counters, random streams, the fault log).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Any

import numpy as np

from . import inifile
from .asm import REGISTERS
from .bus import BUS_ERROR, Kind, Response, Status, Transaction, WIDTH_MASK, with_payload
from .devices import DEVICE_KINDS

if TYPE_CHECKING:
    from .bus import Interconnect
    from .cpu import CpuState

class FaultType(enum.Enum):
    BIT_FLIP = "bit-flip"
    STUCK_AT_0 = "stuck-at-0"
    STUCK_AT_1 = "stuck-at-1"
    VALUE_REPLACE = "value-replace"
    EXTRA_DELAY = "extra-delay"
    ERROR_RESPONSE = "error-response"
    DROP_WRITE = "drop-write"
    DEVICE_INTERNAL = "device-internal"
    STATE_UPSET = "state-upset"


VALUE_FAULTS = frozenset({FaultType.BIT_FLIP, FaultType.STUCK_AT_0, FaultType.STUCK_AT_1, FaultType.VALUE_REPLACE})
RESPONSE_FAULTS = frozenset({FaultType.EXTRA_DELAY, FaultType.ERROR_RESPONSE})
TRANSACTION_FAULTS = VALUE_FAULTS | RESPONSE_FAULTS | {FaultType.DROP_WRITE}


class FaultError(ValueError):
    pass


class UnknownTarget(FaultError):
    def __init__(self, fault_id: str, target: str) -> None:
        super().__init__(f"fault {fault_id!r}: unknown target {target!r}")
        self.fault_id = fault_id
        self.target = target


class UnknownDeviceFault(FaultError):
    def __init__(self, device: str, name: str) -> None:
        super().__init__(f"device {device!r} has no internal fault named {name!r}")
        self.device = device
        self.name = name


class DuplicateFaultId(FaultError):
    def __init__(self, fault_id: str) -> None:
        super().__init__(f"duplicate fault id {fault_id!r}")
        self.fault_id = fault_id


class InvalidLocus(FaultError):
    pass


# --- scheduling -------------------------------------------------------------


@dataclass(frozen=True)
class Frequency:
    mode: str = "every"  # every | every_nth | period
    n: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("every", "every_nth", "period"):
            raise ValueError(f"unknown frequency mode {self.mode!r}")
        if self.n < 1:
            raise ValueError("frequency parameter must be >= 1")

    @classmethod
    def parse(cls, text: str) -> Frequency:
        text = text.strip()
        if text == "every":
            return cls()
        for mode in ("every_nth", "period"):
            if text.startswith(mode + "="):
                return cls(mode, int(text[len(mode) + 1:], 0))
        raise ValueError(f"bad frequency {text!r}")

    def render(self) -> str:
        return "every" if self.mode == "every" else f"{self.mode}={self.n}"


@dataclass(frozen=True)
class Schedule:
    start: int = 0
    stop: int | None = None
    frequency: Frequency = field(default_factory=Frequency)

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError("start must be >= 0")
        if self.stop is not None and self.stop < self.start:
            raise ValueError(f"stop {self.stop} precedes start {self.start}")

    def in_window(self, now: int) -> bool:
        return self.start <= now and (self.stop is None or now < self.stop)

    def tracker(self) -> ScheduleState:
        return ScheduleState(self)


class ScheduleState:
    """Mutable firing state for one schedule within one simulation."""

    __slots__ = ("schedule", "hits", "next_due", "last_now")

    def __init__(self, schedule: Schedule) -> None:
        self.schedule = schedule
        self.hits = 0
        self.next_due = schedule.start
        self.last_now = -1

    def should_fire(self, now: int) -> bool:
        if now < self.last_now:
            raise ValueError("schedule queried with decreasing time")
        self.last_now = now
        s = self.schedule
        if not s.in_window(now):
            return False
        self.hits += 1
        f = s.frequency
        if f.mode == "every":
            return True
        if f.mode == "every_nth":
            return self.hits % f.n == 0
        # periodic: first matching event at or after each due point
        if now < self.next_due:
            return False
        self.next_due = now + f.n - (now - s.start) % f.n
        return True


def should_fire(state: ScheduleState, now: int) -> bool:
    return state.should_fire(now)


# --- value alteration -------------------------------------------------------


def apply_fault(
    value: int,
    fault_type: FaultType,
    params: dict[str, Any],
    rng: np.random.Generator | None = None,
    width: int = 4,
) -> int:
    """Alter a transferred value; result is truncated to ``width`` bytes."""
    wmask = WIDTH_MASK[width]
    if fault_type is FaultType.BIT_FLIP:
        out = value ^ params["mask"]
    elif fault_type is FaultType.STUCK_AT_0:
        out = value & ~params["mask"]
    elif fault_type is FaultType.STUCK_AT_1:
        out = value | params["mask"]
    elif fault_type is FaultType.VALUE_REPLACE:
        replacement = params.get("value")
        if replacement is None:
            if rng is None:
                raise ValueError("random value-replace needs an rng")
            replacement = int(rng.integers(0, 1 << 32, dtype=np.uint64))
        out = replacement
    else:
        raise ValueError(f"{fault_type.value} does not alter values")
    return out & wmask


def alter_response(resp: Response, fault_type: FaultType, params: dict[str, Any]) -> Response:
    if fault_type is FaultType.EXTRA_DELAY:
        return Response(resp.status, resp.payload, resp.latency + params["delay_cycles"])
    if fault_type is FaultType.ERROR_RESPONSE:
        return Response(Status.BUS_ERROR, None, resp.latency)
    raise ValueError(f"{fault_type.value} does not alter responses")


# --- targets ----------------------------------------------------------------


@dataclass(frozen=True)
class DeviceTarget:
    device_id: str

    def render(self) -> str:
        return self.device_id


@dataclass(frozen=True)
class RangeTarget:
    start: int
    end: int  # exclusive

    def render(self) -> str:
        return f"range:0x{self.start:08x}-0x{self.end:08x}"


@dataclass(frozen=True)
class RegisterLocus:
    index: int

    def render(self) -> str:
        return f"reg:x{self.index}"


@dataclass(frozen=True)
class MemoryLocus:
    address: int

    def render(self) -> str:
        return f"mem:0x{self.address:08x}"


Target = DeviceTarget | RangeTarget | RegisterLocus | MemoryLocus


def parse_target(text: str) -> Target:
    text = text.strip()
    if text.startswith("range:"):
        lo, _, hi = text[6:].partition("-")
        start, end = int(lo, 0), int(hi, 0)
        if end <= start:
            raise ValueError(f"empty address range {text!r}")
        return RangeTarget(start, end)
    if text.startswith("reg:"):
        name = text[4:].strip().lower()
        if name not in REGISTERS:
            raise ValueError(f"unknown register {name!r}")
        return RegisterLocus(REGISTERS[name])
    if text.startswith("mem:"):
        return MemoryLocus(int(text[4:], 0))
    if not text:
        raise ValueError("empty target")
    return DeviceTarget(text)


# --- specification ----------------------------------------------------------


@dataclass(frozen=True)
class FaultSpec:
    id: str
    target: Target
    fault_type: FaultType
    params: dict[str, Any] = field(default_factory=dict, hash=False)
    schedule: Schedule = field(default_factory=Schedule)
    seed: int | None = None
    access: str = "any"  # read | write | any
    include_fetch: bool = False
    name: str | None = None  # device-internal fault name

    def __post_init__(self) -> None:
        t = self.fault_type
        if t in (FaultType.BIT_FLIP, FaultType.STUCK_AT_0, FaultType.STUCK_AT_1) and "mask" not in self.params:
            raise FaultError(f"fault {self.id!r}: {t.value} needs a mask")
        if t is FaultType.EXTRA_DELAY and "delay_cycles" not in self.params:
            raise FaultError(f"fault {self.id!r}: extra-delay needs delay_cycles")
        if t is FaultType.DEVICE_INTERNAL and not self.name:
            raise FaultError(f"fault {self.id!r}: device-internal needs a name")
        if t is FaultType.STATE_UPSET:
            if not isinstance(self.target, (RegisterLocus, MemoryLocus)):
                raise FaultError(f"fault {self.id!r}: state-upset needs a reg: or mem: locus")
            bit = self.params.get("bit")
            if bit is None or not 0 <= bit < 32:
                raise InvalidLocus(f"fault {self.id!r}: bit index must be in 0..31")
        elif isinstance(self.target, (RegisterLocus, MemoryLocus)):
            raise FaultError(f"fault {self.id!r}: {t.value} cannot target CPU state")
        if self.access not in ("read", "write", "any"):
            raise FaultError(f"fault {self.id!r}: access must be read, write or any")
        lo = self.params.get("latency_ms_min")
        hi = self.params.get("latency_ms_max")
        if lo is not None and hi is not None and Fraction(hi) < Fraction(lo):
            raise FaultError(f"fault {self.id!r}: latency window is empty")


@dataclass(frozen=True)
class FaultCampaign:
    faults: tuple[FaultSpec, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for f in self.faults:
            if f.id in seen:
                raise DuplicateFaultId(f.id)
            seen.add(f.id)


def stream_for(campaign_seed: int, fault_id: str, fault_seed: int | None = None) -> np.random.Generator:
    """Counter-based stream keyed by (campaign seed, fault id) or the fault's own seed."""
    h = hashlib.blake2b(digest_size=16)
    if fault_seed is not None:
        h.update(b"fault-seed:" + fault_seed.to_bytes(8, "little"))
    else:
        h.update(b"campaign-seed:" + (campaign_seed & (2**64 - 1)).to_bytes(8, "little"))
    h.update(fault_id.encode())
    key = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


# --- compilation -------------------------------------------------------------


@dataclass(frozen=True)
class TxFilter:
    start: int
    end: int
    access: str = "any"
    include_fetch: bool = False

    def matches(self, tx: Transaction) -> bool:
        if not self.start <= tx.address < self.end:
            return False
        if tx.fetch:
            return self.include_fetch
        if self.access == "any":
            return True
        return tx.kind.value == self.access


@dataclass(frozen=True)
class CompiledCampaign:
    seed: int
    interposers: tuple[tuple[FaultSpec, TxFilter], ...] = ()
    activations: tuple[tuple[str, FaultSpec], ...] = ()
    upsets: tuple[FaultSpec, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.interposers or self.activations or self.upsets)


def compile_campaign(campaign: FaultCampaign, platform: Any) -> CompiledCampaign:
    """Resolve every spec against ``platform`` (anything with ``.devices``).

    Each device entry needs ``id``, ``kind``, ``base`` and ``size``.
    """
    by_id = {d.id: d for d in platform.devices}
    interposers: list[tuple[FaultSpec, TxFilter]] = []
    activations: list[tuple[str, FaultSpec]] = []
    upsets: list[FaultSpec] = []
    for spec in campaign.faults:
        t = spec.fault_type
        if t is FaultType.STATE_UPSET:
            if isinstance(spec.target, MemoryLocus):
                addr = spec.target.address
                if addr % 4 or not any(d.base <= addr and addr + 4 <= d.base + d.size for d in platform.devices):
                    raise InvalidLocus(f"fault {spec.id!r}: memory locus 0x{addr:08x} is not a mapped word")
            elif not 0 <= spec.target.index < 32:
                raise InvalidLocus(f"fault {spec.id!r}: register index out of range")
            upsets.append(spec)
        elif t is FaultType.DEVICE_INTERNAL:
            if not isinstance(spec.target, DeviceTarget) or spec.target.device_id not in by_id:
                raise UnknownTarget(spec.id, spec.target.render())
            dev = by_id[spec.target.device_id]
            registry = DEVICE_KINDS[dev.kind].fault_registry
            if spec.name not in registry:
                raise UnknownDeviceFault(dev.id, spec.name)
            for param in registry[spec.name]:
                if param not in spec.params:
                    raise FaultError(f"fault {spec.id!r}: {spec.name} needs parameter {param!r}")
            activations.append((dev.id, spec))
        else:
            if isinstance(spec.target, DeviceTarget):
                dev = by_id.get(spec.target.device_id)
                if dev is None:
                    raise UnknownTarget(spec.id, spec.target.device_id)
                start, end = dev.base, dev.base + dev.size
            else:
                start, end = spec.target.start, spec.target.end
            interposers.append((spec, TxFilter(start, end, spec.access, spec.include_fetch)))
    return CompiledCampaign(campaign.seed, tuple(interposers), tuple(activations), tuple(upsets))


# --- runtime ------------------------------------------------------------------


@dataclass(frozen=True)
class FaultRecord:
    cycle: int
    fault_id: str
    target: str
    pre: Any
    post: Any

    def render(self) -> str:
        return f"{self.cycle} {self.fault_id} {self.target} {_fmt(self.pre)} {_fmt(self.post)}"


def _fmt(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return f"0x{v:08x}"
    return str(v)


class FaultLog:
    def __init__(self) -> None:
        self.records: list[FaultRecord] = []

    def add(self, cycle: int, fault_id: str, target: str, pre: Any, post: Any) -> None:
        self.records.append(FaultRecord(cycle, fault_id, target, pre, post))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def render(self) -> str:
        return "".join(r.render() + "\n" for r in self.records)


class TxFaultInterposer:
    """Bus interposer realising one transaction-targeted fault."""

    def __init__(self, spec: FaultSpec, flt: TxFilter, rng: np.random.Generator, log: FaultLog) -> None:
        self.spec = spec
        self.filter = flt
        self.include_fetch = flt.include_fetch
        self.state = spec.schedule.tracker()
        self.rng = rng
        self.log = log

    def select(self, tx: Transaction) -> bool:
        if not self.filter.matches(tx):
            return False
        if self.spec.fault_type is FaultType.DROP_WRITE and tx.kind is not Kind.WRITE:
            return False
        return self.state.should_fire(tx.issue_cycle)

    def _target(self, tx: Transaction) -> str:
        return f"{tx.kind.value}@0x{tx.address:08x}"

    def outbound(self, tx: Transaction) -> Transaction | Response:
        t = self.spec.fault_type
        if tx.kind is not Kind.WRITE:
            return tx
        if t in VALUE_FAULTS:
            new = apply_fault(tx.payload, t, self.spec.params, self.rng, tx.width)
            self.log.add(tx.issue_cycle, self.spec.id, self._target(tx), tx.payload, new)
            return with_payload(tx, new)
        if t is FaultType.DROP_WRITE:
            self.log.add(tx.issue_cycle, self.spec.id, self._target(tx), tx.payload, None)
            return Response(Status.OK)
        return tx

    def inbound(self, tx: Transaction, resp: Response) -> Response:
        t = self.spec.fault_type
        if t in VALUE_FAULTS:
            if tx.kind is Kind.READ and resp.payload is not None:
                new = apply_fault(resp.payload, t, self.spec.params, self.rng, tx.width)
                self.log.add(tx.issue_cycle, self.spec.id, self._target(tx), resp.payload, new)
                return Response(resp.status, new, resp.latency)
            return resp
        if t is FaultType.EXTRA_DELAY:
            new = alter_response(resp, t, self.spec.params)
            self.log.add(tx.issue_cycle, self.spec.id, self._target(tx), resp.latency, new.latency)
            return new
        if t is FaultType.ERROR_RESPONSE:
            self.log.add(tx.issue_cycle, self.spec.id, self._target(tx), resp.status.value, BUS_ERROR.status.value)
            return alter_response(resp, t, self.spec.params)
        return resp


class DeviceFaultActivation:
    """A device-internal fault attached to one device instance."""

    def __init__(self, spec: FaultSpec, device_id: str, rng: np.random.Generator, log: FaultLog) -> None:
        self.spec = spec
        self.name = spec.name
        self.params = spec.params
        self.device_id = device_id
        self.state = spec.schedule.tracker()
        self.rng = rng
        self.log = log

    def should_fire(self, now: int) -> bool:
        return self.state.should_fire(now)

    def draw_cycles(self, lo: int, hi: int) -> int:
        """Uniform integer over the inclusive range ``[lo, hi]``."""
        return int(self.rng.integers(lo, hi, endpoint=True))

    def record(self, now: int, pre: Any, post: Any) -> None:
        self.log.add(now, self.spec.id, f"{self.device_id}:{self.name}", pre, post)


def inject_state_upset(
    state: CpuState,
    bus: Interconnect | None,
    locus: RegisterLocus | MemoryLocus,
    bit: int,
    at: int,
    log: FaultLog | None = None,
    fault_id: str = "upset",
) -> None:
    """Invert exactly one architectural bit, bypassing the bus."""
    if not 0 <= bit < 32:
        raise InvalidLocus(f"bit index {bit} out of range")
    flip = 1 << bit
    if isinstance(locus, RegisterLocus):
        if not 0 <= locus.index < 32:
            raise InvalidLocus(f"register index {locus.index} out of range")
        target = f"x{locus.index}[{bit}]"
        pre = state.regs[locus.index]
        if locus.index == 0:
            if log is not None:
                log.add(at, fault_id, target, pre, "suppressed")
            return
        state.regs[locus.index] = pre ^ flip
        if log is not None:
            log.add(at, fault_id, target, pre, state.regs[locus.index])
        return
    if bus is None or locus.address % 4:
        raise InvalidLocus(f"memory locus 0x{locus.address:08x} is not an aligned mapped word")
    found = bus.locate(locus.address, 4)
    if found is None:
        raise InvalidLocus(f"memory locus 0x{locus.address:08x} is unmapped")
    device, offset = found
    pre = device.peek(offset, 4)
    if pre is None or not device.poke(offset, 4, pre ^ flip):
        raise InvalidLocus(f"memory locus 0x{locus.address:08x} cannot hold state")
    if log is not None:
        log.add(at, fault_id, f"0x{locus.address:08x}[{bit}]", pre, pre ^ flip)


class FaultRuntime:
    """Per-simulator activation state for one compiled campaign."""

    def __init__(self, compiled: CompiledCampaign, seed: int | None = None) -> None:
        self.compiled = compiled
        self.seed = compiled.seed if seed is None else seed
        self.log = FaultLog()
        self.interposers = [
            TxFaultInterposer(spec, flt, stream_for(self.seed, spec.id, spec.seed), self.log)
            for spec, flt in compiled.interposers
        ]
        self.activations = [
            DeviceFaultActivation(spec, dev_id, stream_for(self.seed, spec.id, spec.seed), self.log)
            for dev_id, spec in compiled.activations
        ]
        self.upsets = [(spec, spec.schedule.tracker()) for spec in compiled.upsets]

    def attach(self, bus: Interconnect) -> None:
        bus.interposers.extend(self.interposers)
        for act in self.activations:
            bus.devices[act.device_id].activate(act)

    def before_step(self, state: CpuState, bus: Interconnect, now: int) -> None:
        for spec, tracker in self.upsets:
            if tracker.should_fire(now):
                inject_state_upset(state, bus, spec.target, spec.params["bit"], now, self.log, spec.id)


# --- campaign file -------------------------------------------------------------

_FAULT_KEYS = frozenset(
    {
        "target", "type", "name", "mask", "value", "delay_cycles", "latency_ms_min",
        "latency_ms_max", "bit", "start", "stop", "frequency", "seed", "access", "include_fetch",
    }
)


def parse_campaign(text: str) -> FaultCampaign:
    """Parse a campaign document: optional ``[campaign]`` plus ``[fault.<id>]`` sections."""
    seed = 0
    faults: list[FaultSpec] = []
    for sec in inifile.parse(text):
        if sec.name == "campaign":
            sec.check_keys({"seed"})
            seed = sec.int("seed", 0)
            continue
        if not sec.name.startswith("fault."):
            raise inifile.ConfigSyntaxError(f"unexpected section [{sec.name}]", sec.line)
        fid = sec.name[len("fault."):]
        if not fid:
            raise inifile.ConfigSyntaxError("empty fault id", sec.line)
        sec.check_keys(_FAULT_KEYS)
        faults.append(_parse_fault(fid, sec))
    return FaultCampaign(tuple(faults), seed)


def _parse_fault(fid: str, sec: inifile.Section) -> FaultSpec:
    e = sec.entries

    def guard(key: str, fn):
        try:
            return fn(e[key].value)
        except (ValueError, KeyError) as exc:
            raise inifile.InvalidValue(f"{key}: {exc}", e[key].line, key) from None

    type_entry = sec.require("type")
    try:
        ftype = FaultType(type_entry.value)
    except ValueError:
        raise inifile.InvalidValue(f"unknown fault type {type_entry.value!r}", type_entry.line, "type") from None
    sec.require("target")
    target = guard("target", parse_target)
    params: dict[str, Any] = {}
    for key in ("mask", "delay_cycles", "bit"):
        if key in e:
            params[key] = sec.int(key)
    if "value" in e:
        params["value"] = None if e["value"].value == "random" else sec.int("value")
    for key in ("latency_ms_min", "latency_ms_max"):
        if key in e:
            params[key] = inifile.parse_fraction(e[key], key)
    start = sec.int("start", 0)
    stop = None
    if "stop" in e and e["stop"].value not in ("none", "inf", ""):
        stop = sec.int("stop")
    frequency = guard("frequency", Frequency.parse) if "frequency" in e else Frequency()
    try:
        schedule = Schedule(start, stop, frequency)
        return FaultSpec(
            id=fid,
            target=target,
            fault_type=ftype,
            params=params,
            schedule=schedule,
            seed=sec.int("seed") if "seed" in e else None,
            access=sec.str("access", "any"),
            include_fetch=inifile.parse_bool(e["include_fetch"], "include_fetch") if "include_fetch" in e else False,
            name=sec.str("name") if "name" in e else None,
        )
    except (FaultError, ValueError) as exc:
        if isinstance(exc, inifile.ConfigError):
            raise
        msg, prefix = str(exc), f"fault {fid!r}: "
        raise inifile.InvalidValue(msg if msg.startswith(prefix) else prefix + msg, sec.line) from None


def render_campaign(campaign: FaultCampaign) -> str:
    sections: list[tuple[str, list[tuple[str, str]]]] = [("campaign", [("seed", str(campaign.seed))])]
    for f in campaign.faults:
        entries = [("target", f.target.render()), ("type", f.fault_type.value)]
        if f.name:
            entries.append(("name", f.name))
        for key in ("mask", "delay_cycles", "bit"):
            if key in f.params:
                entries.append((key, hex(f.params[key]) if key == "mask" else str(f.params[key])))
        if "value" in f.params:
            v = f.params["value"]
            entries.append(("value", "random" if v is None else hex(v)))
        for key in ("latency_ms_min", "latency_ms_max"):
            if key in f.params:
                entries.append((key, str(f.params[key])))
        entries.append(("start", str(f.schedule.start)))
        entries.append(("stop", "none" if f.schedule.stop is None else str(f.schedule.stop)))
        entries.append(("frequency", f.schedule.frequency.render()))
        if f.seed is not None:
            entries.append(("seed", str(f.seed)))
        if f.access != "any":
            entries.append(("access", f.access))
        if f.include_fetch:
            entries.append(("include_fetch", "true"))
        sections.append((f"fault.{f.id}", entries))
    return inifile.render(sections)

