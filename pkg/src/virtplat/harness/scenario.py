"""Scenario files.

::

    [scenario]
    id = eeprom_poll
    platform = board.ini
    binary = poll.bin
    load_address = 0x0
    campaign = slow.ini
    stop = exit                # exit | cycles | pc:0x100
    max_cycles = 2000000

    [stimuli]
    kick = 1000 ram0 0x10 0x1  # cycle device offset value [width]

    [assert]
    exit_code = 0
    reg.a0 = 42
    mem.0x80000000 = 0x2a      # optional width suffix: mem.0x80000000/1
    console = "ok\\n"
    device.eeprom0.0x0/1 = 0x55

Relative paths resolve against the scenario file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .. import inifile
from ..asm import REGISTERS

STOP_KINDS = ("exit", "cycles", "pc", "trap")
DEFAULT_MAX_CYCLES = 1_000_000


@dataclass(frozen=True)
class Stimulus:
    cycle: int
    device: str
    offset: int
    value: int
    width: int = 4


@dataclass(frozen=True)
class Assertion:
    kind: str  # exit_code | reg | mem | console | device
    expected: int | str
    index: int | None = None  # register index or address/offset
    device: str | None = None
    width: int = 4
    label: str = ""


@dataclass(frozen=True)
class StopCondition:
    kind: str = "exit"
    pc: int | None = None
    max_cycles: int = DEFAULT_MAX_CYCLES


@dataclass(frozen=True)
class TestScenario:
    id: str
    platform: Path
    binary: Path
    load_address: int | None = None
    entry: int | None = None
    campaign: Path | None = None
    stop: StopCondition = field(default_factory=StopCondition)
    expect_stop: str = "exit"
    stimuli: tuple[Stimulus, ...] = ()
    assertions: tuple[Assertion, ...] = ()
    seed: int | None = None

    __test__ = False  # not a pytest class


_SCENARIO_KEYS = frozenset(
    {"id", "platform", "binary", "load_address", "entry", "campaign", "stop", "max_cycles", "expect", "seed"}
)


def _split_width(text: str, line: int) -> tuple[str, int]:
    if "/" in text:
        head, _, w = text.rpartition("/")
        if w not in ("1", "2", "4"):
            raise inifile.InvalidValue(f"bad width suffix in {text!r}", line)
        return head, int(w)
    return text, 4


def _value(entry: inifile.Entry, key: str) -> int:
    return inifile.parse_int(entry, key) & 0xFFFFFFFF


def _parse_assertion(key: str, entry: inifile.Entry) -> Assertion:
    line = entry.line
    if key == "exit_code":
        return Assertion("exit_code", _value(entry, key), label=key)
    if key == "console":
        return Assertion("console", inifile.unquote(entry.value, line), label=key)
    kind, _, rest = key.partition(".")
    try:
        if kind == "reg":
            reg = REGISTERS.get(rest.lower())
            if reg is None:
                raise inifile.InvalidValue(f"unknown register {rest!r}", line, key)
            return Assertion("reg", _value(entry, key), index=reg, label=key)
        if kind == "mem":
            addr, width = _split_width(rest, line)
            return Assertion("mem", _value(entry, key), index=int(addr, 0), width=width, label=key)
        if kind == "device":
            dev, _, off = rest.partition(".")
            off, width = _split_width(off, line)
            if not dev or not off:
                raise inifile.InvalidValue(f"expected device.<id>.<offset>, got {key!r}", line, key)
            return Assertion("device", _value(entry, key), index=int(off, 0), device=dev, width=width, label=key)
    except ValueError as exc:
        if isinstance(exc, inifile.ConfigError):
            raise
        raise inifile.InvalidValue(f"{key}: {exc}", line, key) from None
    raise inifile.InvalidValue(f"unknown assertion {key!r}", line, key)


def _parse_stimulus(key: str, entry: inifile.Entry) -> Stimulus:
    toks = entry.value.split()
    if len(toks) not in (4, 5):
        raise inifile.InvalidValue(f"stimulus {key!r}: expected 'cycle device offset value [width]'", entry.line, key)
    try:
        cycle, offset, value = int(toks[0], 0), int(toks[2], 0), int(toks[3], 0)
        width = int(toks[4]) if len(toks) == 5 else 4
    except ValueError:
        raise inifile.InvalidValue(f"stimulus {key!r}: bad number", entry.line, key) from None
    if width not in (1, 2, 4) or offset % width or cycle < 0:
        raise inifile.InvalidValue(f"stimulus {key!r}: bad width/alignment/cycle", entry.line, key)
    return Stimulus(cycle, toks[1], offset, value & 0xFFFFFFFF, width)


def parse_scenario(text: str, base_dir: Path | str = ".") -> TestScenario:
    base = Path(base_dir)
    sections = {s.name: s for s in inifile.parse(text)}
    for name, sec in sections.items():
        if name not in ("scenario", "stimuli", "assert"):
            raise inifile.ConfigSyntaxError(f"unexpected section [{name}]", sec.line)
    sec = sections.get("scenario")
    if sec is None:
        raise inifile.MissingField("scenario", "<document>")
    sec.check_keys(_SCENARIO_KEYS)

    stop_text = sec.str("stop", "exit")
    stop_pc = None
    if stop_text.startswith("pc:"):
        try:
            stop_pc = int(stop_text[3:], 0)
        except ValueError:
            raise inifile.InvalidValue(f"bad stop pc {stop_text!r}", sec.entries["stop"].line, "stop") from None
        stop_kind = "pc"
    else:
        stop_kind = stop_text
    if stop_kind not in ("exit", "cycles", "pc"):
        raise inifile.InvalidValue(f"stop must be exit, cycles or pc:<addr>, got {stop_text!r}", sec.entries["stop"].line, "stop")
    max_cycles = sec.int("max_cycles", DEFAULT_MAX_CYCLES)
    if max_cycles <= 0:
        raise inifile.InvalidValue("max_cycles must be positive", sec.entries["max_cycles"].line, "max_cycles")
    expect = sec.str("expect", stop_kind)
    if expect not in STOP_KINDS:
        raise inifile.InvalidValue(f"expect must be one of {STOP_KINDS}", sec.entries["expect"].line, "expect")

    stimuli = []
    if "stimuli" in sections:
        stimuli = [_parse_stimulus(k, e) for k, e in sections["stimuli"].entries.items()]
    assertions = []
    if "assert" in sections:
        assertions = [_parse_assertion(k, e) for k, e in sections["assert"].entries.items()]

    def path(key: str) -> Path:
        return base / sec.str(key)

    return TestScenario(
        id=sec.str("id"),
        platform=path("platform"),
        binary=path("binary"),
        load_address=sec.int("load_address") if "load_address" in sec.entries else None,
        entry=sec.int("entry") if "entry" in sec.entries else None,
        campaign=path("campaign") if "campaign" in sec.entries else None,
        stop=StopCondition(stop_kind, stop_pc, max_cycles),
        expect_stop=expect,
        stimuli=tuple(sorted(stimuli, key=lambda s: s.cycle)),
        assertions=tuple(assertions),
        seed=sec.int("seed") if "seed" in sec.entries else None,
    )


def load_scenario(path: Path | str) -> TestScenario:
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), p.parent)
