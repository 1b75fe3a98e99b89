"""Scenario execution, verdicts and batch campaigns."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..faults import compile_campaign, parse_campaign
from ..platform import instantiate, parse_platform
from .coverage import CoverageCollector, CoverageReport, LayoutMismatch, merge_coverage
from .loader import load_binary
from .scenario import Assertion, TestScenario, load_scenario
from .trace import format_step

log = logging.getLogger(__name__)

PASS, FAIL, ERROR = "pass", "fail", "error"


@dataclass(frozen=True)
class AssertionResult:
    label: str
    passed: bool
    expected: str
    actual: str


@dataclass
class Verdict:
    scenario_id: str
    outcome: str
    stop_reason: str
    cycles: int
    instructions: int
    fault_activations: int
    exit_code: int | None = None
    assertions: list[AssertionResult] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    instruction_coverage_pct: float = 0.0
    branch_coverage_pct: float = 0.0
    image_sha256: str = ""
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        line = (
            f"{self.outcome.upper():5} {self.scenario_id}: stop={self.stop_reason} cycles={self.cycles} "
            f"faults={self.fault_activations} coverage={self.instruction_coverage_pct:.1f}%"
        )
        details = [f"    assertion {a.label}: expected {a.expected}, got {a.actual}" for a in self.assertions if not a.passed]
        details += [f"    {d}" for d in self.diagnostics]
        return "\n".join([line, *details])


@dataclass
class RunResult:
    verdict: Verdict
    trace: list[str]
    coverage: CoverageReport
    fault_log: str
    device_events: list = field(default_factory=list)

    @property
    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)


def _fmt(v: int | str | None) -> str:
    if v is None:
        return "<unreadable>"
    if isinstance(v, str):
        return repr(v)
    return f"0x{v:08x}"


def _check(sim, a: Assertion) -> AssertionResult:
    actual: int | str | None
    if a.kind == "exit_code":
        actual = sim.cpu.exit_code
    elif a.kind == "reg":
        actual = sim.cpu.regs[a.index]
    elif a.kind == "mem":
        actual = sim.peek(a.index, a.width)
    elif a.kind == "console":
        consoles = [d for d in sim.devices.values() if d.kind == "console"]
        actual = b"".join(bytes(c.output) for c in consoles).decode("latin-1")
    else:
        dev = sim.devices.get(a.device)
        actual = dev.peek(a.index, a.width) if dev is not None else None
    return AssertionResult(a.label, actual == a.expected, _fmt(a.expected), _fmt(actual))


def execute(
    scenario: TestScenario,
    image: bytes,
    platform_text: str,
    campaign_text: str | None = None,
    seed: int | None = None,
    use_fault_engine: bool = True,
    record_trace: bool = True,
) -> RunResult:
    """Run a scenario from already-read inputs.

    ``use_fault_engine=False`` builds the simulator with no fault runtime at
    all, which is distinct from running an empty campaign.
    """
    config = parse_platform(platform_text)
    compiled = None
    if use_fault_engine:
        campaign = parse_campaign(campaign_text or "")
        compiled = compile_campaign(campaign, config)
    if seed is None:
        seed = scenario.seed
    sim = instantiate(config, compiled, seed)
    loaded = load_binary(image, sim, scenario.load_address, scenario.entry)
    coverage = CoverageCollector(loaded)
    trace: list[str] = []
    diagnostics: list[str] = []
    stimuli = list(scenario.stimuli)
    next_stim = 0
    stop = scenario.stop
    cpu = sim.cpu
    instructions = 0

    while True:
        if cpu.halted:
            reason = "exit" if cpu.exit_code is not None else "trap"
            break
        if stop.kind == "pc" and cpu.pc == stop.pc:
            reason = "pc"
            break
        if cpu.cycles >= stop.max_cycles:
            reason = "cycles"
            break
        while next_stim < len(stimuli) and stimuli[next_stim].cycle <= cpu.cycles:
            s = stimuli[next_stim]
            next_stim += 1
            dev = sim.devices.get(s.device)
            if dev is None:
                diagnostics.append(f"stimulus targets unknown device {s.device!r}")
                continue
            resp = dev.write(s.offset, s.width, s.value, cpu.cycles)
            if not resp.ok:
                diagnostics.append(f"stimulus at cycle {s.cycle} to {s.device}+0x{s.offset:x}: {resp.status.value}")
        out = sim.step()
        if out.kind != "trap":
            instructions += 1
        if record_trace:
            trace.append(format_step(out, cpu.exit_code))
        coverage.observe(out)

    sim.tick()
    if reason == "trap":
        diagnostics.append(f"unhandled trap: {cpu.pending_trap}")
    elif reason == "cycles" and scenario.expect_stop != "cycles":
        diagnostics.append(f"cycle budget of {stop.max_cycles} exhausted")

    results = [_check(sim, a) for a in scenario.assertions]
    if reason != scenario.expect_stop and reason in ("trap", "cycles"):
        outcome = ERROR
    elif reason != scenario.expect_stop:
        outcome = FAIL
        diagnostics.append(f"stopped by {reason}, expected {scenario.expect_stop}")
    else:
        outcome = PASS if all(r.passed for r in results) else FAIL

    report = coverage.report()
    fault_log = sim.fault_log
    verdict = Verdict(
        scenario_id=scenario.id,
        outcome=outcome,
        stop_reason=reason,
        cycles=cpu.cycles,
        instructions=instructions,
        fault_activations=len(fault_log),
        exit_code=cpu.exit_code,
        assertions=results,
        diagnostics=diagnostics,
        instruction_coverage_pct=round(report.instruction_pct, 4),
        branch_coverage_pct=round(report.branch_pct, 4),
        image_sha256=loaded.sha256,
    )
    return RunResult(verdict, trace, report, fault_log.render(), list(sim.events))


def run_scenario(
    scenario: TestScenario | Path | str,
    out_dir: Path | str | None = None,
    seed: int | None = None,
    record_trace: bool = True,
) -> RunResult:
    """Load every referenced file, run, and optionally write artifacts."""
    if not isinstance(scenario, TestScenario):
        scenario = load_scenario(scenario)
    image = scenario.binary.read_bytes()
    platform_text = scenario.platform.read_text(encoding="utf-8")
    campaign_text = scenario.campaign.read_text(encoding="utf-8") if scenario.campaign else None
    result = execute(scenario, image, platform_text, campaign_text, seed, record_trace=record_trace)
    if hashlib.sha256(image).hexdigest() != result.verdict.image_sha256:
        raise RuntimeError("input image changed during the run")
    if out_dir is not None:
        write_artifacts(result, Path(out_dir), record_trace)
    return result


def write_artifacts(result: RunResult, out_dir: Path, with_trace: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    sid = result.verdict.scenario_id
    names = {"coverage": f"{sid}.coverage.json", "fault_log": f"{sid}.faults", "verdict": f"{sid}.verdict.json"}
    if with_trace:
        names["trace"] = f"{sid}.trace"
    result.verdict.artifacts = dict(sorted(names.items()))
    if with_trace:
        (out_dir / names["trace"]).write_text(result.trace_text, encoding="utf-8")
    (out_dir / names["coverage"]).write_text(result.coverage.to_json(), encoding="utf-8")
    (out_dir / names["fault_log"]).write_text(result.fault_log, encoding="utf-8")
    (out_dir / names["verdict"]).write_text(result.verdict.to_json(), encoding="utf-8")


# --- batch campaigns -----------------------------------------------------------


def read_scenario_list(path: Path | str) -> list[Path]:
    p = Path(path)
    entries = []
    for raw in p.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            entries.append(p.parent / line)
    return entries


def _run_one(args: tuple[Path, Path | None, int | None, bool]) -> tuple[dict, str | None]:
    path, out_dir, seed, with_trace = args
    try:
        res = run_scenario(path, out_dir, seed, record_trace=with_trace)
    except Exception as exc:  # recorded per scenario; the batch continues
        record = {"id": str(path), "outcome": ERROR, "error": f"{type(exc).__name__}: {exc}"}
        return record, None
    v = res.verdict
    record = {
        "id": v.scenario_id,
        "outcome": v.outcome,
        "stop_reason": v.stop_reason,
        "cycles": v.cycles,
        "fault_activations": v.fault_activations,
        "instruction_coverage_pct": v.instruction_coverage_pct,
        "branch_coverage_pct": v.branch_coverage_pct,
        "failed_assertions": [a.label for a in v.assertions if not a.passed],
        "diagnostics": v.diagnostics,
    }
    return record, res.coverage.to_json()


@dataclass
class BatchReport:
    records: list[dict]
    coverage: dict[str, CoverageReport]

    @property
    def all_passed(self) -> bool:
        return all(r["outcome"] == PASS for r in self.records)

    def to_json(self) -> str:
        counts = {k: sum(r["outcome"] == k for r in self.records) for k in (PASS, FAIL, ERROR)}
        doc = {
            "scenarios": self.records,
            "totals": counts,
            "coverage": {
                layout: {"instruction_pct": round(c.instruction_pct, 4), "branch_pct": round(c.branch_pct, 4)}
                for layout, c in sorted(self.coverage.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = [f"{r['outcome'].upper():5} {r['id']}" + (f"  ({r['error']})" if "error" in r else "") for r in self.records]
        n = len(self.records)
        passed = sum(r["outcome"] == PASS for r in self.records)
        lines.append(f"{passed}/{n} scenarios passed")
        return "\n".join(lines)


def run_batch(
    paths: list[Path],
    out_dir: Path | None = None,
    seed: int | None = None,
    jobs: int = 1,
    with_trace: bool = True,
) -> BatchReport:
    """Run scenarios (in parallel when ``jobs > 1``); results keep declaration order."""
    args = [(p, out_dir, seed, with_trace) for p in paths]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, args))
    else:
        results = [_run_one(a) for a in args]
    by_layout: dict[str, list[CoverageReport]] = {}
    for _, cov in results:
        if cov is not None:
            rep = CoverageReport.from_json(cov)
            by_layout.setdefault(rep.layout, []).append(rep)
    merged = {}
    for layout, reps in by_layout.items():
        try:
            merged[layout] = merge_coverage(reps)
        except LayoutMismatch as exc:  # pragma: no cover - layouts are grouped by digest
            log.warning("%s", exc)
    report = BatchReport([r for r, _ in results], merged)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out_dir / "summary.txt").write_text(report.summary() + "\n", encoding="utf-8")
    return report
