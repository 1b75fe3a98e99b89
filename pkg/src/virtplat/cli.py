"""Command-line entry point.

Exit statuses: 0 pass, 1 fail, 2 simulation error, 3 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import TextIO

from . import inifile
from .asm import REGISTERS
from .faults import FaultError, parse_campaign
from .harness.loader import LoadError, load_binary
from .harness.runner import ERROR, FAIL, PASS, read_scenario_list, run_batch, run_scenario
from .harness.scenario import load_scenario
from .platform import instantiate, parse_platform

EXIT_PASS, EXIT_FAIL, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 3
_OUTCOME_STATUS = {PASS: EXIT_PASS, FAIL: EXIT_FAIL, ERROR: EXIT_ERROR}
_INPUT_ERRORS = (OSError, inifile.ConfigError, LoadError, FaultError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="virtplat", description="Run bare-metal RV32I software on a virtual platform.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", type=Path)
    campaign = sub.add_parser("campaign", help="run every scenario named in a list file")
    campaign.add_argument("scenario_list", type=Path)
    campaign.add_argument("--jobs", type=int, default=1)
    for sp in (run, campaign):
        sp.add_argument("--seed", type=_seed, default=None, help="override the fault campaign seed")
        sp.add_argument("--trace", action="store_true", help="record and write instruction traces")
        sp.add_argument("--out", type=Path, default=None, help="artifact output directory")

    stepper = sub.add_parser("step", help="interactive single-stepping")
    stepper.add_argument("platform", type=Path)
    stepper.add_argument("binary", type=Path)
    stepper.add_argument("--load-address", type=lambda s: int(s, 0), default=None)

    validate = sub.add_parser("validate", help="check platform, scenario or campaign files")
    validate.add_argument("files", type=Path, nargs="+")

    report = sub.add_parser("report", help="print a human-readable summary of a verdict or batch report")
    report.add_argument("file", type=Path)
    return p


def cmd_run(args, out: TextIO, err: TextIO) -> int:
    try:
        scenario = load_scenario(args.scenario)
        result = run_scenario(scenario, args.out, args.seed, record_trace=args.trace)
    except _INPUT_ERRORS as exc:
        print(f"virtplat: {args.scenario}: {exc}", file=err)
        return EXIT_USAGE
    print(result.verdict.summary(), file=out)
    return _OUTCOME_STATUS[result.verdict.outcome]


def cmd_campaign(args, out: TextIO, err: TextIO) -> int:
    try:
        paths = read_scenario_list(args.scenario_list)
    except OSError as exc:
        print(f"virtplat: {exc}", file=err)
        return EXIT_USAGE
    if not paths:
        print(f"virtplat: {args.scenario_list}: no scenarios listed", file=err)
        return EXIT_USAGE
    if args.jobs < 1:
        print("virtplat: --jobs must be >= 1", file=err)
        return EXIT_USAGE
    report = run_batch(paths, args.out, args.seed, args.jobs, args.trace)
    print(report.summary(), file=out)
    return EXIT_PASS if report.all_passed else EXIT_FAIL


def cmd_validate(args, out: TextIO, err: TextIO) -> int:
    status = EXIT_PASS
    for path in args.files:
        try:
            text = path.read_text(encoding="utf-8")
            names = [s.name for s in inifile.parse(text)]
            if "platform" in names:
                parse_platform(text)
                kind = "platform"
            elif "scenario" in names:
                load_scenario(path)
                kind = "scenario"
            else:
                parse_campaign(text)
                kind = "campaign"
            print(f"{path}: ok ({kind})", file=out)
        except _INPUT_ERRORS as exc:
            print(f"{path}: {exc}", file=err)
            status = EXIT_USAGE
    return status


def cmd_report(args, out: TextIO, err: TextIO) -> int:
    try:
        doc = json.loads(args.file.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"virtplat: {args.file}: {exc}", file=err)
        return EXIT_USAGE
    if "scenarios" in doc:
        for r in doc["scenarios"]:
            print(f"{r['outcome'].upper():5} {r['id']}", file=out)
        t = doc["totals"]
        print(f"pass={t['pass']} fail={t['fail']} error={t['error']}", file=out)
        for layout, c in doc.get("coverage", {}).items():
            print(f"coverage {layout}: instructions {c['instruction_pct']}% branches {c['branch_pct']}%", file=out)
        return EXIT_PASS if t["fail"] == 0 and t["error"] == 0 else EXIT_FAIL
    if "scenario_id" in doc:
        print(f"{doc['outcome'].upper():5} {doc['scenario_id']}: stop={doc['stop_reason']} cycles={doc['cycles']}", file=out)
        for a in doc["assertions"]:
            mark = "ok  " if a["passed"] else "FAIL"
            print(f"  {mark} {a['label']}: expected {a['expected']}, got {a['actual']}", file=out)
        return _OUTCOME_STATUS[doc["outcome"]]
    print(f"virtplat: {args.file}: not a verdict or batch report", file=err)
    return EXIT_USAGE


def _print_regs(sim, out: TextIO) -> None:
    regs = sim.cpu.regs
    for row in range(0, 32, 4):
        print("  ".join(f"x{i:<2}={regs[i]:08x}" for i in range(row, row + 4)), file=out)


def _print_state(sim, out: TextIO) -> None:
    cpu = sim.cpu
    state = "halted" if cpu.halted else "running"
    print(f"pc={cpu.pc:08x} cycles={cpu.cycles} {state}", file=out)
    if cpu.pending_trap is not None:
        print(f"trap: {cpu.pending_trap}", file=out)
    if cpu.exit_code is not None:
        print(f"exit code: {cpu.exit_code}", file=out)


def step_session(sim, inp: TextIO, out: TextIO, prompt: str = "(vp) ") -> int:
    """Read-eval-print loop over ``sim``; observation never touches the bus."""
    from .harness.trace import format_step

    while True:
        out.write(prompt)
        out.flush()
        line = inp.readline()
        if not line:
            return EXIT_PASS
        toks = line.split()
        if not toks:
            continue
        cmd, rest = toks[0].lower(), toks[1:]
        try:
            if cmd in ("quit", "q", "exit"):
                return EXIT_PASS
            if cmd in ("step", "s"):
                n = int(rest[0], 0) if rest else 1
                if n < 1 or len(rest) > 1:
                    raise ValueError
                for _ in range(n):
                    if sim.cpu.halted:
                        break
                    print(format_step(sim.step(), sim.cpu.exit_code), file=out)
                _print_state(sim, out)
            elif cmd in ("regs", "r") and not rest:
                _print_regs(sim, out)
                _print_state(sim, out)
            elif cmd == "reg" and len(rest) == 1:
                name = rest[0].lower()
                idx = REGISTERS[name] if name in REGISTERS else int(name, 0)
                if not 0 <= idx < 32:
                    raise ValueError
                print(f"x{idx}={sim.cpu.regs[idx]:08x}", file=out)
            elif cmd in ("mem", "m") and 1 <= len(rest) <= 2:
                addr = int(rest[0], 0)
                length = int(rest[1], 0) if len(rest) == 2 else 16
                if length < 1 or length > 4096:
                    raise ValueError
                data = sim.read_bytes(addr, length)
                if data is None:
                    print(f"memory [0x{addr:08x}, +{length}) is not readable", file=out)
                else:
                    for off in range(0, length, 16):
                        chunk = data[off:off + 16]
                        print(f"{addr + off:08x}: {chunk.hex(' ')}", file=out)
            elif cmd in ("help", "h", "?"):
                print("commands: step [N] | regs | reg <r> | mem <addr> [len] | quit", file=out)
            else:
                raise ValueError
        except (ValueError, IndexError, KeyError):
            print(f"? bad command: {line.strip()!r} (try 'help')", file=out)


def cmd_step(args, out: TextIO, err: TextIO, inp: TextIO) -> int:
    try:
        config = parse_platform(args.platform.read_text(encoding="utf-8"))
        sim = instantiate(config)
        load_binary(args.binary.read_bytes(), sim, args.load_address)
    except _INPUT_ERRORS as exc:
        print(f"virtplat: {exc}", file=err)
        return EXIT_USAGE
    _print_state(sim, out)
    return step_session(sim, inp, out)


def main(argv: list[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    inp = stdin or sys.stdin
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"virtplat: {exc}", file=err)
        return EXIT_USAGE
    if args.command == "run":
        return cmd_run(args, out, err)
    if args.command == "campaign":
        return cmd_campaign(args, out, err)
    if args.command == "step":
        return cmd_step(args, out, err, inp)
    if args.command == "validate":
        return cmd_validate(args, out, err)
    return cmd_report(args, out, err)


if __name__ == "__main__":
    sys.exit(main())
