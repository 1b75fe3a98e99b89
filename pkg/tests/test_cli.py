from __future__ import annotations

import io
import json

import pytest

from virtplat.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main

from helpers import BOARD_PLATFORM, build, write_scenario

EXIT_42 = "li a0, 42\nli t6, 0xf0000000\nsw a0, 0(t6)\n"


def cli(*argv, stdin: str = ""):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], stdin=io.StringIO(stdin), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_run_exit_statuses(tmp_path):
    ok = write_scenario(tmp_path, "ok", EXIT_42, asserts="exit_code = 42")
    bad = write_scenario(tmp_path, "bad", EXIT_42, asserts="exit_code = 1")
    trap = write_scenario(tmp_path, "trap", "ebreak\n")
    assert cli("run", ok)[0] == EXIT_PASS
    code, out, _ = cli("run", bad)
    assert code == EXIT_FAIL and "FAIL" in out.upper()
    assert cli("run", trap)[0] == EXIT_ERROR


def test_run_writes_artifacts(tmp_path):
    p = write_scenario(tmp_path, "art", EXIT_42, asserts="exit_code = 42")
    out_dir = tmp_path / "out"
    assert cli("run", p, "--trace", "--out", out_dir)[0] == EXIT_PASS
    assert (out_dir / "art.trace").read_text().splitlines()[0].startswith("0000000000000000 00000000")
    assert json.loads((out_dir / "art.verdict.json").read_text())["outcome"] == "pass"


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["run", "x", "--seed", "-1"], ["campaign", "x", "--seed", "abc"]])
def test_usage_errors(argv):
    code, _, err = cli(*argv)
    assert code == EXIT_USAGE and err.startswith("virtplat:")


def test_missing_files_are_usage_errors(tmp_path):
    assert cli("run", tmp_path / "nope.scenario.ini")[0] == EXIT_USAGE
    assert cli("campaign", tmp_path / "nope.txt")[0] == EXIT_USAGE
    assert cli("report", tmp_path / "nope.json")[0] == EXIT_USAGE
    assert cli("validate", tmp_path / "nope.ini")[0] == EXIT_USAGE
    assert cli("step", tmp_path / "p.ini", tmp_path / "b.bin")[0] == EXIT_USAGE


def test_validate(tmp_path):
    p = write_scenario(tmp_path, "v", EXIT_42, campaign_text="[campaign]\nseed = 3\n")
    code, out, _ = cli("validate", p, tmp_path / "v.platform.ini", tmp_path / "v.campaign.ini")
    assert code == EXIT_PASS
    assert [line.rsplit(" ", 1)[-1] for line in out.splitlines()] == ["(scenario)", "(platform)", "(campaign)"]
    broken = tmp_path / "broken.platform.ini"
    broken.write_text(BOARD_PLATFORM.replace("size = 0x1000", "size = lots", 1))
    code, _, err = cli("validate", broken)
    assert code == EXIT_USAGE and "size" in err


def test_campaign_and_report(tmp_path):
    a = write_scenario(tmp_path, "a", EXIT_42, asserts="exit_code = 42")
    b = write_scenario(tmp_path, "b", EXIT_42, asserts="exit_code = 0")
    lst = tmp_path / "all.txt"
    lst.write_text(f"{a.name}\n")
    out_dir = tmp_path / "out"
    assert cli("campaign", lst, "--out", out_dir, "--jobs", "2")[0] == EXIT_PASS
    lst.write_text(f"{a.name}\n{b.name}\n")
    assert cli("campaign", lst, "--out", out_dir)[0] == EXIT_FAIL
    code, out, _ = cli("report", out_dir / "report.json")
    assert code == EXIT_FAIL
    assert out.splitlines()[:3] == ["PASS  a", "FAIL  b", "pass=1 fail=1 error=0"]
    code, out, _ = cli("report", out_dir / "a.verdict.json")
    assert code == EXIT_PASS and out.startswith("PASS  a: stop=exit")
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert cli("campaign", empty)[0] == EXIT_USAGE
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert cli("report", junk)[0] == EXIT_USAGE


def test_step_session(tmp_path):
    plat = tmp_path / "p.ini"
    plat.write_text(BOARD_PLATFORM)
    binary = tmp_path / "b.bin"
    binary.write_bytes(build("li a0, 5\nli t6, 0xf0000000\nsw a0, 0(t6)\n"))
    script = "step\nreg a0\nreg x99\nfrobnicate\nmem 0x0 4\nmem 0x20000000 4\nstep 10\nregs\nquit\n"
    code, out, _ = cli("step", plat, binary, "--load-address", "0x0", stdin=script)
    assert code == EXIT_PASS
    assert "0000000000000000 00000000 00500513 addi x10=00000005" in out
    assert "x10=00000005" in out
    assert out.count("? bad command") == 2
    assert "00000000: 13 05 50 00" in out
    assert "not readable" in out
    assert "exit code: 5" in out and "halted" in out


def test_step_ends_on_eof(tmp_path):
    plat = tmp_path / "p.ini"
    plat.write_text(BOARD_PLATFORM)
    binary = tmp_path / "b.bin"
    binary.write_bytes(build("nop\n"))
    assert cli("step", plat, binary, "--load-address", "0", stdin="")[0] == EXIT_PASS
    code, _, err = cli("step", plat, binary)
    assert code == EXIT_USAGE and "load address" in err
