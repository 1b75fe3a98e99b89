from __future__ import annotations

from pathlib import Path

import pytest

from virtplat.asm import assemble
from virtplat.faults import compile_campaign, parse_campaign
from virtplat.harness.runner import execute
from virtplat.harness.scenario import load_scenario
from virtplat.platform import parse_platform

EXAMPLES = Path(__file__).resolve().parent.parent / "scenarios"
SCENARIOS = sorted(EXAMPLES.glob("*.scenario.ini"))


def test_list_names_every_scenario():
    listed = [ln.split("#")[0].strip() for ln in (EXAMPLES / "all.txt").read_text().splitlines()]
    assert sorted(n for n in listed if n) == [p.name for p in SCENARIOS]


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_example_scenario_runs_as_documented(path):
    s = load_scenario(path)
    image = assemble((EXAMPLES / "src" / f"{s.binary.stem}.S").read_text(), 0).image
    platform_text = s.platform.read_text()
    campaign_text = s.campaign.read_text() if s.campaign else None
    if campaign_text:
        compile_campaign(parse_campaign(campaign_text), parse_platform(platform_text))
    r = execute(s, image, platform_text, campaign_text, record_trace=False)
    expected = "fail" if path.name == "eeprom_fixed_wait_slow.scenario.ini" else "pass"
    assert r.verdict.outcome == expected, r.verdict.summary()
