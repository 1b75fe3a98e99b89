"""Instruction-address and branch-outcome coverage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..cpu import StepOutcome
from .loader import LoadedImage


class LayoutMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CoverageReport:
    layout: str | None = None
    code_ranges: tuple[tuple[int, int], ...] = ()
    code_words: int = 0
    branch_sites: frozenset[int] = frozenset()
    executed: frozenset[int] = frozenset()
    taken: frozenset[int] = frozenset()
    not_taken: frozenset[int] = frozenset()

    @property
    def branches(self) -> dict[int, tuple[bool, bool]]:
        """branch address -> (taken seen, not-taken seen) for every static branch site."""
        return {a: (a in self.taken, a in self.not_taken) for a in sorted(self.branch_sites)}

    @property
    def instruction_pct(self) -> float:
        return 100.0 * len(self.executed) / self.code_words if self.code_words else 0.0

    @property
    def branch_pct(self) -> float:
        total = 2 * len(self.branch_sites)
        if not total:
            return 0.0
        return 100.0 * (len(self.taken & self.branch_sites) + len(self.not_taken & self.branch_sites)) / total

    def to_json(self) -> str:
        doc = {
            "layout": self.layout,
            "code_ranges": [[f"0x{a:08x}", f"0x{b:08x}"] for a, b in self.code_ranges],
            "code_words": self.code_words,
            "instruction_pct": round(self.instruction_pct, 4),
            "branch_pct": round(self.branch_pct, 4),
            "executed": [f"0x{a:08x}" for a in sorted(self.executed)],
            "branches": {f"0x{a:08x}": {"taken": t, "not_taken": n} for a, (t, n) in self.branches.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> CoverageReport:
        doc = json.loads(text)
        br = {int(k, 16): v for k, v in doc["branches"].items()}
        return cls(
            layout=doc["layout"],
            code_ranges=tuple((int(a, 16), int(b, 16)) for a, b in doc["code_ranges"]),
            code_words=doc["code_words"],
            branch_sites=frozenset(br),
            executed=frozenset(int(a, 16) for a in doc["executed"]),
            taken=frozenset(a for a, v in br.items() if v["taken"]),
            not_taken=frozenset(a for a, v in br.items() if v["not_taken"]),
        )


@dataclass
class CoverageCollector:
    image: LoadedImage
    executed: set[int] = field(default_factory=set)
    taken: set[int] = field(default_factory=set)
    not_taken: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        self._ranges = self.image.code_ranges

    def _in_code(self, pc: int) -> bool:
        return any(a <= pc < b for a, b in self._ranges)

    def observe(self, out: StepOutcome) -> None:
        if out.kind == "trap" or not self._in_code(out.pc):
            return
        self.executed.add(out.pc)
        if out.branch_taken is not None:
            (self.taken if out.branch_taken else self.not_taken).add(out.pc)

    def report(self) -> CoverageReport:
        words = self.image.code_words()
        return CoverageReport(
            layout=self.image.layout_digest(),
            code_ranges=self.image.code_ranges,
            code_words=len(words),
            branch_sites=self.image.branch_sites(),
            executed=frozenset(self.executed),
            taken=frozenset(self.taken),
            not_taken=frozenset(self.not_taken),
        )


def merge_coverage(reports: list[CoverageReport]) -> CoverageReport:
    """Union of reports sharing one code layout; ``[]`` gives the empty report."""
    real = [r for r in reports if r.layout is not None]
    if not real:
        return CoverageReport()
    first = real[0]
    for r in real[1:]:
        if r.layout != first.layout or r.code_ranges != first.code_ranges:
            raise LayoutMismatch(f"cannot merge coverage of layouts {first.layout} and {r.layout}")
    return CoverageReport(
        layout=first.layout,
        code_ranges=first.code_ranges,
        code_words=first.code_words,
        branch_sites=first.branch_sites,
        executed=frozenset().union(*(r.executed for r in real)),
        taken=frozenset().union(*(r.taken for r in real)),
        not_taken=frozenset().union(*(r.not_taken for r in real)),
    )
