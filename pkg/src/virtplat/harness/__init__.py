from .coverage import CoverageReport, LayoutMismatch, merge_coverage
from .loader import LoadedImage, SegmentOutsideMap, UnsupportedImage, load_binary
from .runner import BatchReport, RunResult, Verdict, execute, run_batch, run_scenario
from .scenario import TestScenario, load_scenario, parse_scenario
from .trace import Divergence, MalformedTrace, diff_traces

__all__ = [
    "BatchReport",
    "CoverageReport",
    "Divergence",
    "LayoutMismatch",
    "LoadedImage",
    "MalformedTrace",
    "RunResult",
    "SegmentOutsideMap",
    "TestScenario",
    "UnsupportedImage",
    "Verdict",
    "diff_traces",
    "execute",
    "load_binary",
    "load_scenario",
    "merge_coverage",
    "parse_scenario",
    "run_batch",
    "run_scenario",
]
