"""Regression suite over the bundled models.

The manifest (``benchmarks.yaml``) lists one ``check`` invocation per case.
Cases run in separate processes; each case uses a single solver worker.
"""

from __future__ import annotations

import contextlib
import io
import json
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

TAGS = ("fast", "long")


def models_dir() -> Path:
    return Path(str(resources.files("deltareach") / "models"))


def default_manifest() -> Path:
    return Path(str(resources.files("deltareach") / "benchmarks.yaml"))


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    model: str
    args: tuple
    expect: str
    budget: float = 120.0
    tag: str = "fast"
    note: str = ""

    def model_path(self, base: Path | None = None) -> Path:
        p = Path(self.model)
        if p.is_absolute() or p.exists():
            return p
        return (base or models_dir()) / p

    def argv(self, witness: str, base: Path | None = None) -> list[str]:
        return ["check", str(self.model_path(base)), *self.args,
                "--time-limit", str(self.budget), "--workers", "1", "--json", "--witness", witness]


@dataclass
class CaseResult:
    case: BenchmarkCase
    verdict: str
    seconds: float
    var_count: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict == self.case.expect


@dataclass
class SuiteReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results)

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            mark = "PASS" if r.ok else "FAIL"
            extra = f" ({r.error})" if r.error else ""
            lines.append(f"{mark} {r.case.name:<18} expect {r.case.expect:<15} got {r.verdict:<15} "
                         f"vars {r.var_count:<4} {r.seconds:8.2f} s{extra}")
        n = sum(r.ok for r in self.results)
        lines.append(f"{n}/{len(self.results)} cases match")
        return "\n".join(lines)


def load_manifest(path: Path | str | None = None) -> list[BenchmarkCase]:
    path = Path(path) if path else default_manifest()
    data = yaml.safe_load(path.read_text())
    cases = []
    for raw in data.get("cases", []):
        tag = raw.get("tag", "fast")
        if tag not in TAGS:
            raise ValueError(f"case {raw.get('name')}: unknown tag {tag!r}")
        cases.append(BenchmarkCase(raw["name"], raw["model"], tuple(str(a) for a in raw.get("args", ())),
                                   raw["expect"], float(raw.get("budget", 120)), tag, raw.get("note", "")))
    return cases


def run_case(case: BenchmarkCase, base: Path | None = None) -> CaseResult:
    from .cli import main

    buf, err = io.StringIO(), io.StringIO()
    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(err):
            code = main(case.argv(str(Path(tmp) / "witness"), base))
    secs = time.perf_counter() - start
    if code == 3:
        return CaseResult(case, "error", secs, error=err.getvalue().strip())
    rec = json.loads(buf.getvalue().strip().splitlines()[-1])
    return CaseResult(case, rec["verdict"], secs, rec["var_count"])


def run_suite(tag: str | None = "fast", manifest=None, jobs: int = 1, names=None) -> SuiteReport:
    """Run every case with the given tag (all cases when tag is None)."""
    cases = [c for c in load_manifest(manifest) if (tag is None or c.tag == tag)
             and (not names or c.name in names)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_case, cases))
    else:
        results = [run_case(c) for c in cases]
    return SuiteReport(results)
