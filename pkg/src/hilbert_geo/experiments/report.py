"""Result rows, sweep results and their CSV / text-summary emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

CSV_HEADER = ("scenario", "N", "observable", "t", "value", "reference", "abs_error",
              "tolerance", "status", "provenance")

# how a row's value is judged against its reference
CHECK_ABS = "abs"        # |value - reference| <= tolerance
CHECK_ABOVE = "above"    # value > reference
CHECK_BELOW = "below"    # value < reference + tolerance


@dataclass(frozen=True)
class Row:
    scenario: str
    N: int
    observable: str
    value: float
    reference: float
    tolerance: float
    provenance: str
    t: float | None = None
    check: str = CHECK_ABS
    error: str | None = None

    @property
    def abs_error(self) -> float:
        return abs(self.value - self.reference)

    @property
    def passed(self) -> bool:
        if self.error is not None or not math.isfinite(self.value):
            return False
        if self.check == CHECK_ABOVE:
            return self.value > self.reference
        if self.check == CHECK_BELOW:
            return self.value < self.reference + self.tolerance
        return self.abs_error <= self.tolerance

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def csv_fields(self) -> list[str]:
        prov = self.provenance if self.error is None else f"{self.provenance}; error: {self.error}"
        return [self.scenario, str(self.N), self.observable,
                "" if self.t is None else _fmt(self.t), _fmt(self.value),
                _fmt(self.reference), _fmt(self.abs_error), _fmt(self.tolerance),
                self.status, prov]


def _fmt(x: float) -> str:
    return repr(float(x))


def failed_row(scenario, N, observable, reference, tolerance, provenance, exc, t=None):
    """A row recording that the computation behind ``observable`` raised ``exc``."""
    return Row(scenario, N, observable, math.nan, reference, tolerance, provenance, t=t,
               error=f"{type(exc).__name__}: {exc}")


@dataclass
class SweepResult:
    scenario: str
    rows: list[Row] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        # stable sort: rows of the same N keep their emission order
        self.rows = sorted(self.rows, key=lambda r: r.N)

    @property
    def n_pass(self) -> int:
        return sum(r.passed for r in self.rows)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.all_passed else 1

    def oracle_tags(self) -> dict:
        return {r.observable: r.provenance for r in self.rows}

    def summary_line(self) -> str:
        verdict = "PASS" if self.all_passed else "FAIL"
        return f"{self.n_pass}/{len(self.rows)} {verdict}"


def write_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in result.rows:
            writer.writerow(row.csv_fields())
    return path


def summary_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".summary.txt")


def format_summary(result: SweepResult) -> str:
    lines = [f"scenario: {result.scenario}"]
    for key in sorted(result.metadata):
        lines.append(f"{key}: {result.metadata[key]}")
    lines.append("")
    for r in result.rows:
        t = "" if r.t is None else f" t={r.t:.6g}"
        line = (f"[{r.status}] N={r.N} {r.observable}{t} value={r.value:.10g} "
                f"ref={r.reference:.10g} err={r.abs_error:.3e} tol={r.tolerance:.1e}")
        if r.error:
            line += f" ({r.error})"
        lines.append(line)
    lines += ["", result.summary_line()]
    return "\n".join(lines) + "\n"


def emit_report(result: SweepResult, path) -> tuple[Path, Path]:
    """Write the CSV to ``path`` and the plain-text summary next to it."""
    try:
        csv_path = write_csv(result, path)
        txt = summary_path(csv_path)
        txt.write_text(format_summary(result))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return csv_path, txt
