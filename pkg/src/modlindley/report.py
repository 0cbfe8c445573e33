"""Run reports: one structured record, rendered to text, JSON and CSV.

The JSON and text renderings carry the same content; CSV is reserved for
row-shaped outputs (comparisons, sweeps) and is byte-stable: floats are
always written with ``%.10g`` and rows keep their construction order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

CHECK_FMT = "{name}: {value} (tolerance {tolerance}: {verdict})"


def fmt_float(value) -> str:
    """Canonical float rendering used by every CSV writer."""
    return "%.10g" % float(value)


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    return str(value)


def csv_lines(header: list[str], rows: list[tuple]) -> list[str]:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return lines


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    text = "\n".join(csv_lines(header, rows)) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


@dataclass
class Check:
    """A named pass/fail entry; the tolerance is part of the record."""

    name: str
    value: float
    tolerance: str
    passed: bool

    def render(self) -> str:
        return CHECK_FMT.format(
            name=self.name,
            value=fmt_float(self.value),
            tolerance=self.tolerance,
            verdict="pass" if self.passed else "FAIL",
        )


@dataclass
class ComparisonRow:
    quantity: str
    state: int
    analytic: float
    simulated: float
    stderr: float
    z_score: float
    passed: bool


COMPARISON_HEADER = ["quantity", "state", "analytic", "simulated", "stderr", "z_score", "pass"]


def comparison_rows_to_csv(rows: list[ComparisonRow]) -> list[tuple]:
    return [
        (r.quantity, r.state, r.analytic, r.simulated, r.stderr, r.z_score, r.passed)
        for r in rows
    ]


@dataclass
class RunReport:
    label: str
    model: str
    stability: dict
    solution: dict
    outputs: dict
    checks: list[Check] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    comparison: list[ComparisonRow] | None = None

    @property
    def all_passed(self) -> bool:
        if not all(c.passed for c in self.checks):
            return False
        if self.comparison is not None:
            return all(r.passed for r in self.comparison)
        return True


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (complex, np.complexfloating)):
        value = complex(value)
        if value.imag == 0.0:
            return value.real
        return {"re": value.real, "im": value.imag}
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def render_json(report: RunReport) -> str:
    payload = _jsonable(asdict(report))
    payload["all_passed"] = report.all_passed
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _render_mapping(out: list[str], mapping: dict, indent: str) -> None:
    for key, value in mapping.items():
        if isinstance(value, dict):
            out.append(f"{indent}{key}:")
            _render_mapping(out, value, indent + "  ")
        elif isinstance(value, (list, tuple, np.ndarray)):
            vals = np.asarray(value)
            if vals.ndim == 2:
                out.append(f"{indent}{key}:")
                for i, row in enumerate(vals):
                    cells = ", ".join(_scalar(v) for v in row)
                    out.append(f"{indent}  [{i}] {cells}")
            else:
                cells = ", ".join(_scalar(v) for v in np.atleast_1d(vals))
                out.append(f"{indent}{key}: [{cells}]")
        else:
            out.append(f"{indent}{key}: {_scalar(value)}")


def _scalar(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (complex, np.complexfloating)):
        c = complex(value)
        if c.imag == 0.0:
            return fmt_float(c.real)
        return f"{fmt_float(c.real)}{'+' if c.imag >= 0 else '-'}{fmt_float(abs(c.imag))}j"
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    return str(value)


def render_text(report: RunReport) -> str:
    out: list[str] = []
    title = report.label or report.model
    out.append(f"== {title} ({report.model}) ==")
    out.append("stability:")
    _render_mapping(out, report.stability, "  ")
    out.append("solution:")
    _render_mapping(out, report.solution, "  ")
    out.append("outputs:")
    _render_mapping(out, report.outputs, "  ")
    if report.checks:
        out.append("checks:")
        for check in report.checks:
            out.append("  " + check.render())
    if report.warnings:
        out.append("warnings:")
        for note in report.warnings:
            out.append(f"  - {note}")
    if report.comparison is not None:
        n_pass = sum(r.passed for r in report.comparison)
        out.append(
            f"comparison: {n_pass}/{len(report.comparison)} rows pass (|z_score| <= 3)"
        )
        for line in csv_lines(COMPARISON_HEADER, comparison_rows_to_csv(report.comparison)):
            out.append("  " + line)
    out.append("overall: " + ("pass" if report.all_passed else "FAIL"))
    return "\n".join(out) + "\n"


def write_report(report: RunReport, out_dir, stem: str = "report") -> tuple[str, str]:
    """Write text and JSON renderings side by side; returns the two paths."""
    import os

    text_path = os.path.join(str(out_dir), f"{stem}.txt")
    json_path = os.path.join(str(out_dir), f"{stem}.json")
    with open(text_path, "w", encoding="utf-8") as handle:
        handle.write(render_text(report))
    with open(json_path, "w", encoding="utf-8") as handle:
        handle.write(render_json(report))
    return text_path, json_path
