"""Plain-text and CSV rendering of analysis and bounds reports."""

from __future__ import annotations

import csv
import io
import math

from .analysis import AnalysisReport, BoundsReport


def fmt_lr(x: float) -> str:
    """One decimal place; ``inf`` literally; tiny positive values keep two significant digits."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    if 0 < abs(x) < 0.05:
        return f"{x:.2g}"
    return f"{x:.1f}"


def fmt_log(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.2f}"


def _csv_num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x) or math.isnan(x):
        return ""
    return f"{x:.10g}"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = []
    for r in [header] + rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return lines


def _notes(notes: list[str]) -> list[str]:
    return ["", "Notes:"] + [f"  {n}" for n in notes] if notes else []


def render_analysis(report: AnalysisReport, fmt: str = "text") -> str:
    if fmt == "csv":
        return analysis_csv(report)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    names = [r.scenario for r in report.results]
    rows = [[m] + [fmt_lr(r.per_marker[i]) for r in report.results] for i, m in enumerate(report.markers)]
    rows.append(["Overall log10 LR"] + [""] * len(names))
    rows.append(["Exact"] + [fmt_log(r.log10_exact) for r in report.results])
    rows.append(["Product rule"] + [fmt_log(r.log10_product) for r in report.results])
    if any(r.posterior is not None for r in report.results):
        rows.append([f"Posterior (prior {report.results[0].prior:g})"]
                    + ["" if r.posterior is None else f"{r.posterior:.3f}" for r in report.results])
    lines = [f"{report.case}: likelihood ratios ({report.topology}, population {report.population})", ""]
    lines += _table(["Marker"] + names, rows)
    lines += _notes(report.warnings)
    return "\n".join(lines) + "\n"


def analysis_csv(report: AnalysisReport) -> str:
    """One row per (marker, scenario); overall values repeat on each row of a scenario."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "population", "scenario", "marker", "lr", "log10_lr",
                "overall_log10_exact", "overall_log10_product", "posterior"])
    for r in report.results:
        for i, m in enumerate(report.markers):
            lr = float(r.per_marker[i])
            log10 = math.log10(lr) if 0 < lr < math.inf else (math.inf if lr > 0 else -math.inf)
            w.writerow([report.case, report.population, r.scenario, m, _csv_num(lr), _csv_num(log10),
                        _csv_num(r.log10_exact), _csv_num(r.log10_product), _csv_num(r.posterior)])
    return buf.getvalue()


def render_bounds(report: BoundsReport, fmt: str = "text") -> str:
    if fmt == "csv":
        return bounds_csv(report)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    header = ["Marker", "Baseline", "Exact"]
    for mode in report.modes:
        header += [f"{mode} lower", f"{mode} upper"]
    rows = []
    for row in report.rows:
        cells = [row.marker, fmt_lr(row.baseline), fmt_lr(row.exact)]
        for mode in report.modes:
            lo, hi = row.intervals[mode]
            cells += [fmt_lr(lo), fmt_lr(hi)]
        rows.append(cells)
    lines = [f"{report.case}: LR bounds for scenario {report.scenario} (population {report.population})", ""]
    lines += _table(header, rows)
    lines += _notes(report.warnings)
    return "\n".join(lines) + "\n"


def bounds_csv(report: BoundsReport) -> str:
    """One row per (marker, mode)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "population", "scenario", "marker", "baseline", "exact", "mode", "epsilon", "lower", "upper"])
    for row in report.rows:
        for mode in report.modes:
            lo, hi = row.intervals[mode]
            w.writerow([report.case, report.population, report.scenario, row.marker, _csv_num(row.baseline),
                        _csv_num(row.exact), mode, _csv_num(row.eps[mode]), _csv_num(lo), _csv_num(hi)])
    return buf.getvalue()
