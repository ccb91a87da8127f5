from typing import Dict, List

import numpy as np

from exact.checks import CheckReport
from utils.config import RunConfig

MAX_TABLE_ROWS = 20


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "✅" if value else "❌"
    if isinstance(value, (float, np.floating)):
        return f"{value:.6g}"
    if isinstance(value, (dict, list, tuple)):
        return "…"
    return str(value)


def _table(rows: List[Dict]) -> str:
    if not rows:
        return "_no rows_\n"
    columns = list(rows[0].keys())
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for row in rows[:MAX_TABLE_ROWS]:
        lines.append("| " + " | ".join(_cell(row.get(c)) for c in columns) + " |")
    if len(rows) > MAX_TABLE_ROWS:
        lines.append(f"\n_{len(rows) - MAX_TABLE_ROWS} more rows in the CSV artifact_")
    return "\n".join(lines) + "\n"


def render_report(subcommand: str, config: RunConfig, checks: List[CheckReport], summary: Dict) -> str:
    """Markdown summary of one run."""
    passed = all(c.passed for c in checks)
    report = f"""## 🎯 {subcommand} ({config.experiment})

### 📋 Model
**Kind:** {config.model} | **d:** {config.d} | **n:** {config.n} | **ρ:** {config.rho} | **pattern:** {config.pattern} | **β:** {config.beta} | **seed:** {config.seed}

### 📊 Summary

| Quantity | Value |
|----------|-------|
"""
    for key, value in summary.items():
        report += f"| {key} | {_cell(value)} |\n"

    if checks:
        report += "\n### 🔍 Checks\n"
        for check in checks:
            tol = "" if check.tolerance is None else f" (tolerance {check.tolerance:g})"
            report += f"\n#### {'✅' if check.passed else '❌'} {check.label}{tol}\n\n"
            report += _table(check.rows)
            for note in check.notes:
                report += f"\n- {note}"
    report += f"\n---\n*Overall: {'PASS' if passed else 'FAIL'}*\n"
    return report
