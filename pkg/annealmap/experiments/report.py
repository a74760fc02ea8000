from __future__ import annotations

from pathlib import Path
from typing import Sequence

from openpyxl import Workbook
from openpyxl.styles import Font
from openpyxl.worksheet.worksheet import Worksheet

from quadrature import QuadratureRule

DIAGNOSTICS_SHEET = "diagnostics"
QUADRATURE_SHEET = "final quadrature"


def _numeric(value: str):
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        return float(value)


def _write_table(ws: Worksheet, header: Sequence[str], rows) -> None:
    ws.append(list(header))
    for cell in ws[1]:
        cell.font = Font(bold=True)
    for row in rows:
        ws.append(list(row))
    ws.freeze_panes = "A2"


def write_report(diagnostics: Sequence[dict[str, str]], rule: QuadratureRule, path: Path) -> None:
    """
    Workbook with one sheet of diagnostics rows and one of the final rule.

    `diagnostics` are rows as read back from diagnostics.csv; empty cells
    (metrics switched off) stay empty.
    """
    wb = Workbook()
    wb.remove(wb.active)

    header = list(diagnostics[0].keys()) if diagnostics else []
    _write_table(
        wb.create_sheet(title=DIAGNOSTICS_SHEET),
        header,
        ([_numeric(row[name]) for name in header] for row in diagnostics),
    )
    _write_table(
        wb.create_sheet(title=QUADRATURE_SHEET),
        [*(f"theta_{i + 1}" for i in range(rule.dimension)), "weight"],
        ([*(float(x) for x in point), float(weight)] for point, weight in zip(rule.points, rule.weights)),
    )
    wb.save(path)
