import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonschema
import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

SCHEMA_PATH = Path(__file__).resolve().parent / "schemas" / "diagnostics.schema.json"
DIAGNOSTICS_FILE = "diagnostics.json"
FLOAT_DIGITS = 17
SUMMARY_COLUMNS = ["run", "kind", "status", "exit_code", "passed"]


def to_serializable(obj: Any) -> Any:
    """
    Convert results to plain JSON types.

    Non-finite floats become None; numpy scalars and arrays, enums, paths,
    tuples and dataclasses are unpacked recursively.
    """
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.ndarray):
        return [to_serializable(x) for x in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        return {str(to_serializable(k)): to_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(x) for x in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_serializable(obj.to_dict())
        return to_serializable(dataclasses.asdict(obj))
    return obj


def load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_payload(payload: Dict[str, Any]):
    """Raise ``jsonschema.ValidationError`` unless ``payload`` matches the diagnostics schema."""
    jsonschema.validate(instance=payload, schema=load_schema())


def dumps_payload(payload: Dict[str, Any]) -> str:
    # repr of a double is its shortest round-trip form, at most 17 significant digits
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _round_floats(obj: Any, digits: int) -> Any:
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {key: _round_floats(value, digits) for key, value in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(value, digits) for value in obj]
    return obj


def write_diagnostics(run_dir: Union[str, Path], payload: Dict[str, Any],
                      float_digits: int = FLOAT_DIGITS) -> Path:
    """
    Validate and write the diagnostics JSON of one run.

    Args:
        run_dir: Run directory (created if missing)
        payload: Diagnostics envelope
        float_digits: Significant digits kept for floats (17 keeps them exact)

    Returns:
        Path of the written file
    """
    payload = to_serializable(payload)
    if float_digits < FLOAT_DIGITS:
        payload = _round_floats(payload, float_digits)
    validate_payload(payload)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / DIAGNOSTICS_FILE
    path.write_text(dumps_payload(payload), encoding="utf-8")
    logging.info(f"Diagnostics written to {path}")
    return path


def write_frame_csv(path: Union[str, Path], frame: pd.DataFrame,
                    float_digits: int = FLOAT_DIGITS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=f"%.{float_digits}g")
    return path


def run_directory_name(name: str, status: str, prefixes: Dict[str, str]) -> str:
    """Prefix a run name by its certificate status (``Failed_solve``)."""
    return f"{prefixes.get(status, '')}{name}"


@dataclass
class ReportSummary:
    """Aggregated rows of a results directory and the artifacts that were skipped."""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    fits: List[Dict[str, Any]] = field(default_factory=list)
    skipped: List[Tuple[str, str]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows)
        if frame.empty:
            return pd.DataFrame(columns=SUMMARY_COLUMNS)
        extra = sorted(c for c in frame.columns if c not in SUMMARY_COLUMNS)
        return frame[SUMMARY_COLUMNS + extra]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "runs": len(self.rows),
            "fits": self.fits,
            "skipped": [{"path": path, "reason": reason} for path, reason in self.skipped],
        }


def summarize_payload(run: str, payload: Dict[str, Any]) -> Dict[str, Any]:
    """One summary row: identification columns plus the run's scalar summary."""
    summary = payload.get("summary", {})
    verdicts = [v for v in summary.values() if isinstance(v, bool)]
    row = {
        "run": run,
        "kind": payload["kind"],
        "status": payload["status"],
        "exit_code": payload["exit_code"],
        "passed": payload["exit_code"] == 0 and payload["status"] != "failed" and all(verdicts),
    }
    row.update(summary)
    return row


def _ladder_fits(run: str, payload: Dict[str, Any]) -> List[Dict[str, Any]]:
    result = payload.get("result", {})
    exponents = result.get("fit_exponents") or {}
    residuals = result.get("fit_residuals") or {}
    return [{"run": run, "kind": payload["kind"], "fit": name, "slope": exponents[name],
             "residual": residuals.get(name)} for name in sorted(exponents)]


def aggregate_report(results_dir: Union[str, Path]) -> ReportSummary:
    """
    Collect every run directory holding a diagnostics file.

    Malformed or schema-invalid artifacts are listed in ``skipped`` with the
    reason; previous report runs are not aggregated.
    """
    results_dir = Path(results_dir)
    report = ReportSummary()
    if not results_dir.is_dir():
        report.skipped.append((str(results_dir), "not a directory"))
        return report
    schema = load_schema()
    for path in sorted(results_dir.rglob(DIAGNOSTICS_FILE)):
        run = str(path.parent.relative_to(results_dir))
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            jsonschema.validate(instance=payload, schema=schema)
        except (OSError, ValueError, jsonschema.ValidationError) as e:
            reason = e.message if isinstance(e, jsonschema.ValidationError) else str(e)
            logging.warning(f"Skipping {path}: {reason}")
            report.skipped.append((run, reason))
            continue
        if payload["kind"] == "report":
            continue
        report.rows.append(summarize_payload(run, payload))
        report.fits.extend(_ladder_fits(run, payload))
    logging.info(f"Aggregated {len(report.rows)} runs from {results_dir} "
                 f"({len(report.skipped)} skipped)")
    return report


def _markdown_cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value).replace("|", "\\|")


def summary_markdown(report: ReportSummary) -> str:
    frame = report.to_frame()
    lines = ["# Run summary", ""]
    passed = int(frame["passed"].sum()) if not frame.empty else 0
    lines.append(f"{len(frame)} runs, {passed} passed, {len(report.skipped)} skipped.")
    lines.append("")
    if not frame.empty:
        columns = list(frame.columns)
        lines.append("| " + " | ".join(columns) + " |")
        lines.append("|" + "---|" * len(columns))
        for record in frame.to_dict(orient="records"):
            lines.append("| " + " | ".join(_markdown_cell(record[c]) for c in columns) + " |")
        lines.append("")
    if report.fits:
        lines += ["## Ladder fits", "", "| run | fit | slope | residual |", "|---|---|---|---|"]
        for fit in report.fits:
            lines.append(f"| {fit['run']} | {fit['fit']} | {_markdown_cell(fit['slope'])} | "
                         f"{_markdown_cell(fit['residual'])} |")
        lines.append("")
    if report.skipped:
        lines += ["## Skipped", ""]
        lines += [f"- {path}: {reason}" for path, reason in report.skipped]
        lines.append("")
    return "\n".join(lines)


class SummaryWorkbookExporter:
    """
    Excel exporter for run summaries
    """

    def __init__(self):
        self.color_scheme = self._setup_colors()
        self.styles = self._setup_styles()

    def _setup_colors(self) -> Dict[str, str]:
        return {
            'text_primary': '2D3748',              # Dark gray for primary text
            'bg_white': 'FFFFFF',
            'bg_subtle': 'E2E8F0',                 # Header background
            'border_light': 'E2E8F0',
            'accent': '2B6CB0',                    # Title background
            'success': 'C6F6D5',                   # Light green
            'warning': 'FEEBC8',                   # Light orange
            'error': 'FED7D7',                     # Light red
        }

    def _setup_styles(self) -> Dict[str, Dict[str, Any]]:
        colors = self.color_scheme
        return {
            'title': {
                'font': Font(name='Segoe UI', size=14, bold=True, color=colors['bg_white']),
                'fill': PatternFill(fill_type='solid', start_color=colors['accent']),
                'alignment': Alignment(horizontal='left', vertical='center'),
            },
            'column_header': {
                'font': Font(name='Segoe UI', size=11, bold=True, color=colors['text_primary']),
                'fill': PatternFill(fill_type='solid', start_color=colors['bg_subtle']),
                'alignment': Alignment(horizontal='center', vertical='center'),
            },
            'cell': {
                'font': Font(name='Segoe UI', size=10, color=colors['text_primary']),
                'border': Border(bottom=Side(style='hair', color=colors['border_light'])),
            },
        }

    def _apply(self, cell, style: str):
        for attribute, value in self.styles[style].items():
            setattr(cell, attribute, value)

    def _status_fill(self, status: str) -> Optional[PatternFill]:
        color = {'success': 'success', 'success_with_tolerance': 'warning',
                 'failed': 'error', 'regime': 'warning', 'error': 'error'}.get(status)
        if color is None:
            return None
        return PatternFill(fill_type='solid', start_color=self.color_scheme[color])

    def _write_table(self, sheet, title: str, frame: pd.DataFrame):
        sheet.cell(row=1, column=1, value=title)
        self._apply(sheet.cell(row=1, column=1), 'title')
        for col, name in enumerate(frame.columns, start=1):
            cell = sheet.cell(row=3, column=col, value=str(name))
            self._apply(cell, 'column_header')
            sheet.column_dimensions[get_column_letter(col)].width = max(14, len(str(name)) + 4)
        status_col = list(frame.columns).index('status') + 1 if 'status' in frame.columns else None
        for row, record in enumerate(frame.itertuples(index=False), start=4):
            for col, value in enumerate(record, start=1):
                value = to_serializable(value)
                cell = sheet.cell(row=row, column=col, value=value)
                self._apply(cell, 'cell')
                if isinstance(value, float):
                    cell.number_format = '0.000000E+00'
            if status_col is not None:
                fill = self._status_fill(record[status_col - 1])
                if fill is not None:
                    sheet.cell(row=row, column=status_col).fill = fill
        sheet.freeze_panes = 'A4'

    def export(self, report: ReportSummary, excel_output_path: Union[str, Path]):
        """
        Export a run summary to a formatted workbook.

        Args:
            report: Aggregated summary
            excel_output_path: Path where the workbook should be saved
        """
        workbook = Workbook()
        sheet = workbook.active
        sheet.title = 'Summary'
        self._write_table(sheet, 'Run summary', report.to_frame())
        if report.fits:
            self._write_table(workbook.create_sheet('Ladder fits'), 'Ladder fits',
                              pd.DataFrame(report.fits))
        if report.skipped:
            self._write_table(workbook.create_sheet('Skipped'), 'Skipped artifacts',
                              pd.DataFrame(report.skipped, columns=['path', 'reason']))
        workbook.save(excel_output_path)
        logging.info(f"Excel summary created: {excel_output_path}")


def write_report(results_dir: Union[str, Path], report: ReportSummary) -> Dict[str, Path]:
    """
    Write ``summary.md``, ``summary.csv``, ``summary.xlsx`` and, for sweeps,
    ``ladder_fits.csv`` into ``results_dir``.
    """
    results_dir = Path(results_dir)
    paths = {
        'markdown': results_dir / 'summary.md',
        'csv': results_dir / 'summary.csv',
        'xlsx': results_dir / 'summary.xlsx',
    }
    paths['markdown'].write_text(summary_markdown(report), encoding='utf-8')
    write_frame_csv(paths['csv'], report.to_frame())
    SummaryWorkbookExporter().export(report, paths['xlsx'])
    if report.fits:
        paths['fits'] = write_frame_csv(results_dir / 'ladder_fits.csv', pd.DataFrame(report.fits))
    return paths
