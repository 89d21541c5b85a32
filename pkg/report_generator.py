import json
import sys
from fractions import Fraction
from typing import Dict, Any, List, Optional, TextIO

import numpy as np
import pandas as pd

# --- JSON normalization ---

def to_jsonable(obj: Any) -> Any:
    """Recursively turns report values into plain JSON types (Fractions become 'p/q' strings)."""
    if hasattr(obj, 'to_dict') and not isinstance(obj, (pd.DataFrame, pd.Series)):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return obj.numerator if obj.denominator == 1 else str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return {'re': obj.real, 'im': obj.imag}
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def dump_json(report: Dict[str, Any]) -> str:
    """Sorted keys and fixed indentation, so equal reports serialize byte-identically."""
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def merge_reports(reports: List[Dict[str, Any]]) -> Dict[str, Any]:
    """One corpus report keyed by fixture name; passes only if every fixture passes."""
    merged = {r['graph']: r for r in sorted(reports, key=lambda r: r['graph'])}
    return {
        'command': 'report',
        'fixtures': merged,
        'passed': all(r.get('passed', False) for r in merged.values()),
    }


# --- Tables ---

def _cell(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        if value == 0.0:
            return "0"
        return f"{value:.3e}" if abs(value) < 1e-3 or abs(value) >= 1e5 else f"{value:.4f}"
    if isinstance(value, (dict, list)):
        return json.dumps(to_jsonable(value), sort_keys=True, ensure_ascii=False)
    return str(to_jsonable(value))


def flatten(data: Dict[str, Any], prefix: str = '') -> List[List[str]]:
    """Nested check dicts as (dotted key, value) rows."""
    rows: List[List[str]] = []
    for key in sorted(data, key=str):
        value = data[key]
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict) and value:
            rows.extend(flatten(value, name))
        else:
            rows.append([name, _cell(value)])
    return rows


def frame(rows: List[Dict[str, Any]], columns: Optional[List[str]] = None) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=columns)
    return df.astype(object).where(df.notna(), None) if not df.empty else df


def format_table(title: str, headers: List[str], data: List[List[Any]]) -> str:
    """A simple ASCII table."""
    lines = [f"\n### {title}"]
    if not data:
        lines.append("--- No data available for this table. ---")
        return "\n".join(lines)

    cells = [[_cell(c) for c in row] for row in data]
    col_widths = [len(h) for h in headers]
    for row in cells:
        for i, cell in enumerate(row):
            col_widths[i] = max(col_widths[i], len(cell))
    col_widths = [w + 2 for w in col_widths]

    separator = "+" + "+".join(["-" * w for w in col_widths]) + "+"
    lines.append(separator)
    lines.append("|" + "".join([str(h).ljust(col_widths[i]) for i, h in enumerate(headers)]) + "|")
    lines.append(separator)
    for row in cells:
        lines.append("|" + "".join(cell.ljust(col_widths[i]) for i, cell in enumerate(row)) + "|")
    lines.append(separator)
    return "\n".join(lines)


def format_markdown_table(title: str, headers: List[str], data: List[List[Any]]) -> str:
    lines = [f"\n### {title}", ""]
    if not data:
        lines.append("_No data available for this table._")
        return "\n".join(lines)
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("|" + "|".join(["---"] * len(headers)) + "|")
    for row in data:
        lines.append("| " + " | ".join(_cell(c).replace('|', '\\|') for c in row) + " |")
    return "\n".join(lines)


def print_table(title: str, headers: List[str], data: List[List[Any]], stream: Optional[TextIO] = None):
    print(format_table(title, headers, data), file=stream or sys.stdout)


def dataframe_table(title: str, df: pd.DataFrame, markdown: bool = True) -> str:
    headers = [str(c) for c in df.columns]
    data = df.values.tolist()
    return format_markdown_table(title, headers, data) if markdown else format_table(title, headers, data)


# --- Markdown report ---

def report_to_markdown(report: Dict[str, Any]) -> str:
    """Header, one table per entry of report['tables'], then every check as a key/value row."""
    if report.get('command') == 'report' and 'fixtures' in report:
        parts = [f"# Corpus report\n\nOverall: {'PASS' if report['passed'] else 'FAIL'}"]
        for name, sub in report['fixtures'].items():
            parts.append(report_to_markdown(sub).replace('\n# ', '\n## ', 1))
        if 'index' in report:
            parts.append(report_to_markdown(report['index']))
        return "\n".join(parts) + "\n"

    out = [f"# {report.get('command', 'report')}: {report.get('graph', '')}".rstrip(': '), ""]
    if 'fixture_sha256' in report:
        out.append(f"- fixture sha256: `{report['fixture_sha256']}`")
    if 'passed' in report:
        out.append(f"- verdict: **{'PASS' if report['passed'] else 'FAIL'}**")

    for title, rows in (report.get('tables') or {}).items():
        df = frame(rows)
        out.append(f"\n> Description: {title}.")
        out.append(dataframe_table(title, df))

    checks = report.get('checks') or {}
    if checks:
        out.append(format_markdown_table("Checks", ["Check", "Value"], flatten(to_jsonable(checks))))
    if report.get('config'):
        out.append(format_markdown_table("Configuration", ["Key", "Value"], flatten(report['config'])))
    return "\n".join(out) + "\n"


def emit(report: Dict[str, Any], fmt: str = 'json', stream: Optional[TextIO] = None):
    stream = stream or sys.stdout
    stream.write(dump_json(report) if fmt == 'json' else report_to_markdown(report))
