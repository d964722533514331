#!/usr/bin/env python3
"""
Output Generator for Experiments
Writes trace, verification and sweep CSV files, each headed by a comment block
echoing every effective parameter
"""

import csv
import io
import os
import tempfile
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from jinja2 import Template

from composition.problem import CONSTANT_NAMES, CompositionProblem
from composition.schedule import DEFAULTED, Schedule
from composition.solver import TRACE_COLUMNS, RunTrace

HEADER_TEMPLATE = Template(
    "# {{ title }}\n"
    "{% for key, value, source in entries %}"
    "# {{ key }}={{ value }}{% if source %} [{{ source }}]{% endif %}\n"
    "{% endfor %}"
    "{% for warning in warnings %}# warning: {{ warning }}\n{% endfor %}",
    keep_trailing_newline=True,
)

Entry = Tuple[str, Any, str]


def format_value(value: Any) -> str:
    """Shortest round-trip text for CSV cells and header values"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def rep_path(path: str, rep: int, repetitions: int) -> str:
    """`trace.csv` for a single repetition, `trace_rep<r>.csv` otherwise"""
    if repetitions == 1:
        return path
    stem, suffix = os.path.splitext(path)
    return f"{stem}_rep{rep}{suffix or '.csv'}"


class Configurator:
    """Renders headers and writes output files atomically"""

    def __init__(self, config_entries: Iterable[Entry] = ()):
        self.config_entries = [(key, format_value(value), source)
                               for key, value, source in config_entries]
        self.generated_files: List[str] = []

    def render_header(self, title: str, entries: Sequence[Entry],
                      warnings: Sequence[str] = ()) -> str:
        formatted = [(key, format_value(value), source) for key, value, source in entries]
        return HEADER_TEMPLATE.render(title=title, entries=self.config_entries + formatted,
                                      warnings=list(warnings))

    def problem_entries(self, problem: CompositionProblem) -> List[Entry]:
        entries = [("problem", problem.describe(), "")]
        c = problem.constants
        for name in CONSTANT_NAMES:
            entries.append((f"constant.{name}", float(getattr(c, name)), c.flags[name]))
        return entries

    def schedule_entries(self, schedule: Schedule) -> List[Entry]:
        return [(f"effective.{name}", value, schedule.provenance.get(name, DEFAULTED))
                for name, value in schedule.effective().items()]

    def write_csv(self, path: str, header: str, columns: Sequence[str],
                  rows: Iterable[Dict[str, Any]]) -> str:
        """Write header + rows to a temporary file, then move it into place"""
        buffer = io.StringIO()
        buffer.write(header)
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])

        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        handle, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
                f.write(buffer.getvalue())
            os.replace(temp_path, path)
        except BaseException:
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise
        self.generated_files.append(path)
        return path

    def write_trace(self, path: str, trace: RunTrace, problem: CompositionProblem,
                    seed: int, include_iterations: bool = False) -> str:
        entries = [("algorithm", trace.algorithm, ""), ("seed", seed, ""),
                   ("output_index", list(trace.output_index or ()), "")]
        entries += self.problem_entries(problem) + self.schedule_entries(trace.schedule)
        header = self.render_header("trace", entries, trace.schedule.warnings)
        if not include_iterations:
            return self.write_csv(path, header, TRACE_COLUMNS, trace.rows())
        records = sorted(trace.epochs + trace.iterations,
                         key=lambda r: (r.s, -1 if r.k is None else r.k))
        rows = [dict(r.as_row(), k=r.k) for r in records]
        return self.write_csv(path, header, TRACE_COLUMNS + ("k",), rows)

    def write_verification(self, path: str, rows: List[Dict[str, Any]],
                           problem: CompositionProblem, columns: Sequence[str],
                           warnings: Sequence[str] = ()) -> str:
        header = self.render_header("verification", self.problem_entries(problem), warnings)
        return self.write_csv(path, header, columns, rows)

    def write_sweep(self, path: str, cells: List[Dict[str, Any]], columns: Sequence[str],
                    problem_text: Optional[str] = None) -> str:
        entries = [("problem", problem_text, "")] if problem_text else []
        header = self.render_header("sweep", entries)
        return self.write_csv(path, header, columns, cells)
