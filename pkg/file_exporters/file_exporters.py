"""File export utilities for metrics, reports, cross-play tables and traces."""

import csv
import io
import json
import logging
import math
from typing import Dict, Iterable, List, Sequence

from openpyxl import Workbook
from openpyxl.styles import Font

from config import METRICS_COLUMNS
from .checkpoint_format import atomic_write

logger = logging.getLogger(__name__)

TRACE_PREFIX = ['episode', 'step', 'agent']
TRACE_SUFFIX = ['action', 'reward']

__all__ = ['FileExporter', 'TRACE_PREFIX', 'TRACE_SUFFIX', 'format_cell']


def format_cell(value) -> str:
    """Stable text for CSV cells: floats keep 10 significant digits."""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return f"{value:.10g}"
    return str(value)


class FileExporter:
    """Handles exporting run artifacts to CSV, JSON and Excel files."""

    def write_csv(self, columns: Sequence[str], rows: Iterable[Dict[str, object]], filename: str):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(c)) for c in columns])
        atomic_write(filename, buffer.getvalue().encode('utf-8'))
        logger.info("CSV saved: %s", filename)

    def write_metrics(self, rows: List[Dict[str, object]], filename: str):
        self.write_csv(METRICS_COLUMNS, rows, filename)

    def write_json(self, data, filename: str):
        text = json.dumps(data, indent=2, ensure_ascii=False, default=_json_default)
        atomic_write(filename, (text + '\n').encode('utf-8'))
        logger.info("JSON saved: %s", filename)

    def write_text(self, text: str, filename: str):
        atomic_write(filename, text.encode('utf-8'))

    def write_trace(self, rows: List[Dict[str, object]], state_fields: Sequence[str], filename: str):
        """Per-step, per-agent rows: episode, step, agent, the game's state fields, action, reward."""
        self.write_csv(TRACE_PREFIX + list(state_fields) + TRACE_SUFFIX, rows, filename)

    def crossplay_rows(self, table) -> List[List[str]]:
        """Header plus one row per ego policy; each cell reads 'W/D/L mean'."""
        rows = [['ego \\ opp'] + list(table.col_names)]
        for i, row_name in enumerate(table.row_names):
            cells = [row_name]
            for j in range(len(table.col_names)):
                if not table.played[i, j]:
                    cells.append('')
                    continue
                cells.append(f"{table.wins[i, j]}/{table.draws[i, j]}/{table.losses[i, j]} "
                             f"{format_cell(float(table.mean_payoff[i, j]))}")
            rows.append(cells)
        return rows

    def write_crossplay_csv(self, table, filename: str):
        buffer = io.StringIO()
        csv.writer(buffer, lineterminator='\n').writerows(self.crossplay_rows(table))
        atomic_write(filename, buffer.getvalue().encode('utf-8'))
        logger.info("CSV saved: %s", filename)

    def write_crossplay_excel(self, table, filename: str):
        """Cross-play table as a worksheet plus a per-policy summary sheet."""
        wb = Workbook()
        ws = wb.active
        ws.title = 'Cross-play'
        for r, cells in enumerate(self.crossplay_rows(table), 1):
            for c, value in enumerate(cells, 1):
                cell = ws.cell(row=r, column=c, value=value)
                if r == 1 or c == 1:
                    cell.font = Font(bold=True)
        self._adjust_excel_columns(ws)

        summary = wb.create_sheet('Summary')
        headers = ['Policy', 'Wins', 'Draws', 'Losses', 'Pairs']
        for col, header in enumerate(headers, 1):
            summary.cell(row=1, column=col, value=header).font = Font(bold=True)
        for row, (name, totals) in enumerate(sorted(table.summary().items()), 2):
            summary.cell(row=row, column=1, value=name)
            summary.cell(row=row, column=2, value=totals['wins'])
            summary.cell(row=row, column=3, value=totals['draws'])
            summary.cell(row=row, column=4, value=totals['losses'])
            summary.cell(row=row, column=5, value=totals['pairs'])
        self._adjust_excel_columns(summary)

        buffer = io.BytesIO()
        wb.save(buffer)
        atomic_write(filename, buffer.getvalue())
        logger.info("Excel saved: %s", filename)

    def _adjust_excel_columns(self, ws):
        """Adjust column widths in Excel worksheet."""
        for column in ws.columns:
            max_length = max(len(str(cell.value)) if cell.value is not None else 0 for cell in column)
            ws.column_dimensions[column[0].column_letter].width = min(max_length + 2, 80)


def _json_default(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    if hasattr(value, 'value'):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
