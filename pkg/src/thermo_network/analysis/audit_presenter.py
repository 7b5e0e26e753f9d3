import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime
from typing import List, Optional

from thermo_network.analysis.audit import AuditReport, CheckResult

logger = logging.getLogger(__name__)


@dataclass
class TableFormat:
    headers: List[str]
    widths: List[int]
    alignments: List[str]  # '<' for left, '>' for right


class AuditPresenter:
    DEFAULT_FORMAT = TableFormat(
        headers=['Check', 'Max Violation', 'At t', 'Tolerance', 'Verdict', 'Detail'],
        widths=[24, 16, 12, 12, 9, 40],
        alignments=['<', '>', '>', '>', '>', '<']
    )

    def __init__(self, table_format: TableFormat = None):
        self.format = table_format or self.DEFAULT_FORMAT

    def format_report_table(self, report: AuditReport) -> str:
        """Format the audit checks into a readable table."""
        output = []

        if not report.checks:
            return "No audit checks were run."

        output.append("\nAudit Checks")
        output.append("-" * 40)
        output.append(self._format_header())
        output.append(self._format_separator())

        for check in report.checks:
            output.append(self._format_check_row(check))

        output.append(self._format_separator())
        failed = report.failed()
        output.append(f"Overall: {report.verdict.upper()} "
                      f"({len(report.checks) - len(failed)}/{len(report.checks)} checks passed)")
        return "\n".join(output)

    def _format_header(self) -> str:
        """Create the table header."""
        return "".join(
            f"{header:{align}{width}}"
            for header, width, align in zip(
                self.format.headers,
                self.format.widths,
                self.format.alignments
            )
        )

    def _format_separator(self) -> str:
        """Create the separator line."""
        return "-" * sum(self.format.widths)

    def _format_check_row(self, check: CheckResult) -> str:
        t = "-" if check.t is None else f"{check.t:.4g}"
        detail = check.detail if len(check.detail) <= self.format.widths[5] else check.detail[:self.format.widths[5] - 3] + "..."
        return "".join([
            f"{check.check:<{self.format.widths[0]}}",
            f"{check.max_violation:>{self.format.widths[1]}.3e}",
            f"{t:>{self.format.widths[2]}}",
            f"{check.tolerance:>{self.format.widths[3]}.1e}",
            f"{check.verdict.upper():>{self.format.widths[4]}}",
            f"  {detail}",
        ]).rstrip()


def _json_number(value: Optional[float]) -> Optional[float]:
    if value is None or math.isfinite(value):
        return value
    return None


def report_to_json(report: AuditReport) -> str:
    """Structured report; non-finite numbers become null."""
    data = report.to_dict()
    for check in data['checks']:
        for key in ('max_violation', 't', 'tolerance'):
            check[key] = _json_number(check[key])
    return json.dumps(data, indent=2)


def create_audit_report(report: AuditReport, scenario: str, termination: Optional[str] = None,
                        presenter: AuditPresenter = None) -> str:
    """Generate the complete audit report text."""
    try:
        presenter = presenter or AuditPresenter()
        formatted_table = presenter.format_report_table(report)
        termination_info = f"\nTermination: {termination}" if termination else ""

        return f"""
Thermodynamic Audit Report
--------------------------
Scenario: {scenario}{termination_info}
Timestamp: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
{formatted_table}
"""
    except Exception as e:
        logger.error(f"Error generating audit report: {e}")
        raise
