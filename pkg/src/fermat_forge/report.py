"""
Report models and their two wire formats: structured text (one JSON object
per line) and CSV tables with a fixed column order per report kind.
"""
import csv
import io
import json
from decimal import Decimal
from fractions import Fraction
from itertools import groupby
from typing import Any, ClassVar, Iterable, TextIO

import mpmath
from pydantic import BaseModel, ConfigDict

DEFAULT_TOLERANCE = 0.25
RNG_ALGORITHM = "numpy.PCG64"


def to_decimal(value: Any, digits: int = 50) -> Decimal:
    """High-precision value (mpf, Fraction, float, int) as a Decimal with `digits` significant digits."""
    with mpmath.workdps(digits + 5):
        match value:
            case Fraction(): value = mpmath.mpf(value.numerator) / value.denominator
            case _: value = mpmath.mpf(value)
        return Decimal(mpmath.nstr(value, digits))


def rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


class Report(BaseModel):
    """Base for every report. Subclasses set KIND and CSV_COLUMNS."""
    KIND: ClassVar[str] = "report"
    CSV_COLUMNS: ClassVar[tuple[str, ...]] = ()

    model_config = ConfigDict(frozen=True)

    def payload(self) -> dict[str, Any]:
        return {"kind": self.KIND, **self.model_dump(mode="json")}

    def to_line(self) -> str:
        return json.dumps(self.payload(), separators=(",", ":"), ensure_ascii=False)

    def csv_rows(self) -> list[dict[str, Any]]:
        """One row by default; tabular reports override this."""
        data = self.model_dump(mode="json")
        return [{c: data.get(c) for c in self.CSV_COLUMNS}]


def write_text(reports: Iterable[Report], stream: TextIO) -> None:
    for report in reports: stream.write(report.to_line() + "\n")


def write_csv(reports: Iterable[Report], stream: TextIO) -> None:
    """One table per consecutive run of same-kind reports, separated by a blank line."""
    first = True
    for kind, group in groupby(reports, key=lambda r: r.KIND):
        group = list(group)
        columns = group[0].CSV_COLUMNS
        if not columns: continue
        if not first: stream.write("\n")
        first = False
        writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for report in group:
            for row in report.csv_rows():
                writer.writerow({k: _cell(v) for k, v in row.items()})


def _cell(value: Any) -> Any:
    match value:
        case None: return ""
        case bool(): return "true" if value else "false"
        case list() | dict(): return json.dumps(value, separators=(",", ":"))
        case _: return value


def render(reports: Iterable[Report], fmt: str = "text") -> str:
    buffer = io.StringIO()
    match fmt:
        case "csv": write_csv(reports, buffer)
        case _: write_text(reports, buffer)
    return buffer.getvalue()
