"""Delivery records, traffic metrics and their text/CSV rendering."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple


class RouteRecord(NamedTuple):
    publisher: str
    topic: str
    subscriber: str
    qos: int
    verdict: str

    def log_line(self) -> str:
        return f"ROUTE {self.publisher} {self.topic} {self.subscriber} {self.verdict}"


@dataclass
class Metrics:
    published: int = 0
    forwarded: int = 0
    suppressed_by_subscriber_fence: int = 0
    suppressed_by_publisher_fence: int = 0
    bytes_on_wire: int = 0
    bytes_forwarded: int = 0
    bytes_saved: int = 0

    @property
    def suppressed(self) -> int:
        return self.suppressed_by_subscriber_fence + self.suppressed_by_publisher_fence

    @property
    def candidates(self) -> int:
        return self.forwarded + self.suppressed

    @property
    def savings_ratio(self) -> float:
        """Share of candidate delivery bytes that suppression kept off the wire."""
        total = self.bytes_forwarded + self.bytes_saved
        return self.bytes_saved / total if total else 0.0

    @property
    def saved_over_wire(self) -> float:
        return self.bytes_saved / self.bytes_on_wire if self.bytes_on_wire else 0.0


CSV_COLUMNS = tuple(f.name for f in fields(Metrics)) + ("savings_ratio", "saved_over_wire")


def metrics_row(m: Metrics) -> dict:
    row = asdict(m)
    row["savings_ratio"] = f"{m.savings_ratio:.6f}"
    row["saved_over_wire"] = f"{m.saved_over_wire:.6f}"
    return row


def report_csv(m: Metrics, header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        writer.writeheader()
    writer.writerow(metrics_row(m))
    return buf.getvalue()


def report_text(m: Metrics) -> str:
    lines = [
        f"published                       {m.published}",
        f"forwarded                       {m.forwarded}",
        f"suppressed_by_subscriber_fence  {m.suppressed_by_subscriber_fence}",
        f"suppressed_by_publisher_fence   {m.suppressed_by_publisher_fence}",
        f"bytes_on_wire                   {m.bytes_on_wire}",
        f"bytes_forwarded                 {m.bytes_forwarded}",
        f"bytes_saved                     {m.bytes_saved}",
        f"savings_ratio                   {m.savings_ratio:.6f}",
        f"saved_over_wire                 {m.saved_over_wire:.6f}",
    ]
    return "\n".join(lines) + "\n"


def report(m: Metrics) -> tuple[str, str]:
    return report_text(m), report_csv(m)
