"""Tolerant parsing of raw trace feeds and label files.

Every input record is either accepted or accounted for in the IngestReport;
nothing is silently dropped and no malformed line aborts the parse unless the
caller asks for strict mode.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import Dataset, Trace
from .errors import InvalidInput

_MD5_RE = re.compile(r"^[0-9a-f]{32}$")


@dataclass
class IngestReport:
    n_parsed: int = 0
    n_rejected: int = 0
    reasons: Counter = field(default_factory=Counter)
    per_family: Counter = field(default_factory=Counter)

    def reject(self, reason: str) -> None:
        self.n_rejected += 1
        self.reasons[reason] += 1

    def accept(self, family: int) -> None:
        self.n_parsed += 1
        self.per_family[family] += 1

    def summary(self) -> str:
        parts = [f"parsed={self.n_parsed}", f"rejected={self.n_rejected}"]
        for reason, n in sorted(self.reasons.items()):
            parts.append(f"{reason}={n}")
        return " ".join(parts)


def _validate_record(obj: object) -> Trace:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    md5 = obj.get("filemd5")
    if not isinstance(md5, str) or not _MD5_RE.match(md5):
        raise ValueError("bad filemd5")
    calls = obj.get("calls")
    if not isinstance(calls, list) or not calls:
        raise ValueError("empty trace")
    cleaned = []
    for tok in calls:
        if not isinstance(tok, str):
            raise ValueError("non-string token")
        tok = tok.strip()
        if not tok or any(ch.isspace() for ch in tok):
            raise ValueError("bad token")
        cleaned.append(tok)
    family = obj.get("family", -1)
    if not isinstance(family, int) or isinstance(family, bool):
        raise ValueError("bad family")
    provenance = obj.get("provenance", "real")
    return Trace(filemd5=md5, calls=tuple(cleaned), family=family, provenance=provenance)


def parse_trace_file(
    path: str | Path, strict: bool = False
) -> tuple[list[Trace], IngestReport]:
    """Parse a JSON Lines trace file; one Trace or one rejection per line.

    Raises FileNotFoundError for a missing file. With ``strict`` any rejection
    becomes a hard InvalidInput error.
    """
    path = Path(path)
    report = IngestReport()
    traces: list[Trace] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                trace = _validate_record(obj)
            except (ValueError, InvalidInput) as exc:
                reason = str(exc) if str(exc) else "malformed json"
                if isinstance(exc, json.JSONDecodeError):
                    reason = "malformed json"
                if strict:
                    raise InvalidInput(f"{path}:{lineno}: {reason}") from exc
                report.reject(reason)
                continue
            traces.append(trace)
            report.accept(trace.family)
    return traces, report


def read_label_csv(path: str | Path) -> dict[str, int]:
    """Read `filemd5,family_id` pairs; header optional; duplicates are fatal."""
    path = Path(path)
    labels: dict[str, int] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for rowno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise InvalidInput(f"{path}:{rowno}: expected two columns")
            md5, fam = row[0].strip(), row[1].strip()
            if rowno == 1 and not _MD5_RE.match(md5):
                continue  # header row
            if not _MD5_RE.match(md5):
                raise InvalidInput(f"{path}:{rowno}: bad filemd5 {md5!r}")
            if md5 in labels:
                raise InvalidInput(f"{path}:{rowno}: duplicate filemd5 {md5}")
            try:
                labels[md5] = int(fam)
            except ValueError as exc:
                raise InvalidInput(f"{path}:{rowno}: bad family id {fam!r}") from exc
    return labels


def join_labels(
    traces: Sequence[Trace],
    labels: dict[str, int] | str | Path,
    name: str = "dataset",
    strict: bool = False,
) -> tuple[Dataset, IngestReport]:
    """Attach family labels to traces by filemd5.

    Traces without a label are rejected with reason "unlabeled"; label rows
    without a matching trace are counted as "label without trace". Idempotent
    and independent of label row order.
    """
    if not isinstance(labels, dict):
        labels = read_label_csv(labels)
    report = IngestReport()
    joined: list[Trace] = []
    matched: set[str] = set()
    for tr in traces:
        if tr.filemd5 not in labels:
            if strict:
                raise InvalidInput(f"trace {tr.filemd5} has no label")
            report.reject("unlabeled")
            continue
        family = labels[tr.filemd5]
        matched.add(tr.filemd5)
        try:
            labeled = Trace(
                filemd5=tr.filemd5,
                calls=tr.calls,
                family=family,
                provenance=tr.provenance,
            )
        except InvalidInput:
            report.reject("bad family")
            continue
        joined.append(labeled)
        report.accept(family)
    for md5 in labels:
        if md5 not in matched:
            report.reasons["label without trace"] += 1
    return Dataset(name=name, traces=tuple(joined)), report


def load_dataset(
    trace_path: str | Path,
    label_path: str | Path | None = None,
    name: str | None = None,
    strict: bool = False,
) -> tuple[Dataset, IngestReport]:
    """Parse a trace file and, when a label CSV is given, join it."""
    traces, report = parse_trace_file(trace_path, strict=strict)
    if label_path is None:
        ds = Dataset(name=name or Path(trace_path).stem, traces=tuple(traces))
        return ds, report
    ds, join_report = join_labels(
        traces, label_path, name=name or Path(trace_path).stem, strict=strict
    )
    join_report.reasons.update(report.reasons)
    join_report.n_rejected += report.n_rejected
    return ds, join_report
