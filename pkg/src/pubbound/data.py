"""Study-level data: CSV ingestion, continuity correction, logit transforms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

DTA_COLUMNS = ("study_id", "tp", "fp", "fn", "tn")
UNIVARIATE_COLUMNS = ("study_id", "y", "se")


class SchemaError(ValueError):
    """Malformed input table. ``row`` is the 1-based data row (0 for the header)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class DiagnosticStudy:
    """One 2x2 table. n11=TP, n10=FP, n01=FN, n00=TN."""

    study_id: str
    n11: float
    n10: float
    n01: float
    n00: float

    @property
    def cells(self) -> tuple[float, float, float, float]:
        return (self.n11, self.n10, self.n01, self.n00)

    @property
    def has_zero(self) -> bool:
        return any(c == 0 for c in self.cells)


@dataclass(frozen=True)
class UnivariateObservation:
    study_id: str
    y: float
    s: float


@dataclass(frozen=True)
class BivariateObservation:
    """Logit sensitivity/specificity with their within-study variances."""

    study_id: str
    y1: float
    y2: float
    s1_sq: float
    s2_sq: float


def _read_rows(path, expected):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, expected header " + ",".join(expected), row=0)
        header = [h.strip() for h in header]
        if tuple(header) != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            col = (missing or extra or [None])[0]
            raise SchemaError(
                f"header {','.join(header)!r} does not match {','.join(expected)!r}",
                row=0,
                column=col,
            )
        for index, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(expected):
                column = expected[len(record)] if len(record) < len(expected) else None
                raise SchemaError(
                    f"expected {len(expected)} fields, found {len(record)}",
                    row=index,
                    column=column,
                )
            yield index, [cell.strip() for cell in record]


def _number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise SchemaError(f"non-finite value {text!r}", row=row, column=column)
    return value


def ingest_dta_csv(path) -> list[DiagnosticStudy]:
    """Read a ``study_id,tp,fp,fn,tn`` table in file order."""
    studies = []
    for row, (sid, *counts) in _read_rows(path, DTA_COLUMNS):
        values = []
        for column, text in zip(DTA_COLUMNS[1:], counts):
            value = _number(text, row, column)
            if value < 0:
                raise SchemaError(f"negative count {text!r}", row=row, column=column)
            values.append(value)
        tp, fp, fn, tn = values
        studies.append(DiagnosticStudy(sid, n11=tp, n10=fp, n01=fn, n00=tn))
    return studies


def ingest_univariate_csv(path) -> list[UnivariateObservation]:
    """Read a ``study_id,y,se`` table; standard errors must be positive."""
    out = []
    for row, (sid, y_text, se_text) in _read_rows(path, UNIVARIATE_COLUMNS):
        y = _number(y_text, row, "y")
        se = _number(se_text, row, "se")
        if se <= 0:
            raise SchemaError(f"non-positive standard error {se_text!r}", row=row, column="se")
        out.append(UnivariateObservation(sid, y=y, s=se))
    return out


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_dta_csv(studies, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DTA_COLUMNS)
        for st in studies:
            writer.writerow(
                [st.study_id] + [_format_number(v) for v in (st.n11, st.n10, st.n01, st.n00)]
            )


def write_univariate_csv(observations, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UNIVARIATE_COLUMNS)
        for ob in observations:
            writer.writerow([ob.study_id, _format_number(ob.y), _format_number(ob.s)])


def apply_continuity_correction(studies, increment: float = 0.5) -> list[DiagnosticStudy]:
    """Add ``increment`` to every cell of each study that has a zero cell.

    Studies without zeros pass through untouched, so the operation is
    idempotent.
    """
    out = []
    for st in studies:
        if st.has_zero:
            st = replace(
                st,
                n11=st.n11 + increment,
                n10=st.n10 + increment,
                n01=st.n01 + increment,
                n00=st.n00 + increment,
            )
        out.append(st)
    return out


def to_bivariate(study: DiagnosticStudy) -> BivariateObservation:
    """Logit sensitivity and specificity with delta-method variances.

    The specificity variance uses the cells of its own proportion,
    ``1/n10 + 1/n00``.
    """
    if study.has_zero:
        raise ValueError(
            f"study {study.study_id!r} has a zero cell; apply_continuity_correction first"
        )
    n11, n10, n01, n00 = study.cells
    return BivariateObservation(
        study.study_id,
        y1=math.log(n11 / n01),
        y2=math.log(n00 / n10),
        s1_sq=1.0 / n11 + 1.0 / n01,
        s2_sq=1.0 / n10 + 1.0 / n00,
    )


def prepare_dta(studies) -> list[BivariateObservation]:
    """Correction followed by the logit transform, the usual pipeline."""
    return [to_bivariate(st) for st in apply_continuity_correction(studies)]


def bivariate_arrays(obs) -> tuple[np.ndarray, np.ndarray]:
    """Stack observations into ``y`` (N, 2) and within-study variances (N, 2)."""
    y = np.array([[o.y1, o.y2] for o in obs], dtype=float).reshape(-1, 2)
    s2 = np.array([[o.s1_sq, o.s2_sq] for o in obs], dtype=float).reshape(-1, 2)
    return y, s2


def troponin_path() -> Path:
    """Location of the shipped troponin dataset (20 prognostic studies)."""
    return Path(str(resources.files("pubbound") / "data" / "troponin.csv"))


def load_troponin() -> list[DiagnosticStudy]:
    return ingest_dta_csv(troponin_path())
