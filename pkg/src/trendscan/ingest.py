"""Dataset loading, cleaning, currency parsing and diagnosis-code crosswalks.

Input files are delimited text with a header row (comma + RFC-4180 quoting
by default). Cleaning is total: rows that fail validation are dropped and
reported, never raised. Currency amounts are kept as exact decimals so
aggregate sums are reproducible across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

from trendscan.errors import ConfigError, DataError

MEASURE_KINDS = ("currency", "decimal", "integer")

# empty string and NA are missing; "Unknown" is a real category in the
# datasets this targets, so it is deliberately not a default sentinel
DEFAULT_MISSING = ("", "NA")

YEAR_MIN, YEAR_MAX = 1900, 2100


@dataclass(frozen=True)
class DatasetSchema:
    """Declares which columns matter and how to parse them."""

    feature_columns: tuple[str, ...]
    year_column: str
    measure_columns: tuple[tuple[str, str], ...] = ()  # (name, kind)
    baseline_year: int = 0
    code_column: str | None = None
    missing_sentinels: tuple[str, ...] = DEFAULT_MISSING

    def __post_init__(self):
        if not self.feature_columns:
            raise ConfigError("schema.feature_columns must be non-empty")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise ConfigError("schema.feature_columns must be distinct")
        if self.year_column in self.feature_columns:
            raise ConfigError(
                f"schema.year_column {self.year_column!r} may not also be a feature column")
        for name, kind in self.measure_columns:
            if kind not in MEASURE_KINDS:
                raise ConfigError(f"schema.measure_columns[{name!r}]: unknown kind {kind!r}")
        if self.code_column is not None and self.code_column not in self.feature_columns:
            raise ConfigError(
                f"schema.code_column {self.code_column!r} is not a feature column")

    @property
    def columns(self) -> tuple[str, ...]:
        return self.feature_columns + (self.year_column,) + tuple(
            name for name, _ in self.measure_columns)


@dataclass(slots=True)
class CleanRecord:
    """One validated row: categorical features, a year, parsed measures."""

    features: dict[str, str]
    year: int
    measures: dict[str, Decimal]
    line: int = 0  # 1-based line number in the source file, for diagnostics


@dataclass(frozen=True)
class CodeCrosswalk:
    """Source-code to target-code mapping (e.g. across coding-system revisions)."""

    entries: dict[str, str]
    unmapped_policy: str = "keep_verbatim"  # or "drop"

    def __post_init__(self):
        if self.unmapped_policy not in ("drop", "keep_verbatim"):
            raise ConfigError(f"crosswalk policy must be drop|keep_verbatim, "
                              f"got {self.unmapped_policy!r}")
        for src, dst in self.entries.items():
            if not src or not dst:
                raise ConfigError("crosswalk entries may not have empty codes")


@dataclass
class CleanResult:
    records: list[CleanRecord]
    drops: list[tuple[int, str]] = field(default_factory=list)  # (line, reason)

    @property
    def drop_count(self) -> int:
        return len(self.drops)


def load_table(path: str | Path, schema: DatasetSchema,
               delimiter: str = ",") -> list[dict[str, str]]:
    """Read a delimited file into row maps of verbatim strings.

    The header must contain every schema column. Rows whose field count
    does not match the header are a structural error (reported with the
    line number), not a drop.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise DataError(f"{path}: header is missing schema column(s): "
                            + ", ".join(missing))
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue  # blank line
            if len(fields) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, "
                                f"got {len(fields)}")
            rows.append(dict(zip(header, fields)))
    return rows


def parse_currency(text: str) -> Decimal:
    """Parse a currency amount like `$22,731.10` into an exact Decimal.

    Strips at most one leading currency symbol and comma thousands
    separators; anything else non-numeric is an error.
    """
    if not text:
        raise ValueError("empty currency value")
    s = text.strip()
    sign = ""
    if s[:1] in "+-":
        sign, s = s[0], s[1:]
    if s[:1] == "$":
        s = s[1:]
    s = s.replace(",", "")
    if not s:
        raise ValueError(f"no digits in currency value {text!r}")
    try:
        return Decimal(sign + s)
    except InvalidOperation:
        raise ValueError(f"cannot parse currency value {text!r}") from None


def format_currency(value: Decimal) -> str:
    """Render a Decimal in the canonical `$1,234,567.89` form."""
    cents = value.quantize(Decimal("0.01"))
    sign = "-" if cents < 0 else ""
    return f"{sign}${abs(cents):,f}"


def _parse_year(text: str) -> int | None:
    t = text.strip()
    if len(t) != 4 or not t.isdigit():
        return None
    year = int(t)
    if not YEAR_MIN <= year <= YEAR_MAX:
        return None
    return year


def _parse_measure(text: str, kind: str) -> Decimal | None:
    try:
        if kind == "currency":
            value = parse_currency(text)
            return value if value >= 0 else None
        if kind == "integer":
            return Decimal(int(text.strip()))
        return Decimal(text.strip())
    except (ValueError, InvalidOperation):
        return None


def clean(rows: list[dict[str, str]], schema: DatasetSchema,
          first_line: int = 2) -> CleanResult:
    """Validate raw rows into CleanRecords, dropping and counting failures.

    A row is dropped when any feature or the year is missing (per the
    schema's sentinel list), the year does not parse as a 4-digit integer
    in [1900, 2100], or a measure fails to parse (currency must be
    non-negative).
    """
    missing = set(schema.missing_sentinels)
    records: list[CleanRecord] = []
    drops: list[tuple[int, str]] = []
    for offset, row in enumerate(rows):
        line = first_line + offset
        reason = None
        features = {}
        for col in schema.feature_columns:
            value = row.get(col, "").strip()
            if value in missing:
                reason = f"missing value in {col!r}"
                break
            features[col] = value
        if reason is None:
            raw_year = row.get(schema.year_column, "").strip()
            if raw_year in missing:
                reason = f"missing value in {schema.year_column!r}"
            else:
                year = _parse_year(raw_year)
                if year is None:
                    reason = f"unparseable year {raw_year!r}"
        if reason is None:
            measures = {}
            for name, kind in schema.measure_columns:
                raw = row.get(name, "").strip()
                if raw in missing:
                    reason = f"missing value in {name!r}"
                    break
                value = _parse_measure(raw, kind)
                if value is None:
                    reason = f"unparseable {kind} in {name!r}: {raw!r}"
                    break
                measures[name] = value
        if reason is None:
            records.append(CleanRecord(features=features, year=year,
                                       measures=measures, line=line))
        else:
            drops.append((line, reason))
    return CleanResult(records=records, drops=drops)


def load_crosswalk(path: str | Path, unmapped_policy: str = "keep_verbatim",
                   delimiter: str = ",") -> CodeCrosswalk:
    """Load a two-column (source, target) crosswalk file with a header row."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"crosswalk file not found: {path}")
    entries: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: crosswalk file is empty") from None
        if len(header) < 2:
            raise DataError(f"{path}: crosswalk needs two columns (source, target)")
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) < 2:
                raise DataError(f"{path}:{lineno}: crosswalk row needs two fields")
            src, dst = fields[0].strip(), fields[1].strip()
            if not src or not dst:
                raise DataError(f"{path}:{lineno}: empty code in crosswalk row")
            if src in entries and entries[src] != dst:
                raise DataError(f"{path}:{lineno}: conflicting mapping for {src!r}")
            entries[src] = dst
    return CodeCrosswalk(entries=entries, unmapped_policy=unmapped_policy)


def normalize_codes(records: list[CleanRecord], crosswalk: CodeCrosswalk,
                    code_column: str) -> list[CleanRecord]:
    """Rewrite the code column through the crosswalk.

    Mapped codes are replaced; unmapped codes are kept verbatim or the
    record dropped, per the crosswalk policy.
    """
    out: list[CleanRecord] = []
    for rec in records:
        code = rec.features[code_column]
        mapped = crosswalk.entries.get(code)
        if mapped is not None:
            features = dict(rec.features)
            features[code_column] = mapped
            out.append(CleanRecord(features=features, year=rec.year,
                                   measures=rec.measures, line=rec.line))
        elif crosswalk.unmapped_policy == "keep_verbatim":
            out.append(rec)
        # policy == drop: record omitted
    return out


def write_drop_log(path: str | Path, drops: list[tuple[int, str]],
                   source: str = "") -> None:
    """One line per dropped row: line number and reason."""
    prefix = f"{source}:" if source else "line "
    with Path(path).open("a", encoding="utf-8") as fh:
        for line, reason in drops:
            fh.write(f"{prefix}{line}: {reason}\n")
