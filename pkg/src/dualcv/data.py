"""Survey records, CSV ingestion, consistency filtering and descriptives.

A dataset holds one :class:`SurveyRecord` per respondent.  Each record has
the two dichotomous-choice bids (cash per year, labor days per month), the
yes/no answers, the open-ended maxima from the follow-up questions, the
seasonal wages and an arbitrary set of numeric covariates.

Columns are mapped to roles by a schema config::

    {
      "columns": {
        "hhid":   {"role": "id"},
        "wtp":    {"role": "y1"},
        "bid":    {"role": "bid_cash"},
        "pcinc":  {"role": "covariate", "name": "per_capita_income",
                   "kind": "continuous", "scale": 0.001},
        "reason": {"role": "passthrough"}
      },
      "bid_design": {"cash_bids": [25, 31], "labor_bids": [1, 2]}
    }
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataParseError, DataValidationError, SchemaError

logger = logging.getLogger(__name__)

__all__ = [
    "SURVEY_CASH_BIDS",
    "SURVEY_LABOR_BIDS",
    "BidDesign",
    "SurveyRecord",
    "VariableMeta",
    "Dataset",
    "ExclusionReport",
    "SummaryRow",
    "load_csv",
    "write_csv",
    "canonical_schema",
    "consistency_filter",
    "write_exclusions",
    "summarize",
    "render_summary",
]

# ETB / year / kada and days / month / kada
SURVEY_CASH_BIDS = (25.0, 31.0, 37.0, 43.0, 49.0, 58.0, 70.0)
SURVEY_LABOR_BIDS = (1.0, 1.5, 2.0, 2.5, 3.0)

CORE_FIELDS = ("y1", "y2", "bid_cash", "bid_labor")
OPTIONAL_FIELDS = ("max_wtp", "max_wtc", "wage_slack", "wage_peak")
ROLES = ("id",) + CORE_FIELDS + OPTIONAL_FIELDS + ("covariate", "passthrough")
KINDS = ("continuous", "dummy")
_MISSING = {"", "na", "nan", ".", "null", "none"}


@dataclass(frozen=True)
class BidDesign:
    cash_bids: tuple[float, ...] = SURVEY_CASH_BIDS
    labor_bids: tuple[float, ...] = SURVEY_LABOR_BIDS

    def __post_init__(self):
        for label in ("cash_bids", "labor_bids"):
            bids = tuple(float(b) for b in getattr(self, label))
            object.__setattr__(self, label, bids)
            if not bids:
                raise SchemaError(f"{label} must be nonempty")
            if any(not math.isfinite(b) or b <= 0 for b in bids):
                raise SchemaError(f"{label} must be strictly positive")
            if any(b2 <= b1 for b1, b2 in zip(bids, bids[1:])):
                raise SchemaError(f"{label} must be strictly increasing")

    def to_dict(self) -> dict:
        return {"cash_bids": list(self.cash_bids), "labor_bids": list(self.labor_bids)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BidDesign":
        return cls(tuple(d["cash_bids"]), tuple(d["labor_bids"]))


@dataclass(frozen=True)
class SurveyRecord:
    id: str
    bid_cash: float
    bid_labor: float
    y1: int
    y2: int
    max_wtp: float | None = None
    max_wtc: float | None = None
    covariates: Mapping[str, float | None] = field(default_factory=dict)
    wage_slack: float | None = None
    wage_peak: float | None = None
    extra: Mapping[str, str] = field(default_factory=dict)

    def value(self, name: str) -> float | None:
        """Look up a named variable (core field or covariate)."""
        if name in CORE_FIELDS or name in OPTIONAL_FIELDS:
            return getattr(self, name)
        if name in self.covariates:
            return self.covariates[name]
        raise KeyError(name)

    @property
    def pattern(self) -> str:
        return f"{'Yes' if self.y1 else 'No'}-{'Yes' if self.y2 else 'No'}"


@dataclass(frozen=True)
class VariableMeta:
    kind: str = "continuous"
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown variable kind {self.kind!r}")


def _builtin_meta() -> dict[str, VariableMeta]:
    return {
        "y1": VariableMeta("dummy", "accepted the cash bid"),
        "y2": VariableMeta("dummy", "accepted the labor bid"),
        "bid_cash": VariableMeta("continuous", "cash bid, ETB/year/kada"),
        "bid_labor": VariableMeta("continuous", "labor bid, days/month/kada"),
        "max_wtp": VariableMeta("continuous", "open-ended maximum WTP, ETB/year"),
        "max_wtc": VariableMeta("continuous", "open-ended maximum WTC, days/month"),
        "wage_slack": VariableMeta("continuous", "slack-season daily wage, ETB"),
        "wage_peak": VariableMeta("continuous", "peak-season daily wage, ETB"),
    }


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of survey records plus variable metadata."""

    records: tuple[SurveyRecord, ...]
    variable_meta: Mapping[str, VariableMeta] = field(default_factory=dict)
    bid_design: BidDesign | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        meta = _builtin_meta()
        meta.update(self.variable_meta)
        names = None
        for rec in self.records:
            keys = frozenset(rec.covariates)
            if names is None:
                names = keys
            elif keys != names:
                raise SchemaError(f"record {rec.id!r} has covariates {sorted(keys)}, expected {sorted(names)}")
        for name in sorted(names or ()):
            meta.setdefault(name, VariableMeta("continuous"))
        object.__setattr__(self, "variable_meta", meta)
        object.__setattr__(self, "_columns", {})
        for name, vm in meta.items():
            if vm.kind != "dummy" or not self.records:
                continue
            if name not in (names or ()) and name not in CORE_FIELDS + OPTIONAL_FIELDS:
                continue
            col = self.column(name)
            bad = np.flatnonzero(~np.isnan(col) & (col != 0.0) & (col != 1.0))
            if bad.size:
                i = int(bad[0])
                raise DataValidationError(
                    f"dummy variable {name!r} must be 0/1, got {col[i]!r}", row=self.records[i].id, column=name
                )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        if not self.records:
            return ()
        return tuple(self.records[0].covariates)

    def has(self, name: str) -> bool:
        return name in CORE_FIELDS or name in OPTIONAL_FIELDS or name in self.covariate_names

    def kind(self, name: str) -> str:
        return self.variable_meta.get(name, VariableMeta()).kind

    def column(self, name: str) -> np.ndarray:
        """Float array of a variable; missing values are NaN. Read-only."""
        cache = self._columns
        if name not in cache:
            if not self.has(name):
                raise KeyError(f"unknown variable {name!r}")
            vals = [r.value(name) for r in self.records]
            arr = np.array([np.nan if v is None else float(v) for v in vals], dtype=float)
            arr.setflags(write=False)
            cache[name] = arr
        return cache[name]

    def select(self, keep: Sequence[bool] | np.ndarray) -> "Dataset":
        keep = np.asarray(keep, dtype=bool)
        recs = tuple(r for r, k in zip(self.records, keep) if k)
        return Dataset(recs, dict(self.variable_meta), self.bid_design)

    def complete_cases(self, names: Iterable[str]) -> "Dataset":
        """Drop records with a missing value in any of ``names``."""
        names = list(dict.fromkeys(names))
        if not names:
            return self
        keep = np.ones(self.n, dtype=bool)
        for name in names:
            keep &= ~np.isnan(self.column(name))
        if keep.all():
            return self
        logger.info("dropping %d record(s) with missing values in %s", int((~keep).sum()), names)
        return self.select(keep)

    def missing_counts(self) -> dict[str, int]:
        names = list(CORE_FIELDS + OPTIONAL_FIELDS) + list(self.covariate_names)
        return {name: int(np.isnan(self.column(name)).sum()) for name in names}


# --------------------------------------------------------------------------
# CSV ingestion


def _parse_number(text: str, row: int, column: str) -> float | None:
    s = text.strip()
    if s.lower() in _MISSING:
        return None
    try:
        val = float(s)
    except ValueError:
        raise DataParseError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not math.isfinite(val):
        raise DataParseError(f"non-finite value {text!r}", row=row, column=column)
    return val


def _read_schema(schema_config) -> dict:
    if isinstance(schema_config, (str, Path)):
        with open(schema_config, encoding="utf-8") as fh:
            schema_config = json.load(fh)
    if not isinstance(schema_config, Mapping) or "columns" not in schema_config:
        raise SchemaError("schema_config must be an object with a 'columns' mapping")
    cols = {}
    for col, entry in schema_config["columns"].items():
        if isinstance(entry, str):
            entry = {"role": entry}
        role = entry.get("role")
        if role not in ROLES:
            raise SchemaError(f"column {col!r}: unknown role {role!r}")
        scale = float(entry.get("scale", 1.0))
        if not math.isfinite(scale) or scale == 0:
            raise SchemaError(f"column {col!r}: scale must be finite and nonzero")
        kind = entry.get("kind")
        if kind is not None and kind not in KINDS:
            raise SchemaError(f"column {col!r}: unknown kind {kind!r}")
        cols[col] = {
            "role": role,
            "name": entry.get("name", col),
            "kind": kind,
            "scale": scale,
            "description": entry.get("description", ""),
        }
    roles = [c["role"] for c in cols.values() if c["role"] not in ("covariate", "passthrough")]
    for role in set(roles):
        if roles.count(role) > 1:
            raise SchemaError(f"role {role!r} is mapped more than once")
    missing = [r for r in CORE_FIELDS if r not in roles]
    if missing:
        raise SchemaError(f"required role(s) unmapped: {', '.join(missing)}")
    design = schema_config.get("bid_design")
    return {"columns": cols, "bid_design": BidDesign.from_dict(design) if design else None}


def load_csv(path, schema_config) -> Dataset:
    """Read and validate a survey CSV according to ``schema_config``.

    ``schema_config`` is a mapping or a path to a JSON file.  Scale factors
    multiply the parsed values.  Bids outside the configured design only
    trigger a warning.
    """
    schema = _read_schema(schema_config)
    cols = schema["columns"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("no data rows") from None
        header = [h.strip() for h in header]
        absent = [c for c in cols if c not in header]
        if absent:
            raise SchemaError(f"schema column(s) not in CSV header: {', '.join(absent)}")
        index = {h: i for i, h in enumerate(header)}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataParseError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            records.append(_build_record(row, index, cols, lineno, len(records) + 1))
    if not records:
        raise SchemaError("no data rows")

    meta = {}
    for c in cols.values():
        if c["role"] == "covariate":
            kind = c["kind"]
            if kind is None:
                vals = {r.covariates[c["name"]] for r in records} - {None}
                kind = "dummy" if vals and vals <= {0.0, 1.0} else "continuous"
            meta[c["name"]] = VariableMeta(kind, c["description"])
    ds = Dataset(tuple(records), meta, schema["bid_design"])
    _warn_off_design(ds)
    logger.info("loaded %d rows from %s; missing counts %s", ds.n, path, ds.missing_counts())
    return ds


def _build_record(row, index, cols, lineno, ordinal) -> SurveyRecord:
    fields: dict = {"covariates": {}, "extra": {}}
    for col, c in cols.items():
        text = row[index[col]]
        role = c["role"]
        if role == "id":
            fields["id"] = text.strip()
            continue
        if role == "passthrough":
            fields["extra"][c["name"]] = text
            continue
        val = _parse_number(text, lineno, col)
        if role in ("y1", "y2"):
            if val is None:
                raise DataValidationError("missing binary response", row=lineno, column=col)
            if val not in (0.0, 1.0):
                raise DataValidationError(f"binary response must be 0 or 1, got {text.strip()!r}", row=lineno, column=col)
            fields[role] = int(val)
            continue
        if val is not None:
            val *= c["scale"]
        if role in ("bid_cash", "bid_labor"):
            if val is None:
                raise DataValidationError("missing bid", row=lineno, column=col)
            if val <= 0:
                raise DataValidationError(f"bid must be positive, got {text.strip()!r}", row=lineno, column=col)
        if role in ("max_wtp", "max_wtc") and val is not None and val < 0:
            raise DataValidationError(f"open-ended maximum must be >= 0, got {text.strip()!r}", row=lineno, column=col)
        if role == "covariate":
            if c["kind"] == "dummy" and val not in (None, 0.0, 1.0):
                raise DataValidationError(f"dummy must be 0 or 1, got {text.strip()!r}", row=lineno, column=col)
            fields["covariates"][c["name"]] = val
        else:
            fields[role] = val
    fields.setdefault("id", str(ordinal))
    return SurveyRecord(**fields)


def _warn_off_design(ds: Dataset) -> None:
    design = ds.bid_design
    if design is None:
        return
    for name, allowed in (("bid_cash", design.cash_bids), ("bid_labor", design.labor_bids)):
        col = ds.column(name)
        off = ~np.isin(col, np.asarray(allowed))
        if off.any():
            warnings.warn(f"{int(off.sum())} record(s) have {name} outside the bid design", UserWarning, stacklevel=3)


def canonical_schema(ds: Dataset) -> dict:
    """Schema describing the CSV layout produced by :func:`write_csv`."""
    cols = {"id": {"role": "id"}}
    for name in CORE_FIELDS + OPTIONAL_FIELDS:
        cols[name] = {"role": name}
    for name in ds.covariate_names:
        vm = ds.variable_meta[name]
        cols[name] = {"role": "covariate", "kind": vm.kind, "description": vm.description}
    extras = ds.records[0].extra if ds.records else {}
    for name in extras:
        cols[name] = {"role": "passthrough"}
    out = {"columns": cols}
    if ds.bid_design is not None:
        out["bid_design"] = ds.bid_design.to_dict()
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the canonical layout; values round-trip exactly."""
    extras = list(ds.records[0].extra) if ds.records else []
    header = ["id", *CORE_FIELDS, *OPTIONAL_FIELDS, *ds.covariate_names, *extras]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in ds.records:
            w.writerow(
                [r.id]
                + [_fmt(getattr(r, f)) for f in CORE_FIELDS + OPTIONAL_FIELDS]
                + [_fmt(r.covariates[c]) for c in ds.covariate_names]
                + [r.extra.get(e, "") for e in extras]
            )


# --------------------------------------------------------------------------
# Response-consistency filter


@dataclass(frozen=True)
class ExclusionReport:
    id: str
    rule: str
    reason: str
    values: Mapping[str, float | int | None]

    def to_dict(self) -> dict:
        return {"id": self.id, "rule": self.rule, "reason": self.reason, "values": dict(self.values)}


_RULES = {
    "wtp_below_cash_bid": "open-ended WTP below accepted cash bid",
    "wtc_below_labor_bid": "open-ended WTC below accepted labor bid",
}


def consistency_filter(ds: Dataset) -> tuple[Dataset, list[ExclusionReport]]:
    """Drop respondents whose open-ended maximum undercuts a bid they accepted.

    Equality counts as consistent, and a missing open-ended answer never
    triggers exclusion.
    """
    keep = []
    reports = []
    for r in ds.records:
        broken = []
        if r.y1 == 1 and r.max_wtp is not None and r.max_wtp < r.bid_cash:
            broken.append("wtp_below_cash_bid")
        if r.y2 == 1 and r.max_wtc is not None and r.max_wtc < r.bid_labor:
            broken.append("wtc_below_labor_bid")
        keep.append(not broken)
        if broken:
            reports.append(
                ExclusionReport(
                    id=r.id,
                    rule="+".join(broken),
                    reason="; ".join(_RULES[b] for b in broken),
                    values={
                        "y1": r.y1,
                        "bid_cash": r.bid_cash,
                        "max_wtp": r.max_wtp,
                        "y2": r.y2,
                        "bid_labor": r.bid_labor,
                        "max_wtc": r.max_wtc,
                    },
                )
            )
    for rep in reports:
        logger.info("excluded %s: %s", rep.id, rep.reason)
    if not reports:
        return ds, reports
    return ds.select(keep), reports


def write_exclusions(reports: Iterable[ExclusionReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_dict()) + "\n")


# --------------------------------------------------------------------------
# Descriptive statistics


@dataclass(frozen=True)
class SummaryRow:
    variable: str
    kind: str
    n: int
    mean: float
    sd: float
    share: float | None

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "kind": self.kind,
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
            "share": self.share,
        }


def summarize(ds: Dataset, variables: Sequence[str] | None = None) -> list[SummaryRow]:
    """Mean and sample standard deviation per variable, plus shares for dummies."""
    if ds.n == 0:
        raise ValueError("cannot summarize an empty dataset")
    if variables is None:
        variables = [v for v in CORE_FIELDS + OPTIONAL_FIELDS + ds.covariate_names]
    rows = []
    for name in variables:
        col = ds.column(name)
        col = col[~np.isnan(col)]
        if col.size == 0:
            continue
        kind = ds.kind(name)
        mean = float(np.mean(col))
        sd = float(np.std(col, ddof=1)) if col.size > 1 else float("nan")
        rows.append(SummaryRow(name, kind, int(col.size), mean, sd, mean if kind == "dummy" else None))
    return rows


def render_summary(rows: Sequence[SummaryRow]) -> str:
    width = max([len("Variable")] + [len(r.variable) for r in rows])
    lines = [f"{'Variable':<{width}}  {'N':>5}  {'Mean':>10}  {'Std. Dev.':>10}"]
    for r in rows:
        if r.kind == "dummy":
            lines.append(f"{r.variable:<{width}}  {r.n:>5}  {100 * r.mean:>9.0f}%  {'':>10}")
        else:
            lines.append(f"{r.variable:<{width}}  {r.n:>5}  {r.mean:>10.2f}  {r.sd:>10.2f}")
    return "\n".join(lines)


def with_covariates(ds: Dataset, **columns: Sequence[float]) -> Dataset:
    """Return a copy of ``ds`` with extra (or replaced) covariate columns."""
    recs = []
    for i, r in enumerate(ds.records):
        cov = dict(r.covariates)
        for name, vals in columns.items():
            cov[name] = float(vals[i])
        recs.append(replace(r, covariates=cov))
    return Dataset(tuple(recs), dict(ds.variable_meta), ds.bid_design)
