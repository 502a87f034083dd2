"""Subject-level data, CSV ingestion and the design-term grammar.

A :class:`Dataset` stores its records column-wise in read-only numpy arrays.
Causes are coded ``1..k``; a missing or non-applicable cause is stored as
``0`` in :attr:`Dataset.cause` and as ``None`` on a :class:`SubjectRecord`.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, DataError

MISSING_TOKENS = frozenset({"", "NA"})


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's observed tuple ``(X, Delta, R, C, Z, A)``."""

    time: float
    event: int
    cause_observed: int
    cause: int | None
    covariates: tuple[float, ...]
    auxiliaries: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(float(v) for v in self.covariates))
        object.__setattr__(self, "auxiliaries", tuple(float(v) for v in self.auxiliaries))
        _check_record(self.time, self.event, self.cause_observed, self.cause, k=None)


def _check_record(time, event, observed, cause, k, where=""):
    if not math.isfinite(time) or time < 0:
        raise DataError(f"{where}time must be finite and nonnegative, got {time!r}")
    if event not in (0, 1):
        raise DataError(f"{where}event must be 0 or 1, got {event!r}")
    if observed not in (0, 1):
        raise DataError(f"{where}cause_observed must be 0 or 1, got {observed!r}")
    if event == 0:
        if observed != 1:
            raise DataError(f"{where}censored subject must have cause_observed = 1")
        if cause is not None:
            raise DataError(f"{where}censored subject carries a cause value ({cause})")
        return
    if time == 0:
        raise DataError(f"{where}failure at time 0 is not allowed")
    if observed == 1:
        if cause is None:
            raise DataError(f"{where}observed failure has no cause")
        if cause < 1 or (k is not None and cause > k):
            raise DataError(f"{where}cause {cause} outside 1..{k if k else 'k'}")
    elif cause is not None:
        raise DataError(f"{where}failure with unobserved cause carries a cause value")


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


class Dataset:
    """Validated, immutable collection of subject records.

    Parameters
    ----------
    time, event, cause_observed, cause : array_like
        Length-``n`` columns. ``cause`` uses 0 for "absent".
    covariates : array_like, shape (n, p)
    auxiliaries : array_like, shape (n, q), optional
    k : int, optional
        Number of causes; inferred from the largest observed cause if omitted.
    covariate_names, auxiliary_names : sequence of str, optional
    tau : float, optional
        Administrative horizon, defaults to the largest observed time. Records
        beyond ``tau`` are rejected.
    """

    def __init__(self, time, event, cause_observed, cause, covariates,
                 auxiliaries=None, *, k=None, covariate_names=None,
                 auxiliary_names=None, tau=None):
        time = np.asarray(time, dtype=float)
        n = time.size
        if time.ndim != 1 or n == 0:
            raise DataError("dataset is empty")
        event = np.asarray(event)
        observed = np.asarray(cause_observed)
        cause = np.asarray(cause)
        covariates = np.asarray(covariates, dtype=float).reshape(n, -1)
        if auxiliaries is None:
            auxiliaries = np.zeros((n, 0))
        auxiliaries = np.asarray(auxiliaries, dtype=float).reshape(n, -1)
        for name, col in (("event", event), ("cause_observed", observed), ("cause", cause)):
            if col.shape != (n,):
                raise DataError(f"column {name} has shape {col.shape}, expected ({n},)")
        if k is None:
            k = int(cause.max()) if n else 0
        if k < 2:
            raise DataError(f"need at least two causes, got k = {k}")
        p, q = covariates.shape[1], auxiliaries.shape[1]
        covariate_names = list(covariate_names or [f"z{m + 1}" for m in range(p)])
        auxiliary_names = list(auxiliary_names or [f"a{m + 1}" for m in range(q)])
        if len(covariate_names) != p or len(auxiliary_names) != q:
            raise DataError("column names do not match covariate dimensions")
        if len(set(covariate_names) | set(auxiliary_names)) != p + q:
            raise DataError("covariate and auxiliary names must be unique")
        if not np.all(np.isfinite(covariates)) or not np.all(np.isfinite(auxiliaries)):
            raise DataError("covariates must be finite")
        if tau is None:
            tau = float(time.max())
        if not tau > 0:
            raise DataError("tau must be positive")

        self._validate(time, event, observed, cause, k, tau)
        self.time = _readonly(time, float)
        self.event = _readonly(event, np.int64)
        self.cause_observed = _readonly(observed, np.int64)
        self.cause = _readonly(cause, np.int64)
        self.covariates = _readonly(covariates, float)
        self.auxiliaries = _readonly(auxiliaries, float)
        self.k = int(k)
        self.covariate_names = tuple(covariate_names)
        self.auxiliary_names = tuple(auxiliary_names)
        self.tau = float(tau)

    @staticmethod
    def _validate(time, event, observed, cause, k, tau):
        bad = (~np.isfinite(time)) | (time < 0) | ~np.isin(event, (0, 1)) | ~np.isin(observed, (0, 1))
        bad |= (event == 0) & ((observed != 1) | (cause != 0))
        bad |= (event == 1) & (time == 0)
        bad |= (event == 1) & (observed == 1) & ((cause < 1) | (cause > k))
        bad |= (event == 1) & (observed == 0) & (cause != 0)
        bad |= time > tau
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            if time[i] > tau:
                raise DataError(f"record {i + 1}: time {time[i]} exceeds tau = {tau}")
            c = int(cause[i]) or None
            _check_record(float(time[i]), int(event[i]), int(observed[i]), c, k,
                          where=f"record {i + 1}: ")
            raise DataError(f"record {i + 1}: invalid record")

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], k=None, **kwargs):
        if not records:
            raise DataError("dataset is empty")
        p = {len(r.covariates) for r in records}
        q = {len(r.auxiliaries) for r in records}
        if len(p) != 1 or len(q) != 1:
            raise DataError("records do not share covariate dimensions")
        n = len(records)
        return cls(
            [r.time for r in records],
            [r.event for r in records],
            [r.cause_observed for r in records],
            [r.cause or 0 for r in records],
            np.array([r.covariates for r in records], dtype=float).reshape(n, p.pop()),
            np.array([r.auxiliaries for r in records], dtype=float).reshape(n, q.pop()),
            k=k,
            **kwargs,
        )

    @property
    def n(self):
        return self.time.size

    @property
    def p(self):
        return self.covariates.shape[1]

    @property
    def q(self):
        return self.auxiliaries.shape[1]

    def __len__(self):
        return self.n

    @cached_property
    def complete_case(self):
        """Boolean mask of failures with an observed cause."""
        return (self.event == 1) & (self.cause_observed == 1)

    @cached_property
    def records(self) -> tuple[SubjectRecord, ...]:
        return tuple(self.record(i) for i in range(self.n))

    def record(self, i) -> SubjectRecord:
        c = int(self.cause[i])
        return SubjectRecord(
            float(self.time[i]), int(self.event[i]), int(self.cause_observed[i]),
            c if c else None, tuple(self.covariates[i]), tuple(self.auxiliaries[i]),
        )

    def subset(self, index):
        """New dataset made of rows ``index`` (duplicates allowed)."""
        index = np.asarray(index)
        return Dataset(
            self.time[index], self.event[index], self.cause_observed[index],
            self.cause[index], self.covariates[index], self.auxiliaries[index],
            k=self.k, covariate_names=self.covariate_names,
            auxiliary_names=self.auxiliary_names, tau=self.tau,
        )

    def summary(self):
        failures = self.event == 1
        nf = max(int(failures.sum()), 1)
        out = {
            "n": self.n,
            "censored_pct": 100.0 * (1 - failures.mean()),
            "missing_cause_pct": 100.0 * float((failures & (self.cause_observed == 0)).sum()) / nf,
        }
        cc = self.complete_case
        ncc = max(int(cc.sum()), 1)
        for j in range(1, self.k + 1):
            out[f"cause{j}_pct"] = 100.0 * float((cc & (self.cause == j)).sum()) / ncc
        return out

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.k == other.k and self.tau == other.tau
            and self.covariate_names == other.covariate_names
            and self.auxiliary_names == other.auxiliary_names
            and all(np.array_equal(getattr(self, a), getattr(other, a))
                    for a in ("time", "event", "cause_observed", "cause",
                              "covariates", "auxiliaries"))
        )

    def __repr__(self):
        return f"Dataset(n={self.n}, k={self.k}, p={self.p}, q={self.q}, tau={self.tau:g})"


# --------------------------------------------------------------------------
# CSV input/output

@dataclass(frozen=True)
class Schema:
    """Column mapping for CSV files."""

    time: str
    event: str
    cause: str
    covariates: tuple[str, ...] = ()
    auxiliaries: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["time"], d["event"], d["cause"],
                       tuple(d.get("covariates", ())), tuple(d.get("auxiliaries", ())))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"schema needs time, event and cause columns: {exc}") from exc

    def to_dict(self):
        return {"time": self.time, "event": self.event, "cause": self.cause,
                "covariates": list(self.covariates), "auxiliaries": list(self.auxiliaries)}


def _parse_float(s, line, col):
    try:
        v = float(s)
    except ValueError:
        raise DataError(f"line {line}: non-numeric value {s!r} in column {col!r}") from None
    if not math.isfinite(v):
        raise DataError(f"line {line}: non-finite value in column {col!r}")
    return v


def _parse_flag(s, line, col):
    v = _parse_float(s, line, col)
    if v not in (0.0, 1.0):
        raise DataError(f"line {line}: column {col!r} must be 0 or 1, got {s!r}")
    return int(v)


def load_dataset(path, schema, *, k=None, tau=None) -> Dataset:
    """Read a CSV file into a validated :class:`Dataset`.

    ``R`` is derived from the data: 1 for censored rows and rows with a cause,
    0 for failures whose cause field is ``NA`` or empty.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_dict(schema)
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        needed = [schema.time, schema.event, schema.cause, *schema.covariates, *schema.auxiliaries]
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")

    n = len(rows)
    time = np.empty(n)
    event = np.empty(n, dtype=np.int64)
    observed = np.empty(n, dtype=np.int64)
    cause = np.zeros(n, dtype=np.int64)
    Z = np.empty((n, len(schema.covariates)))
    A = np.empty((n, len(schema.auxiliaries)))
    for i, row in enumerate(rows):
        line = i + 2
        time[i] = _parse_float(row[schema.time], line, schema.time)
        event[i] = _parse_flag(row[schema.event], line, schema.event)
        raw = (row[schema.cause] or "").strip()
        if raw in MISSING_TOKENS:
            c = None
        else:
            cv = _parse_float(raw, line, schema.cause)
            if cv != int(cv):
                raise DataError(f"line {line}: cause must be an integer, got {raw!r}")
            c = int(cv)
        observed[i] = 0 if (event[i] == 1 and c is None) else 1
        _check_record(time[i], int(event[i]), int(observed[i]), c, k, where=f"line {line}: ")
        if tau is not None and time[i] > tau:
            raise DataError(f"line {line}: time {time[i]} exceeds tau = {tau}")
        cause[i] = c or 0
        for m, col in enumerate(schema.covariates):
            Z[i, m] = _parse_float(row[col], line, col)
        for m, col in enumerate(schema.auxiliaries):
            A[i, m] = _parse_float(row[col], line, col)
    return Dataset(time, event, observed, cause, Z, A, k=k,
                   covariate_names=schema.covariates or None,
                   auxiliary_names=schema.auxiliaries or None, tau=tau)


def default_schema(dataset: Dataset) -> Schema:
    return Schema("time", "event", "cause", dataset.covariate_names, dataset.auxiliary_names)


def dataset_csv_text(dataset: Dataset, schema: Schema | None = None) -> str:
    """CSV text for ``dataset``; floats use the shortest round-trip repr."""
    schema = schema or default_schema(dataset)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([schema.time, schema.event, schema.cause, *schema.covariates, *schema.auxiliaries])
    for i in range(dataset.n):
        c = int(dataset.cause[i])
        w.writerow([
            repr(float(dataset.time[i])), int(dataset.event[i]), c if c else "NA",
            *(repr(float(v)) for v in dataset.covariates[i]),
            *(repr(float(v)) for v in dataset.auxiliaries[i]),
        ])
    return buf.getvalue()


def write_dataset(dataset: Dataset, path, schema: Schema | None = None):
    """Write ``dataset`` as CSV and return the schema used."""
    schema = schema or default_schema(dataset)
    Path(path).write_text(dataset_csv_text(dataset, schema), encoding="utf-8")
    return schema


# --------------------------------------------------------------------------
# term grammar for the cause-probability model

_PW = re.compile(r"^pw\(\s*t\s*,\s*([^)]+)\)$")
_LOG = re.compile(r"^log\(\s*t\s*\)$")


@dataclass(frozen=True)
class Term:
    kind: str  # intercept | covariate | auxiliary | t | log_t | pw
    name: str | None = None
    index: int | None = None
    knot: float | None = None

    @property
    def time_dependent(self):
        return self.kind in ("t", "log_t", "pw")

    def label(self):
        if self.kind == "intercept":
            return "1"
        if self.kind == "t":
            return "t"
        if self.kind == "log_t":
            return "log(t)"
        if self.kind == "pw":
            return f"pw(t,{self.knot:g})"
        return self.name


@dataclass(frozen=True)
class TermGrammar:
    """Ordered list of regressors for the cause-probability model."""

    terms: tuple[Term, ...]
    labels: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms or terms[0].kind != "intercept":
            raise ConfigError("grammar must start with the intercept term '1'")
        if sum(t.kind == "intercept" for t in terms) != 1:
            raise ConfigError("grammar must contain exactly one intercept")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "labels", tuple(t.label() for t in terms))

    @classmethod
    def parse(cls, specs, covariate_names=(), auxiliary_names=()):
        """Build a grammar from strings such as ``"1", "t", "log(t)", "pw(t,12)", "z1"``."""
        if isinstance(specs, str):
            specs = _split_terms(specs)
        covariate_names = list(covariate_names)
        auxiliary_names = list(auxiliary_names)
        terms = []
        for raw in specs:
            s = str(raw).strip()
            if s == "1":
                terms.append(Term("intercept"))
            elif s == "t":
                terms.append(Term("t"))
            elif _LOG.match(s):
                terms.append(Term("log_t"))
            elif m := _PW.match(s):
                try:
                    knot = float(m.group(1))
                except ValueError:
                    raise ConfigError(f"bad knot in term {s!r}") from None
                if not knot > 0:
                    raise ConfigError(f"knot must be positive in term {s!r}")
                terms.append(Term("pw", knot=knot))
            elif s in covariate_names:
                terms.append(Term("covariate", s, covariate_names.index(s)))
            elif s in auxiliary_names:
                terms.append(Term("auxiliary", s, auxiliary_names.index(s)))
            else:
                raise ConfigError(f"unknown term or covariate name {s!r}")
        return cls(tuple(terms))

    @classmethod
    def for_dataset(cls, specs, dataset: Dataset):
        return cls.parse(specs, dataset.covariate_names, dataset.auxiliary_names)

    @property
    def time_dependent(self):
        return any(t.time_dependent for t in self.terms)

    def __len__(self):
        return len(self.terms)

    def columns(self, time, Z, A):
        """Design matrix for arrays of times and covariate rows."""
        time = np.asarray(time, dtype=float)
        cols = []
        for t in self.terms:
            if t.kind == "intercept":
                cols.append(np.ones_like(time))
            elif t.kind == "t":
                cols.append(time)
            elif t.kind == "log_t":
                if np.any(time <= 0):
                    raise DataError("log(t) term requires positive times")
                cols.append(np.log(time))
            elif t.kind == "pw":
                cols.append(np.maximum(time - t.knot, 0.0))
            elif t.kind == "covariate":
                if t.index >= Z.shape[1]:
                    raise DataError(f"covariate {t.name!r} not present")
                cols.append(Z[:, t.index])
            else:
                if t.index >= A.shape[1]:
                    raise DataError(f"auxiliary {t.name!r} not present")
                cols.append(A[:, t.index])
        return np.column_stack(cols) if cols else np.empty((time.size, 0))


def _split_terms(s):
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    out.append(cur)
    return out


def design_row(grammar: TermGrammar, record: SubjectRecord) -> np.ndarray:
    """Evaluate the grammar at one subject (a failure, if any term uses time)."""
    if grammar.time_dependent and record.event != 1:
        raise DataError("time-dependent terms are only defined for failures")
    Z = np.asarray(record.covariates, dtype=float).reshape(1, -1)
    A = np.asarray(record.auxiliaries, dtype=float).reshape(1, -1)
    return grammar.columns(np.array([record.time]), Z, A)[0]


def design_matrix(grammar: TermGrammar, dataset: Dataset, rows=None) -> np.ndarray:
    """Design rows for ``dataset`` (restricted to ``rows`` if given)."""
    if rows is None:
        rows = slice(None)
    return grammar.columns(dataset.time[rows], dataset.covariates[rows], dataset.auxiliaries[rows])
