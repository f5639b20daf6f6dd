"""Loan panel representation, CSV ingestion and clustered subsampling.

A :class:`Portfolio` stores every monthly record in flat, read-only numpy
columns sorted by ``(loan_id, month)``; ``offsets`` delimits each loan's
contiguous block (CSR layout). :class:`LoanHistory` is a per-loan view over
those columns.

Periods are the account's age in months. Most extracts start every loan at
period 1, but a left-truncated extract (loan originated before the sampling
window opened) may carry an optional ``Period`` column giving the age of each
record; the observed lifetime ``T`` is then the last period index rather than
the record count.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DuplicateRecord,
    EmptyInput,
    MissingColumn,
    NegativeBalance,
    NonContiguousHistory,
    SampleTooLarge,
    UnparseableRow,
)

__all__ = [
    "TerminalStatus",
    "LoanRecord",
    "LoanHistory",
    "Portfolio",
    "IngestReport",
    "ingest_csv",
    "write_csv",
    "subsample_clustered",
    "month_ordinal",
    "format_month",
]


class TerminalStatus(enum.IntEnum):
    """Record/loan status. The ordering encodes precedence: write-off wins."""

    ACTIVE = 0
    SETTLEMENT = 1
    WRITE_OFF = 2

    @property
    def code(self) -> str:
        return _STATUS_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "TerminalStatus":
        return _CODE_STATUS[code.strip().upper()]

    @property
    def terminated(self) -> bool:
        return self is not TerminalStatus.ACTIVE


_STATUS_CODES = {
    TerminalStatus.ACTIVE: "ACTIVE",
    TerminalStatus.SETTLEMENT: "SETTLE",
    TerminalStatus.WRITE_OFF: "WOFF",
}
_CODE_STATUS = {v: k for k, v in _STATUS_CODES.items()}

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})(?:-\d{2})?$")


def month_ordinal(text: str) -> int:
    """'YYYY-MM' (or 'YYYY-MM-DD') -> months since year 0."""
    m = _MONTH_RE.match(text.strip())
    if m is None or not 1 <= int(m.group(2)) <= 12:
        raise ValueError(f"not a YYYY-MM date: {text!r}")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def format_month(ordinal: int) -> str:
    y, m = divmod(int(ordinal), 12)
    return f"{y:04d}-{m + 1:02d}"


@dataclass(frozen=True)
class LoanRecord:
    loan_id: str
    period_index: int
    calendar_month: str
    balance: float
    principal: float
    instalment: float
    receipt: float
    interest_rate: float
    in_default: bool
    terminal_status: TerminalStatus


_COLUMNS = ("balance", "principal", "instalment", "receipt", "interest_rate", "in_default", "status")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LoanHistory:
    """One account's contiguous monthly records."""

    loan_id: str
    start_period: int
    start_month: int
    balance: np.ndarray
    principal: np.ndarray
    instalment: np.ndarray
    receipt: np.ndarray
    interest_rate: np.ndarray
    in_default: np.ndarray
    status: np.ndarray

    @classmethod
    def from_balances(cls, balances, loan_id="loan", start_period=1, start_month="2000-01",
                      terminal_status=TerminalStatus.ACTIVE, **columns):
        """Build a history from a balance vector; other columns default to zero.

        ``terminal_status`` is stamped on the last record.
        """
        bal = np.asarray(balances, dtype=np.float64)
        n = bal.shape[0]
        if n < 1:
            raise EmptyInput("a loan history needs at least one record")
        status = np.zeros(n, dtype=np.int8)
        status[-1] = int(terminal_status)
        if "status" in columns:
            status = columns.pop("status")
        cols = {
            "principal": np.zeros(n),
            "instalment": np.zeros(n),
            "receipt": np.zeros(n),
            "interest_rate": np.zeros(n),
            "in_default": np.zeros(n, dtype=bool),
        }
        for k, v in columns.items():
            if k not in cols:
                raise TypeError(f"unknown column {k!r}")
            cols[k] = np.broadcast_to(np.asarray(v), (n,))
        if isinstance(start_month, str):
            start_month = month_ordinal(start_month)
        return cls(
            loan_id=str(loan_id),
            start_period=int(start_period),
            start_month=int(start_month),
            balance=_frozen(bal, np.float64),
            principal=_frozen(cols["principal"], np.float64),
            instalment=_frozen(cols["instalment"], np.float64),
            receipt=_frozen(cols["receipt"], np.float64),
            interest_rate=_frozen(cols["interest_rate"], np.float64),
            in_default=_frozen(cols["in_default"], bool),
            status=_frozen(status, np.int8),
        )

    @property
    def n_records(self) -> int:
        return int(self.balance.shape[0])

    @property
    def T(self) -> int:
        """Observed lifetime: period index of the last record."""
        return self.start_period + self.n_records - 1

    @property
    def period_index(self) -> np.ndarray:
        return np.arange(self.start_period, self.T + 1)

    @property
    def calendar_months(self) -> list[str]:
        return [format_month(self.start_month + k) for k in range(self.n_records)]

    @property
    def terminal_status(self) -> TerminalStatus:
        return TerminalStatus(int(self.status.max()))

    @property
    def records(self) -> list[LoanRecord]:
        months = self.calendar_months
        return [
            LoanRecord(
                loan_id=self.loan_id,
                period_index=self.start_period + k,
                calendar_month=months[k],
                balance=float(self.balance[k]),
                principal=float(self.principal[k]),
                instalment=float(self.instalment[k]),
                receipt=float(self.receipt[k]),
                interest_rate=float(self.interest_rate[k]),
                in_default=bool(self.in_default[k]),
                terminal_status=TerminalStatus(int(self.status[k])),
            )
            for k in range(self.n_records)
        ]


@dataclass(frozen=True)
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    balances_floored: int = 0
    amounts_rounded: int = 0
    loans: int = 0

    def as_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.__dict__.items())


@dataclass(frozen=True, eq=False)
class Portfolio:
    """Immutable collection of loan histories keyed (and ordered) by loan_id."""

    loan_ids: tuple
    offsets: np.ndarray
    start_period: np.ndarray
    start_month: np.ndarray
    balance: np.ndarray
    principal: np.ndarray
    instalment: np.ndarray
    receipt: np.ndarray
    interest_rate: np.ndarray
    in_default: np.ndarray
    status: np.ndarray
    report: IngestReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.loan_ids) == 0:
            raise EmptyInput("portfolio has no loans")
        if list(self.loan_ids) != sorted(set(self.loan_ids)):
            raise DuplicateRecord("loan_ids must be unique and sorted")
        lengths = np.diff(self.offsets)
        if lengths.min() < 1:
            raise EmptyInput("every loan needs at least one record")

    @classmethod
    def from_histories(cls, histories) -> "Portfolio":
        histories = sorted(histories, key=lambda h: h.loan_id)
        if not histories:
            raise EmptyInput("portfolio has no loans")
        ids = [h.loan_id for h in histories]
        for a, b in zip(ids, ids[1:]):
            if a == b:
                raise DuplicateRecord("loan appears twice", loan_id=a)
        lengths = np.array([h.n_records for h in histories], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        cols = {c: np.concatenate([getattr(h, c) for h in histories]) for c in _COLUMNS}
        return cls._build(
            tuple(ids), offsets,
            [h.start_period for h in histories], [h.start_month for h in histories], cols,
        )

    @classmethod
    def _build(cls, loan_ids, offsets, start_period, start_month, cols, report=None):
        return cls(
            loan_ids=tuple(loan_ids),
            offsets=_frozen(offsets, np.int64),
            start_period=_frozen(start_period, np.int64),
            start_month=_frozen(start_month, np.int64),
            balance=_frozen(cols["balance"], np.float64),
            principal=_frozen(cols["principal"], np.float64),
            instalment=_frozen(cols["instalment"], np.float64),
            receipt=_frozen(cols["receipt"], np.float64),
            interest_rate=_frozen(cols["interest_rate"], np.float64),
            in_default=_frozen(cols["in_default"], bool),
            status=_frozen(cols["status"], np.int8),
            report=report,
        )

    # -- shape -----------------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.loan_ids)

    def __len__(self) -> int:
        return self.N

    @property
    def n_records(self) -> int:
        return int(self.offsets[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def ages(self) -> np.ndarray:
        """Observed lifetime T_i (last period index) of every loan."""
        return self.start_period + self.lengths - 1

    @property
    def terminal_status(self) -> np.ndarray:
        return np.maximum.reduceat(self.status, self.offsets[:-1])

    @property
    def loan_of_record(self) -> np.ndarray:
        return np.repeat(np.arange(self.N), self.lengths)

    # -- access ----------------------------------------------------------
    def index_of(self, loan_id) -> int:
        i = int(np.searchsorted(np.asarray(self.loan_ids, dtype=object), loan_id))
        if i >= self.N or self.loan_ids[i] != loan_id:
            raise KeyError(loan_id)
        return i

    def history(self, i: int) -> LoanHistory:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return LoanHistory(
            loan_id=self.loan_ids[i],
            start_period=int(self.start_period[i]),
            start_month=int(self.start_month[i]),
            **{c: getattr(self, c)[lo:hi] for c in _COLUMNS},
        )

    def __getitem__(self, loan_id) -> LoanHistory:
        return self.history(self.index_of(loan_id))

    def __iter__(self):
        return (self.history(i) for i in range(self.N))

    # -- derivation ------------------------------------------------------
    def take(self, indices) -> "Portfolio":
        """Sub-portfolio of whole loans at the given positions."""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        lengths = self.lengths[idx]
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        rec = (np.arange(offsets[-1]) - np.repeat(offsets[:-1], lengths)
               + np.repeat(self.offsets[idx], lengths))
        cols = {c: getattr(self, c)[rec] for c in _COLUMNS}
        return self._build(
            [self.loan_ids[i] for i in idx], offsets,
            self.start_period[idx], self.start_month[idx], cols,
        )

    def truncate(self, keep: np.ndarray, carry_status: bool = True) -> "Portfolio":
        """Keep the first ``keep[i]`` records of loan i.

        With ``carry_status`` a terminal status found on a dropped record is
        moved onto the new last record, so a truncated settlement stays a
        settlement.
        """
        keep = np.asarray(keep, dtype=np.int64)
        lengths = self.lengths
        if keep.shape != lengths.shape or (keep < 1).any() or (keep > lengths).any():
            raise ValueError("keep must satisfy 1 <= keep[i] <= length[i]")
        mask = np.arange(self.n_records) - np.repeat(self.offsets[:-1], lengths) < np.repeat(keep, lengths)
        cols = {c: getattr(self, c)[mask] for c in _COLUMNS}
        offsets = np.concatenate([[0], np.cumsum(keep)])
        if carry_status:
            status = cols["status"].copy()
            status[offsets[1:] - 1] = np.maximum(status[offsets[1:] - 1], self.terminal_status)
            cols["status"] = status
        return self._build(self.loan_ids, offsets, self.start_period, self.start_month, cols)

    def equals(self, other: "Portfolio") -> bool:
        if self.loan_ids != other.loan_ids:
            return False
        names = ("offsets", "start_period", "start_month") + _COLUMNS
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

_REQUIRED = {
    "loanid": "LoanID",
    "date": "Date",
    "balance": "Balance",
    "principal": "Principal",
    "instalment": "Instalment",
    "receipt": "Receipt",
    "interestrate": "InterestRate",
    "indefault": "InDefault",
    "status": "Status",
}
_OPTIONAL = {"period": "Period"}
_CURRENCY = ("Balance", "Principal", "Instalment", "Receipt")


def _first_bad(mask, df, row_no, exc, message):
    k = int(np.flatnonzero(mask)[0])
    raise exc(message, loan_id=df["LoanID"].iat[k] or None, row=int(row_no[k]))


def ingest_csv(path, *, floor_negative: bool = True) -> Portfolio:
    """Read and validate a loan panel CSV.

    Header names are matched case-insensitively. Currency is held to cents;
    values carrying more precision are rounded and counted. Negative balances
    are floored to zero (counted) unless ``floor_negative`` is False, in which
    case :class:`NegativeBalance` is raised. Row numbers in errors are 1-based
    data rows (the header is row 0).

    The returned portfolio carries an :class:`IngestReport` in ``.report``.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    rename = {}
    for col in df.columns:
        key = col.strip().lower()
        if key in _REQUIRED:
            rename[col] = _REQUIRED[key]
        elif key in _OPTIONAL:
            rename[col] = _OPTIONAL[key]
    df = df.rename(columns=rename)
    missing = [c for c in _REQUIRED.values() if c not in df.columns]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")

    rows_read = len(df)
    row_no = np.arange(1, rows_read + 1)
    fields = list(_REQUIRED.values()) + (["Period"] if "Period" in df.columns else [])
    df = df[fields].apply(lambda s: s.str.strip())
    empty = (df == "").all(axis=1).to_numpy()
    df = df[~empty].reset_index(drop=True)
    row_no = row_no[~empty]
    if len(df) == 0:
        raise EmptyInput(f"{path}: no data rows")

    ids = df["LoanID"].to_numpy(dtype=object)
    if (ids == "").any():
        _first_bad(ids == "", df, row_no, UnparseableRow, "empty LoanID")

    parts = df["Date"].str.extract(r"^(\d{4})-(\d{2})(?:-\d{2})?$")
    year = pd.to_numeric(parts[0], errors="coerce").to_numpy()
    mon = pd.to_numeric(parts[1], errors="coerce").to_numpy()
    bad = np.isnan(year) | np.isnan(mon) | (mon < 1) | (mon > 12)
    if bad.any():
        _first_bad(bad, df, row_no, UnparseableRow, "Date is not YYYY-MM")
    month = (year * 12 + mon - 1).astype(np.int64)

    num = {}
    for c in _CURRENCY + ("InterestRate",):
        v = pd.to_numeric(df[c], errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(v)
        if bad.any():
            _first_bad(bad, df, row_no, UnparseableRow, f"{c} is not a number")
        num[c] = v
    for c in ("Principal", "Instalment", "InterestRate"):
        if (num[c] < 0).any():
            _first_bad(num[c] < 0, df, row_no, UnparseableRow, f"{c} is negative")

    flag = df["InDefault"].to_numpy(dtype=object)
    bad = (flag != "0") & (flag != "1")
    if bad.any():
        _first_bad(bad, df, row_no, UnparseableRow, "InDefault must be 0 or 1")
    in_default = flag == "1"

    codes = df["Status"].str.upper().map(
        {k: int(v) for k, v in _CODE_STATUS.items()}
    )
    bad = codes.isna().to_numpy()
    if bad.any():
        _first_bad(bad, df, row_no, UnparseableRow, "Status must be ACTIVE, WOFF or SETTLE")
    status = codes.to_numpy(dtype=np.int8)

    if "Period" in df.columns:
        period = pd.to_numeric(df["Period"], errors="coerce").to_numpy()
        bad = np.isnan(period) | (period < 1) | (period != np.floor(period))
        if bad.any():
            _first_bad(bad, df, row_no, UnparseableRow, "Period must be an integer >= 1")
        period = period.astype(np.int64)
    else:
        period = None

    rounded = 0
    for c in _CURRENCY:
        r = np.round(num[c], 2)
        rounded += int((r != num[c]).sum())
        num[c] = r
    neg = num["Balance"] < 0
    if neg.any() and not floor_negative:
        _first_bad(neg, df, row_no, NegativeBalance, "negative balance")
    floored = int(neg.sum())
    num["Balance"] = np.where(neg, 0.0, num["Balance"])

    loan_code, uniques = pd.factorize(ids, sort=True)
    order = np.lexsort((month, loan_code))
    loan_code = loan_code[order]
    month = month[order]
    row_sorted = row_no[order]
    starts = np.flatnonzero(np.r_[True, loan_code[1:] != loan_code[:-1]])
    same = np.r_[False, loan_code[1:] == loan_code[:-1]]
    step = np.r_[1, np.diff(month)]
    dup = same & (step == 0)
    if dup.any():
        k = int(np.flatnonzero(dup)[0])
        raise DuplicateRecord("duplicate month", loan_id=uniques[loan_code[k]], row=int(row_sorted[k]))
    gap = same & (step != 1)
    if gap.any():
        k = int(np.flatnonzero(gap)[0])
        raise NonContiguousHistory(
            f"gap between {format_month(month[k - 1])} and {format_month(month[k])}",
            loan_id=uniques[loan_code[k]], row=int(row_sorted[k]),
        )

    start_month = month[starts]
    if period is not None:
        period = period[order]
        lead = period - month
        bad = lead != np.repeat(lead[starts], np.diff(np.r_[starts, len(order)]))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise NonContiguousHistory(
                "Period does not advance with Date",
                loan_id=uniques[loan_code[k]], row=int(row_sorted[k]),
            )
        start_period = period[starts]
    else:
        start_period = np.ones(len(starts), dtype=np.int64)

    cols = {
        "balance": num["Balance"][order],
        "principal": num["Principal"][order],
        "instalment": num["Instalment"][order],
        "receipt": num["Receipt"][order],
        "interest_rate": num["InterestRate"][order],
        "in_default": in_default[order],
        "status": status[order],
    }
    report = IngestReport(
        rows_read=rows_read,
        rows_dropped=int(empty.sum()),
        balances_floored=floored,
        amounts_rounded=rounded,
        loans=len(uniques),
    )
    offsets = np.r_[starts, len(order)]
    return Portfolio._build([str(u) for u in uniques], offsets, start_period, start_month, cols, report)


def write_csv(portfolio: Portfolio, path) -> Path:
    """Write in the ingestion schema (plus ``Period``); LF endings, '.' decimals."""
    path = Path(path)
    p = portfolio
    lengths = p.lengths
    local = np.arange(p.n_records) - np.repeat(p.offsets[:-1], lengths)
    months = np.repeat(p.start_month, lengths) + local
    periods = np.repeat(p.start_period, lengths) + local
    ids = np.repeat(np.asarray(p.loan_ids, dtype=object), lengths)
    month_txt = {m: format_month(m) for m in np.unique(months)}
    lines = ["LoanID,Date,Period,Balance,Principal,Instalment,Receipt,InterestRate,InDefault,Status\n"]
    for k in range(p.n_records):
        lines.append(
            f"{ids[k]},{month_txt[months[k]]},{periods[k]},"
            f"{p.balance[k]:.2f},{p.principal[k]:.2f},{p.instalment[k]:.2f},{p.receipt[k]:.2f},"
            f"{float(p.interest_rate[k])!r},{int(p.in_default[k])},"
            f"{_STATUS_CODES[TerminalStatus(int(p.status[k]))]}\n"
        )
    with open(path, "w", newline="\n") as fh:
        fh.writelines(lines)
    return path


def subsample_clustered(portfolio: Portfolio, n_accounts: int, seed: int) -> Portfolio:
    """Draw ``n_accounts`` whole loan histories uniformly without replacement."""
    if n_accounts > portfolio.N:
        raise SampleTooLarge(f"asked for {n_accounts} loans from a portfolio of {portfolio.N}")
    if n_accounts < 1:
        raise SampleTooLarge("n_accounts must be >= 1")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(portfolio.N, size=n_accounts, replace=False)
    return portfolio.take(np.sort(chosen))
