"""Apply a chosen threshold: discard TZB-periods from affected accounts."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._io import kv_text, write_rows
from .data_model import Portfolio
from .errors import MismatchedPortfolios
from .optimiser import assess_portfolio

__all__ = ["Scope", "TreatmentReport", "AgeImpact", "apply_policy", "age_impact"]


class Scope(str, enum.Enum):
    TERMINATED_ONLY = "terminated"
    ALL_ACCOUNTS = "all"

    @classmethod
    def parse(cls, text) -> "Scope":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "terminated": cls.TERMINATED_ONLY, "terminatedonly": cls.TERMINATED_ONLY,
            "terminated_only": cls.TERMINATED_ONLY,
            "all": cls.ALL_ACCOUNTS, "allaccounts": cls.ALL_ACCOUNTS, "all_accounts": cls.ALL_ACCOUNTS,
        }
        if key not in aliases:
            raise ValueError(f"unknown scope {text!r}; use 'terminated' or 'all'")
        return aliases[key]


@dataclass(frozen=True)
class TreatmentReport:
    policy_b: float
    scope: Scope
    accounts_affected: int
    records_discarded: int
    mean_tzb_len: float | None
    median_tzb_len: float | None
    terminated_share_of_tzb: float | None
    tzb_accounts: int
    discarded_balance: float

    def _items(self):
        return [
            ("policy_b", self.policy_b),
            ("scope", self.scope.value),
            ("accounts_affected", self.accounts_affected),
            ("records_discarded", self.records_discarded),
            ("mean_tzb_len", self.mean_tzb_len),
            ("median_tzb_len", self.median_tzb_len),
            ("terminated_share_of_tzb", self.terminated_share_of_tzb),
            ("tzb_accounts", self.tzb_accounts),
            ("discarded_balance", self.discarded_balance),
        ]

    def as_text(self) -> str:
        return kv_text(self._items())

    def write_csv(self, path):
        items = self._items()
        return write_rows(path, [k for k, _ in items], [[v for _, v in items]])


def apply_policy(portfolio: Portfolio, b: float, tau: int = 6, min_len: int = 1,
                 scope=Scope.TERMINATED_ONLY) -> tuple[Portfolio, TreatmentReport]:
    """Return a new portfolio with in-scope TZB-periods removed.

    The true-end record is always retained, and a terminal status stamped on
    a discarded record moves onto it. ``tau`` only feeds the assessment; it
    does not change which records are dropped.
    """
    scope = Scope.parse(scope)
    a = assess_portfolio(portfolio, b, tau, min_len)
    terminated = portfolio.terminal_status > 0
    in_scope = a.is_tzb & (terminated if scope is Scope.TERMINATED_ONLY else True)
    tzb_len = np.where(in_scope, a.tzb_len, 0)
    treated = portfolio.truncate(portfolio.lengths - tzb_len)

    lens = tzb_len[in_scope]
    footprint = a.m1[in_scope] * lens
    n_tzb = a.n_s
    report = TreatmentReport(
        policy_b=float(b),
        scope=scope,
        accounts_affected=int(in_scope.sum()),
        records_discarded=int(lens.sum()),
        mean_tzb_len=float(lens.mean()) if lens.size else None,
        median_tzb_len=float(np.median(lens)) if lens.size else None,
        terminated_share_of_tzb=float((a.is_tzb & terminated).sum() / n_tzb) if n_tzb else None,
        tzb_accounts=n_tzb,
        discarded_balance=math.fsum(footprint),
    )
    return treated, report


@dataclass(frozen=True)
class AgeImpact:
    mean_before: float
    mean_after: float
    median_before: float
    median_after: float

    @property
    def mean_delta(self) -> float:
        return self.mean_after - self.mean_before

    @property
    def median_delta(self) -> float:
        return self.median_after - self.median_before


def age_impact(before: Portfolio, after: Portfolio) -> AgeImpact:
    if before.loan_ids != after.loan_ids:
        raise MismatchedPortfolios("before and after hold different loan_id sets")
    ab, aa = before.ages.astype(np.float64), after.ages.astype(np.float64)
    return AgeImpact(
        mean_before=math.fsum(ab) / ab.size,
        mean_after=math.fsum(aa) / aa.size,
        median_before=float(np.median(ab)),
        median_after=float(np.median(aa)),
    )
