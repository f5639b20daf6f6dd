"""Per-account trailing zero-valued balance (TZB) mathematics.

Periods are the account's own period indices (``history.start_period`` ..
``history.T``). For a threshold ``b`` the *true end* ``t'`` is the earliest
period such that every balance from ``t'`` onwards is ``<= b`` and at least
``min_len`` records follow it; the TZB-period is ``t' + 1 .. T`` and its start
is ``t_z = t' + 1``. The true-end record itself is retained.

These functions are the readable single-account reference; bulk portfolio
work goes through :mod:`truend._kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import LoanHistory
from .errors import DegenerateDenominator, EmptyWindow, InvalidParams, UndefinedForNonTzb

__all__ = [
    "TzbParams",
    "TzbAssessment",
    "find_tzb_start",
    "tzb_membership",
    "mean_tzb_balance",
    "mean_pre_tzb_balance",
    "contamination_degree",
    "loan_objective",
    "assess",
]


@dataclass(frozen=True)
class TzbParams:
    b: float
    tau: int = 6
    min_len: int = 1
    w: float | None = None

    def __post_init__(self):
        if not self.b >= 0:
            raise InvalidParams(f"threshold b must be >= 0, got {self.b}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise InvalidParams(f"tau must be an integer >= 1, got {self.tau}")
        if int(self.min_len) != self.min_len or self.min_len < 1:
            raise InvalidParams(f"min_len must be an integer >= 1, got {self.min_len}")
        if self.w is not None and not 0 <= self.w <= 1:
            raise InvalidParams(f"w must lie in [0, 1], got {self.w}")


@dataclass(frozen=True)
class TzbAssessment:
    loan_id: str
    t_z: int | None
    membership: np.ndarray
    m1: float | None
    m2: float
    phi: float | None
    loan_objective: float | None
    true_end: int

    @property
    def is_tzb(self) -> bool:
        return self.t_z is not None

    @property
    def tzb_len(self) -> int:
        return int(self.membership.sum())


def _as_history(history) -> LoanHistory:
    if isinstance(history, LoanHistory):
        return history
    return LoanHistory.from_balances(history)


def find_tzb_start(history, b: float, min_len: int = 1) -> int | None:
    """Start period ``t_z`` of the TZB-period, or None for a non-TZB account."""
    h = _as_history(history)
    bal = h.balance
    # suffix_max[k] <= b  <=>  every balance from record k onwards is <= b
    suffix_max = np.maximum.accumulate(bal[::-1])[::-1]
    periods = h.period_index
    ok = (suffix_max <= b) & (h.T - periods >= min_len)
    if not ok.any():
        return None
    return int(periods[np.argmax(ok)]) + 1


def tzb_membership(history, b: float, min_len: int = 1) -> np.ndarray:
    """Boolean membership of each record in the TZB-period."""
    h = _as_history(history)
    t_z = find_tzb_start(h, b, min_len)
    if t_z is None:
        return np.zeros(h.n_records, dtype=bool)
    return h.period_index >= t_z


def mean_tzb_balance(history, t_z: int | None) -> float:
    """Mean balance over ``t_z .. T`` (divides by the number of records)."""
    h = _as_history(history)
    if t_z is None:
        raise UndefinedForNonTzb(f"{h.loan_id}: no TZB-period")
    if not h.start_period < t_z <= h.T:
        raise ValueError(f"t_z={t_z} outside ({h.start_period}, {h.T}]")
    return float(np.mean(h.balance[t_z - h.start_period:]))


def mean_pre_tzb_balance(history, t_end: int, tau: int = 6) -> float:
    """Mean balance over the ``tau`` periods ending at the true end ``t_end``.

    Young histories average whatever records exist before ``t_end``.
    """
    h = _as_history(history)
    if t_end < h.start_period:
        raise EmptyWindow(f"{h.loan_id}: true end {t_end} precedes the first record")
    if t_end > h.T:
        raise ValueError(f"t_end={t_end} beyond T={h.T}")
    hi = t_end - h.start_period
    lo = max(hi - tau + 1, 0)
    return float(np.mean(h.balance[lo:hi + 1]))


def contamination_degree(m1: float, m2: float) -> float:
    if m1 + m2 == 0:
        raise DegenerateDenominator("M1 + M2 = 0")
    return m1 / (m1 + m2)


def loan_objective(m1: float, m2: float, w: float) -> float:
    if not 0 <= w <= 1:
        raise InvalidParams(f"w must lie in [0, 1], got {w}")
    return w * m2 - m1


def assess(history, params: TzbParams) -> TzbAssessment:
    h = _as_history(history)
    t_z = find_tzb_start(h, params.b, params.min_len)
    membership = tzb_membership(h, params.b, params.min_len)
    true_end = h.T if t_z is None else t_z - 1
    m2 = mean_pre_tzb_balance(h, true_end, params.tau)
    m1 = phi = objective = None
    if t_z is not None:
        m1 = mean_tzb_balance(h, t_z)
        try:
            phi = contamination_degree(m1, m2)
        except DegenerateDenominator:
            phi = None
        if params.w is not None:
            objective = loan_objective(m1, m2, params.w)
    return TzbAssessment(
        loan_id=h.loan_id, t_z=t_z, membership=membership, m1=m1, m2=m2,
        phi=phi, loan_objective=objective, true_end=true_end,
    )
