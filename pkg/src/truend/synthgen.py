"""Synthetic amortising-loan portfolios with injected TZB-tails.

Each loan runs a monthly performing/default state machine until it settles,
is written off, or its observation window closes. A chosen share of the
terminated loans then receives a *tail*: extra records after the true end
whose balances lie in ``[0, tail_balance_cap]`` (drifting up with interest,
capped) and whose last balance is exactly 0. The terminal status flag moves
to the last tail record, as it would when closure is delayed.

Randomness
----------
Loan ``i`` draws from ``numpy.random.PCG64(SeedSequence([seed, i]))`` and
consumes only ``Generator.random()`` (53-bit uniform doubles). Every variate
is obtained by inversion from those doubles, so any PCG64 + SeedSequence
implementation reproduces the same portfolio. Loans are generated
independently, so the result does not depend on generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import write_rows
from .data_model import Portfolio, TerminalStatus, month_ordinal
from .errors import InvalidParams, LoanSetMismatch

__all__ = ["SynthParams", "GroundTruth", "RecoveryMetrics", "generate", "evaluate_recovery", "loan_rng"]

_HEADER_DRAWS = 17


@dataclass(frozen=True)
class SynthParams:
    n_loans: int = 1000
    term_months: int = 240
    max_months: int = 180
    principal_range: tuple = (150_000.0, 2_500_000.0)
    annual_rate_range: tuple = (0.07, 0.13)
    p_default: float = 0.004
    p_cure: float = 0.06
    p_writeoff: float = 0.04
    p_settle: float = 0.008
    tzb_fraction: float = 0.25
    tail_len_mean: float = 12.0
    tail_balance_cap: float = 50.0
    closing_balance_cap: float | None = None
    genuine_floor: float = 2000.0
    rundown_prob: float = 0.5
    rundown_cap: float = 20_000.0
    tail_accrual: bool = True
    unflagged_fraction: float = 0.0
    first_month: str = "2007-01"
    seed: int = 0
    closing_cap: float = field(init=False, repr=False)

    def __post_init__(self):
        probs = ("p_default", "p_cure", "p_writeoff", "p_settle", "tzb_fraction",
                 "rundown_prob", "unflagged_fraction")
        for name in probs:
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidParams(f"{name} must lie in [0, 1], got {v}")
        if self.p_default + self.p_settle > 1 or self.p_cure + self.p_writeoff > 1:
            raise InvalidParams("competing monthly probabilities sum above 1")
        if self.n_loans < 1:
            raise InvalidParams("n_loans must be >= 1")
        if not 1 <= self.max_months < self.term_months:
            raise InvalidParams("need 1 <= max_months < term_months")
        if self.tail_balance_cap < 0 or self.tail_len_mean < 1:
            raise InvalidParams("tail_balance_cap must be >= 0 and tail_len_mean >= 1")
        lo, hi = self.principal_range
        if not 0 < lo <= hi:
            raise InvalidParams("principal_range must be positive and ordered")
        lo, hi = self.annual_rate_range
        if not 0 <= lo <= hi:
            raise InvalidParams("annual_rate_range must be non-negative and ordered")
        cap = 2 * self.tail_balance_cap if self.closing_balance_cap is None else self.closing_balance_cap
        if cap < 0:
            raise InvalidParams("closing_balance_cap must be >= 0")
        if max(cap, self.tail_balance_cap) >= self.genuine_floor:
            raise InvalidParams("genuine_floor must exceed both balance caps")
        if self.rundown_cap < self.genuine_floor:
            raise InvalidParams("rundown_cap must be >= genuine_floor")
        object.__setattr__(self, "closing_cap", float(cap))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    loan_ids: tuple
    true_end: np.ndarray
    injected: np.ndarray
    tail_len: np.ndarray

    @property
    def injected_prevalence(self) -> float:
        return float(self.injected.sum()) / len(self.loan_ids)

    def write_csv(self, path):
        rows = zip(self.loan_ids, self.true_end.tolist(),
                   self.injected.astype(int).tolist(), self.tail_len.tolist())
        return write_rows(path, ("LoanID", "TrueEnd", "Injected", "TailLen"), rows)

    @classmethod
    def read_csv(cls, path) -> "GroundTruth":
        df = pd.read_csv(path, dtype={"LoanID": str}).sort_values("LoanID", kind="stable")
        return cls(
            loan_ids=tuple(df["LoanID"]),
            true_end=df["TrueEnd"].to_numpy(np.int64),
            injected=df["Injected"].to_numpy() == 1,
            tail_len=df["TailLen"].to_numpy(np.int64),
        )


def loan_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def _geometric(u: float, p: float) -> int:
    """Trials up to and including the first success (>= 1), by inversion."""
    if p <= 0:
        return 1 << 30
    if p >= 1:
        return 1
    return 1 + int(math.floor(math.log1p(-u) / math.log1p(-p)))


def _annuity(balance: float, i: float, n: int) -> float:
    if n <= 0:
        return balance * (1 + i)
    if i == 0:
        return balance / n
    return balance * i / (1 - (1 + i) ** -n)


def _simulate(params: SynthParams, index: int):
    rng = loan_rng(params.seed, index)
    u = rng.random(_HEADER_DRAWS)
    p_lo, p_hi = params.principal_range
    r_lo, r_hi = params.annual_rate_range
    principal = p_lo + (p_hi - p_lo) * u[0]
    rate = r_lo + (r_hi - r_lo) * u[1]
    window = 12 + int(u[2] * (params.max_months - 11)) if params.max_months > 12 else params.max_months
    origin = int(u[3] * 60)
    i = rate / 12
    G = params.genuine_floor

    bal, rec, inst, dflt = [], [], [], []
    B = principal
    A = _annuity(B, i, params.term_months)
    t = 0
    performing = True
    status = TerminalStatus.ACTIVE
    while t < window:
        if performing:
            p = params.p_settle + params.p_default
            g = _geometric(rng.random(), p)
            for _ in range(min(g - 1, window - t)):
                B = B * (1 + i) - A
                bal.append(max(B, G)); rec.append(A); inst.append(A); dflt.append(False)
                t += 1
            if t >= window:
                break
            t += 1
            if rng.random() * p < params.p_settle:
                closing = params.closing_cap * u[7]
                bal.append(closing); rec.append(B * (1 + i) - closing); inst.append(A); dflt.append(False)
                status = TerminalStatus.SETTLEMENT
                break
            performing = False
            B = B * (1 + i)
            bal.append(max(B, G)); rec.append(0.0); inst.append(A); dflt.append(True)
        else:
            p = params.p_cure + params.p_writeoff
            g = _geometric(rng.random(), p)
            for _ in range(min(g - 1, window - t)):
                v = rng.random()
                paid = (v / 0.3) * A if v < 0.3 else 0.0
                B = B * (1 + i) - paid
                bal.append(max(B, G)); rec.append(paid); inst.append(A); dflt.append(True)
                t += 1
            if t >= window:
                break
            t += 1
            if rng.random() * p < params.p_cure:
                performing = True
                A = _annuity(B, i, params.term_months - t + 1)
                B = B * (1 + i) - A
                bal.append(max(B, G)); rec.append(A); inst.append(A); dflt.append(False)
            else:
                recovery = (0.2 + 0.7 * rng.random()) * B * (1 + i)
                closing = params.closing_cap * u[7]
                bal.append(closing); rec.append(recovery); inst.append(A); dflt.append(True)
                status = TerminalStatus.WRITE_OFF
                break

    n = len(bal)
    if status is TerminalStatus.SETTLEMENT and u[9] < params.rundown_prob:
        # the k performing months just before settlement run the balance down
        k = min(1 + int(u[10] * 6), n - 1)
        while k > 0 and any(dflt[n - 1 - k:n - 1]):
            k -= 1
        if k > 0:
            vals = sorted((G + (params.rundown_cap - G) * x for x in u[11:11 + k]), reverse=True)
            bal[n - 1 - k:n - 1] = vals

    return {
        "principal": principal, "rate": rate, "origin": origin, "status": status,
        "balance": bal, "receipt": rec, "instalment": inst, "in_default": dflt,
        "corrupt_key": u[4], "tail_u": u[5], "tail_start_u": u[6], "unflagged": u[8] < params.unflagged_fraction,
    }


def generate(params: SynthParams) -> tuple[Portfolio, GroundTruth]:
    loans = [_simulate(params, k) for k in range(params.n_loans)]
    n = params.n_loans

    terminated = np.array([ln["status"] is not TerminalStatus.ACTIVE for ln in loans])
    keys = np.array([ln["corrupt_key"] for ln in loans])
    n_term = int(terminated.sum())
    k = int(round(params.tzb_fraction * n_term))
    candidates = np.flatnonzero(terminated)
    chosen = candidates[np.lexsort((candidates, keys[candidates]))[:k]]
    injected = np.zeros(n, dtype=bool)
    injected[chosen] = True

    width = max(6, len(str(n - 1)))
    ids, start_month = [], []
    true_end = np.empty(n, dtype=np.int64)
    tail_len = np.zeros(n, dtype=np.int64)
    cols = {c: [] for c in ("balance", "principal", "instalment", "receipt", "interest_rate", "in_default", "status")}
    first = month_ordinal(params.first_month)
    eps = params.tail_balance_cap
    for idx, ln in enumerate(loans):
        bal, rec, inst, dflt = ln["balance"], ln["receipt"], ln["instalment"], ln["in_default"]
        m = len(bal)
        status = [0] * m
        final = int(ln["status"])
        true_end[idx] = m
        if injected[idx]:
            L = _geometric(ln["tail_u"], 1.0 / params.tail_len_mean)
            tail = []
            v = eps * ln["tail_start_u"]
            growth = 1 + ln["rate"] / 12 if params.tail_accrual else 1.0
            for _ in range(L - 1):
                tail.append(v)
                v = min(v * growth, eps)
            tail.append(0.0)
            bal = bal + tail
            rec = rec + [0.0] * L
            inst = inst + [inst[-1]] * L
            dflt = dflt + [dflt[-1]] * L
            status = status + [0] * L
            tail_len[idx] = L
        if not (injected[idx] and ln["unflagged"]):
            status[-1] = final
        ids.append(f"L{idx:0{width}d}")
        start_month.append(first + ln["origin"])
        T = len(bal)
        cols["balance"].extend(bal)
        cols["receipt"].extend(rec)
        cols["instalment"].extend(inst)
        cols["in_default"].extend(dflt)
        cols["status"].extend(status)
        cols["principal"].extend([ln["principal"]] * T)
        cols["interest_rate"].extend([ln["rate"]] * T)

    lengths = true_end + tail_len
    arrays = {c: np.asarray(v) for c, v in cols.items()}
    for c in ("balance", "principal", "instalment", "receipt"):
        arrays[c] = np.round(arrays[c].astype(np.float64), 2)
    arrays["interest_rate"] = np.round(arrays["interest_rate"].astype(np.float64), 6)
    arrays["status"] = arrays["status"].astype(np.int8)
    arrays["in_default"] = arrays["in_default"].astype(bool)
    portfolio = Portfolio._build(
        ids, np.concatenate([[0], np.cumsum(lengths)]),
        np.ones(n, dtype=np.int64), np.array(start_month, dtype=np.int64), arrays,
    )
    truth = GroundTruth(tuple(ids), true_end, injected, tail_len)
    return portfolio, truth


@dataclass(frozen=True)
class RecoveryMetrics:
    recovery_rate: float | None
    false_positive_rate: float | None
    endpoint_mae: float
    n_injected: int
    n_clean: int
    prevalence: float


def evaluate_recovery(assessment, truth: GroundTruth) -> RecoveryMetrics:
    """Compare detected true ends with the generator's ground truth.

    ``assessment`` is a :class:`~truend.optimiser.PortfolioAssessment`.
    """
    if tuple(assessment.loan_ids) != tuple(truth.loan_ids):
        raise LoanSetMismatch("assessment and ground truth cover different loans")
    detected = np.asarray(assessment.is_tzb)
    est_end = np.asarray(assessment.true_end)
    inj = truth.injected
    exact = detected & (est_end == truth.true_end)
    n_inj = int(inj.sum())
    n_clean = int((~inj).sum())
    return RecoveryMetrics(
        recovery_rate=float(exact[inj].sum() / n_inj) if n_inj else None,
        false_positive_rate=float(detected[~inj].sum() / n_clean) if n_clean else None,
        endpoint_mae=float(np.abs(est_end - truth.true_end).mean()),
        n_injected=n_inj,
        n_clean=n_clean,
        prevalence=float(detected.mean()),
    )
