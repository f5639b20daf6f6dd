"""Downstream impact measures: default spells, workout loss rates,
Kaplan-Meier time-to-write-off curves, discrete hazards and curve MAE.

Cures are treated as right-censoring (latent-risks convention), so ``F`` is
the cumulative probability of write-off by spell age ``t``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from ._io import write_rows
from .data_model import Portfolio, TerminalStatus
from .errors import EmptyInput, GridMismatch, InvalidParams, NotWrittenOff

__all__ = [
    "SpellOutcome",
    "DefaultSpell",
    "SurvivalCurve",
    "Histogram",
    "extract_default_spells",
    "workout_loss_rate",
    "km_estimator",
    "discrete_hazard",
    "align_curves",
    "curve_mae",
    "distribution_summary",
    "write_spells",
]


class SpellOutcome(str, enum.Enum):
    WRITE_OFF = "WOFF"
    CENSORED = "CENSORED"


@dataclass(frozen=True)
class DefaultSpell:
    loan_id: str
    spell_start: int
    duration: int
    outcome: SpellOutcome
    ead: float
    cashflows: tuple = ()

    @property
    def written_off(self) -> bool:
        return self.outcome is SpellOutcome.WRITE_OFF


def extract_default_spells(portfolio: Portfolio) -> list[DefaultSpell]:
    """One spell per maximal run of in-default records within a loan.

    A spell is a write-off only if it runs to the loan's last record and the
    loan is written off; cures and runs still open at the end of the data are
    censored. EAD is the balance in the first month of the spell; cash flows
    are the non-zero receipts during the spell, keyed by months since default.
    """
    p = portfolio
    d = p.in_default
    if not d.any():
        return []
    loan = p.loan_of_record
    first = np.zeros(p.n_records, dtype=bool)
    first[p.offsets[:-1]] = True
    last = np.zeros(p.n_records, dtype=bool)
    last[p.offsets[1:] - 1] = True
    prev = np.r_[False, d[:-1]]
    nxt = np.r_[d[1:], False]
    starts = np.flatnonzero(d & (first | ~prev))
    ends = np.flatnonzero(d & (last | ~nxt))
    woff = p.terminal_status == TerminalStatus.WRITE_OFF

    spells = []
    for s, e in zip(starts, ends):
        i = loan[s]
        receipts = p.receipt[s:e + 1]
        nz = np.flatnonzero(receipts)
        outcome = SpellOutcome.WRITE_OFF if (last[e] and woff[i]) else SpellOutcome.CENSORED
        spells.append(DefaultSpell(
            loan_id=p.loan_ids[i],
            spell_start=int(p.start_period[i] + s - p.offsets[i]),
            duration=int(e - s + 1),
            outcome=outcome,
            ead=float(p.balance[s]),
            cashflows=tuple((int(k), float(receipts[k])) for k in nz),
        ))
    return spells


def workout_loss_rate(spell: DefaultSpell, annual_rate: float = 0.0, clamp: bool = False) -> float:
    """Realised loss: (EAD - PV of recoveries) / EAD, discounted monthly to the default point."""
    if not spell.written_off:
        raise NotWrittenOff(f"{spell.loan_id}: spell at {spell.spell_start} was not written off")
    if annual_rate < 0:
        raise InvalidParams("annual_rate must be >= 0")
    if not spell.ead > 0:
        raise InvalidParams(f"{spell.loan_id}: EAD must be > 0")
    v = 1.0 + annual_rate / 12.0
    pv = math.fsum(amount / v ** k for k, amount in spell.cashflows)
    loss = (spell.ead - pv) / spell.ead
    if clamp:
        loss = min(max(loss, 0.0), 1.0)
    return loss


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Tabulated write-off survival over integer spell ages ``t = 0, 1, ...``."""

    t: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    S: np.ndarray
    h: np.ndarray | None = None

    @property
    def F(self) -> np.ndarray:
        return 1.0 - self.S

    @property
    def f_dens(self) -> np.ndarray:
        return np.r_[0.0, self.S[:-1] - self.S[1:]]

    def restrict(self, horizon: int) -> "SurvivalCurve":
        k = self.t <= horizon
        return SurvivalCurve(self.t[k], self.at_risk[k], self.events[k], self.S[k],
                             None if self.h is None else self.h[k])

    def extend(self, t_max: int) -> "SurvivalCurve":
        """Pad to ``t_max`` carrying S forward with an empty risk set."""
        extra = t_max - int(self.t[-1])
        if extra <= 0:
            return self
        pad_i = np.zeros(extra, dtype=np.int64)
        h = None if self.h is None else np.r_[self.h, np.zeros(extra)]
        return SurvivalCurve(
            np.r_[self.t, np.arange(self.t[-1] + 1, t_max + 1)],
            np.r_[self.at_risk, pad_i], np.r_[self.events, pad_i],
            np.r_[self.S, np.full(extra, self.S[-1])], h,
        )

    def write_csv(self, path):
        h = self.h if self.h is not None else np.full(self.t.shape, np.nan)
        rows = zip(self.t.tolist(), self.at_risk.tolist(), self.events.tolist(),
                   self.S.tolist(), self.F.tolist(), self.f_dens.tolist(), h.tolist())
        return write_rows(path, ("t", "at_risk", "events", "S", "F", "f", "h"), rows)


def km_estimator(spells) -> SurvivalCurve:
    """Product-limit estimate of write-off survival.

    Accepts :class:`DefaultSpell` objects or ``(duration, event)`` pairs.
    Events at a tied age are removed from the risk set before censorings.
    The product is accumulated in exact rational arithmetic and rounded once
    per age, so without censoring S(t) is exactly the rounded empirical
    survivor fraction.
    """
    pairs = [(s.duration, s.written_off) if isinstance(s, DefaultSpell) else (int(s[0]), bool(s[1]))
             for s in spells]
    if not pairs:
        raise EmptyInput("no spells")
    dur = np.array([p[0] for p in pairs], dtype=np.int64)
    ev = np.array([p[1] for p in pairs], dtype=bool)
    if dur.min() < 1:
        raise InvalidParams("spell durations must be >= 1")
    t_max = int(dur.max())
    ended = np.bincount(dur, minlength=t_max + 1)
    events = np.bincount(dur[ev], minlength=t_max + 1)
    at_risk = np.r_[len(dur), len(dur) - np.cumsum(ended)[:-1]]
    surv = Fraction(1)
    S = np.empty(t_max + 1)
    S[0] = 1.0
    for t in range(1, t_max + 1):
        if events[t]:
            surv *= Fraction(int(at_risk[t] - events[t]), int(at_risk[t]))
        S[t] = float(surv)
    return SurvivalCurve(np.arange(t_max + 1), at_risk.astype(np.int64), events.astype(np.int64), S)


def discrete_hazard(curve: SurvivalCurve) -> SurvivalCurve:
    """Fill ``h(t) = (S(t-1) - S(t)) / S(t-1)``: write-off probability in
    ``(t-1, t]`` given survival to ``t-1``; zero where ``S(t-1) = 0``."""
    prev = curve.S[:-1]
    drop = prev - curve.S[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(prev > 0, drop / prev, 0.0)
    return replace(curve, h=np.r_[0.0, h])


def align_curves(a: SurvivalCurve, b: SurvivalCurve, horizon: int = 120):
    """Put two curves on the common grid ``0 .. min(horizon, longest)``."""
    t_max = min(horizon, max(int(a.t[-1]), int(b.t[-1])))
    return a.extend(t_max).restrict(t_max), b.extend(t_max).restrict(t_max)


def curve_mae(a, b, horizon: int | None = 120) -> float:
    """Mean absolute difference between two curves on the same grid
    ``t = 0, 1, ...``, restricted to ``t <= horizon``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GridMismatch(f"grids differ: {a.shape} vs {b.shape}")
    if horizon is not None:
        a, b = a[:horizon + 1], b[:horizon + 1]
    if a.size == 0:
        raise EmptyInput("empty grid")
    return math.fsum(np.abs(a - b)) / a.size


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float

    def write_csv(self, path):
        rows = zip(self.edges[:-1].tolist(), self.edges[1:].tolist(), self.counts.tolist())
        return write_rows(path, ("bin_lo", "bin_hi", "count"), rows)


def distribution_summary(values, bins=20, range=None) -> Histogram:
    """Fixed-width histogram plus sample mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("no values")
    counts, edges = np.histogram(values, bins=bins, range=range)
    return Histogram(edges=edges, counts=counts, mean=math.fsum(values) / values.size)


def write_spells(spells, path, annual_rate: float = 0.0):
    rows = []
    for s in spells:
        loss = workout_loss_rate(s, annual_rate) if s.written_off and s.ead > 0 else None
        rows.append((s.loan_id, s.spell_start, s.duration, s.outcome.value, s.ead,
                     len(s.cashflows), loss))
    return write_rows(path, ("loan_id", "spell_start", "duration", "outcome", "ead",
                             "n_cashflows", "loss_rate"), rows)
