"""Portfolio-level threshold search.

For each candidate threshold ``b`` every loan is scanned once
(:func:`assess_portfolio`); the loan objective ``w * M2 - M1`` is summed over
the TZB-set and scaled by its sample standard deviation to give ``f(b)``.
When ``w`` is not supplied it is calibrated as the midpoint of the portfolio
contamination degree at the first and last thresholds of the search space.
``b*`` is the argmax of ``f``; ties go to the smallest ``b``.

Aggregates use :func:`math.fsum` over arrays held in ascending loan_id order,
so results do not depend on input row order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from ._io import kv_text, write_rows
from .data_model import Portfolio
from .errors import (
    DegenerateDenominator,
    InvalidParams,
    NoDefinedObjective,
    UndefinedEndpoint,
)
from .tzb_core import TzbParams

__all__ = [
    "DEFAULT_THRESHOLDS",
    "SearchSpace",
    "PortfolioAssessment",
    "ThresholdEvaluation",
    "OptimisationOutcome",
    "assess_portfolio",
    "portfolio_means",
    "portfolio_contamination",
    "calibrate_w",
    "evaluate_threshold",
    "optimise",
    "optimal_region",
    "CURVE_COLUMNS",
]

DEFAULT_THRESHOLDS = (
    0, 10, 25, 50, 75, 100, 150, 200, 250, 300, 400, 500, 750,
    1000, 1250, 1500, 1750, 2000, 2500, 3000, 4000, 5000, 7500, 10000,
)


@dataclass(frozen=True)
class SearchSpace:
    thresholds: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        if not t:
            raise InvalidParams("search space is empty")
        if any(not x >= 0 for x in t):
            raise InvalidParams("thresholds must be >= 0")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise InvalidParams("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    @classmethod
    def default(cls) -> "SearchSpace":
        return cls(DEFAULT_THRESHOLDS)

    @classmethod
    def parse(cls, text: str) -> "SearchSpace":
        """'default24' or a comma-separated list of thresholds."""
        text = str(text).strip()
        if text.lower() in ("default", "default24"):
            return cls.default()
        try:
            values = [float(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise InvalidParams(f"bad threshold list {text!r}") from exc
        return cls(tuple(values))

    def __iter__(self):
        return iter(self.thresholds)

    def __len__(self):
        return len(self.thresholds)


@dataclass(frozen=True, eq=False)
class PortfolioAssessment:
    """Detection result for every loan of a portfolio at one threshold."""

    loan_ids: tuple
    b: float
    tau: int
    min_len: int
    start_period: np.ndarray
    lengths: np.ndarray
    end_local: np.ndarray
    is_tzb: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    short: np.ndarray

    @property
    def N(self) -> int:
        return len(self.loan_ids)

    @property
    def n_s(self) -> int:
        return int(self.is_tzb.sum())

    @property
    def true_end(self) -> np.ndarray:
        """Period index of each loan's true end (T for non-TZB loans)."""
        return self.start_period + self.end_local

    @property
    def t_z(self) -> np.ndarray:
        """TZB start period, -1 where the loan is not TZB."""
        return np.where(self.is_tzb, self.true_end + 1, -1)

    @property
    def tzb_len(self) -> np.ndarray:
        return self.lengths - self.end_local - 1

    @property
    def ages_after(self) -> np.ndarray:
        return self.true_end


def assess_portfolio(portfolio: Portfolio, b: float, tau: int = 6, min_len: int = 1) -> PortfolioAssessment:
    TzbParams(b=b, tau=tau, min_len=min_len)
    end_local, is_tzb, m1, m2, short = _kernels.scan_tails(
        portfolio.balance, portfolio.offsets, b, tau, min_len
    )
    return PortfolioAssessment(
        loan_ids=portfolio.loan_ids, b=float(b), tau=int(tau), min_len=int(min_len),
        start_period=portfolio.start_period, lengths=portfolio.lengths,
        end_local=end_local, is_tzb=is_tzb, m1=m1, m2=m2, short=short,
    )


def _mean(values) -> float | None:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return None
    return math.fsum(values) / values.size


def _means(a: PortfolioAssessment):
    return _mean(a.m1[a.is_tzb]), _mean(a.m2)


def portfolio_means(portfolio: Portfolio, b: float, tau: int = 6, min_len: int = 1):
    """(mean M1 over the TZB-set or None, mean M2 over all loans)."""
    return _means(assess_portfolio(portfolio, b, tau, min_len))


def portfolio_contamination(m1_bar: float, m2_bar: float) -> float:
    if m1_bar + m2_bar == 0:
        raise DegenerateDenominator("mean M1 + mean M2 = 0")
    return m1_bar / (m1_bar + m2_bar)


def _phi_bar(a: PortfolioAssessment) -> float | None:
    m1_bar, m2_bar = _means(a)
    if m1_bar is None:
        return None
    try:
        return portfolio_contamination(m1_bar, m2_bar)
    except DegenerateDenominator:
        return None


def _midpoint(curve_phi):
    """(w, b used at the low end, b used at the high end)."""
    points = list(curve_phi)
    defined = [(b, phi) for b, phi in points if phi is not None]
    if not defined:
        raise UndefinedEndpoint("contamination degree undefined at every threshold")
    (b_lo, phi_lo), (b_hi, phi_hi) = defined[0], defined[-1]
    return (phi_lo + phi_hi) / 2, b_lo, b_hi


def calibrate_w(curve_phi) -> float:
    """Midpoint of the contamination degree at the extremes of the curve.

    ``curve_phi`` is a sequence of ``(b, phi_bar)`` in increasing ``b``. An
    undefined endpoint falls back to the nearest threshold with a defined
    value.
    """
    return _midpoint(curve_phi)[0]


@dataclass(frozen=True)
class ThresholdEvaluation:
    b: float
    n_s: int
    l_bar: float | None
    s_bar: float | None
    f_value: float | None
    m1_bar: float | None
    m2_bar: float
    phi_bar: float | None
    prevalence: float
    mean_age: float
    mean_tzb_len: float | None
    n_short_window: int = 0


CURVE_COLUMNS = (
    "b", "n_s", "l_bar", "s_bar", "f", "m1_bar", "m2_bar", "phi_bar",
    "prevalence", "mean_age", "mean_tzb_len",
)


def _evaluate(a: PortfolioAssessment, w: float) -> ThresholdEvaluation:
    tzb = a.is_tzb
    n_s = int(tzb.sum())
    l = w * a.m2[tzb] - a.m1[tzb]
    l_bar = s_bar = f = None
    if n_s >= 1:
        total = math.fsum(l)
        l_bar = total / n_s
        if n_s >= 2:
            s_bar = math.sqrt(math.fsum((l - l_bar) ** 2) / (n_s - 1))
            if s_bar > 0:
                f = total / s_bar
    m1_bar, m2_bar = _means(a)
    return ThresholdEvaluation(
        b=a.b,
        n_s=n_s,
        l_bar=l_bar,
        s_bar=s_bar,
        f_value=f,
        m1_bar=m1_bar,
        m2_bar=m2_bar,
        phi_bar=_phi_bar(a),
        prevalence=n_s / a.N,
        mean_age=_mean(a.ages_after),
        mean_tzb_len=_mean(a.tzb_len[tzb]),
        n_short_window=int(a.short.sum()),
    )


def evaluate_threshold(portfolio: Portfolio, params: TzbParams) -> ThresholdEvaluation:
    if params.w is None:
        raise InvalidParams("evaluate_threshold needs params.w; use optimise() to calibrate it")
    return _evaluate(assess_portfolio(portfolio, params.b, params.tau, params.min_len), params.w)


@dataclass(frozen=True)
class OptimisationOutcome:
    curve: tuple
    b_star: float
    region: tuple
    w_used: float
    midpoint: float | None
    calibration_low_b: float | None = None
    calibration_high_b: float | None = None
    quantile: float = 0.25

    def as_text(self) -> str:
        return kv_text([
            ("b_star", self.b_star),
            ("w", self.w_used),
            ("midpoint", self.midpoint),
            ("calibration_low_b", self.calibration_low_b),
            ("calibration_high_b", self.calibration_high_b),
            ("region", " ".join(repr(b) for b in self.region)),
            ("region_quantile", self.quantile),
            ("thresholds_without_f", sum(e.f_value is None for e in self.curve)),
        ])

    def write_curve(self, path):
        rows = []
        for e in self.curve:
            d = asdict(e)
            d["f"] = d.pop("f_value")
            rows.append([d[c] for c in CURVE_COLUMNS])
        return write_rows(path, CURVE_COLUMNS, rows)


def optimal_region(curve, quantile: float = 0.25) -> tuple:
    """Thresholds near the maximiser of ``f``.

    Both coordinates are min-max scaled to [0, 1]; points whose Euclidean
    distance to the maximiser is at most the ``quantile`` of all distances are
    returned. Undefined ``f`` values are skipped; a flat curve returns every
    point.
    """
    if not 0 < quantile < 1:
        raise InvalidParams("quantile must lie in (0, 1)")
    pts = [(float(b), float(f)) for b, f in curve if f is not None]
    if not pts:
        raise NoDefinedObjective("no defined objective values")
    bs = np.array([p[0] for p in pts])
    fs = np.array([p[1] for p in pts])
    if len(pts) < 2 or fs.max() == fs.min():
        return tuple(bs.tolist())
    k = int(np.flatnonzero(fs == fs.max())[0])
    span_b = bs.max() - bs.min()
    bn = (bs - bs.min()) / span_b if span_b > 0 else np.zeros_like(bs)
    fn = (fs - fs.min()) / (fs.max() - fs.min())
    d = np.hypot(bn - bn[k], fn - fn[k])
    cutoff = np.quantile(d, quantile)
    return tuple(bs[d <= cutoff].tolist())


def optimise(portfolio: Portfolio, space: SearchSpace | None = None, tau: int = 6,
             min_len: int = 1, w: float | None = None, quantile: float = 0.25) -> OptimisationOutcome:
    """Evaluate ``f`` over the search space and pick ``b*``."""
    space = SearchSpace.default() if space is None else space
    if w is not None:
        TzbParams(b=0.0, tau=tau, min_len=min_len, w=w)
    assessments = [assess_portfolio(portfolio, b, tau, min_len) for b in space]
    phis = [(a.b, _phi_bar(a)) for a in assessments]
    try:
        midpoint, lo_b, hi_b = _midpoint(phis)
    except UndefinedEndpoint:
        if w is None:
            raise NoDefinedObjective("no TZB accounts at any threshold; cannot calibrate w") from None
        midpoint = lo_b = hi_b = None
    w_used = midpoint if w is None else float(w)
    curve = tuple(_evaluate(a, w_used) for a in assessments)

    b_star, best = None, None
    for e in curve:
        if e.f_value is not None and (best is None or e.f_value > best):
            b_star, best = e.b, e.f_value
    if b_star is None:
        raise NoDefinedObjective("f is undefined at every threshold (TZB-set smaller than 2)")
    region = optimal_region([(e.b, e.f_value) for e in curve], quantile)
    return OptimisationOutcome(
        curve=curve, b_star=b_star, region=region, w_used=w_used, midpoint=midpoint,
        calibration_low_b=lo_b, calibration_high_b=hi_b, quantile=quantile,
    )
