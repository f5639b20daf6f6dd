"""Bulk trailing-balance scan over a CSR loan panel.

Two interchangeable implementations of :func:`scan_tails`:

* ``numba``: one ``prange`` loop per loan walking backwards from the last
  record; touches only the tail and the pre-end window.
* ``numpy``: segment reductions (``reduceat``) over masks of the flat balance
  column; no compiler needed.

The numba path is used when numba imports and ``TRUEND_DISABLE_NUMBA`` is not
set to a true value. Per-loan outputs never depend on thread scheduling, so
results are bit-identical for any thread count. The two backends may differ
in the last ulp of the means (different summation association).
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # skip probing an old system TBB (it only warns and falls back anyway)
    if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("TRUEND_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

BACKEND = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def scan_tails_numpy(balance, offsets, b, tau, min_len):
    starts = offsets[:-1]
    last = offsets[1:] - 1
    n_loans = starts.shape[0]
    pos = np.arange(balance.shape[0])
    loan = np.repeat(np.arange(n_loans), offsets[1:] - starts)

    # first record of the trailing run of balances <= b (== last + 1 if none)
    last_big = np.maximum.reduceat(np.where(balance > b, pos + 1, 0), starts)
    run_start = np.maximum(last_big, starts)
    is_tzb = (last - run_start) >= min_len
    end = np.where(is_tzb, run_start, last)

    tail_len = last - end
    in_tail = pos > end[loan]
    tail_sum = np.add.reduceat(np.where(in_tail, balance, 0.0), starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = np.where(is_tzb, tail_sum / tail_len, np.nan)

    lo = np.maximum(end - tau + 1, starts)
    in_win = (pos >= lo[loan]) & (pos <= end[loan])
    m2 = np.add.reduceat(np.where(in_win, balance, 0.0), starts) / (end - lo + 1)
    short = (end - starts + 1) < tau
    return end - starts, is_tzb, m1, m2, short


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _scan_tails_jit(balance, offsets, b, tau, min_len, end_local, is_tzb, m1, m2, short):
        n_loans = offsets.shape[0] - 1
        for i in prange(n_loans):
            lo = offsets[i]
            last = offsets[i + 1] - 1
            j = last
            while j >= lo and balance[j] <= b:
                j -= 1
            e = j + 1
            if last - e >= min_len:
                is_tzb[i] = True
                s = 0.0
                for k in range(e + 1, last + 1):
                    s += balance[k]
                m1[i] = s / (last - e)
            else:
                e = last
                is_tzb[i] = False
                m1[i] = np.nan
            w0 = max(e - tau + 1, lo)
            s = 0.0
            for k in range(w0, e + 1):
                s += balance[k]
            m2[i] = s / (e - w0 + 1)
            short[i] = (e - lo + 1) < tau
            end_local[i] = e - lo

    def scan_tails_numba(balance, offsets, b, tau, min_len):
        n_loans = offsets.shape[0] - 1
        end_local = np.empty(n_loans, dtype=np.int64)
        is_tzb = np.empty(n_loans, dtype=np.bool_)
        m1 = np.empty(n_loans, dtype=np.float64)
        m2 = np.empty(n_loans, dtype=np.float64)
        short = np.empty(n_loans, dtype=np.bool_)
        _scan_tails_jit(
            np.ascontiguousarray(balance, dtype=np.float64),
            np.ascontiguousarray(offsets, dtype=np.int64),
            float(b), int(tau), int(min_len), end_local, is_tzb, m1, m2, short,
        )
        return end_local, is_tzb, m1, m2, short

else:  # pragma: no cover
    scan_tails_numba = None


def scan_tails(balance, offsets, b, tau, min_len):
    """Locate every loan's true end at threshold ``b``.

    Returns ``(end_local, is_tzb, m1, m2, short)`` per loan: 0-based index of
    the true end within the loan (the last record for non-TZB loans), TZB
    flag, mean balance after the true end (NaN if not TZB), mean balance of
    the ``tau`` records ending at the true end, and whether that window was
    cut short by the start of the history.
    """
    if BACKEND == "numba":
        return scan_tails_numba(balance, offsets, b, tau, min_len)
    return scan_tails_numpy(balance, offsets, b, tau, min_len)


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    BACKEND = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def set_threads(n: int) -> int:
    """Cap kernel parallelism; returns the thread count actually in effect."""
    if n < 1:
        raise ValueError("threads must be >= 1")
    if BACKEND != "numba":
        return 1
    n = min(int(n), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n
