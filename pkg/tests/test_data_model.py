import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truend import LoanHistory, Portfolio, TerminalStatus, ingest_csv, subsample_clustered, write_csv
from truend.data_model import format_month, month_ordinal
from truend.errors import (
    DuplicateRecord,
    EmptyInput,
    MissingColumn,
    NegativeBalance,
    NonContiguousHistory,
    SampleTooLarge,
    UnparseableRow,
)

from conftest import WORKED_BALANCES, loan_rows, write_panel


def test_worked_example_ingest(worked):
    assert worked.N == 1
    h = worked["ACC001"]
    assert h.start_period == 56 and h.T == 69
    assert h.balance.tolist() == WORKED_BALANCES
    assert h.terminal_status is TerminalStatus.SETTLEMENT
    assert h.calendar_months[0] == "2011-08"


def test_three_loans(tmp_path):
    rows = loan_rows("A", [5, 4, 3]) + loan_rows("B", [9, 0]) + loan_rows("C", [1])
    p = ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert p.N == 3
    assert p.report.rows_dropped == 0 and p.report.rows_read == 6
    assert p.loan_ids == ("A", "B", "C")


def test_gap_names_loan(tmp_path):
    rows = loan_rows("G", list(range(10, 0, -1)))
    del rows[4]
    with pytest.raises(NonContiguousHistory) as err:
        ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert err.value.loan_id == "G"
    assert "G" in str(err.value)


def test_negative_balance_floored(tmp_path):
    rows = loan_rows("N", [100, -12.50, 0])
    p = ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert p["N"].balance[1] == 0.0
    assert p.report.balances_floored == 1


def test_negative_balance_error_policy(tmp_path):
    rows = loan_rows("N", [100, -12.50, 0])
    with pytest.raises(NegativeBalance) as err:
        ingest_csv(write_panel(tmp_path / "p.csv", rows), floor_negative=False)
    assert err.value.row == 2


def test_missing_column(tmp_path):
    path = write_panel(tmp_path / "p.csv", ["A,2020-01,1"], header="LoanID,Date,Balance")
    with pytest.raises(MissingColumn):
        ingest_csv(path)


def test_duplicate_month(tmp_path):
    rows = loan_rows("D", [3, 2, 1])
    rows.append(rows[1])
    with pytest.raises(DuplicateRecord) as err:
        ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert err.value.loan_id == "D"


@pytest.mark.parametrize("bad,field", [
    ("X,2020-13,1,0,0,0,0,0,ACTIVE", "Date"),
    ("X,2020-01,abc,0,0,0,0,0,ACTIVE", "Balance"),
    ("X,2020-01,1,0,0,0,0,2,ACTIVE", "InDefault"),
    ("X,2020-01,1,0,0,0,0,0,CLOSED", "Status"),
])
def test_unparseable_rows(tmp_path, bad, field):
    rows = loan_rows("A", [1, 0]) + [bad]
    with pytest.raises(UnparseableRow) as err:
        ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert err.value.row == 3
    assert field in str(err.value)


def test_headers_case_insensitive_and_unsorted(tmp_path):
    rows = loan_rows("B", [2, 1]) + loan_rows("A", [3, 0])
    rows = rows[::-1]
    path = write_panel(tmp_path / "p.csv", rows,
                       header="loanid,DATE,balance,principal,instalment,receipt,interestrate,indefault,status")
    p = ingest_csv(path)
    assert p.loan_ids == ("A", "B")
    assert p["A"].balance.tolist() == [3, 0]


def test_blank_rows_dropped(tmp_path):
    rows = loan_rows("A", [2, 1])
    rows.insert(1, ",,,,,,,,")
    p = ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert p.report.rows_dropped == 1 and p.n_records == 2


def test_cents_rounding_counted(tmp_path):
    p = ingest_csv(write_panel(tmp_path / "p.csv", loan_rows("A", [10.005001, 1.25])))
    assert p["A"].balance[0] == 10.01
    assert p.report.amounts_rounded == 1


def test_write_off_beats_settlement(tmp_path):
    rows = loan_rows("A", [3, 2, 1])
    rows[1] = rows[1].replace("ACTIVE", "WOFF")
    rows[2] = rows[2].replace("ACTIVE", "SETTLE")
    p = ingest_csv(write_panel(tmp_path / "p.csv", rows))
    assert p["A"].terminal_status is TerminalStatus.WRITE_OFF


def test_empty_file(tmp_path):
    with pytest.raises(EmptyInput):
        ingest_csv(write_panel(tmp_path / "p.csv", []))


def test_round_trip(tmp_path, synth_small):
    portfolio, _ = synth_small
    path = write_csv(portfolio, tmp_path / "p.csv")
    again = ingest_csv(path)
    assert again.equals(portfolio)
    write_csv(again, tmp_path / "q.csv")
    assert (tmp_path / "q.csv").read_bytes() == path.read_bytes()


def test_round_trip_worked(tmp_path, worked):
    again = ingest_csv(write_csv(worked, tmp_path / "w.csv"))
    assert again.equals(worked)


def test_month_helpers():
    assert format_month(month_ordinal("2012-02-29")) == "2012-02"
    assert month_ordinal("2012-01") + 1 == month_ordinal("2012-02")


def test_arrays_read_only(worked):
    with pytest.raises(ValueError):
        worked.balance[0] = 1.0


def _portfolio(n):
    return Portfolio.from_histories(
        LoanHistory.from_balances([float(i), 0.0], loan_id=f"L{i:03d}") for i in range(n)
    )


def test_subsample_full():
    p = _portfolio(100)
    assert subsample_clustered(p, 100, seed=7).equals(p)


def test_subsample_deterministic_and_seeded():
    p = _portfolio(100)
    a = subsample_clustered(p, 10, seed=7)
    b = subsample_clustered(p, 10, seed=7)
    c = subsample_clustered(p, 10, seed=8)
    assert a.loan_ids == b.loan_ids
    # independent rerun of the seeded sampler
    oracle = sorted(np.random.default_rng(7).choice(100, size=10, replace=False).tolist())
    assert a.loan_ids == tuple(f"L{i:03d}" for i in oracle)
    assert set(a.loan_ids) != set(c.loan_ids)


def test_subsample_too_large():
    with pytest.raises(SampleTooLarge):
        subsample_clustered(_portfolio(5), 6, seed=0)


@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_subsample_keeps_whole_histories(n, seed):
    p = _portfolio(40)
    s = subsample_clustered(p, n, seed)
    assert s.N == n
    for h in s:
        assert h.balance.tolist() == p[h.loan_id].balance.tolist()


def test_truncate_carries_status(worked):
    t = worked.truncate(np.array([6]))
    assert t["ACC001"].T == 61
    assert t["ACC001"].terminal_status is TerminalStatus.SETTLEMENT
    assert worked["ACC001"].T == 69
