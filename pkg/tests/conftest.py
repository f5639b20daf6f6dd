from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from truend import SynthParams, generate, ingest_csv

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default", max_examples=200, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# the worked-example account: periods 56..69, settled with a final 0 balance
WORKED_BALANCES = [
    6028.16, 6078.47, 7954.24, 8018.80, 8085.82, 156.47,
    163.30, 170.28, 177.26, 184.33, 191.42, 198.57, 205.73, 0.00,
]


@pytest.fixture(scope="session")
def worked_path():
    return DATA / "worked_example.csv"


@pytest.fixture(scope="session")
def worked(worked_path):
    return ingest_csv(worked_path)


@pytest.fixture(scope="session")
def synth_small():
    """2,000 loans with default generator settings."""
    return generate(SynthParams(n_loans=2000, seed=11))


@pytest.fixture(scope="session")
def synth_mixed():
    """Some corrupted loans lose their terminal flag, so scopes differ."""
    return generate(SynthParams(n_loans=1500, seed=5, unflagged_fraction=0.3))


def write_panel(path, rows, header="LoanID,Date,Balance,Principal,Instalment,Receipt,InterestRate,InDefault,Status"):
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return path


def loan_rows(loan_id, balances, first="2020-01", status="ACTIVE"):
    y, m = map(int, first.split("-"))
    rows = []
    for k, b in enumerate(balances):
        mm = m - 1 + k
        s = status if k == len(balances) - 1 else "ACTIVE"
        rows.append(f"{loan_id},{y + mm // 12}-{mm % 12 + 1:02d},{b},1000,10,10,0.1,0,{s}")
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
