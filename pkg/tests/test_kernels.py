import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truend import LoanHistory, Portfolio, TzbParams, assess
from truend import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")

loans = st.lists(
    st.lists(st.one_of(st.just(0.0), st.floats(0, 5000).map(lambda x: round(x, 2))), min_size=1, max_size=30),
    min_size=1, max_size=15,
)


def _portfolio(balance_lists):
    return Portfolio.from_histories(
        LoanHistory.from_balances(b, loan_id=f"L{i:03d}") for i, b in enumerate(balance_lists)
    )


def _scan(p, backend, b, tau, min_len):
    with _kernels.use_backend(backend):
        return _kernels.scan_tails(p.balance, p.offsets, b, tau, min_len)


@needs_numba
@given(loans, st.floats(0, 5000), st.integers(1, 8), st.integers(1, 4))
def test_backends_agree_with_reference(balance_lists, b, tau, min_len):
    p = _portfolio(balance_lists)
    nb = _scan(p, "numba", b, tau, min_len)
    np_ = _scan(p, "numpy", b, tau, min_len)
    for x, y in zip(nb[:2] + nb[4:], np_[:2] + np_[4:]):
        assert np.array_equal(x, y)
    np.testing.assert_allclose(nb[2], np_[2], rtol=1e-12, equal_nan=True)
    np.testing.assert_allclose(nb[3], np_[3], rtol=1e-12)
    end_local, is_tzb, m1, m2, short = nb
    for i, h in enumerate(p):
        ref = assess(h, TzbParams(b=b, tau=tau, min_len=min_len))
        assert is_tzb[i] == ref.is_tzb
        assert end_local[i] + 1 == ref.true_end
        assert m2[i] == pytest.approx(ref.m2, rel=1e-12)
        if ref.is_tzb:
            assert m1[i] == pytest.approx(ref.m1, rel=1e-12, abs=1e-12)
        else:
            assert np.isnan(m1[i])


@needs_numba
def test_thread_count_does_not_change_results(synth_small):
    p, _ = synth_small
    ref = _scan(p, "numba", 300, 6, 1)
    try:
        for n in (1, 2, 8):
            _kernels.set_threads(n)
            out = _scan(p, "numba", 300, 6, 1)
            for x, y in zip(ref, out):
                assert np.array_equal(x, y, equal_nan=True)
    finally:
        _kernels.set_threads(_kernels.numba.config.NUMBA_NUM_THREADS)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def test_set_threads_validates():
    with pytest.raises(ValueError):
        _kernels.set_threads(0)


def test_env_flag_selects_numpy():
    import os
    import subprocess
    import sys
    code = "from truend import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, TRUEND_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "numpy"
