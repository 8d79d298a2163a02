from types import SimpleNamespace

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import risk_level, risk_lhs
from pacbarrier import pac
from pacbarrier.pac import (
    BracketError,
    GuaranteeMismatch,
    PacBound,
    assemble_guarantee,
    epsilon,
    residual,
)


def test_full_compression_gives_one():
    for n in (1, 7, 1000):
        assert epsilon(n, 0.01, n) == 1.0
        assert residual(1.0, n, 0.01, n) == 0.0


@pytest.mark.parametrize("k,beta,n", [(0, 0.01, 1000), (5, 0.01, 1000), (3, 1e-5, 100), (40, 0.1, 57)])
def test_root_matches_high_precision_bisection(k, beta, n):
    ref = risk_level(k, beta, n)
    assert abs(epsilon(k, beta, n) - float(ref)) < 1e-12


def test_residual_agrees_with_oracle_evaluation():
    k, beta, n = 4, 0.05, 300
    for e in (0.02, 0.1, 0.5):
        with mp.workdps(40):
            ref = float(risk_lhs(e, k, beta, n) - 1)
        assert residual(e, k, beta, n) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 400), frac=st.floats(0, 1), beta=st.floats(1e-8, 0.5))
def test_root_in_range_with_small_residual(n, frac, beta):
    k = int(round(frac * n))
    e = epsilon(k, beta, n)
    assert k / n <= e <= 1.0
    if k < n and e < 1 - 1e-6:
        assert abs(residual(e, k, beta, n)) <= 1e-9


def test_root_next_to_one_is_a_sign_change_neighbour():
    # here one double spacing moves the residual by more than 1e-9, so the
    # best possible answer is one side of the sign change
    e = epsilon(0, 1e-8, 1)
    below, above = np.nextafter(e, 0), np.nextafter(e, 2)
    assert residual(below, 0, 1e-8, 1) <= 0 <= residual(above, 0, 1e-8, 1)
    assert abs(e - float(risk_level(0, 1e-8, 1))) < 1e-15


def test_monotone_in_k_and_n():
    ks = [0, 1, 3, 10]
    ns = [20, 50, 200]
    for beta in (1e-4, 0.05):
        table = {(k, n): epsilon(k, beta, n) for k in ks for n in ns}
        for n in ns:
            vals = [table[k, n] for k in ks]
            assert all(a <= b for a, b in zip(vals, vals[1:]))
        for k in ks:
            vals = [table[k, n] for n in ns]
            assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_large_sample_count_stays_finite():
    e = epsilon(10, 1e-3, 200_000)
    assert 10 / 200_000 < e < 1e-3
    assert abs(residual(e, 10, 1e-3, 200_000)) < 1e-9


def test_argument_validation():
    with pytest.raises(ValueError):
        epsilon(-1, 0.1, 10)
    with pytest.raises(ValueError):
        epsilon(11, 0.1, 10)
    with pytest.raises(ValueError):
        epsilon(1, 1.0, 10)
    with pytest.raises(ValueError):
        epsilon(0, 0.1, 0)


def test_several_sign_changes_are_reported(monkeypatch):
    # a cubic with three roots inside the bracket
    monkeypatch.setattr(pac, "log_lhs", lambda e, k, b, n, terms=None: (e - 0.3) * (e - 0.6) * (e - 0.8))
    with pytest.raises(BracketError) as info:
        epsilon(0, 0.1, 10)
    assert len(info.value.brackets) == 3


def _result(k, success=True):
    return SimpleNamespace(success=success, compression=SimpleNamespace(indices=list(range(k))),
                           d_used=0.01, constants={"asymptotic": True})


def test_guarantee_statement():
    bound = PacBound.compute(2, 0.01, 1000)
    g = assemble_guarantee(_result(2), bound)
    assert "1 - 0.01" in g.text and f"{bound.epsilon:.5f}" in g.text
    assert any("asymptotic" in c for c in g.caveats)
    assert g.to_dict()["bound"]["k"] == 2
    with pytest.raises(GuaranteeMismatch):
        assemble_guarantee(_result(3), bound)
    with pytest.raises(GuaranteeMismatch):
        assemble_guarantee(_result(2, success=False), bound)


def test_vacuous_bound_is_flagged():
    bound = PacBound.compute(5, 0.1, 5)
    assert bound.vacuous and bound.epsilon == 1.0
    g = assemble_guarantee(_result(5), bound)
    assert any("vacuous" in c for c in g.caveats)


def test_bound_rejects_inconsistent_epsilon():
    with pytest.raises(ValueError):
        PacBound(5, 0.1, 100, 0.01)
