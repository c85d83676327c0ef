import itertools
from fractions import Fraction

import numpy as np
import pytest

from smallworld.errors import InvalidConfig, TooLarge
from smallworld.spectral import (
    adjacency_counts,
    cheeger_lower_bound,
    configuration_multigraph,
    isoperimetric_exact,
    iso_survey,
    mixing_profile,
    spectral_gap,
    spectral_report,
    transition_matrix,
)
from smallworld.topology import SmallWorldGraph, TorusSpec, sample_small_world
from smallworld.walk import WalkKernel


def brute_iso(A):
    n = A.shape[0]
    best = None
    for k in range(1, n // 2 + 1):
        for sub in itertools.combinations(range(n), k):
            inside = np.zeros(n, bool)
            inside[list(sub)] = True
            cut = int(A[np.ix_(inside, ~inside)].sum())
            val = Fraction(cut, k)
            best = val if best is None or val < best else best
    return best


def test_iso_cycle():
    n = 10
    A = np.zeros((n, n), int)
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1
    assert isoperimetric_exact(A) == Fraction(2, 5)


@pytest.mark.parametrize("L,seed", [(3, 0), (4, 1), (5, 2), (5, 3)])
def test_iso_matches_brute_force(L, seed):
    S = sample_small_world(TorusSpec(1, L), seed)
    A = adjacency_counts(S)
    assert isoperimetric_exact(S) == brute_iso(A)


def test_iso_multigraph_counts_parallel_edges():
    # 4-cycle with matching along the cycle edges 0-1, 2-3: those become double
    S = SmallWorldGraph(TorusSpec(1, 2), [1, 0, 3, 2])
    A = adjacency_counts(S)
    assert A[0, 1] == 2 and A[1, 2] == 1
    assert isoperimetric_exact(S) == Fraction(1, 1)


def test_iso_limits():
    with pytest.raises(TooLarge):
        isoperimetric_exact(sample_small_world(TorusSpec(1, 13), 0))
    with pytest.raises(InvalidConfig):
        isoperimetric_exact(np.array([[0, 1], [0, 0]]))


def test_transition_matrix_stochastic():
    spec = TorusSpec(2, 3)
    S = sample_small_world(spec, 4)
    P = transition_matrix(S, WalkKernel.simple(spec, 0.3, lazy=True)).toarray()
    assert np.allclose(P.sum(axis=1), 1.0)
    assert np.allclose(P, P.T)
    assert np.allclose(np.diag(P), 0.5)


def test_gap_dense_vs_lanczos():
    spec = TorusSpec(2, 8)
    S = sample_small_world(spec, 0)
    k = WalkKernel.simple(spec, 0.3, lazy=True)
    a = spectral_gap(S, k)
    b = spectral_gap(S, k, dense_max=0)
    assert a.method == "dense" and b.method == "lanczos"
    assert a.lambda1 == pytest.approx(b.lambda1, abs=1e-8)
    assert a.lambda_min == pytest.approx(b.lambda_min, abs=1e-8)
    assert a.lambda_min >= -1e-12


def test_cheeger_holds_on_examples():
    for L in range(2, 9):
        spec = TorusSpec(1, L)
        S = sample_small_world(spec, L)
        k = WalkKernel.simple(spec, 0.3, lazy=True)
        iota = isoperimetric_exact(S)
        assert cheeger_lower_bound(iota, k.p_min) <= 1 - spectral_gap(S, k).lambda1


def test_mixing_rate_is_gap():
    spec = TorusSpec(1, 8)
    S = sample_small_world(spec, 3)
    k = WalkKernel.simple(spec, 0.3, lazy=True)
    lam1 = spectral_gap(S, k).lambda1
    t = np.linspace(0, 30 / (1 - lam1), 40)
    prof = mixing_profile(S, k, t)
    assert prof.deviation[0] == pytest.approx(1 - 1 / spec.n_sites)
    assert np.all(np.diff(prof.deviation) <= 1e-15)
    assert prof.gamma == pytest.approx(1 - lam1, rel=0.02)
    assert prof.r2 > 0.99


def test_mixing_too_large():
    spec = TorusSpec(2, 40)
    S = sample_small_world(spec, 0)
    with pytest.raises(TooLarge):
        mixing_profile(S, WalkKernel.simple(spec, 0.3), [1.0])


def test_configuration_multigraph():
    A = configuration_multigraph(10, 3, seed=1)
    deg = A.sum(axis=1) + np.diag(A)
    assert np.all(deg == 3)
    B = configuration_multigraph(10, 3, seed=1, h=2)
    assert B.shape == (11, 11)
    assert B[10].sum() + B[10, 10] == 2


def test_survey_and_report():
    res = iso_survey(TorusSpec(1, 4), 5, 0.1, seed=3)
    assert len(res.rows) == 5 and 0 <= res.fraction <= 1
    assert res.to_csv().startswith("sample,iota,lambda1,cheeger_lower\n")
    prox = iso_survey(TorusSpec(1, 20), 3, 0.01, seed=3, proxy=True)
    assert prox.proxy and prox.rows[0][1] is None
    spec = TorusSpec(1, 5)
    rep = spectral_report(sample_small_world(spec, 1), WalkKernel.simple(spec, 0.3, lazy=True), np.linspace(0, 60, 30))
    d = rep.to_dict()
    assert d["iota_exact"] is not None and d["cheeger_lower"] <= d["gap"]
