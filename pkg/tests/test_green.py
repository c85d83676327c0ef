import math

import numpy as np
import pytest
from scipy import optimize, special

from oracles import lattice_return_probs
from smallworld.bigworld import partial_green, return_probabilities
from smallworld.errors import Divergent, InvalidConfig
from smallworld.green import (
    beta_comparison_scan,
    build_phi_lattice,
    green_lattice,
    phi_free_product,
    phi_z2,
    solve_bigworld_green,
)
from smallworld.topology import TorusSpec

# closed form for the simple walk on Z^3 at z = 1
WATSON = (
    math.sqrt(6) / (32 * math.pi**3)
    * special.gamma(1 / 24) * special.gamma(5 / 24) * special.gamma(7 / 24) * special.gamma(11 / 24)
)


def test_watson_value():
    assert green_lattice(3, 1.0) == pytest.approx(WATSON, rel=1e-9)
    assert WATSON == pytest.approx(1.516386059, abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_lattice_generating_function_matches_series(d):
    z = 0.45
    p = lattice_return_probs(d, 60)
    series = float(np.sum(p * z ** np.arange(p.size)))
    assert green_lattice(d, z) == pytest.approx(series, rel=1e-10)


def test_lattice_domain():
    assert green_lattice(3, 0.0) == 1.0
    with pytest.raises(Divergent):
        green_lattice(2, 1.0)
    with pytest.raises(InvalidConfig):
        green_lattice(3, 1.5)


def test_phi_z2_closed_form():
    # flip walk on two points: Ghat(z) = 1 / (1 - z^2)
    for z in (0.1, 0.5, 0.9):
        g = 1.0 / (1.0 - z * z)
        assert phi_z2(z * g) == pytest.approx(g, rel=1e-13)


@pytest.mark.parametrize("d", [1, 3, 4])
def test_phi_inverts_green(d):
    phi = build_phi_lattice(d)
    for z in (0.2, 0.7, 0.95, 0.999):
        g = green_lattice(d, z)
        assert phi(z * g) == pytest.approx(g, rel=1e-9)


def test_phi_table_domain():
    phi = build_phi_lattice(3)
    z, s, g = phi.table()
    assert z[-1] == 1.0 and s[-1] == pytest.approx(WATSON, rel=1e-9)
    assert np.all(np.diff(s) > 0)


def test_free_product_phi_composes():
    # Phi of the big world evaluated at z G_B(z) returns G_B(z) from the DP
    beta, z = 0.5, 0.5
    tab = return_probabilities(TorusSpec(1, 1), beta, 40)
    gz = float(np.sum(tab.probs * z ** np.arange(tab.probs.size)))
    assert phi_free_product(build_phi_lattice(1), beta, z * gz) == pytest.approx(gz, rel=1e-10)


def _explicit_d1(beta):
    # t = (1 + sqrt(1 + 4 beta^2 t^2)) / 2 + sqrt(1 + (1 - beta)^2 t^2) - 1
    f = lambda t: 0.5 * (1 + math.sqrt(1 + 4 * beta**2 * t * t)) + math.sqrt(1 + (1 - beta) ** 2 * t * t) - 1 - t
    lo = max(1.0, 1.0 / (1 - beta**2))
    hi = lo
    while f(hi) >= 0:
        hi *= 1.5
    return optimize.brentq(f, lo, hi, xtol=1e-14)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_d1_fixed_point(beta):
    rep = solve_bigworld_green(1, beta, dp_n0=12)
    assert rep.G_bigworld == pytest.approx(_explicit_d1(beta), rel=1e-12)
    assert rep.G_bigworld >= 1 / (1 - beta**2)
    assert rep.G_bigworld > rep.dp_lower
    assert rep.lower_bound_check
    assert rep.G_bigworld_even == rep.G_bigworld / 2


def test_d1_beta_half_value():
    g = solve_bigworld_green(1, 0.5, dp_n0=0).G_bigworld
    assert g == pytest.approx(2.166, abs=0.01)


def test_dp_gap_shrinks():
    g = solve_bigworld_green(1, 0.5, dp_n0=0).G_bigworld
    gaps = [g - partial_green(return_probabilities(TorusSpec(1, 1), 0.5, n)).lower_bound for n in (8, 16, 24)]
    assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))


def test_d3_fixed_point_above_dp():
    rep = solve_bigworld_green(3, 0.5, dp_n0=8)
    assert rep.G_bigworld > rep.dp_lower
    assert rep.G_torus_limit == pytest.approx(WATSON, rel=1e-9)
    assert rep.residual < 1e-12


def test_small_beta_tends_to_lattice():
    # the approach is like sqrt(beta), from below
    gs = [solve_bigworld_green(3, b, dp_n0=0).G_bigworld for b in (1e-4, 1e-6, 1e-8)]
    assert gs[0] < gs[1] < gs[2] < WATSON
    assert gs[2] == pytest.approx(WATSON, rel=1e-3)
    r = (WATSON - gs[0]) / (WATSON - gs[1])
    assert r == pytest.approx(10.0, rel=0.1)


def test_even_dimension_direct_inversion():
    rep = solve_bigworld_green(4, 0.5, dp_n0=4)
    assert rep.G_bigworld > rep.dp_lower
    assert "direct" in rep.methods["phi"]


def test_report_json():
    rep = solve_bigworld_green(1, 0.4, dp_n0=6)
    d = rep.to_dict()
    assert d["G_torus_limit"] is None
    assert '"G_bigworld"' in rep.to_json()


def test_domain_errors():
    with pytest.raises(Divergent):
        solve_bigworld_green(2, 0.5)
    with pytest.raises(InvalidConfig):
        solve_bigworld_green(1, 0.0)
    with pytest.raises(InvalidConfig):
        beta_comparison_scan(1, [0.1, 0.9])


def test_beta_scan_coarse():
    scan = beta_comparison_scan(3, [0.05, 0.5, 0.95], refine=False)
    assert scan.sign_ok
    lo, hi = scan.bracket
    assert lo < scan.crossing < hi
    assert scan.to_csv().startswith("beta,G_lattice,G_bigworld,diff\n")
