"""End-to-end acceptance checks, each at its stated tolerance.

Every check records a PASS/FAIL line that is printed in the terminal
summary, then asserts.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import record
from oracles import coalescence_mean, pair_meeting_means
from smallworld.bigworld import partial_green, return_probabilities
from smallworld.coalesce import ExperimentPlan, count_law_at, kingman_pmf, sample_coalescing, spread_sites
from smallworld.green import beta_comparison_scan, solve_bigworld_green
from smallworld.spectral import cheeger_lower_bound, isoperimetric_exact, mixing_profile, spectral_gap
from smallworld.stats import (
    EmpiricalDistribution,
    empirical_laplace,
    ks_distance,
    laplace_limit,
    limit_law_hitting,
    limit_law_meeting,
    total_variation,
)
from smallworld.topology import TorusSpec, sample_small_world
from smallworld.walk import WalkKernel, distant_site, run_walk_experiment

pytestmark = pytest.mark.acceptance

# shared setting of the meeting/hitting checks
D, L, BETA, N = 1, 512, 0.3, 10_000
SPEC = TorusSpec(D, L)


@pytest.fixture(scope="module")
def green():
    return solve_bigworld_green(D, BETA)


@pytest.fixture(scope="module")
def distant_meeting():
    kernel = WalkKernel.simple(SPEC, BETA)
    far = SPEC.encode(distant_site(SPEC))
    t0 = time.perf_counter()
    batch = run_walk_experiment("meet", SPEC, kernel, np.full(N, far), np.zeros(N, np.int64), N, 2024)
    return batch, time.perf_counter() - t0


def test_01_kingman_exactness():
    t0 = time.perf_counter()
    err = 0.0
    for n in range(1, 13):
        Q = np.zeros((n, n))
        for k in range(2, n + 1):
            Q[k - 1, k - 1] = -k * (k - 1) / 2
            Q[k - 1, k - 2] = k * (k - 1) / 2
        for t in (0.25, 1.0, 4.0):
            ref = expm(Q * t)[n - 1]
            for k in range(1, n + 1):
                err = max(err, abs(kingman_pmf(n, k, t) - ref[k - 1]))
    dt = time.perf_counter() - t0
    ok = err <= 1e-8 and dt < 10
    record("1 kingman", ok, f"max abs error {err:.2e} (<= 1e-8), {dt:.2f}s")
    assert ok


def test_02_green_cross_validation():
    t0 = time.perf_counter()
    lines, ok = [], True
    for beta in (0.3, 0.5, 0.7):
        fp = solve_bigworld_green(1, beta, dp_n0=0).G_bigworld
        gs = partial_green(return_probabilities(TorusSpec(1, 1), beta, 40))
        rel = abs(fp - gs.estimate) / gs.estimate
        lb = 1 / (1 - beta**2)
        this = fp > gs.lower_bound and rel <= 0.02 and fp >= lb
        ok &= this
        lines.append(f"beta={beta}: G_B={fp:.5f} DP40={gs.lower_bound:.5f} rel={rel:.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    record("2 green", ok, "; ".join(lines) + f", {dt:.1f}s")
    assert ok


def test_03_beta_sign_change_d3():
    t0 = time.perf_counter()
    scan = beta_comparison_scan(3, [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95])
    dt = time.perf_counter() - t0
    first, last = scan.rows[0][3], scan.rows[-1][3]
    ok = first > 0 and last < 0 and scan.bracket is not None and dt < 300
    record(
        "3 beta-sign",
        ok,
        f"diff(0.05)={first:+.4f} diff(0.95)={last:+.4f} crossing in {scan.bracket} at ~{scan.crossing:.4f}, {dt:.1f}s",
    )
    assert ok


def test_04_meeting_distant(green, distant_meeting):
    batch, dt = distant_meeting
    emp = EmpiricalDistribution.from_samples(batch.rescaled, batch.censored)
    ks = ks_distance(emp, limit_law_meeting(green, distant=True))
    ok = ks <= 0.05 and emp.censored_fraction < 1e-3 and dt < 600
    record("4 meeting", ok, f"KS={ks:.4f} (<= 0.05), censored={emp.censored_fraction:.1e}, {dt:.1f}s")
    assert ok


def test_05_atom_at_origin(green):
    kernel = WalkKernel.simple(SPEC, BETA)
    t0 = time.perf_counter()
    batch = run_walk_experiment("meet", SPEC, kernel, np.zeros(N, np.int64), np.zeros(N, np.int64), N, 2025)
    dt = time.perf_counter() - t0
    emp = EmpiricalDistribution.from_samples(batch.rescaled, batch.censored)
    theta = green.G_bigworld_even
    target = math.exp(-0.02 / theta) / theta
    got = float(emp.survival(0.02))
    ok = abs(got - target) <= 0.05 and emp.censored_fraction < 1e-3 and dt < 600
    record("5 atom", ok, f"survival(0.02)={got:.4f}, target {target:.4f} +- 0.05, {dt:.1f}s")
    assert ok


def test_06_hitting_vs_meeting(green, distant_meeting):
    kernel = WalkKernel.simple(SPEC, BETA)
    far = SPEC.encode(distant_site(SPEC))
    t0 = time.perf_counter()
    hit = run_walk_experiment("hit", SPEC, kernel, np.full(N, far), None, N, 2026)
    dt = time.perf_counter() - t0
    emp = EmpiricalDistribution.from_samples(hit.rescaled, hit.censored)
    ks = ks_distance(emp, limit_law_hitting(green, distant=True))
    ratio = hit.rescaled.mean() / distant_meeting[0].rescaled.mean()
    ok = ks <= 0.05 and 1.8 <= ratio <= 2.2 and emp.censored_fraction < 1e-3 and dt < 600
    record("6 hitting", ok, f"KS={ks:.4f} (<= 0.05), mean ratio={ratio:.3f} in [1.8, 2.2], {dt:.1f}s")
    assert ok


def test_07_coalescent_limit(green):
    spec = TorusSpec(1, 256)
    kernel = WalkKernel.simple(spec, BETA)
    g = solve_bigworld_green(1, BETA)
    plan = ExperimentPlan.build(spec, 4, g.G_bigworld_even, green_source="fixed point")
    sites = spread_sites(spec, 4, plan.h_L)
    S = sample_small_world(spec, 256)
    t0 = time.perf_counter()
    emp = count_law_at(S, kernel, sites, plan, 1.0, N, 2027)
    dt = time.perf_counter() - t0
    ref = np.array([kingman_pmf(4, k, 1.0) for k in range(1, 5)])
    tv = total_variation(emp, ref)
    ok = tv <= 0.07 and dt < 900
    record("7 coalescent", ok, f"TV={tv:.4f} (<= 0.07), quenched graph, {dt:.1f}s")
    assert ok


def test_08_small_instance_oracles():
    t0 = time.perf_counter()
    reps = 100_000
    spec = TorusSpec(1, 2)
    S = sample_small_world(spec, 0)
    kernel = WalkKernel.simple(spec, 0.0)
    ref_m = pair_meeting_means(spec, S.matching, 0.0)[2, 0]
    raw = run_walk_experiment("meet", spec, kernel, np.full(reps, 2), np.zeros(reps, np.int64), reps, 2028, graph=S).raw
    z_m = abs(raw.mean() - ref_m) / (raw.std(ddof=1) / math.sqrt(reps))

    spec8 = TorusSpec(1, 4)
    S8 = sample_small_world(spec8, 0)
    sites = spread_sites(spec8, 3)
    ref_c = coalescence_mean(spec8, S8.matching, 0.0, [spec8.encode(s) for s in sites])
    x = sample_coalescing(S8, WalkKernel.simple(spec8, 0.0), sites, None, 2029, replicas=reps).full_coalescence()
    z_c = abs(x.mean() - ref_c) / (x.std(ddof=1) / math.sqrt(reps))
    dt = time.perf_counter() - t0
    ok = z_m <= 3 and z_c <= 3 and dt < 120
    record(
        "8 oracles",
        ok,
        f"meeting mean {raw.mean():.4f} vs {ref_m:.4f} ({z_m:.2f} se); "
        f"coalescence mean {x.mean():.4f} vs {ref_c:.4f} ({z_c:.2f} se), {dt:.1f}s",
    )
    assert ok


def test_09_spectral_suite():
    t0 = time.perf_counter()
    cheeger_fail = mix_fail = 0
    worst_r2, worst_margin = 1.0, math.inf
    for i in range(200):
        Lx = 2 + i % 11
        spec = TorusSpec(1, Lx)
        S = sample_small_world(spec, 10_000 + i)
        kernel = WalkKernel.simple(spec, BETA, lazy=True)
        gap = spectral_gap(S, kernel)
        iota = isoperimetric_exact(S)
        cl = cheeger_lower_bound(iota, kernel.p_min)
        cheeger_fail += cl > 1 - gap.lambda1
        # grid long enough for the slowest mode to dominate the second half
        t_grid = np.linspace(0.0, 30.0 / (1 - gap.lambda1), 60)
        prof = mixing_profile(S, kernel, t_grid)
        need = 1 - math.exp(-cl)
        mix_fail += not (prof.r2 >= 0.99 and prof.gamma >= need)
        worst_r2 = min(worst_r2, prof.r2)
        worst_margin = min(worst_margin, prof.gamma - need)
    dt = time.perf_counter() - t0
    ok = cheeger_fail == 0 and mix_fail == 0 and dt < 300
    record(
        "9 spectral",
        ok,
        f"Cheeger violations {cheeger_fail}/200, mixing failures {mix_fail}/200, "
        f"min R^2={worst_r2:.4f}, min gamma margin={worst_margin:.3g}, {dt:.1f}s",
    )
    assert ok


def test_10_laplace_limit(green, distant_meeting):
    t0 = time.perf_counter()
    batch, _ = distant_meeting
    emp = EmpiricalDistribution.from_samples(batch.rescaled, batch.censored)
    theta = green.G_bigworld_even
    errs = []
    for lam in (0.5, 1.0, 2.0):
        errs.append(abs(empirical_laplace(emp, lam)[0] - laplace_limit(theta, lam)))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 0.03 and dt < 60
    record("10 laplace", ok, "errors " + ", ".join(f"{e:.4f}" for e in errs) + f" (<= 0.03), {dt:.2f}s")
    assert ok
