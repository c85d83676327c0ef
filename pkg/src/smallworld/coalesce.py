"""Coalescing random walks on a small world and the Kingman reference law."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import seeding
from .errors import InvalidConfig, PrecisionError
from .topology import SmallWorldGraph, TorusSpec, euclidean_distance, sample_small_world
from .walk import CONTINUOUS, DISCRETE, WalkKernel, _kernel_arrays, horizon_default, separation_threshold

KINGMAN_MAX_N = 40
_FLOAT_MAX_N = 25


def _kingman_terms(n: int, k: int, t: float):
    # q_{n,k}(t) = sum_{j=k}^n exp(-t C(j,2)) (2j-1) (-1)^{j-k} k^(j-1) n_[j] / (k! (j-k)! n^(j))
    # with rising powers ^ and falling powers _; magnitudes built in log space
    lg = math.lgamma
    for j in range(k, n + 1):
        log_mag = (
            -t * j * (j - 1) / 2.0
            + math.log(2 * j - 1)
            + (lg(k + j - 1) - lg(k))  # k rising j-1
            + (lg(n + 1) - lg(n - j + 1))  # n falling j
            - lg(k + 1)
            - lg(j - k + 1)
            - (lg(n + j) - lg(n))  # n rising j
        )
        yield (-1) ** (j - k), log_mag


def _kingman_mp(n: int, k: int, t: float) -> float:
    try:
        import mpmath
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise PrecisionError(f"n={n} needs extended precision and mpmath is unavailable") from exc
    with mpmath.workdps(60):
        total = mpmath.mpf(0)
        for j in range(k, n + 1):
            term = (
                mpmath.exp(-mpmath.mpf(t) * j * (j - 1) / 2)
                * (2 * j - 1)
                * mpmath.rf(k, j - 1)
                * mpmath.ff(n, j)
                / (mpmath.factorial(k) * mpmath.factorial(j - k) * mpmath.rf(n, j))
            )
            total += term if (j - k) % 2 == 0 else -term
        return float(total)


def kingman_pmf(n: int, k: int, t: float) -> float:
    """``P(D_t = k)`` for the Kingman pure-death chain started at ``n``.

    Up to ``n = 25`` the alternating sum is accumulated in double precision
    with ``math.fsum``; beyond that it is evaluated with mpmath.
    """
    if not (1 <= k <= n):
        raise InvalidConfig(f"need 1 <= k <= n, got n={n}, k={k}")
    if n > KINGMAN_MAX_N:
        raise PrecisionError(f"n={n} exceeds {KINGMAN_MAX_N}: alternating sum cancels catastrophically")
    if t < 0:
        raise InvalidConfig("t must be nonnegative")
    if t == 0:
        return 1.0 if k == n else 0.0
    if n > _FLOAT_MAX_N:
        val = _kingman_mp(n, k, t)
    else:
        val = math.fsum(s * math.exp(lm) for s, lm in _kingman_terms(n, k, t))
    if -1e-9 <= val < 0.0:
        val = 0.0
    elif 1.0 < val <= 1.0 + 1e-9:
        val = 1.0
    if not 0.0 <= val <= 1.0:
        raise PrecisionError(f"q_{{{n},{k}}}({t}) = {val} left [0, 1]")
    return val


def kingman_row(n: int, t: float) -> np.ndarray:
    """``(q_{n,1}(t), ..., q_{n,n}(t))``."""
    return np.array([kingman_pmf(n, k, t) for k in range(1, n + 1)])


@dataclass
class ExperimentPlan:
    """Parameters of a coalescence experiment.

    ``ip_ratio`` is ``M^(4 h_L) / (2L)^d``; it is enforced only when
    ``ip_threshold`` is set.
    """

    n: int
    h_L: float
    s_L: float
    t_grid: tuple = (1.0,)
    green_source: str = "unspecified"
    ip_ratio: float = float("nan")
    ip_threshold: float | None = None

    @classmethod
    def build(
        cls,
        spec: TorusSpec,
        n: int,
        G_even: float,
        *,
        t_grid=(1.0,),
        h_L: float | None = None,
        green_source: str = "unspecified",
        ip_threshold: float | None = None,
    ) -> "ExperimentPlan":
        if n < 1:
            raise InvalidConfig("n must be positive")
        h = separation_threshold(spec.L) if h_L is None else h_L
        if h < separation_threshold(spec.L):
            raise InvalidConfig(f"h_L={h} below (log log L)^2 threshold {separation_threshold(spec.L)}")
        log_ratio = 4 * h * math.log(spec.M) - spec.d * math.log(spec.side)
        ratio = math.exp(log_ratio) if log_ratio < 700 else math.inf
        if ip_threshold is not None and ratio > ip_threshold:
            raise InvalidConfig(f"M^(4h_L)/(2L)^d = {ratio:.3g} exceeds threshold {ip_threshold}")
        return cls(n, h, spec.n_sites * G_even, tuple(float(t) for t in t_grid), green_source, ratio, ip_threshold)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "h_L": self.h_L,
            "s_L": self.s_L,
            "t_grid": list(self.t_grid),
            "green_source": self.green_source,
            "ip_ratio": self.ip_ratio if math.isfinite(self.ip_ratio) else None,
            "ip_threshold": self.ip_threshold,
        }
        return out


def spread_sites(spec: TorusSpec, n: int, h_L: float | None = None) -> list:
    """``n`` sites evenly spaced along the first axis."""
    h = separation_threshold(spec.L) if h_L is None else h_L
    gap = spec.side // n if n else 0
    if n > 1 and gap < h:
        raise InvalidConfig(f"cannot place {n} sites with separation >= {h} on side {spec.side}")
    return [spec.canonical((i * gap,) + (0,) * (spec.d - 1)) for i in range(n)]


def check_separation(spec: TorusSpec, sites, h_L: float) -> None:
    idx = [spec.encode(s) for s in sites]
    if len(set(idx)) != len(idx):
        raise InvalidConfig("initial sites must be distinct")
    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            if euclidean_distance(spec, sites[i], sites[j]) < h_L:
                raise InvalidConfig(f"sites {sites[i]} and {sites[j]} closer than h_L={h_L}")


@numba.njit(cache=True)
def _jump(x, nbr, cum, matching, beta, lazy):
    if lazy and np.random.random() < 0.5:
        return x
    if np.random.random() < beta:
        return matching[x]
    u = np.random.random()
    k = 0
    while k < cum.shape[0] - 1 and u >= cum[k]:
        k += 1
    return nbr[x, k]


@numba.njit(cache=True)
def _coalesce_one(start, occ, nbr, cum, matching, beta, lazy, continuous, t_stop):
    # returns merge times (length n - 1, inf where not reached before t_stop)
    n = start.shape[0]
    pos = start.copy()
    alive = np.ones(n, dtype=np.bool_)
    ids = np.arange(n)  # alive particle ids packed in ids[:count]
    merges = np.full(max(n - 1, 0), np.inf)
    for i in range(n):
        occ[pos[i]] = i
    count = n
    t = 0.0
    if continuous:
        while count > 1:
            t += np.random.exponential(1.0) / count
            if t > t_stop:
                break
            slot = np.random.randint(count)
            p = ids[slot]
            y = _jump(pos[p], nbr, cum, matching, beta, lazy)
            occ[pos[p]] = -1
            if occ[y] >= 0:
                alive[p] = False
                ids[slot] = ids[count - 1]
                merges[n - count] = t
                count -= 1
            else:
                occ[y] = p
                pos[p] = y
    else:
        new = np.empty(n, dtype=np.int64)
        while count > 1:
            t += 1.0
            if t > t_stop:
                break
            for s in range(count):
                new[s] = _jump(pos[ids[s]], nbr, cum, matching, beta, lazy)
            for s in range(count):
                occ[pos[ids[s]]] = -1
            keep = 0
            for s in range(count):
                p = ids[s]
                y = new[s]
                if occ[y] >= 0:
                    alive[p] = False
                else:
                    occ[y] = p
                    pos[p] = y
                    ids[keep] = p
                    keep += 1
            lost = count - keep
            for q in range(lost):
                merges[n - count + q] = t
            count = keep
    for s in range(count):
        occ[pos[ids[s]]] = -1
    return merges


@numba.njit(cache=True)
def _coalesce_batch(starts, seeds, nbr, cum, matchings, beta, lazy, continuous, t_stop, n_sites):
    reps = seeds.shape[0]
    n = starts.shape[1]
    out = np.empty((reps, max(n - 1, 0)))
    occ = np.full(n_sites, -1, dtype=np.int64)
    single = matchings.shape[0] == 1
    for r in range(reps):
        np.random.seed(seeds[r])
        mt = matchings[0] if single else matchings[r]
        out[r] = _coalesce_one(starts[r], occ, nbr, cum, mt, beta, lazy, continuous, t_stop)
    return out


@dataclass
class CoalescenceBatch:
    """Merge times per replica; ``merge_times[r, i]`` is when the count
    dropped from ``n - i`` to ``n - i - 1`` (``inf`` if not before the stop
    time)."""

    spec: TorusSpec
    n: int
    merge_times: np.ndarray
    t_stop: float
    walk_seeds: np.ndarray
    graph_seeds: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return int(self.walk_seeds.size)

    def count_at(self, t: float) -> np.ndarray:
        if t > self.t_stop:
            raise InvalidConfig(f"t={t} beyond simulated range {self.t_stop}")
        return self.n - np.count_nonzero(self.merge_times <= t, axis=1)

    def full_coalescence(self) -> np.ndarray:
        if self.n == 1:
            return np.zeros(self.replicas)
        return self.merge_times[:, -1]

    @property
    def censored(self) -> np.ndarray:
        return ~np.isfinite(self.full_coalescence())

    def to_csv(self) -> str:
        rows = ["replica,event_time,count\n"]
        for r in range(self.replicas):
            rows.append(f"{r},0.0,{self.n}\n")
            for i, tm in enumerate(self.merge_times[r]):
                if np.isfinite(tm):
                    rows.append(f"{r},{float(tm)!r},{self.n - i - 1}\n")
        return "".join(rows)


def sample_coalescing(
    S: SmallWorldGraph | None,
    kernel: WalkKernel,
    sites,
    plan: ExperimentPlan | None,
    seed: int,
    *,
    replicas: int = 1,
    spec: TorusSpec | None = None,
    graph_seed: int | None = None,
    horizon: float | None = None,
    time_model: str = CONTINUOUS,
    check: bool = True,
) -> CoalescenceBatch:
    """Run coalescing walks from ``sites`` until one particle is left or the
    horizon is reached.

    The graph is fixed when ``S`` or ``graph_seed`` is given (quenched);
    otherwise every replica gets a fresh graph from ``spec`` (annealed).
    """
    if S is None and spec is None:
        raise InvalidConfig("need a graph or a spec")
    spec = S.spec if S is not None else spec
    if time_model not in (CONTINUOUS, DISCRETE):
        raise InvalidConfig(f"unknown time model {time_model!r}")
    sites = [spec.canonical(s) for s in sites]
    if check:
        check_separation(spec, sites, plan.h_L if plan is not None else 0.0)
    horizon = horizon_default(spec) if horizon is None else float(horizon)
    start = np.array([spec.encode(s) for s in sites], dtype=np.int64)
    nbr, cum = _kernel_arrays(spec, kernel)
    walk_seeds = seeding.replica_seeds(seed, replicas, seeding.WALK)
    quenched = S is not None or graph_seed is not None
    if quenched:
        if S is None:
            S = sample_small_world(spec, graph_seed)
        gseeds = np.full(replicas, -1 if graph_seed is None else graph_seed, dtype=np.int64)
    else:
        gseeds = seeding.replica_seeds(seed, replicas, seeding.GRAPH)
    starts = np.broadcast_to(start, (replicas, start.size)).copy()
    out = np.empty((replicas, max(start.size - 1, 0)))
    block = 2000
    for lo in range(0, replicas, block):
        hi = min(replicas, lo + block)
        if quenched:
            mats = S.matching[None, :]
        else:
            mats = np.stack([sample_small_world(spec, int(g)).matching for g in gseeds[lo:hi]])
        out[lo:hi] = _coalesce_batch(
            starts[lo:hi], walk_seeds[lo:hi], nbr, cum, mats, kernel.beta, kernel.lazy,
            time_model == CONTINUOUS, horizon, spec.n_sites,
        )
    meta = {"quenched": quenched, "time_model": time_model, "horizon": horizon}
    if plan is not None:
        meta["plan"] = plan.to_dict()
    return CoalescenceBatch(spec, start.size, out, horizon, walk_seeds, gseeds, meta)


def count_law_at(
    S: SmallWorldGraph | None,
    kernel: WalkKernel,
    sites,
    plan: ExperimentPlan,
    t: float,
    replicas: int,
    seed: int,
    **kw,
) -> np.ndarray:
    """Empirical law ``(P(|xi| = 1), ..., P(|xi| = n))`` at time ``s_L * t``."""
    stop = plan.s_L * float(t)
    batch = sample_coalescing(S, kernel, sites, plan, seed, replicas=replicas, horizon=stop, **kw)
    counts = batch.count_at(stop)
    return np.bincount(counts - 1, minlength=batch.n).astype(np.float64) / replicas


def coalescence_summary(plan: ExperimentPlan, batch: CoalescenceBatch, delta: float = 0.05) -> dict:
    from .stats import dkw_epsilon, total_variation

    rows = []
    for t in plan.t_grid:
        stop = plan.s_L * t
        counts = batch.count_at(stop)
        emp = np.bincount(counts - 1, minlength=plan.n) / batch.replicas
        ref = kingman_row(plan.n, t)
        rows.append(
            {
                "t": t,
                "empirical_pmf": emp.tolist(),
                "kingman_pmf": ref.tolist(),
                "tv_distance": total_variation(emp, ref),
            }
        )
    return {
        "n": plan.n,
        "t_grid": list(plan.t_grid),
        "empirical_pmf": [r["empirical_pmf"] for r in rows],
        "kingman_pmf": [r["kingman_pmf"] for r in rows],
        "tv_distance": [r["tv_distance"] for r in rows],
        "dkw_eps": dkw_epsilon(batch.replicas, delta),
        "plan": plan.to_dict(),
    }


def summary_json(plan: ExperimentPlan, batch: CoalescenceBatch) -> str:
    return json.dumps(coalescence_summary(plan, batch), sort_keys=True)
