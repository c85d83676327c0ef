"""Random walks on small worlds: kernels, meeting times and hitting times.

The walk moves along the long-range edge with probability ``beta`` and
according to the short-range law ``delta`` otherwise.  In continuous time
each walker jumps at rate 1; the pair is driven by one rate-2 clock whose
rings go to either walker with probability 1/2.  Meeting is checked at
jump epochs only, which is exact because positions are piecewise constant;
walkers that start together are therefore first compared after the first
jump of the pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import seeding
from .errors import InvalidConfig
from .topology import Site, SmallWorldGraph, TorusSpec, sample_small_world

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True, eq=False)
class WalkKernel:
    """Transition law ``(1 - beta) * delta + beta * long-range``.

    ``offsets``/``probs`` describe ``delta``; ``lazy`` makes the whole step
    lazy (stay put with probability 1/2), as used for spectral bounds.
    """

    beta: float
    offsets: np.ndarray
    probs: np.ndarray
    lazy: bool = False
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise InvalidConfig(f"beta must lie in [0, 1), got {self.beta}")
        offsets = np.asarray(self.offsets, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if offsets.ndim != 2 or offsets.shape[0] != probs.shape[0]:
            raise InvalidConfig("offsets and probs disagree")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidConfig("delta must be a probability distribution")
        table = {tuple(z): p for z, p in zip(offsets.tolist(), probs.tolist())}
        for z, p in table.items():
            if abs(table.get(tuple(-v for v in z), 0.0) - p) > 1e-12:
                raise InvalidConfig(f"delta is not symmetric at offset {z}")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def simple(cls, spec: TorusSpec, beta: float, *, lazy: bool = False) -> "WalkKernel":
        """Uniform law on the short-range neighbourhood of the origin."""
        offsets = spec.offsets()
        probs = np.full(len(offsets), 1.0 / len(offsets))
        name = "simple" if spec.m == 1 else f"uniform_m{spec.m}"
        return cls(beta, offsets, probs, lazy, name + ("_lazy" if lazy else ""))

    def supported_by(self, spec: TorusSpec) -> bool:
        allowed = {tuple(z) for z in spec.offsets().tolist()} | {(0,) * spec.d}
        return all(tuple(z) in allowed for z in self.offsets.tolist())

    @property
    def p_min(self) -> float:
        """Smallest transition mass carried by a single edge."""
        vals = [(1.0 - self.beta) * p for z, p in zip(self.offsets, self.probs) if np.any(z) and p > 0]
        if self.beta > 0:
            vals.append(self.beta)
        m = min(vals)
        return m / 2 if self.lazy else m


@dataclass(frozen=True)
class TimeModel:
    mode: str = CONTINUOUS

    def __post_init__(self):
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise InvalidConfig(f"unknown time model {self.mode!r}")


@dataclass
class MeetingSample:
    value: float
    rescaled: float
    start_x: Site
    start_y: Site | None
    seed: int
    graph_seed: int | None
    censored: bool = False


@dataclass
class SampleBatch:
    """Replica-ordered results of a meeting or hitting experiment."""

    experiment: str
    spec: TorusSpec
    beta: float
    raw: np.ndarray
    censored: np.ndarray
    walk_seeds: np.ndarray
    graph_seeds: np.ndarray
    start_x: np.ndarray
    start_y: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def rescaled(self) -> np.ndarray:
        return self.raw / self.spec.n_sites

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if self.censored.size else 0.0

    def to_csv(self) -> str:
        s = self.spec
        head = (
            "experiment,replica,graph_seed,walk_seed,d,L,m,beta,"
            "x0,y0,raw_time,rescaled_time,censored\n"
        )
        rows = [head]
        resc = self.rescaled
        for i in range(self.raw.size):
            x0 = ";".join(str(v) for v in self.start_x[i])
            y0 = ";".join(str(v) for v in self.start_y[i]) if self.start_y.size else ""
            rows.append(
                f"{self.experiment},{i},{int(self.graph_seeds[i])},{int(self.walk_seeds[i])},"
                f"{s.d},{s.L},{s.m},{self.beta!r},{x0},{y0},"
                f"{float(self.raw[i])!r},{float(resc[i])!r},{int(self.censored[i])}\n"
            )
        return "".join(rows)


def step_distribution(S: SmallWorldGraph, kernel: WalkKernel, x) -> dict[Site, float]:
    """One-step law from ``x``; masses on coinciding targets add up."""
    spec = S.spec
    x = spec.canonical(x)
    ix = spec.encode(x)
    out: dict[Site, float] = {}

    def put(site, w):
        if w > 0:
            out[site] = out.get(site, 0.0) + w

    scale = 0.5 if kernel.lazy else 1.0
    if kernel.lazy:
        put(x, 0.5)
    for z, p in zip(kernel.offsets, kernel.probs):
        put(spec.canonical(np.add(x, z)), scale * (1.0 - kernel.beta) * p)
    put(spec.decode(S.matching[ix]), scale * kernel.beta)
    return out


def horizon_default(spec: TorusSpec, multiplier: float = 50.0) -> float:
    return multiplier * spec.n_sites


# jitted engines ------------------------------------------------------------


@numba.njit(cache=True)
def _step(x, nbr, cum, matching, beta, lazy):
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
def _meet_one(x, y, nbr, cum, matching, beta, lazy, continuous, horizon):
    t = 0.0
    while True:
        if continuous:
            t += np.random.exponential(1.0) / 2.0
            if t > horizon:
                return horizon, True
            if np.random.random() < 0.5:
                x = _step(x, nbr, cum, matching, beta, lazy)
            else:
                y = _step(y, nbr, cum, matching, beta, lazy)
        else:
            t += 1.0
            if t > horizon:
                return horizon, True
            x = _step(x, nbr, cum, matching, beta, lazy)
            y = _step(y, nbr, cum, matching, beta, lazy)
        if x == y:
            return t, False


@numba.njit(cache=True)
def _hit_one(x, target, nbr, cum, matching, beta, lazy, continuous, horizon):
    t = 0.0
    while True:
        t += np.random.exponential(1.0) if continuous else 1.0
        if t > horizon:
            return horizon, True
        x = _step(x, nbr, cum, matching, beta, lazy)
        if x == target:
            return t, False


@numba.njit(cache=True)
def _meet_batch(xs, ys, seeds, nbr, cum, matchings, beta, lazy, continuous, horizon):
    n = seeds.shape[0]
    times = np.empty(n)
    cens = np.zeros(n, dtype=np.bool_)
    single = matchings.shape[0] == 1
    for i in range(n):
        np.random.seed(seeds[i])
        mt = matchings[0] if single else matchings[i]
        times[i], cens[i] = _meet_one(xs[i], ys[i], nbr, cum, mt, beta, lazy, continuous, horizon)
    return times, cens


@numba.njit(cache=True)
def _hit_batch(xs, target, seeds, nbr, cum, matchings, beta, lazy, continuous, horizon):
    n = seeds.shape[0]
    times = np.empty(n)
    cens = np.zeros(n, dtype=np.bool_)
    single = matchings.shape[0] == 1
    for i in range(n):
        np.random.seed(seeds[i])
        mt = matchings[0] if single else matchings[i]
        times[i], cens[i] = _hit_one(xs[i], target, nbr, cum, mt, beta, lazy, continuous, horizon)
    return times, cens


@numba.njit(cache=True)
def _pair_clock_counts(t_end, seeds):
    # jumps of walker 0 under the superposed rate-2 clock used by _meet_one
    out = np.zeros(seeds.shape[0], dtype=np.int64)
    for i in range(seeds.shape[0]):
        np.random.seed(seeds[i])
        t = 0.0
        while True:
            t += np.random.exponential(1.0) / 2.0
            if t > t_end:
                break
            if np.random.random() < 0.5:
                out[i] += 1
    return out


def jump_counts(t: float, replicas: int, master_seed: int) -> np.ndarray:
    """Jumps of one walker in ``[0, t]`` under the two-walker clock."""
    seeds = seeding.replica_seeds(master_seed, replicas, seeding.WALK)
    return _pair_clock_counts(float(t), seeds)


# python-facing samplers ----------------------------------------------------


def _kernel_arrays(spec: TorusSpec, kernel: WalkKernel):
    nbr = spec.neighbour_table(kernel.offsets)
    cum = np.cumsum(kernel.probs)
    cum[-1] = 1.0
    return nbr, cum


def _continuous(time_model: TimeModel | str) -> bool:
    mode = time_model.mode if isinstance(time_model, TimeModel) else TimeModel(time_model).mode
    return mode == CONTINUOUS


def sample_meeting_time(
    S: SmallWorldGraph,
    kernel: WalkKernel,
    time_model: TimeModel | str,
    x,
    y,
    seed: int,
    *,
    horizon: float | None = None,
    graph_seed: int | None = None,
) -> MeetingSample:
    spec = S.spec
    nbr, cum = _kernel_arrays(spec, kernel)
    horizon = horizon_default(spec) if horizon is None else horizon
    seed = int(seed) & 0xFFFFFFFF
    t, c = _meet_batch(
        np.array([spec.encode(x)]),
        np.array([spec.encode(y)]),
        np.array([seed], dtype=np.int64),
        nbr,
        cum,
        S.matching[None, :],
        kernel.beta,
        kernel.lazy,
        _continuous(time_model),
        float(horizon),
    )
    return MeetingSample(
        float(t[0]), float(t[0]) / spec.n_sites, spec.canonical(x), spec.canonical(y),
        seed, graph_seed, bool(c[0]),
    )


def sample_hitting_time(
    S: SmallWorldGraph,
    kernel: WalkKernel,
    time_model: TimeModel | str,
    x,
    seed: int,
    *,
    horizon: float | None = None,
    graph_seed: int | None = None,
) -> MeetingSample:
    spec = S.spec
    nbr, cum = _kernel_arrays(spec, kernel)
    horizon = horizon_default(spec) if horizon is None else horizon
    seed = int(seed) & 0xFFFFFFFF
    t, c = _hit_batch(
        np.array([spec.encode(x)]),
        0,
        np.array([seed], dtype=np.int64),
        nbr,
        cum,
        S.matching[None, :],
        kernel.beta,
        kernel.lazy,
        _continuous(time_model),
        float(horizon),
    )
    return MeetingSample(
        float(t[0]), float(t[0]) / spec.n_sites, spec.canonical(x), None, seed, graph_seed, bool(c[0])
    )


def _graph_block(spec: TorusSpec, graph_seeds: np.ndarray) -> np.ndarray:
    out = np.empty((graph_seeds.size, spec.n_sites), dtype=np.int64)
    for i, gs in enumerate(graph_seeds):
        out[i] = sample_small_world(spec, int(gs)).matching
    return out


def run_walk_experiment(
    experiment: str,
    spec: TorusSpec,
    kernel: WalkKernel,
    starts_x: np.ndarray,
    starts_y: np.ndarray | None,
    replicas: int,
    master_seed: int,
    *,
    time_model: TimeModel | str = CONTINUOUS,
    graph: SmallWorldGraph | None = None,
    graph_seed: int | None = None,
    horizon: float | None = None,
    block: int = 2000,
) -> SampleBatch:
    """Replica loop for meeting (``starts_y`` given) or hitting experiments.

    With ``graph`` (or ``graph_seed``) the graph is fixed (quenched);
    otherwise a fresh graph is drawn for every replica (annealed).
    ``starts_x``/``starts_y`` hold one site index per replica.
    """
    horizon = horizon_default(spec) if horizon is None else float(horizon)
    nbr, cum = _kernel_arrays(spec, kernel)
    walk_seeds = seeding.replica_seeds(master_seed, replicas, seeding.WALK)
    quenched = graph is not None or graph_seed is not None
    if quenched:
        if graph is None:
            graph = sample_small_world(spec, graph_seed)
        gseeds = np.full(replicas, -1 if graph_seed is None else graph_seed, dtype=np.int64)
    else:
        gseeds = seeding.replica_seeds(master_seed, replicas, seeding.GRAPH)
    xs = np.asarray(starts_x, dtype=np.int64)
    ys = None if starts_y is None else np.asarray(starts_y, dtype=np.int64)
    raw = np.empty(replicas)
    cens = np.zeros(replicas, dtype=bool)
    continuous = _continuous(time_model)
    for lo in range(0, replicas, block):
        hi = min(replicas, lo + block)
        mats = graph.matching[None, :] if quenched else _graph_block(spec, gseeds[lo:hi])
        if ys is None:
            t, c = _hit_batch(
                xs[lo:hi], 0, walk_seeds[lo:hi], nbr, cum, mats,
                kernel.beta, kernel.lazy, continuous, horizon,
            )
        else:
            t, c = _meet_batch(
                xs[lo:hi], ys[lo:hi], walk_seeds[lo:hi], nbr, cum, mats,
                kernel.beta, kernel.lazy, continuous, horizon,
            )
        raw[lo:hi] = t
        cens[lo:hi] = c
    sx = spec.decode_array(xs)
    sy = spec.decode_array(ys) if ys is not None else np.empty((0, spec.d), dtype=np.int64)
    sx = np.array([spec.canonical(v) for v in sx]).reshape(-1, spec.d)
    if ys is not None:
        sy = np.array([spec.canonical(v) for v in sy]).reshape(-1, spec.d)
    meta = {"horizon": horizon, "quenched": quenched, "time_model": "continuous" if continuous else "discrete"}
    return SampleBatch(experiment, spec, kernel.beta, raw, cens, walk_seeds, gseeds, sx, sy, meta)


def stationary_check(S: SmallWorldGraph, kernel: WalkKernel, tol: float = 1e-12) -> bool:
    """Doubly stochastic and symmetric transition matrix (uniform is reversible)."""
    if not S.is_valid():
        return False
    from .spectral import transition_matrix

    P = transition_matrix(S, kernel)
    n = P.shape[0]
    ones = np.ones(n)
    if np.max(np.abs(P @ ones - 1.0)) > tol or np.max(np.abs(P.T @ ones - 1.0)) > tol:
        return False
    diff = (P - P.T).tocoo()
    return bool(diff.nnz == 0 or np.max(np.abs(diff.data)) <= tol)


def distant_site(spec: TorusSpec) -> Site:
    """The antipode of the origin (maximal torus separation)."""
    return spec.canonical((spec.L,) * spec.d)


def separation_threshold(L: int) -> int:
    """``ceil((log log L)^2)`` with natural logarithms (at least 1)."""
    if L <= math.e:
        return 1
    return max(1, int(math.ceil(math.log(math.log(L)) ** 2)))
