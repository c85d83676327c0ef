"""The big world: the free-product cover onto which small worlds map locally.

A vertex is a signed word ``±(z_1, ..., z_n)`` of vectors in ``Z^d`` with
``z_j != 0`` for ``j < n``.  The graph is vertex transitive, so exact
return probabilities are computed around ``+(0)`` only.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BallTooLarge, DegenerateTail, InvalidConfig
from .topology import Site, SmallWorldGraph, TorusSpec

DEFAULT_CAP = 5_000_000


def _vec(z, d: int | None = None) -> tuple[int, ...]:
    if isinstance(z, (int, np.integer)):
        t = (int(z),)
    else:
        t = tuple(int(v) for v in z)
    if d is not None and len(t) != d:
        raise InvalidConfig(f"component {t} is not {d}-dimensional")
    return t


@dataclass(frozen=True)
class Address:
    """Vertex ``sign(word)`` of the big world; ``sign`` is +1 or -1."""

    sign: int
    word: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise InvalidConfig(f"sign must be +1 or -1, got {self.sign}")
        if not self.word:
            raise InvalidConfig("address needs at least one component")
        d = len(self.word[0])
        if any(len(z) != d for z in self.word):
            raise InvalidConfig("components have mixed dimensions")
        if any(not any(z) for z in self.word[:-1]):
            raise InvalidConfig(f"only the last component may be zero: {self.word}")

    @classmethod
    def plus(cls, *components) -> "Address":
        return cls(1, tuple(_vec(z) for z in components))

    @classmethod
    def minus(cls, *components) -> "Address":
        return cls(-1, tuple(_vec(z) for z in components))

    @classmethod
    def origin(cls, d: int) -> "Address":
        return cls(1, ((0,) * d,))

    @property
    def d(self) -> int:
        return len(self.word[0])

    def __str__(self):
        comps = ",".join(str(z[0]) if len(z) == 1 else str(z) for z in self.word)
        return f"{'+' if self.sign > 0 else '-'}({comps})"


def long_range_neighbour(a: Address) -> Address:
    last = a.word[-1]
    if any(last):
        return Address(a.sign, a.word + ((0,) * len(last),))
    if len(a.word) > 1:
        return Address(a.sign, a.word[:-1])
    return Address(-a.sign, a.word)


def short_range_neighbours_bw(a: Address, spec: TorusSpec) -> list[Address]:
    head, last = a.word[:-1], np.array(a.word[-1])
    return [Address(a.sign, head + (tuple(int(v) for v in last + y),)) for y in spec.offsets()]


def distance_to_origin(a: Address, spec: TorusSpec) -> int:
    hops = len(a.word) - 1 + (1 if a.sign < 0 else 0)
    return hops + sum(spec.norm(z) for z in a.word)


@dataclass
class Ball:
    center: Address
    radius: int
    addresses: list[Address]
    index: dict[Address, int]
    distance: list[int]
    adjacency: list[list[int]]

    def __len__(self):
        return len(self.addresses)


def ball_size_bound(spec: TorusSpec, radius: int) -> int:
    return 3 * spec.M**radius


@lru_cache(maxsize=64)
def enumerate_ball(center: Address, radius: int, spec: TorusSpec, cap: int = DEFAULT_CAP) -> Ball:
    """All vertices within ``radius`` of ``center`` with intra-ball adjacency."""
    if ball_size_bound(spec, radius) > cap:
        raise BallTooLarge(f"3*M^{radius} = {ball_size_bound(spec, radius)} exceeds cap {cap}")
    addresses = [center]
    index = {center: 0}
    distance = [0]
    frontier = [center]
    for r in range(1, radius + 1):
        nxt = []
        for a in frontier:
            for b in [long_range_neighbour(a), *short_range_neighbours_bw(a, spec)]:
                if b not in index:
                    index[b] = len(addresses)
                    addresses.append(b)
                    distance.append(r)
                    nxt.append(b)
        frontier = nxt
    adjacency = []
    for a in addresses:
        nbrs = [long_range_neighbour(a), *short_range_neighbours_bw(a, spec)]
        adjacency.append([index[b] for b in nbrs if b in index])
    return Ball(center, radius, addresses, index, distance, adjacency)


def realize_phi(S: SmallWorldGraph, a: Address) -> Site:
    """Image of a big-world vertex in the small world ``S``."""
    spec = S.spec
    first = np.array(a.word[0], dtype=np.int64)
    if a.sign > 0:
        pos = spec.encode(first)
    else:
        pos = spec.encode(np.array(spec.decode(S.matching[0])) + first)
    for z in a.word[1:]:
        lr = spec.decode(S.matching[pos])
        pos = spec.encode(np.add(lr, z))
    return spec.decode(pos)


# exact return probabilities ----------------------------------------------


@dataclass
class _Template:
    coords: np.ndarray  # (T, d), zero first
    dist: np.ndarray  # (T,)
    lookup: dict


def _template(spec: TorusSpec, r: int) -> _Template:
    span = r * spec.m if spec.m > 1 else r
    pts = [
        z
        for z in itertools.product(range(-span, span + 1), repeat=spec.d)
        if spec.norm(z) <= r
    ]
    pts.sort(key=lambda z: (spec.norm(z), z))
    coords = np.array(pts, dtype=np.int64).reshape(-1, spec.d)
    dist = np.array([spec.norm(z) for z in pts], dtype=np.int64)
    return _Template(coords, dist, {z: i for i, z in enumerate(pts)})


def _template_pairs(t: _Template, offsets: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for y in offsets:
        src, dst = [], []
        for i, z in enumerate(t.coords):
            j = t.lookup.get(tuple(int(v) for v in z + y))
            if j is not None:
                src.append(i)
                dst.append(j)
        out.append((np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)))
    return out


def _sheet_counts(templates: Sequence[_Template], R: int) -> int:
    """Exact vertex count of the radius-R ball around +(0)."""
    sub = [0] * (R + 1)  # vertices in a non-root sheet subtree with budget r
    for r in range(R + 1):
        t = templates[r]
        sub[r] = len(t.dist) + sum(sub[r - int(dd) - 1] for dd in t.dist[1:] if dd < r)
    root = templates[R]
    return len(root.dist) + sum(sub[R - int(dd) - 1] for dd in root.dist if dd < R)


def exact_ball_size(spec: TorusSpec, radius: int) -> int:
    return _sheet_counts([_template(spec, r) for r in range(radius + 1)], radius)


def _ball_chain(spec: TorusSpec, R: int, offsets, probs, beta: float, lazy: bool, cap: int):
    """Sparse transpose transition matrix of the walk restricted to the ball.

    Mass stepping out of the ball is dropped.  Returns (P^T, root-template).
    """
    templates = [_template(spec, r) for r in range(R + 1)]
    size = _sheet_counts(templates, R)
    if size > cap:
        raise BallTooLarge(f"ball of radius {R} has {size} vertices, cap {cap}")
    pairs = [_template_pairs(t, offsets) for t in templates]
    scale = 0.5 if lazy else 1.0
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(src, dst, w):
        rows.append(np.ravel(src))
        cols.append(np.ravel(dst))
        vals.append(np.full(np.size(src), w * scale))

    pending: list[list[np.ndarray]] = [[] for _ in range(R + 1)]
    n_total = 0
    for r in range(R, -1, -1):
        t = templates[r]
        T = len(t.dist)
        if r == R:
            parents = None
            c = 1
        else:
            if not pending[r]:
                continue
            parents = np.concatenate(pending[r])
            c = parents.size
        ids = (n_total + np.arange(c * T, dtype=np.int64)).reshape(c, T)
        n_total += c * T
        for (i_idx, j_idx), q in zip(pairs[r], probs):
            if i_idx.size:
                add(ids[:, i_idx], ids[:, j_idx], (1.0 - beta) * q)
        if parents is not None:
            add(ids[:, 0], parents, beta)
            add(parents, ids[:, 0], beta)
        first = 0 if parents is None else 1
        for i in range(first, T):
            dd = int(t.dist[i])
            if dd < r:
                pending[r - dd - 1].append(ids[:, i])
    if lazy:
        diag = np.arange(n_total, dtype=np.int64)
        rows.append(diag)
        cols.append(diag)
        vals.append(np.full(n_total, 0.5))
    r_all = np.concatenate(rows)
    c_all = np.concatenate(cols)
    v_all = np.concatenate(vals)
    pt = sp.csr_matrix((v_all, (c_all, r_all)), shape=(n_total, n_total))
    return pt, templates[R]


@dataclass
class ReturnProbabilityTable:
    """``probs[n]`` is the probability to be at ``+(0)`` after ``n`` steps."""

    spec: TorusSpec
    beta: float
    n0: int
    probs: np.ndarray
    start: tuple[int, ...]
    lazy: bool = False
    kernel: str = "simple"
    ball_size: int = 0

    def to_csv(self) -> str:
        s = self.spec
        buf = io.StringIO()
        buf.write(
            f"# d={s.d},m={s.m},beta={self.beta!r},n0={self.n0},"
            f"start={list(self.start)},lazy={int(self.lazy)},kernel={self.kernel}\n"
        )
        buf.write("n,p_n\n")
        for n, p in enumerate(self.probs):
            buf.write(f"{n},{float(p)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ReturnProbabilityTable":
        lines = text.strip().splitlines()
        meta = {}
        header = lines[0].lstrip("#").strip()
        for key, val in _split_meta(header):
            meta[key] = val
        probs = np.array([float(line.split(",")[1]) for line in lines[2:]])
        spec = TorusSpec(int(meta["d"]), 1, int(meta["m"]))
        start = tuple(int(v) for v in meta["start"].strip("[]").split(",") if v.strip())
        return cls(
            spec,
            float(meta["beta"]),
            int(meta["n0"]),
            probs,
            start,
            bool(int(meta["lazy"])),
            meta["kernel"],
        )


def _split_meta(header: str):
    depth, cur, parts = 0, "", []
    for ch in header:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    for p in parts:
        k, v = p.split("=", 1)
        yield k.strip(), v.strip()


def return_probabilities(
    spec: TorusSpec,
    beta: float,
    n0: int,
    *,
    kernel=None,
    start: Iterable[int] | None = None,
    cap: int = DEFAULT_CAP,
) -> ReturnProbabilityTable:
    """Exact n-step probabilities ``P^{+(start)}(X_n = +(0))`` for ``n <= n0``.

    The ball of radius ``ceil((n0 + |start|) / 2)`` is enough: a path of
    length ``n`` ending at the origin never gets further than that.
    """
    from .walk import WalkKernel

    if kernel is None:
        kernel = WalkKernel.simple(spec, beta)
    beta = kernel.beta
    start = tuple(start) if start is not None else (0,) * spec.d
    if len(start) != spec.d:
        raise InvalidConfig("start has wrong dimension")
    R = int(math.ceil((n0 + spec.norm(start)) / 2))
    pt, root = _ball_chain(spec, R, kernel.offsets, kernel.probs, beta, kernel.lazy, cap)
    v = np.zeros(pt.shape[0])
    v[root.lookup[start]] = 1.0
    probs = np.empty(n0 + 1)
    probs[0] = v[0]
    for n in range(1, n0 + 1):
        v = pt @ v
        probs[n] = v[0]
    return ReturnProbabilityTable(
        spec, beta, n0, probs, start, kernel.lazy, kernel.name, ball_size=pt.shape[0]
    )


@dataclass
class GreenSum:
    """A certified lower bound plus a geometric-tail point estimate."""

    lower_bound: float
    estimate: float
    n0: int
    even_only: bool
    tail: float = field(default=0.0)


def _geometric_tail(probs: np.ndarray, last: int) -> float:
    prev = probs[last - 2] if last >= 2 else 0.0
    if prev == 0.0:
        raise DegenerateTail(f"p[{last - 2}] = 0; cannot extrapolate")
    ratio = probs[last] / prev
    if not 0.0 <= ratio < 1.0:
        raise DegenerateTail(f"ratio p[{last}]/p[{last - 2}] = {ratio} not in [0, 1)")
    return float(probs[last] * ratio / (1.0 - ratio))


def partial_green(table: ReturnProbabilityTable, even_only: bool = False) -> GreenSum:
    p = np.asarray(table.probs, dtype=np.float64)
    n0 = len(p) - 1
    terms = p[0::2] if even_only else p
    lower = math.fsum(terms.tolist())
    if n0 == 0:
        return GreenSum(lower, lower, n0, even_only)
    last_even = n0 if n0 % 2 == 0 else n0 - 1
    tail = _geometric_tail(p, last_even)
    if not even_only:
        last_odd = n0 if n0 % 2 == 1 else n0 - 1
        if last_odd >= 3 and p[last_odd - 2] > 0:
            tail += _geometric_tail(p, last_odd)
    return GreenSum(lower, lower + tail, n0, even_only, tail)


# Monte Carlo on addresses --------------------------------------------------


def simulate_return_counts(
    spec: TorusSpec, beta: float, n_steps: int, replicas: int, seed: int, kernel=None
) -> np.ndarray:
    """Count replicas at ``+(0)`` after each step, walking directly on words.

    Independent of the ball enumeration; used to cross-check the DP.
    """
    from .walk import WalkKernel

    if kernel is None:
        kernel = WalkKernel.simple(spec, beta)
    rng = np.random.default_rng(seed)
    d = spec.d
    words = np.zeros((replicas, n_steps + 2, d), dtype=np.int64)
    length = np.ones(replicas, dtype=np.int64)
    sign = np.ones(replicas, dtype=np.int64)
    rows = np.arange(replicas)
    cum = np.cumsum(kernel.probs)
    counts = np.zeros(n_steps + 1, dtype=np.int64)
    counts[0] = replicas
    for n in range(1, n_steps + 1):
        hold = rng.random(replicas) < 0.5 if kernel.lazy else np.zeros(replicas, bool)
        jump_lr = (rng.random(replicas) < kernel.beta) & ~hold
        k = np.minimum(np.searchsorted(cum, rng.random(replicas), side="right"), len(cum) - 1)
        sr = ~jump_lr & ~hold
        last = words[rows, length - 1]
        nonzero = np.any(last != 0, axis=1)
        grow = jump_lr & nonzero
        shrink = jump_lr & ~nonzero & (length > 1)
        flip = jump_lr & ~nonzero & (length == 1)
        words[rows[grow], length[grow]] = 0
        length[grow] += 1
        words[rows[shrink], length[shrink] - 1] = 0
        length[shrink] -= 1
        sign[flip] *= -1
        words[rows[sr], length[sr] - 1] += kernel.offsets[k[sr]]
        at0 = (sign == 1) & (length == 1) & np.all(words[:, 0] == 0, axis=1)
        counts[n] = int(at0.sum())
    return counts
