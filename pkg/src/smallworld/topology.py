"""Tori, small-world graphs and distances.

Sites of the torus ``(Z mod 2L)^d`` are indexed mixed-radix, little-endian,
after reducing every coordinate into ``[0, 2L)``: the site with coordinates
``(c_0, ..., c_{d-1})`` has index ``sum_i (c_i mod 2L) * (2L)**i``.  The
origin is therefore index 0.  Canonical coordinates live in ``[-L, L)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfig

Site = tuple[int, ...]


@dataclass(frozen=True)
class TorusSpec:
    """Torus ``(Z mod 2L)^d`` with short-range radius ``m``.

    ``m == 1`` uses the 2d nearest neighbours; ``m >= 2`` uses every site
    within sup-norm distance ``m``.
    """

    d: int
    L: int
    m: int = 1

    def __post_init__(self):
        if self.d < 1 or self.L < 1 or self.m < 1:
            raise InvalidConfig(f"invalid torus d={self.d} L={self.L} m={self.m}")

    @property
    def side(self) -> int:
        return 2 * self.L

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def M(self) -> int:
        """Number of deterministic neighbours plus the long-range one."""
        if self.m == 1:
            return 2 * self.d + 1
        return (2 * self.m + 1) ** self.d

    def offsets(self) -> np.ndarray:
        """Short-range offsets of ``Z^d`` (not reduced), shape ``(K, d)``."""
        if self.m == 1:
            eye = np.eye(self.d, dtype=np.int64)
            return np.concatenate([eye, -eye])
        rng = range(-self.m, self.m + 1)
        pts = [z for z in itertools.product(rng, repeat=self.d) if any(z)]
        return np.array(pts, dtype=np.int64)

    def norm(self, z) -> int:
        """Graph length of an offset in ``Z^d`` under the short-range edges."""
        z = np.asarray(z)
        if self.m == 1:
            return int(np.abs(z).sum())
        return int(math.ceil(np.abs(z).max() / self.m)) if z.size else 0

    # site encoding ---------------------------------------------------------

    def canonical(self, coords: Iterable[int]) -> Site:
        L, side = self.L, self.side
        c = tuple(((int(v) + L) % side) - L for v in coords)
        if len(c) != self.d:
            raise InvalidConfig(f"expected {self.d} coordinates, got {len(c)}")
        return c

    def encode(self, coords: Iterable[int]) -> int:
        idx = 0
        for i, v in enumerate(coords):
            idx += (int(v) % self.side) * self.side**i
        return idx

    def decode(self, index: int) -> Site:
        out = []
        for _ in range(self.d):
            index, r = divmod(int(index), self.side)
            out.append(r)
        return self.canonical(out)

    def encode_array(self, coords: np.ndarray) -> np.ndarray:
        coords = np.mod(np.asarray(coords, dtype=np.int64), self.side)
        weights = self.side ** np.arange(self.d, dtype=np.int64)
        return coords @ weights

    def decode_array(self, index: np.ndarray) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        out = np.empty(index.shape + (self.d,), dtype=np.int64)
        rest = index.copy()
        for i in range(self.d):
            rest, out[..., i] = np.divmod(rest, self.side)
        return out

    def neighbour_table(self, offsets: np.ndarray | None = None) -> np.ndarray:
        """``table[x, k]`` is the index of ``x + offsets[k]``."""
        if offsets is None:
            offsets = self.offsets()
        coords = self.decode_array(np.arange(self.n_sites))
        cols = [self.encode_array(coords + off) for off in np.asarray(offsets)]
        return np.stack(cols, axis=1) if cols else np.empty((self.n_sites, 0), np.int64)


class SmallWorldGraph:
    """A torus plus a fixed-point-free involution ``matching``.

    ``matching[x]`` is the long-range neighbour of site ``x``.  Instances
    are treated as immutable; the matching array is made read-only.
    """

    def __init__(self, spec: TorusSpec, matching: Sequence[int], *, check: bool = True):
        arr = np.array(matching, dtype=np.int64)
        if arr.shape != (spec.n_sites,):
            raise InvalidConfig(f"matching has shape {arr.shape}, expected ({spec.n_sites},)")
        arr.setflags(write=False)
        self.spec = spec
        self.matching = arr
        if check and not self.is_valid():
            raise InvalidConfig("matching is not a fixed-point-free involution")

    def is_valid(self) -> bool:
        m = self.matching
        idx = np.arange(m.size)
        if m.min(initial=0) < 0 or m.max(initial=0) >= m.size:
            return False
        return bool(np.all(m[m] == idx) and np.all(m != idx))

    def long_range(self, x: int) -> int:
        return int(self.matching[x])

    def __eq__(self, other):
        return (
            isinstance(other, SmallWorldGraph)
            and self.spec == other.spec
            and np.array_equal(self.matching, other.matching)
        )

    def __repr__(self):
        s = self.spec
        return f"SmallWorldGraph(d={s.d}, L={s.L}, m={s.m}, n={s.n_sites})"

    def to_dict(self) -> dict:
        s = self.spec
        return {"d": s.d, "L": s.L, "m": s.m, "matching": self.matching.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "SmallWorldGraph":
        spec = TorusSpec(int(data["d"]), int(data["L"]), int(data.get("m", 1)))
        return cls(spec, data["matching"])

    @classmethod
    def from_json(cls, text: str) -> "SmallWorldGraph":
        return cls.from_dict(json.loads(text))


def _pair_up(perm: np.ndarray) -> np.ndarray:
    matching = np.empty_like(perm)
    a, b = perm[0::2], perm[1::2]
    matching[a] = b
    matching[b] = a
    return matching


def _has_short_range_pair(spec: TorusSpec, matching: np.ndarray) -> bool:
    table = spec.neighbour_table()
    return bool(np.any(table == matching[:, None]))


def sample_small_world(
    spec: TorusSpec, seed: int, *, forbid_short_range: bool = False, max_tries: int = 10_000
) -> SmallWorldGraph:
    """Uniform random perfect matching of the torus sites.

    The sites are shuffled (Fisher-Yates) and consecutive entries paired.
    With ``forbid_short_range`` the draw is repeated until no pair is a
    short-range edge, which gives the uniform law on that subset.
    """
    n = spec.n_sites
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        matching = _pair_up(rng.permutation(n))
        if not forbid_short_range or not _has_short_range_pair(spec, matching):
            return SmallWorldGraph(spec, matching, check=False)
    raise InvalidConfig(f"no matching without short-range pairs after {max_tries} tries")


def short_range_neighbours(spec: TorusSpec, x: Iterable[int]) -> list[Site]:
    base = np.array(spec.canonical(x), dtype=np.int64)
    seen: dict[Site, None] = {}
    for off in spec.offsets():
        y = spec.canonical(base + off)
        if y != tuple(base):
            seen.setdefault(y, None)
    return list(seen)


def torus_distance(spec: TorusSpec, x: Iterable[int], y: Iterable[int]) -> int:
    """Graph distance on the torus alone (no long-range edges)."""
    diff = np.array(spec.canonical(np.subtract(tuple(x), tuple(y))), dtype=np.int64)
    return spec.norm(np.abs(diff))


def euclidean_distance(spec: TorusSpec, x: Iterable[int], y: Iterable[int]) -> float:
    diff = np.array(spec.canonical(np.subtract(tuple(x), tuple(y))), dtype=np.float64)
    return float(np.sqrt((diff**2).sum()))


def graph_distance(S: SmallWorldGraph, x: Iterable[int], y: Iterable[int]) -> int:
    """Breadth-first search distance using short- and long-range edges."""
    spec = S.spec
    src, dst = spec.encode(x), spec.encode(y)
    if src == dst:
        return 0
    offsets = spec.offsets()
    seen = np.zeros(spec.n_sites, dtype=bool)
    seen[src] = True
    frontier = np.array([src], dtype=np.int64)
    dist = 0
    while frontier.size:
        dist += 1
        coords = spec.decode_array(frontier)
        nxt = [S.matching[frontier]]
        nxt.extend(spec.encode_array(coords + off) for off in offsets)
        cand = np.unique(np.concatenate(nxt))
        cand = cand[~seen[cand]]
        if np.any(cand == dst):
            return dist
        seen[cand] = True
        frontier = cand
    raise AssertionError("torus is connected; BFS cannot exhaust without reaching target")


def is_locally_big_world(
    S: SmallWorldGraph, x: Iterable[int], t: int, cap: int = 5_000_000
) -> bool:
    """True iff the realization map is injective on the big-world ball of
    radius ``t`` around the lift ``+(x)``."""
    from .bigworld import Address, enumerate_ball, realize_phi

    spec = S.spec
    if t == 0:
        return True
    ball = enumerate_ball(Address.plus(spec.canonical(x)), t, cap=cap, spec=spec)
    images = [realize_phi(S, a) for a in ball.addresses]
    return len(set(images)) == len(images)
