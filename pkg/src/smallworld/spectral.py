"""Isoperimetric constants, spectral gaps and mixing on small worlds."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, InvalidConfig, TooLarge
from .topology import SmallWorldGraph, TorusSpec, sample_small_world
from .walk import WalkKernel

DENSE_MAX = 2**12


def transition_matrix(S: SmallWorldGraph, kernel: WalkKernel, lazy: bool | None = None) -> sp.csr_matrix:
    """Sparse ``P_S``; parallel edges add their masses."""
    spec = S.spec
    lazy = kernel.lazy if lazy is None else lazy
    n = spec.n_sites
    nbr = spec.neighbour_table(kernel.offsets)
    rows = [np.arange(n)]
    cols = [np.asarray(S.matching)]
    vals = [np.full(n, kernel.beta)]
    for k, q in enumerate(kernel.probs):
        rows.append(np.arange(n))
        cols.append(nbr[:, k])
        vals.append(np.full(n, (1.0 - kernel.beta) * q))
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    if lazy:
        P = 0.5 * (P + sp.identity(n, format="csr"))
    P.eliminate_zeros()
    return P.tocsr()


def adjacency_counts(S: SmallWorldGraph, include_long_range: bool = True) -> np.ndarray:
    """Dense edge-multiplicity matrix of the small world (zero diagonal).

    Torus edges are the neighbourhood sets; a long-range pair that is also
    a short-range pair becomes a double edge.
    """
    spec = S.spec
    n = spec.n_sites
    A = np.zeros((n, n), dtype=np.int64)
    table = spec.neighbour_table()
    for x in range(n):
        for y in set(table[x].tolist()):
            if y != x:
                A[x, y] = 1
    if include_long_range:
        A[np.arange(n), S.matching] += 1
    return A


@numba.njit(cache=True)
def _iso_gray(A):
    n = A.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            deg[i] += A[i, j]
    inner = np.zeros(n, dtype=np.int64)
    inset = np.zeros(n, dtype=np.bool_)
    cut = 0
    k = 0
    best_num = -1
    best_den = 1
    total = 1 << (n - 1)
    for i in range(1, total):
        v = 0
        j = i
        while (j & 1) == 0:
            j >>= 1
            v += 1
        if inset[v]:
            cut -= deg[v] - 2 * inner[v]
            inset[v] = False
            k -= 1
            sgn = -1
        else:
            cut += deg[v] - 2 * inner[v]
            inset[v] = True
            k += 1
            sgn = 1
        for u in range(n):
            inner[u] += sgn * A[v, u]
        den = min(k, n - k)
        if den > 0 and (best_num < 0 or cut * best_den < best_num * den):
            best_num = cut
            best_den = den
    return best_num, best_den


def isoperimetric_exact(graph, max_n: int = 24, include_long_range: bool = True) -> Fraction:
    """Exact ``min_{0 < |V| <= n/2} e(V, V^c) / |V|`` by Gray-code enumeration.

    ``graph`` is a SmallWorldGraph or a symmetric edge-multiplicity matrix.
    Subsets of the first ``n - 1`` vertices are enumerated; each stands for
    itself and its complement, which share the same cut.
    """
    if isinstance(graph, SmallWorldGraph):
        A = adjacency_counts(graph, include_long_range)
    else:
        A = np.array(graph, dtype=np.int64)
        np.fill_diagonal(A, 0)
        if not np.array_equal(A, A.T):
            raise InvalidConfig("adjacency must be symmetric")
    n = A.shape[0]
    if n > max_n:
        raise TooLarge(f"{n} vertices exceeds max_n={max_n}")
    if n < 2:
        raise InvalidConfig("need at least two vertices")
    num, den = _iso_gray(np.ascontiguousarray(A))
    return Fraction(int(num), int(den))


class GapResult(NamedTuple):
    lambda1: float
    gap: float
    lambda_min: float
    method: str


def spectral_gap(S: SmallWorldGraph, kernel: WalkKernel, *, dense_max: int = DENSE_MAX, tol: float = 1e-10) -> GapResult:
    """Second eigenvalue ``lambda1`` and ``1 - max(|lambda1|, |lambda_min|)``."""
    P = transition_matrix(S, kernel)
    n = P.shape[0]
    if n <= dense_max:
        ev = scipy.linalg.eigvalsh(P.toarray())
        lam1, lam_min, method = float(ev[-2]), float(ev[0]), "dense"
    else:
        try:
            top = spla.eigsh(P, k=2, which="LA", tol=tol, return_eigenvectors=False)
            low = spla.eigsh(P, k=1, which="SA", tol=tol, return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        lam1, lam_min, method = float(np.sort(top)[0]), float(low[0]), "lanczos"
    lam = max(abs(lam1), abs(lam_min))
    return GapResult(lam1, 1.0 - lam, lam_min, method)


def cheeger_lower_bound(iota: float, p_min: float) -> float:
    if iota < 0 or p_min < 0:
        raise InvalidConfig("iota and p_min must be nonnegative")
    return 0.5 * float(iota) ** 2 * float(p_min) ** 2


@dataclass
class MixingProfile:
    t: np.ndarray
    deviation: np.ndarray
    gamma: float
    r2: float
    tail_start: int


def mixing_profile(S: SmallWorldGraph, kernel: WalkKernel, t_grid: Sequence[float], *, exact_max: int = DENSE_MAX) -> MixingProfile:
    """``max_{x,y} |P^x(X_t = y) - 1/n|`` for the continuous-time walk.

    Computed from the eigendecomposition of the symmetric ``P_S``
    (uniformization).  ``gamma`` is minus the slope of a least-squares line
    through ``log deviation`` on the second half of the grid.
    """
    P = transition_matrix(S, kernel)
    n = P.shape[0]
    if n > exact_max:
        raise TooLarge(f"exact mixing profile limited to {exact_max} sites")
    w, V = scipy.linalg.eigh(P.toarray())
    t = np.asarray(t_grid, dtype=np.float64)
    dev = np.empty_like(t)
    for i, ti in enumerate(t):
        H = (V * np.exp(-ti * (1.0 - w))) @ V.T
        dev[i] = np.max(np.abs(H - 1.0 / n))
    start = len(t) // 2
    tt, yy = t[start:], dev[start:]
    keep = yy > 1e-13
    tt, yy = tt[keep], np.log(yy[keep])
    if tt.size < 2:
        return MixingProfile(t, dev, float("nan"), float("nan"), start)
    slope, icpt = np.polyfit(tt, yy, 1)
    resid = yy - (slope * tt + icpt)
    ss_tot = float(((yy - yy.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return MixingProfile(t, dev, float(-slope), r2, start)


def configuration_multigraph(n: int, r: int, seed: int, h: int | None = None) -> np.ndarray:
    """Random (n, r)- or (n, r, h)-configuration as an edge-count matrix.

    Loops sit on the diagonal (counted once per loop).
    """
    vertices = n + (1 if h else 0)
    stubs = np.repeat(np.arange(n), r)
    if h:
        stubs = np.concatenate([stubs, np.full(h, n)])
    if stubs.size % 2:
        raise InvalidConfig("total number of half edges must be even")
    rng = np.random.default_rng(seed)
    stubs = rng.permutation(stubs)
    A = np.zeros((vertices, vertices), dtype=np.int64)
    for a, b in zip(stubs[0::2], stubs[1::2]):
        A[a, b] += 1
        if a != b:
            A[b, a] += 1
    return A


@dataclass
class SurveyResult:
    alpha: float
    fraction: float
    rows: list = field(default_factory=list)
    proxy: bool = False

    def to_csv(self) -> str:
        lines = ["sample,iota,lambda1,cheeger_lower\n"]
        for s, iota, lam1, cl in self.rows:
            iota_s = "" if iota is None else repr(float(iota))
            cl_s = "" if cl is None else repr(float(cl))
            lines.append(f"{s},{iota_s},{lam1!r},{cl_s}\n")
        return "".join(lines)


def iso_survey(
    spec: TorusSpec,
    samples: int,
    alpha: float,
    seed: int = 0,
    *,
    beta: float = 0.3,
    proxy: bool = False,
    max_n: int = 24,
) -> SurveyResult:
    """Fraction of sampled small worlds with ``iota > alpha``.

    With ``proxy`` the exact constant is skipped and ``1 - lambda1`` of the
    lazy walk is compared to ``alpha`` instead; rows are labelled as such.
    """
    from .seeding import GRAPH, replica_seeds

    kernel = WalkKernel.simple(spec, beta, lazy=True)
    rows = []
    hits = 0
    for i, gs in enumerate(replica_seeds(seed, samples, GRAPH)):
        S = sample_small_world(spec, int(gs))
        lam1 = spectral_gap(S, kernel).lambda1
        if proxy:
            rows.append((i, None, lam1, None))
            hits += (1.0 - lam1) > alpha
            continue
        iota = isoperimetric_exact(S, max_n=max_n)
        rows.append((i, iota, lam1, cheeger_lower_bound(iota, kernel.p_min)))
        hits += iota > alpha
    return SurveyResult(alpha, hits / samples if samples else float("nan"), rows, proxy)


@dataclass
class SpectralReport:
    iota: Fraction | None
    lambda1: float
    lambda_min: float
    gap: float
    cheeger_lower: float | None
    gamma_fit: float | None
    method: str

    def to_dict(self) -> dict:
        return {
            "iota": None if self.iota is None else float(self.iota),
            "iota_exact": None if self.iota is None else f"{self.iota.numerator}/{self.iota.denominator}",
            "lambda1": self.lambda1,
            "lambda_min": self.lambda_min,
            "gap": self.gap,
            "cheeger_lower": self.cheeger_lower,
            "gamma_fit": self.gamma_fit,
            "method": self.method,
        }


def spectral_report(S: SmallWorldGraph, kernel: WalkKernel, t_grid=None, max_n: int = 24) -> SpectralReport:
    g = spectral_gap(S, kernel)
    iota = isoperimetric_exact(S, max_n=max_n) if S.spec.n_sites <= max_n else None
    cl = cheeger_lower_bound(iota, kernel.p_min) if iota is not None else None
    gamma = None
    if t_grid is not None and S.spec.n_sites <= DENSE_MAX:
        gamma = mixing_profile(S, kernel, t_grid).gamma
    return SpectralReport(iota, g.lambda1, g.lambda_min, g.gap, cl, gamma, g.method)
