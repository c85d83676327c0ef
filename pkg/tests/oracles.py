"""Independent reference computations used by several test modules."""

import itertools

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def lattice_return_probs(d: int, n_max: int) -> np.ndarray:
    """P(Y_n = 0) for the simple walk on Z^d by repeated convolution."""
    size = 2 * n_max + 1
    c = n_max
    dist = np.zeros((size,) * d)
    dist[(c,) * d] = 1.0
    out = [1.0]
    for _ in range(n_max):
        new = np.zeros_like(dist)
        for ax in range(d):
            new += np.roll(dist, 1, axis=ax) + np.roll(dist, -1, axis=ax)
        dist = new / (2 * d)
        out.append(dist[(c,) * d])
    return np.array(out)


def generator_rows(spec, matching, beta):
    """Per-site list of (target, rate) for one continuous-time walker."""
    n = spec.n_sites
    table = spec.neighbour_table()
    K = table.shape[1]
    rows = []
    for x in range(n):
        moves = {}
        if beta > 0:
            moves[int(matching[x])] = moves.get(int(matching[x]), 0.0) + beta
        for k in range(K):
            y = int(table[x, k])
            moves[y] = moves.get(y, 0.0) + (1.0 - beta) / K
        rows.append(moves)
    return rows


def pair_meeting_means(spec, matching, beta) -> np.ndarray:
    """E[T] for two independent rate-1 walkers on (x, y), via a linear system."""
    n = spec.n_sites
    moves = generator_rows(spec, matching, beta)
    idx = lambda x, y: x * n + y
    A = sp.lil_matrix((n * n, n * n))
    b = np.zeros(n * n)
    for x in range(n):
        for y in range(n):
            i = idx(x, y)
            if x == y:
                A[i, i] = 1.0
                continue
            A[i, i] = 2.0
            b[i] = 1.0
            for tgt, r in moves[x].items():
                if tgt != y:
                    A[i, idx(tgt, y)] -= r
            for tgt, r in moves[y].items():
                if tgt != x:
                    A[i, idx(x, tgt)] -= r
    return spla.spsolve(A.tocsr(), b).reshape(n, n)


def coalescence_mean(spec, matching, beta, sites) -> float:
    """E[time to one particle] for coalescing walkers, by solving on occupied sets."""
    n = spec.n_sites
    moves = generator_rows(spec, matching, beta)
    k0 = len(sites)
    states = [frozenset(c) for r in range(2, k0 + 1) for c in itertools.combinations(range(n), r)]
    index = {s: i for i, s in enumerate(states)}
    A = sp.lil_matrix((len(states), len(states)))
    b = np.zeros(len(states))
    for s, i in index.items():
        A[i, i] = float(len(s))
        b[i] = 1.0
        for p in s:
            for tgt, r in moves[p].items():
                nxt = (s - {p}) | {tgt}
                if len(nxt) >= 2:
                    A[i, index[nxt]] -= r
    sol = spla.spsolve(A.tocsr(), b)
    return float(sol[index[frozenset(sites)]])
