"""Empirical laws, KS/DKW machinery and the limit laws of meeting times."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvalidSample

PURE_EXPONENTIAL = "pure_exponential"
ZERO_ATOM_MIXTURE = "zero_atom_mixture"


@dataclass
class EmpiricalDistribution:
    """Sorted sample; censored entries are kept at their censoring value."""

    values: np.ndarray
    censored: int = 0
    max_censored_fraction: float = 1e-3

    def __post_init__(self):
        self.values = np.sort(np.asarray(self.values, dtype=np.float64))

    @classmethod
    def from_samples(cls, values, censored=None, **kw) -> "EmpiricalDistribution":
        n_cens = 0 if censored is None else int(np.count_nonzero(censored))
        return cls(np.asarray(values, dtype=np.float64), n_cens, **kw)

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.N if self.N else 0.0

    @property
    def valid(self) -> bool:
        return self.N > 0 and self.censored_fraction <= self.max_censored_fraction

    def survival(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return 1.0 - np.searchsorted(self.values, t, side="right") / self.N

    def rescaled(self, factor: float) -> "EmpiricalDistribution":
        return EmpiricalDistribution(self.values * factor, self.censored, self.max_censored_fraction)


@dataclass(frozen=True)
class LimitLaw:
    """Exponential law of mean ``mean`` with an atom ``atom`` at zero."""

    kind: str
    mean: float
    atom: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.atom <= 1.0:
            raise InvalidConfig(f"atom mass {self.atom} outside [0, 1]")
        if not self.mean > 0:
            raise InvalidConfig("mean must be positive")

    @classmethod
    def exponential(cls, mean: float) -> "LimitLaw":
        return cls(PURE_EXPONENTIAL, mean, 0.0)

    @classmethod
    def mixture(cls, atom: float, mean: float) -> "LimitLaw":
        return cls(ZERO_ATOM_MIXTURE, mean, atom)

    def survival(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        s = (1.0 - self.atom) * np.exp(-np.maximum(t, 0.0) / self.mean)
        return np.where(t < 0, 1.0, s)

    def laplace(self, lam: float) -> float:
        return self.atom + (1.0 - self.atom) / (1.0 + lam * self.mean)

    def rescaled(self, factor: float) -> "LimitLaw":
        return LimitLaw(self.kind, self.mean * factor, self.atom)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.exponential(self.mean, size=n)
        if self.atom > 0:
            x[rng.random(n) < self.atom] = 0.0
        return x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean, "atom": self.atom}


def limit_law_meeting(green, x=None, *, distant: bool = False, G_even_x: float | None = None) -> LimitLaw:
    """Limit of ``T_L / (2L)^d`` for walkers started at ``x`` and ``0``.

    ``green`` is a GreenReport (or anything with ``G_bigworld_even``).
    ``x == 0`` gives atom ``1 - 1/G^ev_B(0)``; a fixed ``x != 0`` needs the
    even-time Green function ``G_even_x`` of the lifted start.
    """
    theta = float(green.G_bigworld_even)
    if distant:
        return LimitLaw.exponential(theta)
    if x is None or not any(x):
        return LimitLaw.mixture(1.0 - 1.0 / theta, theta)
    if G_even_x is None:
        raise InvalidConfig("fixed x != 0 needs G_even_x")
    return LimitLaw.mixture(G_even_x / theta, theta)


def limit_law_hitting(green, x=None, *, distant: bool = False, G_x: float | None = None) -> LimitLaw:
    """Same structure for one walker hitting the origin, with ``G_B``."""
    theta = float(green.G_bigworld)
    if distant:
        return LimitLaw.exponential(theta)
    if x is None or not any(x):
        return LimitLaw.mixture(1.0 - 1.0 / theta, theta)
    if G_x is None:
        raise InvalidConfig("fixed x != 0 needs G_x")
    return LimitLaw.mixture(G_x / theta, theta)


def dkw_epsilon(n: int, delta: float) -> float:
    """Half-width of the DKW band holding with probability ``1 - delta``."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def two_sample_threshold(n1: int, n2: int, alpha: float) -> float:
    """Asymptotic critical value of the two-sample KS statistic."""
    return math.sqrt(-math.log(alpha / 2.0) / 2.0 * (n1 + n2) / (n1 * n2))


def ks_distance(emp: EmpiricalDistribution, law: LimitLaw, *, check: bool = True) -> float:
    """``sup_{t >= 0} |S_emp(t) - S(t)|``.

    Both survival functions are right-continuous and the law is continuous
    on ``(0, inf)``, so the supremum is attained at ``0`` (comparing
    ``S_emp(0)`` to ``S(0) = 1 - atom``) or at a sample point, on either
    side of its jump.
    """
    if check and not emp.valid:
        raise InvalidSample(f"censored fraction {emp.censored_fraction:.3g} above threshold")
    x = emp.values
    n = emp.N
    pos = x[x > 0]
    k0 = n - pos.size  # mass at or below zero
    s = law.survival(pos)
    after = 1.0 - (k0 + np.arange(1, pos.size + 1)) / n
    before = 1.0 - (k0 + np.arange(pos.size)) / n
    d0 = abs((1.0 - k0 / n) - (1.0 - law.atom))
    if pos.size == 0:
        return d0
    return float(max(d0, np.max(np.abs(after - s)), np.max(np.abs(before - s))))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def empirical_laplace(emp: EmpiricalDistribution, lambdas, scale: float = 1.0) -> np.ndarray:
    """Mean of ``exp(-lam * value / scale)``; censored entries contribute 0."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    x = emp.values / scale
    n_obs = emp.N - emp.censored
    # censored samples sit at the horizon, i.e. the largest values
    obs = x[:n_obs]
    return np.array([np.exp(-lam * obs).sum() / emp.N for lam in lambdas])


def laplace_limit(G_even_0: float, lam: float, G_even_x: float = 0.0, at_origin: bool = False) -> float:
    """Limit transform ``(G(x) + 1/lam - 1_{x=0}) / (G(0) + 1/lam)``."""
    return (G_even_x + 1.0 / lam - (1.0 if at_origin else 0.0)) / (G_even_0 + 1.0 / lam)


def laplace_standard_error(emp: EmpiricalDistribution, lam: float, scale: float = 1.0) -> float:
    vals = np.exp(-lam * emp.values / scale)
    return float(vals.std(ddof=1) / math.sqrt(emp.N))


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * float(np.abs(p - q).sum())


TORUS_CONSTANTS = {
    1: {"f_d": "L^2", "C_d": 1.0 / 12.0},
    2: {"f_d": "L^2 log L", "C_d": 1.0 / math.pi},
}


def torus_constants(d: int, G_even_lattice: float | None = None) -> dict:
    """Scaling ``f_d(L)`` and constant ``C_d`` of meeting times on the plain
    torus, for annotating reports; ``d >= 3`` uses ``G^ev_{Z^d}(0)``."""
    if d in TORUS_CONSTANTS:
        return dict(TORUS_CONSTANTS[d])
    if d < 1:
        raise InvalidConfig("d must be positive")
    if G_even_lattice is None:
        from .green import green_lattice

        G_even_lattice = green_lattice(d, 1.0) / 2.0
    return {"f_d": f"L^{d}", "C_d": G_even_lattice}


def summary(law: LimitLaw, emp: EmpiricalDistribution, delta: float = 0.01, tol: float | None = None) -> dict:
    ks = ks_distance(emp, law, check=False)
    eps = dkw_epsilon(emp.N, delta)
    limit = eps if tol is None else tol
    return {
        "law": law.to_dict(),
        "N": emp.N,
        "ks": ks,
        "dkw_eps": eps,
        "pass": bool(ks <= limit and emp.valid),
        "censored_fraction": emp.censored_fraction,
    }


def summary_json(law: LimitLaw, emp: EmpiricalDistribution, **kw) -> str:
    return json.dumps(summary(law, emp, **kw), sort_keys=True)
