"""Green functions of Z^d and of the big world.

``Ghat(z) = sum_n P(Y_n = 0) z^n`` for the simple walk on ``Z^d`` is
computed from the one-dimensional Bessel representation

    Ghat(z) = int_0^inf exp(-t) I_0(z t / d)^d dt,

which is the tensor-product Fourier integral with the angles integrated
out.  The big-world Green function solves the free-product fixed point

    t = (1 + sqrt(1 + 4 beta^2 t^2)) / 2 + Phi_d((1 - beta) t) - 1

where ``Phi_d`` is defined implicitly by ``Ghat(z) = Phi_d(z Ghat(z))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import BarycentricInterpolator

from .bigworld import partial_green, return_probabilities
from .errors import DomainExceeded, Divergent, InvalidConfig, NoBracket, QuadratureFailure
from .topology import TorusSpec

_QUAD_BREAKS = (0.0, 8.0, 64.0, 512.0, 4096.0)


def green_lattice(d: int, z: float, rtol: float = 1e-11) -> float:
    """Generating function of return probabilities of the simple walk on Z^d."""
    if d < 1:
        raise InvalidConfig("d must be positive")
    if not 0.0 <= z <= 1.0:
        raise InvalidConfig(f"z must lie in [0, 1], got {z}")
    if z == 0.0:
        return 1.0
    if d <= 2 and z >= 1.0:
        raise Divergent(f"Z^{d} is recurrent: Ghat(1) is infinite")
    if d == 1:
        return 1.0 / math.sqrt(1.0 - z * z)
    eps = 1.0 - z

    def f(t):
        return special.i0e(z * t / d) ** d * math.exp(-eps * t)

    total = 0.0
    err = 0.0
    for a, b in zip(_QUAD_BREAKS, _QUAD_BREAKS[1:] + (math.inf,)):
        val, e = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=400)
        total += val
        err += e
    if err > 1e-7 * total:
        raise QuadratureFailure(f"quadrature error {err:.3g} too large at d={d}, z={z}")
    return total


def phi_z2(t: float) -> float:
    """Closed form for the two-element group (flip walk)."""
    if t < 0:
        raise InvalidConfig("t must be nonnegative")
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))


@dataclass
class PhiFunction:
    """``Phi`` with ``Ghat(z) = Phi(z Ghat(z))`` for the walk on ``Z^d``.

    For ``d == 1`` the closed form ``sqrt(1 + s^2)`` is used.  For odd
    ``d >= 3`` the pairs ``(s, Phi) = (z Ghat(z), Ghat(z))`` are tabulated
    at Chebyshev nodes of ``u = sqrt(1 - z)``; in that variable both are
    smooth up to ``z = 1``, so polynomial interpolation is accurate.  Even
    ``d >= 4`` picks up ``(1 - z) log(1 - z)`` terms, so there ``z`` is found
    by root-finding on the quadrature directly.
    """

    d: int
    s_max: float
    u: np.ndarray | None = None
    s: np.ndarray | None = None
    g: np.ndarray | None = None
    _s_of_u: BarycentricInterpolator | None = field(default=None, repr=False)
    _g_of_u: BarycentricInterpolator | None = field(default=None, repr=False)

    @property
    def closed_form(self) -> bool:
        return self.d == 1

    @property
    def direct(self) -> bool:
        return self.d > 1 and self.u is None

    def __call__(self, s: float) -> float:
        if s < 0:
            raise InvalidConfig("Phi is defined for s >= 0")
        if self.closed_form:
            return math.sqrt(1.0 + s * s)
        if s > self.s_max * (1.0 + 1e-13):
            raise DomainExceeded(f"s = {s} beyond table domain s_max = {self.s_max}")
        if s >= self.s_max:
            return self.s_max if self.direct else float(self.g[0])
        if s == 0.0:
            return 1.0
        if self.direct:
            z = optimize.brentq(lambda v: v * green_lattice(self.d, v) - s, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
            return green_lattice(self.d, z)
        u = optimize.brentq(lambda v: float(self._s_of_u(v)) - s, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
        return float(self._g_of_u(u))

    def table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(z, s, Phi) rows in increasing ``z``."""
        if self.closed_form:
            z = np.linspace(0.0, 0.999, 200)
            g = 1.0 / np.sqrt(1.0 - z * z)
            return z, z * g, g
        if self.direct:
            z = 1.0 - np.linspace(1.0, 0.0, 49) ** 2
            g = np.array([green_lattice(self.d, float(v)) for v in z])
            return z, z * g, g
        order = np.argsort(-self.u)
        z = 1.0 - self.u[order] ** 2
        return z, self.s[order], self.g[order]


@lru_cache(maxsize=8)
def build_phi_lattice(d: int, nodes: int = 48) -> PhiFunction:
    if d == 1:
        return PhiFunction(1, math.inf)
    if d == 2:
        raise Divergent("Z^2 is recurrent; Phi has no finite table domain")
    if d % 2 == 0:
        return PhiFunction(d, green_lattice(d, 1.0))
    k = np.arange(nodes)
    u = 0.5 * (1.0 - np.cos(np.pi * k / (nodes - 1)))  # Chebyshev-Lobatto on [0, 1]
    z = 1.0 - u**2
    g = np.array([green_lattice(d, float(zi)) for zi in z])
    s = z * g
    return PhiFunction(d, float(s[0]), u, s, g, BarycentricInterpolator(u, s), BarycentricInterpolator(u, g))


def phi_free_product(phi: PhiFunction, beta: float, t: float) -> float:
    """``Phi`` of the big-world walk: lattice part weighted ``1 - beta``,
    flip part weighted ``beta``."""
    return phi_z2(beta * t) + phi((1.0 - beta) * t) - 1.0


@dataclass
class GreenReport:
    d: int
    beta: float
    G_torus_limit: float
    G_bigworld: float
    G_bigworld_even: float
    methods: dict
    lower_bound_check: bool
    dp_lower: float | None = None
    dp_estimate: float | None = None
    dp_n0: int | None = None
    residual: float | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_DEFAULT_DP_N0 = {1: 16, 3: 8}


def solve_bigworld_green(
    d: int,
    beta: float,
    *,
    dp_n0: int | None = None,
    phi: PhiFunction | None = None,
    grid: int = 64,
) -> GreenReport:
    """Smallest fixed point of the free-product equation above the lower
    bound ``max(1, 1/(1 - beta^2))``, bracketed from below and bisected."""
    if not 0.0 < beta < 1.0:
        raise InvalidConfig(f"beta must lie in (0, 1), got {beta}")
    phi = build_phi_lattice(d) if phi is None else phi
    n0 = _DEFAULT_DP_N0.get(d, 6) if dp_n0 is None else dp_n0
    dp_lower = dp_est = None
    if n0 > 0:
        table = return_probabilities(TorusSpec(d, 1), beta, n0)
        gs = partial_green(table)
        dp_lower, dp_est = gs.lower_bound, gs.estimate
    lo = max(1.0, 1.0 / (1.0 - beta * beta))
    t_dom = phi.s_max / (1.0 - beta)

    def h(t):
        return phi_free_product(phi, beta, t) - t

    if h(lo) < 0:
        raise NoBracket(f"fixed-point map already below identity at lower bound {lo}")
    hi = 4.0 * (dp_est if dp_est is not None else lo)
    root = None
    while root is None:
        hi = min(hi, t_dom)
        ts = np.linspace(lo, hi, grid + 1)
        vals = [h(t) for t in ts]
        for i in range(1, len(ts)):
            if vals[i] == 0.0:
                root = float(ts[i])
                break
            if vals[i] < 0.0:
                root = optimize.bisect(h, ts[i - 1], ts[i], xtol=1e-14, rtol=8.9e-16, maxiter=200)
                break
        if root is None:
            if hi >= t_dom:
                raise DomainExceeded(f"no root with (1-beta)t inside the table domain (d={d}, beta={beta})")
            if hi > 1e8:
                raise NoBracket(f"no sign change up to t={hi}")
            lo, hi = hi, 4.0 * hi
    G_lat = green_lattice(d, 1.0) if d >= 3 else math.inf
    lb = 1.0 / (1.0 - beta * beta)
    ok = root >= lb and (dp_lower is None or root >= dp_lower)
    methods = {
        "G_bigworld": "free-product fixed point, bisection",
        "phi": (
            "closed form sqrt(1+s^2)" if phi.closed_form
            else "Bessel quadrature, direct inversion" if phi.direct
            else f"Bessel quadrature table ({len(phi.u)} nodes)"
        ),
        "G_torus_limit": "Bessel quadrature" if d >= 3 else "divergent",
    }
    if dp_lower is not None:
        methods["dp"] = f"exact ball DP, n0={n0}, geometric tail estimate"
    return GreenReport(
        d, beta, G_lat, root, root / 2.0, methods, ok, dp_lower, dp_est,
        n0 if n0 > 0 else None, abs(h(root)),
    )


@dataclass
class BetaScan:
    d: int
    rows: list  # (beta, G_lattice, G_bigworld, diff)
    crossing: float | None
    bracket: tuple[float, float] | None
    sign_ok: bool

    def to_csv(self) -> str:
        lines = ["beta,G_lattice,G_bigworld,diff\n"]
        for b, gl, gb, df in self.rows:
            lines.append(f"{b!r},{gl!r},{gb!r},{df!r}\n")
        return "".join(lines)


def beta_comparison_scan(d: int, beta_grid, *, refine: bool = True, xtol: float = 1e-6) -> BetaScan:
    """``G_{Z^d}(0) - G_B(0)`` over ``beta_grid`` and the sign change."""
    if d < 3:
        raise InvalidConfig("the comparison needs a transient lattice (d >= 3)")
    phi = build_phi_lattice(d)
    G_lat = green_lattice(d, 1.0)
    betas = sorted(float(b) for b in beta_grid)

    def diff(b):
        return G_lat - solve_bigworld_green(d, b, phi=phi, dp_n0=0).G_bigworld

    rows = []
    for b in betas:
        gb = solve_bigworld_green(d, b, phi=phi).G_bigworld
        rows.append((b, G_lat, gb, G_lat - gb))
    sign_ok = rows[0][3] > 0 and rows[-1][3] < 0
    crossing = bracket = None
    for (b0, _, _, d0), (b1, _, _, d1) in zip(rows, rows[1:]):
        if d0 > 0 >= d1:
            bracket = (b0, b1)
            crossing = optimize.brentq(diff, b0, b1, xtol=xtol) if refine else 0.5 * (b0 + b1)
            break
    return BetaScan(d, rows, crossing, bracket, sign_ok)
