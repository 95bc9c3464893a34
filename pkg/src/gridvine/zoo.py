"""Parametric bivariate copula families used as ground truth.

Every family provides a log-density, the conditional CDF ``P(V <= v | U = u)``,
an exact sampler and, where one exists, closed forms for Kendall's tau, tail
dependence and mutual information.  Rotations follow the usual convention::

     90:  (U, V) -> (1 - U, V)
    180:  (U, V) -> (1 - U, 1 - V)
    270:  (U, V) -> (U, 1 - V)

All array functions broadcast over ``u`` and ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InvalidSpecError, NumericalError

FAMILIES = ("Independence", "Gaussian", "StudentT", "Clayton", "Gumbel", "Frank", "Joe")
ROTATIONS = (0, 90, 180, 270)

_N_PARAMS = {
    "Independence": 0,
    "Gaussian": 1,
    "StudentT": 2,
    "Clayton": 1,
    "Gumbel": 1,
    "Frank": 1,
    "Joe": 1,
}
# families whose density is finite and well defined on the closed square
_BOUNDARY_SAFE = {"Independence", "Frank"}
_QUAD_CLAMP = 1e-12


@dataclass(frozen=True)
class CopulaSpec:
    """A bivariate copula: a base family, or a convex mixture of base families.

    ``family`` is ``"Mixture"`` exactly when ``mixture`` is given; the rotation
    of a mixture applies to the whole mixture.
    """

    family: str
    params: tuple[float, ...] = ()
    rotation: int = 0
    mixture: tuple[tuple[float, "CopulaSpec"], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.mixture is not None:
            object.__setattr__(
                self, "mixture", tuple((float(w), c) for w, c in self.mixture)
            )
        _validate(self)

    @property
    def is_mixture(self) -> bool:
        return self.mixture is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "params": list(self.params),
            "rotation": self.rotation,
            "mixture": None
            if self.mixture is None
            else [[w, c.to_dict()] for w, c in self.mixture],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "CopulaSpec":
        mixture = obj.get("mixture")
        if mixture is not None:
            parts = []
            for item in mixture:
                if isinstance(item, dict):
                    w, comp = item["weight"], item["spec"]
                else:
                    w, comp = item
                parts.append((float(w), cls.from_dict(comp)))
            mixture = tuple(parts)
        family = obj.get("family", "Mixture" if mixture is not None else None)
        if family is None:
            raise InvalidSpecError("spec is missing 'family'")
        return cls(
            family=_canonical_family(family),
            params=tuple(obj.get("params", ()) or ()),
            rotation=int(obj.get("rotation", 0) or 0),
            mixture=mixture,
        )

    def label(self) -> str:
        if self.is_mixture:
            inner = "+".join(f"{w:g}*{c.label()}" for w, c in self.mixture)
            body = f"Mixture[{inner}]"
        else:
            body = self.family
            if self.params:
                body += "(" + ",".join(f"{p:g}" for p in self.params) + ")"
        if self.rotation:
            body += f"@{self.rotation}"
        return body


def _canonical_family(name: str) -> str:
    key = name.replace("_", "").replace("-", "").lower()
    for fam in FAMILIES + ("Mixture",):
        if fam.lower() == key:
            return fam
    if key in {"t", "student"}:
        return "StudentT"
    raise InvalidSpecError(f"unknown copula family {name!r}")


def _validate(spec: CopulaSpec) -> None:
    if spec.rotation not in ROTATIONS:
        raise InvalidSpecError(f"rotation must be one of {ROTATIONS}, got {spec.rotation}")
    if spec.mixture is not None:
        if spec.family != "Mixture":
            raise InvalidSpecError("a spec with mixture components must have family 'Mixture'")
        if len(spec.mixture) == 0:
            raise InvalidSpecError("mixture needs at least one component")
        weights = np.array([w for w, _ in spec.mixture])
        if np.any(weights <= 0):
            raise InvalidSpecError("mixture weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidSpecError(f"mixture weights sum to {weights.sum()!r}, not 1")
        for _, comp in spec.mixture:
            if comp.is_mixture:
                raise InvalidSpecError("mixture nesting depth is limited to 1")
        return
    if spec.family not in FAMILIES:
        raise InvalidSpecError(f"unknown copula family {spec.family!r}")
    p = spec.params
    if len(p) != _N_PARAMS[spec.family]:
        raise InvalidSpecError(
            f"{spec.family} takes {_N_PARAMS[spec.family]} parameter(s), got {len(p)}"
        )
    if not all(math.isfinite(x) for x in p):
        raise InvalidSpecError("copula parameters must be finite")
    fam = spec.family
    if fam in ("Gaussian", "StudentT") and not -1.0 < p[0] < 1.0:
        raise InvalidSpecError(f"{fam} rho must lie in (-1, 1), got {p[0]}")
    if fam == "StudentT" and not p[1] > 2.0:
        raise InvalidSpecError(f"StudentT nu must exceed 2, got {p[1]}")
    if fam == "Clayton" and not p[0] > 0.0:
        raise InvalidSpecError(f"Clayton theta must be positive, got {p[0]}")
    if fam in ("Gumbel", "Joe") and not p[0] >= 1.0:
        raise InvalidSpecError(f"{fam} theta must be >= 1, got {p[0]}")
    if fam == "Frank" and p[0] == 0.0:
        raise InvalidSpecError("Frank theta must be non-zero")


# convenience constructors -------------------------------------------------


def independence() -> CopulaSpec:
    return CopulaSpec("Independence")


def gaussian(rho: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Gaussian", (rho,), rotation)


def student_t(rho: float, nu: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("StudentT", (rho, nu), rotation)


def clayton(theta: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Clayton", (theta,), rotation)


def gumbel(theta: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Gumbel", (theta,), rotation)


def frank(theta: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Frank", (theta,), rotation)


def joe(theta: float, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Joe", (theta,), rotation)


def mixture(components, rotation: int = 0) -> CopulaSpec:
    return CopulaSpec("Mixture", (), rotation, tuple(components))


# base-family kernels (rotation 0) ------------------------------------------


def _base_log_density(fam: str, p: tuple[float, ...], u, v):
    if fam == "Independence":
        return np.zeros(np.broadcast(u, v).shape)
    if fam == "Gaussian":
        rho = p[0]
        x, y = special.ndtri(u), special.ndtri(v)
        r2 = 1.0 - rho * rho
        return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
    if fam == "StudentT":
        rho, nu = p
        x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)
        r2 = 1.0 - rho * rho
        const = (
            special.gammaln((nu + 2.0) / 2.0)
            + special.gammaln(nu / 2.0)
            - 2.0 * special.gammaln((nu + 1.0) / 2.0)
            - 0.5 * math.log(r2)
        )
        quad = (x * x + y * y - 2.0 * rho * x * y) / (nu * r2)
        return (
            const
            - (nu + 2.0) / 2.0 * np.log1p(quad)
            + (nu + 1.0) / 2.0 * (np.log1p(x * x / nu) + np.log1p(y * y / nu))
        )
    if fam == "Clayton":
        th = p[0]
        lu, lv = np.log(u), np.log(v)
        s = np.exp(-th * lu) + np.exp(-th * lv) - 1.0
        return math.log1p(th) - (th + 1.0) * (lu + lv) - (2.0 + 1.0 / th) * np.log(s)
    if fam == "Gumbel":
        th = p[0]
        x, y = -np.log(u), -np.log(v)
        a = x**th + y**th
        s = a ** (1.0 / th)
        return (
            -s
            + x
            + y
            + (th - 1.0) * (np.log(x) + np.log(y))
            + (2.0 / th - 2.0) * np.log(a)
            + np.log1p((th - 1.0) / s)
        )
    if fam == "Frank":
        th = p[0]
        em = -np.expm1(-th)  # 1 - e^{-theta}, same sign as theta
        den = em - np.expm1(-th * u) * np.expm1(-th * v)
        return math.log(th * em) - th * (u + v) - 2.0 * np.log(np.abs(den))
    if fam == "Joe":
        th = p[0]
        lub, lvb = np.log1p(-u), np.log1p(-v)
        a, b = np.exp(th * lub), np.exp(th * lvb)
        s = a + b - a * b
        return (1.0 / th - 2.0) * np.log(s) + (th - 1.0) * (lub + lvb) + np.log(th - 1.0 + s)
    raise InvalidSpecError(fam)


def _base_cond_cdf(fam: str, p: tuple[float, ...], u, v):
    """P(V <= v | U = u) for the unrotated family."""
    if fam == "Independence":
        return np.broadcast_to(v, np.broadcast(u, v).shape).astype(float)
    if fam == "Gaussian":
        rho = p[0]
        x, y = special.ndtri(u), special.ndtri(v)
        return special.ndtr((y - rho * x) / math.sqrt(1.0 - rho * rho))
    if fam == "StudentT":
        rho, nu = p
        x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)
        scale = np.sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0))
        return special.stdtr(nu + 1.0, (y - rho * x) / scale)
    if fam == "Clayton":
        th = p[0]
        s = u ** (-th) + v ** (-th) - 1.0
        # u^{-th-1} s^{-1/th-1} = (u^{th} s)^{-1-1/th}
        return (u**th * s) ** (-1.0 - 1.0 / th)
    if fam == "Gumbel":
        th = p[0]
        x, y = -np.log(u), -np.log(v)
        a = x**th + y**th
        s = a ** (1.0 / th)
        return np.exp(-s + x) * (s / x) ** (1.0 - th)
    if fam == "Frank":
        th = p[0]
        eu, ev = np.expm1(-th * u), np.expm1(-th * v)
        return (eu + 1.0) * ev / (np.expm1(-th) + eu * ev)
    if fam == "Joe":
        th = p[0]
        ub, vb = 1.0 - u, 1.0 - v
        a, b = ub**th, vb**th
        s = a + b - a * b
        return s ** (1.0 / th - 1.0) * ub ** (th - 1.0) * (1.0 - b)
    raise InvalidSpecError(fam)


def _rotate_in(rotation: int, u, v):
    if rotation == 90:
        return 1.0 - u, v
    if rotation == 180:
        return 1.0 - u, 1.0 - v
    if rotation == 270:
        return u, 1.0 - v
    return u, v


def _unrotated_log_density(spec: CopulaSpec, u, v):
    if spec.is_mixture:
        logs = [
            math.log(w) + _component_log_density(c, u, v) for w, c in spec.mixture
        ]
        return np.logaddexp.reduce(np.stack(logs), axis=0)
    return _base_log_density(spec.family, spec.params, u, v)


def _component_log_density(spec: CopulaSpec, u, v):
    ru, rv = _rotate_in(spec.rotation, u, v)
    return _unrotated_log_density(spec, ru, rv)


def _cond_cdf(spec: CopulaSpec, u, v):
    rot = spec.rotation
    ru, rv = _rotate_in(rot, u, v)
    if spec.is_mixture:
        base = sum(w * _cond_cdf(c, ru, rv) for w, c in spec.mixture)
    else:
        base = _base_cond_cdf(spec.family, spec.params, ru, rv)
    if rot in (180, 270):
        return 1.0 - base
    return base


def _needs_open_domain(spec: CopulaSpec) -> bool:
    if spec.is_mixture:
        return any(_needs_open_domain(c) for _, c in spec.mixture)
    return spec.family not in _BOUNDARY_SAFE


def _check_domain(spec: CopulaSpec, u, v) -> None:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if _needs_open_domain(spec):
        bad = (u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)
    else:
        bad = (u < 0) | (u > 1) | (v < 0) | (v > 1)
    if np.any(bad | ~np.isfinite(u) | ~np.isfinite(v)):
        kind = "open" if _needs_open_domain(spec) else "closed"
        raise DomainError(f"{spec.label()} density requires coordinates in the {kind} unit interval")


# public API ---------------------------------------------------------------


def log_density(spec: CopulaSpec, u, v):
    """Log copula density; raises :class:`DomainError` at singular boundaries."""
    _check_domain(spec, u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return _component_log_density(spec, u, v)


def density(spec: CopulaSpec, u, v):
    out = np.exp(log_density(spec, u, v))
    return float(out) if out.ndim == 0 else out


def cond_cdf(spec: CopulaSpec, u, v):
    """``P(V <= v | U = u)``, i.e. dC/du."""
    _check_domain(spec, u, v)
    out = _cond_cdf(spec, np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _clip_open(x):
    return np.clip(x, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def _bisect_cond(spec_fam: str, p, u, w, tol=1e-12):
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = _base_cond_cdf(spec_fam, p, u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _sample_base(fam: str, p, n: int, rng: np.random.Generator) -> np.ndarray:
    if fam == "Independence":
        return rng.random((n, 2))
    if fam == "Gaussian":
        rho = p[0]
        z = rng.standard_normal((n, 2))
        z[:, 1] = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
        return special.ndtr(z)
    if fam == "StudentT":
        rho, nu = p
        z = rng.standard_normal((n, 2))
        z[:, 1] = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
        w = rng.chisquare(nu, size=n) / nu
        return special.stdtr(nu, z / np.sqrt(w)[:, None])
    if fam == "Clayton":
        th = p[0]
        frailty = rng.gamma(1.0 / th, 1.0, size=n)
        e = rng.standard_exponential((n, 2))
        return (1.0 + e / frailty[:, None]) ** (-1.0 / th)
    if fam == "Gumbel":
        th = p[0]
        alpha = 1.0 / th
        # positive stable frailty with Laplace transform exp(-s^alpha) (Kanter)
        ang = rng.uniform(0.0, math.pi, size=n)
        w = rng.standard_exponential(n)
        stable = (np.sin(alpha * ang) / np.sin(ang) ** (1.0 / alpha)) * (
            np.sin((1.0 - alpha) * ang) / w
        ) ** ((1.0 - alpha) / alpha)
        e = rng.standard_exponential((n, 2))
        return np.exp(-((e / stable[:, None]) ** alpha))
    if fam in ("Frank", "Joe"):
        u = _clip_open(rng.random(n))
        w = rng.random(n)
        v = _bisect_cond(fam, p, u, w)
        return np.column_stack([u, v])
    raise InvalidSpecError(fam)


def _sample_unrotated(spec: CopulaSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if not spec.is_mixture:
        return _sample_base(spec.family, spec.params, n, rng)
    weights = np.array([w for w, _ in spec.mixture])
    which = rng.choice(len(weights), size=n, p=weights / weights.sum())
    out = np.empty((n, 2))
    for i, (_, comp) in enumerate(spec.mixture):
        idx = np.flatnonzero(which == i)
        out[idx] = _sample_spec(comp, idx.size, rng)
    return out


def _sample_spec(spec: CopulaSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    uv = _sample_unrotated(spec, n, rng)
    u, v = _rotate_in(spec.rotation, uv[:, 0], uv[:, 1])
    return np.column_stack([u, v])


def sample(spec: CopulaSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. pairs as an ``(n, 2)`` array with entries in (0, 1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return _clip_open(_sample_spec(spec, int(n), rng))


def _debye1(theta: float) -> float:
    def f(t):
        return 1.0 if t == 0.0 else t / math.expm1(t)

    val, _ = integrate.quad(f, 0.0, theta, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val / theta


def _joe_tau(theta: float, terms: int = 1_000_000) -> float:
    k = np.arange(1, terms + 1, dtype=float)
    s = np.sum(1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0)))
    s += 1.0 / (2.0 * theta * theta * terms * terms)  # integral tail estimate
    return 1.0 - 4.0 * s


def analytic_tau(spec: CopulaSpec) -> float:
    """Population Kendall's tau of a non-mixture spec."""
    if spec.is_mixture:
        raise InvalidSpecError("analytic tau is unavailable for mixtures; use Monte Carlo")
    fam, p = spec.family, spec.params
    if fam == "Independence":
        tau = 0.0
    elif fam in ("Gaussian", "StudentT"):
        tau = 2.0 / math.pi * math.asin(p[0])
    elif fam == "Clayton":
        tau = p[0] / (p[0] + 2.0)
    elif fam == "Gumbel":
        tau = 1.0 - 1.0 / p[0]
    elif fam == "Frank":
        tau = 1.0 - 4.0 / p[0] * (1.0 - _debye1(p[0]))
    elif fam == "Joe":
        tau = _joe_tau(p[0])
    else:  # pragma: no cover - guarded by validation
        raise InvalidSpecError(fam)
    return -tau if spec.rotation in (90, 270) else tau


def _t_tail(rho: float, nu: float) -> float:
    return float(2.0 * special.stdtr(nu + 1.0, -math.sqrt((nu + 1.0) * (1.0 - rho) / (1.0 + rho))))


def _base_corner_tail(spec: CopulaSpec, corner: str) -> float:
    """Tail dependence of an unrotated base family at a corner of the square.

    ``corner`` is one of ``"upper"`` (1,1), ``"lower"`` (0,0), ``"ul"`` (0,1)
    or ``"lr"`` (1,0).
    """
    fam, p = spec.family, spec.params
    if fam == "StudentT":
        rho, nu = p
        return _t_tail(rho, nu) if corner in ("upper", "lower") else _t_tail(-rho, nu)
    if corner == "upper" and fam in ("Gumbel", "Joe"):
        return 2.0 - 2.0 ** (1.0 / p[0])
    if corner == "lower" and fam == "Clayton":
        return 2.0 ** (-1.0 / p[0])
    return 0.0


def analytic_upper_tail(spec: CopulaSpec) -> float:
    """Upper tail dependence ``lim P(V > q | U > q)`` as q -> 1.

    Rotations are resolved by mapping the (1,1) corner back to the base
    family; mixtures combine linearly since the joint survival probability is
    linear in the copula.
    """
    corner = {0: "upper", 90: "ul", 180: "lower", 270: "lr"}[spec.rotation]
    return _corner_tail_unrotated(spec, corner)


def _corner_tail_unrotated(spec: CopulaSpec, corner: str) -> float:
    if spec.is_mixture:
        total = 0.0
        for w, comp in spec.mixture:
            total += w * _corner_tail_unrotated(comp, _rotate_corner(comp.rotation, corner))
        return total
    return _base_corner_tail(spec, corner)


def _rotate_corner(rotation: int, corner: str) -> str:
    flip_u = rotation in (90, 180)
    flip_v = rotation in (180, 270)
    hi_u = corner in ("upper", "lr")
    hi_v = corner in ("upper", "ul")
    hi_u ^= flip_u
    hi_v ^= flip_v
    return {(True, True): "upper", (False, False): "lower", (False, True): "ul", (True, False): "lr"}[
        (hi_u, hi_v)
    ]


def _gl_nodes(lo: float, hi: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _mi_quadrature(spec: CopulaSpec, panels: int, order: int, limit: float):
    z, wz = _gl_nodes(-limit, limit, panels, order)
    u = np.clip(special.ndtr(z), _QUAD_CLAMP, 1.0 - _QUAD_CLAMP)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * wz
    lc = _component_log_density(spec, u[:, None], u[None, :])
    f = np.exp(lc) * phi[:, None] * phi[None, :]
    return float(np.sum(f * lc)), float(np.sum(f))


def analytic_mi(spec: CopulaSpec, panels: int = 60, order: int = 10, limit: float = 7.0) -> float:
    """Mutual information ``int c log c`` in nats.

    Integrates in normal-score coordinates, where the copula density times the
    Gaussian weights is smooth and decays at the edges; the result at
    ``panels`` is compared with a run at twice the panel count.
    """
    if spec.family == "Independence" and not spec.is_mixture:
        return 0.0
    coarse, _ = _mi_quadrature(spec, panels, order, limit)
    fine, mass = _mi_quadrature(spec, 2 * panels, order, limit)
    if abs(fine - coarse) > max(1e-6, 1e-5 * abs(fine)) or abs(mass - 1.0) > 1e-4:
        raise NumericalError(
            f"MI quadrature for {spec.label()} did not converge: "
            f"coarse={coarse:.10g} fine={fine:.10g} mass={mass:.10g}"
        )
    return max(fine, 0.0)


def cell_average_grid(spec: CopulaSpec, m: int, order: int = 16) -> np.ndarray:
    """Exact-in-principle cell averages of the density on an m x m grid.

    Cell masses come from integrating the bounded conditional CDF over each
    u-cell with Gauss-Legendre nodes, which stays accurate at corners where
    the density itself is singular.  ``out[a, b]`` is the average density over
    ``[a/m, (a+1)/m) x [b/m, (b+1)/m)``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    delta = 1.0 / m
    lo = np.arange(m) * delta
    u = (lo[:, None] + 0.5 * delta * (x[None, :] + 1.0)).ravel()
    wu = np.tile(0.5 * delta * w, m)
    v_nodes = np.arange(1, m) / m
    interior = _cond_cdf(spec, u[:, None], v_nodes[None, :])
    cdf = np.concatenate(
        [np.zeros((u.size, 1)), np.clip(interior, 0.0, 1.0), np.ones((u.size, 1))], axis=1
    )
    strip = np.diff(cdf, axis=1) * wu[:, None]
    mass = strip.reshape(m, order, m).sum(axis=1)
    return mass / (delta * delta)
