"""Test functions g, F, V_{c,theta} and the cost psi_theta.

g(r) = 0 on [0,1], (r-1)^{2+delta} on (1, 3/2), a quintic Hermite bridge on
[3/2, kappa0] and 1 beyond; F(s,t) = (1-g(t/s)) s + g(t/s) t;
V(s,t) = c (s + s^theta) + F(s,t); psi(u,v) = u + u^theta + v.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParameterError

KNOT = 1.5


def _hermite_quintic(x0, x1, left, right):
    """Coefficients (ascending, in u = x - x0) matching (f, f', f'') at both ends."""
    h = x1 - x0
    A = np.array([[h ** k if k >= 0 else 0 for k in range(6)],
                  [k * h ** (k - 1) if k >= 1 else 0 for k in range(6)],
                  [k * (k - 1) * h ** (k - 2) if k >= 2 else 0 for k in range(6)]], dtype=float)
    c = np.zeros(6)
    c[0], c[1], c[2] = left[0], left[1], left[2] / 2
    rhs = np.asarray(right, dtype=float) - A[:, :3] @ c[:3]
    c[3:] = np.linalg.solve(A[:, 3:], rhs)
    return c


@dataclass(frozen=True)
class LyapunovShape:
    theta: float = 0.3
    delta: float = 1.0
    kappa0: float = 2.0
    bridge: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ParameterError(f"theta must lie in (0,1), got {self.theta}")
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")
        if not self.kappa0 >= 2:
            raise ParameterError(f"kappa0 must be >= 2, got {self.kappa0}")
        d = self.delta
        u = KNOT - 1
        left = (u ** (2 + d), (2 + d) * u ** (1 + d), (2 + d) * (1 + d) * u ** d)
        coef = _hermite_quintic(KNOT, self.kappa0, left, (1.0, 0.0, 0.0))
        object.__setattr__(self, "bridge", tuple(float(v) for v in coef))
        r = np.linspace(KNOT, self.kappa0, 4001)
        g, g1, _ = g_eval(self, r)
        if g1.min() < -1e-12 or g.min() < -1e-12 or g.max() > 1 + 1e-12:
            raise ParameterError(f"bridge on [3/2, {self.kappa0}] is not monotone in [0,1] for delta={d}")

    @classmethod
    def for_type_ii(cls, theta, delta, gamma, lam):
        return cls(theta=theta, delta=delta, kappa0=2 * (1 + abs(gamma) / lam))

    def to_dict(self):
        return {"theta": self.theta, "delta": self.delta, "kappa0": self.kappa0, "bridge": list(self.bridge)}


def g_eval(shape: LyapunovShape, r):
    """(g, g', g'') at r >= 0."""
    r = np.asarray(r, dtype=float)
    d = shape.delta
    g = np.zeros_like(r)
    g1 = np.zeros_like(r)
    g2 = np.zeros_like(r)
    m = (r > 1) & (r < KNOT)
    u = r[m] - 1
    g[m] = u ** (2 + d)
    g1[m] = (2 + d) * u ** (1 + d)
    g2[m] = (2 + d) * (1 + d) * u ** d
    m = (r >= KNOT) & (r < shape.kappa0)
    if shape.bridge:
        p = np.polynomial.Polynomial(shape.bridge)
        u = r[m] - KNOT
        g[m], g1[m], g2[m] = p(u), p.deriv(1)(u), p.deriv(2)(u)
    g[r >= shape.kappa0] = 1.0
    if r.ndim == 0:
        return float(g), float(g1), float(g2)
    return g, g1, g2


class FDerivs(NamedTuple):
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray


def F_eval(shape: LyapunovShape, s, t) -> FDerivs:
    """F and its derivatives; F is homogeneous of degree one, so everything is a function of r = t/s."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0):
        raise DomainError("F_eval needs s > 0 (use F(0,t) = t)")
    r = t / s
    g, g1, g2 = g_eval(shape, r)
    curv = (g2 * (r - 1) + 2 * g1) / s
    value = s + g * (t - s)
    out = FDerivs(value, 1 - g - g1 * r * (r - 1), g + g1 * (r - 1), r * r * curv, curv, -r * curv)
    if value.ndim == 0:
        return FDerivs(*(float(v) for v in out))
    return out


def F_value(shape: LyapunovShape, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    g = g_eval(shape, t / s)[0]
    return s + g * (t - s)


class VDerivs(NamedTuple):
    value: float
    d1: float
    d2: float
    d11: float
    d22: float
    unbounded: bool


def V_eval(shape: LyapunovShape, c: float, s: float, t: float) -> VDerivs:
    """V_{c,theta}(s,t) with derivatives. At s = 0: V = t, d2 = 1 and d1 flagged unbounded."""
    if s < 0 or t < 0:
        raise DomainError("V_eval needs s, t >= 0")
    th = shape.theta
    if s == 0:
        return VDerivs(float(t), np.inf, 1.0, -np.inf, 0.0, True)
    f = F_eval(shape, s, t)
    return VDerivs(c * (s + s ** th) + f.value, c * (1 + th * s ** (th - 1)) + f.d1, f.d2,
                   c * th * (th - 1) * s ** (th - 2) + f.d11, f.d22, False)


def psi_theta(theta: float, u, v):
    u = np.asarray(u, dtype=float)
    return u + u ** theta + np.asarray(v, dtype=float)


def equivalence_constant(shape: LyapunovShape, c: float) -> float:
    """K with K^{-1}((s v s^theta) + t) <= V(s,t) <= K((s v s^theta) + t).

    Uses max(s,t)/kappa0 <= F <= max(s,t) and (s v s^theta) <= s + s^theta <= 2 (s v s^theta).
    """
    return max(2 * c + 1, 1.0 / min(c, 1.0 / shape.kappa0))


def lemma_bounds_check(shape: LyapunovShape, s, t) -> float:
    """max over the grid of |d1 F|, |d2 F|, s|d11 F|, s|d22 F| (grid restricted to 1 <= t/s <= kappa0)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    r = t / s
    if np.any(r < 1 - 1e-12) or np.any(r > shape.kappa0 + 1e-12):
        raise DomainError("grid must satisfy 1 <= t/s <= kappa0")
    f = F_eval(shape, s, t)
    return float(np.max(np.maximum.reduce([np.abs(f.d1), np.abs(f.d2), s * np.abs(f.d11), s * np.abs(f.d22)])))


def v_values(shape: LyapunovShape, c: float, s, t):
    """Vectorized V_{c,theta}(s,t), including s = 0 where V = t."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.array(t, dtype=float, copy=True)
    pos = s > 0
    if np.any(pos):
        sp = s[pos]
        out[pos] = c * (sp + sp ** shape.theta) + F_value(shape, sp, t[pos])
    return out
