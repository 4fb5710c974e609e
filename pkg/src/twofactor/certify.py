"""Coupling operator L* on test functions of (s, d) = (y - y~, |x - x~|) and drift certificates.

For a test function G(s, t) the coupled generator splits into
  first component   -b s d1G  (+ diffusion  1/2 sigma^2 d11G,  + s * int beta-jumps)
  second component  -lam d d2G (+ |gamma| s d2G worst case for TYPE_II)
                    + s * int (G(s, |q+z|) - G(s, d) - sgn(q) d2G z) nu_alpha(dz),  q = +-d
with sigma^2 = (sqrt(y) + sqrt(y~))^2 on 0 < s < 1 and (sqrt(y) - sqrt(y~))^2 otherwise under
reflection, and (sqrt(y) - sqrt(y~))^2 under synchronous coupling.  Both orientations of
x - x~ are evaluated and the larger value is kept.

Since V = c U + F with U = s + s^theta, L*V = c L*U + L*F is affine in c, so the
per-point rate -(L*V)/V is monotone in c and its grid minimum is quasi-concave in log c.
"""

from dataclasses import dataclass, field
import json
import math
from typing import Optional

import numpy as np

from .errors import CertificateNotFound, ParameterError
from .lyapunov import KNOT, LyapunovShape, F_eval, lemma_bounds_check
from .model import BETA_KINDS, NON_ERGODIC, ModelKind, ModelSpec, validate_model
from .quadrature import QuadratureConfig, levy_integral
from .stable import StableLaw

CERT_KINDS = (ModelKind.WW1, ModelKind.WW2, ModelKind.MIXED_Y, ModelKind.TYPE_I, ModelKind.TYPE_II)


# ------------------------------------------------------------------ test functions


class _TestFn:
    """Scalar G(s,t), derivatives at a point, and the affine regime t >= ratio_tail * s."""

    smooth_in_t_at_zero = True
    ratio_knots: tuple = ()
    ratio_tail = 0.0
    has_u_part = True

    def value(self, s, t):
        raise NotImplementedError

    def derivs(self, s, t):
        """(G, d1, d2, d11, d22, d12)"""
        raise NotImplementedError

    def tail_offset(self, s):
        """G(s,t) = t + tail_offset(s) for t >= ratio_tail * s."""
        raise NotImplementedError


class _FFn(_TestFn):
    def __init__(self, shape: LyapunovShape):
        self.shape = shape
        self.ratio_knots = (1.0, KNOT, shape.kappa0)
        self.ratio_tail = shape.kappa0
        self._poly = shape.bridge[::-1]
        self._e = 2.0 + shape.delta

    def _g(self, r):
        if r <= 1.0:
            return 0.0
        if r < KNOT:
            return (r - 1.0) ** self._e
        if r < self.shape.kappa0:
            u = r - KNOT
            acc = 0.0
            for c in self._poly:
                acc = acc * u + c
            return acc
        return 1.0

    def value(self, s, t):
        return s + self._g(t / s) * (t - s)

    def derivs(self, s, t):
        return tuple(float(v) for v in F_eval(self.shape, s, t))

    def tail_offset(self, s):
        return 0.0


class _G0Fn(_TestFn):
    """G0(s,t) = s + t."""
    smooth_in_t_at_zero = False
    has_u_part = False

    def value(self, s, t):
        return s + t

    def derivs(self, s, t):
        return (s + t, 1.0, 1.0, 0.0, 0.0, 0.0)

    def tail_offset(self, s):
        return s


def target_function(shape: LyapunovShape, test: str) -> _TestFn:
    if test == "V":
        return _FFn(shape)
    if test == "G0":
        return _G0Fn()
    raise ParameterError(f"test must be 'V' or 'G0', got {test!r}")


# ------------------------------------------------------------------ jump integrals


def alpha_jump_integral(fn: _TestFn, law: StableLaw, s, d, sign, quad: QuadratureConfig):
    """int (G(s,|q+z|) - G(s,d) - sgn(q) d2G z) nu_alpha(dz) with q = sign*d; (value, err)."""
    q = sign * d
    g0, _, g2, _, g22, _ = fn.derivs(s, d)
    kinks = [-q] + [-q + k * s for k in fn.ratio_knots] + [-q - k * s for k in fn.ratio_knots]
    kinks = [k for k in kinks if k > 0]
    z_small = quad.small_frac * s
    if not fn.smooth_in_t_at_zero and d > 0:
        z_small = min(z_small, d / 2)
    z_tail = max(0.0, -q + fn.ratio_tail * s)
    tail = (z_tail, 1.0 - g2 * sign, q + fn.tail_offset(s) - g0)
    z_flat = _flat_until(fn, kinks, lambda z: abs(q + z) / s)
    h = lambda z: 0.0 if z < z_flat else fn.value(s, abs(q + z)) - g0 - g2 * sign * z
    return levy_integral(h, law, kinks, z_small=z_small, h2=0.5 * g22, tail=tail, cfg=quad)


def _flat_until(fn: _TestFn, kinks, ratio_of):
    """First kink if G is affine in the jump variable before it, else 0.

    There the compensated integrand vanishes identically; evaluating it would only
    produce roundoff amplified by the z^{-1-alpha} density.
    """
    k1 = min(kinks, default=np.inf)
    if not fn.has_u_part:
        return k1
    if not np.isfinite(k1):
        return 0.0
    r = ratio_of(0.5 * k1)
    return k1 if (r < 1.0 or r > fn.ratio_tail) else 0.0


def beta_jump_integral_F(fn: _TestFn, law: StableLaw, s, d, quad: QuadratureConfig):
    """int (G(s+z, d) - G(s,d) - d1G z) nu_beta(dz); zero for G linear in s."""
    if not fn.has_u_part:
        return 0.0, 0.0
    g0, g1, _, g11, _, _ = fn.derivs(s, d)
    kinks = [d / k - s for k in fn.ratio_knots if d / k - s > 0]
    tail = (max(0.0, d - s), 1.0 - g1, s - g0)   # ratio d/(s+z) <= 1 beyond: G = s + z
    z_flat = _flat_until(fn, kinks, lambda z: d / (s + z))
    h = lambda z: 0.0 if z < z_flat else fn.value(s + z, d) - g0 - g1 * z
    return levy_integral(h, law, kinks, z_small=quad.small_frac * s, h2=0.5 * g11, tail=tail, cfg=quad)


def beta_jump_integral_U(theta, law: StableLaw, s, quad: QuadratureConfig):
    """int ((s+z)^theta - s^theta - theta s^{theta-1} z) nu_beta(dz) <= 0."""
    st = s ** theta

    def h(z):
        u = z / s
        return st * (math.expm1(theta * math.log1p(u)) - theta * u)

    return levy_integral(h, law, (), z_small=quad.small_frac * s, h2=0.5 * theta * (theta - 1) * s ** (theta - 2),
                         tail=None, cfg=quad)


def jump_integral_components(model: ModelSpec, shape: LyapunovShape, s: float, d: float,
                             quad: QuadratureConfig = QuadratureConfig()):
    """Unweighted jump integrals at (s, d): alpha part per orientation, beta parts of F and U."""
    fn = _FFn(shape)
    out = {}
    law_a = StableLaw(model.alpha) if model.alpha < 2 else None
    if law_a is not None:
        for sign in ((1.0,) if d == 0 else (1.0, -1.0)):
            out[f"alpha{'+' if sign > 0 else '-'}"] = alpha_jump_integral(fn, law_a, s, d, sign, quad)
    if model.kind in BETA_KINDS:
        law_b = StableLaw(model.beta)
        out["beta_F"] = beta_jump_integral_F(fn, law_b, s, d, quad)
        out["beta_U"] = beta_jump_integral_U(shape.theta, law_b, s, quad)
    return out


# ------------------------------------------------------------------ operator assembly


def _check_model(model: ModelSpec):
    validate_model(model)
    if model.kind not in CERT_KINDS:
        raise ParameterError(f"no coupling operator for kind {model.kind.value}")


def _sigma2(model: ModelSpec, yt, s):
    y = yt + s
    if model.kind in (ModelKind.WW1, ModelKind.TYPE_II):
        return (math.sqrt(y) + math.sqrt(yt)) ** 2 if s < 1 else (math.sqrt(y) - math.sqrt(yt)) ** 2
    if model.kind in (ModelKind.MIXED_Y, ModelKind.TYPE_I):
        return (math.sqrt(y) - math.sqrt(yt)) ** 2
    return 0.0


class _SDCache:
    """Jump integrals depend on (s, d) only; the y~ dependence enters through sigma^2."""

    def __init__(self, model, shape, fn, quad):
        self.model, self.shape, self.fn, self.quad = model, shape, fn, quad
        self.law_a = StableLaw(model.alpha) if model.alpha < 2 else None
        self.law_b = StableLaw(model.beta) if model.kind in BETA_KINDS else None
        self.store = {}

    def get(self, s, d):
        key = (s, d)
        if key not in self.store:
            self.store[key] = self._compute(s, d)
        return self.store[key]

    def _compute(self, s, d):
        fn, quad, m = self.fn, self.quad, self.model
        derivs = fn.derivs(s, d)
        signs = (1.0,) if d == 0 else (1.0, -1.0)
        ja = {}
        for sign in signs:
            if self.law_a is not None:
                ja[sign] = alpha_jump_integral(fn, self.law_a, s, d, sign, quad)
            else:  # Gaussian second component: residual part contributes 1/2 s d22G
                ja[sign] = (0.5 * derivs[4], 0.0)
        jbf = jbu = (0.0, 0.0)
        if self.law_b is not None:
            jbf = beta_jump_integral_F(fn, self.law_b, s, d, quad)
            if fn.has_u_part:
                jbu = beta_jump_integral_U(self.shape.theta, self.law_b, s, quad)
        return derivs, ja, jbf, jbu


def _assemble(model: ModelSpec, shape: LyapunovShape, cached, yt, s, d):
    """Return (LU, errU, LF, errF) with LF worst-cased over orientation."""
    (g0, g1, g2, g11, g22, g12), ja, jbf, jbu = cached
    sig2 = _sigma2(model, yt, s)
    th = shape.theta
    lu = -model.b * s * (1 + th * s ** (th - 1)) + 0.5 * sig2 * th * (th - 1) * s ** (th - 2) + s * jbu[0]
    err_u = s * jbu[1]
    base = -model.b * s * g1 - model.lam * d * g2 + 0.5 * sig2 * g11 + s * jbf[0]
    if model.kind == ModelKind.TYPE_II:
        base += abs(model.gamma) * s * g2
    best, best_err = -np.inf, 0.0
    for sign, (val, err) in ja.items():
        lf = base + s * val
        if model.kind == ModelKind.TYPE_I:
            lf += 0.5 * sig2 * (g22 + 2 * model.rho * sign * g12)
        if lf > best:
            best = lf
        best_err = max(best_err, s * (err + jbf[1]))
    return lu, err_u, best, best_err


def coupling_generator_eval(model: ModelSpec, shape: LyapunovShape, c: float, point,
                            quad: QuadratureConfig = QuadratureConfig(), test: str = "V"):
    """L*V_{c,theta}(s, d) at point = (y~, s, d); returns (value, error bound).

    test="G0" evaluates L* on G0(s,t) = s + t instead (c is ignored).
    """
    _check_model(model)
    yt, s, d = (float(v) for v in point)
    if yt < 0 or s < 0 or d < 0:
        raise ParameterError("point must have y~, s, d >= 0")
    if s == 0:
        return -model.lam * d, 0.0
    fn = target_function(shape, test)
    cached = _SDCache(model, shape, fn, quad).get(s, d)
    lu, eu, lf, ef = _assemble(model, shape, cached, yt, s, d)
    if test == "G0":
        return lf, ef
    return c * lu + lf, c * eu + ef


def target_value(shape: LyapunovShape, c, s, d, test="V"):
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    if test == "G0":
        return s + d
    return c * (s + s ** shape.theta) + F_eval(shape, s, d).value


# ------------------------------------------------------------------ certificate search


def case_band(s, d, kappa0=2.0):
    """'i': d >= kappa0 s;  'ii': d <= s;  'iii': in between."""
    if d >= kappa0 * s:
        return "i"
    if d <= s:
        return "ii"
    return "iii"


@dataclass(frozen=True)
class GridSpec:
    s_min: float = 1e-3
    s_max: float = 10.0
    n_s: int = 52
    r_min: float = 1e-2
    r_max: float = 1e2
    n_r: int = 44
    y_tilde: tuple = (0.0, 0.1, 1.0, 10.0)

    def s_values(self):
        return np.geomspace(self.s_min, self.s_max, self.n_s)

    def ratios(self, kappa0=2.0):
        extra = [0.0, 1.0, 1.25, KNOT, 1.75, kappa0, 0.999, 1.001, kappa0 * 0.999, kappa0 * 1.001]
        return np.unique(np.concatenate([np.geomspace(self.r_min, self.r_max, self.n_r), extra]))

    def points(self, kappa0=2.0):
        s = self.s_values()
        r = self.ratios(kappa0)
        yt = np.asarray(self.y_tilde, dtype=float)
        Y, S, R = np.meshgrid(yt, s, r, indexing="ij")
        return np.column_stack([Y.ravel(), S.ravel(), (R * S).ravel()])

    def to_dict(self):
        return {"s_range": [self.s_min, self.s_max], "n_s": self.n_s, "ratio_range": [self.r_min, self.r_max],
                "n_ratio": self.n_r, "y_tilde": list(self.y_tilde)}


@dataclass
class GridEvaluation:
    points: np.ndarray
    lu: np.ndarray
    err_u: np.ndarray
    lf: np.ndarray
    err_f: np.ndarray
    u: np.ndarray
    f: np.ndarray

    def rates(self, c):
        """Per-point (-L*V/V, quadrature error / V) at weight c."""
        v = c * self.u + self.f
        return -(c * self.lu + self.lf) / v, (c * self.err_u + self.err_f) / v

    def zeta(self, c):
        r, e = self.rates(c)
        return float(np.min(r - e))


def evaluate_grid(model: ModelSpec, shape: LyapunovShape, points, quad=QuadratureConfig(), test="V"):
    _check_model(model)
    fn = target_function(shape, test)
    cache = _SDCache(model, shape, fn, quad)
    n = len(points)
    lu, eu, lf, ef = (np.empty(n) for _ in range(4))
    for i, (yt, s, d) in enumerate(points):
        if not s > 0:
            raise ParameterError("grid points need s > 0 (s = 0 is handled analytically)")
        lu[i], eu[i], lf[i], ef[i] = _assemble(model, shape, cache.get(s, d), yt, s, d)
    s, d = points[:, 1], points[:, 2]
    if test == "G0":
        return GridEvaluation(points, np.zeros(n), np.zeros(n), lf, ef, np.zeros(n), s + d)
    return GridEvaluation(points, lu, eu, lf, ef, s + s ** shape.theta, F_eval(shape, s, d).value)


def estimate_constant(model: ModelSpec, ev: GridEvaluation, kappa0=2.0):
    """Grid max of the positive remainder of L*F over its growth envelope."""
    yt, s, d = ev.points.T
    rem = ev.lf + model.lam * d * (d >= kappa0 * s)
    a = model.alpha if model.alpha < 2 else 1.0
    env = s + 0.5 * s ** (2 - a)
    if model.kind in BETA_KINDS:
        env = env + s ** (2 - model.beta)
    sig2 = np.array([_sigma2(model, *p) for p in zip(yt, s)])
    env = env + 0.5 * sig2 / s
    return float(max(np.max(rem / env), 0.0))


def seed_weight(model: ModelSpec, shape: LyapunovShape, c_hat: float) -> float:
    """The constructive choice of c from the proofs (reflection case) or c b theta > C1 (jump case)."""
    b, lam, th = model.b, model.lam, shape.theta
    if b <= 0:
        return 1e3
    c_refl = 4 * (lam + c_hat) / b + 4 * c_hat / (th * (1 - th))
    if model.kind in (ModelKind.WW1, ModelKind.TYPE_II):
        return c_refl
    c1 = 2 * (2 * lam + 2 * c_hat)
    return max(2 * c1 / (b * th), c_refl if model.kind in (ModelKind.MIXED_Y, ModelKind.TYPE_I) else 0.0)


def refine_weight(ev: GridEvaluation, c_seed: float, span: float = 12.0, iters: int = 60, keep: float = 0.99):
    """Pick c by bisection in log c.

    First bisect on the sign of the slope of zeta (quasi-concave) to locate the
    maximizer; zeta often keeps growing as c -> inf, so then bisect for the smallest
    c with zeta(c) >= keep * zeta_max, which keeps V from degenerating into c U.
    """
    lo, hi = math.log(c_seed) - span, math.log(c_seed) + span
    h = 1e-6
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ev.zeta(math.exp(mid + h)) >= ev.zeta(math.exp(mid - h)):
            lo = mid
        else:
            hi = mid
    best = max([c_seed, math.exp(0.5 * (lo + hi))], key=ev.zeta)
    z_best = ev.zeta(best)
    if not z_best > 0:
        return best
    target = keep * z_best
    lo, hi = math.log(c_seed) - span, math.log(best)
    if ev.zeta(math.exp(lo)) >= target:
        return math.exp(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ev.zeta(math.exp(mid)) >= target:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


@dataclass
class DriftCertificate:
    model: ModelSpec
    shape: LyapunovShape
    c: Optional[float]
    zeta: float
    grid: np.ndarray          # (n, 3) columns y~, s, d
    margins: np.ndarray       # -L*V/V - zeta
    quad_error: np.ndarray    # quadrature error bound / V
    c_seed: Optional[float] = None
    c_hat: Optional[float] = None
    lemma_c0: Optional[float] = None
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    grid_spec: Optional[GridSpec] = None
    test: str = "V"

    @property
    def valid(self) -> bool:
        return bool(self.zeta > 0 and np.all(self.margins >= -self.quad_error))

    @property
    def worst_index(self) -> int:
        return int(np.argmin(self.margins))

    def to_dict(self):
        yt, s, d = self.grid[self.worst_index]
        return {
            "model": self.model.to_dict(), "shape": self.shape.to_dict(), "test": self.test,
            "c": self.c, "zeta": self.zeta, "c_seed": self.c_seed, "C_hat": self.c_hat, "lemma_c0": self.lemma_c0,
            "grid": {"n_points": int(len(self.grid)), **(self.grid_spec.to_dict() if self.grid_spec else {})},
            "worst_point": {"y_tilde": yt, "s": s, "d": d, "case": case_band(s, d, self.shape.kappa0)},
            "min_margin": float(self.margins.min()),
            "max_quad_error": float(self.quad_error.max()),
            "quad_tol": {"epsabs": self.quad.epsabs, "epsrel": self.quad.epsrel},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def margins_csv(self) -> str:
        rows = ["y_tilde,s,d,margin,quad_error"]
        for (yt, s, d), m, e in zip(self.grid, self.margins, self.quad_error):
            rows.append(",".join(format(float(v), ".17g") for v in (yt, s, d, m, e)))
        return "\n".join(rows) + "\n"


def _worst(points, rates, kappa0, k=10):
    idx = np.argsort(rates)[:k]
    pts = [{"y_tilde": float(points[i, 0]), "s": float(points[i, 1]), "d": float(points[i, 2]),
            "case": case_band(points[i, 1], points[i, 2], kappa0)} for i in idx]
    return pts, [float(rates[i]) for i in idx]


def drift_certificate_search(model: ModelSpec, shape: LyapunovShape, grid_spec: GridSpec = GridSpec(),
                             quad: QuadratureConfig = QuadratureConfig(), test: str = "V") -> DriftCertificate:
    """Find (c, zeta) with L*V <= -zeta V on every grid point (quadrature slack subtracted).

    Raises CertificateNotFound with the worst points when no zeta > 0 exists on the grid.
    """
    _check_model(model)
    if model.kind == ModelKind.WW2 and shape.theta > 2 - max(model.alpha, model.beta) + 1e-12:
        raise ParameterError("WW2 certificates need theta <= 2 - max(alpha, beta)")
    pts = grid_spec.points(shape.kappa0)
    ev = evaluate_grid(model, shape, pts, quad, test)
    k0 = shape.kappa0
    if test == "G0":
        c = c_hat = c_seed = None
        rate, err = ev.rates(0.0)
    else:
        c_hat = estimate_constant(model, ev, k0)
        c_seed = seed_weight(model, shape, c_hat)
        c = refine_weight(ev, c_seed)
        rate, err = ev.rates(c)
    zeta = float(np.min(rate - err))
    flags = validate_model(model).flags
    if NON_ERGODIC in flags and zeta > 0:
        # with b <= 0 (or lam <= 0) the per-point rate tends to 0 outside any finite grid,
        # so a positive grid minimum is an artifact of truncation
        pts_w, m_w = _worst(pts, rate - err, k0)
        raise CertificateNotFound(
            f"grid minimum rate {zeta:.3g} at c={c:.4g} is a truncation artifact: b={model.b}, "
            f"lambda={model.lam} make -L*V/V decay to 0 as s or d grows", pts_w, m_w)
    if not zeta > 0:
        pts_w, m_w = _worst(pts, rate - err, k0)
        raise CertificateNotFound(
            f"no positive rate on the grid (best min rate {zeta:.4g}, c={c}); worst point {pts_w[0]}", pts_w, m_w)
    s = grid_spec.s_values()
    sg, rg = np.meshgrid(s, np.linspace(1.0, k0, 64), indexing="ij")
    lemma_c0 = lemma_bounds_check(shape, sg.ravel(), (rg * sg).ravel()) if test == "V" else None
    return DriftCertificate(model, shape, c, zeta, pts, rate - zeta, err, c_seed, c_hat, lemma_c0, quad,
                            grid_spec, test)


def recheck(cert: DriftCertificate, indices, factor: float = 10.0):
    """Re-evaluate L*V at the given grid indices with tighter quadrature.

    Returns rows (index, old value, new value, old error, new error).
    """
    tight = cert.quad.tighter(factor)
    c = cert.c if cert.c is not None else 0.0
    rows = []
    for i in indices:
        p = cert.grid[i]
        old, e_old = coupling_generator_eval(cert.model, cert.shape, c, p, cert.quad, cert.test)
        new, e_new = coupling_generator_eval(cert.model, cert.shape, c, p, tight, cert.test)
        rows.append((int(i), old, new, e_old, e_new))
    return rows
