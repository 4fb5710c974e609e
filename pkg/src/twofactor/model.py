"""Two-factor models, validation, the generator L and the first-moment constant."""

from dataclasses import dataclass, field, fields, replace
from enum import Enum
import json
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .quadrature import QuadratureConfig, levy_integral
from .stable import StableLaw, levy_small_jump_variance, levy_tail_first_moment


class ModelKind(str, Enum):
    WW1 = "WW1"          # CIR first factor, alpha-stable second factor
    WW2 = "WW2"          # beta-stable first factor
    MIXED_Y = "MIXED_Y"  # Brownian + beta-stable first factor
    TYPE_I = "TYPE_I"    # MIXED_Y plus correlated Brownian noise in X
    TYPE_II = "TYPE_II"  # WW1 with X drift kappa - lambda x - gamma y
    GENERAL = "GENERAL"  # monotone drifts b1, b2


BETA_KINDS = (ModelKind.WW2, ModelKind.MIXED_Y, ModelKind.TYPE_I, ModelKind.GENERAL)
BROWNIAN_Y_KINDS = (ModelKind.WW1, ModelKind.MIXED_Y, ModelKind.TYPE_I, ModelKind.TYPE_II)

NON_ERGODIC = "non-ergodic-hypothesis"

_SAFE_NS = {k: getattr(np, k) for k in ("exp", "log", "sqrt", "abs", "sin", "cos", "tanh", "arctan", "minimum", "maximum", "pi")}


def compile_drift(expr: str, var: str) -> Callable:
    """Drift from a numpy expression in one variable, e.g. ``"1 - 2*y - y**3"``."""
    code = compile(expr, "<drift>", "eval")
    for name in code.co_names:
        if name not in _SAFE_NS and name != var:
            raise ValidationError("drift", f"name {name!r} not allowed in {expr!r}")
    return lambda v: eval(code, {"__builtins__": {}}, {**_SAFE_NS, var: v})


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = ModelKind.WW1
    a: float = 1.0
    b: float = 1.0
    kappa: float = 0.0
    lam: float = 1.0
    gamma: float = 0.0
    rho: float = 0.0
    alpha: float = 1.5
    beta: float = 1.5
    drift1: Optional[str] = None
    drift2: Optional[str] = None
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    drift_range: tuple = (-10.0, 10.0)
    flags: tuple = field(default=(), compare=False)

    # JSON uses "lambda" for the X mean-reversion rate
    _JSON_RENAME = {"lam": "lambda"}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "flags":
                continue
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            if isinstance(v, tuple):
                v = list(v)
            out[self._JSON_RENAME.get(f.name, f.name)] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        back = {v: k for k, v in cls._JSON_RENAME.items()}
        names = {f.name for f in fields(cls)} - {"flags"}
        kw = {}
        for k, v in d.items():
            name = back.get(k, k)
            if name not in names or k in cls._JSON_RENAME:
                raise ValidationError(k, "unknown field")
            kw[name] = v
        if "kind" in kw:
            try:
                kw["kind"] = ModelKind(kw["kind"])
            except ValueError:
                raise ValidationError("kind", f"unknown kind {kw['kind']!r}") from None
        if "drift_range" in kw:
            kw["drift_range"] = tuple(kw["drift_range"])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))

    @property
    def b1(self) -> Callable:
        if self.kind == ModelKind.GENERAL:
            return compile_drift(self.drift1, "y")
        return lambda y: self.a - self.b * y

    @property
    def b2(self) -> Callable:
        """X drift as a function of (x, y)."""
        if self.kind == ModelKind.GENERAL:
            f = compile_drift(self.drift2, "x")
            return lambda x, y: f(x)
        g = self.gamma if self.kind == ModelKind.TYPE_II else 0.0
        return lambda x, y: self.kappa - self.lam * x - g * y


def validate_model(spec: ModelSpec) -> ModelSpec:
    """Check invariants; return a copy with ``flags`` set (e.g. non-ergodic-hypothesis)."""
    if not isinstance(spec.kind, ModelKind):
        raise ValidationError("kind", f"unknown kind {spec.kind!r}")
    for name in ("a", "b", "kappa", "lam", "gamma", "rho", "alpha", "beta"):
        v = getattr(spec, name)
        if not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ValidationError(name, f"must be a finite number, got {v!r}")
    if not 1.0 < spec.alpha <= 2.0:
        raise ValidationError("alpha", f"must lie in (1,2], got {spec.alpha}")
    flags = []
    if spec.kind == ModelKind.GENERAL:
        _validate_general(spec)
    else:
        if spec.a < 0:
            raise ValidationError("a", f"must be >= 0, got {spec.a}")
        if spec.kind in BETA_KINDS and not 1.0 < spec.beta <= 2.0:
            raise ValidationError("beta", f"must lie in (1,2], got {spec.beta}")
        if not -1.0 <= spec.rho <= 1.0:
            raise ValidationError("rho", f"must lie in [-1,1], got {spec.rho}")
        if spec.kind != ModelKind.TYPE_II and spec.gamma != 0:
            raise ValidationError("gamma", "only TYPE_II carries a Y-to-X drift feedback")
        if spec.kind != ModelKind.TYPE_I and spec.rho != 0:
            raise ValidationError("rho", "only TYPE_I carries a Brownian correlation")
        if spec.b <= 0 or spec.lam <= 0:
            flags.append(NON_ERGODIC)
    return replace(spec, flags=tuple(flags))


def _validate_general(spec: ModelSpec):
    if not 1.0 < spec.beta <= 2.0:
        raise ValidationError("beta", f"must lie in (1,2], got {spec.beta}")
    for i, (expr, lam, var) in enumerate([(spec.drift1, spec.lambda1, "y"), (spec.drift2, spec.lambda2, "x")], 1):
        if expr is None:
            raise ValidationError(f"drift{i}", "required for GENERAL")
        if lam is None or not lam > 0:
            raise ValidationError(f"lambda{i}", "monotonicity constant must be > 0")
        f = compile_drift(expr, var)
        lo, hi = spec.drift_range
        pts = np.linspace(max(lo, 0.0) if i == 1 else lo, hi, 401)
        v = np.asarray(f(pts), dtype=float) * np.ones_like(pts)
        # b(u) - b(w) <= -lam (u - w) for all sampled u > w
        du = pts[:, None] - pts[None, :]
        dv = v[:, None] - v[None, :]
        bad = (du > 0) & (dv > -lam * du + 1e-12)
        if bad.any():
            raise ValidationError(f"drift{i}", f"monotonicity with lambda{i}={lam} fails on the sampled range")


# ---------------------------------------------------------------- test fields


@dataclass(frozen=True)
class Field:
    """Scalar field f(y, x) with derivatives.

    grad -> (f_y, f_x); hess -> (f_yy, f_yx, f_xx). ``kinks_x(y, x)`` lists
    jump sizes z at which z -> f(y, x+z) is not smooth; ``tail_x(y, x)``
    optionally returns (z0, slope) with f(y, x+z) affine in z for z >= z0.
    The *_y variants play the same role for jumps in the first variable.
    """

    value: Callable
    grad: Callable
    hess: Callable
    kinks_x: Callable = lambda y, x: ()
    tail_x: Optional[Callable] = None
    kinks_y: Callable = lambda y, x: ()
    tail_y: Optional[Callable] = None


def h_moment(x):
    """C^2 modification of |x|: 3/4 + 3x^2/8 - x^4/64 on [-2,2]."""
    x = np.asarray(x, dtype=float)
    inner = 0.75 + 0.375 * x * x - x ** 4 / 64
    return np.where(np.abs(x) >= 2, np.abs(x), inner)


def h_moment_d1(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) >= 2, np.sign(x), 0.75 * x - x ** 3 / 16)


def h_moment_d2(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) >= 2, 0.0, 0.75 - 0.1875 * x * x)


H_D1_SUP = 1.0
H_D2_SUP = 0.75


def w_moment(y, x):
    return 1.0 + y + h_moment(x)


W_FIELD = Field(
    value=lambda y, x: float(w_moment(y, x)),
    grad=lambda y, x: (1.0, float(h_moment_d1(x))),
    hess=lambda y, x: (0.0, 0.0, float(h_moment_d2(x))),
    kinks_x=lambda y, x: tuple(k - x for k in (-2.0, 0.0, 2.0)),
    tail_x=lambda y, x: (max(2.0 - x, 0.0), 1.0),
    tail_y=lambda y, x: (0.0, 1.0),
)


def _jump_term(f: Field, law: StableLaw, y, x, axis: str, quad: QuadratureConfig):
    """int (f(.+z) - f - d f z) nu(dz) along one coordinate; returns (value, err)."""
    fy, fx = f.grad(y, x)
    fyy, _, fxx = f.hess(y, x)
    f0 = f.value(y, x)
    if axis == "x":
        shift, d1, d2, kinks, tail = (lambda z: f.value(y, x + z)), fx, fxx, f.kinks_x(y, x), f.tail_x
    else:
        shift, d1, d2, kinks, tail = (lambda z: f.value(y + z, x)), fy, fyy, f.kinks_y(y, x), f.tail_y
    h = lambda z: shift(z) - f0 - d1 * z
    pos = [k for k in kinks if k > 0]
    # f is C^2, so the Taylor piece may straddle a kink; its residual enters the error bound
    z_small = quad.small_frac
    tl = None
    if tail is not None:
        z0, slope = tail(y, x)
        z0 = max(z0, max(pos, default=0.0), 1e-300)
        # affine continuation h(z) = (slope - d1) z + (f(z0) - slope z0 - f0)
        tl = (z0, slope - d1, shift(z0) - slope * z0 - f0)
    return levy_integral(h, law, pos, z_small=z_small, h2=0.5 * d2, tail=tl, cfg=quad)


def generator_apply(spec: ModelSpec, f: Field, point, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """(Lf)(y, x) for the uncoupled process of kind ``spec.kind``."""
    y, x = float(point[0]), float(point[1])
    fy, fx = f.grad(y, x)
    fyy, fyx, fxx = f.hess(y, x)
    out = spec.b1(y) * fy + spec.b2(x, y) * fx
    if spec.kind in BROWNIAN_Y_KINDS:
        out += 0.5 * y * fyy
    if spec.kind == ModelKind.TYPE_I:
        out += 0.5 * y * fxx + spec.rho * y * fyx
    if y > 0:
        if spec.alpha == 2.0:
            out += 0.5 * y * fxx
        else:
            out += y * _jump_term(f, StableLaw(spec.alpha), y, x, "x", quad)[0]
        if spec.kind in BETA_KINDS:
            if spec.beta == 2.0:
                out += 0.5 * y * fyy
            else:
                out += y * _jump_term(f, StableLaw(spec.beta), y, x, "y", quad)[0]
    return out


def moment_bound_coeff(spec: ModelSpec) -> float:
    """C0 with L W <= C0 W for W = 1 + y + h(x) (sum of the coefficient bounds)."""
    if spec.alpha == 2.0:
        noise = 0.5 * H_D2_SUP
    else:
        law = StableLaw(spec.alpha)
        noise = 0.5 * H_D2_SUP * levy_small_jump_variance(law, 1.0) + 2 * H_D1_SUP * levy_tail_first_moment(law, 1.0)
    if spec.kind == ModelKind.GENERAL:
        # monotone drifts: b1(y) <= b1(0) and h'(x) b2(x) <= |h'(x)| |b2(0)|
        return abs(float(spec.b1(0.0))) + H_D1_SUP * abs(float(spec.b2(0.0, 0.0))) + noise
    c0 = spec.a + abs(spec.b) + H_D1_SUP * (abs(spec.kappa) + abs(spec.lam)) + noise
    if spec.kind == ModelKind.TYPE_II:
        c0 += H_D1_SUP * abs(spec.gamma)
    if spec.kind == ModelKind.TYPE_I:
        c0 += 0.5 * H_D2_SUP
    return c0
