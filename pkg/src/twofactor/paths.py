"""Fixed-grid simulation of single trajectories and independent ensembles."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import io
from typing import Optional

import numpy as np

from .errors import ParameterError
from .model import BETA_KINDS, BROWNIAN_Y_KINDS, ModelKind, ModelSpec
from .seeding import blocks, stream
from .stable import noise_increment


@dataclass(frozen=True)
class PathConfig:
    t_end: float = 1.0
    dt: float = 1e-3
    scheme: str = "EXACT_CIR"   # or "EULER"
    seed: int = 0
    jump_eps: Optional[float] = None  # only used by the truncated-jump coupling
    record_every: int = 1       # ensembles keep every k-th grid time

    def __post_init__(self):
        if self.scheme not in ("EXACT_CIR", "EULER"):
            raise ParameterError(f"scheme must be EXACT_CIR or EULER, got {self.scheme!r}")
        if not self.dt > 0 or self.t_end < 0:
            raise ParameterError("need dt > 0 and t_end >= 0")
        if self.t_end > 0 and self.dt > self.t_end * (1 + 1e-12):
            raise ParameterError("dt must not exceed t_end")
        if self.jump_eps is not None and not self.jump_eps > 0:
            raise ParameterError(f"jump_eps must be > 0, got {self.jump_eps}")
        if int(self.record_every) < 1:
            raise ParameterError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def record_index(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, int(self.record_every))
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


@dataclass
class PathGrid:
    times: np.ndarray
    y: np.ndarray
    x: np.ndarray

    @property
    def states(self):
        return list(zip(self.y.tolist(), self.x.tolist()))

    def to_csv(self) -> str:
        return grid_csv(["t", "y", "x"], [self.times, self.y, self.x])


def grid_csv(header, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return buf.getvalue()


# ------------------------------------------------------------------ one-step maps


def cir_exact_step(y, a: float, b: float, dt: float, rng: np.random.Generator):
    """Exact transition of dY = (a - bY)dt + sqrt(Y) dB.

    Y_dt = c * chi'^2(4a, lam) with c = (1-e^{-b dt})/(4b), lam = y e^{-b dt}/c,
    sampled as a Poisson(lam/2) mixture of Gamma(2a + N, 2) so that a = 0 works.
    """
    y = np.asarray(y, dtype=float)
    if b != 0:
        e = np.exp(-b * dt)
        c = -np.expm1(-b * dt) / (4 * b)
    else:
        e, c = 1.0, dt / 4
    n = rng.poisson(y * e / (2 * c))
    shape = 2.0 * a + n
    out = np.where(shape > 0, c * rng.gamma(np.where(shape > 0, shape, 1.0), 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def cir_euler_step(y, a, b, dt, db):
    return np.maximum(0.0, y + (a - b * y) * dt + np.sqrt(y) * db)


def stable_cir_step(y, a: float, b: float, beta: float, dt: float, rng: np.random.Generator,
                    return_truncated: bool = False):
    """Euler step of dY = (a - bY)dt + Y^{1/beta} dL, truncated at 0."""
    y = np.asarray(y, dtype=float)
    dl = noise_increment(beta, dt, rng, y.shape if y.ndim else None)
    raw = y + (a - b * y) * dt + y ** (1.0 / beta) * dl
    out = np.maximum(raw, 0.0)
    out = float(out) if out.ndim == 0 else out
    return (out, raw < 0) if return_truncated else out


def ou_coefficients(lam: float, dt: float):
    """(e^{-lam dt}, (1 - e^{-lam dt})/lam): exact propagator of the linear drift."""
    if lam == 0:
        return 1.0, dt
    return np.exp(-lam * dt), -np.expm1(-lam * dt) / lam


def stable_ou_step(x, y_prev, kappa: float, lam: float, gamma: float, alpha: float, dt: float,
                   rng: np.random.Generator, exact_drift: bool = True):
    """X step with noise y_prev^{1/alpha} dZ.

    exact_drift=True integrates the linear drift kappa - lam x - gamma y_prev
    exactly over the step (exponential Euler); False is the plain Euler map.
    """
    x = np.asarray(x, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    shape = np.broadcast(x, y_prev).shape
    dz = noise_increment(alpha, dt, rng, shape if shape else None)
    out = _ou_drift(x, kappa - gamma * y_prev, lam, dt, exact_drift) + y_prev ** (1.0 / alpha) * dz
    return float(out) if np.ndim(out) == 0 else out


def _ou_drift(x, level, lam, dt, exact):
    if exact:
        e, phi = ou_coefficients(lam, dt)
        return x * e + level * phi
    return x + (level - lam * x) * dt


# ------------------------------------------------------------------ model step


def _uses_exact_cir(spec: ModelSpec, scheme: str) -> bool:
    return scheme == "EXACT_CIR" and spec.kind in (ModelKind.WW1, ModelKind.TYPE_II)


def tamed(drift, dt):
    """Tamed Euler drift increment b dt / (1 + dt |b|); keeps superlinear drifts from overflowing."""
    return drift * dt / (1.0 + dt * np.abs(drift))


def model_step(spec: ModelSpec, y, x, dt, rng, scheme="EXACT_CIR", b1=None, b2=None):
    """Advance arrays (y, x) by one step; returns (y', x', truncated_mask)."""
    n = y.shape
    kind = spec.kind
    trunc = np.zeros(n, dtype=bool)
    db = None
    if kind == ModelKind.GENERAL:
        dl = noise_increment(spec.beta, dt, rng, n)
        raw = y + tamed(b1(y), dt) + y ** (1.0 / spec.beta) * dl
    elif _uses_exact_cir(spec, scheme):
        raw = cir_exact_step(y, spec.a, spec.b, dt, rng)
    else:
        raw = y + (spec.a - spec.b * y) * dt
        if kind in BROWNIAN_Y_KINDS:
            db = rng.normal(0.0, np.sqrt(dt), n)
            raw = raw + np.sqrt(y) * db
        if kind in BETA_KINDS:
            raw = raw + y ** (1.0 / spec.beta) * noise_increment(spec.beta, dt, rng, n)
    trunc = raw < 0
    y_new = np.maximum(raw, 0.0)

    dz = noise_increment(spec.alpha, dt, rng, n)
    noise = y ** (1.0 / spec.alpha) * dz
    if kind == ModelKind.TYPE_I:
        db2 = rng.normal(0.0, np.sqrt(dt), n)
        noise = noise + np.sqrt(y) * (spec.rho * db + np.sqrt(1 - spec.rho ** 2) * db2)
    if kind == ModelKind.GENERAL:
        x_new = x + tamed(b2(x, y), dt) + noise
    else:
        g = spec.gamma if kind == ModelKind.TYPE_II else 0.0
        x_new = _ou_drift(x, spec.kappa - g * y, spec.lam, dt, True) + noise
    return y_new, x_new, trunc


def simulate_path(spec: ModelSpec, init, cfg: PathConfig) -> PathGrid:
    """Single trajectory on the full grid; stream = stream(cfg.seed)."""
    times = cfg.grid()
    ys = np.empty(times.size)
    xs = np.empty(times.size)
    ys[0], xs[0] = float(init[0]), float(init[1])
    if ys[0] < 0:
        raise ParameterError("initial y must be >= 0")
    rng = stream(cfg.seed)
    y, x = ys[:1].copy(), xs[:1].copy()
    b1, b2 = (spec.b1, spec.b2) if spec.kind == ModelKind.GENERAL else (None, None)
    for i in range(1, times.size):
        y, x, _ = model_step(spec, y, x, cfg.dt, rng, cfg.scheme, b1, b2)
        ys[i], xs[i] = y[0], x[0]
    return PathGrid(times, ys, xs)


@dataclass
class Ensemble:
    times: np.ndarray      # recorded times
    y: np.ndarray          # (n_times, n_paths)
    x: np.ndarray
    truncations: int


def simulate_ensemble(spec: ModelSpec, init, cfg: PathConfig, n_paths: int, threads: int = 1) -> Ensemble:
    """Independent paths from a common initial state, recorded on cfg.record_index().

    Paths are simulated in blocks of seeding.BLOCK_SIZE; block i draws from
    stream(cfg.seed, i), so results are independent of `threads`.
    """
    rec = cfg.record_index()
    out_y = np.empty((rec.size, n_paths))
    out_x = np.empty((rec.size, n_paths))
    b1, b2 = (spec.b1, spec.b2) if spec.kind == ModelKind.GENERAL else (None, None)

    def run(block):
        i, lo, hi = block
        rng = stream(cfg.seed, i)
        y = np.full(hi - lo, float(init[0]))
        x = np.full(hi - lo, float(init[1]))
        n_tr = 0
        r = 0
        if rec[0] == 0:
            out_y[0, lo:hi], out_x[0, lo:hi] = y, x
            r = 1
        for step in range(1, cfg.n_steps + 1):
            y, x, tr = model_step(spec, y, x, cfg.dt, rng, cfg.scheme, b1, b2)
            n_tr += int(tr.sum())
            if r < rec.size and rec[r] == step:
                out_y[r, lo:hi], out_x[r, lo:hi] = y, x
                r += 1
        return n_tr

    jobs = list(blocks(n_paths))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            counts = list(ex.map(run, jobs))
    else:
        counts = [run(j) for j in jobs]
    return Ensemble(rec * cfg.dt, out_y, out_x, int(sum(counts)))
