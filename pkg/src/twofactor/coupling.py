"""Markovian couplings of two copies of the two-factor model.

The pair is carried as (y~, S = y - y~, x~, D = x - x~).  S >= 0 is structural,
so y = y~ + S >= y~ holds bit-exactly, and once S is set to 0 it stays 0.

First component
  REFLECT_SYNC  (WW1, TYPE_II): y~ receives -dB while 0 < S < 1 and +dB when
                S >= 1 or S = 0; S moves with (sqrt(y) -/+ sqrt(y~)) dB.
  SYNC          (WW2, MIXED_Y, TYPE_I, GENERAL): shared Brownian increment and
                beta-jumps split by thinning, common part driven by y~, residual by S.

Second component
  THINNING          common alpha-jumps at rate y~, residual jumps at rate S.  By
                    self-similarity the common part is y~^{1/a} Z1 and the residual
                    S^{1/a} Z2 (independent), so x and x~ each keep their law.
                    With jump_eps set, jumps above eps are drawn one by one and the
                    small ones replaced by a matched Gaussian.
  SHARED_INCREMENT  one increment dZ: D moves with (y^{1/a} - y~^{1/a}) dZ.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import json
from typing import Optional

import numpy as np

from .errors import ParameterError
from .model import ModelKind, ModelSpec
from .paths import PathConfig, PathGrid, grid_csv, ou_coefficients, tamed
from .seeding import blocks, stream
from .stable import (
    StableLaw, levy_small_jump_variance, levy_tail_first_moment, levy_tail_mass, noise_increment,
)

EPS_C = 1e-12


class YMode(str, Enum):
    REFLECT_SYNC = "REFLECT_SYNC"
    SYNC = "SYNC"


class XMode(str, Enum):
    SHARED_INCREMENT = "SHARED_INCREMENT"
    THINNING = "THINNING"


@dataclass(frozen=True)
class CouplingMode:
    y_mode: YMode
    x_mode: XMode = XMode.THINNING

    @classmethod
    def for_model(cls, spec: ModelSpec, x_mode=XMode.THINNING) -> "CouplingMode":
        y = YMode.REFLECT_SYNC if spec.kind in (ModelKind.WW1, ModelKind.TYPE_II) else YMode.SYNC
        return cls(y, XMode(x_mode))

    def check(self, spec: ModelSpec):
        if CouplingMode.for_model(spec).y_mode != self.y_mode:
            raise ParameterError(f"{spec.kind.value} requires y_mode={CouplingMode.for_model(spec).y_mode.value}")


@dataclass
class CoupledState:
    """Vectorized state; arrays of equal length."""
    y_tilde: np.ndarray
    s: np.ndarray
    x_tilde: np.ndarray
    d: np.ndarray
    coalesced: np.ndarray
    t_y: np.ndarray  # nan until coalescence

    @property
    def y(self):
        return self.y_tilde + self.s

    @property
    def x(self):
        return self.x_tilde + self.d

    @classmethod
    def from_pair(cls, init_pair, n=1):
        (y, x), (yt, xt) = init_pair
        if y < 0 or yt < 0:
            raise ParameterError("first components must be >= 0")
        s = float(y) - float(yt)
        return cls(np.full(n, float(yt)), np.full(n, s), np.full(n, float(xt)), np.full(n, float(x) - float(xt)),
                   np.full(n, s == 0.0), np.full(n, 0.0 if s == 0.0 else np.nan))


def order_pair(init_pair):
    """Return (ordered pair, swapped flag) with y >= y~."""
    (y, x), (yt, xt) = init_pair
    if y < yt:
        return ((yt, xt), (y, x)), True
    return ((y, x), (yt, xt)), False


@dataclass
class StepCounters:
    tilde_truncations: int = 0
    s_truncations: int = 0
    reflect_steps: int = 0
    sync_steps: int = 0
    coalesced_steps: int = 0
    order_violations: int = 0

    def add(self, other: "StepCounters"):
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))

    def occupancy(self):
        tot = self.reflect_steps + self.sync_steps + self.coalesced_steps
        if tot == 0:
            return {"reflect": 0.0, "sync": 0.0, "coalesced": 0.0}
        return {"reflect": self.reflect_steps / tot, "sync": self.sync_steps / tot,
                "coalesced": self.coalesced_steps / tot}


# ------------------------------------------------------------------ building blocks


def coalescence_detect(prev_s, next_s, dt, diffusion_coeff, u, eps_c=EPS_C):
    """Brownian-bridge hit test for S on one step.

    hit if next_s <= eps_c, or if u < exp(-2 prev_s next_s / (coeff^2 dt)).
    Returns (hit, fraction of the step at which the hit is dated).
    """
    prev_s = np.asarray(prev_s, dtype=float)
    next_s = np.asarray(next_s, dtype=float)
    coeff2 = np.asarray(diffusion_coeff, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p = np.where(coeff2 > 0, np.exp(-2 * prev_s * np.maximum(next_s, 0) / (coeff2 * dt)), 0.0)
        frac = np.where(next_s < 0, prev_s / (prev_s - next_s), 1.0)
    hit = (next_s <= eps_c) | (np.asarray(u) < p)
    if hit.ndim == 0:
        return bool(hit), float(frac)
    return hit, frac


def coupled_y_step_reflect(yt, s, a, b, dt, db):
    """One (Cou1) step from the left endpoint; returns (y~', S'_raw, |S diffusion coefficient|)."""
    y = yt + s
    sign = np.where((s > 0) & (s < 1), -1.0, 1.0)
    coeff = np.sqrt(y) - sign * np.sqrt(yt)
    yt_raw = yt + (a - b * yt) * dt + sign * np.sqrt(yt) * db
    s_raw = s - b * s * dt + coeff * db
    return yt_raw, s_raw, np.abs(coeff), sign


def _thinning_truncated(alpha, yt, s, dt, eps, rng):
    """Common/residual increments from jumps above eps plus a Gaussian for the rest."""
    law = StableLaw(alpha)
    m0, m1, m2 = levy_tail_mass(law, eps), levy_tail_first_moment(law, eps), levy_small_jump_variance(law, eps)

    def part(rate):
        n = rng.poisson(rate * m0 * dt)
        total = np.zeros(rate.shape)
        if n.sum():
            sizes = eps * rng.uniform(size=int(n.sum())) ** (-1.0 / alpha)  # Pareto tail of nu beyond eps
            np.add.at(total, np.repeat(np.arange(rate.size), n), sizes)
        return total - rate * m1 * dt + rng.normal(0.0, 1.0, rate.shape) * np.sqrt(rate * m2 * dt)

    return part(yt), part(s)


def coupled_x_noise(spec: ModelSpec, yt, s, dt, rng, x_mode: XMode, jump_eps=None):
    """(noise on x~, noise on D) for the alpha part of the second component."""
    a = spec.alpha
    if x_mode == XMode.SHARED_INCREMENT:
        dz = noise_increment(a, dt, rng, yt.shape)
        nt = yt ** (1 / a) * dz
        return nt, (yt + s) ** (1 / a) * dz - nt
    if jump_eps is not None and a < 2:
        return _thinning_truncated(a, yt, s, dt, jump_eps, rng)
    z1 = noise_increment(a, dt, rng, yt.shape)
    z2 = noise_increment(a, dt, rng, yt.shape)
    return yt ** (1 / a) * z1, s ** (1 / a) * z2


def coupled_step(spec: ModelSpec, st: CoupledState, t0: float, dt: float, rng, mode: CouplingMode,
                 jump_eps=None, b1=None, b2=None) -> StepCounters:
    """Advance st in place by one step starting at time t0."""
    n = st.s.shape
    kind = spec.kind
    yt, s = st.y_tilde, st.s
    y = yt + s
    cnt = StepCounters()
    live = ~st.coalesced
    cnt.coalesced_steps = int((~live).sum())

    # ---- first component
    db = None
    if mode.y_mode == YMode.REFLECT_SYNC:
        db = rng.normal(0.0, np.sqrt(dt), n)
        yt_raw, s_raw, coeff, sign = coupled_y_step_reflect(yt, s, spec.a, spec.b, dt, db)
        cnt.reflect_steps = int((live & (sign < 0)).sum())
        cnt.sync_steps = int((live & (sign > 0)).sum())
    else:
        if kind == ModelKind.GENERAL:
            ty, tyt = tamed(b1(y), dt), tamed(b1(yt), dt)
            yt_raw = yt + tyt
            s_raw = s + (ty - tyt)
        else:
            yt_raw = yt + (spec.a - spec.b * yt) * dt
            s_raw = s - spec.b * s * dt
        coeff = np.zeros(n)
        if kind in (ModelKind.MIXED_Y, ModelKind.TYPE_I):
            db = rng.normal(0.0, np.sqrt(dt), n)
            coeff = np.sqrt(y) - np.sqrt(yt)
            yt_raw = yt_raw + np.sqrt(yt) * db
            s_raw = s_raw + coeff * db
            coeff = np.abs(coeff)
        beta = spec.beta
        l1 = noise_increment(beta, dt, rng, n)
        l2 = noise_increment(beta, dt, rng, n)
        yt_raw = yt_raw + yt ** (1 / beta) * l1
        s_raw = s_raw + s ** (1 / beta) * l2
        cnt.sync_steps = int(live.sum())
    u = rng.uniform(size=n)

    # ---- second component (left-endpoint coefficients)
    nt, nd = coupled_x_noise(spec, yt, s, dt, rng, mode.x_mode, jump_eps)
    if kind == ModelKind.TYPE_I:
        db2 = rng.normal(0.0, np.sqrt(dt), n)
        w = spec.rho * db + np.sqrt(1 - spec.rho ** 2) * db2
        nt = nt + np.sqrt(yt) * w
        nd = nd + (np.sqrt(y) - np.sqrt(yt)) * w
    if kind == ModelKind.GENERAL:
        x, xt = st.x_tilde + st.d, st.x_tilde
        tx, txt = tamed(b2(x, y), dt), tamed(b2(xt, yt), dt)
        new_xt = xt + txt + nt
        new_d = st.d + (tx - txt) + nd
    else:
        e, phi = ou_coefficients(spec.lam, dt)
        g = spec.gamma if kind == ModelKind.TYPE_II else 0.0
        new_xt = st.x_tilde * e + (spec.kappa - g * yt) * phi + nt
        new_d = st.d * e - g * s * phi + nd

    # ---- coalescence and truncation
    hit, frac = coalescence_detect(np.where(live, s, 1.0), s_raw, dt, coeff, u)
    hit &= live
    cnt.s_truncations = int((live & (s_raw < 0)).sum())
    new_s = np.where(live & ~hit, s_raw, 0.0)
    st.t_y[hit] = t0 + frac[hit] * dt
    st.coalesced |= hit
    cnt.tilde_truncations = int((yt_raw < 0).sum())
    st.y_tilde = np.maximum(yt_raw, 0.0)
    st.s = new_s
    st.x_tilde, st.d = new_xt, new_d
    cnt.order_violations = int((st.y_tilde + st.s < st.y_tilde).sum())
    return cnt


# ------------------------------------------------------------------ drivers


@dataclass
class CoupledPath:
    times: np.ndarray
    y: np.ndarray
    y_tilde: np.ndarray
    x: np.ndarray
    x_tilde: np.ndarray
    coalesced: np.ndarray
    t_y: Optional[float]
    swapped: bool = False
    counters: StepCounters = field(default_factory=StepCounters)

    @property
    def legs(self):
        return PathGrid(self.times, self.y, self.x), PathGrid(self.times, self.y_tilde, self.x_tilde)

    def to_csv(self) -> str:
        return grid_csv(["t", "y", "y_tilde", "x", "x_tilde", "coalesced"],
                        [self.times, self.y, self.y_tilde, self.x, self.x_tilde, self.coalesced.astype(int)])

    def sidecar(self) -> dict:
        c = self.counters
        return {"T_Y": self.t_y, "swapped": self.swapped,
                "truncations": {"y_tilde": c.tilde_truncations, "difference": c.s_truncations},
                "branch_occupancy": c.occupancy()}

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True)


def _drifts(spec):
    return (spec.b1, spec.b2) if spec.kind == ModelKind.GENERAL else (None, None)


def simulate_coupled(spec: ModelSpec, init_pair, cfg: PathConfig, mode: Optional[CouplingMode] = None) -> CoupledPath:
    """Single coupled trajectory on the full grid, stream = stream(cfg.seed)."""
    mode = mode or CouplingMode.for_model(spec)
    mode.check(spec)
    pair, swapped = order_pair(init_pair)
    st = CoupledState.from_pair(pair, 1)
    times = cfg.grid()
    cols = np.empty((5, times.size))
    co = np.zeros(times.size, dtype=bool)
    cols[:, 0] = st.y[0], st.y_tilde[0], st.x[0], st.x_tilde[0], 0
    co[0] = st.coalesced[0]
    rng = stream(cfg.seed)
    b1, b2 = _drifts(spec)
    total = StepCounters()
    for i in range(1, times.size):
        total.add(coupled_step(spec, st, times[i - 1], cfg.dt, rng, mode, cfg.jump_eps, b1, b2))
        cols[:4, i] = st.y[0], st.y_tilde[0], st.x[0], st.x_tilde[0]
        co[i] = st.coalesced[0]
    t_y = None if np.isnan(st.t_y[0]) else float(st.t_y[0])
    return CoupledPath(times, cols[0], cols[1], cols[2], cols[3], co, t_y, swapped, total)


@dataclass
class CoupledEnsemble:
    times: np.ndarray      # recorded times
    s: np.ndarray          # (n_times, n_paths) first-component difference y - y~
    d: np.ndarray          # signed second-component difference x - x~
    y_tilde: np.ndarray
    x_tilde: np.ndarray
    t_y: np.ndarray        # nan where not coalesced by the horizon
    counters: StepCounters

    @property
    def y(self):
        return self.y_tilde + self.s

    @property
    def x(self):
        return self.x_tilde + self.d

    @property
    def n_paths(self):
        return self.s.shape[1]


def simulate_coupled_ensemble(spec: ModelSpec, init_pair, cfg: PathConfig, n_paths: int,
                              mode: Optional[CouplingMode] = None, threads: int = 1) -> CoupledEnsemble:
    """Coupled pairs in blocks; block i uses stream(cfg.seed, i), so output is thread-independent."""
    mode = mode or CouplingMode.for_model(spec)
    mode.check(spec)
    pair, _ = order_pair(init_pair)
    rec = cfg.record_index()
    out = {k: np.empty((rec.size, n_paths)) for k in ("s", "d", "y_tilde", "x_tilde")}
    t_y = np.full(n_paths, np.nan)
    b1, b2 = _drifts(spec)
    times = cfg.grid()

    def put(r, st, lo, hi):
        out["s"][r, lo:hi], out["d"][r, lo:hi] = st.s, st.d
        out["y_tilde"][r, lo:hi], out["x_tilde"][r, lo:hi] = st.y_tilde, st.x_tilde

    def run(block):
        i, lo, hi = block
        rng = stream(cfg.seed, i)
        st = CoupledState.from_pair(pair, hi - lo)
        cnt = StepCounters()
        r = 0
        if rec[0] == 0:
            put(0, st, lo, hi)
            r = 1
        for step in range(1, cfg.n_steps + 1):
            cnt.add(coupled_step(spec, st, times[step - 1], cfg.dt, rng, mode, cfg.jump_eps, b1, b2))
            if r < rec.size and rec[r] == step:
                put(r, st, lo, hi)
                r += 1
        t_y[lo:hi] = st.t_y
        return cnt

    jobs = list(blocks(n_paths))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    total = StepCounters()
    for p in parts:
        total.add(p)
    return CoupledEnsemble(rec * cfg.dt, out["s"], out["d"], out["y_tilde"], out["x_tilde"], t_y, total)
