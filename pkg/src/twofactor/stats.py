"""Monte Carlo statistics: heavy-tail helpers, bootstrap, decay fits, W1."""

from dataclasses import dataclass
import json
from typing import Optional

import numpy as np

from .coupling import simulate_coupled_ensemble
from .errors import UsageError
from .lyapunov import LyapunovShape, psi_theta, v_values
from .model import moment_bound_coeff, w_moment
from .paths import PathConfig, grid_csv, simulate_ensemble


def hill_estimator(x, frac: float = 0.01) -> float:
    """Hill estimate of the tail index from the top `frac` of |x|."""
    a = np.sort(np.abs(np.asarray(x, dtype=float)))[::-1]
    k = max(int(frac * a.size), 2)
    return 1.0 / np.mean(np.log(a[:k] / a[k]))


def median_of_means(x, n_groups: int = 20) -> float:
    x = np.asarray(x, dtype=float)
    m = x.size // n_groups
    return float(np.median(x[: m * n_groups].reshape(n_groups, m).mean(axis=1)))


def empirical_w1_1d(a, b) -> float:
    """W1 between two equal-size empirical laws on the line."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size or a.size == 0:
        raise UsageError(f"need equal non-empty lengths, got {a.size} and {b.size}")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


# ------------------------------------------------------------------ bootstrap


def bootstrap_counts(n: int, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    """(n_boot, n) multinomial resampling weights, shared across time points."""
    return rng.multinomial(n, np.full(n, 1.0 / n), size=n_boot).astype(float) / n


def bootstrap_means(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """values (n_times, n) -> bootstrap replicate means (n_boot, n_times)."""
    return weights @ values.T


def fit_rate(times, means):
    """-slope of the least-squares line through (t, log mean)."""
    slope = np.polyfit(np.asarray(times, dtype=float), np.log(means), 1)[0]
    return float(-slope)


# ------------------------------------------------------------------ decay along coupled pairs


@dataclass
class DecayReport:
    times: np.ndarray
    mean_v: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    se_v: np.ndarray
    mean_psi: np.ndarray
    bound: Optional[np.ndarray]
    eta_hat: Optional[float]
    eta_ci: Optional[tuple]
    eta_bound: Optional[float]
    fit_window: tuple
    n_paths: int
    seed: int
    degenerate: bool = False
    bound_ok: Optional[bool] = None
    bound_slack_sigmas: float = 2.0

    def to_csv(self) -> str:
        bound = self.bound if self.bound is not None else np.full(self.times.size, np.nan)
        return grid_csv(["t", "mean_V", "ci_lo", "ci_hi", "mean_psi", "bound"],
                        [self.times, self.mean_v, self.ci_lo, self.ci_hi, self.mean_psi, bound])

    def to_dict(self):
        return {"eta_hat": self.eta_hat, "eta_ci": list(self.eta_ci) if self.eta_ci else None,
                "eta_bound": self.eta_bound, "fit_window": list(self.fit_window), "n_paths": self.n_paths,
                "seed": self.seed, "degenerate": self.degenerate, "bound_ok": self.bound_ok,
                "bound_slack_sigmas": self.bound_slack_sigmas}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _window_mask(times, fully, means, fit_window, max_coalesced=0.5):
    mask = (fully <= max_coalesced) & (means > 0)
    if fit_window is not None:
        mask &= (times >= fit_window[0]) & (times <= fit_window[1])
    return mask


def decay_estimate(ens, shape: LyapunovShape, c: float, fit_window=None, eta_bound: Optional[float] = None,
                   n_boot: int = 1000, seed: int = 0, slack_sigmas: float = 2.0) -> DecayReport:
    """Ensemble means of V_{c,theta}(Delta_t) and psi_theta(Delta_t) with bootstrap bands.

    The fit uses times where at most half the paths are fully coalesced; the rate CI
    is the 2.5-97.5% range of fits to bootstrap replicate curves.  When eta_bound is
    given, mean_V(t) - slack_sigmas * se(t) <= V(Delta_0) e^{-eta_bound t} is checked
    at every time.
    """
    s, d = ens.s, np.abs(ens.d)
    v = v_values(shape, c, s, d)
    psi = psi_theta(shape.theta, s, d)
    mean_v, mean_psi = v.mean(axis=1), psi.mean(axis=1)
    rng = np.random.default_rng(seed)
    w = bootstrap_counts(ens.n_paths, n_boot, rng)
    reps = bootstrap_means(v, w)
    ci_lo, ci_hi = np.percentile(reps, [2.5, 97.5], axis=0)
    se = reps.std(axis=0, ddof=1)
    fully = ((s < 1e-10) & (d < 1e-10)).mean(axis=1)
    mask = _window_mask(ens.times, fully, mean_v, fit_window)
    degenerate = bool(np.all(mean_v == 0) or mask.sum() < 3 or fully[mask].max(initial=0) > 0.99)
    eta_hat = eta_ci = None
    window = (float(ens.times[mask][0]), float(ens.times[mask][-1])) if mask.sum() else (np.nan, np.nan)
    if not degenerate:
        eta_hat = fit_rate(ens.times[mask], mean_v[mask])
        rep_rates = [fit_rate(ens.times[mask], r[mask]) for r in reps if np.all(r[mask] > 0)]
        eta_ci = tuple(float(q) for q in np.percentile(rep_rates, [2.5, 97.5]))
    bound = bound_ok = None
    if eta_bound is not None:
        bound = mean_v[0] * np.exp(-eta_bound * ens.times)
        bound_ok = bool(np.all(mean_v - slack_sigmas * se <= bound * (1 + 1e-12)))
    return DecayReport(ens.times, mean_v, ci_lo, ci_hi, se, mean_psi, bound, eta_hat, eta_ci, eta_bound,
                       window, ens.n_paths, seed, degenerate, bound_ok, slack_sigmas)


def post_coalescence_error(ens, lam: float, tol_time: float = 1e-12):
    """Largest |(|D_{t2}|/|D_{t1}|) e^{lam (t2-t1)} - 1| / (t2 - t1) over recorded pairs after T_Y.

    Returns (max error, number of ratios checked).
    """
    worst, count = 0.0, 0
    t = ens.times
    for j in np.flatnonzero(np.isfinite(ens.t_y)):
        k = np.searchsorted(t, ens.t_y[j] - tol_time)
        dj = np.abs(ens.d[k:, j])
        if dj.size < 2:
            continue
        ok = dj[:-1] > 0
        tau = np.diff(t[k:])[ok]
        rel = np.abs(dj[1:][ok] / dj[:-1][ok] * np.exp(lam * tau) - 1) / tau
        if rel.size:
            worst = max(worst, float(rel.max()))
            count += rel.size
    return worst, count


# ------------------------------------------------------------------ Wasserstein decay


@dataclass
class WassersteinReport:
    times: np.ndarray
    coupling_bound: np.ndarray   # mean psi_theta(Delta_t)
    coupling_se: np.ndarray
    w1_y: np.ndarray             # empirical W1 between the two first-component marginals
    w1_x: np.ndarray
    eta_hat: Optional[float]
    eta_ci: Optional[tuple]
    dominated: bool

    def to_csv(self) -> str:
        return grid_csv(["t", "coupling_bound", "se", "w1_y", "w1_x"],
                        [self.times, self.coupling_bound, self.coupling_se, self.w1_y, self.w1_x])

    def to_dict(self):
        return {"eta_hat": self.eta_hat, "eta_ci": list(self.eta_ci) if self.eta_ci else None,
                "dominated": self.dominated}


def wasserstein_report(ens, theta: float, n_boot: int = 1000, seed: int = 0, fit_window=None,
                       slack_sigmas: float = 2.0) -> WassersteinReport:
    """Coupling upper bound E psi_theta(Delta_t) against marginal empirical W1 lower bounds.

    Each leg of a coupled ensemble is a sample of the law started from its own initial
    state, so W1 between the legs' empirical marginals estimates W1 of the two laws.
    """
    s, d = ens.s, np.abs(ens.d)
    psi = psi_theta(theta, s, d)
    mean_psi = psi.mean(axis=1)
    reps = bootstrap_means(psi, bootstrap_counts(ens.n_paths, n_boot, np.random.default_rng(seed)))
    se = reps.std(axis=0, ddof=1)
    y, yt, x, xt = ens.y, ens.y_tilde, ens.x, ens.x_tilde
    w1_y = np.array([empirical_w1_1d(y[k], yt[k]) for k in range(ens.times.size)])
    w1_x = np.array([empirical_w1_1d(x[k], xt[k]) for k in range(ens.times.size)])
    dominated = bool(np.all(mean_psi + slack_sigmas * se >= np.maximum(w1_y, w1_x)))
    fully = ((s < 1e-10) & (d < 1e-10)).mean(axis=1)
    mask = _window_mask(ens.times, fully, mean_psi, fit_window)
    eta_hat = eta_ci = None
    if mask.sum() >= 3:
        eta_hat = fit_rate(ens.times[mask], mean_psi[mask])
        rr = [fit_rate(ens.times[mask], r[mask]) for r in reps if np.all(r[mask] > 0)]
        eta_ci = tuple(float(q) for q in np.percentile(rr, [2.5, 97.5]))
    return WassersteinReport(ens.times, mean_psi, se, w1_y, w1_x, eta_hat, eta_ci, dominated)


def wasserstein_decay(model, init_1, init_2, cfg, n_paths: int, theta: float = 0.3, mode=None,
                      threads: int = 1, **kw) -> WassersteinReport:
    pair = (tuple(init_1), tuple(init_2))
    ens = simulate_coupled_ensemble(model, pair, cfg, n_paths, mode, threads)
    return wasserstein_report(ens, theta, seed=cfg.seed, **kw)


# ------------------------------------------------------------------ moment growth


@dataclass
class MomentReport:
    times: np.ndarray
    mean_w: np.ndarray
    se_w: np.ndarray
    bound: np.ndarray
    c0: float
    passed: bool

    @property
    def margins(self):
        return self.bound - self.mean_w

    def to_dict(self):
        return {"times": self.times.tolist(), "mean_W": self.mean_w.tolist(), "se": self.se_w.tolist(),
                "bound": self.bound.tolist(), "C0": self.c0, "passed": self.passed}


def moment_growth_check(model, init, times, n_paths: int, dt: float = 1e-3, seed: int = 0, threads: int = 1,
                        slack_sigmas: float = 2.0) -> MomentReport:
    """mean W(Y_t, X_t) <= W(y,x) e^{C0 t} up to slack_sigmas standard errors."""
    times = np.asarray(times, dtype=float)
    c0 = moment_bound_coeff(model)
    w0 = float(w_moment(*init))
    t_end = float(times.max())
    if t_end == 0:
        return MomentReport(times, np.full(times.size, w0), np.zeros(times.size), np.full(times.size, w0), c0, True)
    steps = np.rint(times / dt).astype(int)
    every = int(np.gcd.reduce(steps[steps > 0]))
    cfg = PathConfig(t_end=t_end, dt=dt, seed=seed, record_every=every)
    ens = simulate_ensemble(model, init, cfg, n_paths, threads)
    idx = steps // every
    w = w_moment(ens.y[idx], ens.x[idx])
    mean_w = w.mean(axis=1)
    se = w.std(axis=1, ddof=1) / np.sqrt(n_paths)
    bound = w0 * np.exp(c0 * times)
    passed = bool(np.all(mean_w - slack_sigmas * se <= bound))
    return MomentReport(times, mean_w, se, bound, c0, passed)
