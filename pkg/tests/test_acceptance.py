"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here and not tuned after the fact.  Seeds are fixed up front.
"""

import json
import time

import numpy as np
import pytest
from scipy import integrate, stats as sps

from twofactor.certify import GridSpec, case_band, drift_certificate_search, jump_integral_components, recheck
from twofactor.cli import main
from twofactor.coupling import simulate_coupled_ensemble
from twofactor.errors import CertificateNotFound
from twofactor.lyapunov import LyapunovShape
from twofactor.model import ModelKind, ModelSpec
from twofactor.paths import PathConfig, simulate_ensemble
from twofactor.stable import StableLaw, levy_tail_first_moment, levy_tail_mass, sample_stable_increment
from twofactor.stats import decay_estimate, hill_estimator, moment_growth_check, post_coalescence_error, wasserstein_report

WW1 = ModelSpec(kind=ModelKind.WW1, a=1.0, b=1.0, kappa=0.0, lam=1.0, alpha=1.5)
WW1_SHAPE = LyapunovShape(theta=0.3, delta=1.0)
WW2 = ModelSpec(kind=ModelKind.WW2, a=1.0, b=1.0, kappa=0.0, lam=1.0, alpha=1.5, beta=1.5)
WW2_SHAPE = LyapunovShape(theta=0.5, delta=1.0)
PAIR = ((2.0, 1.0), (1.0, 0.0))

CERT_RUNTIME_S = 300.0
DECAY_RUNTIME_S = 600.0
SLOPE_TOL = 0.05
CONTRACTION_TOL = 1e-6
KS_LEVEL = 0.01
MEAN_SIGMAS = 4.0
HILL_TOL = 0.1
TAIL_RTOL = 1e-8


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail
    return report


@pytest.fixture(scope="module")
def ww1_cert():
    t0 = time.perf_counter()
    cert = drift_certificate_search(WW1, WW1_SHAPE, GridSpec())
    return cert, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ww1_coupled():
    cfg = PathConfig(t_end=5.0, dt=1e-3, seed=5, record_every=10)
    t0 = time.perf_counter()
    ens = simulate_coupled_ensemble(WW1, PAIR, cfg, 10 ** 4)
    return ens, time.perf_counter() - t0


def test_01_ww1_certificate(ww1_cert, verdict):
    cert, elapsed = ww1_cert
    grid = cert.grid
    s, d = grid[:, 1], grid[:, 2]
    cases = {case_band(a, b, WW1_SHAPE.kappa0) for a, b in zip(s, d)}
    idx = np.random.default_rng(1).choice(len(grid), 10, replace=False)
    rows = recheck(cert, idx, factor=10)
    stable = all(abs(new - old) <= e_old + e_new for _, old, new, e_old, e_new in rows)
    ok = (cert.zeta > 0 and cert.valid and len(grid) >= 10 ** 4 and s.max() / s.min() >= 1e4
          and cases == {"i", "ii", "iii"} and set(grid[:, 0]) == {0.0, 0.1, 1.0, 10.0}
          and stable and elapsed <= CERT_RUNTIME_S)
    verdict("1 WW1 certificate", ok,
            f"zeta={cert.zeta:.4g} c={cert.c:.4g} points={len(grid)} min(margin+err)="
            f"{np.min(cert.margins + cert.quad_error):.3g} recheck_stable={stable} time={elapsed:.1f}s")


def test_02_ww2_certificate(verdict):
    cert = drift_certificate_search(WW2, WW2_SHAPE, GridSpec())
    rows = recheck(cert, np.random.default_rng(2).choice(len(cert.grid), 10, replace=False), factor=10)
    stable = all(abs(new - old) <= e_old + e_new for _, old, new, e_old, e_new in rows)
    verdict("2 WW2 certificate", cert.zeta > 0 and cert.valid and stable,
            f"zeta={cert.zeta:.4g} c={cert.c:.4g} recheck_stable={stable}")


def test_03_plain_sum_fails_in_middle_band(verdict):
    try:
        cert = drift_certificate_search(WW1, WW1_SHAPE, GridSpec(), test="G0")
    except CertificateNotFound as e:
        cases = [p["case"] for p in e.worst_points]
        worst = e.worst_points[0]
        verdict("3 G0 fails in case (iii)", cases[0] == "iii",
                f"search failed as expected; worst case band {cases[0]!r} at s={worst['s']:.3g} "
                f"d/s={worst['d'] / worst['s']:.3g} rate={e.worst_margins[0]:.3g}; 10 worst bands {cases}")
    else:
        verdict("3 G0 fails in case (iii)", False, f"search unexpectedly succeeded with zeta={cert.zeta:.3g}")


def test_04_scaling_slopes(verdict):
    s = np.array([1e-1, 1e-2, 1e-3])
    found = {}
    for spec, shape in ((WW1, WW1_SHAPE), (WW2, WW2_SHAPE)):
        comps = [jump_integral_components(spec, shape, si, 2.5 * si) for si in s]
        for key in comps[0]:
            vals = np.abs([c[key][0] for c in comps])
            found[f"{spec.kind.value}:{key}"] = np.polyfit(np.log(s), np.log(vals), 1)[0]
    # F-part integrals are (1-alpha) / (1-beta) homogeneous; the U part s^theta has degree theta-beta
    expected = {k: (WW2_SHAPE.theta - 1.5 if k.endswith("beta_U") else 1 - 1.5) for k in found}
    ok = all(abs(found[k] - expected[k]) <= SLOPE_TOL for k in found)
    verdict("4 jump-integral scaling", ok, ", ".join(f"{k}={v:.4f}(exp {expected[k]:.2f})" for k, v in found.items()))


def test_05_coupled_decay(ww1_cert, ww1_coupled, verdict):
    cert, _ = ww1_cert
    ens, elapsed = ww1_coupled
    eta = min(WW1.lam, cert.zeta)
    rep = decay_estimate(ens, WW1_SHAPE, cert.c, eta_bound=eta, n_boot=1000, seed=5)
    ok = bool(rep.bound_ok) and rep.eta_hat is not None and rep.eta_hat > 0 and elapsed <= DECAY_RUNTIME_S
    verdict("5 coupled decay", ok,
            f"bound rate={eta:.4g} eta_hat={rep.eta_hat:.4g} CI={rep.eta_ci} bound_ok={rep.bound_ok} "
            f"sim_time={elapsed:.1f}s")


def test_06_post_coalescence(ww1_coupled, verdict):
    ens, _ = ww1_coupled
    err, n = post_coalescence_error(ens, WW1.lam)
    verdict("6 post-coalescence contraction", n > 0 and err <= CONTRACTION_TOL,
            f"max rel error per unit lag={err:.3g} over {n} ratios")


def test_07_order_and_absorption(ww1_coupled, verdict):
    runs = [ww1_coupled[0]]
    cfg = PathConfig(t_end=2.0, dt=1e-2, seed=7)
    for spec in (WW2, ModelSpec(kind=ModelKind.MIXED_Y), ModelSpec(kind=ModelKind.TYPE_I, rho=0.4),
                 ModelSpec(kind=ModelKind.TYPE_II, gamma=0.7)):
        runs.append(simulate_coupled_ensemble(spec, PAIR, cfg, 2000))
    violations = sum(e.counters.order_violations + int(np.sum(e.y < e.y_tilde)) for e in runs)
    unequal = 0
    for e in runs:
        for j in np.flatnonzero(np.isfinite(e.t_y)):
            after = e.times >= e.t_y[j] - 1e-12
            unequal += int(not np.array_equal(e.y[after, j], e.y_tilde[after, j]))
    verdict("7 order and absorption", violations == 0 and unequal == 0,
            f"order violations={violations}, paths not bit-equal after T_Y={unequal}, runs={len(runs)}")


def test_08_marginal_law(verdict):
    n = 10 ** 4
    ens = simulate_coupled_ensemble(WW1, PAIR, PathConfig(t_end=1.0, dt=1e-3, seed=8, record_every=1000), n)
    parts, ok = [], True
    for leg, start, seed in (("y", PAIR[0], 1008), ("y_tilde", PAIR[1], 2008)):
        ref = simulate_ensemble(WW1, start, PathConfig(t_end=1.0, dt=1e-3, seed=seed, record_every=1000), n).y[-1]
        a = getattr(ens, leg)[-1]
        p = sps.ks_2samp(a, ref).pvalue
        se = np.sqrt(a.var(ddof=1) / n + ref.var(ddof=1) / n)
        ok &= p >= KS_LEVEL and abs(a.mean() - ref.mean()) <= MEAN_SIGMAS * se
        parts.append(f"{leg}: KS p={p:.3f} mean diff={abs(a.mean() - ref.mean()) / se:.2f} se")
    verdict("8 marginal law", ok, "; ".join(parts))


def test_09_stable_fidelity(verdict):
    law = StableLaw(1.5)
    z = sample_stable_increment(law, 1.0, np.random.default_rng(9), 10 ** 6)
    lap = []
    for u in (0.5, 1.0, 2.0):
        e = np.exp(-u * z)
        dev = abs(e.mean() - np.exp(u ** 1.5 / 1.5)) / (e.std(ddof=1) / np.sqrt(z.size))
        lap.append(float(dev))
    hill = hill_estimator(z)
    dens = lambda x: law.c_alpha * x ** -2.5
    tails = []
    for z0 in (0.3, 1.0, 4.0):
        m0 = integrate.quad(dens, z0, np.inf, epsabs=0, epsrel=1e-12)[0]
        m1 = integrate.quad(lambda x: x * dens(x), z0, np.inf, epsabs=0, epsrel=1e-12)[0]
        tails += [abs(levy_tail_mass(law, z0) / m0 - 1), abs(levy_tail_first_moment(law, z0) / m1 - 1)]
    ok = max(lap) <= 4 and abs(hill - 1.5) <= HILL_TOL and max(tails) <= TAIL_RTOL
    verdict("9 stable noise fidelity", ok,
            f"Laplace deviations (stderr)={[round(x, 2) for x in lap]} Hill={hill:.4f} tail rel err={max(tails):.2g}")


def test_10_moment_growth(verdict):
    rep = moment_growth_check(WW1, (1.0, 1.0), [1.0, 2.0], 10 ** 5, dt=1e-2, seed=10)
    verdict("10 moment growth", rep.passed,
            f"mean W={rep.mean_w.round(4).tolist()} se={rep.se_w.round(4).tolist()} bound={rep.bound.round(4).tolist()}")


def test_11_wasserstein(ww1_coupled, verdict):
    ens, _ = ww1_coupled
    rep = wasserstein_report(ens, WW1_SHAPE.theta, n_boot=1000, seed=11)
    ok = rep.dominated and rep.eta_hat is not None and rep.eta_hat > 0
    verdict("11 Wasserstein decay", ok, f"dominated={rep.dominated} eta_hat={rep.eta_hat:.4g} CI={rep.eta_ci}")


def test_12_reproducible_csv(tmp_path, verdict):
    outs = []
    for name in ("first", "second"):
        cfg = {"model": WW1.to_dict(), "shape": WW1_SHAPE.to_dict(),
               "path": {"t_end": 1.0, "dt": 1e-2, "seed": 12, "record_every": 10},
               "grid": {"s_min": 0.01, "s_max": 10.0, "n_s": 10, "n_r": 10, "y_tilde": [0.0, 1.0]},
               "n_paths": 2000, "write_paths": True, "margins_csv": True, "output_dir": str(tmp_path / name),
               "moment_times": [0.5, 1.0]}
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg))
        status = main(["--config", str(p), "--threads", "1"])
        outs.append((status, {f.relative_to(tmp_path / name).as_posix(): f.read_bytes()
                              for f in sorted((tmp_path / name).rglob("*.csv"))}))
    (s1, a), (s2, b) = outs
    same = a == b and len(a) >= 4
    verdict("12 reproducible CSV", same, f"files={sorted(a)} identical={a == b} exit={s1},{s2}")
