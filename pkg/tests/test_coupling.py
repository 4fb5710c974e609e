import json

import numpy as np
import pytest
from scipy import stats as sps

from twofactor.coupling import (
    CouplingMode, XMode, YMode, coalescence_detect, coupled_y_step_reflect, simulate_coupled,
    simulate_coupled_ensemble,
)
from twofactor.errors import ParameterError
from twofactor.model import ModelKind, ModelSpec
from twofactor.paths import PathConfig, simulate_ensemble
from twofactor.stats import post_coalescence_error, wasserstein_report

WW1 = ModelSpec(kind=ModelKind.WW1, a=1, b=1, kappa=0, lam=1, alpha=1.5)
PAIR = ((2.0, 1.0), (1.0, 0.0))

KINDS = [
    ModelSpec(kind=ModelKind.WW1),
    ModelSpec(kind=ModelKind.WW2),
    ModelSpec(kind=ModelKind.MIXED_Y),
    ModelSpec(kind=ModelKind.TYPE_I, rho=0.4),
    ModelSpec(kind=ModelKind.TYPE_II, gamma=0.7),
    ModelSpec(kind=ModelKind.GENERAL, drift1="1 - y", drift2="-x - x**3", lambda1=1.0, lambda2=1.0),
]


def test_coalescence_detect_examples():
    hit, frac = coalescence_detect(0.2, -0.2, 0.01, 1.0, 0.99)
    assert hit and frac == pytest.approx(0.5)
    assert coalescence_detect(5.0, 5.0, 1e-3, 1.0, 1e-9) == (False, 1.0)
    assert coalescence_detect(1e-3, 1e-13, 1e-3, 1.0, 0.5)[0]
    # bridge probability exp(-2 * 0.01 * 0.01 / (1 * 0.01)) = exp(-0.02)
    assert coalescence_detect(0.01, 0.01, 0.01, 1.0, 0.97)[0]
    assert not coalescence_detect(0.01, 0.01, 0.01, 1.0, 0.99)[0]


def test_reflect_step_branches():
    yt, db = np.array([1.0, 1.0]), np.array([0.1, 0.1])
    _, _, coeff, sign = coupled_y_step_reflect(yt, np.array([0.5, 2.0]), 1.0, 1.0, 0.01, db)
    assert sign.tolist() == [-1.0, 1.0]
    assert coeff.tolist() == pytest.approx([np.sqrt(1.5) + 1.0, np.sqrt(3.0) - 1.0])


def test_mode_constraints():
    assert CouplingMode.for_model(WW1).y_mode == YMode.REFLECT_SYNC
    assert CouplingMode.for_model(ModelSpec(kind=ModelKind.WW2)).y_mode == YMode.SYNC
    with pytest.raises(ParameterError):
        simulate_coupled(WW1, PAIR, PathConfig(t_end=0.1, dt=0.01), CouplingMode(YMode.SYNC))


def test_equal_start_stays_equal():
    p = simulate_coupled(WW1, ((1.0, 2.0), (1.0, 2.0)), PathConfig(t_end=1.0, dt=0.01, seed=5))
    assert p.t_y == 0.0
    assert np.array_equal(p.y, p.y_tilde) and np.array_equal(p.x, p.x_tilde)


def test_csv_sidecar_and_swap():
    p = simulate_coupled(WW1, ((1.0, 0.0), (2.0, 1.0)), PathConfig(t_end=0.5, dt=0.01, seed=2))
    assert p.swapped and p.y[0] == 2.0 and p.y_tilde[0] == 1.0
    assert p.to_csv().splitlines()[0] == "t,y,y_tilde,x,x_tilde,coalesced"
    side = json.loads(p.sidecar_json())
    assert {"T_Y", "truncations", "branch_occupancy"} <= set(side)
    assert sum(side["branch_occupancy"].values()) == pytest.approx(1.0)


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind.value)
def test_order_and_absorption(spec):
    cfg = PathConfig(t_end=2.0, dt=1e-2, seed=11, scheme="EULER")
    ens = simulate_coupled_ensemble(spec, PAIR, cfg, 500)
    assert np.all(ens.y >= ens.y_tilde) and ens.counters.order_violations == 0
    for j in np.flatnonzero(np.isfinite(ens.t_y)):
        after = ens.times >= ens.t_y[j] - 1e-12
        assert np.array_equal(ens.y[after, j], ens.y_tilde[after, j])


def test_single_path_absorption_flag_monotone():
    p = simulate_coupled(WW1, PAIR, PathConfig(t_end=3.0, dt=1e-3, seed=4))
    assert p.t_y is not None
    k = np.argmax(p.coalesced)
    assert np.all(p.coalesced[k:]) and np.array_equal(p.y[k:], p.y_tilde[k:])


@pytest.mark.parametrize("x_mode", [XMode.THINNING, XMode.SHARED_INCREMENT])
def test_post_coalescence_linear_contraction(x_mode):
    cfg = PathConfig(t_end=3.0, dt=1e-3, seed=8, record_every=50)
    ens = simulate_coupled_ensemble(WW1, PAIR, cfg, 300, CouplingMode(YMode.REFLECT_SYNC, x_mode))
    err, n = post_coalescence_error(ens, WW1.lam)
    assert n > 1000 and err < 1e-6


def test_ensemble_thread_independent():
    cfg = PathConfig(t_end=0.5, dt=1e-2, seed=3, record_every=5)
    e1 = simulate_coupled_ensemble(WW1, PAIR, cfg, 2100)
    e2 = simulate_coupled_ensemble(WW1, PAIR, cfg, 2100, threads=3)
    assert np.array_equal(e1.d, e2.d) and np.array_equal(e1.s, e2.s, equal_nan=True)


@pytest.mark.parametrize("leg", ["y", "y_tilde"])
def test_marginal_law_of_each_leg(leg):
    n = 4000
    cfg = PathConfig(t_end=1.0, dt=1e-3, seed=100, record_every=1000)
    ens = simulate_coupled_ensemble(WW1, PAIR, cfg, n)
    start = PAIR[0] if leg == "y" else PAIR[1]
    ref = simulate_ensemble(WW1, start, PathConfig(t_end=1.0, dt=1e-3, seed=1100, record_every=1000), n)
    a, b = getattr(ens, leg)[-1], ref.y[-1]
    assert sps.ks_2samp(a, b).pvalue > 0.01
    assert abs(a.mean() - b.mean()) < 4 * np.sqrt(a.var() / n + b.var() / n)


def test_thinning_without_common_part():
    spec = ModelSpec(kind=ModelKind.WW1, a=0.0, kappa=0.0)
    cfg = PathConfig(t_end=0.2, dt=1e-2, seed=1, record_every=20)
    for eps in (None, 0.05):
        ens = simulate_coupled_ensemble(spec, ((1.0, 0.0), (0.0, 0.0)), PathConfig(**{**cfg.__dict__, "jump_eps": eps}), 200)
        assert np.all(ens.y_tilde == 0) and np.all(ens.x_tilde == 0)
        assert np.any(ens.d[-1] != 0)


def test_truncated_thinning_matches_exact_in_law():
    pair = ((1.0, 0.0), (1.0, 0.0))   # coalesced Y, but D stays 0: check x-marginal instead
    cfg = PathConfig(t_end=0.5, dt=1e-2, seed=5, record_every=50)
    exact = simulate_coupled_ensemble(WW1, pair, cfg, 4000)
    trunc = simulate_coupled_ensemble(WW1, pair, PathConfig(**{**cfg.__dict__, "jump_eps": 0.01, "seed": 6}), 4000)
    assert sps.ks_2samp(exact.x[-1], trunc.x[-1]).pvalue > 0.01


def test_thinning_and_shared_rates_agree():
    cfg = PathConfig(t_end=5.0, dt=1e-2, seed=1, record_every=10)
    rates = []
    for mode in (XMode.THINNING, XMode.SHARED_INCREMENT):
        ens = simulate_coupled_ensemble(WW1, PAIR, cfg, 10000, CouplingMode(YMode.REFLECT_SYNC, mode))
        rates.append(wasserstein_report(ens, 0.3, n_boot=300).eta_ci)
    (lo1, hi1), (lo2, hi2) = rates
    assert lo1 <= hi2 and lo2 <= hi1
