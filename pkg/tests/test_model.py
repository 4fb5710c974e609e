import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twofactor.errors import ValidationError
from twofactor.model import (
    NON_ERGODIC, W_FIELD, Field, ModelKind, ModelSpec, generator_apply, h_moment, h_moment_d1,
    h_moment_d2, moment_bound_coeff, validate_model, w_moment,
)

WW1 = ModelSpec(kind=ModelKind.WW1, a=1, b=1, kappa=0, lam=1, alpha=1.5)

ONE = Field(lambda y, x: 1.0, lambda y, x: (0.0, 0.0), lambda y, x: (0.0, 0.0, 0.0))
LIN = Field(lambda y, x: x, lambda y, x: (0.0, 1.0), lambda y, x: (0.0, 0.0, 0.0))
EXP = Field(lambda y, x: np.exp(-x), lambda y, x: (0.0, -np.exp(-x)), lambda y, x: (0.0, 0.0, np.exp(-x)))


def test_validate_examples():
    ok = validate_model(ModelSpec(a=1, b=2, kappa=0, lam=1, alpha=1.5))
    assert ok.flags == ()
    assert NON_ERGODIC in validate_model(ModelSpec(b=0)).flags
    with pytest.raises(ValidationError) as e:
        validate_model(ModelSpec(alpha=2.5))
    assert e.value.field == "alpha"


@pytest.mark.parametrize("kw,field", [
    (dict(a=-1), "a"), (dict(kind=ModelKind.WW2, beta=1.0), "beta"),
    (dict(kind=ModelKind.TYPE_I, rho=1.5), "rho"), (dict(gamma=1.0), "gamma"),
    (dict(kind=ModelKind.GENERAL, drift1="1 - y", drift2="-x", lambda1=1.0), "lambda2"),
    (dict(kind=ModelKind.GENERAL, drift1="1 + y", drift2="-x", lambda1=1.0, lambda2=1.0), "drift1"),
])
def test_validate_named_errors(kw, field):
    with pytest.raises(ValidationError) as e:
        validate_model(ModelSpec(**kw))
    assert e.value.field == field


def test_general_monotone_accepted():
    spec = ModelSpec(kind=ModelKind.GENERAL, drift1="1 - 2*y", drift2="-x - x**3", lambda1=2.0, lambda2=1.0)
    assert validate_model(spec).kind == ModelKind.GENERAL
    with pytest.raises(ValidationError):
        ModelSpec(kind=ModelKind.GENERAL, drift1="__import__('os')", drift2="-x").b1


def test_json_roundtrip_and_unknown_field():
    spec = ModelSpec(kind=ModelKind.TYPE_II, a=0.5, gamma=-1.0)
    back = ModelSpec.from_json(spec.to_json())
    assert back == spec
    d = json.loads(spec.to_json())
    assert "lambda" in d and "lam" not in d
    d["foo"] = 1
    with pytest.raises(ValidationError):
        ModelSpec.from_dict(d)
    with pytest.raises(ValidationError):
        ModelSpec.from_dict({"lam": 1.0})


def test_generator_examples():
    assert generator_apply(WW1, ONE, (0.7, -1.0)) == 0.0
    assert generator_apply(WW1, LIN, (1.0, 2.0)) == pytest.approx(-2.0, abs=1e-10)
    flat = ModelSpec(kappa=0, lam=0)
    assert generator_apply(flat, EXP, (1.0, 0.0)) == pytest.approx(2 / 3, rel=1e-8)


def test_generator_beta_jump_in_y():
    # f = e^{-y}: WW2 jump term in y equals y * beta-Laplace exponent at u=1
    f = Field(lambda y, x: np.exp(-y), lambda y, x: (-np.exp(-y), 0.0), lambda y, x: (np.exp(-y), 0.0, 0.0))
    spec = ModelSpec(kind=ModelKind.WW2, a=0.0, b=0.0, beta=1.5)
    y = 2.0
    assert generator_apply(spec, f, (y, 0.0)) == pytest.approx(y * np.exp(-y) / 1.5, rel=1e-8)


def test_h_is_c2_and_dominates_abs():
    for x0 in (-2.0, 2.0):
        for fn in (h_moment, h_moment_d1, h_moment_d2):
            assert abs(fn(x0 - 1e-12) - fn(x0 + 1e-12)) < 1e-10
    x = np.linspace(-5, 5, 2001)
    assert np.all(h_moment(x) >= np.abs(x) - 1e-15)
    assert np.max(np.abs(h_moment_d1(x))) <= 1.0 and np.max(np.abs(h_moment_d2(x))) <= 0.75


def test_moment_bound_examples():
    c0 = moment_bound_coeff(WW1)
    assert np.isfinite(c0) and c0 > 0
    assert moment_bound_coeff(ModelSpec(a=0, b=0, kappa=0, lam=0)) > 0
    assert moment_bound_coeff(ModelSpec(kappa=2.0)) >= moment_bound_coeff(ModelSpec(kappa=1.0))


@pytest.mark.parametrize("kind", [ModelKind.WW1, ModelKind.WW2, ModelKind.TYPE_II, ModelKind.TYPE_I])
def test_moment_bound_holds_on_random_points(kind):
    extra = {ModelKind.TYPE_II: dict(gamma=0.7), ModelKind.TYPE_I: dict(rho=0.3)}.get(kind, {})
    spec = ModelSpec(kind=kind, a=1, b=1, kappa=0.5, lam=1, alpha=1.5, **extra)
    c0 = moment_bound_coeff(spec)
    rng = np.random.default_rng(7)
    n = 1000 if kind == ModelKind.WW1 else 100
    ys, xs = rng.exponential(3.0, n), rng.normal(0, 4.0, n)
    ratios = [generator_apply(spec, W_FIELD, (y, x)) / w_moment(y, x) for y, x in zip(ys, xs)]
    assert max(ratios) <= c0


@given(y=st.floats(0.0, 20.0), x=st.floats(-20.0, 20.0))
@settings(max_examples=40, deadline=None)
def test_generator_kills_constants(y, x):
    assert generator_apply(ModelSpec(kind=ModelKind.MIXED_Y), ONE, (y, x)) == 0.0
