import numpy as np
import pytest

from countcpt.families import Bernoulli, NegBinomial, Poisson
from countcpt.models import (
    InvalidParameter,
    ParamSpace,
    UnsupportedModel,
    linear_model,
    parse_model,
    threshold_model,
)
from countcpt.simulate import simulate_h0

from oracles import draw_interior_theta

MODELS = [
    parse_model("poisson-ingarch"),
    parse_model("nb-ingarch:r=1"),
    parse_model("nb-ingarch:r=8"),
    parse_model("bernoulli-ingarch"),
    parse_model("poisson-intarch:l=3"),
    parse_model("nb-intarch:r=8,l=5"),
]


def test_mean_step_values():
    m = parse_model("poisson-ingarch")
    assert m.mean_step((0.2, 0.3, 0.25), 1.0, 2) == pytest.approx(1.05)
    assert m.mean_step((0.7, 0.0, 0.0), 5.0, 9) == pytest.approx(0.7)
    t = parse_model("poisson-intarch:l=3")
    assert t.mean_step((0.1, 0.2, 0.4, 0.3), 1.0, 5) == pytest.approx(2.0)


def test_mean_step_rejects_invalid_theta():
    m = parse_model("poisson-ingarch")
    with pytest.raises(InvalidParameter):
        m.mean_step((0.2, 0.7, 0.5), 1.0, 2)


def test_mean_step_grad_first_step():
    m = parse_model("poisson-ingarch")
    g = m.mean_step_grad((0.2, 0.3, 0.25), 1.5, 2, np.zeros(3))
    assert np.allclose(g, [1.0, 2.0, 1.5])


def test_mean_step_grad_two_steps_unrolled():
    # d X_3 / d alpha0 = 1 + beta after two steps from a zero state
    m = parse_model("poisson-ingarch")
    th = (0.2, 0.3, 0.25)
    g1 = m.mean_step_grad(th, 1.0, 2, np.zeros(3))
    x2 = m.mean_step(th, 1.0, 2)
    g2 = m.mean_step_grad(th, x2, 1, g1)
    assert g2[0] == pytest.approx(1.0 + th[2])


def test_mean_step_grad_matches_finite_differences():
    rng = np.random.default_rng(21)
    h = 1e-6
    for model in MODELS:
        for _ in range(100):
            th = draw_interior_theta(model, rng)
            x = rng.uniform(0.05, 0.9) if model.family.name == "bernoulli" else rng.uniform(0.1, 5.0)
            y = int(rng.integers(0, 2 if model.family.name == "bernoulli" else 9))
            dx = rng.normal(size=model.d)
            g = model.mean_step_grad(th, x, y, dx, validate=False)
            fd = np.zeros(model.d)
            for i in range(model.d):
                e = np.zeros(model.d)
                e[i] = h
                # the recursion's previous state depends on theta through dx
                fd[i] = (
                    model.mean_step(th + e, x + h * dx[i], y, validate=False)
                    - model.mean_step(th - e, x - h * dx[i], y, validate=False)
                ) / (2 * h)
            denom = max(np.max(np.abs(g)), 1.0)
            assert np.max(np.abs(fd - g)) / denom <= 1e-6


def test_stationary_mean_values():
    m = parse_model("poisson-ingarch")
    assert m.stationary_mean((1.0, 0.2, 0.15)) == pytest.approx(1.0 / 0.65)
    assert m.stationary_mean((0.2, 0.3, 0.25)) == pytest.approx(0.2 / 0.45)
    assert m.stationary_mean((0.7, 0.0, 0.0)) == pytest.approx(0.7)


def test_stationary_mean_errors():
    with pytest.raises(UnsupportedModel):
        parse_model("poisson-intarch:l=2").stationary_mean((0.5, 0.2, 0.2, 0.3))
    with pytest.raises(InvalidParameter):
        parse_model("poisson-ingarch").stationary_mean((0.5, 0.6, 0.5))


def test_validate_examples():
    m = parse_model("poisson-ingarch")
    ok, v = m.validate((0.2, 0.3, 0.25))
    assert ok and not v
    ok, v = m.validate((0.2, 0.7, 0.5))
    assert not ok
    assert any("alpha+beta" in msg for msg in v)


def test_project_example():
    m = parse_model("poisson-ingarch")
    out = m.project(np.array([0.2, 0.7, 0.5]))
    assert out[1] + out[2] == pytest.approx(0.985)  # 1 - eps - eps/2 with eps = 0.01
    assert out[1] / out[2] == pytest.approx(0.7 / 0.5)
    ok, _ = m.validate(out)
    assert ok


def test_project_idempotent_and_valid():
    rng = np.random.default_rng(22)
    for model in MODELS:
        d = model.d
        for _ in range(200):
            th = rng.uniform(-0.5, 2.0, size=d) * rng.choice([0.2, 1.0, 10.0])
            p = model.project(th)
            ok, v = model.validate(p)
            assert ok, v
            assert np.allclose(model.project(p), p, atol=1e-12)


def test_contraction_property():
    # |f(x,y) - f(x',y')| <= delta1 |x-x'| + delta2 |y-y'|, delta1+delta2 <= 1-eps
    rng = np.random.default_rng(23)
    for model in MODELS:
        for _ in range(50):
            th = draw_interior_theta(model, rng)
            d1, d2 = model.contraction_coefficients(th)
            assert d1 + d2 <= 1.0 - model.space.eps + 1e-12
            for _ in range(10):
                if model.family.name == "bernoulli":
                    x, xp = rng.uniform(0, 1, 2)
                    y, yp = rng.integers(0, 2, 2)
                else:
                    x, xp = rng.uniform(0, 8, 2)
                    y, yp = rng.integers(0, 12, 2)
                lhs = abs(model.mean_step(th, x, int(y), validate=False)
                          - model.mean_step(th, xp, int(yp), validate=False))
                assert lhs <= d1 * abs(x - xp) + d2 * abs(y - yp) + 1e-12


def test_bernoulli_means_stay_in_unit_interval():
    model = parse_model("bernoulli-ingarch")
    rng = np.random.default_rng(24)
    for seed in range(5):
        th = draw_interior_theta(model, rng)
        traj = simulate_h0(model, th, 2000, seed=seed)
        assert np.all(traj.x_latent > 0.0)
        assert np.all(traj.x_latent < 1.0)
        assert set(np.unique(traj.y)).issubset({0, 1})


def test_descriptor_round_trip():
    for text in ("poisson-ingarch", "nb-ingarch:r=8", "bernoulli-ingarch",
                 "poisson-intarch:l=5", "nb-intarch:r=8,l=5"):
        assert parse_model(text).descriptor == text


def test_parse_model_errors():
    with pytest.raises(ValueError):
        parse_model("gaussian-garch")
    with pytest.raises(ValueError):
        parse_model("nb-ingarch")  # missing r
    with pytest.raises(ValueError):
        parse_model("poisson-intarch")  # missing level
    with pytest.raises(UnsupportedModel):
        threshold_model(Bernoulli(), 2)


def test_custom_space_dimension_check():
    with pytest.raises(ValueError):
        linear_model(Poisson(), space=ParamSpace((0.0,) * 4, (1.0,) * 4))


def test_param_space_sanity():
    with pytest.raises(ValueError):
        ParamSpace((0.0, 1.0), (1.0, 0.5))
    sp = ParamSpace((0.0, 0.0), (1.0, 1.0), sum_constraints=((0, 1),), eps=0.05)
    assert sp.contains((0.4, 0.5))
    assert not sp.contains((0.5, 0.5))


def test_nb_model_uses_failures():
    m = parse_model("nb-ingarch:r=8")
    assert isinstance(m.family, NegBinomial)
    assert m.family.r == 8
