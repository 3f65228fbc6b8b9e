import json
import math

import numpy as np
import pytest

from dssmor.exceptions import (
    ConfigurationError,
    DegenerateInputError,
    DimensionError,
    NotStableError,
    SingularStateError,
)
from dssmor.model import (
    DssExpParams,
    DssModel,
    Horizon,
    discretize,
    exp_params_to_model,
    load_bank,
    load_config_overrides,
    model_to_exp_params,
    random_stable_model,
    save_bank,
)

from conftest import random_model


def test_exp_params_basic():
    m = exp_params_to_model(DssExpParams([0.0], [3.0], [1.0], [0.0]))
    assert m.lam[0] == -1 + 3j
    assert m.b[0, 0] == 1 and m.c[0, 0] == 1
    assert m.is_siso and m.is_stable


def test_exp_params_ln2():
    m = exp_params_to_model(DssExpParams([math.log(2)], [0.0], [0.0], [0.0]))
    assert m.lam[0] == pytest.approx(-2.0, abs=1e-15)
    assert m.c[0, 0] == 0


def test_exp_params_length_mismatch():
    with pytest.raises(DimensionError):
        DssExpParams([0.0, 1.0, 2.0], [0.0, 1.0], [0.0, 1.0, 2.0], [0.0, 1.0, 2.0])


def test_model_to_exp_params_examples():
    p = model_to_exp_params(DssModel([-1 + 3j], [1.0], [1.0]))
    assert p.lambda_re[0] == 0 and p.lambda_im[0] == 3 and p.w[0] == 1
    p = model_to_exp_params(DssModel([-2.0], [2.0], [3.0]))
    assert p.lambda_re[0] == pytest.approx(math.log(2), abs=1e-15)
    assert p.w[0] == 6
    with pytest.raises(NotStableError):
        model_to_exp_params(DssModel([1.0], [1.0], [1.0]))
    with pytest.raises(DegenerateInputError):
        model_to_exp_params(DssModel([-1.0, -2.0], [1.0, 0.0], [1.0, 1.0]))
    with pytest.raises(DimensionError):
        model_to_exp_params(DssModel([-1.0], [[1.0, 1.0]], [1.0]))


def test_round_trip_preserves_poles_and_residues():
    m = random_model(6, 3)
    back = exp_params_to_model(model_to_exp_params(m))
    np.testing.assert_allclose(back.lam, m.lam, rtol=1e-15)
    np.testing.assert_allclose(back.c[0] * back.b[:, 0], m.c[0] * m.b[:, 0], rtol=1e-15)
    s = np.array([0.3j, 1.0 + 2j, -5j])
    np.testing.assert_allclose(back.transfer(s), m.transfer(s), rtol=1e-13)


def test_random_stable_model_determinism_and_stability():
    a = random_stable_model(4, 0)
    b = random_stable_model(4, 0)
    assert np.array_equal(a.to_vector(), b.to_vector())
    m = exp_params_to_model(random_stable_model(64, 7))
    assert np.all(m.lam.real < 0)
    with pytest.raises(DimensionError):
        random_stable_model(0, 1)


def test_random_stable_model_generator_is_documented():
    draws = np.random.Generator(np.random.PCG64(11)).standard_normal((4, 5))
    p = random_stable_model(5, 11)
    np.testing.assert_array_equal(p.to_vector(), draws.ravel())


def test_exp_stability_bound():
    p = random_stable_model(32, 5)
    assert np.all(p.lam.real <= -np.exp(p.lambda_re.min()))


def test_discretize_examples():
    d = discretize(DssModel([-1.0], [1.0], [1.0], delta=math.log(2)))
    assert d.a_bar[0] == pytest.approx(0.5, abs=1e-15)
    assert d.b_bar[0, 0] == pytest.approx(0.5, abs=1e-15)
    m = random_model(10, 1, delta=0.3)
    assert np.all(np.abs(discretize(m).a_bar) < 1)
    with pytest.raises(SingularStateError):
        discretize(DssModel([0.0], [1.0], [1.0], delta=1.0))
    with pytest.raises(ConfigurationError):
        discretize(DssModel([-1.0], [1.0], [1.0]))


def test_discretize_small_delta():
    m = random_model(8, 2, delta=1e-8)
    d = discretize(m)
    lam = m.lam
    # a_bar is a double next to 1, so one unit in the last place is added to the bound
    ulp = np.spacing(1.0)
    assert np.all(np.abs(d.a_bar - 1 - lam * 1e-8) <= np.abs(lam) ** 2 * 1e-16 + ulp)
    assert np.all(np.abs(d.b_bar) < 1e-7)
    # b_bar / b = (e^{lam dt} - 1) / lam = dt (1 + lam dt / 2 + ...) without cancellation
    ratio = d.b_bar[:, 0] / m.b[:, 0]
    np.testing.assert_allclose(ratio, 1e-8 * (1 + lam * 1e-8 / 2), rtol=1e-14)


def test_model_shapes_and_immutability():
    m = DssModel([-1.0, -2.0], [1.0, 2.0], [3.0, 4.0])
    assert (m.n, m.m, m.p) == (2, 1, 1)
    with pytest.raises(ValueError):
        m.lam[0] = 0
    with pytest.raises(DimensionError):
        DssModel([-1.0, -2.0], [[1.0]], [[1.0, 1.0]])
    with pytest.raises(DimensionError):
        DssModel([], [], [])
    with pytest.raises(ConfigurationError):
        DssModel([-1.0], [1.0], [1.0], delta=-1.0)


def test_transfer_matches_dense_formula():
    m = random_model(5, 9, m=2, p=3)
    s = 0.7j
    dense = m.c @ np.linalg.solve(s * np.eye(5) - np.diag(m.lam), m.b)
    np.testing.assert_allclose(m.transfer(s), dense, rtol=1e-12)


def test_horizon():
    assert not Horizon.infinite().is_finite
    assert Horizon.finite(2.0).tau == 2.0
    assert str(Horizon.infinite()) == "inf"
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ConfigurationError):
            Horizon.finite(bad)


def test_bank_round_trip(tmp_path):
    models = [random_stable_model(3, s, delta=0.01 * (s + 1)) for s in range(3)]
    path = tmp_path / "bank.json"
    save_bank(path, models, synthetic=True)
    back = load_bank(path)
    for a, b in zip(models, back):
        assert np.array_equal(a.to_vector(), b.to_vector()) and a.delta == b.delta
    doc = json.loads(path.read_text())
    assert doc["synthetic"] is True and doc["models"][0]["n"] == 3


def test_bank_declared_n_mismatch(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"models": [{"n": 2, "lambda_re": [0], "lambda_im": [0], "w_re": [1], "w_im": [0]}]}))
    with pytest.raises(DimensionError):
        load_bank(path)


def test_config_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"config": {"tol": 1e-4}, "models": []}))
    assert load_config_overrides(p) == {"tol": 1e-4}
    p.write_text(json.dumps({"k_max": 5}))
    assert load_config_overrides(p) == {"k_max": 5}
