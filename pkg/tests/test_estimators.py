import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dssmor.estimators import BalancedTruncation, FiniteTimeH2Reducer
from dssmor.exceptions import ConfigurationError, DimensionError, NotStableError
from dssmor.gramians import error_h2_norm_sq
from dssmor.model import DssModel, Horizon, exp_params_to_model, random_stable_model
from dssmor.simulate import SequenceSignal, simulate
from dssmor.validation import check_horizon, check_model, check_order, check_signal, resolve_horizon

from conftest import random_model


def test_check_horizon():
    assert check_horizon("inf") == Horizon.infinite()
    assert check_horizon(None) == Horizon.infinite()
    assert check_horizon(math.inf) == Horizon.infinite()
    assert check_horizon(2).tau == 2.0
    with pytest.raises(ConfigurationError):
        check_horizon("soon")
    with pytest.raises(ConfigurationError):
        check_horizon(-1.0)
    with pytest.raises(ConfigurationError):
        check_horizon(True)


def test_resolve_horizon():
    assert resolve_horizon("Ldt", 2048, 0.01).tau == 20.48
    assert resolve_horizon("inf", 2048, 0.01) == Horizon.infinite()
    assert resolve_horizon("L", 2048, 0.01).tau == 2048.0
    assert resolve_horizon("10L", 2048, 0.01).tau == 20480.0
    assert resolve_horizon("3.5", 2048, 0.01).tau == 3.5
    with pytest.raises(ConfigurationError):
        resolve_horizon("L^2", 2, 1.0)


def test_check_model_and_order():
    p = random_stable_model(3, 0)
    assert check_model(p).n == 3
    with pytest.raises(TypeError):
        check_model(np.eye(3))
    with pytest.raises(NotStableError):
        check_model(DssModel([0.1], [1.0], [1.0]), require_stable=True)
    with pytest.raises(DimensionError):
        check_model(random_model(2, 1, m=2), siso=True)
    with pytest.raises(ConfigurationError):
        check_model(DssModel([-1.0], [np.nan], [1.0]))
    assert check_order(3, 5) == 3
    for bad in (0, 2.5, True, 6):
        with pytest.raises(DimensionError):
            check_order(bad, 5)


def test_check_signal():
    s = check_signal(np.ones(4), 0.1, channels=1)
    assert s.length == 4
    with pytest.raises(ConfigurationError):
        check_signal(np.ones(4))
    with pytest.raises(DimensionError):
        check_signal(np.ones((4, 2)), 0.1, channels=1)
    with pytest.raises(ConfigurationError):
        check_signal(np.array([1.0, np.inf]), 0.1)


def test_get_set_params_and_clone():
    est = FiniteTimeH2Reducer(order=4, horizon=20.48, k_max=7)
    params = est.get_params()
    assert params["order"] == 4 and params["k_max"] == 7 and params["horizon"] == 20.48
    c = clone(est).set_params(order=2)
    assert c.order == 2 and est.order == 4
    assert BalancedTruncation(order=3).get_params() == {"order": 3, "horizon": "inf"}


def test_not_fitted():
    with pytest.raises(NotFittedError):
        FiniteTimeH2Reducer().transform()
    with pytest.raises(NotFittedError):
        BalancedTruncation().predict(np.ones(3), delta=0.1)


def test_reducer_fit_transform_predict():
    delta = 0.01
    full = random_stable_model(32, 4, delta=delta)
    est = FiniteTimeH2Reducer(order=4, horizon=2048 * delta, k_max=20, random_state=0)
    rom = est.fit_transform(full)
    assert rom.n == 4 and rom is est.rom_
    assert est.init_provenance_ in ("fbt", "random")
    assert est.f_final_ <= est.f_init_
    assert len(est.trace_) == est.n_iter_ + 1
    u = np.random.default_rng(0).normal(size=256)
    y = est.predict(u)
    assert y.shape == (256,)
    np.testing.assert_array_equal(y, simulate(rom, SequenceSignal(u, delta)).samples[:, 0])
    assert est.score(full) == pytest.approx(-error_h2_norm_sq(exp_params_to_model(full), rom, Horizon.finite(20.48)))
    with pytest.raises(ValueError):
        est.transform(random_stable_model(32, 5, delta=delta))


def test_reducer_init_options():
    full = random_stable_model(12, 2)
    est = FiniteTimeH2Reducer(order=3, horizon="inf", init="random", k_max=3, random_state=5).fit(full)
    assert est.init_provenance_ == "random"
    user = random_stable_model(3, 9)
    est = FiniteTimeH2Reducer(order=3, init=user, k_max=3).fit(full)
    assert est.init_provenance_ == "user"
    with pytest.raises(ValueError):
        FiniteTimeH2Reducer(order=3, init="bogus").fit(full)
    with pytest.raises(ValueError):
        FiniteTimeH2Reducer(order=2, init=user).fit(full)


def test_reducer_raw_complex_mimo():
    full = random_model(6, 1, m=2, p=2, delta=0.1)
    init = random_model(2, 2, m=2, p=2, delta=0.1)
    est = FiniteTimeH2Reducer(order=2, horizon=5.0, parameterization="raw-complex", init=init, k_max=10).fit(full)
    assert est.rom_params_ is None
    assert est.predict(np.ones((10, 2))).shape == (10, 2)


def test_balanced_truncation_estimator():
    full = random_stable_model(10, 3, delta=0.1)
    bt = BalancedTruncation(order=3).fit(full)
    assert bt.rom_.n == 3 and bt.stable_ and np.all(np.diff(bt.hankel_sv_) <= 0)
    assert bt.predict(np.ones(8)).shape == (8,)
    fbt = BalancedTruncation(order=3, horizon=0.5).fit(full)
    assert fbt.horizon_.tau == 0.5
