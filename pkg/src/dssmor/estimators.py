"""Scikit-learn style front ends for the reducers.

``fit`` takes the full-order model (a :class:`~dssmor.model.DssModel` or
:class:`~dssmor.model.DssExpParams`) in place of a data matrix, ``transform``
returns the reduced model and ``predict`` runs the reduced model on an input
sequence.  Hyperparameters follow the usual ``get_params``/``set_params``
contract, so the estimators can be cloned and swept like any other.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import balanced_truncation, choose_initializer, fallback_seed
from .gramians import error_h2_norm_sq
from .model import DssExpParams, DssModel, exp_params_to_model, model_to_exp_params, random_stable_model
from .reducer import ReducerConfig, reduce
from .simulate import simulate
from .validation import check_horizon, check_model, check_order, check_signal

__all__ = ["FiniteTimeH2Reducer", "BalancedTruncation"]


class _ReducedModelMixin:
    """``transform``, ``predict`` and ``score`` shared by both estimators."""

    def _check_same_full(self, X):
        full = check_model(X)
        ref = self.full_
        if full is not ref and not (
            full.n == ref.n
            and np.array_equal(full.lam, ref.lam)
            and np.array_equal(full.b, ref.b)
            and np.array_equal(full.c, ref.c)
        ):
            raise ValueError("transform expects the model passed to fit; call fit on the new model first")

    def transform(self, X=None):
        """Return the reduced model; ``X``, when given, must be the fitted full model."""
        check_is_fitted(self, "rom_")
        if X is not None:
            self._check_same_full(X)
        return self.rom_

    def predict(self, X, delta: float | None = None) -> np.ndarray:
        """Outputs of the reduced model for the input sequence ``X`` (shape ``(L,)`` or ``(L, m)``).

        ``delta`` defaults to the model's sampling time.  SISO outputs are
        returned with shape ``(L,)``, others with shape ``(L, p)``.
        """
        check_is_fitted(self, "rom_")
        rom = self.rom_
        dt = delta if delta is not None else rom.delta
        u = check_signal(X, dt, channels=rom.m)
        y = simulate(rom if rom.delta is not None else rom.replace(delta=u.delta), u).samples
        return y[:, 0] if rom.p == 1 else y

    def score(self, X, y=None) -> float:
        """Negative squared H2 error against ``X`` on the fitted horizon (higher is better)."""
        check_is_fitted(self, "rom_")
        return -error_h2_norm_sq(check_model(X), self.rom_, self.horizon_)


class FiniteTimeH2Reducer(_ReducedModelMixin, TransformerMixin, BaseEstimator):
    """Finite-time H2 model reduction by gradient descent with Armijo backtracking.

    Parameters
    ----------
    order : int
        Reduced order ``r``.
    horizon : float, "inf" or Horizon
        Length ``tau`` of the time window in seconds, or infinite.
    parameterization : {"dss-exp", "raw-complex"}
        Coordinates of the descent.  ``"dss-exp"`` keeps every iterate stable
        by construction and needs a SISO model.
    init : {"auto", "random"}, DssModel or DssExpParams
        ``"auto"`` tries horizon-matched balanced truncation and falls back to
        a random stable model; ``"random"`` always uses the random model.
    tol, c1, alpha_ini, rho, k_max, max_backtracks
        Optimiser settings, see :class:`~dssmor.reducer.ReducerConfig`.
    random_state : int or None
        Seed of the random initial model.  ``None`` derives one from ``order``.

    Attributes
    ----------
    rom_ : DssModel
    rom_params_ : DssExpParams or None
    trace_ : ReductionTrace
    termination_ : str
    init_provenance_ : str
        ``"ibt"``, ``"fbt"``, ``"random"`` or ``"user"``.
    f_init_, f_final_ : float
    horizon_ : Horizon
    full_ : DssModel
    """

    def __init__(
        self,
        order=2,
        horizon="inf",
        parameterization="dss-exp",
        init="auto",
        tol=1e-3,
        c1=1e-4,
        alpha_ini=1.0,
        rho=0.5,
        k_max=100,
        max_backtracks=60,
        random_state=None,
    ):
        self.order = order
        self.horizon = horizon
        self.parameterization = parameterization
        self.init = init
        self.tol = tol
        self.c1 = c1
        self.alpha_ini = alpha_ini
        self.rho = rho
        self.k_max = k_max
        self.max_backtracks = max_backtracks
        self.random_state = random_state

    def _config(self) -> ReducerConfig:
        return ReducerConfig(
            tol=self.tol,
            c1=self.c1,
            alpha_ini=self.alpha_ini,
            rho=self.rho,
            k_max=self.k_max,
            max_backtracks=self.max_backtracks,
            parameterization=self.parameterization,
        )

    def _initial(self, full, r, h):
        seed = self.random_state if self.random_state is not None else fallback_seed(0, r)
        if isinstance(self.init, (DssModel, DssExpParams)):
            init = self.init
            if init.n != r:
                raise ValueError(f"initial model has order {init.n}, expected {r}")
            return init, "user"
        if self.init == "random":
            return random_stable_model(r, seed, delta=full.delta or 1.0), "random"
        if self.init != "auto":
            raise ValueError(f"init must be 'auto', 'random' or a model, got {self.init!r}")
        if not full.is_siso:
            raise ValueError("init='auto' needs a SISO model; pass an initial model instead")
        choice = choose_initializer(full, r, h, seed)
        return choice.params, choice.provenance

    def fit(self, X, y=None):
        """Reduce the full-order model ``X``."""
        cfg = self._config()
        full = check_model(X, require_stable=True)
        r = check_order(self.order, full.n)
        h = check_horizon(self.horizon)
        init, provenance = self._initial(full, r, h)
        if cfg.parameterization == "raw-complex" and isinstance(init, DssExpParams):
            init = exp_params_to_model(init)
        res = reduce(full, init, h, cfg)

        self.full_ = full
        self.horizon_ = h
        self.rom_ = res.rom
        self.rom_params_ = res.exp_params
        if self.rom_params_ is None and res.rom.is_siso and np.all(res.rom.b != 0):
            self.rom_params_ = model_to_exp_params(res.rom)
        self.trace_ = res.trace
        self.termination_ = res.termination
        self.init_provenance_ = provenance
        self.f_init_ = res.f_init
        self.f_final_ = res.f_final
        self.n_iter_ = res.trace.iterations
        return self


class BalancedTruncation(_ReducedModelMixin, TransformerMixin, BaseEstimator):
    """Square-root balanced truncation on an infinite or finite horizon.

    Attributes
    ----------
    rom_ : DssModel
        Reduced model in diagonal form; may be unstable for a finite horizon.
    hankel_sv_ : ndarray
    stable_ : bool
    diagonalizable_ : bool
    """

    def __init__(self, order=2, horizon="inf"):
        self.order = order
        self.horizon = horizon

    def fit(self, X, y=None):
        h = check_horizon(self.horizon)
        full = check_model(X, require_stable=not h.is_finite)
        r = check_order(self.order, full.n)
        bt = balanced_truncation(full, r, h)
        self.full_ = full
        self.horizon_ = h
        self.rom_ = bt.rom
        self.hankel_sv_ = bt.hankel_sv
        self.stable_ = bt.stable
        self.diagonalizable_ = bt.diagonalizable
        return self
