"""Input coercion and checks shared by the estimators and the command line."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .exceptions import ConfigurationError, DimensionError, NotStableError
from .model import DssExpParams, DssModel, Horizon, exp_params_to_model
from .simulate import SequenceSignal

__all__ = ["check_model", "check_horizon", "check_order", "check_signal", "resolve_horizon", "HORIZON_SPECS"]

HORIZON_SPECS = ("inf", "Ldt", "L", "10L")


def check_model(model, *, require_stable: bool = False, siso: bool = False) -> DssModel:
    """Return ``model`` as a :class:`DssModel`, converting exponential-form parameters.

    Raises
    ------
    TypeError
        If ``model`` is neither a :class:`DssModel` nor a :class:`DssExpParams`.
    NotStableError, DimensionError
        When ``require_stable`` or ``siso`` is requested and not met.
    """
    if isinstance(model, DssExpParams):
        model = exp_params_to_model(model)
    elif not isinstance(model, DssModel):
        raise TypeError(f"expected DssModel or DssExpParams, got {type(model).__name__}")
    if not (np.all(np.isfinite(model.lam)) and np.all(np.isfinite(model.b)) and np.all(np.isfinite(model.c))):
        raise ConfigurationError("model contains non-finite entries")
    if require_stable and not model.is_stable:
        raise NotStableError(f"model has max Re(lam) = {np.max(model.lam.real):.3g}")
    if siso and not model.is_siso:
        raise DimensionError(f"expected a SISO model, got m={model.m}, p={model.p}")
    return model


def check_horizon(h) -> Horizon:
    """Accept a :class:`Horizon`, ``None``/``"inf"``/``math.inf`` (infinite) or a positive number."""
    if isinstance(h, Horizon):
        return h
    if h is None or (isinstance(h, str) and h.strip().lower() in ("inf", "infinite")):
        return Horizon.infinite()
    if isinstance(h, numbers.Real) and not isinstance(h, bool):
        return Horizon.infinite() if math.isinf(h) and h > 0 else Horizon.finite(float(h))
    raise ConfigurationError(f"cannot interpret {h!r} as a horizon")


def check_order(r, n: int | None = None) -> int:
    if isinstance(r, bool) or not isinstance(r, numbers.Integral) or r < 1:
        raise DimensionError(f"order must be a positive integer, got {r!r}")
    if n is not None and r > n:
        raise DimensionError(f"order {r} exceeds the model order {n}")
    return int(r)


def check_signal(u, delta: float | None = None, channels: int | None = None) -> SequenceSignal:
    """Coerce an array of shape ``(L,)`` or ``(L, m)`` to a :class:`SequenceSignal`."""
    if isinstance(u, SequenceSignal):
        sig = u
    else:
        if delta is None:
            raise ConfigurationError("a sampling time is needed to interpret a raw input array")
        arr = np.asarray(u)
        if not np.issubdtype(arr.dtype, np.number):
            raise DimensionError(f"input samples must be numeric, got dtype {arr.dtype}")
        sig = SequenceSignal(arr, delta)
    if not np.all(np.isfinite(sig.samples)):
        raise ConfigurationError("input samples contain non-finite values")
    if channels is not None and sig.channels != channels:
        raise DimensionError(f"input has {sig.channels} channels, expected {channels}")
    return sig


def resolve_horizon(spec, seq_len: int, delta: float) -> Horizon:
    """Map a horizon spec to a :class:`Horizon` for one model.

    ``"inf"`` is the infinite horizon, ``"Ldt"`` is ``seq_len * delta`` seconds,
    ``"L"`` and ``"10L"`` take the sample count itself (times ten) as seconds,
    and anything else is parsed as an explicit ``tau``.
    """
    if isinstance(spec, Horizon):
        return spec
    if isinstance(spec, str):
        key = spec.strip()
        if key.lower() in ("inf", "infinite"):
            return Horizon.infinite()
        if key in ("Ldt", "L*delta"):
            return Horizon.finite(seq_len * delta)
        if key == "L":
            return Horizon.finite(float(seq_len))
        if key == "10L":
            return Horizon.finite(10.0 * seq_len)
        try:
            spec = float(key)
        except ValueError:
            raise ConfigurationError(f"unknown horizon spec {spec!r}; use one of {HORIZON_SPECS} or a number") from None
    return check_horizon(spec)
