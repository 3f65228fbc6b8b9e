"""Diagonal state-space models, the exponential parameterisation and model banks.

A diagonal state-space (DSS) model is the continuous-time system

    x'(t) = diag(lam) x(t) + B u(t),   y(t) = C x(t),   x(0) = 0,

with complex eigenvalues ``lam`` (shape ``(N,)``), input map ``B`` (``(N, m)``)
and output map ``C`` (``(p, N)``).  The state matrix is never formed densely.

The exponential parameterisation (DSS_EXP) describes a SISO model through four
real vectors::

    lam = -exp(lambda_re) + 1j * lambda_im,   B = ones(N),   C = (w_re + 1j * w_im)^T

so every model it produces is stable by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import (
    ConfigurationError,
    DegenerateInputError,
    DimensionError,
    NotStableError,
    SingularStateError,
)

__all__ = [
    "DssModel",
    "DssExpParams",
    "DiscreteDss",
    "Horizon",
    "exp_params_to_model",
    "model_to_exp_params",
    "random_stable_model",
    "discretize",
    "load_bank",
    "save_bank",
    "load_config_overrides",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DssModel:
    """Complex diagonal continuous-time system ``(lam, b, c)``.

    Parameters
    ----------
    lam
        Eigenvalues of the diagonal state matrix, shape ``(N,)``.
    b
        Input map, shape ``(N, m)``; a 1-D array is read as a single column.
    c
        Output map, shape ``(p, N)``; a 1-D array is read as a single row.
    delta
        Optional sampling time in seconds, used by :func:`discretize`.
    """

    lam: np.ndarray
    b: np.ndarray
    c: np.ndarray
    delta: float | None = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=complex)
        b = np.asarray(self.b, dtype=complex)
        c = np.asarray(self.c, dtype=complex)
        if lam.ndim != 1 or lam.size < 1:
            raise DimensionError(f"lam must be a non-empty vector, got shape {lam.shape}")
        n = lam.size
        if b.ndim == 1:
            b = b[:, None]
        if c.ndim == 1:
            c = c[None, :]
        if b.ndim != 2 or b.shape[0] != n or b.shape[1] < 1:
            raise DimensionError(f"b must have shape ({n}, m), got {b.shape}")
        if c.ndim != 2 or c.shape[1] != n or c.shape[0] < 1:
            raise DimensionError(f"c must have shape (p, {n}), got {c.shape}")
        if self.delta is not None and not (np.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "lam", _frozen(lam, complex))
        object.__setattr__(self, "b", _frozen(b, complex))
        object.__setattr__(self, "c", _frozen(c, complex))
        if self.delta is not None:
            object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.m == 1 and self.p == 1

    @property
    def stability_margin(self) -> float:
        """``-max(Re lam)``; positive iff the model is stable."""
        return float(-np.max(self.lam.real))

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.lam.real < 0))

    def transfer(self, s) -> np.ndarray:
        """Evaluate ``G(s) = C (sI - A)^{-1} B`` at the points ``s``.

        Returns an array of shape ``s.shape + (p, m)``.
        """
        s = np.asarray(s, dtype=complex)
        resolvent = 1.0 / (s[..., None] - self.lam)
        return np.einsum("pn,...n,nm->...pm", self.c, resolvent, self.b)

    def markov_weights(self) -> np.ndarray:
        """Residue of each mode, ``c[:, i] b[i, :]``, shape ``(N, p, m)``."""
        return np.einsum("pn,nm->npm", self.c, self.b)

    def replace(self, **changes) -> "DssModel":
        kw = dict(lam=self.lam, b=self.b, c=self.c, delta=self.delta)
        kw.update(changes)
        return DssModel(**kw)

    def conj(self) -> "DssModel":
        return DssModel(self.lam.conj(), self.b.conj(), self.c.conj(), self.delta)

    def __repr__(self):
        return f"DssModel(n={self.n}, m={self.m}, p={self.p}, delta={self.delta})"


@dataclass(frozen=True, eq=False)
class DssExpParams:
    """Real parameters of a SISO model in exponential form.

    The induced eigenvalues are ``-exp(lambda_re) + 1j*lambda_im``, the input map
    is the all-ones column and the output row is ``w_re + 1j*w_im``.
    """

    lambda_re: np.ndarray
    lambda_im: np.ndarray
    w_re: np.ndarray
    w_im: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        vecs = [np.asarray(getattr(self, k), dtype=float) for k in ("lambda_re", "lambda_im", "w_re", "w_im")]
        lengths = {v.shape for v in vecs}
        if any(v.ndim != 1 for v in vecs) or len(lengths) != 1:
            raise DimensionError(f"parameter vectors must be 1-D of equal length, got {[v.shape for v in vecs]}")
        if vecs[0].size < 1:
            raise DimensionError("parameter vectors must be non-empty")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        for k, v in zip(("lambda_re", "lambda_im", "w_re", "w_im"), vecs):
            object.__setattr__(self, k, _frozen(v, float))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return self.lambda_re.size

    @property
    def lam(self) -> np.ndarray:
        return -np.exp(self.lambda_re) + 1j * self.lambda_im

    @property
    def w(self) -> np.ndarray:
        return self.w_re + 1j * self.w_im

    def to_vector(self) -> np.ndarray:
        """Stack the four vectors into one real array of length ``4N``."""
        return np.concatenate([self.lambda_re, self.lambda_im, self.w_re, self.w_im])

    @classmethod
    def from_vector(cls, x, delta: float = 1.0) -> "DssExpParams":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 4:
            raise DimensionError(f"vector length must be a multiple of 4, got {x.shape}")
        return cls(*np.split(x, 4), delta=delta)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lambda_re": self.lambda_re.tolist(),
            "lambda_im": self.lambda_im.tolist(),
            "w_re": self.w_re.tolist(),
            "w_im": self.w_im.tolist(),
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DssExpParams":
        params = cls(d["lambda_re"], d["lambda_im"], d["w_re"], d["w_im"], delta=d.get("delta", 1.0))
        if "n" in d and int(d["n"]) != params.n:
            raise DimensionError(f"declared n={d['n']} but vectors have length {params.n}")
        return params

    def __repr__(self):
        return f"DssExpParams(n={self.n}, delta={self.delta})"


@dataclass(frozen=True)
class Horizon:
    """Evaluation horizon: finite ``tau`` seconds, or infinite when ``tau is None``."""

    tau: float | None = None

    def __post_init__(self):
        if self.tau is not None:
            if not (math.isfinite(self.tau) and self.tau > 0):
                raise ConfigurationError(f"finite horizon needs tau > 0, got {self.tau}")
            object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def finite(cls, tau: float) -> "Horizon":
        return cls(tau)

    @classmethod
    def infinite(cls) -> "Horizon":
        return cls(None)

    @property
    def is_finite(self) -> bool:
        return self.tau is not None

    @property
    def kind(self) -> str:
        return "finite" if self.is_finite else "infinite"

    def __str__(self):
        return "inf" if self.tau is None else repr(self.tau)


@dataclass(frozen=True, eq=False)
class DiscreteDss:
    """Zero-order-hold discretisation ``x_k = a_bar * x_{k-1} + b_bar u_k, y_k = c_bar x_k``."""

    a_bar: np.ndarray
    b_bar: np.ndarray
    c_bar: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return self.a_bar.size


def exp_params_to_model(params: DssExpParams) -> DssModel:
    return DssModel(params.lam, np.ones((params.n, 1)), params.w[None, :], params.delta)


def model_to_exp_params(model: DssModel) -> DssExpParams:
    """Inverse of :func:`exp_params_to_model` up to a diagonal state scaling.

    Each mode is rescaled so that its input weight becomes one, folding ``b_i``
    into ``c_i``.  The poles and the residues ``c_i b_i`` are unchanged, hence so
    is the transfer function.
    """
    if not model.is_siso:
        raise DimensionError(f"exponential form is SISO only, got m={model.m}, p={model.p}")
    if not model.is_stable:
        raise NotStableError(f"model has max Re(lam) = {np.max(model.lam.real):.3g}")
    b = model.b[:, 0]
    if np.any(b == 0):
        raise DegenerateInputError(f"input weights vanish at modes {np.flatnonzero(b == 0).tolist()}")
    w = model.c[0] * b
    return DssExpParams(
        np.log(-model.lam.real),
        model.lam.imag,
        w.real,
        w.imag,
        delta=model.delta if model.delta is not None else 1.0,
    )


def random_stable_model(n: int, seed: int, delta: float = 1.0) -> DssExpParams:
    """Random exponential-form model with i.i.d. standard normal parameters.

    Draws come from :class:`numpy.random.Generator` over the PCG64 bit generator,
    in the order ``lambda_re, lambda_im, w_re, w_im`` (``n`` each), so a given
    ``(n, seed)`` always yields the same model.
    """
    if int(n) != n or n < 1:
        raise DimensionError(f"order must be a positive integer, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    lambda_re, lambda_im, w_re, w_im = rng.standard_normal((4, int(n)))
    return DssExpParams(lambda_re, lambda_im, w_re, w_im, delta=delta)


def discretize(model: DssModel) -> DiscreteDss:
    if model.delta is None:
        raise ConfigurationError("model has no sampling time")
    if np.any(model.lam == 0):
        raise SingularStateError("zero eigenvalue; ZOH input map is undefined")
    z = model.lam * model.delta
    a_bar = np.exp(z)
    # expm1 keeps b_bar accurate when |lam * delta| is tiny
    b_bar = (np.expm1(z) / model.lam)[:, None] * model.b
    return DiscreteDss(a_bar, b_bar, np.array(model.c), model.delta)


# -- model bank files ---------------------------------------------------------


def load_bank(path) -> list[DssExpParams]:
    """Read a JSON model bank ``{"models": [{n, lambda_re, ..., delta}, ...]}``."""
    with open(path) as fh:
        doc = json.load(fh)
    return [DssExpParams.from_dict(d) for d in doc["models"]]


def save_bank(path, models: Iterable[DssExpParams], **extra) -> None:
    doc = dict(extra)
    doc["models"] = [m.to_dict() for m in models]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_config_overrides(path) -> dict:
    """Reducer settings from a JSON file; read from a top-level ``"config"`` key if present."""
    with open(path) as fh:
        doc = json.load(fh)
    return dict(doc.get("config", doc))
