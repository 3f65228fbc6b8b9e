"""Discrete-time simulation and the output-error bound check.

With the zero-order-hold discretisation, ``y_k`` equals the continuous output
at ``t = k * delta`` for a piecewise-constant input, and the input energy is
``delta * sum_k ||u_k||^2`` exactly.  The continuous-time bound

    max_t ||y(t) - y_hat(t)|| <= ||G - G_hat||_{H2, tau} * sqrt(int_0^tau ||u||^2 dt)

therefore applies to the sampled outputs with ``tau = L * delta``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DimensionError
from .gramians import error_h2_norm_sq
from .model import DiscreteDss, DssModel, Horizon, discretize

__all__ = [
    "SequenceSignal",
    "ErrorBoundReport",
    "run_recurrence",
    "simulate",
    "check_error_bound",
    "impulse",
    "white_noise",
    "read_signal_csv",
    "write_signal_csv",
]

# relative slack on the bound, covering roundoff in the sampled comparison
EPS_DISC = 1e-2


@dataclass(frozen=True, eq=False)
class SequenceSignal:
    """``L`` samples of an ``m``-channel signal at spacing ``delta``; ``samples`` has shape ``(L, m)``."""

    samples: np.ndarray
    delta: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise DimensionError(f"samples must have shape (L, m) with L >= 1, got {s.shape}")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        s = np.array(s, dtype=complex if np.iscomplexobj(s) else float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def energy(self) -> float:
        """Zero-order-hold input energy ``delta * sum_k ||u_k||^2``."""
        return float(self.delta * np.sum(np.abs(self.samples) ** 2))


def run_recurrence(sys: DiscreteDss, u: SequenceSignal) -> SequenceSignal:
    """Outputs ``y_k = c_bar x_k`` of ``x_k = a_bar * x_{k-1} + b_bar u_k`` with ``x_0 = 0``."""
    if u.channels != sys.b_bar.shape[1]:
        raise DimensionError(f"input has {u.channels} channels, system expects {sys.b_bar.shape[1]}")
    drive = u.samples @ sys.b_bar.T  # (L, N)
    states = np.empty_like(drive, dtype=complex)
    x = np.zeros(sys.n, dtype=complex)
    a = sys.a_bar
    for k in range(drive.shape[0]):
        x = a * x + drive[k]
        states[k] = x
    return SequenceSignal(states @ sys.c_bar.T, u.delta)


def simulate(model: DssModel, u: SequenceSignal) -> SequenceSignal:
    """Discretise ``model`` at the input's sampling time and run it on ``u``."""
    if model.delta is None:
        model = model.replace(delta=u.delta)
    elif not np.isclose(model.delta, u.delta, rtol=1e-12, atol=0):
        raise ConfigurationError(f"model delta {model.delta} differs from signal delta {u.delta}")
    return run_recurrence(discretize(model), u)


class ErrorBoundReport(NamedTuple):
    lhs: float
    rhs: float
    satisfied: bool


def check_error_bound(full: DssModel, rom: DssModel, u: SequenceSignal) -> ErrorBoundReport:
    """Compare ``max_k ||y_k - y_hat_k||`` with the H2 error times the input energy root."""
    if full.delta is None or rom.delta is None:
        raise ConfigurationError("both models need a sampling time")
    if not np.isclose(full.delta, rom.delta, rtol=1e-12, atol=0):
        raise ConfigurationError(f"sampling times differ: {full.delta} vs {rom.delta}")
    y = simulate(full, u).samples
    y_hat = simulate(rom, u).samples
    lhs = float(np.max(np.linalg.norm(y - y_hat, axis=1)))
    tau = u.length * full.delta
    rhs = float(np.sqrt(error_h2_norm_sq(full, rom, Horizon.finite(tau))) * np.sqrt(u.energy()))
    return ErrorBoundReport(lhs, rhs, lhs <= rhs * (1 + EPS_DISC))


def impulse(length: int, delta: float, channels: int = 1) -> SequenceSignal:
    u = np.zeros((length, channels))
    u[0] = 1.0
    return SequenceSignal(u, delta)


def white_noise(length: int, delta: float, seed: int, channels: int = 1, complex_valued: bool = False) -> SequenceSignal:
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.standard_normal((length, channels))
    if complex_valued:
        u = u + 1j * rng.standard_normal((length, channels))
    return SequenceSignal(u, delta)


def read_signal_csv(path, delta: float) -> SequenceSignal:
    """Read a SISO signal from a CSV with columns ``k,re,im``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DimensionError(f"{path} contains no samples")
    rows.sort(key=lambda r: int(r["k"]))
    vals = np.array([float(r["re"]) + 1j * float(r.get("im") or 0.0) for r in rows])
    return SequenceSignal(vals, delta)


def write_signal_csv(path, signal: SequenceSignal) -> None:
    if signal.channels != 1:
        raise DimensionError("signal CSV files hold a single channel")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "re", "im"])
        for k, v in enumerate(signal.samples[:, 0], start=1):
            v = complex(v)
            w.writerow([k, f"{v.real:.17g}", f"{v.imag:.17g}"])
