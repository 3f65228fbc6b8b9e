"""Balanced truncation, Hankel singular values and initial ROM selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as spla
from scipy.optimize import minimize_scalar

from .exceptions import DegenerateInputError, DimensionError, DssError, NotStableError
from .gramians import error_system, observability_gramian, reachability_gramian
from .model import (
    DssExpParams,
    DssModel,
    Horizon,
    model_to_exp_params,
    random_stable_model,
)

__all__ = [
    "BtResult",
    "FrequencyGrid",
    "RankDeficientError",
    "balanced_truncation",
    "hankel_singular_values",
    "hinf_estimate",
    "fallback_seed",
    "InitChoice",
    "choose_initializer",
    "select_initializer",
    "bt_error_bounds",
    "bt_error_hinf",
]

GRAMIAN_RANK_RTOL = 1e-12
EIGVEC_COND_MAX = 1e12


class RankDeficientError(DssError):
    """The requested order exceeds the numerical rank of the Gramian product."""


@dataclass(frozen=True, eq=False)
class BtResult:
    """Outcome of balanced truncation.

    ``rom`` is returned in diagonal form.  ``stable`` is ``False`` when the
    truncated model has an eigenvalue with ``Re >= 0`` (possible for
    finite-horizon Gramians); ``diagonalizable`` is ``False`` when the reduced
    state matrix is numerically defective.
    """

    rom: DssModel
    hankel_sv: np.ndarray
    stable: bool
    method: str
    horizon: Horizon
    diagonalizable: bool = True

    @property
    def usable(self) -> bool:
        return self.stable and self.diagonalizable and bool(np.all(np.isfinite(self.rom.lam)))


def _psd_root(gram: np.ndarray) -> np.ndarray:
    """Factor ``G = R R^*`` keeping eigenvalues above ``1e-12 * max``."""
    w, u = np.linalg.eigh(gram)
    w = np.maximum(w, 0.0)
    keep = w > GRAMIAN_RANK_RTOL * max(w.max(), np.finfo(float).tiny)
    return u[:, keep] * np.sqrt(w[keep])


def _roots_and_svd(full: DssModel, h: Horizon):
    if not h.is_finite and not full.is_stable:
        raise NotStableError("infinite-horizon balancing needs a stable model")
    r_fac = _psd_root(reachability_gramian(full, h))
    l_fac = _psd_root(observability_gramian(full, h))
    u, s, vh = np.linalg.svd(l_fac.conj().T @ r_fac, full_matrices=False)
    return r_fac, l_fac, u, s, vh


def _padded(s: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: s.size] = s[:n]
    return out


def hankel_singular_values(full: DssModel, h: Horizon) -> np.ndarray:
    """``sqrt(eig(P Q))`` for the horizon-matched Gramians, nonincreasing, length ``N``."""
    if not h.is_finite and not full.is_stable:
        raise NotStableError("infinite-horizon Hankel singular values need a stable model")
    if not np.any(full.c) or not np.any(full.b):
        return np.zeros(full.n)
    *_, s, _ = _roots_and_svd(full, h)
    return _padded(s, full.n)


def _method_name(h: Horizon) -> str:
    return "fbt" if h.is_finite else "ibt"


def balanced_truncation(full: DssModel, r: int, h: Horizon) -> BtResult:
    """Square-root balanced truncation to order ``r``, re-diagonalised.

    The Gramians are factored through their Hermitian eigendecompositions; the
    SVD of the factor product gives the Hankel singular values and the
    balancing projection.  After truncation the (generally non-normal) reduced
    state matrix is eigendecomposed so the ROM is again diagonal.

    Raises
    ------
    DimensionError
        If ``r`` is outside ``[1, N]``.
    RankDeficientError
        If fewer than ``r`` Hankel singular values are numerically nonzero.
    """
    if int(r) != r or not 1 <= r <= full.n:
        raise DimensionError(f"order must lie in [1, {full.n}], got {r}")
    method = _method_name(h)
    if r == full.n:
        sv = hankel_singular_values(full, h)
        return BtResult(full, sv, full.is_stable, method, h)

    r_fac, l_fac, u, s, vh = _roots_and_svd(full, h)
    if s.size < r or not s[r - 1] > GRAMIAN_RANK_RTOL * s[0]:
        raise RankDeficientError(f"order {r} exceeds the numerical rank of the Gramians")
    scale = 1.0 / np.sqrt(s[:r])
    t_right = (r_fac @ vh[:r].conj().T) * scale
    t_left = (l_fac @ u[:, :r]) * scale
    a_r = t_left.conj().T @ (full.lam[:, None] * t_right)
    b_r = t_left.conj().T @ full.b
    c_r = full.c @ t_right

    lam, vecs = spla.eig(a_r)
    diagonalizable = bool(np.isfinite(lam).all() and np.linalg.cond(vecs) < EIGVEC_COND_MAX)
    if diagonalizable:
        b_d = np.linalg.solve(vecs, b_r)
        c_d = c_r @ vecs
    else:
        b_d, c_d = b_r, c_r
    rom = DssModel(lam, b_d, c_d, full.delta)
    return BtResult(rom, _padded(s, full.n), rom.is_stable, method, h, diagonalizable)


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency sampling for :func:`hinf_estimate`.

    ``n`` logarithmically spaced magnitudes in ``[lo, hi] * scale`` are used
    with both signs, plus ``w = 0`` and the imaginary parts of the poles.
    ``scale`` defaults to ``max |lam|``.  With ``refine`` the best few samples
    are polished by a bounded scalar search between their neighbours.
    """

    n: int = 2001
    lo: float = 1e-4
    hi: float = 1e4
    scale: float | None = None
    refine: bool = True
    n_refine: int = 8

    def points(self, lam: np.ndarray) -> np.ndarray:
        scale = self.scale if self.scale is not None else float(np.max(np.abs(lam)))
        scale = scale if scale > 0 else 1.0
        mags = np.logspace(np.log10(self.lo * scale), np.log10(self.hi * scale), self.n)
        return np.unique(np.concatenate([-mags, [0.0], mags, lam.imag]))


def _gain(sys: DssModel, w) -> np.ndarray:
    g = sys.transfer(1j * np.asarray(w, dtype=float))
    if sys.is_siso:
        return np.abs(g[..., 0, 0])
    return np.linalg.svd(g, compute_uv=False)[..., 0]


def hinf_estimate(sys: DssModel, grid: FrequencyGrid | None = None) -> float:
    """Sampled estimate of ``max_w sigma_max(G(i w))``; a lower bound on the H-infinity norm."""
    grid = grid or FrequencyGrid()
    if not sys.is_stable:
        raise NotStableError("H-infinity norm of an unstable model")
    w = grid.points(sys.lam)
    gains = _gain(sys, w)
    best = float(gains.max())
    if grid.refine and best > 0:
        for i in np.argsort(gains)[::-1][: grid.n_refine]:
            lo = w[max(i - 1, 0)]
            hi = w[min(i + 1, w.size - 1)]
            if hi <= lo:
                continue
            res = minimize_scalar(
                lambda x: -_gain(sys, x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, abs(w[i]))}
            )
            best = max(best, float(-res.fun))
    return best


def fallback_seed(model_index: int, r: int) -> int:
    """Deterministic seed for the random initial ROM of model ``model_index`` at order ``r``."""
    return int(np.random.SeedSequence([int(model_index), int(r)]).generate_state(1, np.uint64)[0])


class InitChoice(NamedTuple):
    """Initial ROM with its provenance and, for a fallback, why BT was rejected."""

    params: DssExpParams
    provenance: str
    reason: str
    bt_stable: bool | None


def choose_initializer(full: DssModel, r: int, h: Horizon, seed: int = 0) -> InitChoice:
    """Like :func:`select_initializer`, also reporting why BT was or was not used.

    ``reason`` is one of ``"ok"``, ``"unstable"``, ``"non_diagonalizable"``,
    ``"rank_deficient"``, ``"degenerate_input"`` or ``"failed"``; ``bt_stable``
    is ``None`` when no BT model was produced.
    """
    if not full.is_siso:
        raise DimensionError("initializer selection is defined for SISO models")
    if not full.is_stable:
        raise NotStableError("full model must be stable")
    delta = full.delta if full.delta is not None else 1.0
    bt_stable = None
    try:
        bt = balanced_truncation(full, r, h)
        bt_stable = bt.stable
        if not bt.stable:
            reason = "unstable"
        elif not bt.usable:
            reason = "non_diagonalizable"
        else:
            params = model_to_exp_params(bt.rom.replace(delta=delta))
            if np.all(np.isfinite(params.to_vector())):
                return InitChoice(params, bt.method, "ok", True)
            reason = "failed"
    except RankDeficientError:
        reason = "rank_deficient"
    except DegenerateInputError:
        reason = "degenerate_input"
    except (NotStableError, np.linalg.LinAlgError):
        reason = "failed"
    return InitChoice(random_stable_model(r, seed, delta=delta), "random", reason, bt_stable)


def select_initializer(full: DssModel, r: int, h: Horizon, seed: int = 0) -> tuple[DssExpParams, str]:
    """Initial exponential-form ROM: horizon-matched BT, else a random stable model.

    Returns the parameters and their provenance, ``"ibt"``, ``"fbt"`` or
    ``"random"``.  The BT ROM is used only when it is stable, diagonalizable
    and every input weight is nonzero.
    """
    choice = choose_initializer(full, r, h, seed)
    return choice.params, choice.provenance


def bt_error_bounds(bt: BtResult, r: int) -> tuple[float, float]:
    """Lower and upper H-infinity error bounds ``sigma_{r+1}`` and ``2 sum_{i>r} sigma_i``."""
    tail = bt.hankel_sv[r:]
    return (float(tail[0]) if tail.size else 0.0), float(2 * tail.sum())


def bt_error_hinf(full: DssModel, bt: BtResult, grid: FrequencyGrid | None = None) -> float:
    return hinf_estimate(error_system(full, bt.rom), grid)
