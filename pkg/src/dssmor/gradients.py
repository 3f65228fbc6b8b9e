"""Gradients of the reduction objective.

Complex gradients follow the convention ``grad_x f = df/dRe(x) + 1j df/dIm(x)``,
so a plain steepest-descent step ``x - alpha * grad_x f`` is a real gradient
step in the ``(Re x, Im x)`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import (
    ConsistencyError,
    DimensionError,
    DivergentIntegralError,
    StabilityMarginError,
    StructureError,
)
from .gramians import GramianSet, objective_f
from .model import DssExpParams, DssModel, Horizon, exp_params_to_model

__all__ = [
    "ExpGradients",
    "GradientSet",
    "frechet_expm_diag",
    "theorem1_gradients",
    "value_and_gradients",
    "exp_chain_rule",
    "fd_gradient_oracle",
    "fd_exp_gradient_oracle",
]


class ExpGradients(NamedTuple):
    """Real gradients with respect to the exponential-form parameters."""

    lambda_re: np.ndarray
    lambda_im: np.ndarray
    w_re: np.ndarray
    w_im: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self)

    def magnitude(self) -> float:
        return float(sum(np.linalg.norm(v) for v in self))


@dataclass(frozen=True, eq=False)
class GradientSet:
    grad_lambda: np.ndarray
    grad_b: np.ndarray
    grad_c: np.ndarray
    exp_grads: ExpGradients | None = None

    def magnitude(self) -> float:
        """``D = ||grad_lambda||_2 + ||grad_b||_F + ||grad_c||_F``."""
        return float(
            np.linalg.norm(self.grad_lambda) + np.linalg.norm(self.grad_b) + np.linalg.norm(self.grad_c)
        )

    def real_blocks(self) -> dict[str, np.ndarray]:
        """The gradient split into its real coordinate blocks, keyed by name."""
        blocks = {
            "lambda_re_part": self.grad_lambda.real,
            "lambda_im_part": self.grad_lambda.imag,
            "b_re": self.grad_b.real,
            "b_im": self.grad_b.imag,
            "c_re": self.grad_c.real,
            "c_im": self.grad_c.imag,
        }
        if self.exp_grads is not None:
            blocks.update({f"exp_{k}": v for k, v in self.exp_grads._asdict().items()})
        return blocks


def _phi(a, b):
    """Divided difference ``(e^a - e^b) / (a - b)`` with ``phi(a, a) = e^a``."""
    a, b = np.broadcast_arrays(a, b)
    d = a - b
    out = np.empty(d.shape, dtype=complex)
    far = np.abs(d) >= 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        out[far] = (np.exp(a[far]) - np.exp(b[far])) / d[far]
    # e^{(a+b)/2} sinh(d/2) / (d/2) avoids cancellation for close arguments
    near = ~far
    half = d[near] / 2
    tiny = np.abs(half) < 0.5e-7
    sinhc = np.where(tiny, 1.0 + half**2 / 6.0, np.sinh(half) / np.where(tiny, 1.0, half))
    out[near] = np.exp((a[near] + b[near]) / 2) * sinhc
    return out


def frechet_expm_diag(lambda_hat, s, scale: float) -> np.ndarray:
    """Fréchet derivative of ``expm`` at ``diag(lambda_hat) * scale`` in direction ``s``.

    ``L(A, S) = int_0^1 e^{A(1-u)} S e^{Au} du``; for diagonal ``A`` the entries
    are ``s_ij * (e^{a_i} - e^{a_j}) / (a_i - a_j)`` with ``a = lambda_hat * scale``.
    """
    a = np.asarray(lambda_hat, dtype=complex).reshape(-1) * scale
    s = np.asarray(s, dtype=complex)
    if s.shape != (a.size, a.size):
        raise DimensionError(f"direction must be {a.size}x{a.size}, got {s.shape}")
    return s * _phi(a[:, None], a[None, :])


def theorem1_gradients(full: DssModel, rom: DssModel, h: Horizon, g: GramianSet) -> GradientSet:
    """Analytic gradients of the objective with respect to ``(lam_hat, B_hat, C_hat)``.

    With ``S = X^* e^{A^* tau} C^* C_hat - P_hat e^{A_hat^* tau} C_hat^* C_hat``::

        grad_lam = 2 diag(Y_tau^* X + Q_hat_tau P_hat + tau L(A_hat tau, S)^*)
        grad_B   = 2 (Y_tau^* B + Q_hat_tau B_hat)
        grad_C   = 2 (-C X_tau + C_hat P_hat_tau)

    where ``X`` and ``P_hat`` are infinite-horizon solutions.  For an infinite
    horizon the Fréchet term vanishes and all Gramians are infinite-horizon.
    """
    if not g.matches(full, rom, h):
        raise ConsistencyError("Gramian set was computed for a different (full, rom, horizon)")
    if g.x_inf is None or g.p_hat_inf is None:
        raise DivergentIntegralError("infinite-horizon cross Gramian does not exist (unstable full model)")
    b, c, bh, ch = full.b, full.c, rom.b, rom.c
    core = g.y_tau.conj().T @ g.x_inf + g.q_hat_tau @ g.p_hat_inf
    diag = np.diagonal(core).copy()
    if h.is_finite:
        tau = h.tau
        cc_h = c.conj().T @ ch
        s_tau = (g.x_inf.conj().T * np.exp(full.lam.conj() * tau)[None, :]) @ cc_h - (
            g.p_hat_inf * np.exp(rom.lam.conj() * tau)[None, :]
        ) @ (ch.conj().T @ ch)
        frechet = frechet_expm_diag(rom.lam, s_tau, tau)
        diag += tau * np.diagonal(frechet).conj()
    grad_lambda = 2 * diag
    grad_b = 2 * (g.y_tau.conj().T @ b + g.q_hat_tau @ bh)
    grad_c = 2 * (-c @ g.x_tau + ch @ g.p_hat_tau)
    return GradientSet(grad_lambda, grad_b, grad_c)


def value_and_gradients(full: DssModel, rom: DssModel, h: Horizon) -> tuple[float, GradientSet]:
    f, g = objective_f(full, rom, h)
    return f, theorem1_gradients(full, rom, h, g)


def exp_chain_rule(grads: GradientSet, rom_params: DssExpParams) -> GradientSet:
    """Map complex gradients to the exponential-form parameters.

    Since ``Re(lam_hat) = -exp(lambda_re)``, the chain rule gives
    ``df/dlambda_re = df/dRe(lam_hat) * Re(lam_hat)``.  The ``B_hat`` gradient
    is dropped because the input map is fixed to ones.
    """
    r = rom_params.n
    if grads.grad_lambda.shape != (r,) or grads.grad_c.shape != (1, r) or grads.grad_b.shape != (r, 1):
        raise StructureError(
            f"gradients do not belong to a SISO order-{r} exponential-form model "
            f"(shapes {grads.grad_lambda.shape}, {grads.grad_b.shape}, {grads.grad_c.shape})"
        )
    re_lam = -np.exp(rom_params.lambda_re)
    exp_grads = ExpGradients(
        grads.grad_lambda.real * re_lam,
        grads.grad_lambda.imag.copy(),
        grads.grad_c[0].real.copy(),
        grads.grad_c[0].imag.copy(),
    )
    return replace(grads, exp_grads=exp_grads)


def _central_difference(fun, x: np.ndarray, step: float) -> np.ndarray:
    out = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        out[k] = (fun(xp) - fun(xm)) / (2 * step)
    return out


def _check_step(step: float):
    if not 1e-8 <= step <= 1e-4:
        raise ValueError(f"finite-difference step must lie in [1e-8, 1e-4], got {step}")


def fd_gradient_oracle(full: DssModel, rom: DssModel, h: Horizon, step: float = 1e-6) -> GradientSet:
    """Central finite differences of the objective over every real coordinate of the ROM.

    Each evaluation is a fresh :func:`objective_f` call, so this shares no code
    path with :func:`theorem1_gradients` beyond the objective itself.
    """
    _check_step(step)
    if rom.stability_margin <= step:
        raise StabilityMarginError(
            f"stability margin {rom.stability_margin:.3g} does not exceed the step {step:.3g}"
        )
    r, m, p = rom.n, rom.m, rom.p
    sizes = [r, r, r * m, r * m, p * r, p * r]
    splits = np.cumsum(sizes)[:-1]

    def unpack(x):
        lr, li, br, bi, cr, ci = np.split(x, splits)
        return rom.replace(lam=lr + 1j * li, b=(br + 1j * bi).reshape(r, m), c=(cr + 1j * ci).reshape(p, r))

    def fun(x):
        return objective_f(full, unpack(x), h)[0]

    x0 = np.concatenate(
        [rom.lam.real, rom.lam.imag, rom.b.real.ravel(), rom.b.imag.ravel(), rom.c.real.ravel(), rom.c.imag.ravel()]
    )
    d = _central_difference(fun, x0, step)
    lr, li, br, bi, cr, ci = np.split(d, splits)
    return GradientSet(lr + 1j * li, (br + 1j * bi).reshape(r, m), (cr + 1j * ci).reshape(p, r))


def fd_exp_gradient_oracle(full: DssModel, params: DssExpParams, h: Horizon, step: float = 1e-6) -> ExpGradients:
    """Central finite differences of the objective in the exponential-form coordinates."""
    _check_step(step)

    def fun(x):
        return objective_f(full, exp_params_to_model(DssExpParams.from_vector(x, params.delta)), h)[0]

    d = _central_difference(fun, params.to_vector(), step)
    return ExpGradients(*np.split(d, 4))
