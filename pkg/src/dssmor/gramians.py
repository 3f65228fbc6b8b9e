"""Closed-form Gramians, finite-time H2 norms and the reduction objective.

Because every state matrix is diagonal, each Lyapunov or Sylvester equation

    diag(mu) M + M diag(nu) + R - e^{diag(mu) tau} R e^{diag(nu) tau} = 0

is solved entrywise by ``M = R * K(mu, nu)`` with the Cauchy-type kernel

    K_ij = int_0^tau exp((mu_i + nu_j) t) dt.

The infinite-horizon equation drops the exponential correction and uses
``K_ij = -1 / (mu_i + nu_j)``.  All solves cost O(len(mu) * len(nu)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DivergentIntegralError, NotStableError, NumericError
from .model import DssModel, Horizon

__all__ = [
    "GramianSet",
    "cauchy_kernel",
    "solve_finite_sylvester",
    "sylvester_residual",
    "reachability_gramian",
    "observability_gramian",
    "h2_norm_sq",
    "error_system",
    "error_h2_norm_sq",
    "objective_f",
    "objective_value",
]

# |z| below which (e^z - 1)/z is evaluated by its Taylor series
_SERIES_THRESHOLD = 1e-6
_TRACE_RTOL = 1e-9


def cauchy_kernel(mu, nu, h: Horizon) -> np.ndarray:
    """Matrix of ``int_0^tau exp((mu_i + nu_j) t) dt`` (``-1/(mu_i+nu_j)`` if infinite)."""
    mu = np.asarray(mu, dtype=complex).reshape(-1)
    nu = np.asarray(nu, dtype=complex).reshape(-1)
    s = mu[:, None] + nu[None, :]
    if not h.is_finite:
        if np.any(s.real >= 0):
            raise DivergentIntegralError(
                f"infinite-horizon integral diverges: max Re(mu_i + nu_j) = {s.real.max():.3g}"
            )
        return -1.0 / s
    tau = h.tau
    z = s * tau
    small = np.abs(z) < _SERIES_THRESHOLD
    if not small.any():
        with np.errstate(over="ignore", invalid="ignore"):
            return np.expm1(z) / s
    out = np.empty_like(s)
    big = ~small
    with np.errstate(over="ignore", invalid="ignore"):
        out[big] = np.expm1(z[big]) / s[big]
    zs = z[small]
    out[small] = tau * (1.0 + zs / 2.0 + zs**2 / 6.0 + zs**3 / 24.0)
    return out


def solve_finite_sylvester(lambda_left, lambda_right, rhs, h: Horizon) -> np.ndarray:
    """Solve ``diag(l) M + M diag(r) + rhs - e^{l tau} rhs e^{r tau} = 0`` for ``M``.

    For an infinite horizon the exponential correction is absent, which is
    the ``tau -> oo`` limit for stable coefficients.
    """
    rhs = np.asarray(rhs, dtype=complex)
    lambda_left = np.asarray(lambda_left, dtype=complex).reshape(-1)
    lambda_right = np.asarray(lambda_right, dtype=complex).reshape(-1)
    if rhs.shape != (lambda_left.size, lambda_right.size):
        raise DimensionError(f"rhs shape {rhs.shape} does not match ({lambda_left.size}, {lambda_right.size})")
    return rhs * cauchy_kernel(lambda_left, lambda_right, h)


def sylvester_residual(lambda_left, lambda_right, rhs, sol, h: Horizon) -> np.ndarray:
    """Residual of the (finite- or infinite-horizon) diagonal Sylvester equation."""
    lambda_left = np.asarray(lambda_left, dtype=complex).reshape(-1)
    lambda_right = np.asarray(lambda_right, dtype=complex).reshape(-1)
    rhs = np.asarray(rhs, dtype=complex)
    res = lambda_left[:, None] * sol + sol * lambda_right[None, :] + rhs
    if h.is_finite:
        res = res - np.exp(lambda_left * h.tau)[:, None] * rhs * np.exp(lambda_right * h.tau)[None, :]
    return res


def _hermitian(m):
    return (m + m.conj().T) / 2


def reachability_gramian(model: DssModel, h: Horizon) -> np.ndarray:
    """``P = int_0^tau e^{At} B B^* e^{A^* t} dt`` (Hermitian)."""
    bb = model.b @ model.b.conj().T
    return _hermitian(solve_finite_sylvester(model.lam, model.lam.conj(), bb, h))


def observability_gramian(model: DssModel, h: Horizon) -> np.ndarray:
    """``Q = int_0^tau e^{A^* t} C^* C e^{At} dt`` (Hermitian)."""
    cc = model.c.conj().T @ model.c
    return _hermitian(solve_finite_sylvester(model.lam.conj(), model.lam, cc, h))


def _agree(a: float, b: float, scale: float, rtol: float = _TRACE_RTOL) -> bool:
    # scale bounds the magnitude of the summed terms, so cancellation is not penalised
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + 1e2 * np.finfo(float).eps * scale


def _trace_forms(model: DssModel, h: Horizon):
    kern = cauchy_kernel(model.lam.conj(), model.lam, h)
    bb = model.b @ model.b.conj().T
    cc = model.c.conj().T @ model.c
    # tr(B^* Q B) = sum_ij (BB^*)_ji (C^*C)_ij K(conj l_i, l_j)
    terms_q = bb.T * cc * kern
    # tr(C P C^*) = sum_ij (C^*C)_ji (BB^*)_ij K(l_i, conj l_j)
    terms_p = cc.T * bb * kern.T
    return terms_q, terms_p


def _norm_sq_raw(model: DssModel, h: Horizon) -> tuple[float, float]:
    terms_q, terms_p = _trace_forms(model, h)
    via_q = float(terms_q.sum().real)
    via_p = float(terms_p.sum().real)
    scale = float(np.abs(terms_q).sum())
    if not np.isfinite(via_q) or not np.isfinite(via_p):
        raise NumericError("non-finite H2 norm")
    if not _agree(via_q, via_p, scale):
        raise NumericError(f"trace forms disagree: {via_q!r} vs {via_p!r}")
    return via_q, scale


def h2_norm_sq(model: DssModel, h: Horizon) -> float:
    """Squared (finite-time) H2 norm, ``tr(B^* Q B) = tr(C P C^*)``.

    Both trace forms are evaluated and must agree to a relative ``1e-9``.
    For a finite horizon the model need not be stable.
    """
    if not h.is_finite and not model.is_stable:
        raise DivergentIntegralError("infinite-horizon norm of an unstable model")
    return max(_norm_sq_raw(model, h)[0], 0.0)


def error_system(full: DssModel, rom: DssModel) -> DssModel:
    """Diagonal realisation of ``G - G_hat``: stacked poles, stacked inputs, ``[C, -C_hat]``."""
    if full.m != rom.m or full.p != rom.p:
        raise DimensionError(f"input/output sizes differ: ({full.m},{full.p}) vs ({rom.m},{rom.p})")
    return DssModel(
        np.concatenate([full.lam, rom.lam]),
        np.vstack([full.b, rom.b]),
        np.hstack([full.c, -rom.c]),
        full.delta,
    )


def error_h2_norm_sq(full: DssModel, rom: DssModel, h: Horizon) -> float:
    """``||G - G_hat||^2`` on the horizon, via the augmented error system."""
    err = error_system(full, rom)
    if not h.is_finite and not err.is_stable:
        raise DivergentIntegralError("infinite-horizon error norm with an unstable model")
    val, scale = _norm_sq_raw(err, h)
    if val < -1e-12 * max(scale, 1.0):
        raise NumericError(f"negative squared error norm {val!r}")
    return max(val, 0.0)


@dataclass(frozen=True, eq=False)
class GramianSet:
    """Solutions needed by the objective and its gradient.

    ``p_hat_tau``, ``q_hat_tau`` (r x r) are the reduced finite-time Gramians,
    ``x_tau``, ``y_tau`` (N x r) the finite-time cross Gramians, and
    ``p_hat_inf``, ``x_inf`` their infinite-horizon counterparts.  The infinite
    members are ``None`` when the integrals diverge (unstable full model).
    """

    p_hat_tau: np.ndarray
    q_hat_tau: np.ndarray
    x_tau: np.ndarray
    y_tau: np.ndarray
    p_hat_inf: np.ndarray | None
    x_inf: np.ndarray | None
    horizon: Horizon
    full: DssModel
    rom: DssModel

    def matches(self, full: DssModel, rom: DssModel, h: Horizon) -> bool:
        if self.horizon != h:
            return False
        if full is self.full and rom is self.rom:
            return True
        return (
            np.array_equal(full.lam, self.full.lam)
            and np.array_equal(full.b, self.full.b)
            and np.array_equal(full.c, self.full.c)
            and np.array_equal(rom.lam, self.rom.lam)
            and np.array_equal(rom.b, self.rom.b)
            and np.array_equal(rom.c, self.rom.c)
        )


def solve_gramians(full: DssModel, rom: DssModel, h: Horizon) -> GramianSet:
    lam, lam_hat = full.lam, rom.lam
    bbh = full.b @ rom.b.conj().T
    bhbh = rom.b @ rom.b.conj().T
    chch = rom.c.conj().T @ rom.c
    cch = full.c.conj().T @ rom.c
    p_hat_tau = _hermitian(solve_finite_sylvester(lam_hat, lam_hat.conj(), bhbh, h))
    q_hat_tau = _hermitian(solve_finite_sylvester(lam_hat.conj(), lam_hat, chch, h))
    x_tau = solve_finite_sylvester(lam, lam_hat.conj(), bbh, h)
    y_tau = solve_finite_sylvester(lam.conj(), lam_hat, -cch, h)
    if h.is_finite:
        inf = Horizon.infinite()
        p_hat_inf = _hermitian(solve_finite_sylvester(lam_hat, lam_hat.conj(), bhbh, inf))
        try:
            x_inf = solve_finite_sylvester(lam, lam_hat.conj(), bbh, inf)
        except DivergentIntegralError:
            x_inf = None
    else:
        p_hat_inf, x_inf = p_hat_tau, x_tau
    return GramianSet(p_hat_tau, q_hat_tau, x_tau, y_tau, p_hat_inf, x_inf, h, full, rom)


def objective_f(full: DssModel, rom: DssModel, h: Horizon) -> tuple[float, GramianSet]:
    """Reduction objective ``f`` with ``||G - G_hat||^2 = tr(B^* Q B) + f``.

    ``f`` is evaluated in its input form
    ``tr(B_hat^* Q_hat B_hat) + 2 Re tr(B_hat^* Y^* B)`` and in its output form
    ``tr(C_hat P_hat C_hat^*) - 2 Re tr(C_hat X^* C^*)``; the two must agree to
    a relative ``1e-9``.  ``f`` omits the constant ``||G||^2`` and may be negative.

    Returns
    -------
    f
        Objective value (input form).
    gramians
        The :class:`GramianSet` used, reusable by
        :func:`dssmor.gradients.theorem1_gradients`.
    """
    if full.m != rom.m or full.p != rom.p:
        raise DimensionError(f"input/output sizes differ: ({full.m},{full.p}) vs ({rom.m},{rom.p})")
    if not rom.is_stable:
        raise NotStableError(f"reduced model has max Re(lam) = {np.max(rom.lam.real):.3g}")
    g = solve_gramians(full, rom, h)
    bh, ch, b, c = rom.b, rom.c, full.b, full.c

    quad_b = np.trace(bh.conj().T @ g.q_hat_tau @ bh).real
    cross_b = np.trace(bh.conj().T @ g.y_tau.conj().T @ b).real
    f_in = float(quad_b + 2 * cross_b)

    quad_c = np.trace(ch @ g.p_hat_tau @ ch.conj().T).real
    cross_c = np.trace(ch @ g.x_tau.conj().T @ c.conj().T).real
    f_out = float(quad_c - 2 * cross_c)

    if not (np.isfinite(f_in) and np.isfinite(f_out)):
        raise NumericError("non-finite objective")
    scale = abs(quad_b) + 2 * float(np.abs(g.y_tau).sum() * np.abs(b).max() * np.abs(bh).max())
    if not _agree(f_in, f_out, scale):
        raise NumericError(f"objective forms disagree: {f_in!r} vs {f_out!r}")
    return f_in, g


def objective_value(full: DssModel, rom: DssModel, h: Horizon) -> float:
    """Output form of ``f`` only, without the gradient Gramians or the cross-check."""
    if not rom.is_stable:
        raise NotStableError(f"reduced model has max Re(lam) = {np.max(rom.lam.real):.3g}")
    ch = rom.c
    p_hat_tau = solve_finite_sylvester(rom.lam, rom.lam.conj(), rom.b @ rom.b.conj().T, h)
    x_tau = solve_finite_sylvester(full.lam, rom.lam.conj(), full.b @ rom.b.conj().T, h)
    f = float(np.trace(ch @ p_hat_tau @ ch.conj().T).real - 2 * np.trace(ch @ x_tau.conj().T @ full.c.conj().T).real)
    if not np.isfinite(f):
        raise NumericError("non-finite objective")
    return f
