"""Gradient descent with Armijo backtracking for finite-time H2 reduction.

Each iteration takes the plain gradient step ``phi - alpha * grad f(phi)``.
The step size starts at ``alpha_ini`` and is multiplied by ``rho`` until both

* the sufficient-decrease test ``f(trial) <= f_k - c1 * alpha * D_k`` holds, and
* the trial reduced model is stable,

where ``D_k`` is the sum of the gradient block norms.  The run stops when
``D_k < tol``, after ``k_max`` steps, or when backtracking runs out.

Two parameterisations are supported: ``"raw-complex"`` updates
``(lam_hat, B_hat, C_hat)`` directly; ``"dss-exp"`` updates the real
exponential-form vectors, for which stability holds automatically and the input
map stays fixed at ones.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DimensionError, DssError, NotStableError, NumericError
from .gradients import exp_chain_rule, theorem1_gradients
from .gramians import objective_f, objective_value
from .model import DssExpParams, DssModel, Horizon, exp_params_to_model, model_to_exp_params

__all__ = [
    "ReducerConfig",
    "TraceRow",
    "ReductionTrace",
    "ReductionResult",
    "ArmijoResult",
    "armijo_step",
    "reduce",
]

logger = logging.getLogger(__name__)

PARAMETERIZATIONS = ("raw-complex", "dss-exp")
CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
STALLED = "line_search_stalled"


@dataclass(frozen=True)
class ReducerConfig:
    tol: float = 1e-3
    c1: float = 1e-4
    alpha_ini: float = 1.0
    rho: float = 0.5
    k_max: int = 100
    max_backtracks: int = 60
    parameterization: str = "dss-exp"

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if not 0 < self.c1 < 1:
            raise ConfigurationError(f"c1 must lie in (0, 1), got {self.c1}")
        if not 0 < self.rho < 1:
            raise ConfigurationError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.alpha_ini > 0:
            raise ConfigurationError(f"alpha_ini must be positive, got {self.alpha_ini}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigurationError(f"k_max must be a positive integer, got {self.k_max}")
        if int(self.max_backtracks) != self.max_backtracks or self.max_backtracks < 1:
            raise ConfigurationError(f"max_backtracks must be a positive integer, got {self.max_backtracks}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ConfigurationError(f"parameterization must be one of {PARAMETERIZATIONS}")

    @classmethod
    def from_dict(cls, d: dict) -> "ReducerConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown reducer settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class TraceRow(NamedTuple):
    k: int
    f: float
    d: float
    alpha: float | None
    backtracks: int
    stable: bool


@dataclass
class ReductionTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def f(self) -> np.ndarray:
        return np.array([r.f for r in self.rows])

    @property
    def d(self) -> np.ndarray:
        return np.array([r.d for r in self.rows])

    @property
    def iterations(self) -> int:
        """Number of accepted steps."""
        return sum(r.alpha is not None for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "f", "D", "alpha", "backtracks", "stable"])
            for r in self.rows:
                w.writerow(
                    [
                        r.k,
                        f"{r.f:.17g}",
                        f"{r.d:.17g}",
                        "" if r.alpha is None else f"{r.alpha:.17g}",
                        r.backtracks,
                        int(r.stable),
                    ]
                )


@dataclass
class ReductionResult:
    rom: DssModel
    trace: ReductionTrace
    termination: str
    exp_params: DssExpParams | None = None

    @property
    def f_init(self) -> float:
        return self.trace.rows[0].f

    @property
    def f_final(self) -> float:
        return self.trace.rows[-1].f


class ArmijoResult(NamedTuple):
    phi: np.ndarray
    alpha: float
    backtracks: int
    accepted: bool
    f: float = np.nan


def armijo_step(
    phi: np.ndarray,
    grad: np.ndarray,
    f_k: float,
    d_k: float,
    cfg: ReducerConfig,
    evaluate: Callable[[np.ndarray], float],
    feasible: Callable[[np.ndarray], bool] | None = None,
) -> ArmijoResult:
    """Backtracking search along ``-grad``.

    Tries ``alpha = alpha_ini * rho**j`` for ``j = 0..max_backtracks`` and
    accepts the first trial that is feasible and satisfies
    ``evaluate(trial) <= f_k - c1 * alpha * d_k``.  Trials whose evaluation
    raises a :class:`~dssmor.exceptions.DssError` or is not finite are
    rejected, and the search gives up once ``alpha * grad`` no longer changes
    ``phi``.  If none is accepted the result has ``accepted=False``.
    """
    if not d_k > 0:
        raise ValueError("armijo_step needs a positive gradient magnitude")
    alpha = cfg.alpha_ini
    for j in range(cfg.max_backtracks + 1):
        trial = phi - alpha * grad
        if np.array_equal(trial, phi):
            # step below the resolution of phi; the decrease test would pass vacuously
            break
        if feasible is None or feasible(trial):
            try:
                f_trial = evaluate(trial)
            except DssError:
                f_trial = np.nan
            if np.isfinite(f_trial) and f_trial <= f_k - cfg.c1 * alpha * d_k:
                return ArmijoResult(trial, alpha, j, True, f_trial)
        alpha *= cfg.rho
    else:
        return ArmijoResult(phi, alpha / cfg.rho, cfg.max_backtracks, False)
    return ArmijoResult(phi, alpha, j, False)


class _RawComplex:
    """Real coordinates ``[Re lam, Im lam, Re B, Im B, Re C, Im C]`` of a ROM."""

    def __init__(self, template: DssModel):
        self.r, self.m, self.p = template.n, template.m, template.p
        self.delta = template.delta
        self.splits = np.cumsum([self.r, self.r, self.r * self.m, self.r * self.m, self.p * self.r])

    def pack(self, rom: DssModel) -> np.ndarray:
        return np.concatenate(
            [rom.lam.real, rom.lam.imag, rom.b.real.ravel(), rom.b.imag.ravel(), rom.c.real.ravel(), rom.c.imag.ravel()]
        )

    def unpack(self, x: np.ndarray) -> DssModel:
        lr, li, br, bi, cr, ci = np.split(x, self.splits)
        return DssModel(
            lr + 1j * li, (br + 1j * bi).reshape(self.r, self.m), (cr + 1j * ci).reshape(self.p, self.r), self.delta
        )

    def feasible(self, x: np.ndarray) -> bool:
        return bool(np.all(x[: self.r] < 0))

    def value_grad(self, full, x, h):
        rom = self.unpack(x)
        f, g = objective_f(full, rom, h)
        grads = theorem1_gradients(full, rom, h, g)
        vec = self.pack(DssModel(grads.grad_lambda, grads.grad_b, grads.grad_c))
        return f, vec, grads.magnitude()


class _ExpForm:
    """Real coordinates ``[lambda_re, lambda_im, w_re, w_im]`` of an exponential-form ROM."""

    def __init__(self, template: DssExpParams):
        self.delta = template.delta

    def pack(self, params: DssExpParams) -> np.ndarray:
        return params.to_vector()

    def params(self, x: np.ndarray) -> DssExpParams:
        return DssExpParams.from_vector(x, self.delta)

    def unpack(self, x: np.ndarray) -> DssModel:
        return exp_params_to_model(self.params(x))

    def feasible(self, x: np.ndarray) -> bool:
        return True

    def value_grad(self, full, x, h):
        params = self.params(x)
        rom = exp_params_to_model(params)
        f, g = objective_f(full, rom, h)
        grads = exp_chain_rule(theorem1_gradients(full, rom, h, g), params).exp_grads
        return f, grads.to_vector(), grads.magnitude()


def reduce(
    full: DssModel,
    init_rom: DssModel | DssExpParams,
    h: Horizon,
    cfg: ReducerConfig | None = None,
) -> ReductionResult:
    """Minimise the finite-time H2 error from ``init_rom`` by gradient descent.

    Parameters
    ----------
    full
        Full-order model.
    init_rom
        Stable initial reduced model.  Under ``"dss-exp"`` a :class:`DssModel`
        is first converted with :func:`~dssmor.model.model_to_exp_params`.
    h
        Horizon of the H2 error.
    cfg
        Optimiser settings; defaults to :class:`ReducerConfig`.

    Returns
    -------
    ReductionResult
        Final ROM, per-iteration trace and termination reason
        (``"converged"``, ``"max_iterations"`` or ``"line_search_stalled"``).
    """
    cfg = cfg or ReducerConfig()
    if cfg.parameterization == "dss-exp":
        if not full.is_siso:
            raise DimensionError("exponential-form reduction needs a SISO full model")
        if isinstance(init_rom, DssModel):
            init_rom = model_to_exp_params(init_rom)
        space = _ExpForm(init_rom)
        r = init_rom.n
    else:
        if isinstance(init_rom, DssExpParams):
            init_rom = exp_params_to_model(init_rom)
        if not init_rom.is_stable:
            raise NotStableError(f"initial ROM has max Re(lam) = {np.max(init_rom.lam.real):.3g}")
        space = _RawComplex(init_rom)
        r = init_rom.n
    if r > full.n:
        warnings.warn(f"reduced order {r} exceeds full order {full.n}", stacklevel=2)

    x = space.pack(init_rom)
    f_k, grad, d_k = space.value_grad(full, x, h)
    if not (np.isfinite(f_k) and np.all(np.isfinite(grad))):
        raise NumericError("objective or gradient is not finite at the initial ROM")

    trace = ReductionTrace()
    termination = MAX_ITERATIONS

    def evaluate(trial):
        return objective_value(full, space.unpack(trial), h)

    for k in range(cfg.k_max + 1):
        if d_k < cfg.tol:
            termination = CONVERGED
            trace.append(TraceRow(k, f_k, d_k, None, 0, True))
            break
        if k == cfg.k_max:
            trace.append(TraceRow(k, f_k, d_k, None, 0, True))
            break
        step = armijo_step(x, grad, f_k, d_k, cfg, evaluate, space.feasible)
        if not step.accepted:
            termination = STALLED
            trace.append(TraceRow(k, f_k, d_k, None, step.backtracks, True))
            break
        trace.append(TraceRow(k, f_k, d_k, step.alpha, step.backtracks, True))
        x = step.phi
        _, grad, d_k = space.value_grad(full, x, h)
        # keep the value the step was accepted on so the trace obeys the decrease rule exactly
        f_k = step.f

    logger.debug("reduction finished after %d steps: %s, f=%g, D=%g", trace.iterations, termination, f_k, d_k)
    rom = space.unpack(x)
    exp_params = space.params(x) if isinstance(space, _ExpForm) else None
    return ReductionResult(rom, trace, termination, exp_params)
