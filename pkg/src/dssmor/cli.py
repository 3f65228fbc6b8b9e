"""Batch command line: ensemble reduction, method comparison, gradient checks.

Exit codes: 0 success, 1 gradient check failed, 2 I/O or usage error,
3 at least one model failed (listed in the report).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import choose_initializer, fallback_seed, hankel_singular_values
from .exceptions import ConfigurationError, DssError
from .gradients import exp_chain_rule, fd_exp_gradient_oracle, fd_gradient_oracle, value_and_gradients
from .gramians import error_h2_norm_sq, h2_norm_sq, objective_f
from .model import (
    DssExpParams,
    Horizon,
    exp_params_to_model,
    load_bank,
    load_config_overrides,
    random_stable_model,
    save_bank,
)
from .reducer import ReducerConfig, reduce
from .simulate import check_error_bound, impulse, read_signal_csv, simulate, white_noise, write_signal_csv
from .validation import resolve_horizon

logger = logging.getLogger("dssmor")

EXIT_OK, EXIT_GRADCHECK, EXIT_IO, EXIT_MODEL = 0, 1, 2, 3
WORKERS_ENV = "DSSMOR_WORKERS"
METHODS = ("ibt", "fbt", "ih2", "fh2")
GRAD_RTOL = 1e-5
GRAD_ATOL = 1e-8

NOTICE = (
    "# Downstream classification accuracies of reduced deep sequence models (for example on "
    "long-range-arena tasks) need network training and are NOT reproduced here; "
    "this report covers only reduction-stage H2 errors."
)

REPORT_COLUMNS = [
    "model",
    "n",
    "r",
    "method",
    "tau",
    "provenance",
    "init_reason",
    "status",
    "f_init",
    "f_final",
    "iterations",
    "termination",
    "error_h2_before",
    "error_h2_after",
    "message",
]

COMPARE_COLUMNS = [
    "model",
    "n",
    "r",
    "method",
    "tau_spec",
    "tau",
    "opt_tau",
    "provenance",
    "init_reason",
    "bt_stable",
    "status",
    "error_h2_before",
    "error_h2_after",
    "error_h2_at_tau",
    "hankel_sigma_next",
    "hankel_tail_sum",
    "iterations",
    "termination",
]


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path: Path, columns, rows, preamble: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if preamble:
            fh.write(preamble + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    return max(n, 1)


def _run_parallel(fn, tasks, workers: int):
    """Map ``fn`` over ``tasks`` keeping task order regardless of the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _method_horizon(method: str, eval_h: Horizon) -> Horizon:
    if method in ("ibt", "ih2"):
        return Horizon.infinite()
    if not eval_h.is_finite:
        raise ConfigurationError(f"method {method} needs a finite --tau")
    return eval_h


# -- per-model work units (module level so they pickle) -----------------------


@dataclass(frozen=True)
class _ReduceTask:
    index: int
    params: DssExpParams
    r: int
    method: str
    tau_spec: str
    seq_len: int
    cfg: ReducerConfig


def _reduce_one(task: _ReduceTask) -> dict:
    row = {"model": task.index, "n": task.params.n, "r": task.r, "method": task.method, "status": "ok"}
    try:
        eval_h = resolve_horizon(task.tau_spec, task.seq_len, task.params.delta)
        h = _method_horizon(task.method, eval_h)
        row["tau"] = str(h)
        full = exp_params_to_model(task.params)
        if not full.is_stable:
            raise DssError("full model is not stable (check lambda_re)")
        choice = choose_initializer(full, task.r, h, fallback_seed(task.index, task.r))
        row["provenance"], row["init_reason"] = choice.provenance, choice.reason
        init_rom = exp_params_to_model(choice.params)
        if task.method in ("ih2", "fh2"):
            res = reduce(full, choice.params, h, task.cfg)
            rom, params, trace = res.rom, res.exp_params, res.trace
            row.update(f_init=res.f_init, f_final=res.f_final, iterations=trace.iterations, termination=res.termination)
        else:
            f0 = objective_f(full, init_rom, h)[0]
            rom, params, trace = init_rom, choice.params, None
            row.update(f_init=f0, f_final=f0, iterations=0, termination="none")
        row["error_h2_before"] = error_h2_norm_sq(full, init_rom, h)
        row["error_h2_after"] = error_h2_norm_sq(full, rom, h)
        return {"row": row, "params": params, "trace": trace}
    except DssError as exc:
        row["status"] = "error"
        row["message"] = f"{type(exc).__name__}: {exc}"
        return {"row": row, "params": None, "trace": None}


@dataclass(frozen=True)
class _CompareTask:
    index: int
    params: DssExpParams
    r: int
    methods: tuple
    tau_specs: tuple
    seq_len: int
    cfg: ReducerConfig


def _compare_one(task: _CompareTask) -> list[dict]:
    out = []
    full = exp_params_to_model(task.params)
    cache = {}  # infinite-horizon methods do not depend on the evaluation horizon
    for tau_spec in task.tau_specs:
        for method in task.methods:
            row = {"model": task.index, "n": full.n, "r": task.r, "method": method, "tau_spec": tau_spec}
            t0 = time.perf_counter()
            try:
                eval_h = resolve_horizon(tau_spec, task.seq_len, task.params.delta)
                row["tau"] = str(eval_h)
                if method in ("fbt", "fh2") and not eval_h.is_finite:
                    row.update(status="skipped", termination="finite-horizon method with infinite tau")
                    out.append(row)
                    continue
                h = _method_horizon(method, eval_h)
                row.update(opt_tau=str(h), status="ok")
                key = (method, h)
                if key not in cache:
                    choice = choose_initializer(full, task.r, h, fallback_seed(task.index, task.r))
                    init_rom = exp_params_to_model(choice.params)
                    info = dict(provenance=choice.provenance, init_reason=choice.reason, bt_stable=choice.bt_stable)
                    if method in ("ih2", "fh2"):
                        res = reduce(full, choice.params, h, task.cfg)
                        rom = res.rom
                        info.update(iterations=res.trace.iterations, termination=res.termination)
                    else:
                        rom = init_rom
                        info.update(iterations=0, termination="none")
                    info["error_h2_before"] = error_h2_norm_sq(full, init_rom, h)
                    info["error_h2_after"] = error_h2_norm_sq(full, rom, h)
                    lo, hi = bt_error_bounds_from_sv(hankel_singular_values(full, h), task.r)
                    info.update(hankel_sigma_next=lo, hankel_tail_sum=hi)
                    cache[key] = (info, rom)
                info, rom = cache[key]
                row.update(info)
                row["error_h2_at_tau"] = error_h2_norm_sq(full, rom, eval_h)
            except DssError as exc:
                row["status"] = "error"
                row["termination"] = f"{type(exc).__name__}: {exc}"
            row["_wall_ms"] = (time.perf_counter() - t0) * 1e3
            out.append(row)
    return out


def bt_error_bounds_from_sv(sv: np.ndarray, r: int) -> tuple[float, float]:
    tail = np.asarray(sv)[r:]
    return (float(tail[0]) if tail.size else 0.0), float(tail.sum())


@dataclass(frozen=True)
class _GradTask:
    trial: int
    params: DssExpParams
    r: int
    tau_spec: str
    seq_len: int
    seed: int
    corrupt: bool


def _block_error(a, b) -> tuple[float, bool]:
    a = np.asarray(a)
    b = np.asarray(b)
    diff = float(np.linalg.norm(a - b))
    ref = float(np.linalg.norm(b))
    ok = diff <= GRAD_RTOL * ref or diff <= GRAD_ATOL
    return (diff / ref if ref > 0 else (0.0 if diff == 0 else math.inf)), ok


def _grad_one(task: _GradTask) -> dict:
    full = exp_params_to_model(task.params)
    h = resolve_horizon(task.tau_spec, task.seq_len, task.params.delta)
    rom_params = random_stable_model(task.r, task.seed, delta=task.params.delta)
    rom = exp_params_to_model(rom_params)
    _, grads = value_and_gradients(full, rom, h)
    grads = exp_chain_rule(grads, rom_params)
    fd = fd_gradient_oracle(full, rom, h)
    fd_exp = fd_exp_gradient_oracle(full, rom_params, h)
    analytic = grads.real_blocks()
    if task.corrupt:
        analytic["lambda_re_part"] = analytic["lambda_re_part"] * 1.01 + 1e-3
    oracle = fd.real_blocks()
    oracle.update({f"exp_{k}": v for k, v in fd_exp._asdict().items()})
    out = {"trial": task.trial}
    for k in analytic:
        out[k] = _block_error(analytic[k], oracle[k])
    return out


# -- commands -----------------------------------------------------------------


def _load_bank(path) -> list[DssExpParams]:
    try:
        return load_bank(path)
    except FileNotFoundError:
        raise OSError(f"bank file not found: {path}") from None
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise OSError(f"cannot read bank file {path}: {exc}") from None


def _config(args) -> ReducerConfig:
    overrides = {}
    if args.config:
        try:
            overrides = load_config_overrides(args.config)
        except FileNotFoundError:
            raise OSError(f"config file not found: {args.config}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise OSError(f"cannot read config file {args.config}: {exc}") from None
    return ReducerConfig.from_dict(overrides)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    return out


def _aggregate(traces) -> list[dict]:
    """Mean and standard deviation of ``f`` per iteration; finished runs hold their last value."""
    curves = [t.f for t in traces if t is not None and len(t)]
    if not curves:
        return []
    k_max = max(c.size for c in curves)
    padded = np.array([np.concatenate([c, np.full(k_max - c.size, c[-1])]) for c in curves])
    mean = padded.mean(axis=0)
    std = padded.std(axis=0)
    return [{"k": k, "runs": len(curves), "mean_f": mean[k], "std_f": std[k]} for k in range(k_max)]


def cmd_make_bank(args) -> int:
    if args.count < 1 or args.n < 1:
        raise UsageError("--count and --n must be positive")
    root = np.random.SeedSequence(args.seed)
    models = []
    for i, child in enumerate(root.spawn(args.count)):
        seed = int(child.generate_state(1, np.uint64)[0])
        if args.delta is not None:
            delta = args.delta
        else:
            rng = np.random.Generator(np.random.PCG64(child.spawn(1)[0]))
            delta = float(10 ** rng.uniform(math.log10(args.delta_min), math.log10(args.delta_max)))
        models.append(random_stable_model(args.n, seed, delta=delta))
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise OSError(f"output directory does not exist: {out.parent}")
    save_bank(
        out,
        models,
        synthetic=True,
        generator="numpy PCG64 standard_normal, seeds spawned from SeedSequence",
        seed=args.seed,
    )
    print(f"wrote {len(models)} synthetic models to {out}")
    return EXIT_OK


def _check_tau(method: str, tau_spec: str) -> None:
    if method in ("fbt", "fh2") and str(tau_spec).strip().lower() in ("inf", "infinite"):
        raise UsageError(f"method {method} needs a finite --tau")
    resolve_horizon(tau_spec, 1, 1.0)  # syntax check


def cmd_reduce(args) -> int:
    if args.method not in METHODS:
        raise UsageError(f"--method must be one of {METHODS}")
    _check_tau(args.method, args.tau)
    bank = _load_bank(args.bank)
    cfg = _config(args)
    out = _out_dir(args.out)
    tasks = [_ReduceTask(i, p, args.r, args.method, args.tau, args.L, cfg) for i, p in enumerate(bank)]
    results = _run_parallel(_reduce_one, tasks, args.workers)

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    rows, reduced, traces = [], [], []
    for res in results:
        rows.append(res["row"])
        if res["trace"] is not None:
            res["trace"].write_csv(trace_dir / f"model_{res['row']['model']:04d}.csv")
            traces.append(res["trace"])
        if res["params"] is not None:
            reduced.append(res["params"])
    _write_csv(out / "report.csv", REPORT_COLUMNS, rows)
    _write_csv(out / "convergence.csv", ["k", "runs", "mean_f", "std_f"], _aggregate(traces))
    save_bank(
        out / "reduced_bank.json",
        reduced,
        source=str(args.bank),
        method=args.method,
        r=args.r,
        tau=args.tau,
        model_indices=[r["model"] for r in rows if r["status"] == "ok"],
    )
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"reduced {len(rows) - len(failed)}/{len(rows)} models; report in {out / 'report.csv'}")
    for r in failed:
        print(f"model {r['model']}: {r['message']}", file=sys.stderr)
    return EXIT_MODEL if failed else EXIT_OK


def cmd_compare(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--methods must be a comma list from {METHODS}, got {args.methods!r}")
    taus = tuple(args.tau) if args.tau else ("Ldt",)
    for t in taus:
        resolve_horizon(t, 1, 1.0)
    bank = _load_bank(args.bank)
    cfg = _config(args)
    out = _out_dir(args.out)
    tasks = [_CompareTask(i, p, args.r, methods, taus, args.L, cfg) for i, p in enumerate(bank)]
    rows = [row for group in _run_parallel(_compare_one, tasks, args.workers) for row in group]
    _write_csv(out / "compare.csv", COMPARE_COLUMNS, rows, preamble=NOTICE)
    _write_csv(
        out / "timing.csv",
        ["model", "method", "tau_spec", "wall_ms"],
        [{k: r.get(k) for k in ("model", "method", "tau_spec")} | {"wall_ms": r.get("_wall_ms")} for r in rows],
    )
    print(NOTICE)
    failed = [r for r in rows if r["status"] == "error"]
    print(f"compared {len(bank)} models x {len(methods)} methods x {len(taus)} horizons; {len(failed)} failed")
    return EXIT_MODEL if failed else EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    resolve_horizon(args.tau, 1, 1.0)
    bank = _load_bank(args.bank)
    if not bank:
        raise UsageError("bank is empty")
    root = np.random.SeedSequence(args.seed)
    seeds = [int(c.generate_state(1, np.uint64)[0]) for c in root.spawn(args.trials)]
    tasks = [
        _GradTask(t, bank[t % len(bank)], args.r, args.tau, args.L, seeds[t], args.corrupt) for t in range(args.trials)
    ]
    try:
        results = _run_parallel(_grad_one, tasks, args.workers)
    except DssError as exc:
        print(f"gradient check could not run: {exc}", file=sys.stderr)
        return EXIT_MODEL
    blocks = [k for k in results[0] if k != "trial"]
    all_ok = True
    print("block,max_rel_error,pass")
    for k in blocks:
        worst = max(r[k][0] for r in results)
        ok = all(r[k][1] for r in results)
        all_ok &= ok
        print(f"{k},{worst:.3e},{int(ok)}")
    print(f"gradcheck {'PASS' if all_ok else 'FAIL'} over {args.trials} trials")
    return EXIT_OK if all_ok else EXIT_GRADCHECK


def _pick(bank, index, path):
    if not 0 <= index < len(bank):
        raise UsageError(f"--model {index} out of range for {path} ({len(bank)} models)")
    return exp_params_to_model(bank[index])


def cmd_simulate(args) -> int:
    bank = _load_bank(args.bank)
    full = _pick(bank, args.model, args.bank)
    if args.signal:
        if not Path(args.signal).exists():
            raise OSError(f"signal file not found: {args.signal}")
        u = read_signal_csv(args.signal, full.delta)
    elif args.noise_seed is not None:
        u = white_noise(args.L, full.delta, args.noise_seed)
    else:
        u = impulse(args.L, full.delta)
    y = simulate(full, u)
    if args.out:
        write_signal_csv(args.out, y)
    if args.rom:
        roms = _load_bank(args.rom)
        rom = _pick(roms, args.model, args.rom)
        rep = check_error_bound(full, rom, u)
        print(f"max_output_error={rep.lhs:.17g} bound={rep.rhs:.17g} satisfied={int(rep.satisfied)}")
    else:
        print(f"simulated {u.length} samples; max |y| = {float(np.max(np.abs(y.samples))):.17g}")
    return EXIT_OK


def cmd_norm(args) -> int:
    bank = _load_bank(args.bank)
    roms = _load_bank(args.rom) if args.rom else None
    if roms is not None and len(roms) != len(bank):
        raise UsageError(f"{args.rom} has {len(roms)} models, {args.bank} has {len(bank)}")
    rows, failed = [], 0
    for i, p in enumerate(bank):
        row = {"model": i}
        try:
            h = resolve_horizon(args.tau, args.L, p.delta)
            row["tau"] = str(h)
            full = exp_params_to_model(p)
            row["h2_norm_sq"] = h2_norm_sq(full, h)
            if roms is not None:
                row["error_h2_sq"] = error_h2_norm_sq(full, exp_params_to_model(roms[i]), h)
        except DssError as exc:
            row["message"] = str(exc)
            failed += 1
        rows.append(row)
    columns = ["model", "tau", "h2_norm_sq"] + (["error_h2_sq"] if roms is not None else []) + ["message"]
    if args.out:
        _write_csv(Path(args.out), columns, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return EXIT_MODEL if failed else EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dssmor", description="Finite-time H2 reduction of diagonal state-space models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tau_multi=False):
        sp.add_argument("--bank", required=True, help="JSON model bank")
        sp.add_argument("--r", type=_positive_int, default=2, help="reduced order")
        if tau_multi:
            sp.add_argument("--tau", action="append", help="horizon: inf, Ldt, L, 10L or seconds (repeatable)")
        else:
            sp.add_argument("--tau", default="Ldt", help="horizon: inf, Ldt, L, 10L or seconds")
        sp.add_argument("--L", type=_positive_int, default=2048, help="sequence length")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=_positive_int, default=None, help=f"processes (default ${WORKERS_ENV} or 1)")
        sp.add_argument("--config", help="JSON file with reducer settings")

    sp = sub.add_parser("reduce", help="reduce every model of a bank")
    common(sp)
    sp.add_argument("--method", default="fh2", choices=METHODS)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("compare", help="compare BT and H2 reduction across horizons")
    common(sp, tau_multi=True)
    sp.add_argument("--methods", default=",".join(METHODS))
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    common(sp)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("simulate", help="run a bank model on an input sequence")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--model", type=int, default=0, help="model index in the bank")
    sp.add_argument("--signal", help="CSV input with columns k,re,im (default: unit impulse)")
    sp.add_argument("--noise-seed", type=int, help="use seeded white noise as input")
    sp.add_argument("--L", type=_positive_int, default=2048)
    sp.add_argument("--rom", help="reduced bank; also checks the output error bound")
    sp.add_argument("--out", help="output CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("norm", help="finite-time H2 norms of a bank")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--rom", help="reduced bank; adds the squared error norm")
    sp.add_argument("--tau", default="Ldt")
    sp.add_argument("--L", type=_positive_int, default=2048)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_norm)

    sp = sub.add_parser("make-bank", help="write a seeded synthetic model bank")
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--count", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--delta", type=float, help="fixed sampling time (default: log-uniform per model)")
    sp.add_argument("--delta-min", type=float, default=1e-3)
    sp.add_argument("--delta-max", type=float, default=1e-1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_make_bank)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if hasattr(args, "workers") and args.workers is None:
        try:
            args.workers = _default_workers()
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
