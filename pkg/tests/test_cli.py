import csv
import json

import numpy as np
import pytest

from dssmor.cli import NOTICE, main
from dssmor.gramians import h2_norm_sq, objective_f
from dssmor.model import Horizon, exp_params_to_model, load_bank, random_stable_model, save_bank


def rows(path, skip_comments=True):
    with open(path) as fh:
        lines = [l for l in fh if not (skip_comments and l.startswith("#"))]
    return list(csv.DictReader(lines))


@pytest.fixture
def bank(tmp_path):
    path = tmp_path / "bank.json"
    assert main(["make-bank", "--n", "12", "--count", "3", "--seed", "5", "--out", str(path)]) == 0
    return path


def test_make_bank_is_synthetic_and_seeded(bank, tmp_path):
    doc = json.loads(bank.read_text())
    assert doc["synthetic"] is True and len(doc["models"]) == 3
    deltas = [m["delta"] for m in doc["models"]]
    assert all(1e-3 <= d <= 1e-1 for d in deltas)
    other = tmp_path / "again.json"
    main(["make-bank", "--n", "12", "--count", "3", "--seed", "5", "--out", str(other)])
    assert other.read_bytes() == bank.read_bytes()


def test_reduce_outputs(bank, tmp_path):
    out = tmp_path / "run"
    assert main(["reduce", "--bank", str(bank), "--r", "3", "--method", "fh2", "--out", str(out)]) == 0
    report = rows(out / "report.csv")
    assert len(report) == 3
    for r in report:
        assert float(r["f_final"]) <= float(r["f_init"])
        assert r["provenance"] in ("fbt", "random") and r["status"] == "ok"
        trace = rows(out / "traces" / f"model_{int(r['model']):04d}.csv")
        f = [float(t["f"]) for t in trace]
        assert all(b <= a for a, b in zip(f, f[1:]))
    agg = rows(out / "convergence.csv")
    means = [float(a["mean_f"]) for a in agg]
    assert all(b <= a for a, b in zip(means, means[1:]))
    reduced = load_bank(out / "reduced_bank.json")
    assert len(reduced) == 3 and all(p.n == 3 for p in reduced)


def test_reduce_full_order_ih2(tmp_path):
    path = tmp_path / "one.json"
    save_bank(path, [random_stable_model(5, 1, delta=0.1)])
    out = tmp_path / "o"
    assert main(["reduce", "--bank", str(path), "--r", "5", "--method", "ih2", "--tau", "inf", "--out", str(out)]) == 0
    r = rows(out / "report.csv")[0]
    full = exp_params_to_model(load_bank(path)[0])
    norm = h2_norm_sq(full, Horizon.infinite())
    assert float(r["f_init"]) == pytest.approx(-norm, rel=1e-9)
    assert float(r["f_final"]) == pytest.approx(-norm, rel=1e-9)
    assert int(r["iterations"]) <= 1


def test_reduce_workers_equivalent(bank, tmp_path):
    outs = []
    for w in ("1", "3"):
        out = tmp_path / f"w{w}"
        assert main(["reduce", "--bank", str(bank), "--r", "2", "--out", str(out), "--workers", w]) == 0
        outs.append(out)
    for name in ("report.csv", "convergence.csv", "reduced_bank.json", "traces/model_0002.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_reduce_env_workers(bank, tmp_path, monkeypatch):
    monkeypatch.setenv("DSSMOR_WORKERS", "bogus")
    assert main(["reduce", "--bank", str(bank), "--out", str(tmp_path / "x")]) == 2


def test_reduce_config_override(bank, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"config": {"k_max": 2}}))
    out = tmp_path / "o"
    assert main(["reduce", "--bank", str(bank), "--out", str(out), "--config", str(cfg)]) == 0
    assert all(int(r["iterations"]) <= 2 for r in rows(out / "report.csv"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"config": {"learning_rate": 1}}))
    assert main(["reduce", "--bank", str(bank), "--out", str(out), "--config", str(bad)]) == 2


def test_missing_bank(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["reduce", "--bank", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unstable_model_listed_and_exit_3(tmp_path):
    path = tmp_path / "b.json"
    good = random_stable_model(6, 1, delta=0.1).to_dict()
    bad = dict(good, lambda_re=[-800.0] * 6)  # -exp(-800) underflows to 0
    path.write_text(json.dumps({"models": [good, bad]}))
    out = tmp_path / "o"
    assert main(["reduce", "--bank", str(path), "--r", "2", "--out", str(out)]) == 3
    report = rows(out / "report.csv")
    assert [r["status"] for r in report] == ["ok", "error"]


def test_fh2_with_infinite_tau_is_usage_error(bank, tmp_path):
    assert main(["reduce", "--bank", str(bank), "--method", "fh2", "--tau", "inf", "--out", str(tmp_path)]) == 2


def test_compare(bank, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--bank", str(bank), "--r", "3", "--tau", "Ldt", "--tau", "inf", "--out", str(out)]) == 0
    text = (out / "compare.csv").read_text()
    assert text.splitlines()[0] == NOTICE and "NOT reproduced" in NOTICE
    table = rows(out / "compare.csv")
    assert len(table) == 3 * 4 * 2
    by = {(r["model"], r["method"], r["tau_spec"]): r for r in table}
    for (m, method, tau), r in by.items():
        if r["status"] == "skipped":
            assert method in ("fbt", "fh2") and tau == "inf"
            continue
        if method in ("ibt", "fbt"):
            assert r["error_h2_after"] == r["error_h2_before"]
        if method == "ih2":
            assert float(r["error_h2_after"]) <= float(by[(m, "ibt", tau)]["error_h2_after"])
        if method == "fh2":
            assert float(r["error_h2_after"]) <= float(by[(m, "fbt", tau)]["error_h2_after"])
    timing = rows(out / "timing.csv")
    assert len(timing) == len(table) and "wall_ms" in timing[0]
    assert "wall" not in text


def test_compare_only_ibt(bank, tmp_path):
    out = tmp_path / "c"
    assert main(["compare", "--bank", str(bank), "--methods", "ibt", "--out", str(out)]) == 0
    for r in rows(out / "compare.csv"):
        assert r["error_h2_after"] == r["error_h2_before"]
    assert main(["compare", "--bank", str(bank), "--methods", "ibt,xyz", "--out", str(out)]) == 2


def test_gradcheck(bank, capsys):
    assert main(["gradcheck", "--bank", str(bank), "--r", "3", "--trials", "2"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--bank", str(bank), "--r", "3", "--trials", "2", "--corrupt"]) == 1
    assert main(["gradcheck", "--bank", str(bank), "--trials", "0"]) == 2


def test_simulate_and_norm(bank, tmp_path, capsys):
    out = tmp_path / "red"
    main(["reduce", "--bank", str(bank), "--r", "3", "--out", str(out)])
    sig = tmp_path / "u.csv"
    from dssmor.simulate import white_noise, write_signal_csv

    delta = load_bank(bank)[1].delta
    write_signal_csv(sig, white_noise(300, delta, 2))
    y = tmp_path / "y.csv"
    args = ["simulate", "--bank", str(bank), "--model", "1", "--signal", str(sig), "--out", str(y)]
    assert main(args + ["--rom", str(out / "reduced_bank.json")]) == 0
    assert "satisfied=1" in capsys.readouterr().out
    assert len(y.read_text().splitlines()) == 301
    assert main(["simulate", "--bank", str(bank), "--model", "9"]) == 2
    assert main(["simulate", "--bank", str(bank), "--signal", str(tmp_path / "none.csv")]) == 2
    norms = tmp_path / "n.csv"
    assert main(["norm", "--bank", str(bank), "--rom", str(out / "reduced_bank.json"), "--out", str(norms)]) == 0
    table = rows(norms)
    full = exp_params_to_model(load_bank(bank)[0])
    h = Horizon.finite(2048 * full.delta)
    assert float(table[0]["h2_norm_sq"]) == pytest.approx(h2_norm_sq(full, h), rel=1e-15)


def test_usage_errors():
    assert main([]) == 2
    assert main(["reduce"]) == 2
    assert main(["reduce", "--bank", "x", "--out", "y", "--r", "0"]) == 2
