import json
import math
from pathlib import Path

import numpy as np
import pytest

from kinetic_coupler.cli import DEFAULT_SEED, build_parser, load_config, parse_config, rate_report, make_pipeline, run_command
from kinetic_coupler.csvio import read_csv
from kinetic_coupler.errors import ConfigurationError
from kinetic_coupler.metric import METRIC_HEADER
from kinetic_coupler.mc import DECAY_HEADER, SCAN_HEADER

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BUILTIN = sorted(CONFIGS.glob("*.json"))
GAMMA = math.sqrt(30)


def write_cfg(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def linear_raw(**sim):
    raw = json.loads((CONFIGS / "linear.json").read_text())
    raw["sim"].update(sim)
    raw["outputs"]["directory"] = ""
    return raw


def test_rates_reports_linear_corollary(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    assert run_command(["rates", "--config", str(CONFIGS / "linear.json"), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "c_corollary" in text and "c_gap" in text
    header, rows = read_csv(out)
    assert header == ["name", "value"]
    vals = dict((r[0], r[1]) for r in rows)
    assert vals["c_corollary"] == pytest.approx(GAMMA / 184500, rel=1e-9)
    for key in ("L", "R", "beta", "A", "lambda", "alpha", "eta", "R1", "Lambda", "c_closed", "c", "epsilon", "C"):
        assert key in vals


def test_rates_csv_round_trips_to_15_digits(tmp_path):
    out = tmp_path / "rates.csv"
    path = str(CONFIGS / "intro_double_well.json")
    assert run_command(["rates", "--config", path, "--out", str(out)]) == 0
    _, rows = read_csv(out)
    report = dict(rate_report(make_pipeline(load_config(path))))
    for name, value in rows:
        ref = report[name]
        if ref is None:
            assert value == ""
        else:
            assert float("%.15g" % value) == float("%.15g" % ref)


def test_rates_optimized_is_not_slower(tmp_path, capsys):
    path = write_cfg(tmp_path, linear_raw())
    base = dict(rate_report(make_pipeline(load_config(path))))
    assert run_command(["rates", "--config", path, "--optimized", "--csv"]) == 0
    text = capsys.readouterr().out
    lines = [l for l in text.splitlines() if l.startswith("c,")]
    assert lines and float(lines[0].split(",")[1]) >= base["c"]


@pytest.mark.parametrize("cfg", BUILTIN, ids=lambda p: p.stem)
def test_verify_lyapunov_on_builtin_configs(cfg, capsys):
    assert run_command(["verify", "--config", str(cfg), "--suite", "lyapunov"]) == 0
    assert "lyapunov: PASS" in capsys.readouterr().out


@pytest.mark.parametrize("cfg", BUILTIN, ids=lambda p: p.stem)
def test_verify_all_on_builtin_configs(cfg, capsys):
    assert run_command(["verify", "--config", str(cfg), "--suite", "all"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_missing_gamma_exits_2(tmp_path, capsys):
    raw = linear_raw()
    del raw["model"]["gamma"]
    assert run_command(["rates", "--config", write_cfg(tmp_path, raw)]) == 2
    assert "gamma" in capsys.readouterr().err


@pytest.mark.parametrize("mutate,key", [
    (lambda r: r["model"].update(gamma="fast"), "gamma"),
    (lambda r: r["model"].update(u=float("inf")), "u"),
    (lambda r: r["drift"].update(A=0.0, **{"lambda": 0.1}), "drift"),
    (lambda r: r["sim"].update(temperature=1.0), "sim"),
    (lambda r: r["sim"].update(n_pairs=1), "n_pairs"),
    (lambda r: r["model"]["potential"].update(kind="banana"), "kind"),
])
def test_config_errors_name_the_key(tmp_path, capsys, mutate, key):
    raw = linear_raw()
    mutate(raw)
    cmd = "simulate" if key == "n_pairs" else "rates"
    argv = [cmd, "--config", write_cfg(tmp_path, raw)] + (["--out", str(tmp_path / "x.csv")] if cmd == "simulate" else [])
    assert run_command(argv) == 2
    assert key in capsys.readouterr().err


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_command(["rates", "--config", str(bad)]) == 2
    assert run_command(["rates", "--config", str(tmp_path / "absent.json")]) == 2


def test_general_drift_entry_point():
    cfg = load_config(str(CONFIGS / "linear_general_drift.json"))
    pipe = make_pipeline(cfg)
    assert pipe.consts.A == 0.0 and pipe.consts.lam == 0.0625
    # without a drift section the potential's own (R, beta) are used
    model = {"potential": {"kind": "quadratic", "L": 1.0, "R": 2.0}, "d": 1, "u": 1.0, "gamma": GAMMA}
    implicit = make_pipeline(parse_config({"model": model})).consts
    explicit = make_pipeline(parse_config({"model": model, "drift": {"R": 2.0, "beta": 4.0}})).consts
    assert implicit == explicit
    with pytest.raises(ConfigurationError) as e:
        parse_config({"model": model, "drift": {"R": 2.0}})
    assert e.value.key == "beta"


def test_metric_command_writes_table(tmp_path):
    out = tmp_path / "metric.csv"
    assert run_command(["metric", "--config", str(CONFIGS / "linear.json"), "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == METRIC_HEADER
    assert rows[0][0] == 0.0 and rows[0][4] == 0.0
    assert np.all(np.diff([r[4] for r in rows]) >= 0)
    assert out.read_bytes().count(b"\r") == 0


def test_simulate_command(tmp_path, capsys):
    out = tmp_path / "decay.csv"
    cfg = write_cfg(tmp_path, linear_raw(n_pairs=200, T=1.0, record_every=100))
    assert run_command(["simulate", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "contraction audit: PASS" in text and "upper-bound" in text
    header, rows = read_csv(out)
    assert header == DECAY_HEADER and len(rows) == 11
    out2 = tmp_path / "decay2.csv"
    run_command(["simulate", "--config", cfg, "--out", str(out2), "--seed", str(DEFAULT_SEED)])
    assert out.read_bytes() == out2.read_bytes()
    out3 = tmp_path / "decay3.csv"
    run_command(["simulate", "--config", cfg, "--out", str(out3), "--seed", "5"])
    assert out.read_bytes() != out3.read_bytes()


def test_seed_defaults_to_zero():
    args = build_parser().parse_args(["simulate", "--config", "x.json", "--out", "y.csv"])
    assert args.seed == DEFAULT_SEED == 0


def test_scan_command(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    argv = ["scan", "--config", str(CONFIGS / "intro_double_well.json"), "--param", "a", "--values", "1,2,4,8",
            "--out", str(out)]
    assert run_command(argv) == 0
    header, rows = read_csv(out)
    assert header == SCAN_HEADER and [r[0] for r in rows] == [1.0, 2.0, 4.0, 8.0]
    ca = np.array([r[4] for r in rows])
    assert np.ptp(ca) / ca[0] <= 0.01
    assert run_command(argv[:-4] + ["--values", "1,x", "--out", str(out)]) == 2
    assert run_command(["scan", "--config", str(CONFIGS / "linear.json"), "--values", "1", "--out", str(out)]) == 2
    assert run_command(argv[:4] + ["--param", "gamma"] + argv[6:]) == 2


def test_unknown_subcommand_exits_2():
    assert run_command(["frobnicate"]) == 2
