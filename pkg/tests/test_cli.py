import csv
import io
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from resamp_hd.cli import UsageError, main, parse_config, parse_grid, parse_sigma
from resamp_hd.thresholds import Estimated, Known
from resamp_hd.weights import LeaveOneOut, parse_scheme


def data_file(tmp_path, K=6, n=20, shift=0.0, seed=0):
    Y = np.random.default_rng(seed).normal(size=(K, n))
    Y[0] += shift
    p = tmp_path / "data.csv"
    p.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in Y) + "\n")
    return str(p)


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def body(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_constants_loo(capsys):
    cfg = parse_config(["constants", "--scheme", "loo", "--n", "100"])
    assert [parse_scheme(s) for s in cfg.scheme] == [LeaveOneOut()]
    code, out, _ = run(["constants", "--scheme", "loo", "--n", "100", "--mc-draws", "2000"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO("\n".join(body(out)))))
    assert rows[0]["scheme"] == "loo" and float(rows[0]["A"]) == pytest.approx(2 / 100)


def test_constants_default_schemes(capsys):
    code, out, _ = run(["constants", "--n", "10", "--mc-draws", "1000"], capsys)
    assert code == 0 and len(body(out)) == 6


def test_missing_required(capsys, tmp_path):
    assert run(["test"], capsys)[0] == 2
    assert run(["constants"], capsys)[0] == 2
    assert run(["simulate"], capsys)[0] == 2
    assert run(["bogus"], capsys)[0] == 2


def test_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "run.toml"
    conf.write_text('alpha = 0.1\nmethod = "bonf"\n[threshold]\nB = 50\n')
    path = data_file(tmp_path)
    cfg = parse_config(["threshold", "--config", str(conf), "--in", path, "--alpha", "0.2"])
    assert cfg.alpha == 0.2 and cfg.method == "bonf" and cfg.B == 50
    code, out, _ = run(["threshold", "--config", str(conf), "--in", path, "--alpha", "0.2"], capsys)
    assert code == 0 and "# alpha = 0.2" in out


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "bad.toml"
    conf.write_text("bandwidth = 3\n")
    code, _, err = run(["threshold", "--config", str(conf), "--in", data_file(tmp_path)], capsys)
    assert code == 2 and "unknown key" in err


def test_bad_data(tmp_path, capsys):
    p = tmp_path / "one.csv"
    p.write_text("1\n2\n")
    assert run(["threshold", "--in", str(p)], capsys)[0] == 2
    assert run(["threshold", "--in", str(tmp_path / "missing.csv")], capsys)[0] == 2


def test_threshold_output(tmp_path, capsys):
    code, out, _ = run(["threshold", "--in", data_file(tmp_path), "--method", "bonf"], capsys)
    assert code == 0
    lines = body(out)
    assert lines[0] == "component,value" and lines[1].startswith("threshold,")


def test_threshold_is_reproducible(tmp_path, capsys):
    args = ["threshold", "--in", data_file(tmp_path), "--method", "quant-bonf", "--B", "200", "--seed", "4"]
    assert run(args, capsys)[1] == run(args, capsys)[1]


def test_confset(tmp_path, capsys):
    path = data_file(tmp_path, K=4)
    code, out, _ = run(["confset", "--in", path, "--method", "conc-bonf", "--B", "100"], capsys)
    assert code == 0
    radius = float(re.search(r"# radius = (\S+)", out).group(1))
    rows = list(csv.DictReader(io.StringIO("\n".join(body(out)))))
    assert len(rows) == 4
    r = rows[0]
    assert float(r["upper"]) - float(r["center"]) == pytest.approx(radius)
    code, out, _ = run(["confset", "--in", path, "--method", "quant-raw"], capsys)
    assert code == 2


def test_test_command_outputs(tmp_path, capsys):
    path = data_file(tmp_path, shift=3.0)
    outdir = tmp_path / "res"
    code, _, _ = run(["test", "--in", path, "--procedure", "hybrid", "--B", "200", "--out", str(outdir)], capsys)
    assert code == 0
    assert sorted(os.listdir(outdir)) == ["coordinates.csv", "rejections.csv", "trace.csv"]
    rej = (outdir / "rejections.csv").read_text().splitlines()
    assert rej[0] == "index,iteration_rejected" and rej[1].startswith("0,")
    coords = list(csv.DictReader(io.StringIO("\n".join(body((outdir / "coordinates.csv").read_text())))))
    assert coords[0]["rejected"] == "1"


def test_empty_rejections_file(tmp_path, capsys):
    Y = np.zeros((3, 5))
    p = tmp_path / "zeros.csv"
    p.write_text("\n".join(",".join("0" for _ in row) for row in Y) + "\n")
    code, _, _ = run(["test", "--in", str(p), "--procedure", "holm", "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    assert (tmp_path / "r" / "rejections.csv").read_text() == "index,iteration_rejected\n"


@pytest.mark.parametrize("proc", ["holm", "single:conc-bonf", "sd:quant-bonf", "sd:quant-uncent"])
def test_procedures_to_stdout(tmp_path, capsys, proc):
    code, out, _ = run(["test", "--in", data_file(tmp_path, shift=3.0), "--procedure", proc, "--B", "100"], capsys)
    assert code == 0
    assert body(out)[0] == "index,mean,bracket_value,rejected,iteration_rejected"


@pytest.mark.parametrize("proc", ["single", "holm:bonf", "stepup:bonf"])
def test_bad_procedure(tmp_path, capsys, proc):
    assert run(["test", "--in", data_file(tmp_path), "--procedure", proc], capsys)[0] == 2


def test_one_sided_hybrid_is_a_usage_error(tmp_path, capsys):
    assert run(["test", "--in", data_file(tmp_path), "--procedure", "hybrid", "--side", "one"], capsys)[0] == 2


def test_infeasible_sigma_estimate_exits_3(tmp_path, capsys):
    p = tmp_path / "small.csv"
    p.write_text("1,2\n3,5\n")
    code, _, _ = run(["threshold", "--in", str(p), "--method", "bonf", "--sigma", "estimate"], capsys)
    assert code == 3


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(["constants", "--n", "10", "--scheme", "loo", "--out", str(blocker / "sub" / "o.csv")], capsys)
    assert code == 3


def test_simulate_and_report(tmp_path, capsys):
    out = tmp_path / "sim"
    args = ["simulate", "--experiment", "fig1", "--d", "4", "--n", "10", "--trials", "3", "--B", "30",
            "--b-grid", "0:2:2", "--ideal-trials", "30", "--workers", "1", "--out", str(out), "--svg"]
    assert run(args, capsys)[0] == 0
    first = (out / "fig1.csv").read_text()
    assert "# experiment.d = 4" in first
    svg = (out / "fig1_thresholds.svg").read_text()
    assert svg.count("<polyline") == 8
    assert run(args, capsys)[0] == 0
    assert (out / "fig1.csv").read_text() == first
    rep = tmp_path / "rep"
    assert run(["report", "--in", str(out / "fig1.csv"), "--out", str(rep)], capsys)[0] == 0
    assert (rep / "fig1_thresholds.svg").read_text() == svg


def test_report_rejects_other_tables(tmp_path, capsys):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n")
    assert run(["report", "--in", str(p)], capsys)[0] == 2


def test_parse_grid():
    assert parse_grid("0:6:2") == (0.0, 2.0, 4.0, 6.0)
    assert parse_grid("0,10,20") == (0.0, 10.0, 20.0)
    assert parse_grid([1, 2]) == (1.0, 2.0)
    for bad in ("0:6:0", "5:1:1", "a:b:c", "x,y"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_parse_sigma(tmp_path):
    assert parse_sigma("known:2") == Known(2.0)
    assert parse_sigma("estimate") == Estimated(None)
    assert parse_sigma("estimate:0.01") == Estimated(0.01)
    p = tmp_path / "s.txt"
    p.write_text("1\n2\n")
    assert parse_sigma(f"known:{p}") == Known((1.0, 2.0))
    with pytest.raises(UsageError):
        parse_sigma("guess")


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "resamp_hd.cli", "constants", "--n", "8", "--scheme", "rho",
                        "--mc-draws", "1000"], capture_output=True, text=True)
    assert r.returncode == 0 and "rho" in r.stdout
