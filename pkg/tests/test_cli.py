import json
import socket
import subprocess
import sys
import time
import urllib.request

import pytest

from onthefly.cli import main
from onthefly.export import load_record, read_csv
from onthefly.harness import strip_timestamps


def run_cli(*argv):
    """Exit code of ``onthefly argv``, whether argparse exits or main returns."""
    try:
        return main(list(argv))
    except SystemExit as exc:
        return exc.code


def test_run_gd_happy_path(tmp_path):
    out = tmp_path / "r.json"
    code = run_cli("run", "--algo", "gd", "--objective", "bohachevsky", "--alpha", "0.001",
                   "--iters", "1000", "--seed", "42", "--out", str(out))
    assert code == 0
    rec = load_record(out)
    assert rec.config["alpha"] == 0.001 and rec.config["iterations"] == 1000
    assert rec.master_seed == 42 and len(rec.trace_events()) == 1001


@pytest.mark.parametrize("argv, flag", [
    (["run", "--algo", "gd", "--objective", "booth"], "--objective"),
    (["run", "--algo", "gd", "--objective", "bohachevsky", "--std", "0.1"], "--std"),
    (["run", "--algo", "ea", "--objective", "repressilator", "--pop", "1"], "--pop"),
    (["run", "--algo", "gd", "--objective", "bohachevsky", "--alpha", "-1"], "--alpha"),
    (["run", "--algo", "nm", "--objective", "booth", "--init", "500,0"], "--init"),
    (["run", "--algo", "gd", "--objective", "bohachevsky", "--bogus", "1"], "--bogus"),
    (["run", "--algo", "ea", "--objective", "repressilator", "--recomb", "2"], "--recomb"),
    (["run", "--algo", "xx", "--objective", "booth"], "--algo"),
    (["run", "--algo", "gd", "--objective", "bohachevsky", "--seed", "-3"], "--seed"),
])
def test_run_usage_errors_write_nothing(tmp_path, capsys, argv, flag):
    out = tmp_path / "r.json"
    assert run_cli(*argv, "--out", str(out)) == 1
    assert flag in capsys.readouterr().err
    assert not out.exists()


def test_usage_error_does_not_truncate_existing(tmp_path):
    out = tmp_path / "r.json"
    out.write_text("keep")
    assert run_cli("run", "--algo", "gd", "--objective", "bohachevsky", "--nope",
                   "--out", str(out)) == 1
    assert out.read_text() == "keep"


def test_runtime_error_exit_2(tmp_path, capsys):
    code = run_cli("run", "--algo", "gd", "--objective", "bohachevsky",
                   "--out", str(tmp_path / "missing" / "r.json"))
    assert code == 2
    assert "missing" in capsys.readouterr().err


def test_run_is_deterministic(tmp_path):
    args = ["run", "--algo", "sa", "--objective", "sa_density", "--n", "200", "--t0", "5",
            "--cool", "0.9", "--seed", "9"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(*args, "--out", str(a)) == 0
    assert run_cli(*args, "--out", str(b)) == 0
    assert strip_timestamps(load_record(a)) == strip_timestamps(load_record(b))
    assert load_record(a).config["temperature_t0"] == 5.0


def test_run_ea_flags(tmp_path):
    out = tmp_path / "e.json"
    assert run_cli("run", "--algo", "ea", "--objective", "repressilator", "--pop", "12",
                   "--gens", "3", "--std", "0.5", "--recomb", "1", "--mut", "0",
                   "--out", str(out)) == 0
    rec = load_record(out)
    assert (rec.config["pop_size"], rec.config["mut"], rec.config["mutation_std"]) == (12, 0, 0.5)


def test_tune_writes_table_and_sidecar(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run_cli("tune", "--algo", "mh", "--objective", "mh_density", "--reps", "20",
                   "--seed", "7", "--out", str(out)) == 0
    header, rows = read_csv(out)
    assert header == ["repetition", "alpha", "iterations", "best_loss", "verdict"]
    assert len(rows) == 20
    lines = [json.loads(x) for x in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert lines[-1]["kind"] == "chosen"
    assert "chosen" in capsys.readouterr().out


def test_tune_bad_pairing(tmp_path):
    assert run_cli("tune", "--algo", "ea", "--objective", "booth", "--out",
                   str(tmp_path / "t.csv")) == 1
    assert not (tmp_path / "t.csv").exists()


def test_report_csv_json_and_png(tmp_path):
    recs = []
    for seed in (1, 2):
        p = tmp_path / f"r{seed}.json"
        run_cli("run", "--algo", "nm", "--objective", "booth", "--seed", str(seed), "--out", str(p))
        recs.append(str(p))
    out = tmp_path / "rep.csv"
    assert run_cli("report", "--in", recs[0], "--in", recs[1], "--format", "csv",
                   "--out", str(out)) == 0
    header, rows = read_csv(out)
    assert header[0] == "repetition" and len(rows) == 2
    assert (tmp_path / "rep.png").read_bytes()[:4] == b"\x89PNG"
    out_json = tmp_path / "one.json"
    assert run_cli("report", "--in", recs[0], "--format", "json", "--out", str(out_json)) == 0
    body = json.loads(out_json.read_text())
    assert body["kind"] == "nm" and len(body["rows"]) == 1
    assert (tmp_path / "one.png").exists()


def test_report_missing_input(tmp_path):
    assert run_cli("report", "--in", str(tmp_path / "nope.json"), "--out",
                   str(tmp_path / "x.csv")) == 2


@pytest.mark.parametrize("algo, objective, extra, kind", [
    ("gd", "bohachevsky", ["--iters", "20"], "loss"),
    ("nm", "booth", [], "loss"),
    ("sa", "sa_density", ["--n", "200"], "temperature"),
    ("mh", "mh_density", ["--n", "200"], "heatmap"),
    ("ea", "repressilator", ["--pop", "6", "--gens", "2"], "fitness"),
])
def test_plot_kinds(tmp_path, algo, objective, extra, kind):
    rec = tmp_path / "r.json"
    assert run_cli("run", "--algo", algo, "--objective", objective, *extra, "--out", str(rec)) == 0
    out = tmp_path / "p.svg"
    assert run_cli("plot", "--in", str(rec), "--kind", kind, "--out", str(out)) == 0
    assert out.read_text().startswith("<svg")


def test_plot_kind_mismatch_is_usage_error(tmp_path):
    rec = tmp_path / "r.json"
    run_cli("run", "--algo", "gd", "--objective", "bohachevsky", "--out", str(rec))
    out = tmp_path / "p.svg"
    assert run_cli("plot", "--in", str(rec), "--kind", "temperature", "--out", str(out)) == 1
    assert not out.exists()


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_subprocess():
    port = free_port()
    proc = subprocess.Popen([sys.executable, "-m", "onthefly.cli", "serve", "--port", str(port),
                             "--tick-ms", "0"], stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        deadline = time.monotonic() + 15
        while True:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/objectives",
                                            timeout=1) as resp:
                    assert resp.status == 200
                    break
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.1)
    finally:
        proc.terminate()
        proc.wait(10)
