"""Command line interface: exit codes, printed values, artifacts, replay."""
import json
import math
import subprocess
import sys

import pytest

from fracgauss import cli


def run_cli(*argv):
    return cli.run([str(a) for a in argv])


def test_gamma_prints_seventeen_digits(capsys):
    rc = run_cli("gamma", "--system", "cantor", "--H", "0.5", "--q", "2")
    out = capsys.readouterr().out.splitlines()
    assert rc == 0
    assert out[0] == "gamma = 0.77370561446908315"
    assert out[1] == "a = 1.2618595071429148"


def test_dimension_value(capsys):
    rc = run_cli("dimension", "--system", "cantor")
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("dimension = 0.")
    printed = float(out.split("=")[1])
    assert printed == pytest.approx(math.log(2) / math.log(3), rel=1e-14)
    # 17 significant digits survive the round trip
    assert format(printed, ".17g") == out.split("= ")[1].strip()


def test_unknown_command_lists_choices(capsys):
    rc = run_cli("frobnicate")
    err = capsys.readouterr().err
    assert rc == 2
    assert err.count("\n") == 1  # single-line diagnostic
    for name in ("gamma", "sigma", "delta", "verify", "sample-field"):
        assert name in err


def test_missing_system_file_names_path(capsys):
    rc = run_cli("gamma", "--system", "/tmp/no-such-system.toml",
                 "--H", "0.5", "--q", "2")
    err = capsys.readouterr().err
    assert rc == 2
    assert "/tmp/no-such-system.toml" in err


def test_missing_seed_is_a_usage_error(capsys):
    rc = run_cli("smalldev", "--kernel", "fbm:0.5", "--q", "2",
                 "--lebesgue-dim", "1", "--reps", "5000")
    err = capsys.readouterr().err
    assert rc == 2
    assert "--seed" in err


def test_bad_eps_range(capsys):
    rc = run_cli("smalldev", "--kernel", "fbm:0.5", "--q", "2",
                 "--lebesgue-dim", "1", "--reps", "5000", "--seed", "1",
                 "--eps-lo", "0.9", "--eps-hi", "0.2")
    assert rc == 2
    assert "eps" in capsys.readouterr().err


def test_internal_error_is_status_one(monkeypatch, capsys):
    def boom(args, outputs):
        raise RuntimeError("wires crossed")

    monkeypatch.setitem(cli._HANDLERS, "dimension", boom)
    rc = run_cli("dimension", "--system", "cantor")
    err = capsys.readouterr().err
    assert rc == 1
    assert err.startswith("internal error: RuntimeError")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "fracgauss", "gamma", "--system", "cantor",
         "--H", "0.5", "--q", "inf"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gamma = " in proc.stdout


def test_words_artifacts(tmp_path, capsys):
    prefix = tmp_path / "w"
    rc = run_cli("words", "--system", "cantor", "--H", "0.5", "--q", "2",
                 "--budget", "4", "--out", prefix)
    assert rc == 0
    manifest = json.loads((tmp_path / "w.manifest.json").read_text())
    assert manifest["command"] == "words"
    assert manifest["argv"][0] == "words"
    report = json.loads((tmp_path / "w.report.json").read_text())
    assert report["count"] == len(report["words"])


def test_smalldev_artifacts(tmp_path, capsys):
    prefix = tmp_path / "sd"
    rc = run_cli("smalldev", "--kernel", "fbm:0.5", "--q", "2",
                 "--lebesgue-dim", "1", "--cells", "32", "--reps", "5000",
                 "--eps-count", "5", "--seed", "3", "--out", prefix)
    assert rc == 0
    lines = (tmp_path / "sd.curve.csv").read_text().splitlines()
    assert lines[0] == "eps,p_hat,lo,hi,phi,flag"
    assert len(lines) == 6
    manifest = json.loads((tmp_path / "sd.manifest.json").read_text())
    assert sorted(manifest["outputs"]) == manifest["outputs"]
    assert str(prefix) + ".curve.csv" in manifest["outputs"]


def test_sample_field_artifacts(tmp_path, capsys):
    prefix = tmp_path / "sf"
    rc = run_cli("sample-field", "--kernel", "fbm:0.5", "--points",
                 "0.1,0.5,0.9", "--reps", "4", "--seed", "5",
                 "--out", prefix)
    assert rc == 0
    lines = (tmp_path / "sf.samples.csv").read_text().splitlines()
    assert lines[0] == "rep,site_index,value"
    assert len(lines) == 1 + 4 * 3


def test_entropy_counts_csv(tmp_path, capsys):
    prefix = tmp_path / "en"
    rc = run_cli("entropy", "--kind", "covering", "--grid", "65",
                 "--dim", "1", "--eps", "0.5,0.25", "--out", prefix)
    assert rc == 0
    lines = (tmp_path / "en.curve.csv").read_text().splitlines()
    assert lines[0] == "kind,H,q,N,r,n,value,bound"
    assert lines[1].startswith("covering,")
    assert lines[1].endswith(",upper")


def verify_argv(prefix):
    return ["verify", "--kernel", "fbm:0.5", "--q", "2",
            "--lebesgue-dim", "1", "--sites", "32", "--reps", "5000",
            "--eps-count", "6", "--seed", "7", "--out", str(prefix)]


def test_verify_replay_is_bitwise(tmp_path, capsys):
    first = tmp_path / "a"
    assert run_cli(*verify_argv(first)) == 0
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())

    # replay exactly what the manifest recorded, only swapping the prefix
    argv = list(manifest["argv"])
    argv[argv.index("--out") + 1] = str(tmp_path / "b")
    assert run_cli(*argv) == 0

    for ext in (".curve.csv", ".report.json"):
        a = (tmp_path / ("a" + ext)).read_bytes()
        b = (tmp_path / ("b" + ext)).read_bytes()
        assert a == b, f"replay changed {ext}"


def test_verify_independent_of_threads(tmp_path, capsys):
    assert run_cli(*verify_argv(tmp_path / "t1"), "--threads", "1") == 0
    assert run_cli(*verify_argv(tmp_path / "t4"), "--threads", "4") == 0
    a = (tmp_path / "t1.curve.csv").read_bytes()
    b = (tmp_path / "t4.curve.csv").read_bytes()
    assert a == b


def test_verify_smoke_passes(tmp_path, capsys):
    rc = run_cli(*verify_argv(tmp_path / "v"))
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("verdict: PASS")
    report = json.loads((tmp_path / "v.report.json").read_text())
    assert report["verdict"] == "PASS"
    assert report["a_pred"] == 2.0
