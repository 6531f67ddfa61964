import json

import pytest

from homcomp import config
from homcomp.cli import main
from homcomp.cost_model import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_model_default_table(capsys):
    code, out, _ = run(capsys, "model")
    assert code == 0
    for text in ("6.2500", "31.2727", "37.5227", "crossover M                8"):
        assert text in out


def test_model_single_worker(capsys):
    code, out, _ = run(capsys, "model", "--workers", "1")
    speed = float(next(l for l in out.splitlines() if l.startswith("speedup")).split()[-1])
    assert code == 0 and speed <= 1


def test_model_homomorphic(capsys):
    code, out, _ = run(capsys, "model", "--strategy", "homomorphic", "--h", "1.3", "--rho", "0.2")
    assert code == 0 and "14.3795" in out


def test_model_json_roundtrip(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["model", "--workers", "9", "--json", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["config"]["cluster"]["workers"] == 9
    # the embedded config reproduces the report
    again = tmp_path / "again.json"
    assert main(["model", "--config", str(report), "--json", str(again)]) == 0
    assert json.loads(again.read_text()) == data
    capsys.readouterr()


def test_sweep_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "M,t_cmt,t_tnf,t_update,speedup" and len(lines) == 26


def test_sweep_grid_rows(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["sweep", "--kind", "hrho", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 23


def test_sweep_unwritable_path(capsys):
    code, _, err = run(capsys, "sweep", "--out", "/nonexistent/dir/x.csv")
    assert code == 3 and "i/o error" in err


def test_frontier(capsys):
    code, out, _ = run(capsys, "frontier")
    rows = out.splitlines()[2:]
    assert code == 0 and len(rows) == 2
    assert rows[0].split()[1] == "2.9993"
    assert float(rows[1].split()[1]) < float(rows[0].split()[1])
    code, out, _ = run(capsys, "frontier", "--r", "1", "--rho-list", "1.0")
    assert out.splitlines()[2].split()[2] == "no"


@pytest.mark.parametrize("argv", [
    ["model", "--workers", "0"],
    ["model", "--strategy", "homomorphic", "--config", "/nonexistent.json"],
    ["frontier", "--r", "0.5"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "config error" in err


def test_unknown_config_key(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cluster": {"wokers": 3}}))
    code, _, err = run(capsys, "model", "--config", str(bad))
    assert code == 2 and "wokers" in err


def test_profile_ratio_conventions():
    a = config.load(overrides={"strategy": "repetitive", "profile": {"compression_ratio": 1.079}})
    assert a.profile.rho == pytest.approx(1 / 1.079)
    with pytest.raises(ConfigError):
        config.from_dict({**config.default_config_dict(),
                          "profile": {"rho": 0.5, "compression_ratio": 2}})
    # a new ratio on the command line replaces the file's, whatever its spelling
    merged = config.merge({"profile": {"compression_ratio": 2}}, {"profile": {"rho": 0.3}})
    assert merged["profile"] == {"rho": 0.3}


def test_bench_identity(capsys):
    code, out, _ = run(capsys, "bench", "--codec", "identity", "--blob-bytes", str(1 << 20))
    assert code == 0 and "1.000" in out


def test_serve_spawns_local_workers(tmp_path, capsys):
    report = tmp_path / "h.json"
    code = main(["serve", "--bind", "127.0.0.1:0", "--workers", "4", "--rounds", "1",
                 "--codec", "quant8", "--weight-bytes", "400000", "--compute-ms", "5",
                 "--chi-bytes-per-sec", "2000000", "--spawn-local", "--json", str(report)])
    capsys.readouterr()
    assert code == 0
    data = json.loads(report.read_text())
    assert data["report"]["relative_error"] < 0.3


def test_worker_without_server_exit_4(capsys):
    code, _, err = run(capsys, "worker", "--connect", "127.0.0.1:1", "--worker-id", "0",
                       "--timeout-s", "0.5")
    assert code == 4 and "harness failure" in err
