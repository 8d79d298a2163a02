import csv
import io
import json

import numpy as np
import pytest

from oracles import risk_level
from pacbarrier.certificate import NeuralCertificate, linear_certificate
from pacbarrier.cli import (
    ConfigError,
    bundled_config_path,
    load_config,
    main,
    parse_config,
    parse_int_range,
    validate_certificate,
)

TINY = {
    "schema": 1,
    "system": {"name": "decay", "equations": ["-x1"]},
    "regions": {
        "domain": {"lower": [-2.0], "upper": [2.0]},
        "initial": {"lower": [-0.5], "upper": [0.5]},
        "unsafe": {"lower": [1.5], "upper": [2.0]},
    },
    "horizon": 1.0,
    "sample_times": 50,
    "n_train": 20,
    "beta": 0.01,
    "seed": 0,
    "architecture": {"hidden": [4]},
    "synthesis": {"step_size": 0.02, "tolerance": 1e-9, "patience": 20, "max_inner_iters": 3000,
                  "constants_points": 4000},
    "grids": {"points_per_dim": 21, "margin": 0.1},
    "constants": {"points": 5000},
    "validation": {"n_fresh": 300},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_epsilon_table(capsys):
    code, out, _ = run_cli(capsys, "epsilon", "--k", "0,5", "--beta", "0.01", "--N", "5,100")
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["k", "beta", "N", "epsilon", "residual"]
    table = {(int(r[0]), int(r[2])): float(r[3]) for r in rows[1:]}
    assert table[5, 5] == 1.0
    assert abs(table[0, 100] - float(risk_level(0, 0.01, 100))) < 1e-12
    assert len(rows) == 1 + 4


def test_epsilon_empty_range_prints_header_only(capsys):
    code, out, _ = run_cli(capsys, "epsilon", "--k", "5:4", "--beta", "0.1", "--N", "10")
    assert code == 0 and out.strip() == "k,beta,N,epsilon,residual"


@pytest.mark.parametrize("argv", [
    ["epsilon", "--k", "0", "--beta", "1.5", "--N", "10"],
    ["epsilon", "--k", "a:b", "--beta", "0.1", "--N", "10"],
    ["epsilon", "--k", "0:4:0", "--beta", "0.1", "--N", "10"],
    ["epsilon", "--k", "0", "--beta", "0.1"],
])
def test_epsilon_rejects_bad_arguments(capsys, argv):
    code, _, _ = run_cli(capsys, *argv)
    assert code == 2


def test_int_ranges():
    assert parse_int_range("0:10:5,12") == [0, 5, 10, 12]
    assert parse_int_range("3") == [3]


def test_levelset_zero_network(tmp_path, capsys):
    path = tmp_path / "z.json"
    NeuralCertificate.zeros([2, 3, 1]).save(path)
    code, out, _ = run_cli(capsys, "levelset", "--cert", path, "--bounds", -1, 1, -1, 1, "--resolution", 5)
    rows = read_csv(out)
    assert code == 0 and rows[0] == ["x1", "x2", "B"] and len(rows) == 26
    assert all(float(r[2]) == 0.0 for r in rows[1:])


def test_levelset_of_linear_certificate_is_a_line(tmp_path, capsys):
    path = tmp_path / "lin.json"
    w = np.array([1.0, 2.0])
    linear_certificate(w, -0.3).save(path)
    out = tmp_path / "grid.csv"
    res = 41
    code, _, _ = run_cli(capsys, "levelset", "--cert", path, "--bounds", -1, 1, -1, 1,
                         "--resolution", res, "--out", out)
    assert code == 0
    grid = np.loadtxt(out, delimiter=",", skiprows=1).reshape(res, res, 3)
    cell = 2.0 / (res - 1)
    # midpoints of every sign change along x2 must lie within one cell of the line
    for i in range(res):
        b = grid[i, :, 2]
        for j in np.flatnonzero(np.sign(b[:-1]) != np.sign(b[1:])):
            x1, x2 = grid[i, j, 0], 0.5 * (grid[i, j, 1] + grid[i, j + 1, 1])
            dist = abs(w @ [x1, x2] - 0.3) / np.linalg.norm(w)
            assert dist <= cell


def test_levelset_errors(tmp_path, capsys):
    path = tmp_path / "c.json"
    NeuralCertificate.init([3, 4, 1], seed=0).save(path)
    code, _, err = run_cli(capsys, "levelset", "--cert", path, "--bounds", 0, 1, 0, 1)
    assert code == 2 and "base point" in err
    code, _, _ = run_cli(capsys, "levelset", "--cert", path, "--bounds", 0, 1, 0, 1, "--base", "0,0,0",
                         "--resolution", 1)
    assert code == 2
    code, _, _ = run_cli(capsys, "levelset", "--cert", path, "--bounds", 0, 1, 0, 1, "--base", "0,0,0.5",
                         "--axes", "0,2", "--resolution", 3)
    assert code == 0
    code, _, err = run_cli(capsys, "levelset", "--cert", tmp_path / "missing.json", "--bounds", 0, 1, 0, 1)
    assert code == 2 and "missing.json" in err


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.pop("beta"), "beta"),
    (lambda d: d.update(beta=2.0), "beta"),
    (lambda d: d.update(schema=2), "schema"),
    (lambda d: d["regions"].pop("unsafe"), "regions.unsafe"),
    (lambda d: d.update(synthesis={"stepsize": 0.1}), "synthesis"),
    (lambda d: d.update(n_train="many"), "n_train"),
    (lambda d: d.update(sample_times=0), "sample_times"),
])
def test_malformed_configs_name_the_field(mutate, field):
    doc = json.loads(json.dumps(TINY))
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert field in str(info.value)


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_cli(capsys, "synthesize", "--config", bad, "--out-dir", tmp_path)
    assert code == 2 and "config error" in err
    code, _, err = run_cli(capsys, "synthesize", "--config", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in err


def test_inline_dimension_mismatch(tmp_path):
    doc = json.loads(json.dumps(TINY))
    doc["system"]["equations"] = ["-x1", "-x2"]
    with pytest.raises(ConfigError):
        parse_config(doc).build_system()


def test_bundled_configs_load_and_document_assumptions():
    for name, dim in (("jet_engine", 2), ("four_dim", 4)):
        cfg = load_config(bundled_config_path(name))
        assert cfg.raw["assumed_from_figure"] is True
        assert cfg.build_system().dim == dim
    jet = load_config(bundled_config_path("jet_engine"))
    assert (jet.n_train, jet.horizon, jet.beta) == (1000, 5.0, 0.01)
    four = load_config(bundled_config_path("four_dim"))
    assert (four.n_train, four.horizon, four.beta) == (100, 4.0, 1e-5)


def test_zero_network_validation_exits_one(tiny_config, tmp_path, capsys):
    cert = tmp_path / "zero.json"
    NeuralCertificate.zeros([1, 4, 1]).save(cert)
    code, out, _ = run_cli(capsys, "validate", "--config", tiny_config, "--cert", cert,
                           "--out-dir", tmp_path, "--n-fresh", 50)
    assert code == 1
    doc = json.loads((tmp_path / "validation.json").read_text())
    assert doc["pass"] is False and doc["epsilon_source"] == "k=0"


def test_simulate_writes_csvs(tiny_config, tmp_path, capsys):
    code, _, _ = run_cli(capsys, "simulate", "--config", tiny_config, "--count", 3, "--out-dir", tmp_path)
    assert code == 0
    files = sorted(tmp_path.glob("trajectory_*.csv"))
    assert len(files) == 3
    data = np.loadtxt(files[0], delimiter=",", skiprows=1)
    t, x = data[:, 0], data[:, 1:]
    assert t.size == 51 and t[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(x[:, 0], x[0, 0] * np.exp(-t), rtol=1e-7)


def test_synthesize_validate_round_trip(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run_cli(capsys, "synthesize", "--config", tiny_config, "--out-dir", out)
    assert code == 0 and "epsilon =" in stdout
    report = json.loads((out / "report.json").read_text())
    comp = json.loads((out / "compression.json").read_text())
    assert report["success"] and report["state_loss"] == 0.0
    assert len(comp["compression_indices"]) == comp["jump_count"] + comp["discarded_count"]
    assert report["constants"]["safety_factor"] > 0 and report["seed"] == 0
    code, _, _ = run_cli(capsys, "validate", "--config", tiny_config, "--cert", out / "certificate.json",
                         "--out-dir", out)
    disk = json.loads((out / "validation.json").read_text())
    cert = NeuralCertificate.load(out / "certificate.json")
    mem = validate_certificate(cert, load_config(tiny_config), report)
    assert disk["pass"] == mem.passed and (code == 0) == mem.passed
    assert disk["psi_violation_rate"] == mem.psi_violation_rate
    assert disk["epsilon"] == report["epsilon"] and disk["d"] == report["d_used"]


def test_synthesis_reports_are_reproducible(tiny_config, tmp_path, capsys):
    docs = []
    for name in ("a", "b"):
        assert run_cli(capsys, "synthesize", "--config", tiny_config, "--out-dir", tmp_path / name)[0] == 0
        doc = json.loads((tmp_path / name / "report.json").read_text())
        doc.pop("wall_time")
        docs.append(doc)
    assert docs[0] == docs[1]
    assert (tmp_path / "a" / "certificate.json").read_bytes() == (tmp_path / "b" / "certificate.json").read_bytes()


def test_seed_override(tiny_config, tmp_path, capsys):
    assert run_cli(capsys, "synthesize", "--config", tiny_config, "--seed", 3, "--out-dir", tmp_path)[0] == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["seed"] == 3 and report["config"]["seed"] == 3
