import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracfem import cli
from fracfem.config import ConfigError, ExperimentConfig, load_config
from fracfem.mesh import read_mesh


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


configs = st.builds(
    ExperimentConfig,
    domain=st.sampled_from(["interval", "square", "lshape", "disk"]),
    s=st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4).map(tuple),
    k_max=st.integers(1, 5),
    levels=st.integers(3, 7),
    base_resolution=st.one_of(st.none(), st.integers(1, 64)),
    reference_refinements=st.integers(0, 3),
    quadrature=st.dictionaries(st.sampled_from(["touching_order", "exterior_degree"]), st.integers(2, 20)),
    solver=st.sampled_from(["auto", "dense", "iterative"]),
    deterministic=st.booleans(),
    budget_dofs=st.one_of(st.none(), st.integers(1, 10**6)),
    tables=st.lists(st.sampled_from([1, 2, 3, 4]), min_size=1, max_size=4, unique=True).map(tuple),
)


@given(configs)
def test_config_round_trip(cfg):
    again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_load_config_reports_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "domain": "square",\n  "s": [0.5],\n  "colour": 3\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == 4 and f"{p}:4:" in str(info.value)
    p.write_text('{\n  "domain": "square",\n  "levels": true\n}\n')
    with pytest.raises(ConfigError, match=":3: levels"):
        load_config(p)
    p.write_text('{\n  "domain": "square",\n  "s": [1.5]\n}\n')
    with pytest.raises(ConfigError, match=":3: s"):
        load_config(p)
    p.write_text('{"domain": "square",\n oops}')
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


@pytest.mark.parametrize("kw", [dict(domain="cube"), dict(s=()), dict(k_max=0), dict(levels=0),
                                dict(solver="lu"), dict(quadrature={"bogus": 1}), dict(tables=(5,)),
                                dict(budget_dofs=0), dict(reference_refinements=-1)])
def test_validate_rejects(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).validate()


def test_resolution_and_quad_defaults():
    assert ExperimentConfig(domain="disk").resolution == 24
    assert ExperimentConfig(base_resolution=7).resolution == 7
    assert ExperimentConfig(quadrature={"touching_order": 8}).quad(2).touching_order == 8
    assert ExperimentConfig().quad(1).exterior_degree == 39


def test_eig_interval(capsys, tmp_path):
    code, out, _ = run(capsys, "eig", "--s", "0.5", "--resolution", "128", "--kmax", "2",
                       "--out", str(tmp_path), "--export-matrices", "--mesh-out", str(tmp_path / "m.txt"))
    assert code == 0
    lam = float(out.splitlines()[2].split(",")[1])
    assert 1.1577 < lam < 1.17
    rows = list(csv.reader(open(tmp_path / "eig.csv")))
    assert rows[0] == ["k", "lambda_h", "residual"] and len(rows) == 3
    assert float(rows[1][1]) == lam
    payload = json.loads((tmp_path / "eig.json").read_text())
    assert payload["config"]["s"] == [0.5] and "seconds" in payload
    assert (tmp_path / "stiffness.txt").exists() and np.loadtxt(tmp_path / "eigenvectors.txt").shape == (127, 2)
    assert read_mesh(tmp_path / "m.txt").n_elements == 128


def test_eig_square_upper_bound(capsys):
    code, out, _ = run(capsys, "eig", "--domain", "square", "--s", "0.5", "--resolution", "8")
    lam = float(out.splitlines()[2].split(",")[1])
    assert code == 0 and 1.8395 < lam < 1.8395 * 1.05


def test_eig_mesh_in_round_trip(capsys, tmp_path):
    mpath = tmp_path / "m.txt"
    assert run(capsys, "eig", "--domain", "lshape", "--resolution", "2", "--mesh-out", str(mpath))[0] == 0
    a = run(capsys, "eig", "--domain", "lshape", "--resolution", "2")[1]
    b = run(capsys, "eig", "--mesh-in", str(mpath))[1]
    assert a.splitlines()[2] == b.splitlines()[2]


def test_kmax_exceeding_dofs(capsys, tmp_path):
    code, _, err = run(capsys, "eig", "--resolution", "4", "--kmax", "9", "--out", str(tmp_path))
    assert code == 1 and "exceeds" in err
    assert list(tmp_path.iterdir()) == []


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "eig", "--frobnicate")[0] == 1
    assert run(capsys, "eig", "--s", "1.2")[0] == 1
    assert run(capsys, "eig", "--s", "0.2", "0.3")[0] == 1
    assert run(capsys, "study", "--levels", "2")[0] == 1
    assert run(capsys, "eig", "--mesh-in", str(tmp_path / "nope.txt"))[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "s": [0.5],\n  "colour": 1\n}')
    code, _, err = run(capsys, "eig", "--config", str(bad))
    assert code == 1 and ":3: unknown key 'colour'" in err
    assert run(capsys, )[0] == 1
    assert run(capsys, "--version")[0] == 0


def test_numerical_failure_exit(capsys, monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(cli, "solve_lowest", boom)
    code, _, err = run(capsys, "eig", "--resolution", "8")
    assert code == 2 and "numerical failure" in err


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--s", "0.05", "--kmax", "2")
    assert code == 0
    assert float(out.splitlines()[2].split(",")[2]) == pytest.approx(1.0913, abs=5e-5)
    code, out, _ = run(capsys, "bounds", "--domain", "square", "--s", "0.95")
    assert float(out.splitlines()[1].split(",")[3]) == pytest.approx(4.5562, abs=5e-5)
    code, _, err = run(capsys, "bounds", "--domain", "lshape", "--s", "0.5")
    assert code == 1 and "lshape" in err


def test_config_file_with_flag_override(capsys, tmp_path):
    cfgp = tmp_path / "c.json"
    cfgp.write_text(json.dumps({"domain": "interval", "s": [0.3], "levels": 3, "base_resolution": 8,
                                "deterministic": True}))
    code, out, _ = run(capsys, "study", "--config", str(cfgp), "--s", "0.6", "--out", str(tmp_path))
    assert code == 0 and "s=0.6" in out
    payload = json.loads((tmp_path / "study_interval.json").read_text())
    assert payload["config"]["s"] == [0.6] and payload["config"]["base_resolution"] == 8
    assert "seconds" not in payload


def test_study_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "study", "--s", "0.4", "0.6", "--levels", "3", "--resolution", "8", "--kmax", "2",
                     "--refs", "2", "--out", str(tmp_path))
    rows = list(csv.reader(open(tmp_path / "study_interval.csv")))
    assert code == 0
    assert rows[0] == ["s", "level", "h", "n_dofs", "lambda_1", "lambda_2", "err_u1", "err_u2"]
    assert len(rows) == 7
    assert rows[1][2] == repr(0.25) and rows[3][3] == "31"


def test_study_budget_partial(capsys, tmp_path):
    code, _, _ = run(capsys, "study", "--s", "0.5", "--levels", "4", "--resolution", "8",
                     "--budget-dofs", "40", "--out", str(tmp_path))
    assert code == 3
    rows = list(csv.reader(open(tmp_path / "study_interval.csv")))
    assert len(rows) == 4
    assert json.loads((tmp_path / "study_interval.json").read_text())["studies"][0]["partial"]


def test_tables_reduced(capsys, tmp_path):
    code, out, _ = run(capsys, "tables", "--tables", "1", "3", "--s", "0.5", "--levels", "3",
                       "--resolution", "4", "--refs", "2", "--out", str(tmp_path))
    assert code == 0 and "table1_interval: 1 rows" in out
    t1 = list(csv.DictReader(open(tmp_path / "table1_interval.csv")))
    t3 = list(csv.DictReader(open(tmp_path / "table3_square.csv")))
    assert float(t1[0]["ref_fem_ext_1"]) == 1.1577
    assert float(t3[0]["chen_song_lower"]) <= float(t3[0]["lambda_h"]) <= float(t3[0]["chen_song_upper"])
    assert json.loads((tmp_path / "tables.json").read_text())["tables"]["table3_square"]["partial"] is False


def test_tables_budget_marks_partial(capsys, tmp_path):
    code, _, _ = run(capsys, "tables", "--tables", "2", "--s", "0.5", "--levels", "3", "--resolution", "8",
                     "--budget-dofs", "30", "--out", str(tmp_path))
    assert code == 3
    row = next(csv.DictReader(open(tmp_path / "table2_disk.csv")))
    assert row["partial"] == "1"


def test_deterministic_runs_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        d = tmp_path / "run"
        subprocess.run([sys.executable, "-m", "fracfem.cli", "study", "--domain", "square", "--s", "0.5",
                        "--levels", "3", "--resolution", "2", "--deterministic", "--out", str(d)], check=True)
        outs.append(((d / "study_square.csv").read_bytes(), (d / "study_square.json").read_bytes()))
    assert outs[0] == outs[1]
