import csv
import io

import numpy as np
import pytest

from dclab.cli import HEADER, ConfigError, ExperimentConfig, main, read_config, worker_count
from dclab.serialize import load_witness, write_matrix_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("scenario,")]
    return list(csv.DictReader(io.StringIO(HEADER + "\n" + "\n".join(lines))))


def test_estimate_dc_scalar_square(capsys):
    code, out, _ = run(capsys, "estimate-dc", "--form", "square", "--depth", "6", "--restarts", "4")
    assert code == 0
    (row,) = rows_of(out)
    assert 1.999 <= float(row["value"]) <= 2 + 1e-9


def test_gamma2_identity(capsys):
    code, out, _ = run(capsys, "gamma2", "--form", "identity", "--dim", "4")
    assert code == 0
    assert float(rows_of(out)[0]["value"]) == pytest.approx(1.0, abs=1e-6)


def test_dominate_swap(capsys):
    code, out, _ = run(capsys, "dominate", "--form", "swap", "--objective", "spectral")
    assert code == 0
    assert float(rows_of(out)[0]["value"]) == pytest.approx(0.5, abs=1e-4)


def test_dominate_matrix_file(tmp_path, capsys):
    path = tmp_path / "t.csv"
    write_matrix_csv(path, np.diag([1.0, -1.0]))
    code, out, _ = run(capsys, "dominate", "--matrix", str(path), "--objective", "maxentry",
                       "--out", str(tmp_path / "o"))
    assert code == 0
    assert float(rows_of(out)[0]["value"]) == pytest.approx(1.0, abs=1e-4)
    assert (tmp_path / "o" / "dominating_form.csv").exists()


def test_control_fn(capsys):
    code, out, _ = run(capsys, "control-fn")
    assert code == 0
    assert rows_of(out)[0]["kind"] == "control"
    code, _, err = run(capsys, "control-fn", "--rho-scale", "0.5", "--radius", "2")
    assert code == 1 and "value iteration" in err


def test_estimate_umd(tmp_path, capsys):
    code, out, _ = run(capsys, "estimate-umd", "--dim", "1", "--depth", "1", "--restarts", "2",
                       "--out", str(tmp_path))
    assert code == 0
    row = rows_of(out)[0]
    assert float(row["value"]) == pytest.approx(1.0, abs=1e-6)
    assert load_witness(row["witness"]).evaluate() == pytest.approx(float(row["value"]), abs=1e-9)


@pytest.mark.parametrize("argv", [
    ["trichotomy", "--dim", ""],
    ["duality", "--p", ""],
    ["trichotomy", "--p", "0.5"],
    ["trichotomy", "--p", "1", "--dim", "3"],
    ["estimate-dc", "--depth", "13"],
    ["gamma2", "--form", "hadamard", "--dim", "3"],
    ["control-fn", "--step", "0.3"],
    ["nonsense"],
])
def test_configuration_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ndepth = 3\ncolour = red\n")
    code, _, err = run(capsys, "duality", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 2 and "colour" in err
    with pytest.raises(ConfigError):
        read_config(cfg)


def test_config_file_values(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("depth = 3\np = 1, inf\ndim = 2,4\n")
    values = read_config(cfg)
    assert values["depth"] == 3 and values["dim"] == [2, 4] and values["p"][1] == np.inf


def test_duality_single_dim_and_witness(tmp_path, capsys):
    out_dir = tmp_path / "o"
    code, out, _ = run(capsys, "duality", "--p", "2", "--dim", "2", "--depth", "3", "--restarts", "2",
                       "--out", str(out_dir))
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 1
    assert float(rows[0]["value"]) <= 1 + 1e-6
    w = load_witness(rows[0]["witness"])
    assert w.evaluate() == pytest.approx(float(rows[0]["value"]), abs=1e-9)
    assert (out_dir / "duality.csv").read_text().splitlines()[0] == HEADER


def test_trichotomy_deterministic_with_svg(tmp_path, capsys, monkeypatch):
    args = ["trichotomy", "--p", "1,2", "--dim", "2,4", "--depth", "3", "--restarts", "2", "--steps", "100"]
    monkeypatch.setenv("DCLAB_THREADS", "1")
    code1, out1, _ = run(capsys, *args, "--out", str(tmp_path / "a"), "--svg")
    monkeypatch.setenv("DCLAB_THREADS", "4")
    code2, out2, _ = run(capsys, *args, "--out", str(tmp_path / "b"))
    assert code1 == 0 and code2 == 0
    r1, r2 = rows_of(out1), rows_of(out2)
    assert [(r["p"], r["dim"], r["kind"]) for r in r1] == [(r["p"], r["dim"], r["kind"]) for r in r2]
    for a, b in zip(r1, r2):
        assert float(a["value"]) == pytest.approx(float(b["value"]), abs=1e-9)
    assert (tmp_path / "a" / "trichotomy.svg").exists()
    assert not (tmp_path / "b" / "trichotomy.svg").exists()
    for r in r1:
        if r["kind"] == "dc":
            assert load_witness(r["witness"]).evaluate() == pytest.approx(float(r["value"]), abs=1e-9)
        else:
            assert r["kind"].startswith("dominate_")


def test_violated_expectation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("min_growth = 100\n")
    code, out, err = run(capsys, "trichotomy", "--config", str(cfg), "--p", "1", "--dim", "2,4",
                         "--depth", "2", "--restarts", "1", "--steps", "30", "--out", str(tmp_path))
    assert code == 1
    assert "l1 growth factor" in err
    assert len(rows_of(out)) == 4


def test_worker_count(monkeypatch):
    monkeypatch.delenv("DCLAB_THREADS", raising=False)
    assert worker_count(8) == 1
    monkeypatch.setenv("DCLAB_THREADS", "3")
    assert worker_count(8) == 3 and worker_count(2) == 2
    assert worker_count(8, requested=2) == 2


def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(dim=[]).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(depth=0).validate()
    ExperimentConfig(scenario="trichotomy", p=[1.0], dim=[2, 4]).validate()


def test_block_forms_report_block_dimension(capsys):
    code, out, _ = run(capsys, "estimate-dc", "--form", "counterexample", "--dim", "4", "--depth", "2",
                       "--restarts", "1", "--steps", "20")
    row = rows_of(out)[0]
    assert code == 0 and row["p"] == "1" and row["dim"] == "4"
    code, out, _ = run(capsys, "dominate", "--form", "counterexample", "--dim", "4")
    row = rows_of(out)[0]
    assert row["kind"] == "dominate_maxentry" and float(row["value"]) == pytest.approx(2.0, rel=5e-3)
