import json
import subprocess
import sys

import numpy as np
import pytest

from podminn import io as rio
from podminn.cli import main
from podminn.minn import Dense, Network, save_network

TINY = """\
benchmark = 2
fine_cells = 10
coarse_cells = 5
closure_cells = 6
n_snapshots = 40
split = 20 10 10
n_rb = 4
curves_n_rb = 2 4
max_epochs = 5
closure_max_epochs = 2
closure_iterations_per_epoch = 3
output_dir = out
"""

STAGES = ["snapshots", "pod", "train-rb", "train-closure", "eval", "curves"]


def write_config(directory, text=TINY):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "run.cfg"
    path.write_text(text)
    return path


def run_all(cfg, capsys=None):
    for stage in STAGES:
        assert main([stage, "--config", str(cfg)]) == 0, stage


def snapshot_tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    cfg = write_config(base)
    run_all(cfg)
    return cfg, base / "out"


def test_outputs_present(tiny_run):
    cfg, out = tiny_run
    names = set(snapshot_tree(out))
    for name in ("S.mrom", "micro_inputs.mrom", "params.csv", "meta.json", "basis.mrom",
                 "singular_values.csv", "split.csv", "errors.csv", "curves.csv",
                 "models/rb_4.minn", "models/closure_4.minn", "models/rb_4.history.csv"):
        assert name in names, name
    with open(out / "S.mrom", "rb") as fh:
        assert rio.read_matrix_header(fh) == (121, 40)
    meta = json.loads((out / "meta.json").read_text())
    assert meta["benchmark"] == 2 and meta["mesh"]["cells_per_side"] == 10
    assert len(rio.read_csv(out / "params.csv")) == 40


def test_error_table_layout(tiny_run):
    _, out = tiny_run
    rows = rio.read_csv(out / "errors.csv")
    assert list(rows[0]) == ["benchmark", "n_rb", "p", "E_POD", "E_PODMINN",
                             "E_PODMINNplus", "n_test"]
    assert [r["p"] for r in rows] == ["2", "inf"]
    assert all(int(r["n_test"]) == 10 for r in rows)
    curves = rio.read_csv(out / "curves.csv")
    assert [(r["n_rb"], r["p"]) for r in curves] == [("2", "2"), ("2", "inf"),
                                                     ("4", "2"), ("4", "inf")]
    sigma = rio.read_csv(out / "singular_values.csv")
    assert float(curves[0]["sigma"]) == float(sigma[1]["sigma"])
    history = rio.read_csv(out / "models" / "closure_4.history.csv")
    assert list(history[0]) == ["epoch", "train_loss", "valid_loss", "step_size",
                                "line_search_backtracks"]


def test_rerun_is_bitwise_identical(tiny_run, tmp_path):
    _, out = tiny_run
    cfg = write_config(tmp_path)
    run_all(cfg)
    assert snapshot_tree(tmp_path / "out") == snapshot_tree(out)


@pytest.mark.parametrize("victim,stage", [("S.mrom", "snapshots"), ("basis.mrom", "pod"),
                                          ("models/rb_4.minn", "train-rb"),
                                          ("models/closure_4.minn", "train-closure"),
                                          ("errors.csv", "eval")])
def test_deleted_artifact_is_reproduced(tiny_run, victim, stage):
    cfg, out = tiny_run
    before = (out / victim).read_bytes()
    (out / victim).unlink()
    assert main([stage, "--config", str(cfg)]) == 0
    assert (out / victim).read_bytes() == before


def test_missing_input_names_file_and_producer(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["pod", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("error: stage=pod kind=missing_input")
    assert "S.mrom" in err[0] and "producer=snapshots" in err[0]


def test_missing_model_names_training_stage(tiny_run, tmp_path, capsys):
    cfg, out = tiny_run
    text = TINY.replace("n_rb = 4", "n_rb = 3")
    other = write_config(tmp_path, text.replace("output_dir = out", f"output_dir = {out}"))
    assert main(["eval", "--config", str(other)]) == 3
    assert "producer=train-rb" in capsys.readouterr().err


def test_config_errors(tmp_path, capsys):
    assert main(["pod", "--config", str(tmp_path / "none.cfg")]) == 2
    bad = write_config(tmp_path, "benchmark = 2\nspeed = 11\n")
    assert main(["pod", "--config", str(bad)]) == 2
    lines = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("error: stage=pod kind=") for line in lines)
    assert "speed" in lines[-1]


def test_corrupt_matrix_reported(tmp_path, capsys):
    cfg = write_config(tmp_path)
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "S.mrom").write_bytes(b"JUNK" + bytes(40))
    assert main(["pod", "--config", str(cfg)]) == 1
    assert "kind=bad_format" in capsys.readouterr().err


def test_seed_override_changes_data(tmp_path):
    cfg = write_config(tmp_path)
    main(["snapshots", "--config", str(cfg)])
    a = (tmp_path / "out" / "S.mrom").read_bytes()
    main(["snapshots", "--config", str(cfg), "--seed", "5"])
    b = (tmp_path / "out" / "S.mrom").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "out" / "meta.json").read_text())["seed"] == 5


def test_pod_on_rank_one_snapshots(tmp_path):
    cfg = write_config(tmp_path, TINY.replace("curves_n_rb = 2 4", "curves_n_rb = 1")
                       .replace("n_rb = 4", "n_rb = 1"))
    out = tmp_path / "out"
    u = np.sin(np.linspace(0, 3, 121))
    rio.write_matrix(out / "S.mrom", np.outer(u, np.arange(1.0, 41.0)))
    assert main(["pod", "--config", str(cfg)]) == 0
    sigma = [float(r["sigma"]) for r in rio.read_csv(out / "singular_values.csv")]
    assert sigma[0] > 0 and max(sigma[1:]) <= 1e-12 * sigma[0]


def test_eval_on_exact_oracle_model(tmp_path):
    cfg = write_config(tmp_path, TINY.replace("n_rb = 4", "n_rb = 2"))
    out = tmp_path / "out"
    rng = np.random.default_rng(0)
    V, _ = np.linalg.qr(rng.normal(size=(121, 2)))
    S = V @ rng.normal(size=(2, 40))
    rio.write_matrix(out / "S.mrom", S)
    rio.write_matrix(out / "micro_inputs.mrom", S)
    (out / "meta.json").write_text(json.dumps({"benchmark": 2}))
    assert main(["pod", "--config", str(cfg)]) == 0
    basis = rio.read_matrix(out / "basis.mrom")[:, :2]
    coeff = Network([Dense(121, 2, "identity")], {"input_scale": 1.0})
    coeff.set_params(np.concatenate([basis.T.ravel(), np.zeros(2)]))
    closure = Network([Dense(121, 121, "identity")], {"input_scale": 1.0})
    save_network(coeff, out / "models" / "rb_2.minn")
    save_network(closure, out / "models" / "closure_2.minn")
    assert main(["eval", "--config", str(cfg)]) == 0
    for row in rio.read_csv(out / "errors.csv"):
        for key in ("E_POD", "E_PODMINN", "E_PODMINNplus"):
            assert float(row[key]) <= 1e-13


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "podminn", "eval", "--config",
                           str(write_config(tmp_path))], capture_output=True, text=True)
    assert proc.returncode == 3
    assert proc.stderr.startswith("error: stage=eval kind=missing_input")
