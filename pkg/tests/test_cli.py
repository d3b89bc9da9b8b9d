"""End-to-end command line tests, run in process via main(argv)."""

import json

import numpy as np
import pytest

from ebsurv.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from ebsurv.dataio import load_model, read_dataset


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--kind", "weibull", "--n", "120",
                 "--out", str(d), "--seed", "3"]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def pch_dir(tmp_path_factory, sim_dir):
    d = tmp_path_factory.mktemp("pch")
    assert main(["train", "--model", "pch", "--data", str(sim_dir),
                 "--out", str(d), "--nodes", "4", "--n-grid", "3",
                 "--batch-size", "32", "--max-epochs", "3", "--patience", "3",
                 "--seed", "1"]) == EXIT_OK
    return d


def test_simulate_outputs(sim_dir):
    train = read_dataset(sim_dir / "train.csv")
    val = read_dataset(sim_dir / "val.csv")
    test = read_dataset(sim_dir / "test.csv")
    assert (len(train), len(val), len(test)) == (84, 12, 24)
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["settings"]["seed"] == 3
    assert 0.0 < manifest["settings"]["realized_censor_rate"] < 1.0
    assert set(manifest["versions"]) == {"python", "numpy", "scipy", "ebsurv"}
    assert manifest["backend"] in ("python", "cython")
    assert len(manifest["outputs"]) == 3


def test_simulate_is_deterministic(tmp_path, sim_dir):
    other = tmp_path / "again"
    assert main(["simulate", "--kind", "weibull", "--n", "120",
                 "--out", str(other), "--seed", "3"]) == EXIT_OK
    assert (other / "train.csv").read_bytes() == (sim_dir / "train.csv").read_bytes()
    different = tmp_path / "shifted"
    assert main(["simulate", "--kind", "weibull", "--n", "120",
                 "--out", str(different), "--seed", "4"]) == EXIT_OK
    assert (different / "train.csv").read_bytes() != (sim_dir / "train.csv").read_bytes()


def test_seed_environment_fallback(tmp_path, monkeypatch, sim_dir):
    monkeypatch.setenv("EBSURV_SEED", "3")
    d = tmp_path / "env"
    assert main(["simulate", "--kind", "weibull", "--n", "120",
                 "--out", str(d)]) == EXIT_OK
    assert (d / "train.csv").read_bytes() == (sim_dir / "train.csv").read_bytes()
    monkeypatch.setenv("EBSURV_SEED", "not-a-number")
    assert main(["simulate", "--out", str(tmp_path / "bad")]) == EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# generator settings\nn = 30\nseed = 5\n")
    d1 = tmp_path / "from-config"
    assert main(["simulate", "--config", str(cfg), "--out", str(d1)]) == EXIT_OK
    assert len(read_dataset(d1 / "train.csv")) == 21
    d2 = tmp_path / "flag-wins"
    assert main(["simulate", "--config", str(cfg), "--n", "40",
                 "--out", str(d2)]) == EXIT_OK
    assert len(read_dataset(d2 / "train.csv")) == 28

    cfg.write_text("mystery = 1\n")
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "x")]) == EXIT_USAGE
    cfg.write_text("no equals sign here\n")
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "y")]) == EXIT_USAGE


def test_train_pch_outputs(pch_dir, sim_dir):
    model = load_model(pch_dir / "model.json")
    assert model.grid.n_grid == 3
    lines = (pch_dir / "fig3_valloss.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert len(lines) >= 2
    manifest = json.loads((pch_dir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["settings"]["model"] == "pch"
    assert str(sim_dir / "train.csv") in manifest["inputs"]
    for digest in manifest["inputs"].values():
        assert len(digest) == 64


def test_train_is_deterministic(tmp_path, sim_dir):
    args = ["train", "--model", "pch", "--data", str(sim_dir),
            "--nodes", "4", "--n-grid", "3", "--batch-size", "32",
            "--max-epochs", "2", "--patience", "2", "--seed", "8"]
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(d1)]) == EXIT_OK
    assert main(args + ["--out", str(d2)]) == EXIT_OK
    assert (d1 / "model.json").read_bytes() == (d2 / "model.json").read_bytes()
    assert (d1 / "fig3_valloss.csv").read_bytes() == (d2 / "fig3_valloss.csv").read_bytes()


def test_train_ebm_quick(tmp_path, sim_dir):
    d = tmp_path / "ebm"
    assert main(["train", "--model", "ebm", "--data", str(sim_dir),
                 "--out", str(d), "--nodes", "4", "--hidden-layers", "1",
                 "--n-samples", "4", "--batch-size", "32", "--max-epochs", "2",
                 "--patience", "2", "--seed", "0"]) == EXIT_OK
    model = load_model(d / "model.json")
    train = read_dataset(sim_dir / "train.csv")
    assert model.t_max == pytest.approx(train.max_tau)
    assert model.norm is not None
    s = model.survival(0.5 * model.t_max, train.x[0])
    assert 0.0 <= s <= 1.0


def test_train_no_normalize(tmp_path, sim_dir):
    d = tmp_path / "nn"
    assert main(["train", "--model", "pch", "--data", str(sim_dir),
                 "--out", str(d), "--nodes", "4", "--max-epochs", "1",
                 "--patience", "1", "--no-normalize"]) == EXIT_OK
    assert load_model(d / "model.json").norm is None


def test_train_usage_and_data_errors(tmp_path, sim_dir):
    assert main(["train", "--model", "cox", "--data", str(sim_dir),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["train", "--model", "pch", "--data", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_evaluate_oracle(tmp_path):
    d = tmp_path / "oracle"
    assert main(["evaluate", "--oracle", "--t-max", "3.0", "--out", str(d),
                 "--grid-size", "2", "--no-convergence"]) == EXIT_OK
    rows = dict(line.split(",") for line
                in (d / "summary.csv").read_text().strip().splitlines()[1:])
    assert float(rows["mean_ks"]) == 0.0
    curves = (d / "fig5_curves.csv").read_text().strip().splitlines()
    assert curves[0] == "t,true_survival,model_survival"
    assert len(curves) == 101
    assert not (d / "fig4_convergence.csv").exists()


def test_evaluate_oracle_convergence_table(tmp_path):
    d = tmp_path / "conv"
    assert main(["evaluate", "--oracle", "--t-max", "2.0", "--out", str(d),
                 "--grid-size", "2", "--trap-points", "5,9",
                 "--mc-points", "4", "--reps", "2", "--seed", "0"]) == EXIT_OK
    lines = (d / "fig4_convergence.csv").read_text().strip().splitlines()
    assert lines[0] == "method,n_points,rep,mean_ks"
    methods = [line.split(",")[0] for line in lines[1:]]
    assert methods == ["trapezoid", "trapezoid", "mc", "mc"]


def test_evaluate_usage_errors(tmp_path, sim_dir):
    assert main(["evaluate", "--oracle", "--out", str(tmp_path / "a")]) == EXIT_USAGE
    assert main(["evaluate", "--oracle", "--t-max", "3.0",
                 "--data", str(sim_dir / "val.csv"),
                 "--out", str(tmp_path / "b")]) == EXIT_USAGE
    assert main(["evaluate", "--out", str(tmp_path / "c")]) == EXIT_USAGE


def test_evaluate_trained_model_with_data(tmp_path, pch_dir, sim_dir):
    d = tmp_path / "eval"
    assert main(["evaluate", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "val.csv"), "--out", str(d),
                 "--grid-size", "2", "--no-convergence"]) == EXIT_OK
    rows = dict(line.split(",") for line
                in (d / "summary.csv").read_text().strip().splitlines()[1:])
    assert "val_loss" in rows and "mean_ks" in rows
    assert np.isfinite(float(rows["val_loss"]))
    manifest = json.loads((d / "manifest.json").read_text())
    assert str(pch_dir / "model.json") in manifest["inputs"]


def test_evaluate_needs_truth_or_data(tmp_path):
    from ebsurv.dataio import save_model
    from ebsurv.ebm import initialize_energy_model

    path = tmp_path / "wide.json"
    save_model(initialize_energy_model(covariate_dim=3, t_max=1.0,
                                       nodes_per_layer=4), path)
    assert main(["evaluate", "--model", str(path),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_roc_outputs(tmp_path, pch_dir, sim_dir):
    d = tmp_path / "roc"
    assert main(["roc", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "train.csv"),
                 "--horizons", "0.25,0.5", "--out", str(d)]) == EXIT_OK
    roc = (d / "fig6_roc.csv").read_text().strip().splitlines()
    assert roc[0] == "horizon,threshold,fpr,tpr"
    auc_lines = (d / "auc.csv").read_text().strip().splitlines()
    assert auc_lines[0] == "horizon,auc"
    assert len(auc_lines) == 3
    for line in auc_lines[1:]:
        h, a = (float(v) for v in line.split(","))
        assert h in (0.25, 0.5)
        assert 0.0 <= a <= 1.0
    horizons = {line.split(",")[0] for line in roc[1:]}
    assert len(horizons) == 2


def test_roc_usage_errors(tmp_path, pch_dir, sim_dir):
    assert main(["roc", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "train.csv"), "--horizons", "0.5,-1",
                 "--out", str(tmp_path / "r")]) == EXIT_USAGE


def test_decide_outputs(tmp_path, pch_dir, sim_dir):
    out = tmp_path / "nested" / "decisions.csv"
    assert main(["decide", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "test.csv"), "--horizon", "0.5",
                 "--threshold", "0.6", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "id,cond_survival,replace"
    test = read_dataset(sim_dir / "test.csv")
    assert len(lines) == len(test) + 1
    ids = [int(line.split(",")[0]) for line in lines[1:]]
    assert ids == sorted(ids)
    flags = {line.split(",")[2] for line in lines[1:]}
    assert flags <= {"0", "1"}
    manifest = json.loads(out.with_suffix(".csv.manifest.json").read_text())
    assert manifest["command"] == "decide"
    assert manifest["settings"]["horizon"] == 0.5


def test_decide_usage_errors(tmp_path, pch_dir, sim_dir):
    base = ["decide", "--model", str(pch_dir / "model.json"),
            "--data", str(sim_dir / "test.csv"), "--out", str(tmp_path / "d.csv")]
    assert main(base + ["--threshold", "0.5"]) == EXIT_USAGE
    assert main(base + ["--horizon", "0.5"]) == EXIT_USAGE
    assert main(base + ["--horizon", "-1", "--threshold", "0.5"]) == EXIT_USAGE
    assert main(base + ["--horizon", "0.5", "--threshold", "1.5"]) == EXIT_USAGE


def test_corrupt_inputs_exit_with_data_code(tmp_path, sim_dir):
    junk = tmp_path / "junk.json"
    junk.write_text("not a model")
    assert main(["decide", "--model", str(junk),
                 "--data", str(sim_dir / "test.csv"), "--horizon", "0.5",
                 "--threshold", "0.5", "--out", str(tmp_path / "d.csv")]) == EXIT_DATA
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("id,time\n")
    assert main(["evaluate", "--model", str(tmp_path / "junk.json"),
                 "--out", str(tmp_path / "e")]) == EXIT_DATA


def test_no_subcommand_and_unknown_flag(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["simulate", "--bogus", "1", "--out", "x"]) == EXIT_USAGE
    capsys.readouterr()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "ebsurv" in capsys.readouterr().out


def test_integration_flag_validation(tmp_path, pch_dir, sim_dir):
    # mc integration is accepted and seeds its own rng.
    out = tmp_path / "mc.csv"
    assert main(["decide", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "test.csv"), "--horizon", "0.5",
                 "--threshold", "0.6", "--integration", "mc", "--n-points", "8",
                 "--out", str(out)]) == EXIT_OK
    assert main(["decide", "--model", str(pch_dir / "model.json"),
                 "--data", str(sim_dir / "test.csv"), "--horizon", "0.5",
                 "--threshold", "0.6", "--integration", "simpson",
                 "--out", str(out)]) == EXIT_USAGE
