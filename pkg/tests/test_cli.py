import json
import subprocess
import sys

import pytest

from cenal.cli import config_hash, load_config, main

TINY = {
    "dataset": {"n0": 5, "pool": 30, "val": 15, "test": 20},
    "acquisition_size": 2,
    "steps": 2,
    "repetitions": 2,
    "functions": ["random", "bald", "cbald"],
    "T": 4,
    "S": 8,
    "network": {"hidden_layers": 1, "hidden_units": 8, "dropout_p": 0.25, "activation": "relu"},
    "train": {"lr": 3e-3, "max_epochs": 3, "patience": 2, "min_epoch_steps": 5},
    "master_seed": 1,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def test_generate(tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"n": 12, "seed": 4}))
    out = tmp_path / "d.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,event" and len(lines) == 13
    again = tmp_path / "e.csv"
    main(["generate", "--config", str(cfg), "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


@pytest.mark.parametrize("body", ['{"n": 0}', '{"n": 5, "colour": 1}', '[1]', 'not json'])
def test_generate_usage_errors(tmp_path, body):
    cfg = tmp_path / "g.json"
    cfg.write_text(body)
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 1


def test_argument_errors_exit_1(cfg_path, tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["run", "--config", str(cfg_path)])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path), "--jobs", "0"])
    assert e.value.code == 1
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path), "--functions", "ucb"]) == 1


def test_bad_log_level(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv("CENAL_LOG", "chatty")
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path)]) == 1


def test_overrides_and_hash(cfg_path):
    base = load_config(cfg_path)
    over = load_config(cfg_path, functions="random,cbald", steps=1, repetitions=1, seed=9)
    assert over.functions == ("random", "cbald") and over.steps == 1
    assert over.repetitions == 1 and over.master_seed == 9
    assert config_hash(base) == config_hash(load_config(cfg_path))
    assert config_hash(base) != config_hash(over)


def test_run_report_resume_and_determinism(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg_path), "--out", str(a), "--profile"]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", str(b), "--jobs", "2"]) == 0
    for name in ("learning_curves.csv", "rd_auc.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = (a / "rd_auc.csv").read_text().splitlines()
    assert rows[0] == "dataset,function,mean,se,n_reps"
    assert rows[1].startswith("synthetic,random,0,0,2")
    assert len((a / "scores_profile.csv").read_text().splitlines()) == 702

    manifest = json.loads((a / "manifest.json").read_text())
    assert len(manifest["units"]) == 6
    assert all(u["status"] == "done" for u in manifest["units"].values())
    meta = json.loads((a / "report.json").read_text())
    assert meta["config_hash"] == manifest["config_hash"]

    # resume with everything done leaves the curves untouched
    before = (a / "learning_curves.csv").read_bytes()
    assert main(["run", "--config", str(cfg_path), "--out", str(a), "--resume"]) == 0
    assert (a / "learning_curves.csv").read_bytes() == before

    # a lost unit is recomputed identically
    (a / "curves" / "rep0001_bald.csv").unlink()
    assert main(["run", "--config", str(cfg_path), "--out", str(a), "--resume"]) == 0
    assert (a / "learning_curves.csv").read_bytes() == before

    # a changed config refuses to resume
    assert main(["run", "--config", str(cfg_path), "--out", str(a), "--resume", "--seed", "2"]) == 1

    # report alone regenerates the same files
    (a / "rd_auc.csv").unlink()
    assert main(["report", "--out", str(a)]) == 0
    assert (a / "rd_auc.csv").read_bytes() == (b / "rd_auc.csv").read_bytes()


def test_report_without_curves_is_runtime_error(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_failed_unit_exits_2(cfg_path, tmp_path, monkeypatch):
    import cenal.active_loop as al
    from cenal.neural import TrainingError

    real = al.fit_model

    def flaky(cfg, tr, va, seed):
        if len(tr) > 5:
            raise TrainingError("validation NLL non-finite")
        return real(cfg, tr, va, seed)

    monkeypatch.setattr(al, "fit_model", flaky)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--functions", "random,bald"]) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert {u["status"] for u in manifest["units"].values()} == {"failed"}


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cenal", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("cenal ")


def test_generate_full_size_dataset(tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"n": 9750, "seed": 7}))
    out = tmp_path / "d.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 9750
    censored = sum(r.endswith(",0") for r in rows) / len(rows)
    # the generator as specified censors about 52%, not 44% (see the notes)
    assert 0.49 < censored < 0.55
