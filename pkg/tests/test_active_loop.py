from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import cenal.active_loop as al
from cenal.active_loop import (
    DatasetSpec,
    ExperimentConfig,
    derive_seed,
    experiment_units,
    make_splits,
    read_curves,
    run_experiment,
    run_repetition,
    score_profile,
    unit_path,
    write_curve,
)
from cenal.neural import ConfigError, TrainConfig, TrainingError

FIXTURE = Path(__file__).parent / "fixtures" / "survival_small.csv"


def tiny(**kw) -> ExperimentConfig:
    base = dict(
        dataset=DatasetSpec(n0=5, pool=40, val=20, test=30),
        acquisition_size=2,
        steps=3,
        repetitions=2,
        T=4,
        S=8,
        network={"hidden_layers": 1, "hidden_units": 8, "dropout_p": 0.25, "activation": "relu"},
        train=TrainConfig(lr=3e-3, max_epochs=4, patience=2, min_epoch_steps=5),
        master_seed=3,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_derive_seed():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    seeds = {derive_seed(m, *p) for m in (0, 1) for p in [(0,), (1,), (0, 1), (1, 0), (0, 0, 0)]}
    assert len(seeds) == 10
    assert 0 <= derive_seed(5, 9) < 2**63


@pytest.mark.parametrize("kw", [
    dict(functions=("bald", "bald")),
    dict(functions=("ucb",)),
    dict(functions=()),
    dict(repetitions=0),
    dict(steps=30),  # 30 * 2 > pool of 40
    dict(T=0),
    dict(network={"hidden_units": 8, "width": 3}),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        tiny(**kw)


def test_dataset_spec_validation():
    with pytest.raises(ConfigError):
        DatasetSpec(kind="parquet")
    with pytest.raises(ConfigError):
        DatasetSpec(kind="csv")
    assert DatasetSpec(kind="csv", path="x.csv", features=("a",)).use_log
    assert not DatasetSpec().use_log


def test_config_dict_round_trip():
    cfg = tiny(functions=("random", "cbald"))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"stepz": 3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": {"n_zero": 3}})


def test_splits_shared_across_functions_and_vary_by_repetition():
    cfg = tiny()
    a, b = make_splits(cfg, 0), make_splits(cfg, 0)
    assert_array_equal(a.pool.X, b.pool.X)
    assert not np.array_equal(make_splits(cfg, 1).pool.X, a.pool.X)
    # synthetic test rows come from the uniform-x generator
    assert len(a.test) == 30


def test_repetition_curve_shape_and_pairing():
    cfg = tiny()
    curves = {fn: run_repetition(cfg, fn, 0) for fn in cfg.functions}
    for fn, c in curves.items():
        assert c.steps == [0, 1, 2, 3]
        assert [p.n_train for p in c.points] == [5, 7, 9, 11]
        picked = [i for step in c.acquired for i in step]
        assert len(picked) == len(set(picked)) == 6
        assert all(0 <= i < 40 for i in picked)
    step0 = {c.points[0].test_nll for c in curves.values()}
    assert len(step0) == 1
    again = run_repetition(cfg, "cbald", 0)
    assert again.nll.tolist() == curves["cbald"].nll.tolist()
    assert again.acquired == curves["cbald"].acquired


def test_zero_acquisition_gives_flat_curve():
    c = run_repetition(tiny(acquisition_size=0), "bald", 0)
    assert len(set(c.nll.tolist())) == 1
    assert c.acquired == [[], [], []]


def test_unknown_function_for_config():
    with pytest.raises(ConfigError):
        run_repetition(tiny(functions=("random",)), "bald", 0)


def test_experiment_is_independent_of_jobs(tmp_path):
    cfg = tiny(functions=("random", "bald"))
    r1 = run_experiment(cfg, tmp_path / "a", jobs=1)
    r2 = run_experiment(cfg, tmp_path / "b", jobs=2)
    assert [(r.function_tag, r.repetition) for r in r1] == experiment_units(cfg)
    assert [r.curve.nll.tolist() for r in r1] == [r.curve.nll.tolist() for r in r2]
    for fn, rep in experiment_units(cfg):
        assert unit_path(tmp_path / "a", fn, rep).read_bytes() == unit_path(tmp_path / "b", fn, rep).read_bytes()


def test_skip_and_callback(tmp_path):
    cfg = tiny(functions=("random",))
    seen = []
    res = run_experiment(cfg, tmp_path, skip={("random", 0)}, on_result=seen.append)
    assert [(r.function_tag, r.repetition) for r in res] == [("random", 1)]
    assert seen == res
    assert not unit_path(tmp_path, "random", 0).exists()


def test_curve_file_round_trip(tmp_path):
    c = run_repetition(tiny(), "entropy", 1)
    p = tmp_path / "c.csv"
    write_curve(c, p)
    (back,) = read_curves(p)
    assert back.function_tag == "entropy" and back.repetition == 1
    assert back.nll.tolist() == c.nll.tolist()
    assert [q.n_train for q in back.points] == [q.n_train for q in c.points]


def test_diverged_unit_is_reported_not_raised(monkeypatch):
    def boom(*a, **k):
        raise TrainingError("validation NLL non-finite")

    monkeypatch.setattr(al, "fit_model", boom)
    (res,) = run_experiment(tiny(functions=("random",), repetitions=1))
    assert not res.ok
    assert "diverged at step 0" in res.error


def test_csv_dataset_experiment():
    spec = DatasetSpec(name="fixture", kind="csv", path=str(FIXTURE), features=("age", "dose", "score"),
                       target="time", n0=5, pool=30, val=10, test=15)
    cfg = tiny(dataset=spec, functions=("random", "cbald"), repetitions=1, steps=2)
    c = run_repetition(cfg, "cbald", 0)
    assert c.dataset == "fixture" and len(c.points) == 3
    assert np.all(np.isfinite(c.nll))


def test_alternate_shape_runs():
    cfg = tiny(network={"hidden_layers": 2, "hidden_units": 64, "dropout_p": 0.25, "activation": "relu"},
               functions=("cbald",), repetitions=1)
    c = run_repetition(cfg, "cbald", 0)
    assert len(c.points) == 4


def test_score_profile_columns():
    cfg = tiny()
    prof = score_profile(cfg, n_train=30, grid=np.linspace(2, 8, 13))
    assert set(prof.scores) == {"entropy", "bald", "cbald", "mi_censor", "mi_label"}
    for v in prof.scores.values():
        assert v.shape == (13,)
    np.testing.assert_allclose(prof.scores["mi_label"] + prof.scores["mi_censor"], prof.scores["cbald"])
    with pytest.raises(ConfigError):
        score_profile(replace(cfg, dataset=DatasetSpec(kind="csv", path="x", features=("a",))))
