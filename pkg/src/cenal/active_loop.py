"""Pool-based active learning experiments.

One unit of work is a (repetition, function) pair.  All functions of a
repetition see the same splits and the same step-0 model; later steps use
seeds derived from (master seed, repetition, step, function), so a unit's
result does not depend on which process ran it or in what order.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .acquisition import (
    DEFAULT_S,
    DEFAULT_T,
    FUNCTION_TAGS,
    mask_seed,
    mi_censor,
    score_pool,
    score_posterior,
    select_top_k,
)
from .data import (
    CsvSchema,
    Dataset,
    DatasetSplits,
    SplitSizes,
    Standardizer,
    generate_synthetic,
    generate_synthetic_test,
    load_csv,
    split,
    standardize,
)
from .neural import (
    ConfigError,
    NetworkConfig,
    TrainConfig,
    TrainingError,
    Weights,
    draw_masks,
    posterior_heads,
    train,
)
from .report import test_censored_nll

log = logging.getLogger(__name__)

# stream tags for seed derivation
_SPLIT, _TRAIN, _SCORE, _DATA = 0, 1, 2, 3
_FN_ID = {f: i for i, f in enumerate(FUNCTION_TAGS)}


def derive_seed(master: int, *path: int) -> int:
    """A 63-bit seed that depends only on ``master`` and the integer path."""
    # SeedSequence ignores trailing zero words, so the path length goes in too
    a, b = np.random.SeedSequence([int(master), len(path), *map(int, path)]).generate_state(2)
    return (int(a) << 31) ^ int(b)


class RepetitionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from and how it is split.

    ``kind="synthetic"`` draws train/pool/val rows from the sine generator
    and the test rows from its uniform-x variant; ``kind="csv"`` reads
    ``path`` and splits it at random.
    """

    name: str = "synthetic"
    kind: str = "synthetic"
    n0: int = 10
    pool: int = 9000
    val: int = 250
    test: int = 500
    path: str | None = None
    features: tuple[str, ...] = ()
    target: str = "y"
    event: str = "event"
    log_transform: bool | None = None
    standardize: bool | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"dataset kind must be 'synthetic' or 'csv', got {self.kind!r}")
        if self.kind == "csv" and (not self.path or not self.features):
            raise ConfigError("csv datasets need 'path' and 'features'")
        for name in ("n0", "pool", "val", "test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"dataset size {name} must be non-negative")
        if self.val < 1 or self.test < 1 or self.n0 < 1:
            raise ConfigError("n0, val and test must each hold at least one row")
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def sizes(self) -> SplitSizes:
        return SplitSizes(self.n0, self.pool, self.val, self.test)

    @property
    def use_log(self) -> bool:
        return self.kind == "csv" if self.log_transform is None else self.log_transform

    @property
    def use_standardize(self) -> bool:
        return True if self.standardize is None else self.standardize


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    acquisition_size: int = 3
    steps: int = 150
    repetitions: int = 50
    functions: tuple[str, ...] = FUNCTION_TAGS
    T: int = DEFAULT_T
    S: int = DEFAULT_S
    network: dict = field(default_factory=lambda: {"hidden_layers": 3, "hidden_units": 128,
                                                   "dropout_p": 0.25, "activation": "relu"})
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        bad = [f for f in self.functions if f not in FUNCTION_TAGS]
        if bad:
            raise ConfigError(f"unknown acquisition functions {bad}")
        if not self.functions:
            raise ConfigError("at least one acquisition function is required")
        if len(set(self.functions)) != len(self.functions):
            raise ConfigError("duplicate acquisition functions")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.steps < 0 or self.acquisition_size < 0:
            raise ConfigError("steps and acquisition_size must be non-negative")
        if self.steps * self.acquisition_size > self.dataset.pool:
            raise ConfigError(f"steps * acquisition_size = {self.steps * self.acquisition_size} "
                              f"exceeds the pool size {self.dataset.pool}")
        if self.T < 1 or self.S < 1:
            raise ConfigError("T and S must be positive")
        # validates the shape fields early
        self.network_config(1, 0)

    def network_config(self, input_dim: int, init_seed: int) -> NetworkConfig:
        extra = set(self.network) - {"hidden_layers", "hidden_units", "dropout_p", "activation"}
        if extra:
            raise ConfigError(f"unknown network fields {sorted(extra)}")
        return NetworkConfig(input_dim=input_dim, init_seed=init_seed, **self.network)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset"]["features"] = list(self.dataset.features)
        d["functions"] = list(self.functions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            if "dataset" in d:
                d["dataset"] = DatasetSpec(**d["dataset"])
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class CurvePoint:
    step: int
    n_train: int
    test_nll: float


@dataclass
class LearningCurve:
    function_tag: str
    repetition: int
    points: list[CurvePoint] = field(default_factory=list)
    dataset: str = "synthetic"
    # pool indices (into the split's pool) acquired at each step
    acquired: list[list[int]] = field(default_factory=list)

    @property
    def nll(self) -> np.ndarray:
        return np.array([p.test_nll for p in self.points])

    @property
    def steps(self) -> list[int]:
        return [p.step for p in self.points]


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------


def load_source(spec: DatasetSpec, master_seed: int, repetition: int) -> tuple[Dataset, np.ndarray | None]:
    """The full dataset for one repetition and, for synthetic data, the fixed test rows."""
    if spec.kind == "synthetic":
        n_rest = spec.n0 + spec.pool + spec.val
        rest = generate_synthetic(n_rest, derive_seed(master_seed, _DATA, repetition, 0)).to_dataset()
        test = generate_synthetic_test(spec.test, derive_seed(master_seed, _DATA, repetition, 1)).to_dataset()
        return rest.concat(test), np.arange(n_rest, n_rest + spec.test)
    schema = CsvSchema(features=spec.features, target=spec.target, event=spec.event)
    return load_csv(spec.path, schema, log_transform=spec.use_log), None


def make_splits(cfg: ExperimentConfig, repetition: int) -> DatasetSplits:
    """Splits for a repetition; every function of the repetition gets these."""
    data, test_idx = load_source(cfg.dataset, cfg.master_seed, repetition)
    return split(data, cfg.dataset.sizes, derive_seed(cfg.master_seed, _SPLIT, repetition), test_idx=test_idx)


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def _train_seed(cfg: ExperimentConfig, repetition: int, step: int, fn: str) -> int:
    if step == 0:
        # shared by all functions of the repetition
        return derive_seed(cfg.master_seed, _TRAIN, repetition, 0)
    return derive_seed(cfg.master_seed, _TRAIN, repetition, step, _FN_ID[fn])


def fit_model(cfg: ExperimentConfig, tr: Dataset, va: Dataset, seed: int) -> Weights:
    net = cfg.network_config(tr.n_features, seed)
    return train(tr, va, net, replace(cfg.train, seed=seed))


def run_repetition(cfg: ExperimentConfig, function_tag: str, repetition: int,
                   splits: DatasetSplits | None = None) -> LearningCurve:
    """Train, evaluate, score and acquire for ``cfg.steps`` steps.

    The curve has ``steps + 1`` points: step 0 is the model trained on the
    initial ``n0`` rows, step ``s`` the model after ``s`` acquisitions.
    Raises RepetitionError if training diverges.
    """
    if function_tag not in cfg.functions:
        raise ConfigError(f"{function_tag!r} is not among the configured functions")
    if splits is None:
        splits = make_splits(cfg, repetition)
    tr, pool, va, te = splits.train, splits.pool, splits.val, splits.test
    if cfg.dataset.use_standardize:
        # pool features are unlabelled and known up front; ten labelled rows
        # alone give an unstable scale
        tf = Standardizer.fit(np.vstack([tr.X, pool.X]))
        tr, pool, va, te = (tf.apply(d) for d in (tr, pool, va, te))

    curve = LearningCurve(function_tag, repetition, dataset=cfg.dataset.name)
    available = np.ones(len(pool), dtype=bool)
    train_rows = tr
    k = cfg.acquisition_size
    w, changed = None, True
    for step in range(cfg.steps + 1):
        if changed:
            seed = _train_seed(cfg, repetition, step, function_tag)
            try:
                w = fit_model(cfg, train_rows, va, seed)
            except TrainingError as e:
                raise RepetitionError(f"{function_tag} repetition {repetition} diverged at step {step}: {e}") from e
        curve.points.append(CurvePoint(step, len(train_rows), test_censored_nll(w, te)))
        log.debug("%s rep %d step %d n=%d nll=%.4f", function_tag, repetition, step,
                  len(train_rows), curve.points[-1].test_nll)
        if step == cfg.steps:
            break
        changed = False
        if k == 0:
            curve.acquired.append([])
            continue
        cand = np.flatnonzero(available)
        score_seed = derive_seed(cfg.master_seed, _SCORE, repetition, step, _FN_ID[function_tag])
        scores = score_pool(pool.X[cand], w, function_tag, cfg.T, cfg.S, score_seed, indices=cand)
        picked = select_top_k(scores, k)
        available[picked] = False
        # labels (y and the censoring flag) are revealed only now
        train_rows = train_rows.concat(pool[np.array(picked)])
        curve.acquired.append(picked)
        changed = True
    return curve


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class UnitResult:
    function_tag: str
    repetition: int
    curve: LearningCurve | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.curve is not None


def _run_unit(cfg: ExperimentConfig, fn: str, repetition: int) -> UnitResult:
    with threadpool_limits(1):
        try:
            return UnitResult(fn, repetition, run_repetition(cfg, fn, repetition))
        except RepetitionError as e:
            log.warning("%s", e)
            return UnitResult(fn, repetition, error=str(e))


def experiment_units(cfg: ExperimentConfig) -> list[tuple[str, int]]:
    return [(fn, r) for r in range(cfg.repetitions) for fn in cfg.functions]


def unit_path(curve_dir, fn: str, repetition: int) -> Path:
    return Path(curve_dir) / f"rep{repetition:04d}_{fn}.csv"


CURVE_FIELDS = ("dataset", "function", "repetition", "step", "n_train", "test_nll")


def write_curve(curve: LearningCurve, path) -> None:
    """Write one curve atomically (temp file, then rename)."""
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(CURVE_FIELDS)
        for p in curve.points:
            wr.writerow([curve.dataset, curve.function_tag, curve.repetition, p.step, p.n_train,
                         repr(float(p.test_nll))])
    os.replace(tmp, path)


def read_curves(path) -> list[LearningCurve]:
    """Read curves from a unit file or a merged learning_curves.csv."""
    curves: dict[tuple, LearningCurve] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["dataset"], row["function"], int(row["repetition"]))
            c = curves.setdefault(key, LearningCurve(key[1], key[2], dataset=key[0]))
            c.points.append(CurvePoint(int(row["step"]), int(row["n_train"]), float(row["test_nll"])))
    return list(curves.values())


def run_experiment(cfg: ExperimentConfig, curve_dir=None, jobs: int = 1,
                   skip: Iterable[tuple[str, int]] = (),
                   on_result: Callable[[UnitResult], None] | None = None) -> list[UnitResult]:
    """Run every (function, repetition) unit not listed in ``skip``.

    With ``curve_dir`` each finished curve is written to its own file as
    soon as it completes.  Results come back in unit order whatever ``jobs``
    is; failed units carry their error instead of a curve.
    """
    skip = set(skip)
    units = [u for u in experiment_units(cfg) if u not in skip]
    if curve_dir is not None:
        Path(curve_dir).mkdir(parents=True, exist_ok=True)

    def _finish(res: UnitResult) -> UnitResult:
        if res.ok and curve_dir is not None:
            write_curve(res.curve, unit_path(curve_dir, res.function_tag, res.repetition))
        if on_result is not None:
            on_result(res)
        return res

    if jobs <= 1 or len(units) <= 1:
        return [_finish(_run_unit(cfg, fn, r)) for fn, r in units]
    results: dict[tuple[str, int], UnitResult] = {}
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = {ex.submit(_run_unit, cfg, fn, r): (fn, r) for fn, r in units}
        for fut in as_completed(futs):
            res = fut.result()
            results[futs[fut]] = _finish(res)
    return [results[u] for u in units]


# ---------------------------------------------------------------------------
# score profile over x (1-D synthetic data)
# ---------------------------------------------------------------------------


@dataclass
class ScoreProfile:
    x: np.ndarray
    scores: dict[str, np.ndarray]


def score_profile(cfg: ExperimentConfig, n_train: int = 200, grid: Sequence[float] | None = None,
                  functions: Sequence[str] = ("entropy", "bald", "cbald")) -> ScoreProfile:
    """Train on ``n_train`` synthetic rows and score a grid of x values.

    Also reports the two C-BALD components (``mi_label``, ``mi_censor``).
    """
    if cfg.dataset.kind != "synthetic":
        raise ConfigError("score profiles are defined for the 1-D synthetic data only")
    seed = derive_seed(cfg.master_seed, _DATA, 10**6, 0)
    data = generate_synthetic(n_train + cfg.dataset.val, seed).to_dataset()
    tr = data[np.arange(n_train)]
    va = data[np.arange(n_train, len(data))]
    grid = np.linspace(1.5, 8.5, 701) if grid is None else np.asarray(grid, dtype=np.float64)
    Xg = grid[:, None]
    if cfg.dataset.use_standardize:
        (tr, va), tf = standardize(tr, va)
        Xg = tf.transform(Xg)
    with threadpool_limits(1):
        w = fit_model(cfg, tr, va, derive_seed(cfg.master_seed, _TRAIN, 10**6, 0))
        score_seed = derive_seed(cfg.master_seed, _SCORE, 10**6, 0)
        pp = posterior_heads(w, Xg, draw_masks(w.cfg, cfg.T, mask_seed(score_seed)))
        out = {fn: score_posterior(pp, fn, cfg.S, score_seed) for fn in functions}
        if "cbald" in out:
            out["mi_censor"] = np.asarray(mi_censor(pp))
            out["mi_label"] = out["cbald"] - out["mi_censor"]
    return ScoreProfile(grid, out)
