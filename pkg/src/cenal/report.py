"""Test-set evaluation, RD-AUC and report files.

RD-AUC of a function s against Random, per repetition::

    m      = min NLL over every function, step and repetition of the dataset
    d_t    = ((R_t - m) - (S_t - m)) / max(R_t - m, EPS)
    rd_auc = 100 * mean_t d_t

averaged over every recorded step (step 0 included; in a paired design it
contributes 0), then mean and standard error over repetitions.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .data import Dataset
from .losses import censored_nll_mean
from .neural import Weights, forward_raw

if TYPE_CHECKING:
    from .active_loop import LearningCurve, ScoreProfile

log = logging.getLogger(__name__)

EPS = 1e-8
FLOAT_FMT = "%.9g"
SHIFT_RULE = "global-min-subtract"
FUNCTION_ORDER = ("random", "entropy", "bald", "cbald")


class EvaluationError(FloatingPointError):
    pass


class ReportError(ValueError):
    pass


def test_censored_nll(w: Weights, test) -> float:
    """Mean censored NLL of ``test`` under the deterministic network."""
    test = Dataset.coerce(test)
    if len(test) == 0:
        raise ValueError("test set is empty")
    v = censored_nll_mean(forward_raw(w, test.X), test.y, test.l)
    if not math.isfinite(v):
        raise EvaluationError(f"test NLL is not finite ({v})")
    return v


test_censored_nll.__test__ = False  # keep pytest from collecting it


@dataclass(frozen=True)
class RdAucSummary:
    dataset: str
    function_tag: str
    rd_auc_mean: float
    rd_auc_se: float
    n_reps: int


def _function_key(fn: str):
    return (FUNCTION_ORDER.index(fn), fn) if fn in FUNCTION_ORDER else (len(FUNCTION_ORDER), fn)


def global_min(curves: Iterable[LearningCurve]) -> float:
    vals = [p.test_nll for c in curves for p in c.points]
    if not vals:
        raise ReportError("no curve points")
    return float(min(vals))


def _acq_nll(curve: LearningCurve, skip_step0: bool) -> tuple[list[int], np.ndarray]:
    pts = [p for p in curve.points if not (skip_step0 and p.step == 0)]
    return [p.step for p in pts], np.array([p.test_nll for p in pts], dtype=np.float64)


def rd_auc_per_rep(curve_s: LearningCurve, curve_random: LearningCurve, m: float,
                   skip_step0: bool = False) -> float:
    """RD-AUC of one repetition, in percent."""
    steps_s, s = _acq_nll(curve_s, skip_step0)
    steps_r, r = _acq_nll(curve_random, skip_step0)
    if steps_s != steps_r:
        raise ReportError(f"curves of repetition {curve_s.repetition} are not aligned on steps")
    if not steps_s:
        return 0.0
    rs, ss = r - m, s - m
    return float(100.0 * np.mean((rs - ss) / np.maximum(rs, EPS)))


def rd_auc(curves_s: Sequence[LearningCurve], curves_random: Sequence[LearningCurve],
           m: float | None = None, skip_step0: bool = False) -> RdAucSummary:
    """Mean and standard error of RD-AUC over the shared repetitions.

    ``m`` defaults to the minimum over the two curve sets; pass the minimum
    over all functions of the dataset to match :func:`summarize`.
    """
    by_rep_s = {c.repetition: c for c in curves_s}
    by_rep_r = {c.repetition: c for c in curves_random}
    if set(by_rep_s) != set(by_rep_r):
        raise ReportError("curve sets cover different repetitions")
    if not by_rep_s:
        raise ReportError("no curves to summarise")
    if m is None:
        m = global_min(list(curves_s) + list(curves_random))
    vals = np.array([rd_auc_per_rep(by_rep_s[r], by_rep_r[r], m, skip_step0) for r in sorted(by_rep_s)])
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    first = next(iter(curves_s))
    return RdAucSummary(first.dataset, first.function_tag, float(vals.mean()), se, len(vals))


def summarize(curves: Sequence[LearningCurve], skip_step0: bool = False) -> tuple[list[RdAucSummary], dict]:
    """One summary per (dataset, function) against that dataset's Random curves.

    Only repetitions present for every function of a dataset are used, so
    the paired comparison stays paired.  Returns the summaries and the
    global minimum used for each dataset.
    """
    out, mins = [], {}
    for ds in sorted({c.dataset for c in curves}):
        cs = [c for c in curves if c.dataset == ds]
        fns = sorted({c.function_tag for c in cs}, key=_function_key)
        if "random" not in fns:
            log.warning("dataset %r has no random curves; no RD-AUC rows", ds)
            continue
        reps = set.intersection(*({c.repetition for c in cs if c.function_tag == f} for f in fns))
        if not reps:
            raise ReportError(f"dataset {ds!r} has no repetition completed by every function")
        cs = [c for c in cs if c.repetition in reps]
        m = global_min(cs)
        mins[ds] = m
        rand = [c for c in cs if c.function_tag == "random"]
        for f in fns:
            out.append(rd_auc([c for c in cs if c.function_tag == f], rand, m, skip_step0))
    return out, mins


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def _sorted_curves(curves: Iterable[LearningCurve]) -> list[LearningCurve]:
    return sorted(curves, key=lambda c: (c.dataset, _function_key(c.function_tag), c.repetition))


def _write_rows(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f, lineterminator="\n")
            wr.writerow(header)
            wr.writerows(rows)
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e


def write_reports(curves: Sequence[LearningCurve], summaries: Sequence[RdAucSummary], out_dir,
                  profile: ScoreProfile | None = None, metadata: dict | None = None) -> list[Path]:
    """Write learning_curves.csv, rd_auc.csv, scores_profile.csv and report.json."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"cannot create {out_dir}: {e}") from e
    paths = [out_dir / n for n in ("learning_curves.csv", "rd_auc.csv", "scores_profile.csv", "report.json")]

    _write_rows(paths[0], ("dataset", "function", "repetition", "step", "n_train", "test_nll"),
                ([c.dataset, c.function_tag, c.repetition, p.step, p.n_train, _fmt(p.test_nll)]
                 for c in _sorted_curves(curves) for p in sorted(c.points, key=lambda p: p.step)))

    summ = sorted(summaries, key=lambda s: (s.dataset, _function_key(s.function_tag)))
    _write_rows(paths[1], ("dataset", "function", "mean", "se", "n_reps"),
                ([s.dataset, s.function_tag, _fmt(s.rd_auc_mean), _fmt(s.rd_auc_se), s.n_reps] for s in summ))

    names = [] if profile is None else list(profile.scores)
    rows = [] if profile is None else (
        [_fmt(x)] + [_fmt(profile.scores[n][i]) for n in names] for i, x in enumerate(profile.x))
    _write_rows(paths[2], ["x", *names], rows)

    meta = {"shift_rule": SHIFT_RULE, "eps": EPS, "float_format": FLOAT_FMT}
    meta.update(metadata or {})
    try:
        paths[3].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise ReportError(f"cannot write {paths[3]}: {e}") from e
    return paths


def read_learning_curves(path) -> list[LearningCurve]:
    from .active_loop import read_curves

    return read_curves(path)


def read_rd_auc(path) -> list[RdAucSummary]:
    with open(path, newline="") as f:
        return [RdAucSummary(r["dataset"], r["function"], float(r["mean"]), float(r["se"]), int(r["n_reps"]))
                for r in csv.DictReader(f)]
