"""Command line entry point: ``cenal generate | run | report``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(including any failed repetition).  ``CENAL_LOG`` sets the log level
(error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .active_loop import (
    ExperimentConfig,
    UnitResult,
    experiment_units,
    read_curves,
    run_experiment,
    score_profile,
    unit_path,
)
from .data import DataError, generate_synthetic, generate_synthetic_test, write_csv
from .neural import ConfigError
from .report import ReportError, summarize, write_reports

log = logging.getLogger("cenal")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("CENAL_LOG", "warn").lower()
    if level not in _LEVELS:
        raise UsageError(f"CENAL_LOG must be one of error|warn|info|debug, got {level!r}")
    logging.basicConfig(level=_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def _read_json(path) -> dict:
    try:
        with open(path) as f:
            d = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return d


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of the fully resolved config."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(config_path, out_path) -> Path:
    """Write synthetic data described by ``{"n": ..., "seed": ..., "test": false}``."""
    d = _read_json(config_path)
    extra = set(d) - {"n", "seed", "test"}
    if extra:
        raise UsageError(f"unknown generate fields {sorted(extra)}")
    n, seed = d.get("n"), d.get("seed", 0)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise UsageError(f"'n' must be a positive integer, got {n!r}")
    if not isinstance(seed, int) or seed < 0:
        raise UsageError(f"'seed' must be a non-negative integer, got {seed!r}")
    gen = generate_synthetic_test if d.get("test", False) else generate_synthetic
    return write_csv(gen(n, seed).to_dataset(), out_path)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def load_config(path, functions=None, steps=None, repetitions=None, seed=None) -> ExperimentConfig:
    d = _read_json(path)
    try:
        cfg = ExperimentConfig.from_dict(d)
        over = {}
        if functions is not None:
            over["functions"] = tuple(f.strip() for f in functions.split(",") if f.strip())
        if steps is not None:
            over["steps"] = steps
        if repetitions is not None:
            over["repetitions"] = repetitions
        if seed is not None:
            over["master_seed"] = seed
        return replace(cfg, **over) if over else cfg
    except (ConfigError, ValueError) as e:
        raise UsageError(f"invalid config: {e}") from None


def _unit_key(fn: str, rep: int) -> str:
    return f"rep{rep:04d}_{fn}"


class Manifest:
    """Run status, persisted to ``manifest.json`` after every unit."""

    def __init__(self, path: Path, cfg: ExperimentConfig):
        self.path = path
        self.data = {"config_hash": config_hash(cfg), "config": cfg.to_dict(), "version": __version__,
                     "created": _now(), "units": {}}

    @classmethod
    def load(cls, path: Path, cfg: ExperimentConfig) -> Manifest:
        m = cls(path, cfg)
        try:
            old = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot resume: unreadable manifest {path}: {e}") from None
        if old.get("config_hash") != m.data["config_hash"]:
            raise UsageError("cannot resume: the config differs from the one in the manifest")
        m.data = old
        return m

    def done(self, curve_dir: Path) -> set[tuple[str, int]]:
        out = set()
        for key, u in self.data["units"].items():
            if u["status"] == "done" and unit_path(curve_dir, u["function"], u["repetition"]).exists():
                out.add((u["function"], u["repetition"]))
        return out

    def record(self, res: UnitResult, curve_dir: Path) -> None:
        self.data["units"][_unit_key(res.function_tag, res.repetition)] = {
            "function": res.function_tag,
            "repetition": res.repetition,
            "status": "done" if res.ok else "failed",
            "error": res.error,
            "finished": _now(),
            "path": str(unit_path(curve_dir, res.function_tag, res.repetition)),
        }
        self.save()

    def save(self) -> None:
        self.data["updated"] = _now()
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

    @property
    def failed(self) -> list[str]:
        return sorted(k for k, u in self.data["units"].items() if u["status"] != "done")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def cmd_run(cfg: ExperimentConfig, out_dir, jobs: int = 1, resume: bool = False,
            profile: bool = False) -> Manifest:
    out_dir = Path(out_dir)
    curve_dir = out_dir / "curves"
    curve_dir.mkdir(parents=True, exist_ok=True)
    mpath = out_dir / "manifest.json"
    if resume and mpath.exists():
        manifest = Manifest.load(mpath, cfg)
    else:
        manifest = Manifest(mpath, cfg)
        manifest.save()
    skip = manifest.done(curve_dir) if resume else set()
    if skip:
        log.info("resuming: %d of %d units already done", len(skip), len(experiment_units(cfg)))
    run_experiment(cfg, curve_dir, jobs=jobs, skip=skip, on_result=lambda r: manifest.record(r, curve_dir))

    if profile and cfg.dataset.kind == "synthetic":
        prof = score_profile(cfg)
        with open(out_dir / "profile.csv", "w", newline="") as f:
            wr = csv.writer(f, lineterminator="\n")
            names = list(prof.scores)
            wr.writerow(["x", *names])
            for i, x in enumerate(prof.x):
                wr.writerow([repr(float(x)), *(repr(float(prof.scores[n][i])) for n in names)])
    return manifest


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_profile(path: Path):
    from .active_loop import ScoreProfile

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    arr = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(names) + 1)
    return ScoreProfile(arr[:, 0], {n: arr[:, i + 1] for i, n in enumerate(names)})


def cmd_report(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    curve_dir = out_dir / "curves"
    files = sorted(curve_dir.glob("rep*.csv")) if curve_dir.is_dir() else []
    curves = [c for p in files for c in read_curves(p)]
    if not curves:
        raise ReportError(f"no learning curves found under {curve_dir}")

    meta = {"software_version": __version__}
    mpath = out_dir / "manifest.json"
    if mpath.exists():
        m = json.loads(mpath.read_text())
        cfg = m.get("config", {})
        meta.update(config_hash=m.get("config_hash"), master_seed=cfg.get("master_seed"))
        expected = cfg.get("repetitions", 0) * len(cfg.get("functions", []))
        n_done = sum(u["status"] == "done" for u in m.get("units", {}).values())
        if n_done < expected:
            log.warning("report covers %d of %d (function, repetition) units", n_done, expected)
        failed = sorted(k for k, u in m.get("units", {}).items() if u["status"] != "done")
        if failed:
            log.warning("failed units excluded: %s", ", ".join(failed))

    summaries, mins = summarize(curves)
    meta["shift_m"] = mins
    prof = _read_profile(out_dir / "profile.csv") if (out_dir / "profile.csv").exists() else None
    return write_reports(curves, summaries, out_dir, profile=prof, metadata=meta)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cenal", description="Active learning benchmarks for censored regression.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    g.add_argument("--config", required=True, help='JSON with "n", "seed" and optional "test"')
    g.add_argument("--out", required=True, help="output CSV path")

    r = sub.add_parser("run", help="run an experiment and write its report")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    r.add_argument("--resume", action="store_true", help="skip units already done in the manifest")
    r.add_argument("--functions", help="comma-separated subset of random,entropy,bald,cbald")
    r.add_argument("--steps", type=_nonneg)
    r.add_argument("--repetitions", type=_positive)
    r.add_argument("--seed", type=_nonneg, help="master seed")
    r.add_argument("--profile", action="store_true",
                   help="also write a score-vs-x profile (synthetic data only)")

    rp = sub.add_parser("report", help="recompute report files from the curves in a run directory")
    rp.add_argument("--out", required=True, help="run directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        if args.command == "generate":
            path = cmd_generate(args.config, args.out)
            print(path)
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config, args.functions, args.steps, args.repetitions, args.seed)
            manifest = cmd_run(cfg, args.out, jobs=args.jobs, resume=args.resume, profile=args.profile)
            try:
                for path in cmd_report(args.out):
                    print(path)
            except ReportError as e:
                log.error("%s", e)
                return EXIT_RUNTIME
            if manifest.failed:
                log.error("failed units: %s", ", ".join(manifest.failed))
                return EXIT_RUNTIME
            return EXIT_OK
        for path in cmd_report(args.out):
            print(path)
        return EXIT_OK
    except UsageError as e:
        print(f"cenal: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ReportError, DataError, OSError, RuntimeError, FloatingPointError) as e:
        print(f"cenal: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
