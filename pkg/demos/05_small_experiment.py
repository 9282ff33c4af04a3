"""A small pool-based experiment end to end, with the RD-AUC summary.

Two repetitions of ten acquisition steps is far too few to rank the
functions; it shows the pieces fitting together in a few minutes.
"""

from cenal.active_loop import DatasetSpec, ExperimentConfig, run_experiment
from cenal.report import summarize

cfg = ExperimentConfig(dataset=DatasetSpec(n0=10, pool=300, val=100, test=200),
                       acquisition_size=3, steps=10, repetitions=2, T=10, S=32)
results = run_experiment(cfg)
curves = [r.curve for r in results if r.curve is not None]
for c in curves:
    print(f"{c.function_tag:8s} rep {c.repetition}: " + " ".join(f"{v:.2f}" for v in c.nll))

summaries, mins = summarize(curves)
print("shift m =", mins)
for s in summaries:
    print(f"{s.function_tag:8s} RD-AUC {s.rd_auc_mean:8.2f} +- {s.rd_auc_se:.2f} over {s.n_reps} reps")
