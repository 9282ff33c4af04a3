"""C-BALD, BALD and the entropy baseline on hand-made posterior draws.

Disagreement about the censoring probability alone is invisible to BALD,
which looks at the latent head only, but C-BALD picks it up through its
censoring term.
"""

import numpy as np

from cenal.acquisition import bald_score, cbald_score, entropy_baseline_score, mi_censor, mi_label
from cenal.heads import PosteriorPredictive


def pp(draws):
    return PosteriorPredictive(*np.array(draws, dtype=float).T)


cases = {
    "agreeing draws": [(0, 1, 0, 1, 0.5)] * 2,
    "disagree on mean": [(-1, 1, -1, 1, 0.9), (1, 1, 1, 1, 0.9)],
    "disagree on censoring": [(0, 1, 0, 1, 0.1), (0, 1, 0, 1, 0.9)],
}
S = 50_000
for name, draws in cases.items():
    p = pp(draws)
    rng = lambda: np.random.default_rng(0)  # noqa: E731  same samples for every score
    print(f"{name:24s} entropy {entropy_baseline_score(p):.3f}  BALD {bald_score(p, S, rng()):.3f}  "
          f"C-BALD {cbald_score(p, S, rng()):.3f}  (label {mi_label(p, S, rng()):.3f}, "
          f"censor {mi_censor(p):.3f})")
