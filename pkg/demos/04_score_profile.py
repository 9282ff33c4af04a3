"""Where C-BALD looks on the 1-D synthetic problem.

Trains one network on 200 synthetic rows and prints the mean scores along x.
The censoring threshold crosses the target near x = 1.96, 3.53, 5.11, 6.68
and 8.25; between 3.53 and 5.11 (and 6.68 and 8.25) most rows are censored.
The mi_censor column peaks next to the cross-overs.  The label term can be
negative where the observed and latent heads disagree, which pulls C-BALD
below zero in the tails of the pool distribution.
"""

import numpy as np

from cenal.active_loop import DatasetSpec, ExperimentConfig, score_profile

cfg = ExperimentConfig(dataset=DatasetSpec(n0=10, pool=1000, val=250, test=500))
prof = score_profile(cfg, grid=np.linspace(1.5, 8.5, 29))
names = list(prof.scores)
print("x     " + "".join(f"{n:>10s}" for n in names))
for i, x in enumerate(prof.x):
    print(f"{x:4.2f}  " + "".join(f"{prof.scores[n][i]:10.4f}" for n in names))
