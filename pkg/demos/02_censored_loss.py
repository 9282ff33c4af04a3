"""The three loss terms for one observed and one censored row."""

from cenal.data import CensoredSample
from cenal.heads import HeadOutput
from cenal.losses import bce_term, censored_nll_term, observed_nll_term, total_loss

h = HeadOutput(mu_star=2.0, sigma_star=0.5, mu_obs=1.8, sigma_obs=0.4, lam=0.7)
rows = [CensoredSample([0.0], 2.3, True), CensoredSample([0.0], 2.3, False)]
for s in rows:
    kind = "observed" if s.l else "censored at"
    print(f"{kind:12s} y = {s.y}:  censored NLL {censored_nll_term(h, s):.4f}  "
          f"observed NLL {observed_nll_term(h, s):.4f}  BCE {bce_term(h, s):.4f}")

# a censored row contributes -log S(z) only, so a higher threshold costs more
for z in (1.0, 2.0, 3.0, 4.0):
    print(f"censored at z = {z}: {censored_nll_term(h, CensoredSample([0.0], z, False)):.4f}")

print(total_loss([(h, s) for s in rows]))
