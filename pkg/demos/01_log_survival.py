"""Gaussian log-survival in the far tail.

The naive log(1 - Phi(z)) loses the tail once erfc underflows (just past
z = 38); the package keeps full relative accuracy there, which the censored
likelihood depends on for rows far above the predicted mean.
"""

import math

from cenal.prob import GaussianParams, gaussian_log_survival


def naive(z):
    try:
        return math.log(0.5 * math.erfc(z / math.sqrt(2)))
    except ValueError:  # log(0)
        return -math.inf


for z in (0.0, 5.0, 10.0, 20.0, 38.0, 40.0):
    stable = gaussian_log_survival(z, GaussianParams(0.0, 1.0))
    print(f"z = {z:5.1f}   naive {naive(z):14.6f}   stable {stable:14.6f}")
