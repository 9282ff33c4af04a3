"""Containers for the five predictive parameters the network emits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEAD_WIDTH = 5


@dataclass
class HeadOutput:
    """One posterior draw's predictive parameters for one input.

    ``mu_star``/``sigma_star`` parameterise the latent (uncensored) target,
    ``mu_obs``/``sigma_obs`` the observed value ``min(y*, z)`` and ``lam`` the
    probability that the observation is uncensored.  Fields may also hold
    equally shaped arrays, in which case the object describes a batch.
    ``lam_logit`` is the pre-squash value when the head came from a network.
    """

    mu_star: float
    sigma_star: float
    mu_obs: float
    sigma_obs: float
    lam: float
    lam_logit: float | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_star) <= 0) or np.any(np.asarray(self.sigma_obs) <= 0):
            raise ValueError("scale parameters must be strictly positive")
        lam = np.asarray(self.lam)
        if np.any((lam < 0) | (lam > 1)):
            raise ValueError("lam must lie in [0, 1]")


_PP_FIELDS = ("mu_star", "sigma_star", "mu_obs", "sigma_obs", "lam")


@dataclass
class PosteriorPredictive:
    """T posterior draws of the head parameters.

    Each field has shape ``(T,)`` for a single input or ``(N, T)`` for a batch
    of N inputs that were pushed through the same T dropout masks.
    """

    mu_star: np.ndarray
    sigma_star: np.ndarray
    mu_obs: np.ndarray
    sigma_obs: np.ndarray
    lam: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        for name in _PP_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        shape = self.mu_star.shape
        if len(shape) == 0 or shape[-1] < 1:
            raise ValueError("a posterior predictive needs at least one draw")
        for name in _PP_FIELDS:
            if getattr(self, name).shape != shape:
                raise ValueError(f"field {name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def from_draws(cls, draws, x=None) -> PosteriorPredictive:
        draws = list(draws)
        return cls(*(np.array([getattr(d, f) for d in draws], dtype=np.float64) for f in _PP_FIELDS), x=x)

    @property
    def T(self) -> int:
        return self.mu_star.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.mu_star.shape[:-1]

    @property
    def draws(self) -> list[HeadOutput]:
        if self.batch_shape:
            raise ValueError("draws is only defined for a single input; index the batch first")
        return [HeadOutput(*(float(getattr(self, f)[t]) for f in _PP_FIELDS)) for t in range(self.T)]

    def __len__(self) -> int:
        return self.mu_star.shape[0] if self.batch_shape else 1

    def __getitem__(self, idx) -> PosteriorPredictive:
        if not self.batch_shape:
            raise IndexError("single-input posterior predictive cannot be indexed")
        x = None if self.x is None else self.x[idx]
        return PosteriorPredictive(*(getattr(self, f)[idx] for f in _PP_FIELDS), x=x)
