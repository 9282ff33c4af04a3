"""Feed-forward network with five distributional heads, MC-dropout posterior
sampling, hand-written back-propagation and Adam.

Weights live in one flat float64 vector; per-layer ``(W, b)`` pairs are views
into it so the optimiser can work on the flat vector directly.  Layer
matrices are stored ``(fan_in, fan_out)`` and inputs are row-major batches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.special import ndtr

from .data import Dataset
from .heads import HEAD_WIDTH, HeadOutput, PosteriorPredictive
from .losses import censored_nll_mean, total_loss_raw
from .prob import SIGMA_FLOOR, sigmoid, softplus_array

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "gelu")


class ConfigError(ValueError):
    pass


class TrainingError(FloatingPointError):
    """Non-finite loss, gradient or validation score during training."""

    def __init__(self, message: str, sample_index: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_layers: int = 3
    hidden_units: int = 128
    dropout_p: float = 0.25
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if self.hidden_layers < 1 or self.hidden_units < 1:
            raise ConfigError("hidden_layers and hidden_units must be positive")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.hidden_units] * self.hidden_layers + [HEAD_WIDTH]

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum((a + 1) * b for a, b in zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    max_epochs: int = 1000
    patience: int = 10
    # None: full batch up to 1024 rows, minibatches of 256 beyond
    batch_size: int | None = 16
    seed: int = 0
    # an epoch is one pass over the data but at least this many steps, so
    # that patience means something on a handful of rows
    min_epoch_steps: int = 50

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.max_epochs < 1 or self.patience < 0 or self.min_epoch_steps < 1:
            raise ConfigError("max_epochs and min_epoch_steps must be >= 1 and patience >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")

    def resolved_batch_size(self, n: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= 1024 else 256


class Weights:
    """Network parameters: a flat vector with per-layer views."""

    def __init__(self, cfg: NetworkConfig, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (cfg.n_params,):
            raise ConfigError(f"expected {cfg.n_params} parameters, got shape {flat.shape}")
        self.cfg = cfg
        self.flat = flat
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        dims = cfg.layer_dims
        off = 0
        for a, b in zip(dims[:-1], dims[1:]):
            W = flat[off: off + a * b].reshape(a, b)
            off += a * b
            bias = flat[off: off + b]
            off += b
            self.layers.append((W, bias))

    def copy(self) -> Weights:
        return Weights(self.cfg, self.flat.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Weights) and self.cfg == other.cfg and np.array_equal(self.flat, other.flat)

    def __repr__(self) -> str:
        return f"Weights({self.cfg.layer_dims}, n_params={self.cfg.n_params})"


def init_weights(cfg: NetworkConfig) -> Weights:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(cfg.init_seed)
    parts = []
    dims = cfg.layer_dims
    for a, b in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(a)
        parts.append(rng.uniform(-bound, bound, size=a * b))
        parts.append(rng.uniform(-bound, bound, size=b))
    return Weights(cfg, np.concatenate(parts))


# ---------------------------------------------------------------------------
# dropout masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DropoutMask:
    """Keep multipliers for each hidden layer, entries in {0, 1/(1-p)}.

    Each entry of ``keep`` has shape ``(units,)`` (one mask shared by every
    input, as used for posterior draws) or ``(N, units)`` (one row per input).
    """

    keep: tuple[np.ndarray, ...]
    draw_id: int = 0


def draw_mask(cfg: NetworkConfig, rng: np.random.Generator, n_rows: int | None = None,
              draw_id: int = 0) -> DropoutMask:
    p = cfg.dropout_p
    scale = 1.0 / (1.0 - p)
    shape = (cfg.hidden_units,) if n_rows is None else (n_rows, cfg.hidden_units)
    keep = tuple(np.where(rng.random(shape) >= p, scale, 0.0) for _ in range(cfg.hidden_layers))
    return DropoutMask(keep, draw_id)


def all_keep_mask(cfg: NetworkConfig) -> DropoutMask:
    return DropoutMask(tuple(np.ones(cfg.hidden_units) for _ in range(cfg.hidden_layers)))


def draw_masks(cfg: NetworkConfig, T: int, seed) -> list[DropoutMask]:
    """T consistent masks, deterministic in ``seed``."""
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    rng = np.random.default_rng(seed)
    return [draw_mask(cfg, rng, draw_id=t) for t in range(T)]


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z * ndtr(z)


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return ndtr(z) + z * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _check_input(w: Weights, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != w.cfg.input_dim:
        raise ValueError(f"input has shape {X.shape}, network expects (*, {w.cfg.input_dim})")
    return X


def _stack_keep(masks: Sequence[DropoutMask], layer: int) -> np.ndarray:
    return np.stack([m.keep[layer] for m in masks])[:, None, :]


def forward_raw(w: Weights, X, mask: DropoutMask | Sequence[DropoutMask] | None = None) -> np.ndarray:
    """Raw head outputs.

    ``mask`` may be None (expectation network), one mask (shape ``(N, 5)``
    result) or a sequence of T masks (shape ``(T, N, 5)``: every input under
    every mask, the same mask for all inputs of a draw).
    """
    X = _check_input(w, X)
    kind = w.cfg.activation
    multi = mask is not None and not isinstance(mask, DropoutMask)
    h = X
    for i, (W, b) in enumerate(w.layers[:-1]):
        h = _act(h @ W + b, kind)
        if multi:
            h = h * _stack_keep(mask, i)
        elif mask is not None:
            h = h * mask.keep[i]
    W, b = w.layers[-1]
    return h @ W + b


def heads_from_raw(out) -> HeadOutput:
    """Apply the head transforms; fields keep the leading shape of ``out``."""
    out = np.asarray(out, dtype=np.float64)
    return HeadOutput(
        mu_star=out[..., 0],
        sigma_star=np.maximum(softplus_array(out[..., 1]), SIGMA_FLOOR),
        mu_obs=out[..., 2],
        sigma_obs=np.maximum(softplus_array(out[..., 3]), SIGMA_FLOOR),
        lam=sigmoid(out[..., 4]),
        lam_logit=out[..., 4],
    )


def forward(w: Weights, mask: DropoutMask | None, x) -> HeadOutput:
    """Head parameters for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes one feature vector; use forward_raw for batches")
    out = forward_raw(w, x[None, :], mask)[0]
    h = heads_from_raw(out)
    return HeadOutput(*(float(v) for v in (h.mu_star, h.sigma_star, h.mu_obs, h.sigma_obs, h.lam, h.lam_logit)))


LossFn = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def value_and_grad(loss_fn: LossFn, w: Weights, X, y, l, mask: DropoutMask | None) -> tuple[float, np.ndarray]:
    """Mean batch loss and its exact gradient as a flat vector.

    ``loss_fn(out, y, l)`` returns per-row losses and their gradient with
    respect to the raw outputs ``out``.
    """
    X = _check_input(w, X)
    kind = w.cfg.activation
    pre, post = [], [X]
    h = X
    for i, (W, b) in enumerate(w.layers[:-1]):
        z = h @ W + b
        h = _act(z, kind)
        if mask is not None:
            h = h * mask.keep[i]
        pre.append(z)
        post.append(h)
    W, b = w.layers[-1]
    out = h @ W + b

    vals, g_out = loss_fn(out, y, l)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise TrainingError(f"non-finite loss {vals[i]} at sample {i}", sample_index=i)
    n = len(vals)
    delta = g_out / n

    grads = []
    for layer in range(len(w.layers) - 1, -1, -1):
        W, _ = w.layers[layer]
        a_in = post[layer]
        grads.append((a_in.T @ delta, delta.sum(axis=0)))
        if layer == 0:
            break
        delta = delta @ W.T
        if mask is not None:
            delta = delta * mask.keep[layer - 1]
        delta = delta * _act_grad(pre[layer - 1], kind)
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return float(vals.mean()), flat


def grad(loss_fn: LossFn, w: Weights, batch, mask: DropoutMask | None) -> Weights:
    """Gradient of the mean loss over ``batch`` (samples or a Dataset).

    Returned in the same layout as the weights, so ``g.layers`` gives the
    per-layer pieces.
    """
    data = Dataset.coerce(batch)
    if len(data) == 0:
        raise ValueError("grad needs a non-empty batch")
    _, g = value_and_grad(loss_fn, w, data.X, data.y, data.l, mask)
    return Weights(w.cfg, g)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(np.zeros(n), np.zeros(n))


@numba.njit(cache=True, error_model="numpy")
def _adam_update(flat, g, m, v, t, lr, b1, b2, eps):
    """One in-place Adam update of ``flat``, ``m`` and ``v`` (``t`` is 1-based)."""
    c1 = lr / (1.0 - b1 ** t)
    c2 = 1.0 / math.sqrt(1.0 - b2 ** t)
    for i in range(flat.shape[0]):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        flat[i] -= c1 * m[i] / (math.sqrt(v[i]) * c2 + eps)


def adam_step(w: Weights, g, state: AdamState, lr: float) -> tuple[Weights, AdamState]:
    g = g.flat if isinstance(g, Weights) else np.asarray(g, dtype=np.float64)
    if g.shape != w.flat.shape:
        raise ValueError("gradient and weights differ in shape")
    if not np.all(np.isfinite(g)):
        raise TrainingError("non-finite gradient")
    flat, m, v = w.flat.copy(), state.m.copy(), state.v.copy()
    t = state.t + 1
    _adam_update(flat, g, m, v, t, lr, state.beta1, state.beta2, state.eps)
    return Weights(w.cfg, flat), AdamState(m, v, t, state.beta1, state.beta2, state.eps)


class _Adam:
    """Mutable Adam used inside the training loop; same arithmetic as adam_step."""

    def __init__(self, n: int, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps

    def step(self, flat: np.ndarray, g: np.ndarray) -> None:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
        self.t += 1
        _adam_update(flat, g, self.m, self.v, self.t, self.lr, self.b1, self.b2, self.eps)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainHistory:
    val_nll: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def evaluate_censored_nll(w: Weights, data: Dataset) -> float:
    """Mean censored NLL of ``data`` under the expectation network."""
    return censored_nll_mean(forward_raw(w, data.X), data.y, data.l)


def train(train_data, val_data, cfg: NetworkConfig, topt: TrainConfig,
          history: TrainHistory | None = None) -> Weights:
    """Adam on the summed loss with early stopping on validation censored NLL.

    Per-row dropout masks are drawn fresh for every gradient step.  Returns
    the snapshot with the best validation score.
    """
    tr = Dataset.coerce(train_data)
    va = Dataset.coerce(val_data)
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if history is None:
        history = TrainHistory()
    rng = np.random.default_rng(topt.seed)
    w = init_weights(cfg)
    opt = _Adam(cfg.n_params, topt.lr)
    bs = topt.resolved_batch_size(len(tr))
    use_dropout = cfg.dropout_p > 0

    n = len(tr)
    steps_per_epoch = max(-(-n // bs), topt.min_epoch_steps)
    order, pos = np.arange(n), n
    best, best_nll, wait, bad_streak = w, math.inf, 0, 0
    for epoch in range(topt.max_epochs):
        for _ in range(steps_per_epoch):
            if pos + bs > n:
                # reshuffle once the current permutation cannot fill a batch
                order = rng.permutation(n) if bs < n else order
                pos = 0
            idx = order[pos: pos + bs]
            pos += bs
            mask = draw_mask(cfg, rng, n_rows=len(idx)) if use_dropout else None
            loss, g = value_and_grad(total_loss_raw, w, tr.X[idx], tr.y[idx], tr.l[idx], mask)
            opt.step(w.flat, g)
        history.train_loss.append(loss)

        nll = evaluate_censored_nll(w, va)
        history.val_nll.append(nll)
        if not math.isfinite(nll):
            bad_streak += 1
            if bad_streak >= max(topt.patience, 1):
                raise TrainingError(f"validation NLL non-finite for {bad_streak} epochs")
        else:
            bad_streak = 0
        if nll < best_nll:
            best, best_nll, wait = w.copy(), nll, 0
            history.best_epoch = epoch
        else:
            wait += 1
        if wait >= topt.patience:
            break
    log.debug("trained %d epochs, best epoch %d, val nll %.4f", epoch + 1, history.best_epoch, best_nll)
    return best


# ---------------------------------------------------------------------------
# posterior sampling
# ---------------------------------------------------------------------------


def posterior_heads(w: Weights, X, masks: Sequence[DropoutMask], chunk: int = 4096) -> PosteriorPredictive:
    """Heads for every input under every mask, fields shaped ``(N, T)``."""
    X = _check_input(w, X)
    outs = [forward_raw(w, X[i: i + chunk], masks) for i in range(0, len(X), chunk)]
    raw = np.concatenate(outs, axis=1).transpose(1, 0, 2)
    h = heads_from_raw(raw)
    return PosteriorPredictive(h.mu_star, h.sigma_star, h.mu_obs, h.sigma_obs, h.lam, x=X)


def sample_posterior(w: Weights, x, T: int, seed) -> PosteriorPredictive:
    """T MC-dropout draws of the head parameters for one input."""
    masks = draw_masks(w.cfg, T, seed)
    return posterior_heads(w, np.asarray(x, dtype=np.float64)[None, :], masks)[0]
