"""Toy end-to-end training of one block on a denoising task.

Inputs are smooth multi-channel signals (a few random sinusoids per channel)
plus white noise; the target is a centred moving average of the noisy input,
which needs context from both sides of each token. Loss is the mean squared
error of ``block_forward(p, x)`` against the target, minimised with Adam on
the hand-written block gradients.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .blocks import block_backward, block_forward, init_block, named_arrays, with_arrays
from .config import TrainConfig
from .errors import DivergedLoss, NonFiniteError, NonPositiveDelta
from .numeric import make_rng


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average along time with edge replication."""
    half = window // 2
    padded = np.concatenate([np.repeat(x[:1], half, axis=0), x, np.repeat(x[-1:], half, axis=0)])
    csum = np.cumsum(np.concatenate([np.zeros((1, x.shape[1])), padded]), axis=0)
    return (csum[window:] - csum[:-window]) / window


def make_task(cfg: TrainConfig, rng: np.random.Generator):
    t = np.arange(cfg.length)[:, None]
    xs, ys = [], []
    for _ in range(cfg.batch):
        clean = np.zeros((cfg.length, cfg.d_model))
        for _ in range(3):
            freq = rng.uniform(0.02, 0.15, cfg.d_model)
            phase = rng.uniform(0, 2 * np.pi, cfg.d_model)
            amp = rng.uniform(0.3, 1.0, cfg.d_model)
            clean += amp * np.sin(2 * np.pi * freq * t + phase)
        x = clean + cfg.noise * rng.normal(size=clean.shape)
        xs.append(x)
        ys.append(moving_average(x, cfg.window))
    return xs, ys


def loss_and_grads(p, xs, ys):
    total = 0.0
    grads = None
    n = sum(x.size for x in xs)
    for x, y in zip(xs, ys):
        err = block_forward(p, x) - y
        total += float((err * err).sum())
        _, g = block_backward(p, x, 2.0 * err / n)
        g = named_arrays(g)
        grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
    return total / n, grads


def toy_train(cfg: TrainConfig) -> list[float]:
    """Return the loss before training followed by the loss after every step."""
    rng = make_rng(cfg.seed)
    p = init_block(cfg.block, cfg.d_model, cfg.expand, cfg.d_state, seed=cfg.seed)
    xs, ys = make_task(cfg, rng)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in named_arrays(p).items()}
    v2 = {k: np.zeros_like(v) for k, v in named_arrays(p).items()}
    loss, grads = loss_and_grads(p, xs, ys)
    losses = [loss]
    for step in range(1, cfg.steps + 1):
        arrays = named_arrays(p)
        new = {}
        for k, g in grads.items():
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v2[k] = beta2 * v2[k] + (1 - beta2) * g * g
            mhat = m[k] / (1 - beta1 ** step)
            vhat = v2[k] / (1 - beta2 ** step)
            new[k] = arrays[k] - cfg.lr * mhat / (np.sqrt(vhat) + eps)
        p = with_arrays(p, new)
        try:
            loss, grads = loss_and_grads(p, xs, ys)
        except (NonFiniteError, NonPositiveDelta, FloatingPointError) as exc:
            raise DivergedLoss(f"{cfg.block}: non-finite values at step {step} ({exc})") from None
        if not np.isfinite(loss):
            raise DivergedLoss(f"{cfg.block}: loss became {loss} at step {step}")
        losses.append(loss)
    return losses


def write_loss_csv(losses: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, loss in enumerate(losses):
            w.writerow([i, repr(loss)])
