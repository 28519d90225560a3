"""Contrastive divergence training and quantization-oriented retraining."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .circuits import Dataset
from .model import Rbm
from .quantize import QuantGrid

log = logging.getLogger(__name__)

Validator = Callable[[Rbm], float]


@dataclass(frozen=True)
class TrainConfig:
    cd_k: int = 1
    learning_rate: float = 0.05
    batch_size: int = 16
    epochs: int = 100
    max_weight: float | None = None
    # the constraint also bounds biases so they fit the same grid
    clip_biases: bool = True
    quant_lambda_schedule: tuple[tuple[int, float], ...] = ()
    quant_rate: float | None = None
    momentum: float = 0.0
    seed: int = 0
    validation: Validator | None = field(default=None, compare=False)
    # checkpoint keeps the best validation score; ties keep the earlier one
    validate_every: int = 1

    def __post_init__(self):
        if self.learning_rate < 0 or self.cd_k < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training configuration")
        lams = [lam for _, lam in self.quant_lambda_schedule]
        if any(l < 0 for l in lams) or any(b < a for a, b in zip(lams, lams[1:])):
            raise ValueError("lambda schedule must be non-negative and non-decreasing")
        epochs = [e for e, _ in self.quant_lambda_schedule]
        if epochs != sorted(epochs):
            raise ValueError("lambda schedule epochs must be sorted")

    def lam(self, epoch: int) -> float:
        """Quantization weight in force at ``epoch`` (step function of the schedule)."""
        value = 0.0
        for e, lam in self.quant_lambda_schedule:
            if e <= epoch:
                value = lam
        return value


def geometric_lambda_schedule(epochs: int, lam_max: float, steps: int = 8,
                              lam_min: float | None = None) -> tuple[tuple[int, float], ...]:
    """Geometric ramp of lambda across the final third of training."""
    start = epochs - max(1, epochs // 3)
    lam_min = lam_max / 2 ** (steps - 1) if lam_min is None else lam_min
    lams = np.geomspace(lam_min, lam_max, steps)
    at = np.linspace(start, max(start, epochs - 1), steps).round().astype(int)
    return tuple((int(e), float(l)) for e, l in zip(at, lams))


def init_rbm(n_visible: int, n_hidden: int, labels: Sequence[str] = (), seed=0,
             std: float = 0.01) -> Rbm:
    rng = np.random.default_rng(seed)
    return Rbm(rng.normal(0.0, std, (n_visible, n_hidden)), np.zeros(n_visible),
               np.zeros(n_hidden), tuple(labels))


class _Params:
    """Mutable parameter copy used inside the training loop."""

    def __init__(self, model: Rbm):
        self.W = model.weights.copy()
        self.b = model.visible_bias.copy()
        self.a = model.hidden_bias.copy()
        self.labels = model.visible_labels
        self.vel = [np.zeros_like(self.W), np.zeros_like(self.b), np.zeros_like(self.a)]

    def freeze(self) -> Rbm:
        return Rbm(self.W.copy(), self.b.copy(), self.a.copy(), self.labels)


def _cd_gradient(p: _Params, v0: np.ndarray, k: int, rng: np.random.Generator):
    ph0 = expit(v0 @ p.W + p.a)
    h = (rng.random(ph0.shape) < ph0).astype(np.float64)
    vk = v0
    phk = ph0
    for step in range(k):
        pv = expit(h @ p.W.T + p.b)
        vk = (rng.random(pv.shape) < pv).astype(np.float64)
        phk = expit(vk @ p.W + p.a)
        if step < k - 1:
            h = (rng.random(phk.shape) < phk).astype(np.float64)
    n = v0.shape[0]
    gW = (v0.T @ ph0 - vk.T @ phk) / n
    gb = (v0 - vk).mean(axis=0)
    ga = (ph0 - phk).mean(axis=0)
    return gW, gb, ga, float(np.mean((v0 - vk) ** 2))


def _quant_pull(x: np.ndarray, grid: QuantGrid, rate: float) -> np.ndarray:
    """Subgradient step on -|x - Q(x)|, capped so no entry overshoots Q(x)."""
    target = grid.to_real(grid.to_int(x))
    diff = x - target
    return -np.sign(diff) * np.minimum(rate, np.abs(diff))


def _apply_update(p: _Params, batch: np.ndarray, config: TrainConfig, rng,
                  grid: QuantGrid | None, lam: float) -> float:
    v0 = batch.astype(np.float64)
    gW, gb, ga, recon = _cd_gradient(p, v0, config.cd_k, rng)
    eps = config.learning_rate
    for i, (param, grad) in enumerate(((p.W, gW), (p.b, gb), (p.a, ga))):
        vel = p.vel[i]
        vel *= config.momentum
        vel += eps * grad
        param += vel
    if grid is not None and lam > 0:
        rate = (config.quant_rate if config.quant_rate is not None else eps) * lam
        for param in (p.W, p.b, p.a):
            param += _quant_pull(param, grid, rate)
    if config.max_weight is not None:
        m = config.max_weight
        np.clip(p.W, -m, m, out=p.W)
        if config.clip_biases:
            np.clip(p.b, -m, m, out=p.b)
            np.clip(p.a, -m, m, out=p.a)
    return recon


def cd_update(model: Rbm, batch, config: TrainConfig, rng=None,
              grid: QuantGrid | None = None, lam: float = 0.0) -> Rbm:
    """One CD-k step on ``batch`` (rows of visible vectors)."""
    rows = batch.rows if isinstance(batch, Dataset) else np.asarray(batch)
    if rows.shape[0] == 0:
        raise ValueError("empty batch")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p = _Params(model)
    _apply_update(p, np.atleast_2d(rows), config, rng, grid, lam)
    return p.freeze()


@dataclass
class TrainResult:
    model: Rbm
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    final: Rbm | None = None

    def write_log(self, path, config: dict | None = None) -> None:
        write_training_log(path, self.log, config)


def write_training_log(path, rows: list[dict], config: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if config:
            for k, v in config.items():
                fh.write(f"# {k}={v}\n")
        writer = csv.DictWriter(fh, fieldnames=["epoch", "reconstruction", "p_correct", "lambda"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def train(model: Rbm, data: Dataset | np.ndarray | Callable[[int], Dataset], config: TrainConfig,
          grid: QuantGrid | None = None) -> TrainResult:
    """Mini-batch CD training with per-epoch validation and best checkpointing.

    ``data`` may be a callable ``epoch -> Dataset`` to resample large tables
    every epoch.
    """
    rng = np.random.default_rng(config.seed)
    p = _Params(model)
    history: list[dict] = []
    validate = config.validation
    best_score = validate(model) if validate else None
    best, best_epoch = model, 0
    history.append({"epoch": 0, "reconstruction": "", "p_correct": "" if best_score is None else best_score,
                    "lambda": config.lam(0) if grid is not None else 0.0})
    for epoch in range(1, config.epochs + 1):
        ds = data(epoch) if callable(data) else data
        rows = ds.rows if isinstance(ds, Dataset) else np.atleast_2d(np.asarray(ds, dtype=np.uint8))
        if rows.shape[1] != model.n_visible:
            raise ValueError("dataset width does not match model")
        lam = config.lam(epoch) if grid is not None else 0.0
        order = rng.permutation(rows.shape[0])
        recon = []
        for start in range(0, rows.shape[0], config.batch_size):
            batch = rows[order[start:start + config.batch_size]]
            recon.append(_apply_update(p, batch, config, rng, grid, lam))
        entry = {"epoch": epoch, "reconstruction": float(np.mean(recon)), "p_correct": "", "lambda": lam}
        if validate and (epoch % config.validate_every == 0 or epoch == config.epochs):
            current = p.freeze()
            score = validate(current)
            entry["p_correct"] = score
            if score > best_score:
                best_score, best, best_epoch = score, current, epoch
        history.append(entry)
    final = p.freeze() if config.epochs else model
    if not validate:
        best, best_epoch = final, config.epochs
    log.debug("trained %d epochs, best epoch %d score %s", config.epochs, best_epoch, best_score)
    return TrainResult(best, history, best_epoch, final)


def quant_aware_retrain(model: Rbm, data, config: TrainConfig, grid: QuantGrid) -> TrainResult:
    """CD training plus an L1 pull of every parameter towards its grid value."""
    if not config.quant_lambda_schedule:
        raise ValueError("quantization retraining needs a lambda schedule")
    return train(model, data, config, grid=grid)


def with_max_weight(config: TrainConfig, max_weight: float, **changes) -> TrainConfig:
    return replace(config, max_weight=max_weight, **changes)
