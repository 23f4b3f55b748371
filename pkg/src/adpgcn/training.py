"""Training loop: Adam, halving learning-rate schedule, early stopping.

Protocol defaults: Adam from 1e-4 with the rate halved at every epoch
boundary (epoch e runs at lr0 * 2**-e), 6 epochs, early-stopping patience 3,
batch size 32, MSE loss. Batch shuffling draws from an RNG stream separate
from parameter initialization so ablation arms share their init.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .data import collate
from .errors import NonFiniteLoss, NonFiniteValue, ShapeMismatch
from .tensor import Tensor, mean, no_grad

SHUFFLE_STREAM = 7_001  # offset separating shuffle draws from model init


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    epochs: int = 6
    patience: int = 3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if min(self.lr0, self.epochs, self.patience, self.batch_size) <= 0:
            raise ValueError("lr0, epochs, patience, batch_size must be positive")
        if self.patience > self.epochs:
            raise ValueError(f"patience {self.patience} > epochs {self.epochs}")

    def learning_rate(self, epoch):
        return self.lr0 * 2.0 ** (-epoch)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Adam:
    """Standard Adam with bias correction over a named parameter dict."""

    def __init__(self, params, cfg):
        self.params = dict(params)
        self.cfg = cfg
        self.moments1 = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.moments2 = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.steps = 0

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr):
        """One update from the gradients currently stored on the parameters."""
        self.steps += 1
        cfg = self.cfg
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif grad.shape != p.data.shape:
                raise ShapeMismatch(f"{name}: grad {grad.shape} vs {p.data.shape}")
            kernels.adam_update(
                p.data, np.ascontiguousarray(grad),
                self.moments1[name], self.moments2[name],
                self.steps, lr, cfg.beta1, cfg.beta2, cfg.eps,
            )


def adam_step(params, grads, state, lr):
    """Functional single step (used by the oracle tests): params/grads are
    name -> array dicts, state holds moments and the step counter."""
    state["t"] += 1
    for name, p in params.items():
        kernels.adam_update(
            p, grads[name], state["m"][name], state["v"][name],
            state["t"], lr, state["beta1"], state["beta2"], state["eps"],
        )


class EarlyStopping:
    """Stop after `patience` consecutive epochs without a new best val loss."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, val_loss, epoch):
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def mse_loss(pred, target):
    if pred.shape != target.shape:
        raise ShapeMismatch(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - Tensor(target)
    return mean(diff * diff)


def clip_gradients(params, max_norm):
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    history: list
    best_state: dict
    best_epoch: int
    best_val_loss: float
    stopped_early: bool = field(default=False)


def _batched_eval_loss(model, samples, batch_size):
    total = 0.0
    count = 0
    model.eval_mode()
    with no_grad():
        for lo in range(0, len(samples), batch_size):
            batch = collate(samples[lo:lo + batch_size])
            pred = model.forward_batch(batch)
            n = pred.size
            total += float(np.sum((pred.data - batch["y"]) ** 2))
            count += n
    return total / count


def train(model, train_samples, val_samples, cfg, log=None):
    """Run the full protocol; returns the best-validation checkpointable state."""
    if not train_samples or not val_samples:
        raise ValueError("train and val datasets must be nonempty")
    params = model.parameters()
    optimizer = Adam(params, cfg)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(cfg.seed, SHUFFLE_STREAM))
    )
    stopper = EarlyStopping(cfg.patience)
    history = []
    best_state = model.state_dict()
    stopped_early = False

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        order = shuffle_rng.permutation(len(train_samples))
        model.train_mode()
        running = 0.0
        seen = 0
        for batch_idx, lo in enumerate(range(0, len(order), cfg.batch_size)):
            chosen = [train_samples[i] for i in order[lo:lo + cfg.batch_size]]
            batch = collate(chosen)
            try:
                pred = model.forward_batch(batch)
                loss = mse_loss(pred, batch["y"])
                optimizer.zero_grad()
                loss.backward()
            except NonFiniteValue as exc:
                raise NonFiniteLoss(epoch, batch_idx, str(exc)) from exc
            if cfg.grad_clip is not None:
                clip_gradients(params, cfg.grad_clip)
            optimizer.step(lr)
            running += loss.item() * len(chosen)
            seen += len(chosen)
        train_loss = running / seen
        val_loss = _batched_eval_loss(model, val_samples, cfg.batch_size)
        history.append(EpochRecord(epoch, lr, train_loss, val_loss))
        if log is not None:
            log(f"epoch {epoch}: lr {lr:.3e} train {train_loss:.6f} val {val_loss:.6f}")
        improved = val_loss < stopper.best
        stop = stopper.update(val_loss, epoch)
        if improved:
            best_state = model.state_dict()
        if stop:
            stopped_early = True
            break

    model.load_state_dict(best_state)
    model.eval_mode()
    return TrainResult(
        history=history,
        best_state=best_state,
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best,
        stopped_early=stopped_early,
    )
