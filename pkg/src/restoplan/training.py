"""Two-stage trainer: cross-entropy path scheduling, then strength regression.

Stage 1 fits the scheduler on oracle path labels. Stage 2 freezes it and fits
the modulator with the composite reconstruction loss, accumulated per executed
step; within a step the tool output and the incoming image are treated as
constants, so every gradient is analytic and checkable against finite
differences. All updates use Adam under a cosine-annealed learning rate and
are bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .features import PIXEL_DIM, FeatureSet, extract_features
from .metrics import recon_loss, recon_loss_grad
from .planner import ModulatorModel, SchedulerModel, schedule, sigmoid, softmax
from .programs import category_to_path
from .tools import ToolConfig, apply_tool


@dataclass(frozen=True)
class TrainConfig:
    # stage2_lr is sized for desk-scale runs: with a few hundred samples there
    # are only ~100 Adam updates per run, so the per-step movement must be
    # large enough to shape the strength logits within that budget.
    stage1_lr: float = 2e-4
    stage2_lr: float = 2e-2
    lr_floor: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    stage1_epochs: int = 1500
    stage2_epochs: int = 12
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0 < self.lr_floor < min(self.stage1_lr, self.stage2_lr):
            raise ValueError("lr_floor must be positive and below both stage learning rates")
        if self.batch_size < 1 or self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ValueError("batch size and epoch counts must be positive")
        return self

    def to_dict(self) -> dict:
        return {
            "stage1_lr": self.stage1_lr,
            "stage2_lr": self.stage2_lr,
            "lr_floor": self.lr_floor,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "batch_size": self.batch_size,
            "stage1_epochs": self.stage1_epochs,
            "stage2_epochs": self.stage2_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ValueError(f"malformed train config: {exc}") from exc
        return cfg.validate()

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def cosine_lr(step: int, total_steps: int, lr0: float, floor: float) -> float:
    """floor + 0.5*(lr0 - floor)*(1 + cos(pi*t/T)); hits lr0 at step 0, floor at the last step."""
    horizon = max(total_steps - 1, 1)
    t = min(step, horizon)
    return floor + 0.5 * (lr0 - floor) * (1.0 + math.cos(math.pi * t / horizon))


class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays."""

    def __init__(self, params: dict, beta1: float, beta2: float, eps: float):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad * grad
            params[key] -= lr * (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + self.eps)


# --- stage 1: path scheduler -------------------------------------------------


def _scheduler_batch(model: SchedulerModel, feats_std: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and analytic gradients for one standardized batch."""
    hidden = np.tanh(feats_std @ model.w1.T + model.b1)
    logits = hidden @ model.w2.T + model.b2
    probs = softmax(logits)
    n = len(labels)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), labels], 1e-12))))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    grads = {
        "w2": d_logits.T @ hidden,
        "b2": d_logits.sum(axis=0),
    }
    d_hidden = (d_logits @ model.w2) * (1.0 - hidden * hidden)
    grads["w1"] = d_hidden.T @ feats_std
    grads["b1"] = d_hidden.sum(axis=0)
    return loss, grads


def train_stage1(
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    toolbox_size: int = 3,
) -> tuple[SchedulerModel, list[float]]:
    """Fit the scheduler by mini-batch cross-entropy descent.

    Returns the model and the loss curve: full-set cross-entropy before
    training and after each epoch.
    """
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError("empty or malformed training set")
    model = SchedulerModel.create(toolbox_size=toolbox_size, seed=config.seed)
    if labels.min() < 0 or labels.max() >= model.categories:
        raise ValueError(f"labels outside [0, {model.categories})")
    model.feat_mu = features.mean(axis=0)
    model.feat_sd = np.maximum(features.std(axis=0), 1e-8)
    feats_std = model.normalize(features)

    n = len(labels)
    batches_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.stage1_epochs * batches_per_epoch
    rng = np.random.Generator(np.random.PCG64(config.seed))
    opt = Adam(model.params(), config.beta1, config.beta2, config.eps)

    def full_loss() -> float:
        loss, _ = _scheduler_batch(model, feats_std, labels)
        return loss

    curve = [full_loss()]
    step = 0
    for _ in range(config.stage1_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = _scheduler_batch(model, feats_std[idx], labels[idx])
            lr = cosine_lr(step, total_steps, config.stage1_lr, config.lr_floor)
            opt.step(model.params(), grads, lr)
            step += 1
        curve.append(full_loss())
    return model, curve


# --- stage 2: strength modulator ---------------------------------------------


def stage2_forward_frozen(
    model: ModulatorModel,
    feats: FeatureSet,
    category: int,
    degraded: np.ndarray,
    cfg: ToolConfig,
):
    """Run the scheduled path with the current strengths and freeze the per-step context.

    The per-step training objective treats each step's incoming image and tool
    output as constants, so the context (standardized feature planes plus one
    (tool, position, incoming image, residual) tuple per step) fully determines
    the loss as a function of the modulator parameters.
    """
    path = category_to_path(category, model.toolbox_size)
    planes_std = model.normalize_planes(feats.per_pixel)
    steps = []
    current = degraded
    for position, tool in enumerate(path):
        tool_out = apply_tool(tool, current, cfg)
        lam = sigmoid(model.step_logits(planes_std, category, position, int(tool)))
        residual = tool_out - current
        steps.append((int(tool), position, current, residual))
        current = np.clip(current + lam[:, :, None] * residual, 0.0, 1.0)
    return planes_std, steps


def stage2_frozen_loss(
    model: ModulatorModel,
    planes_std: np.ndarray,
    steps,
    category: int,
    clean: np.ndarray,
    mu: float = 0.1,
) -> float:
    """Per-step objective on a frozen forward context (used for finite differences)."""
    total = 0.0
    for tool, position, incoming, residual in steps:
        lam = sigmoid(model.step_logits(planes_std, category, position, tool))
        step_out = np.clip(incoming + lam[:, :, None] * residual, 0.0, 1.0)
        total += recon_loss(step_out, clean, mu)
    return total


def stage2_sample_loss_and_grads(
    model: ModulatorModel,
    feats: FeatureSet,
    category: int,
    degraded: np.ndarray,
    clean: np.ndarray,
    cfg: ToolConfig,
    mu: float = 0.1,
):
    """Per-step reconstruction loss for one sample, with analytic modulator gradients.

    Returns (loss, grads, mean_lambda).
    """
    planes_std, steps = stage2_forward_frozen(model, feats, category, degraded, cfg)
    grads = {
        "weights": np.zeros_like(model.weights),
        "biases": np.zeros_like(model.biases),
        "embed": np.zeros_like(model.embed),
    }
    total_loss = 0.0
    lambda_sum = 0.0
    for tool, position, incoming, residual in steps:
        lam = sigmoid(model.step_logits(planes_std, category, position, tool))
        lambda_sum += float(lam.mean())
        step_out = np.clip(incoming + lam[:, :, None] * residual, 0.0, 1.0)
        loss, d_out = recon_loss_grad(step_out, clean, mu)
        total_loss += loss
        d_lam = (d_out * residual).sum(axis=2)
        d_logit = d_lam * lam * (1.0 - lam)
        w_emb = model.weights[tool, position, PIXEL_DIM:]
        dz_sum = float(d_logit.sum())
        grads["weights"][tool, position, :PIXEL_DIM] += np.tensordot(
            d_logit, planes_std, axes=([0, 1], [0, 1])
        )
        grads["weights"][tool, position, PIXEL_DIM:] += dz_sum * model.embed[category]
        grads["biases"][tool, position] += dz_sum
        grads["embed"][category] += dz_sum * w_emb
    mean_lambda = lambda_sum / len(steps) if steps else 0.0
    return total_loss, grads, mean_lambda


def train_stage2(
    samples,
    scheduler: SchedulerModel,
    config: TrainConfig,
    tool_cfg: ToolConfig,
    mu: float = 0.1,
) -> tuple[ModulatorModel, dict]:
    """Fit the modulator on (degraded, clean) pairs with the scheduler frozen.

    Samples whose scheduled path is empty carry no strength parameters and are
    skipped. Returns the model and diagnostics with per-epoch running loss and
    mean strength curves.
    """
    config.validate()
    prepared = []
    plane_acc = []
    for degraded, clean in samples:
        feats = extract_features(degraded)
        category, _ = schedule(scheduler, feats.pooled)
        if category_to_path(category, scheduler.toolbox_size):
            prepared.append((feats, category, degraded, clean))
            plane_acc.append(feats.per_pixel.reshape(-1, PIXEL_DIM))
    if not prepared:
        raise ValueError("no trainable samples: every scheduled path is empty (or the set is empty)")

    model = ModulatorModel.create(toolbox_size=scheduler.toolbox_size, seed=config.seed)
    stacked = np.concatenate(plane_acc, axis=0)
    model.plane_mu = stacked.mean(axis=0)
    model.plane_sd = np.maximum(stacked.std(axis=0), 1e-8)

    n = len(prepared)
    batches_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.stage2_epochs * batches_per_epoch
    rng = np.random.Generator(np.random.PCG64(config.seed))
    opt = Adam(model.params(), config.beta1, config.beta2, config.eps)

    loss_curve = []
    lambda_curve = []
    step = 0
    for _ in range(config.stage2_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_lambda = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_grads = {k: np.zeros_like(v) for k, v in model.params().items()}
            batch_loss = 0.0
            for i in idx:
                feats, category, degraded, clean = prepared[i]
                loss, grads, mean_lam = stage2_sample_loss_and_grads(
                    model, feats, category, degraded, clean, tool_cfg, mu
                )
                batch_loss += loss
                epoch_lambda += mean_lam
                for key in batch_grads:
                    batch_grads[key] += grads[key]
            scale = 1.0 / len(idx)
            for key in batch_grads:
                batch_grads[key] *= scale
            lr = cosine_lr(step, total_steps, config.stage2_lr, config.lr_floor)
            opt.step(model.params(), batch_grads, lr)
            step += 1
            epoch_loss += batch_loss
        loss_curve.append(epoch_loss / n)
        lambda_curve.append(epoch_lambda / n)
    return model, {"loss_curve": loss_curve, "mean_lambda_curve": lambda_curve}


# --- gradient verification ----------------------------------------------------


def grad_check(
    model: ModulatorModel,
    degraded: np.ndarray,
    clean: np.ndarray,
    category: int,
    tool_cfg: ToolConfig,
    epsilon: float = 1e-5,
    n_params: int = 60,
    seed: int = 0,
    mu: float = 0.1,
) -> float:
    """Max relative error between analytic stage-2 gradients and central differences.

    Differences are taken on the per-step objective itself, i.e. with each
    step's incoming image and tool output frozen at their current values, which
    is exactly the function the analytic gradients differentiate. Samples at
    least `n_params` parameter coordinates, half of them from the parameters
    the scheduled path actually touches. Coordinates where both gradients are
    below 1e-12 count as exact.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-6, 1e-3], got {epsilon}")
    feats = extract_features(degraded)
    path = category_to_path(category, model.toolbox_size)
    if not path:
        raise ValueError("grad_check needs a non-empty scheduled path")
    _, grads, _ = stage2_sample_loss_and_grads(
        model, feats, category, degraded, clean, tool_cfg, mu
    )
    planes_std, steps = stage2_forward_frozen(model, feats, category, degraded, tool_cfg)

    def loss_only() -> float:
        return stage2_frozen_loss(model, planes_std, steps, category, clean, mu)

    params = model.params()
    active: list[tuple[str, int]] = []
    for position, tool in enumerate(path):
        base = (int(tool) * model.weights.shape[1] + position) * model.weights.shape[2]
        active.extend(("weights", base + j) for j in range(model.weights.shape[2]))
        active.append(("biases", int(tool) * model.biases.shape[1] + position))
    active.extend(("embed", category * model.embed_width + j) for j in range(model.embed_width))

    everything = [
        (name, flat) for name, arr in params.items() for flat in range(arr.size)
    ]
    rng = np.random.Generator(np.random.PCG64(seed))
    half = max(n_params // 2, 1)
    picked_active = [active[i] for i in rng.choice(len(active), size=min(half, len(active)), replace=False)]
    picked_any = [everything[i] for i in rng.choice(len(everything), size=n_params - len(picked_active), replace=False)]
    coords = picked_active + picked_any

    worst = 0.0
    for name, flat in coords:
        arr = params[name]
        original = arr.flat[flat]
        arr.flat[flat] = original + epsilon
        loss_plus = loss_only()
        arr.flat[flat] = original - epsilon
        loss_minus = loss_only()
        arr.flat[flat] = original
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grads[name].flat[flat]
        if abs(numeric) < 1e-12 and abs(analytic) < 1e-12:
            continue
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric)))
    return worst
