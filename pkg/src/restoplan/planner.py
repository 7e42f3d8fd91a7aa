"""Planner models: the path scheduler, the strength modulator, and their file format.

The scheduler is a two-layer tanh classifier over pooled degradation features.
The modulator holds one affine map per (tool, step position) acting on
standardized per-pixel features concatenated with a learned category
embedding; a logistic squashing keeps every strength strictly inside (0, 1).
Model files are a single binary container: magic, a canonical JSON header,
then the parameter arrays as little-endian float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .features import FEATURE_SPEC_HASH, PIXEL_DIM, POOLED_DIM, FeatureSet, extract_features
from .programs import (
    RestorationProgram,
    category_to_path,
    execute,
    num_categories,
)
from .tools import ToolConfig

HIDDEN_WIDTH = 32
EMBED_WIDTH = 8
_MAGIC = b"RSTPLAN1"
_LOGIT_CLIP = 30.0  # keeps the logistic strictly inside (0, 1) in float64


class ModelFormatError(ValueError):
    """Unreadable or incompatible model file."""


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -_LOGIT_CLIP, _LOGIT_CLIP)))


@dataclass
class SchedulerModel:
    """Two-layer feed-forward path classifier with stored feature normalization."""

    w1: np.ndarray  # (hidden, D)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (C, hidden)
    b2: np.ndarray  # (C,)
    feat_mu: np.ndarray  # (D,)
    feat_sd: np.ndarray  # (D,)
    toolbox_size: int = 3

    @classmethod
    def create(cls, toolbox_size: int = 3, hidden: int = HIDDEN_WIDTH,
               seed: int = 0, init_scale: float = 1e-2) -> "SchedulerModel":
        rng = np.random.Generator(np.random.PCG64(seed))
        c = num_categories(toolbox_size)
        return cls(
            w1=init_scale * rng.standard_normal((hidden, POOLED_DIM)),
            b1=np.zeros(hidden),
            w2=init_scale * rng.standard_normal((c, hidden)),
            b2=np.zeros(c),
            feat_mu=np.zeros(POOLED_DIM),
            feat_sd=np.ones(POOLED_DIM),
            toolbox_size=toolbox_size,
        )

    @property
    def categories(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def normalize(self, pooled: np.ndarray) -> np.ndarray:
        return (pooled - self.feat_mu) / self.feat_sd

    def forward(self, pooled: np.ndarray):
        """Logits and the hidden activation for one pooled feature vector."""
        if pooled.shape[-1] != self.w1.shape[1]:
            raise ValueError(
                f"feature dimension {pooled.shape[-1]} does not match model ({self.w1.shape[1]})"
            )
        x = self.normalize(pooled)
        hidden = np.tanh(x @ self.w1.T + self.b1)
        return hidden @ self.w2.T + self.b2, hidden


def schedule(model: SchedulerModel, pooled: np.ndarray) -> tuple[int, np.ndarray]:
    """Most probable path category plus the full softmax vector (lowest index on ties)."""
    logits, _ = model.forward(np.asarray(pooled, dtype=np.float64))
    probs = softmax(logits)
    return int(np.argmax(probs)), probs


@dataclass
class ModulatorModel:
    """Per-(tool, step) affine strength predictor conditioned on a category embedding."""

    weights: np.ndarray  # (tools, positions, PIXEL_DIM + embed)
    biases: np.ndarray  # (tools, positions)
    embed: np.ndarray  # (C, embed)
    plane_mu: np.ndarray  # (PIXEL_DIM,)
    plane_sd: np.ndarray  # (PIXEL_DIM,)
    toolbox_size: int = 3

    @classmethod
    def create(cls, toolbox_size: int = 3, embed_width: int = EMBED_WIDTH,
               seed: int = 0, embed_scale: float = 0.1) -> "ModulatorModel":
        rng = np.random.Generator(np.random.PCG64(seed))
        c = num_categories(toolbox_size)
        return cls(
            weights=np.zeros((toolbox_size, toolbox_size, PIXEL_DIM + embed_width)),
            biases=np.zeros((toolbox_size, toolbox_size)),
            embed=embed_scale * rng.standard_normal((c, embed_width)),
            plane_mu=np.zeros(PIXEL_DIM),
            plane_sd=np.ones(PIXEL_DIM),
            toolbox_size=toolbox_size,
        )

    @property
    def embed_width(self) -> int:
        return self.embed.shape[1]

    @property
    def categories(self) -> int:
        return self.embed.shape[0]

    def params(self) -> dict:
        return {"weights": self.weights, "biases": self.biases, "embed": self.embed}

    def normalize_planes(self, per_pixel: np.ndarray) -> np.ndarray:
        return (per_pixel - self.plane_mu) / self.plane_sd

    def step_logits(self, planes_std: np.ndarray, category: int, position: int, tool: int):
        """Pre-squash logit map for one scheduled step."""
        w = self.weights[tool, position]
        w_feat, w_emb = w[:PIXEL_DIM], w[PIXEL_DIM:]
        offset = float(w_emb @ self.embed[category]) + float(self.biases[tool, position])
        return np.tensordot(planes_std, w_feat, axes=([2], [0])) + offset


def modulate(model: ModulatorModel, feats: FeatureSet, category: int) -> list[np.ndarray]:
    """One strength map per step of the category's path; values strictly in (0, 1)."""
    if not 0 <= category < model.categories:
        raise ValueError(f"category {category} out of range for {model.categories}")
    if feats.per_pixel.shape[-1] != PIXEL_DIM:
        raise ValueError(
            f"pixel feature dimension {feats.per_pixel.shape[-1]} does not match {PIXEL_DIM}"
        )
    path = category_to_path(category, model.toolbox_size)
    planes_std = model.normalize_planes(feats.per_pixel)
    return [
        sigmoid(model.step_logits(planes_std, category, position, int(tool)))
        for position, tool in enumerate(path)
    ]


def plan(scheduler: SchedulerModel, modulator: ModulatorModel, img: np.ndarray) -> RestorationProgram:
    """Perception stage: features -> scheduled path -> strength maps."""
    feats = extract_features(img)
    category, _ = schedule(scheduler, feats.pooled)
    maps = modulate(modulator, feats, category)
    return RestorationProgram(path=category_to_path(category, scheduler.toolbox_size), maps=maps)


def run_agent(scheduler: SchedulerModel, modulator: ModulatorModel,
              img: np.ndarray, cfg: ToolConfig):
    """Plan then execute; returns (final image, program, trace)."""
    program = plan(scheduler, modulator, img)
    out, trace = execute(img, program, cfg)
    return out, program, trace


# --- model container I/O ---------------------------------------------------

_SCHEDULER_ARRAYS = ("w1", "b1", "w2", "b2", "feat_mu", "feat_sd")
_MODULATOR_ARRAYS = ("weights", "biases", "embed", "plane_mu", "plane_sd")


def _array_fields(model) -> dict:
    return {
        f.name: getattr(model, f.name)
        for f in fields(model)
        if isinstance(getattr(model, f.name), np.ndarray)
    }


def save_model(model, path) -> None:
    """Serialize a scheduler or modulator to the versioned binary container."""
    if isinstance(model, SchedulerModel):
        kind, names = "scheduler", _SCHEDULER_ARRAYS
        extra = {"hidden_width": int(model.w1.shape[0])}
    elif isinstance(model, ModulatorModel):
        kind, names = "modulator", _MODULATOR_ARRAYS
        extra = {"embedding_width": int(model.embed_width)}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    arrays = _array_fields(model)
    header = {
        "format_version": 1,
        "model_kind": kind,
        "feature_spec_hash": FEATURE_SPEC_HASH,
        "toolbox_size": int(model.toolbox_size),
        "num_categories": int(model.categories),
        "pooled_dim": POOLED_DIM,
        "pixel_dim": PIXEL_DIM,
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
        **extra,
    }
    blob = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)


def _load_container(path, expected_kind: str):
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC) + 1)
            if magic != _MAGIC + b"\n":
                raise ModelFormatError(f"{path} is not a model file")
            header = json.loads(fh.readline().decode("utf-8"))
            blob = fh.read()
    except (OSError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    if header.get("model_kind") != expected_kind:
        raise ModelFormatError(
            f"{path} holds a {header.get('model_kind')!r} model, expected {expected_kind!r}"
        )
    if header.get("feature_spec_hash") != FEATURE_SPEC_HASH:
        raise ModelFormatError(
            f"{path} was built for feature spec {header.get('feature_spec_hash')}, "
            f"this build uses {FEATURE_SPEC_HASH}"
        )
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
        offset += count * 8
    return header, arrays


def load_scheduler(path) -> SchedulerModel:
    header, arrays = _load_container(path, "scheduler")
    return SchedulerModel(toolbox_size=int(header["toolbox_size"]), **arrays)


def load_modulator(path) -> ModulatorModel:
    header, arrays = _load_container(path, "modulator")
    return ModulatorModel(toolbox_size=int(header["toolbox_size"]), **arrays)
