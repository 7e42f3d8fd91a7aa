"""Coupled synthetic degradations and paired-dataset generation.

Each sample couples up to three degradations (additive Gaussian noise,
Gaussian blur, per-channel color gains) applied in a random order, mirroring
the toolbox so that oracle labels are learnable from degradation statistics.
Manifests are JSON lines, one record per sample, with image paths stored
relative to the manifest file so a regenerated dataset is byte-identical
regardless of where it lives.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from ._filters import gaussian_blur
from .image_io import MIN_SIDE, clamp01, crop_center, load_image, save_image
from .strategies import exhaustive_oracle
from .tools import ToolConfig

MANIFEST_VERSION = 1

NOISE_SIGMA_MAX = 0.1
BLUR_SIGMA_MAX = 2.5
GAIN_RANGE = (0.7, 1.3)

# Sample mixture: identity pairs teach the no-op path; pure single-degradation
# samples guarantee separable instances; the rest couple all three.
P_IDENTITY = 0.06
P_PURE_EACH = 0.10


class ManifestError(ValueError):
    """Missing, malformed, or inconsistent manifest data."""


def derive_seed(global_seed: int, *parts) -> int:
    """Stable per-row seed: hash of the global seed and row identifiers."""
    text = f"{global_seed}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class DegradationSpec:
    noise_sigma: float = 0.0
    blur_sigma: float = 0.0
    color_gains: tuple = (1.0, 1.0, 1.0)
    apply_order: tuple = ()

    def active_kinds(self) -> tuple:
        kinds = []
        if self.noise_sigma > 0:
            kinds.append("noise")
        if self.blur_sigma > 0:
            kinds.append("blur")
        if any(g != 1.0 for g in self.color_gains):
            kinds.append("color")
        return tuple(kinds)

    def validate(self) -> "DegradationSpec":
        if not 0 <= self.noise_sigma <= NOISE_SIGMA_MAX:
            raise ValueError(f"noise_sigma {self.noise_sigma} outside [0, {NOISE_SIGMA_MAX}]")
        if not 0 <= self.blur_sigma <= BLUR_SIGMA_MAX:
            raise ValueError(f"blur_sigma {self.blur_sigma} outside [0, {BLUR_SIGMA_MAX}]")
        if len(self.color_gains) != 3 or any(
            not GAIN_RANGE[0] <= g <= GAIN_RANGE[1] for g in self.color_gains
        ):
            raise ValueError(f"color_gains {self.color_gains} outside {GAIN_RANGE}")
        if sorted(self.apply_order) != sorted(self.active_kinds()):
            raise ValueError(
                f"apply_order {self.apply_order} is not a permutation of the active "
                f"degradations {self.active_kinds()}"
            )
        return self

    def to_dict(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "blur_sigma": self.blur_sigma,
            "color_gains": list(self.color_gains),
            "apply_order": list(self.apply_order),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DegradationSpec":
        return cls(
            noise_sigma=float(data["noise_sigma"]),
            blur_sigma=float(data["blur_sigma"]),
            color_gains=tuple(float(g) for g in data["color_gains"]),
            apply_order=tuple(data["apply_order"]),
        ).validate()


def degrade(clean: np.ndarray, spec: DegradationSpec, seed: int) -> np.ndarray:
    """Apply the spec's active degradations in order; deterministic for a seed."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    out = clean
    for kind in spec.apply_order:
        if kind == "blur":
            out = gaussian_blur(out, spec.blur_sigma)
        elif kind == "noise":
            out = out + rng.normal(0.0, spec.noise_sigma, out.shape)
        elif kind == "color":
            out = out * np.asarray(spec.color_gains)
        else:
            raise ValueError(f"unknown degradation kind {kind!r}")
        out = clamp01(out)
    return out if spec.apply_order else clean.copy()


def sample_spec(rng: np.random.Generator) -> DegradationSpec:
    """Draw one degradation spec from the documented mixture."""
    u = rng.uniform()
    noise = float(rng.uniform(0.0, NOISE_SIGMA_MAX))
    blur = float(rng.uniform(0.0, BLUR_SIGMA_MAX))
    gains = tuple(float(g) for g in rng.uniform(GAIN_RANGE[0], GAIN_RANGE[1], size=3))
    if u < P_IDENTITY:
        spec = DegradationSpec()
    elif u < P_IDENTITY + P_PURE_EACH:
        spec = DegradationSpec(noise_sigma=noise, apply_order=("noise",))
    elif u < P_IDENTITY + 2 * P_PURE_EACH:
        spec = DegradationSpec(blur_sigma=blur, apply_order=("blur",))
    elif u < P_IDENTITY + 3 * P_PURE_EACH:
        spec = DegradationSpec(color_gains=gains, apply_order=("color",))
    else:
        order = tuple(rng.permutation(["noise", "blur", "color"]))
        spec = DegradationSpec(
            noise_sigma=noise, blur_sigma=blur, color_gains=gains, apply_order=order
        )
    return spec.validate()


@dataclass(frozen=True)
class SampleRecord:
    id: str
    clean: str  # path relative to the manifest file
    degraded: str
    spec: DegradationSpec
    gt_category: int | None = None
    oracle_psnr: float | None = None

    def to_json_line(self) -> str:
        doc = {
            "v": MANIFEST_VERSION,
            "id": self.id,
            "clean": self.clean,
            "degraded": self.degraded,
            "spec": self.spec.to_dict(),
            "gt_category": self.gt_category,
            "oracle_psnr": self.oracle_psnr,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "SampleRecord":
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"bad manifest line: {exc}") from exc
        if doc.get("v") != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {doc.get('v')}")
        gt = doc.get("gt_category")
        psnr_val = doc.get("oracle_psnr")
        if (gt is None) != (psnr_val is None):
            raise ManifestError(f"record {doc.get('id')}: gt_category and oracle_psnr must be set together")
        return cls(
            id=str(doc["id"]),
            clean=str(doc["clean"]),
            degraded=str(doc["degraded"]),
            spec=DegradationSpec.from_dict(doc["spec"]),
            gt_category=None if gt is None else int(gt),
            oracle_psnr=None if psnr_val is None else float(psnr_val),
        )


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json_line() + "\n")


def read_manifest(path) -> list[SampleRecord]:
    if not os.path.isfile(path):
        raise ManifestError(f"manifest not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_json_line(line))
    return records


def resolve_pair(manifest_path, record: SampleRecord):
    """Load the (degraded, clean) images a record points to."""
    base = os.path.dirname(os.fspath(manifest_path)) or "."
    clean = load_image(os.path.join(base, record.clean))
    degraded = load_image(os.path.join(base, record.degraded))
    if clean.shape != degraded.shape:
        raise ManifestError(f"record {record.id}: image dimensions differ")
    return degraded, clean


def write_meta(manifest_path, meta: dict) -> None:
    """Sidecar provenance for a manifest (resolved config, seeds, tool hash)."""
    with open(os.fspath(manifest_path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_meta(manifest_path) -> dict:
    meta_path = os.fspath(manifest_path) + ".meta.json"
    if not os.path.isfile(meta_path):
        return {}
    with open(meta_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def synth_clean_image(size: int, seed: int) -> np.ndarray:
    """Procedural piecewise-smooth RGB image: gradients, soft shapes, mild texture."""
    rng = np.random.Generator(np.random.PCG64(seed))
    yy, xx = np.mgrid[0:size, 0:size] / size

    img = np.empty((size, size, 3))
    for c in range(3):
        a, b = rng.uniform(-0.25, 0.25, size=2)
        img[:, :, c] = rng.uniform(0.35, 0.65) + a * (xx - 0.5) + b * (yy - 0.5)

    # low-frequency color field for large-scale structure
    coarse = rng.uniform(-0.22, 0.22, size=(max(size // 16, 2), max(size // 16, 2), 3))
    reps = -(-size // coarse.shape[0])  # ceil division
    field = np.kron(coarse, np.ones((reps, reps, 1)))[:size, :size, :]
    img += gaussian_blur(field, size / 24.0)

    # soft random shapes give the sharpeners real edges to work with
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        ry, rx = rng.uniform(0.08, 0.3, size=2) * size
        mask = (((yy * size - cy) / ry) ** 2 + ((xx * size - cx) / rx) ** 2) < 1.0
        shape = gaussian_blur(mask.astype(np.float64), 1.2)
        color = rng.uniform(-0.3, 0.3, size=3)
        img += shape[:, :, None] * color

    img += rng.normal(0.0, 0.012, size=img.shape)  # faint texture
    img = clamp01(img)

    # pull channel means most of the way toward gray so gray-world correction
    # is genuinely useful once a cast is applied
    means = img.mean(axis=(0, 1))
    target = means.mean()
    img = clamp01(img * (target / np.maximum(means, 1e-6)) ** 0.8)
    return img


def gen_dataset(
    clean_dir,
    out_dir,
    n: int,
    crop: int = 64,
    seed: int = 0,
) -> str:
    """Degrade center crops of the clean sources into a paired PNG dataset.

    Writes out_dir/clean/*.png, out_dir/degraded/*.png, and manifest.jsonl;
    fully reproducible from the seed. Returns the manifest path.
    """
    if n < 1:
        raise ValueError(f"dataset size must be positive, got {n}")
    if crop < MIN_SIDE:
        raise ValueError(f"crop {crop} below the minimum image side {MIN_SIDE}")
    sources = sorted(
        f for f in os.listdir(clean_dir) if f.lower().endswith((".png", ".ppm"))
    )
    if not sources:
        raise ManifestError(f"no loadable images in {clean_dir}")
    loaded = [load_image(os.path.join(clean_dir, f)) for f in sources]

    os.makedirs(os.path.join(out_dir, "clean"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "degraded"), exist_ok=True)
    records = []
    for i in range(n):
        row_rng = np.random.Generator(np.random.PCG64(derive_seed(seed, i, "spec")))
        source = loaded[int(row_rng.integers(len(loaded)))]
        clean = crop_center(source, crop)
        spec = sample_spec(row_rng)
        degraded = degrade(clean, spec, derive_seed(seed, i, "degrade"))
        sample_id = f"{i:05d}"
        clean_rel = os.path.join("clean", f"{sample_id}.png")
        degraded_rel = os.path.join("degraded", f"{sample_id}.png")
        save_image(clean, os.path.join(out_dir, clean_rel))
        save_image(degraded, os.path.join(out_dir, degraded_rel))
        records.append(
            SampleRecord(id=sample_id, clean=clean_rel, degraded=degraded_rel, spec=spec)
        )
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest_path, records)
    return manifest_path


def label_manifest(manifest_path, tool_cfg: ToolConfig, toolbox_size: int = 3) -> list[SampleRecord]:
    """Fill gt_category/oracle_psnr for every record via the exhaustive oracle.

    Rewrites the manifest in place; relabeling an already labeled manifest
    reproduces it exactly.
    """
    records = read_manifest(manifest_path)
    if not records:
        raise ManifestError(f"empty manifest: {manifest_path}")
    labeled = []
    for record in records:
        degraded, clean = resolve_pair(manifest_path, record)
        result = exhaustive_oracle(degraded, clean, toolbox_size, tool_cfg)
        labeled.append(
            replace(record, gt_category=result.category, oracle_psnr=result.score)
        )
    write_manifest(manifest_path, labeled)
    return labeled
