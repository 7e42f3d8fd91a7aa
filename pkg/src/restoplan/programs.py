"""Restoration programs: canonical path enumeration and the sequential executor.

A tool path is an ordered sequence of distinct tools (possibly empty). Paths
are enumerated shortest first, then lexicographically by tool ordinal; the
list position is the path's category index. Execution blends each tool's
output into the running image per pixel:

    I_next = clamp01((1 - lambda) * I + lambda * tool(I))

which equals residual scaling I + lambda*(tool(I) - I) but keeps the
lambda = 0 and lambda = 1 identities bit-exact.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .image_io import clamp01, load_gray, save_gray
from .tools import TOOL_BY_LABEL, ToolConfig, ToolId, apply_tool

MAX_TOOLBOX = len(ToolId)

ToolPath = tuple  # tuple[ToolId, ...]


def enumerate_paths(toolbox_size: int) -> list[ToolPath]:
    """All ordered sequences of distinct tools, shortest first then lexicographic."""
    if not 1 <= toolbox_size <= MAX_TOOLBOX:
        raise ValueError(f"toolbox_size must be in [1, {MAX_TOOLBOX}], got {toolbox_size}")
    tools = [ToolId(i) for i in range(toolbox_size)]
    paths: list[ToolPath] = []
    for length in range(toolbox_size + 1):
        paths.extend(itertools.permutations(tools, length))
    return paths


def num_categories(toolbox_size: int) -> int:
    return len(enumerate_paths(toolbox_size))


def category_to_path(category: int, toolbox_size: int) -> ToolPath:
    paths = enumerate_paths(toolbox_size)
    if not 0 <= category < len(paths):
        raise ValueError(f"category {category} out of range for {len(paths)} paths")
    return paths[category]


def path_to_category(path, toolbox_size: int) -> int:
    """Inverse of category_to_path under the canonical enumeration."""
    canon = tuple(ToolId(t) for t in path)
    if len(set(canon)) != len(canon):
        raise ValueError(f"path contains repeated tools: {canon}")
    if any(int(t) >= toolbox_size for t in canon):
        raise ValueError(f"path {canon} uses tools outside a toolbox of size {toolbox_size}")
    return enumerate_paths(toolbox_size).index(canon)


@dataclass(frozen=True)
class RestorationProgram:
    """An ordered tool path plus one per-pixel strength map per step."""

    path: ToolPath
    maps: list  # list[np.ndarray] of shape (H, W), values in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(ToolId(t) for t in self.path))
        if len(self.maps) != len(self.path):
            raise ValueError(
                f"{len(self.path)} steps but {len(self.maps)} strength maps"
            )


@dataclass
class ExecutionTrace:
    """Intermediate images I(0)..I(L) produced by one execution."""

    intermediates: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.intermediates)


def _check_map(lam: np.ndarray, img: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != img.shape[:2]:
        raise ValueError(f"strength map shape {lam.shape} does not match image {img.shape[:2]}")
    if lam.min() < 0.0 or lam.max() > 1.0:
        raise ValueError("strength map values outside [0, 1]")
    return lam


def execute(
    img: np.ndarray, program: RestorationProgram, cfg: ToolConfig
) -> tuple[np.ndarray, ExecutionTrace]:
    """Run the program sequentially; returns the final image and the full trace."""
    trace = ExecutionTrace(intermediates=[img])
    current = img
    for tool, lam in zip(program.path, program.maps):
        lam = _check_map(lam, img)[:, :, None]
        tool_out = apply_tool(tool, current, cfg)
        current = clamp01((1.0 - lam) * current + lam * tool_out)
        trace.intermediates.append(current)
    return current, trace


def execute_fixed(img: np.ndarray, path, strength: float, cfg: ToolConfig) -> np.ndarray:
    """Execute a path with one constant strength everywhere."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must be in [0, 1], got {strength}")
    maps = [np.full(img.shape[:2], float(strength)) for _ in path]
    out, _ = execute(img, RestorationProgram(path=tuple(path), maps=maps), cfg)
    return out


def save_program(program: RestorationProgram, json_path) -> None:
    """Write a program as JSON plus one grayscale PNG per strength map.

    Map files live next to the JSON file and are referenced by relative path.
    PNG storage quantizes map values to 1/255 steps.
    """
    json_path = os.fspath(json_path)
    base_dir = os.path.dirname(json_path) or "."
    stem = os.path.splitext(os.path.basename(json_path))[0]
    map_refs = []
    for i, lam in enumerate(program.maps):
        name = f"{stem}_map{i:02d}.png"
        save_gray(np.asarray(lam, dtype=np.float64), os.path.join(base_dir, name))
        map_refs.append(name)
    doc = {"path": [t.label for t in program.path], "maps": map_refs}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_program(json_path) -> RestorationProgram:
    """Reload a program saved by save_program."""
    json_path = os.fspath(json_path)
    base_dir = os.path.dirname(json_path) or "."
    with open(json_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        path = tuple(TOOL_BY_LABEL[label] for label in doc["path"])
    except KeyError as exc:
        raise ValueError(f"unknown tool label in program: {exc}") from exc
    maps = [load_gray(os.path.join(base_dir, ref)) for ref in doc["maps"]]
    return RestorationProgram(path=path, maps=maps)
