"""Path-search strategies: the exhaustive ground-truth oracle and baselines.

The oracle scores every candidate path at full strength against the paired
clean image (PSNR objective, SSIM then lowest category as tiebreaks). The
baselines (random, quality-greedy, greedy with rollback) are the comparison
points for the strategy benchmark.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .metrics import psnr, ssim
from .programs import (
    RestorationProgram,
    enumerate_paths,
    execute_fixed,
    num_categories,
    path_to_category,
)
from .tools import ToolConfig, ToolId, apply_tool

DEFAULT_STRATEGIES = ("baseline", "random", "greedy", "rollback", "exhaustive")


@dataclass(frozen=True)
class SearchResult:
    category: int
    score: float
    evaluations: int


@dataclass(frozen=True)
class StrategyStats:
    mean_psnr: float
    mean_ssim: float
    mean_evals: float
    ms_per_image: float


@dataclass(frozen=True)
class StrategyReport:
    n: int
    stats: dict  # strategy name -> StrategyStats

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "strategies": {
                name: {
                    "mean_psnr": s.mean_psnr,
                    "mean_ssim": s.mean_ssim,
                    "mean_evals": s.mean_evals,
                    "ms_per_image": s.ms_per_image,
                }
                for name, s in self.stats.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(_round_floats(self.to_dict(), 4), sort_keys=True)

    def to_table(self) -> str:
        header = f"{'strategy':<12} {'psnr':>9} {'ssim':>8} {'evals/image':>12} {'ms/image':>10}"
        lines = [header, "-" * len(header)]
        for name, s in self.stats.items():
            lines.append(
                f"{name:<12} {s.mean_psnr:>9.4f} {s.mean_ssim:>8.4f} "
                f"{s.mean_evals:>12.2f} {s.ms_per_image:>10.2f}"
            )
        return "\n".join(lines)


def _round_floats(obj, digits: int):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v, digits) for v in obj]
    return obj


def exhaustive_oracle(
    degraded: np.ndarray, clean: np.ndarray, toolbox_size: int, cfg: ToolConfig
) -> SearchResult:
    """Score all candidate paths at strength 1; best PSNR wins, SSIM then lowest index break ties."""
    if degraded.shape != clean.shape:
        raise ValueError(f"dimension mismatch: {degraded.shape} vs {clean.shape}")
    paths = enumerate_paths(toolbox_size)
    best_key = None
    best_index = 0
    best_score = 0.0
    for index, path in enumerate(paths):
        out = execute_fixed(degraded, path, 1.0, cfg)
        score = psnr(out, clean)
        key = (score, ssim(out, clean), -index)
        if best_key is None or key > best_key:
            best_key = key
            best_index = index
            best_score = score
    return SearchResult(category=best_index, score=best_score, evaluations=len(paths))


def random_policy(rng_seed: int, toolbox_size: int = 3) -> int:
    """Uniform draw over the path categories; deterministic for a given seed."""
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    return int(rng.integers(0, num_categories(toolbox_size)))


def _compose(steps, img, cfg):
    current = img
    for tool in steps:
        current = apply_tool(tool, current, cfg)
    return current


def greedy_iqa(
    degraded: np.ndarray,
    quality,
    toolbox_size: int,
    max_steps: int,
    cfg: ToolConfig,
) -> tuple[RestorationProgram, SearchResult]:
    """Step-wise quality feedback: keep the best improving tool, stop when none improves."""
    if max_steps > toolbox_size:
        raise ValueError(f"max_steps {max_steps} exceeds toolbox size {toolbox_size}")
    current = degraded
    current_q = float(quality(degraded))
    unused = [ToolId(i) for i in range(toolbox_size)]
    steps: list[ToolId] = []
    evaluations = 0
    while len(steps) < max_steps and unused:
        trials = []
        for tool in unused:
            out = apply_tool(tool, current, cfg)
            trials.append((float(quality(out)), -int(tool), tool, out))
            evaluations += 1
        trials.sort(reverse=True)
        best_q, _, best_tool, best_out = trials[0]
        if best_q <= current_q:
            break
        current, current_q = best_out, best_q
        steps.append(best_tool)
        unused.remove(best_tool)
    program = RestorationProgram(
        path=tuple(steps), maps=[np.ones(degraded.shape[:2]) for _ in steps]
    )
    result = SearchResult(
        category=path_to_category(steps, toolbox_size), score=current_q, evaluations=evaluations
    )
    return program, result


def rollback_replanning(
    degraded: np.ndarray,
    quality,
    toolbox_size: int,
    max_steps: int,
    cfg: ToolConfig,
) -> tuple[RestorationProgram, SearchResult]:
    """Greedy with explicit rollback: attempt tools best-first, undo any that worsen quality.

    Each step ranks the unused tools by measured quality, attempts them in
    that order, rolls back an attempt that does not improve on the current
    image, and concludes on the first improving tool or once all are
    exhausted. Because the ranking is the same measured quality used for the
    improvement check, the committed tool is always the step's best one, so
    the selected path never scores below plain greedy's.
    """
    if max_steps > toolbox_size:
        raise ValueError(f"max_steps {max_steps} exceeds toolbox size {toolbox_size}")
    current = degraded
    current_q = float(quality(degraded))
    unused = [ToolId(i) for i in range(toolbox_size)]
    steps: list[ToolId] = []
    evaluations = 0
    while len(steps) < max_steps and unused:
        trials = []
        for tool in unused:
            out = apply_tool(tool, current, cfg)
            trials.append((float(quality(out)), -int(tool), tool, out))
            evaluations += 1
        trials.sort(reverse=True)
        committed = False
        for q, _, tool, out in trials:
            if q > current_q:
                current, current_q = out, q
                steps.append(tool)
                unused.remove(tool)
                committed = True
                break
            # attempt worsened (or tied): roll back to the pre-attempt image
        if not committed:
            break
    program = RestorationProgram(
        path=tuple(steps), maps=[np.ones(degraded.shape[:2]) for _ in steps]
    )
    result = SearchResult(
        category=path_to_category(steps, toolbox_size), score=current_q, evaluations=evaluations
    )
    return program, result


def benchmark_strategies(
    pairs,
    strategies=DEFAULT_STRATEGIES,
    cfg: ToolConfig | None = None,
    toolbox_size: int = 3,
    seed: int = 0,
) -> StrategyReport:
    """Run each strategy over (degraded, clean, row_seed) tuples and aggregate.

    The quality signal is full-reference PSNR against the paired clean image.
    """
    from .programs import execute_fixed

    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty manifest: nothing to benchmark")
    cfg = cfg or ToolConfig()
    sums = {name: [0.0, 0.0, 0.0, 0.0] for name in strategies}  # psnr, ssim, evals, seconds
    for degraded, clean, row_seed in pairs:
        for name in strategies:
            start = time.perf_counter()
            if name == "baseline":
                out, evals = degraded, 0
            elif name == "random":
                category = random_policy(row_seed, toolbox_size)
                path = enumerate_paths(toolbox_size)[category]
                out, evals = execute_fixed(degraded, path, 1.0, cfg), 1
            elif name == "greedy":
                _, result = greedy_iqa(
                    degraded, lambda img: psnr(img, clean), toolbox_size, toolbox_size, cfg
                )
                path = enumerate_paths(toolbox_size)[result.category]
                out, evals = execute_fixed(degraded, path, 1.0, cfg), result.evaluations
            elif name == "rollback":
                _, result = rollback_replanning(
                    degraded, lambda img: psnr(img, clean), toolbox_size, toolbox_size, cfg
                )
                path = enumerate_paths(toolbox_size)[result.category]
                out, evals = execute_fixed(degraded, path, 1.0, cfg), result.evaluations
            elif name == "exhaustive":
                result = exhaustive_oracle(degraded, clean, toolbox_size, cfg)
                path = enumerate_paths(toolbox_size)[result.category]
                out, evals = execute_fixed(degraded, path, 1.0, cfg), result.evaluations
            else:
                raise ValueError(f"unknown strategy {name!r}")
            elapsed = time.perf_counter() - start
            acc = sums[name]
            acc[0] += psnr(out, clean)
            acc[1] += ssim(out, clean)
            acc[2] += evals
            acc[3] += elapsed
    n = len(pairs)
    stats = {
        name: StrategyStats(
            mean_psnr=acc[0] / n,
            mean_ssim=acc[1] / n,
            mean_evals=acc[2] / n,
            ms_per_image=1000.0 * acc[3] / n,
        )
        for name, acc in sums.items()
    }
    return StrategyReport(n=n, stats=stats)
