"""Model size and inference latency measurements."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .preprocess import TokenizedSentence
from .tagger import TaggerModel, parameter_count, predict

DEFAULT_ITERATIONS = 100


@dataclass(frozen=True)
class BenchmarkResult:
    parameters: int
    tokens: int
    iterations: int
    mean_ms: float
    std_ms: float
    checkpoint_bytes: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "parameters": self.parameters,
            "checkpoint_bytes": self.checkpoint_bytes,
            "tokens": self.tokens,
            "iterations": self.iterations,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
        }


def benchmark_inference(
    model: TaggerModel,
    tokens: TokenizedSentence | Sequence[str],
    iterations: int = DEFAULT_ITERATIONS,
    checkpoint_path: Path | str | None = None,
) -> BenchmarkResult:
    """Time ``predict`` on one sentence, excluding model loading.

    Args:
        model: A loaded model.
        tokens: Normalized sentence to tag.
        iterations: Number of timed runs; one untimed warm-up run precedes them.
        checkpoint_path: Optional checkpoint whose file size is reported.

    Raises:
        ValueError: If ``iterations`` is not positive.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    predict(model, tokens)
    timings = np.empty(iterations)
    for i in range(iterations):
        started = time.perf_counter()
        predict(model, tokens)
        timings[i] = (time.perf_counter() - started) * 1000.0
    size = os.path.getsize(checkpoint_path) if checkpoint_path else None
    length = len(tokens)
    result = BenchmarkResult(
        parameter_count(model),
        length,
        iterations,
        float(timings.mean()),
        float(timings.std()),
        size,
    )
    logging.info(
        f"Inference on {length} tokens: {result.mean_ms:.3f} ± {result.std_ms:.3f} ms "
        f"over {iterations} runs"
    )
    return result
