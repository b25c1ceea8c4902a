"""
pipeline.py
------------------------------------------------------------------------------
Experiment pipeline for the two-period matching market, built with the
Pipeline Design Pattern. A run is a context object handed through stages:

    • replication stage(s)  – Monte Carlo over seeded blocks, filling tallies
    • aggregation           – tallies -> estimates with standard errors
    • audit                 – run manifest (config echo, version, digest, wall time)

Stages can be added, removed or reordered at runtime.
------------------------------------------------------------------------------
"""
from __future__ import annotations

import logging
import os
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

# ---------------------------------------------------------------------------#
#                       CONFIGURATION & LOGGING                              #
# ---------------------------------------------------------------------------#
logging.basicConfig(
    level=os.environ.get("LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
)
LOGGER = logging.getLogger("ExperimentPipeline")


def load_runtime_config() -> Dict[str, Any]:
    """Environment-level defaults; explicit flags and request parameters override them."""
    return {
        "threads": int(os.environ.get("UNRAVELING_THREADS", "1")),
        "chaos_max_n": int(os.environ.get("UNRAVELING_CHAOS_MAX_N", "500")),
        "inner_samples": int(os.environ.get("UNRAVELING_INNER_SAMPLES", "10000")),
        "api_max_reps": int(os.environ.get("UNRAVELING_API_MAX_REPS", "200000")),
        "api_max_r": int(os.environ.get("UNRAVELING_API_MAX_R", "64")),
    }


# ---------------------------------------------------------------------------#
#                       DATA CONTAINER                                        #
# ---------------------------------------------------------------------------#
@dataclass
class Tally:
    """Running per-label accumulator. kind: "bernoulli" (successes/trials) or "mean"."""

    kind: str
    successes: int = 0
    trials: int = 0
    moments: Any = None  # helper.Moments for kind == "mean"
    rank: Optional[int] = None


@dataclass(frozen=True)
class Estimate:
    label: str
    mean: float
    std_error: float
    trials: int
    rank: Optional[int] = None


@dataclass
class ExperimentContext:
    experiment: str
    config: Any  # experiments.ExperimentConfig
    tallies: Dict[str, Tally] = field(default_factory=dict)  # insertion order is report order
    estimates: Dict[str, Estimate] = field(default_factory=dict)
    started_at: float = field(default_factory=time.perf_counter)
    wall_time: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------#
#                       ABSTRACT PIPELINE STAGE                               #
# ---------------------------------------------------------------------------#
class ExperimentStage(ABC):
    """Every concrete stage must implement .process()."""

    @abstractmethod
    def process(self, ctx: ExperimentContext) -> ExperimentContext:  # pragma: no cover
        """Process `ctx` in-place (may also return a new instance)."""
        raise NotImplementedError


# ---------------------------------------------------------------------------#
#                       PIPELINE ORCHESTRATOR                                #
# ---------------------------------------------------------------------------#
class ExperimentPipeline:
    """
    Base orchestrator that simply runs stages in order.
    """

    def __init__(self, stages: Iterable[ExperimentStage] | None = None) -> None:
        self.stages: List[ExperimentStage] = list(stages) if stages else []

    # -------- pipeline mutation helpers -------- #
    def add_stage(self, stage: ExperimentStage, position: int | None = None) -> None:
        if position is None:
            self.stages.append(stage)
        else:
            self.stages.insert(position, stage)

    def remove_stage(self, stage_cls: type[ExperimentStage]) -> None:
        self.stages = [s for s in self.stages if not isinstance(s, stage_cls)]

    def process(self, experiment: str, config: Any) -> ExperimentContext:
        ctx = ExperimentContext(experiment=experiment, config=config)
        for stage in self.stages:
            ctx = stage.process(ctx)
        return ctx
