"""
Seeded Monte Carlo experiments over realised markets.

Each public operation builds an ExperimentPipeline of
[replication stage, AggregationStage, AuditStage] and runs the config through it.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from unraveling_pipeline.dist_core import SeededSampler, TypeDistribution
from unraveling_pipeline.errors import ConfigurationError, DomainError
from unraveling_pipeline.helper import binomial_se, plan_blocks, run_blocks
from unraveling_pipeline.limit_model import LimitEstimate
from unraveling_pipeline.payoff_engine import region_membership_1x1
from unraveling_pipeline.pipeline import Estimate, ExperimentContext, ExperimentPipeline, ExperimentStage
from unraveling_pipeline.stages.aggregate import AggregationStage
from unraveling_pipeline.stages.audit_trail import AuditStage
from unraveling_pipeline.stages.chaos import ChaosStage
from unraveling_pipeline.stages.local_chaos import LocalChaosStage
from unraveling_pipeline.stages.unravel import FractionStage, UnravelStage

LOGGER = logging.getLogger("Experiments")

REGION_BLOCK_SIZE = 1_000_000

REPLICATION_STAGES = {
    "chaos": ChaosStage,
    "unravel": UnravelStage,
    "fraction": FractionStage,
    "local_chaos": LocalChaosStage,
}


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    k: int = 1
    dist_men: TypeDistribution = field(default_factory=TypeDistribution.uniform)
    dist_women: TypeDistribution = field(default_factory=TypeDistribution.uniform)
    reps: int = 1_000
    seed: int = 0
    ranks: Optional[Tuple[int, ...]] = None
    epsilon: float = 0.01
    threads: int = 1
    inner_samples: int = 10_000
    max_n: int = 500
    percentile: float = 0.5
    window: int = 7

    def __post_init__(self) -> None:
        if self.ranks is not None:
            object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if self.n < 0:
            raise ConfigurationError("n: must be non-negative")
        if self.k < 0:
            raise ConfigurationError("k: must be non-negative")
        if self.reps < 1:
            raise DomainError("reps: must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed: must be a non-negative 64-bit integer")
        if self.ranks is not None and any(not 1 <= r <= self.n for r in self.ranks):
            raise DomainError(f"ranks: every rank must lie in 1..{self.n}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError("epsilon: must lie in [0, 1)")
        if self.threads < 1:
            raise ConfigurationError("threads: must be at least 1")
        if self.inner_samples < 1:
            raise ConfigurationError("inner_samples: must be at least 1")
        if not 0.0 <= self.percentile <= 1.0:
            raise ConfigurationError("percentile: must lie in [0, 1]")
        if self.window < 1:
            raise ConfigurationError("window: must be at least 1")

    @property
    def probed_ranks(self) -> Tuple[int, ...]:
        return self.ranks if self.ranks is not None else tuple(range(1, self.n + 1))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "k": self.k,
            "dist_men": self.dist_men.to_dict(),
            "dist_women": self.dist_women.to_dict(),
            "reps": self.reps,
            "seed": self.seed,
            "ranks": list(self.ranks) if self.ranks is not None else None,
            "epsilon": self.epsilon,
            "threads": self.threads,
            "inner_samples": self.inner_samples,
            "max_n": self.max_n,
            "percentile": self.percentile,
            "window": self.window,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ExperimentConfig":
        data = dict(payload)
        for side in ("dist_men", "dist_women"):
            if isinstance(data.get(side), dict):
                data[side] = TypeDistribution.from_dict(data[side])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"config: {exc}") from exc


@dataclass(frozen=True)
class ExperimentResult:
    experiment: str
    estimates: Dict[str, Estimate]
    reps: int
    config: ExperimentConfig
    wall_time: float
    manifest: Dict[str, Any] = field(default_factory=dict)

    def rows(self) -> List[Dict[str, Any]]:
        """CSV records: experiment, n, k, rank, estimate, std_error, reps, seed."""
        return [
            {
                "experiment": self.experiment if e.rank is not None or e.label == self.experiment else e.label,
                "n": self.config.n,
                "k": self.config.k,
                "rank": e.rank,
                "estimate": e.mean,
                "std_error": e.std_error,
                "reps": e.trials,
                "seed": self.config.seed,
            }
            for e in self.estimates.values()
        ]


# ---------------------------------------------------------------------------#
#                       PIPELINE FACTORY                                      #
# ---------------------------------------------------------------------------#
def build_pipeline(experiment: str) -> ExperimentPipeline:
    if experiment not in REPLICATION_STAGES:
        raise ConfigurationError(f"experiment: unknown experiment {experiment!r}")
    stages: List[ExperimentStage] = [REPLICATION_STAGES[experiment](), AggregationStage(), AuditStage()]
    return ExperimentPipeline(stages)


def _run(experiment: str, cfg: ExperimentConfig) -> ExperimentResult:
    LOGGER.info("Running %s | n=%d k=%d reps=%d seed=%d threads=%d", experiment, cfg.n, cfg.k, cfg.reps, cfg.seed, cfg.threads)
    ctx: ExperimentContext = build_pipeline(experiment).process(experiment, cfg)
    return ExperimentResult(
        experiment=experiment,
        estimates=dict(ctx.estimates),
        reps=cfg.reps,
        config=cfg,
        wall_time=ctx.wall_time,
        manifest=ctx.metadata.get("manifest", {}),
    )


def chaos_probability(cfg: ExperimentConfig) -> ExperimentResult:
    return _run("chaos", cfg)


def unravel_probabilities(cfg: ExperimentConfig) -> ExperimentResult:
    if not cfg.probed_ranks:
        raise DomainError("ranks: at least one rank must be probed")
    return _run("unravel", cfg)


def simultaneous_fraction(cfg: ExperimentConfig) -> ExperimentResult:
    return _run("fraction", cfg)


def local_chaos_probability(cfg: ExperimentConfig) -> ExperimentResult:
    return _run("local_chaos", cfg)


def _region_block(master_seed: int, stream: int, block: int, size: int) -> int:
    rng = SeededSampler(master_seed, stream).block_generator(block)
    m = rng.random(size)
    w = rng.random(size)
    return int(np.count_nonzero(region_membership_1x1(m, w)))


def region_area_1x1(samples: int, s: SeededSampler, threads: int = 1) -> LimitEstimate:
    """Share of the unit square where a lone uniform couple strictly prefers to exit."""
    if samples < 1:
        raise DomainError("samples: must be at least 1")
    task = functools.partial(_region_block, s.master_seed, s.stream_index)
    hits = sum(run_blocks(task, plan_blocks(samples, REGION_BLOCK_SIZE), threads))
    LOGGER.info("Region area = %.6f over %d samples", hits / samples, samples)
    return LimitEstimate(hits / samples, binomial_se(hits, samples), samples, 1, "region", s.master_seed)
